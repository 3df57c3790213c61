//! Binary model serialization: magic, version, JSON metadata, f64 params.

use std::io::Write as _;
use std::path::Path;

use crate::neural::nam::NamModel;
use crate::neural::net::{DenseNet, NetSpec};
use crate::{Error, Result};

pub const MODEL_MAGIC: [u8; 4] = *b"SGNM";
pub const MODEL_VERSION: u32 = 1;

/// Decoded model file: free-form JSON metadata plus a flat parameter vector.
#[derive(Clone, Debug)]
pub struct ModelFile {
    pub meta: serde_json::Value,
    pub params: Vec<f64>,
}

// ---------------------------------------------------------------------------
// Raw format
// ---------------------------------------------------------------------------

/// Writes magic, version, length-prefixed JSON metadata, and little-endian
/// f64 parameters. The write is atomic: a sibling temp file is renamed over
/// the target, so readers never observe a partial model.
pub fn write_model(path: &Path, meta: &serde_json::Value, params: &[f64]) -> Result<()> {
    let meta_bytes = serde_json::to_vec(meta)
        .map_err(|e| Error::Config(format!("unserializable model metadata: {e}")))?;
    let mut buf =
        Vec::with_capacity(4 + 4 + 8 + meta_bytes.len() + 8 + params.len() * 8);
    buf.extend_from_slice(&MODEL_MAGIC);
    buf.extend_from_slice(&MODEL_VERSION.to_le_bytes());
    buf.extend_from_slice(&(meta_bytes.len() as u64).to_le_bytes());
    buf.extend_from_slice(&meta_bytes);
    buf.extend_from_slice(&(params.len() as u64).to_le_bytes());
    for p in params {
        buf.extend_from_slice(&p.to_le_bytes());
    }

    let tmp = temp_sibling(path);
    let mut file = std::fs::File::create(&tmp)?;
    file.write_all(&buf)?;
    file.sync_all()?;
    drop(file);
    if let Err(e) = std::fs::rename(&tmp, path) {
        let _ = std::fs::remove_file(&tmp);
        return Err(e.into());
    }
    Ok(())
}

fn temp_sibling(path: &Path) -> std::path::PathBuf {
    let mut name = path.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".tmp");
    path.with_file_name(name)
}

pub fn read_model(path: &Path) -> Result<ModelFile> {
    let bytes = std::fs::read(path)?;
    let mut cursor = Cursor { bytes: &bytes, pos: 0 };
    let magic = cursor.take(4)?;
    if magic != MODEL_MAGIC {
        return Err(Error::parse(0, "bad model magic (expected SGNM)"));
    }
    let version = u32::from_le_bytes(cursor.take(4)?.try_into().unwrap());
    if version != MODEL_VERSION {
        return Err(Error::parse(4, format!("unsupported model version {version}")));
    }
    let meta_len = cursor.take_u64()? as usize;
    let meta_start = cursor.pos;
    let meta_bytes = cursor.take(meta_len)?;
    let meta = serde_json::from_slice(meta_bytes)
        .map_err(|e| Error::parse(meta_start, format!("bad model metadata: {e}")))?;
    let n_params = cursor.take_u64()? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let chunk = cursor.take(8)?;
        params.push(f64::from_le_bytes(chunk.try_into().unwrap()));
    }
    if cursor.pos != bytes.len() {
        return Err(Error::parse(cursor.pos, "trailing bytes after model parameters"));
    }
    Ok(ModelFile { meta, params })
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(self.pos, "model file truncated"));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn take_u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

// ---------------------------------------------------------------------------
// Additive-model round trip
// ---------------------------------------------------------------------------

impl NamModel {
    pub fn save(&self, path: &Path) -> Result<()> {
        let meta = serde_json::json!({
            "kind": "nam",
            "spec": self.net().spec(),
            "fp_radius": self.fp_radius(),
            "fp_dim": self.fp_dim(),
        });
        write_model(path, &meta, &self.flat_params())
    }

    pub fn load(path: &Path) -> Result<NamModel> {
        let file = read_model(path)?;
        let kind = file.meta.get("kind").and_then(|v| v.as_str());
        if kind != Some("nam") {
            return Err(Error::Config(format!(
                "expected an additive route-score model, found kind {kind:?}"
            )));
        }
        let spec: NetSpec = serde_json::from_value(
            file.meta.get("spec").cloned().ok_or_else(|| {
                Error::Config("model metadata is missing the net spec".to_owned())
            })?,
        )
        .map_err(|e| Error::Config(format!("bad net spec in model metadata: {e}")))?;
        let fp_radius = meta_u32(&file.meta, "fp_radius")?;
        let fp_dim = meta_u32(&file.meta, "fp_dim")?;
        if file.params.len() != spec.n_params() + 1 {
            return Err(Error::Config(format!(
                "model holds {} parameters but the spec needs {}",
                file.params.len(),
                spec.n_params() + 1
            )));
        }
        let (net_params, alpha) = file.params.split_at(file.params.len() - 1);
        let net = DenseNet::from_params(spec, net_params.to_vec())?;
        let mut model = NamModel::new(net, fp_radius, fp_dim)?;
        model.set_alpha_raw(alpha[0]);
        Ok(model)
    }
}

fn meta_u32(meta: &serde_json::Value, key: &str) -> Result<u32> {
    meta.get(key)
        .and_then(|v| v.as_u64())
        .and_then(|v| u32::try_from(v).ok())
        .ok_or_else(|| Error::Config(format!("model metadata is missing {key}")))
}

// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::nam::NamTrainConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tmp_path(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!("synga-io-{}-{name}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        dir.join("model.bin")
    }

    #[test]
    fn raw_round_trip_preserves_meta_and_params() {
        let path = tmp_path("raw");
        let meta = serde_json::json!({"kind": "test", "note": "fixture"});
        let params = vec![0.0, -1.5, 3.25, f64::MIN_POSITIVE];
        write_model(&path, &meta, &params).unwrap();
        let file = read_model(&path).unwrap();
        assert_eq!(file.meta, meta);
        assert_eq!(file.params, params);
        // No temp file left behind.
        assert!(!path.with_file_name("model.bin.tmp").exists());
    }

    #[test]
    fn corrupt_files_are_rejected_with_offsets() {
        let path = tmp_path("corrupt");
        write_model(&path, &serde_json::json!({}), &[1.0, 2.0]).unwrap();
        let good = std::fs::read(&path).unwrap();

        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        std::fs::write(&path, &bad_magic).unwrap();
        match read_model(&path) {
            Err(Error::Parse { pos: 0, .. }) => {}
            other => panic!("expected magic failure, got {other:?}"),
        }

        let mut bad_version = good.clone();
        bad_version[4] = 99;
        std::fs::write(&path, &bad_version).unwrap();
        match read_model(&path) {
            Err(Error::Parse { pos: 4, .. }) => {}
            other => panic!("expected version failure, got {other:?}"),
        }

        std::fs::write(&path, &good[..good.len() - 3]).unwrap();
        assert!(matches!(read_model(&path), Err(Error::Parse { .. })));

        let mut padded = good;
        padded.push(0);
        std::fs::write(&path, &padded).unwrap();
        assert!(matches!(read_model(&path), Err(Error::Parse { .. })));
    }

    #[test]
    fn nam_model_round_trips() {
        let cfg = NamTrainConfig { width: 6, layers: 3, fp_dim: 32, ..NamTrainConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut model = crate::neural::nam::NamModel::init(&cfg, &mut rng).unwrap();
        model.set_alpha_raw(0.75);
        let path = tmp_path("nam");
        model.save(&path).unwrap();
        let loaded = crate::neural::nam::NamModel::load(&path).unwrap();
        assert_eq!(loaded.flat_params(), model.flat_params());
        assert_eq!(loaded.fp_dim(), 32);
        assert_eq!(loaded.net().spec(), model.net().spec());
    }

    #[test]
    fn wrong_kind_is_rejected() {
        let path = tmp_path("kind");
        write_model(&path, &serde_json::json!({"kind": "other"}), &[]).unwrap();
        assert!(matches!(
            crate::neural::nam::NamModel::load(&path),
            Err(Error::Config(_))
        ));
    }
}
