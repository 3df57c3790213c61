//! Circular count fingerprints and Tanimoto similarity.
//!
//! Each atom contributes one environment identifier per radius step:
//! radius 0
//! hashes the atom's local invariants, radius r hashes the previous
//! identifier together with the sorted (bond, neighbor identifier)
//! list. Identifiers land in `id % dim` buckets whose values count
//! occurrences.

use std::collections::BTreeMap;

use crate::chem::molecule::MoleculeGraph;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Sparse counted fingerprint over `dim` buckets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CountFingerprint {
    dim: u32,
    counts: BTreeMap<u32, u32>,
}

impl CountFingerprint {
    /// All-zero fingerprint (the fingerprint of "no structure").
    pub fn empty(dim: u32) -> Self {
        CountFingerprint { dim, counts: BTreeMap::new() }
    }

    /// Fingerprint with explicit bucket counts; zero entries are dropped.
    pub fn from_counts(dim: u32, counts: BTreeMap<u32, u32>) -> Self {
        assert!(dim > 0, "fingerprint dimension must be positive");
        assert!(counts.keys().all(|&k| k < dim), "bucket index out of range");
        let counts = counts.into_iter().filter(|&(_, c)| c > 0).collect();
        CountFingerprint { dim, counts }
    }

    pub fn dim(&self) -> u32 {
        self.dim
    }

    pub fn counts(&self) -> &BTreeMap<u32, u32> {
        &self.counts
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Sum of all bucket counts.
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| u64::from(c)).sum()
    }

    /// Dense `dim`-length vector of counts.
    pub fn dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim as usize];
        for (&k, &c) in &self.counts {
            v[k as usize] = f64::from(c);
        }
        v
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Self {
        Fnv(FNV_OFFSET)
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= u64::from(b);
            self.0 = self.0.wrapping_mul(FNV_PRIME);
        }
    }

    fn write_u64(&mut self, v: u64) {
        self.write(&v.to_le_bytes());
    }

    fn finish(&self) -> u64 {
        self.0
    }
}

/// Circular count fingerprint of `mol` with the given radius and width.
pub fn morgan_count_fp(mol: &MoleculeGraph, radius: u32, dim: u32) -> CountFingerprint {
    assert!(dim > 0, "fingerprint dimension must be positive");
    let n = mol.n_atoms();

    // Radius-0 identifiers from local invariants.
    let mut ids: Vec<u64> = (0..n)
        .map(|i| {
            let atom = mol.atom(i);
            let mut h = Fnv::new();
            h.write_u64(mol.degree(i) as u64);
            h.write_u64(u64::from(atom.element.atomic_number()));
            h.write_u64(atom.charge as u64);
            h.write_u64(u64::from(atom.n_h));
            h.write_u64(u64::from(atom.aromatic));
            h.write_u64(u64::from(mol.atom_in_ring(i)));
            h.finish()
        })
        .collect();

    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    let mut bump = |id: u64| {
        *counts.entry((id % u64::from(dim)) as u32).or_insert(0) += 1;
    };
    for &id in &ids {
        bump(id);
    }

    for r in 1..=radius {
        let mut next = Vec::with_capacity(n);
        for i in 0..n {
            let mut env: Vec<(u8, u64)> = mol
                .neighbors(i)
                .iter()
                .map(|&(j, bi)| (mol.bonds()[bi].order.code(), ids[j]))
                .collect();
            env.sort_unstable();
            let mut h = Fnv::new();
            h.write_u64(u64::from(r));
            h.write_u64(ids[i]);
            for (code, id) in env {
                h.write_u64(u64::from(code));
                h.write_u64(id);
            }
            next.push(h.finish());
        }
        ids = next;
        for &id in &ids {
            bump(id);
        }
    }

    CountFingerprint { dim, counts }
}

/// Count Tanimoto: Σ min / Σ max over buckets; two empty fingerprints
/// score 0.
pub fn tanimoto(a: &CountFingerprint, b: &CountFingerprint) -> f64 {
    assert_eq!(a.dim, b.dim, "fingerprint dimensions differ");
    let mut num = 0u64;
    let mut den = 0u64;
    let mut ia = a.counts.iter().peekable();
    let mut ib = b.counts.iter().peekable();
    loop {
        match (ia.peek(), ib.peek()) {
            (Some(&(&ka, &va)), Some(&(&kb, &vb))) => {
                if ka == kb {
                    num += u64::from(va.min(vb));
                    den += u64::from(va.max(vb));
                    ia.next();
                    ib.next();
                } else if ka < kb {
                    den += u64::from(va);
                    ia.next();
                } else {
                    den += u64::from(vb);
                    ib.next();
                }
            }
            (Some(&(_, &va)), None) => {
                den += u64::from(va);
                ia.next();
            }
            (None, Some(&(_, &vb))) => {
                den += u64::from(vb);
                ib.next();
            }
            (None, None) => break,
        }
    }
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::smiles::parse_smiles;

    fn fp(smiles: &str) -> CountFingerprint {
        morgan_count_fp(&parse_smiles(smiles).unwrap(), 2, 2048)
    }

    #[test]
    fn environment_count_is_atoms_times_radii() {
        let mol = parse_smiles("CCO").unwrap();
        let f = morgan_count_fp(&mol, 2, 2048);
        assert_eq!(f.total(), 3 * 3);
        let f = morgan_count_fp(&mol, 0, 2048);
        assert_eq!(f.total(), 3);
    }

    #[test]
    fn atom_order_does_not_matter() {
        assert_eq!(fp("CCO"), fp("OCC"));
        assert_eq!(fp("c1ccccc1C"), fp("Cc1ccccc1"));
    }

    #[test]
    fn self_similarity_is_one() {
        assert_eq!(tanimoto(&fp("CCO"), &fp("CCO")), 1.0);
        assert_eq!(tanimoto(&fp("c1ccccc1"), &fp("c1ccccc1")), 1.0);
    }

    #[test]
    fn similar_molecules_score_between_zero_and_one() {
        let s = tanimoto(&fp("CCO"), &fp("CCN"));
        assert!(s > 0.0 && s < 1.0, "got {s}");
        // Shared environments: the methyl carbon's radius-0 and
        // radius-1 spheres are identical in both molecules.
        let t = tanimoto(&fp("CCO"), &fp("CCC"));
        assert!(t > 0.0 && t < 1.0);
    }

    #[test]
    fn symmetric() {
        let (a, b) = (fp("CC(=O)O"), fp("CCN"));
        assert_eq!(tanimoto(&a, &b), tanimoto(&b, &a));
    }

    #[test]
    fn counts_track_multiplicity() {
        // Ethane: both carbons share every environment, so each bucket
        // holds an even count.
        let f = fp("CC");
        assert!(f.counts().values().all(|&c| c % 2 == 0));
        assert_eq!(f.total(), 6);
    }

    #[test]
    fn empty_fingerprints_score_zero() {
        let e = CountFingerprint::empty(2048);
        assert_eq!(tanimoto(&e, &e), 0.0);
        assert!((tanimoto(&e, &fp("CCO")) - 0.0).abs() < 1e-15);
    }

    #[test]
    fn buckets_stay_in_range() {
        let mol = parse_smiles("CC(=O)Nc1ccc(O)cc1").unwrap();
        let f = morgan_count_fp(&mol, 2, 64);
        assert!(f.counts().keys().all(|&k| k < 64));
        assert_eq!(f.dim(), 64);
    }

    #[test]
    fn dense_expansion_matches_counts() {
        let f = fp("CCO");
        let d = f.dense();
        assert_eq!(d.len(), 2048);
        assert_eq!(d.iter().sum::<f64>() as u64, f.total());
    }
}
