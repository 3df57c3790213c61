//! Building-block catalog: blocks, templates, and compatibility.
//!
//! Loading parses a block list and a template file, drops duplicate and
//! unusable blocks (reported, not fatal), and indexes which blocks
//! satisfy which template slot. Rewrite applications and fingerprints
//! are memoized behind the catalog so repeated tree evaluations stay
//! cheap; the caches are bounded and never affect results.

use std::collections::HashMap;
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::Serialize;

use crate::chem::{
    apply_reaction, canonical_key, match_pattern, molecular_weight, morgan_count_fp,
    parse_smiles, parse_template_file, CanonicalKey, CountFingerprint, MoleculeGraph,
    ReactionTemplate,
};
use crate::error::{Error, Result};

const APPLY_MEMO_CAP: usize = 65_536;
const FP_MEMO_CAP: usize = 65_536;

/// The products of one template application.
pub type ProductSet = Vec<(CanonicalKey, MoleculeGraph)>;

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

/// One catalog entry.
#[derive(Clone, Debug)]
pub struct BuildingBlock {
    key: CanonicalKey,
    mol: MoleculeGraph,
    weight: f64,
}

impl BuildingBlock {
    pub fn key(&self) -> &CanonicalKey {
        &self.key
    }

    pub fn mol(&self) -> &MoleculeGraph {
        &self.mol
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }
}

/// What block loading kept and why lines were dropped.
#[derive(Clone, Debug, Default, Serialize)]
pub struct LoadReport {
    pub lines_read: usize,
    pub blocks_kept: usize,
    pub duplicates: usize,
    pub unmatched: usize,
    pub parse_errors: Vec<String>,
}

// ---------------------------------------------------------------------------
// Catalog
// ---------------------------------------------------------------------------

pub struct Catalog {
    blocks: Vec<BuildingBlock>,
    templates: Vec<ReactionTemplate>,
    /// `slot_blocks[t][s]`: ascending block indices matching slot `s`.
    slot_blocks: Vec<Vec<Vec<u32>>>,
    /// `block_slots[b]`: ascending `(template, slot)` pairs `b` matches.
    block_slots: Vec<Vec<(u32, u8)>>,
    key_index: HashMap<CanonicalKey, u32>,
    apply_memo: Mutex<Lru<ApplyKey, Arc<ProductSet>>>,
    fp_memo: Mutex<Lru<FpKey, Arc<CountFingerprint>>>,
}

type ApplyKey = (u32, CanonicalKey, Option<CanonicalKey>);
type FpKey = (CanonicalKey, u32, u32);

impl Catalog {
    /// Loads blocks (one SMILES per line, optional trailing label, `#`
    /// comments) and templates from disk.
    pub fn load(blocks_path: &Path, templates_path: &Path) -> Result<(Catalog, LoadReport)> {
        let templates = parse_template_file(templates_path)?;
        let text = std::fs::read_to_string(blocks_path)?;
        Catalog::from_lines(text.lines(), templates)
    }

    /// Builds a catalog from block lines and parsed templates.
    pub fn from_lines<'a>(
        lines: impl IntoIterator<Item = &'a str>,
        templates: Vec<ReactionTemplate>,
    ) -> Result<(Catalog, LoadReport)> {
        if templates.is_empty() {
            return Err(Error::Catalog("no templates given".into()));
        }
        let mut report = LoadReport::default();
        let mut blocks: Vec<BuildingBlock> = Vec::new();
        let mut key_index: HashMap<CanonicalKey, u32> = HashMap::new();

        for (lineno, raw) in lines.into_iter().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            report.lines_read += 1;
            let smiles = line.split_whitespace().next().unwrap();
            let mol = match parse_smiles(smiles) {
                Ok(mol) => mol,
                Err(e) => {
                    report.parse_errors.push(format!("line {}: {e}", lineno + 1));
                    continue;
                }
            };
            let key = canonical_key(&mol);
            if key_index.contains_key(&key) {
                report.duplicates += 1;
                continue;
            }
            let weight = molecular_weight(&mol);
            key_index.insert(key.clone(), blocks.len() as u32);
            blocks.push(BuildingBlock { key, mol, weight });
        }

        // Slot compatibility; blocks matching no slot are dropped.
        let mut slot_blocks: Vec<Vec<Vec<u32>>> = templates
            .iter()
            .map(|t| vec![Vec::new(); t.arity()])
            .collect();
        let mut keep = vec![false; blocks.len()];
        let mut block_slots_all: Vec<Vec<(u32, u8)>> = vec![Vec::new(); blocks.len()];
        for (b, block) in blocks.iter().enumerate() {
            for (t, template) in templates.iter().enumerate() {
                for s in 0..template.arity() {
                    if !match_pattern(template.reactant(s), &block.mol).is_empty() {
                        keep[b] = true;
                        block_slots_all[b].push((t as u32, s as u8));
                    }
                }
            }
        }

        let mut kept_blocks = Vec::new();
        let mut kept_slots = Vec::new();
        let mut kept_index = HashMap::new();
        for (b, block) in blocks.into_iter().enumerate() {
            if !keep[b] {
                report.unmatched += 1;
                continue;
            }
            let nb = kept_blocks.len() as u32;
            for &(t, s) in &block_slots_all[b] {
                slot_blocks[t as usize][s as usize].push(nb);
            }
            kept_index.insert(block.key.clone(), nb);
            kept_slots.push(block_slots_all[b].clone());
            kept_blocks.push(block);
        }
        report.blocks_kept = kept_blocks.len();
        if kept_blocks.is_empty() {
            return Err(Error::Catalog("no usable blocks".into()));
        }

        Ok((
            Catalog {
                blocks: kept_blocks,
                templates,
                slot_blocks,
                block_slots: kept_slots,
                key_index: kept_index,
                apply_memo: Mutex::new(Lru::new(APPLY_MEMO_CAP)),
                fp_memo: Mutex::new(Lru::new(FP_MEMO_CAP)),
            },
            report,
        ))
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn block(&self, b: u32) -> &BuildingBlock {
        &self.blocks[b as usize]
    }

    pub fn blocks(&self) -> &[BuildingBlock] {
        &self.blocks
    }

    /// Index of the block with this canonical key, if cataloged.
    pub fn find_block(&self, key: &CanonicalKey) -> Option<u32> {
        self.key_index.get(key).copied()
    }

    pub fn n_templates(&self) -> usize {
        self.templates.len()
    }

    pub fn template(&self, t: u32) -> &ReactionTemplate {
        &self.templates[t as usize]
    }

    pub fn templates(&self) -> &[ReactionTemplate] {
        &self.templates
    }

    /// Blocks whose structure matches reactant slot `s` of template `t`,
    /// ascending.
    pub fn compatible_blocks(&self, t: u32, s: u8) -> &[u32] {
        &self.slot_blocks[t as usize][s as usize]
    }

    /// `(template, slot)` pairs block `b` can fill, ascending.
    pub fn slots_for_block(&self, b: u32) -> &[(u32, u8)] {
        &self.block_slots[b as usize]
    }

    /// Memoized template application. Binary inputs are unordered: both
    /// reactant assignments are always tried, so the memo normalizes the
    /// key pair.
    pub fn apply(
        &self,
        t: u32,
        inputs: &[(&CanonicalKey, &MoleculeGraph)],
    ) -> Result<Arc<ProductSet>> {
        let template = &self.templates[t as usize];
        if inputs.len() != template.arity() {
            return Err(Error::Catalog(format!(
                "template {:?} takes {} inputs, got {}",
                template.name(),
                template.arity(),
                inputs.len()
            )));
        }
        let memo_key: ApplyKey = if inputs.len() == 2 {
            let (a, b) = (inputs[0].0, inputs[1].0);
            if a <= b {
                (t, a.clone(), Some(b.clone()))
            } else {
                (t, b.clone(), Some(a.clone()))
            }
        } else {
            (t, inputs[0].0.clone(), None)
        };
        if let Some(hit) = self.apply_memo.lock().unwrap().get(&memo_key) {
            return Ok(hit);
        }
        let mols: Vec<&MoleculeGraph> = inputs.iter().map(|&(_, m)| m).collect();
        let products = Arc::new(apply_reaction(template, &mols)?);
        self.apply_memo.lock().unwrap().put(memo_key, Arc::clone(&products));
        Ok(products)
    }

    /// Memoized circular count fingerprint of a molecule by key.
    pub fn fingerprint(
        &self,
        key: &CanonicalKey,
        mol: &MoleculeGraph,
        radius: u32,
        dim: u32,
    ) -> Arc<CountFingerprint> {
        let memo_key: FpKey = (key.clone(), radius, dim);
        if let Some(hit) = self.fp_memo.lock().unwrap().get(&memo_key) {
            return hit;
        }
        let fp = Arc::new(morgan_count_fp(mol, radius, dim));
        self.fp_memo.lock().unwrap().put(memo_key, Arc::clone(&fp));
        fp
    }

    /// Fingerprint of a cataloged block.
    pub fn block_fingerprint(&self, b: u32, radius: u32, dim: u32) -> Arc<CountFingerprint> {
        let block = &self.blocks[b as usize];
        self.fingerprint(&block.key, &block.mol, radius, dim)
    }
}

impl std::fmt::Debug for Catalog {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Catalog")
            .field("blocks", &self.blocks.len())
            .field("templates", &self.templates.len())
            .finish_non_exhaustive()
    }
}

// ---------------------------------------------------------------------------
// Bounded LRU memo
// ---------------------------------------------------------------------------

/// Minimal LRU map: hash lookup plus an intrusive recency list over a
/// slab. Eviction only bounds memory; hits and misses never change
/// computed results.
struct Lru<K, V> {
    cap: usize,
    map: HashMap<K, usize>,
    slab: Vec<LruEntry<K, V>>,
    head: usize,
    tail: usize,
}

struct LruEntry<K, V> {
    key: K,
    value: V,
    prev: usize,
    next: usize,
}

const NIL: usize = usize::MAX;

impl<K: std::hash::Hash + Eq + Clone, V: Clone> Lru<K, V> {
    fn new(cap: usize) -> Self {
        assert!(cap > 0);
        Lru { cap, map: HashMap::new(), slab: Vec::new(), head: NIL, tail: NIL }
    }

    #[cfg(test)]
    fn len(&self) -> usize {
        self.map.len()
    }

    fn get(&mut self, key: &K) -> Option<V> {
        let &i = self.map.get(key)?;
        self.detach(i);
        self.attach_front(i);
        Some(self.slab[i].value.clone())
    }

    fn put(&mut self, key: K, value: V) {
        if let Some(&i) = self.map.get(&key) {
            self.slab[i].value = value;
            self.detach(i);
            self.attach_front(i);
            return;
        }
        if self.map.len() == self.cap {
            let lru = self.tail;
            self.detach(lru);
            let old = self.map.remove(&self.slab[lru].key);
            debug_assert!(old.is_some());
            self.slab[lru] = LruEntry { key: key.clone(), value, prev: NIL, next: NIL };
            self.map.insert(key, lru);
            self.attach_front(lru);
        } else {
            let i = self.slab.len();
            self.slab.push(LruEntry { key: key.clone(), value, prev: NIL, next: NIL });
            self.map.insert(key, i);
            self.attach_front(i);
        }
    }

    fn detach(&mut self, i: usize) {
        let (prev, next) = (self.slab[i].prev, self.slab[i].next);
        if prev == NIL {
            if self.head == i {
                self.head = next;
            }
        } else {
            self.slab[prev].next = next;
        }
        if next == NIL {
            if self.tail == i {
                self.tail = prev;
            }
        } else {
            self.slab[next].prev = prev;
        }
        self.slab[i].prev = NIL;
        self.slab[i].next = NIL;
    }

    fn attach_front(&mut self, i: usize) {
        self.slab[i].prev = NIL;
        self.slab[i].next = self.head;
        if self.head != NIL {
            self.slab[self.head].prev = i;
        }
        self.head = i;
        if self.tail == NIL {
            self.tail = i;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::parse_reaction;

    fn test_templates() -> Vec<ReactionTemplate> {
        vec![
            parse_reaction("amide", "[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]").unwrap(),
            parse_reaction("oxidation", "[C;!H0:1][O;H1:2]>>[C:1]=[O:2]").unwrap(),
        ]
    }

    fn test_catalog() -> (Catalog, LoadReport) {
        let lines = [
            "CC(=O)O acetic-acid",
            "NCC ethylamine",
            "CCO ethanol",
            "OCC ethanol-again",
            "C1CC1 cyclopropane",
            "not-a-molecule",
        ];
        Catalog::from_lines(lines, test_templates()).unwrap()
    }

    #[test]
    fn load_reports_drops() {
        let (cat, report) = test_catalog();
        assert_eq!(report.lines_read, 6);
        assert_eq!(report.blocks_kept, 3);
        assert_eq!(report.duplicates, 1);
        assert_eq!(report.unmatched, 1);
        assert_eq!(report.parse_errors.len(), 1);
        assert!(report.parse_errors[0].starts_with("line 6:"));
        assert_eq!(cat.n_blocks(), 3);
        assert_eq!(cat.n_templates(), 2);
    }

    #[test]
    fn slot_index_is_consistent() {
        let (cat, _) = test_catalog();
        // Block 0: acid; block 1: amine; block 2: ethanol.
        assert_eq!(cat.compatible_blocks(0, 0), &[0]);
        assert_eq!(cat.compatible_blocks(0, 1), &[1]);
        assert_eq!(cat.compatible_blocks(1, 0), &[2]);
        assert_eq!(cat.slots_for_block(0), &[(0, 0)]);
        assert_eq!(cat.slots_for_block(1), &[(0, 1)]);
        assert_eq!(cat.slots_for_block(2), &[(1, 0)]);
        for b in 0..cat.n_blocks() as u32 {
            for &(t, s) in cat.slots_for_block(b) {
                assert!(cat.compatible_blocks(t, s).contains(&b));
            }
        }
    }

    #[test]
    fn find_block_by_key() {
        let (cat, _) = test_catalog();
        let key = cat.block(2).key().clone();
        assert_eq!(cat.find_block(&key), Some(2));
    }

    #[test]
    fn apply_is_memoized_and_order_normalized() {
        let (cat, _) = test_catalog();
        let acid = cat.block(0);
        let amine = cat.block(1);
        let p1 = cat
            .apply(0, &[(acid.key(), acid.mol()), (amine.key(), amine.mol())])
            .unwrap();
        assert_eq!(p1.len(), 1);
        let p2 = cat
            .apply(0, &[(amine.key(), amine.mol()), (acid.key(), acid.mol())])
            .unwrap();
        assert!(Arc::ptr_eq(&p1, &p2));
    }

    #[test]
    fn fingerprints_are_memoized() {
        let (cat, _) = test_catalog();
        let a = cat.block_fingerprint(2, 2, 512);
        let b = cat.block_fingerprint(2, 2, 512);
        assert!(Arc::ptr_eq(&a, &b));
        let c = cat.block_fingerprint(2, 2, 1024);
        assert!(!Arc::ptr_eq(&a, &c));
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let blocks = dir.path().join("blocks.smi");
        let templates = dir.path().join("templates.tsv");
        std::fs::write(&blocks, "# toy"
            .to_string()
            + "\nCC(=O)O\nNCC\n").unwrap();
        std::fs::write(
            &templates,
            "amide\t[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]\n",
        )
        .unwrap();
        let (cat, report) = Catalog::load(&blocks, &templates).unwrap();
        assert_eq!(cat.n_blocks(), 2);
        assert_eq!(report.blocks_kept, 2);
    }

    #[test]
    fn repo_fixture_loads_cleanly() {
        let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR"));
        let (cat, report) = Catalog::load(
            &root.join("../../data/blocks.smi"),
            &root.join("../../data/templates.tsv"),
        )
        .unwrap();
        assert_eq!(report.parse_errors, Vec::<String>::new());
        assert_eq!(report.duplicates, 0);
        assert_eq!(report.unmatched, 0);
        assert_eq!(report.lines_read, 200);
        assert_eq!(report.blocks_kept, 200);
        // Every slot of every template can be filled from the catalog, and
        // some block combination yields at least one product.
        for t in 0..cat.n_templates() as u32 {
            let template = cat.template(t);
            for s in 0..template.arity() as u8 {
                assert!(
                    !cat.compatible_blocks(t, s).is_empty(),
                    "template {} slot {s} has no compatible blocks",
                    template.name()
                );
            }
            let per_slot: Vec<&[u32]> = (0..template.arity() as u8)
                .map(|s| cat.compatible_blocks(t, s))
                .collect();
            let mut produced = false;
            'outer: for &a in per_slot[0].iter().take(5) {
                let combos: Vec<Vec<u32>> = if per_slot.len() == 1 {
                    vec![vec![a]]
                } else {
                    per_slot[1].iter().take(5).map(|&b| vec![a, b]).collect()
                };
                for combo in combos {
                    let reactants: Vec<_> = combo
                        .iter()
                        .map(|&b| (cat.block(b).key(), cat.block(b).mol()))
                        .collect();
                    if cat.apply(t, &reactants).map_or(false, |p| !p.is_empty()) {
                        produced = true;
                        break 'outer;
                    }
                }
            }
            assert!(produced, "template {} never produced", template.name());
        }
    }

    #[test]
    fn empty_inputs_are_errors() {
        assert!(Catalog::from_lines(["CCO"], vec![]).is_err());
        assert!(Catalog::from_lines(["CCC"], test_templates()).is_err());
    }

    #[test]
    fn lru_evicts_least_recent() {
        let mut lru: Lru<u32, u32> = Lru::new(2);
        lru.put(1, 10);
        lru.put(2, 20);
        assert_eq!(lru.get(&1), Some(10));
        lru.put(3, 30); // evicts 2
        assert_eq!(lru.len(), 2);
        assert_eq!(lru.get(&2), None);
        assert_eq!(lru.get(&1), Some(10));
        assert_eq!(lru.get(&3), Some(30));
        lru.put(1, 11);
        assert_eq!(lru.get(&1), Some(11));
        assert_eq!(lru.len(), 2);
    }
}
