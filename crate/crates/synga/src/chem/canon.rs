//! Canonical atom ranking and canonical SMILES output.
//!
//! Ranking uses iterative neighborhood refinement over structural
//! invariants. When refinement stalls with tied atoms, one atom of the
//! first tied class is individualized and the search recurses over every
//! choice, keeping the lexicographically smallest serialization. Two
//! graphs receive the same key iff they are isomorphic under the
//! supported feature set.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::chem::molecule::{implied_hydrogens, BondOrder, MoleculeGraph};

// ---------------------------------------------------------------------------
// Key type
// ---------------------------------------------------------------------------

/// Canonical SMILES of a molecule; the identity used for deduplication,
/// caching, and serialization. Re-parses to an isomorphic graph.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CanonicalKey(String);

impl CanonicalKey {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Wraps a string already known to be canonical (trusted inputs such
    /// as serialized trees; callers re-validate through the catalog).
    pub(crate) fn from_trusted(s: String) -> Self {
        CanonicalKey(s)
    }
}

impl fmt::Display for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for CanonicalKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

impl AsRef<str> for CanonicalKey {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Canonical key of a sanitized molecule.
pub fn canonical_key(mol: &MoleculeGraph) -> CanonicalKey {
    let ranks = initial_ranks(mol);
    CanonicalKey(canonical_from(mol, ranks))
}

// ---------------------------------------------------------------------------
// Refinement
// ---------------------------------------------------------------------------

fn initial_ranks(mol: &MoleculeGraph) -> Vec<u32> {
    let keys: Vec<(usize, u8, i8, u8, bool, bool)> = (0..mol.n_atoms())
        .map(|i| {
            let a = mol.atom(i);
            (
                mol.degree(i),
                a.element.atomic_number(),
                a.charge,
                a.n_h,
                a.aromatic,
                mol.atom_in_ring(i),
            )
        })
        .collect();
    densify(&keys)
}

/// Dense ranks (0-based) of `keys` under their natural order.
fn densify<K: Ord>(keys: &[K]) -> Vec<u32> {
    let mut order: Vec<usize> = (0..keys.len()).collect();
    order.sort_by(|&a, &b| keys[a].cmp(&keys[b]));
    let mut ranks = vec![0u32; keys.len()];
    let mut rank = 0u32;
    for w in 0..order.len() {
        if w > 0 && keys[order[w]] != keys[order[w - 1]] {
            rank += 1;
        }
        ranks[order[w]] = rank;
    }
    ranks
}

fn class_count(ranks: &[u32]) -> u32 {
    ranks.iter().copied().max().map_or(0, |m| m + 1)
}

/// Splits rank classes by sorted neighbor (bond, rank) signatures until
/// the partition stabilizes.
fn refine(mol: &MoleculeGraph, mut ranks: Vec<u32>) -> Vec<u32> {
    let n = mol.n_atoms();
    loop {
        let before = class_count(&ranks);
        if before as usize == n {
            return ranks;
        }
        let keys: Vec<(u32, Vec<(u8, u32)>)> = (0..n)
            .map(|i| {
                let mut nb: Vec<(u8, u32)> = mol
                    .neighbors(i)
                    .iter()
                    .map(|&(v, bi)| (mol.bonds()[bi].order.code(), ranks[v]))
                    .collect();
                nb.sort_unstable();
                (ranks[i], nb)
            })
            .collect();
        let next = densify(&keys);
        if class_count(&next) == before {
            return next;
        }
        ranks = next;
    }
}

/// Fully refines, individualizing tied atoms where needed, and returns
/// the smallest serialization.
fn canonical_from(mol: &MoleculeGraph, ranks: Vec<u32>) -> String {
    let ranks = refine(mol, ranks);
    let n = mol.n_atoms();
    if class_count(&ranks) as usize == n {
        return write_smiles(mol, &ranks);
    }
    // First class with at least two members.
    let mut counts = vec![0u32; class_count(&ranks) as usize];
    for &r in &ranks {
        counts[r as usize] += 1;
    }
    let tied = counts.iter().position(|&c| c >= 2).unwrap() as u32;
    let mut best: Option<String> = None;
    for a in 0..n {
        if ranks[a] != tied {
            continue;
        }
        let promoted: Vec<u32> = (0..n)
            .map(|i| ranks[i] * 2 + u32::from(i != a))
            .collect();
        let candidate = canonical_from(mol, densify(&promoted));
        if best.as_ref().map_or(true, |b| candidate < *b) {
            best = Some(candidate);
        }
    }
    best.unwrap()
}

// ---------------------------------------------------------------------------
// Writer
// ---------------------------------------------------------------------------

/// Serializes with all-distinct `ranks`: root is rank 0, neighbors are
/// visited in ascending rank, ring-closure digits are allocated in
/// emission order.
fn write_smiles(mol: &MoleculeGraph, ranks: &[u32]) -> String {
    let n = mol.n_atoms();
    let root = (0..n).find(|&i| ranks[i] == 0).unwrap();

    // Pass 1: DFS tree. children[u] and back_edges[u] hold (atom, bond).
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut back_edges: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut visited = vec![false; n];
    let mut bond_used = vec![false; mol.bonds().len()];
    let mut stack = vec![root];
    visited[root] = true;
    while let Some(u) = stack.pop() {
        let mut nbs: Vec<(usize, usize)> = mol.neighbors(u).to_vec();
        nbs.sort_by_key(|&(v, _)| ranks[v]);
        for (v, bi) in nbs {
            if bond_used[bi] {
                continue;
            }
            bond_used[bi] = true;
            if visited[v] {
                // Cycle-closing edge; recorded at both endpoints.
                back_edges[u].push((v, bi));
                back_edges[v].push((u, bi));
            } else {
                visited[v] = true;
                children[u].push((v, bi));
                stack.push(v);
            }
        }
    }
    // The explicit stack discovers children in rank order but the order
    // of descent does not matter; emission below re-reads `children`.

    let mut out = String::new();
    let mut digits: Vec<Option<u32>> = vec![None; mol.bonds().len()];
    let mut next_digit = 1u32;
    emit(mol, root, usize::MAX, ranks, &children, &back_edges, &mut digits, &mut next_digit, &mut out);
    out
}

#[allow(clippy::too_many_arguments)]
fn emit(
    mol: &MoleculeGraph,
    u: usize,
    parent_bond: usize,
    ranks: &[u32],
    children: &[Vec<(usize, usize)>],
    back_edges: &[Vec<(usize, usize)>],
    digits: &mut Vec<Option<u32>>,
    next_digit: &mut u32,
    out: &mut String,
) {
    let _ = parent_bond;
    out.push_str(&atom_token(mol, u));
    let mut closures: Vec<(usize, usize)> = back_edges[u].clone();
    closures.sort_by_key(|&(v, _)| ranks[v]);
    for (_, bi) in closures {
        let opening = digits[bi].is_none();
        let d = match digits[bi] {
            Some(d) => d,
            None => {
                let d = *next_digit;
                *next_digit += 1;
                digits[bi] = Some(d);
                d
            }
        };
        if opening {
            out.push_str(bond_token(mol, bi));
        }
        if d < 10 {
            out.push(char::from(b'0' + d as u8));
        } else {
            debug_assert!(d < 100, "ring closure digits exhausted");
            out.push('%');
            out.push(char::from(b'0' + (d / 10) as u8));
            out.push(char::from(b'0' + (d % 10) as u8));
        }
    }
    let ch = &children[u];
    for (i, &(v, bi)) in ch.iter().enumerate() {
        let last = i + 1 == ch.len();
        if !last {
            out.push('(');
        }
        out.push_str(bond_token(mol, bi));
        emit(mol, v, bi, ranks, children, back_edges, digits, next_digit, out);
        if !last {
            out.push(')');
        }
    }
}

fn bond_token(mol: &MoleculeGraph, bi: usize) -> &'static str {
    let bond = &mol.bonds()[bi];
    match bond.order {
        BondOrder::Single => {
            if mol.atom(bond.a).aromatic && mol.atom(bond.b).aromatic {
                "-"
            } else {
                ""
            }
        }
        BondOrder::Double => "=",
        BondOrder::Triple => "#",
        BondOrder::Aromatic => "",
    }
}

fn atom_token(mol: &MoleculeGraph, i: usize) -> String {
    let a = mol.atom(i);
    let symbol = if a.aromatic {
        a.element.symbol().to_ascii_lowercase()
    } else {
        a.element.symbol().to_string()
    };
    let (k, s0) = mol.bond_split(i);
    let bare_h = implied_hydrogens(a.element, a.aromatic, 0, i32::from(k), i32::from(s0));
    let bare_ok = a.element.in_organic_subset() && a.charge == 0 && bare_h == Some(a.n_h);
    if bare_ok {
        return symbol;
    }
    let mut out = String::from("[");
    out.push_str(&symbol);
    match a.n_h {
        0 => {}
        1 => out.push('H'),
        h => {
            out.push('H');
            out.push(char::from(b'0' + h));
        }
    }
    match a.charge {
        0 => {}
        1 => out.push('+'),
        -1 => out.push('-'),
        c if c > 0 => out.push_str(&format!("+{c}")),
        c => out.push_str(&format!("-{}", -c)),
    }
    out.push(']');
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::molecule::{Atom, Bond};
    use crate::chem::smiles::parse_smiles;

    fn key(s: &str) -> String {
        canonical_key(&parse_smiles(s).unwrap()).into_string()
    }

    #[test]
    fn equivalent_inputs_share_keys() {
        assert_eq!(key("CCO"), key("OCC"));
        assert_eq!(key("CC(=O)O"), key("OC(C)=O"));
        assert_eq!(key("c1ccccc1"), key("c1ccccc1"));
        assert_eq!(key("C(F)(Cl)Br"), key("BrC(Cl)F"));
        assert_eq!(key("c1ccc2ccccc2c1"), key("c1ccc2ccccc2c1"));
        assert_eq!(key("C1CCCCC1"), key("C2CCCCC2"));
    }

    #[test]
    fn distinct_molecules_differ() {
        assert_ne!(key("CCO"), key("CCN"));
        assert_ne!(key("CCO"), key("COC"));
        assert_ne!(key("c1ccccc1"), key("C1=CC=CC=C1"));
        assert_ne!(key("C[O-]"), key("CO"));
    }

    #[test]
    fn round_trips_through_parser() {
        for s in [
            "CCO",
            "CC(=O)O",
            "c1ccccc1",
            "c1ccc2ccccc2c1",
            "Oc1ccc(Cl)cc1",
            "c1cc[nH]c1",
            "CS(=O)(=O)c1ccccc1",
            "O=[N+]([O-])c1ccccc1",
            "C#N",
            "c1ccccc1-c1ccccc1",
            "[NH4+]",
            "C[Si](C)(C)C",
            "O=C1CCCCC1",
            "c1ccncc1",
            "OB(O)c1ccccc1",
        ] {
            let k1 = key(s);
            let reparsed = parse_smiles(&k1).unwrap();
            let k2 = canonical_key(&reparsed).into_string();
            assert_eq!(k1, k2, "round trip failed for {s}");
        }
    }

    #[test]
    fn invariant_under_atom_permutation() {
        // Rebuild a parsed molecule under several atom permutations and
        // confirm the key never moves.
        for s in ["CC(=O)Nc1ccc(O)cc1", "c1ccc2ccccc2c1", "CC(C)CC(=O)O"] {
            let mol = parse_smiles(s).unwrap();
            let n = mol.n_atoms();
            let base = canonical_key(&mol);
            for shift in 1..n {
                let perm: Vec<usize> = (0..n).map(|i| (i + shift) % n).collect();
                let mut inv = vec![0usize; n];
                for (i, &p) in perm.iter().enumerate() {
                    inv[p] = i;
                }
                let atoms: Vec<Atom> = (0..n).map(|i| mol.atom(inv[i])).collect();
                let bonds: Vec<Bond> = mol
                    .bonds()
                    .iter()
                    .map(|b| Bond { a: perm[b.a], b: perm[b.b], order: b.order })
                    .collect();
                let infer = vec![false; n];
                let permuted = MoleculeGraph::from_parts(atoms, bonds, &infer).unwrap();
                assert_eq!(canonical_key(&permuted), base, "permutation changed key of {s}");
            }
        }
    }

    #[test]
    fn bracket_round_trip_preserves_h_and_charge() {
        for s in ["[NH4+]", "C[O-]", "c1cc[nH]c1", "[CH3-]", "C[N+](C)(C)C"] {
            let m1 = parse_smiles(s).unwrap();
            let k = canonical_key(&m1);
            let m2 = parse_smiles(k.as_str()).unwrap();
            assert_eq!(m1.total_h(), m2.total_h(), "{s}");
            let c1: i32 = m1.atoms().iter().map(|a| i32::from(a.charge)).sum();
            let c2: i32 = m2.atoms().iter().map(|a| i32::from(a.charge)).sum();
            assert_eq!(c1, c2, "{s}");
        }
    }
}
