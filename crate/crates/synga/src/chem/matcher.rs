//! Subgraph matching of patterns onto molecules.
//!
//! Enumerates every injective atom mapping whose pattern bonds land on
//! molecule bonds with agreeing bond expressions. Extra molecule bonds
//! between mapped atoms are permitted. Results are sorted
//! lexicographically by the mapped atom tuple.

use crate::chem::molecule::MoleculeGraph;
use crate::chem::smarts::Pattern;

/// All injective mappings of `pattern` into `mol`.
///
/// Each result maps pattern atom `p` to molecule atom `result[p]`.
pub fn match_pattern(pattern: &Pattern, mol: &MoleculeGraph) -> Vec<Vec<usize>> {
    let np = pattern.n_atoms();
    if np > mol.n_atoms() {
        return Vec::new();
    }

    // Visit pattern atoms in a connected order so every atom after the
    // first extends from an already-mapped anchor.
    let order = connected_order(pattern);

    let mut results = Vec::new();
    let mut assignment = vec![usize::MAX; np];
    let mut used = vec![false; mol.n_atoms()];
    extend(pattern, mol, &order, 0, &mut assignment, &mut used, &mut results);
    results.sort_unstable();
    results
}

/// BFS order from atom 0; `order[k]` for `k > 0` has a neighbor earlier
/// in the order (the pattern is connected by construction).
fn connected_order(pattern: &Pattern) -> Vec<usize> {
    let n = pattern.n_atoms();
    let mut order = Vec::with_capacity(n);
    let mut seen = vec![false; n];
    let mut queue = std::collections::VecDeque::new();
    queue.push_back(0);
    seen[0] = true;
    while let Some(u) = queue.pop_front() {
        order.push(u);
        for &(v, _) in pattern.neighbors(u) {
            if !seen[v] {
                seen[v] = true;
                queue.push_back(v);
            }
        }
    }
    debug_assert_eq!(order.len(), n);
    order
}

fn extend(
    pattern: &Pattern,
    mol: &MoleculeGraph,
    order: &[usize],
    depth: usize,
    assignment: &mut Vec<usize>,
    used: &mut Vec<bool>,
    results: &mut Vec<Vec<usize>>,
) {
    if depth == order.len() {
        results.push(assignment.clone());
        return;
    }
    let p = order[depth];

    // Candidate molecule atoms: neighbors of a mapped pattern neighbor,
    // or every atom for the root.
    let anchor = pattern
        .neighbors(p)
        .iter()
        .find(|&&(q, _)| assignment[q] != usize::MAX)
        .map(|&(q, _)| assignment[q]);

    let try_candidate = |c: usize,
                         assignment: &mut Vec<usize>,
                         used: &mut Vec<bool>,
                         results: &mut Vec<Vec<usize>>| {
        if used[c] || !pattern.atoms()[p].expr.matches(mol, c) {
            return;
        }
        // Every pattern bond from `p` to a mapped atom must land on a
        // molecule bond matching its expression.
        for &(q, bi) in pattern.neighbors(p) {
            let mq = assignment[q];
            if mq == usize::MAX {
                continue;
            }
            match mol.bond_between(c, mq) {
                Some(bond) if pattern.bonds()[bi].expr.matches(bond.order) => {}
                _ => return,
            }
        }
        assignment[p] = c;
        used[c] = true;
        extend(pattern, mol, order, depth + 1, assignment, used, results);
        used[c] = false;
        assignment[p] = usize::MAX;
    };

    match anchor {
        Some(a) => {
            for &(c, _) in mol.neighbors(a) {
                try_candidate(c, assignment, used, results);
            }
        }
        None => {
            for c in 0..mol.n_atoms() {
                try_candidate(c, assignment, used, results);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::smarts::parse_smarts;
    use crate::chem::smiles::parse_smiles;

    fn matches(pattern: &str, smiles: &str) -> Vec<Vec<usize>> {
        let p = parse_smarts(pattern).unwrap();
        let m = parse_smiles(smiles).unwrap();
        match_pattern(&p, &m)
    }

    #[test]
    fn single_atom_matches_each_site() {
        let hits = matches("C", "CCO");
        assert_eq!(hits, vec![vec![0], vec![1]]);
    }

    #[test]
    fn chain_matches_both_directions() {
        let hits = matches("CC", "CCC");
        assert_eq!(hits, vec![vec![0, 1], vec![1, 0], vec![1, 2], vec![2, 1]]);
    }

    #[test]
    fn carboxylic_acid_pattern() {
        // Acetic acid: C(0) C(1)(=O(2))O(3)H
        let hits = matches("[C:1](=O)[O;H1]", "CC(=O)O");
        assert_eq!(hits, vec![vec![1, 2, 3]]);
    }

    #[test]
    fn aromatic_vs_aliphatic() {
        assert_eq!(matches("c", "c1ccccc1").len(), 6);
        assert!(matches("C", "c1ccccc1").is_empty());
        assert!(matches("c", "C1CCCCC1").is_empty());
        assert_eq!(matches("[#6]", "c1ccccc1").len(), 6);
    }

    #[test]
    fn degree_and_hydrogen_primitives() {
        // Isobutane: central carbon has degree 3, 1 H.
        let hits = matches("[D3]", "CC(C)C");
        assert_eq!(hits, vec![vec![1]]);
        let hits = matches("[C;H1]", "CC(C)C");
        assert_eq!(hits, vec![vec![1]]);
        assert_eq!(matches("[H3]", "CC(C)C").len(), 3);
    }

    #[test]
    fn ring_primitive() {
        // Methylcyclopropane: ring atoms 1..=3.
        let hits = matches("[R]", "CC1CC1");
        assert_eq!(hits, vec![vec![1], vec![2], vec![3]]);
        let hits = matches("[!R]", "CC1CC1");
        assert_eq!(hits, vec![vec![0]]);
    }

    #[test]
    fn default_bond_spans_single_and_aromatic() {
        assert_eq!(matches("cc", "c1ccccc1").len(), 12);
        // Biphenyl's inter-ring bond is single between aromatics; the
        // default bond accepts it, the explicit aromatic bond does not.
        let biphenyl = "c1ccccc1-c1ccccc1";
        assert_eq!(matches("c-c", biphenyl).len(), 2);
        assert_eq!(matches("c:c", biphenyl).len(), 24);
        assert_eq!(matches("cc", biphenyl).len(), 26);
    }

    #[test]
    fn any_bond_matches_all_orders() {
        assert_eq!(matches("C~O", "C=O").len(), 1);
        assert_eq!(matches("C~O", "CO").len(), 1);
        assert!(matches("C-O", "C=O").is_empty());
    }

    #[test]
    fn injectivity() {
        // A two-carbon pattern cannot map both atoms to the same site.
        let hits = matches("CC", "CC");
        assert_eq!(hits, vec![vec![0, 1], vec![1, 0]]);
    }

    #[test]
    fn charge_constraint() {
        let hits = matches("[N+]", "C[N+](C)(C)C");
        assert_eq!(hits, vec![vec![1]]);
        assert!(matches("[N+]", "CNC").is_empty());
    }

    #[test]
    fn branch_pattern_matches_nitro() {
        let hits = matches("[N+](=O)[O-]", "c1ccccc1[N+](=O)[O-]");
        assert_eq!(hits, vec![vec![6, 7, 8]]);
    }
}
