//! Ring-system scaffolds.
//!
//! The scaffold strips terminal atoms one shell at a time until none
//! remain, leaving rings and the linkers between them. Each removal
//! credits the removed bond's order back to the surviving neighbor as
//! implicit hydrogens, so the scaffold stays valence-consistent.

use crate::chem::molecule::{Atom, Bond, MoleculeGraph};

/// Scaffold of `mol`, or `None` for acyclic molecules.
pub fn murcko_scaffold(mol: &MoleculeGraph) -> Option<MoleculeGraph> {
    if !(0..mol.n_atoms()).any(|i| mol.atom_in_ring(i)) {
        return None;
    }

    let n = mol.n_atoms();
    let mut alive = vec![true; n];
    let mut degree: Vec<usize> = (0..n).map(|i| mol.degree(i)).collect();
    let mut extra_h = vec![0u8; n];

    // Peel degree-1 atoms until fixpoint. Ring atoms always keep at
    // least two ring bonds, so only side chains are consumed.
    let mut queue: Vec<usize> = (0..n).filter(|&i| degree[i] == 1).collect();
    while let Some(i) = queue.pop() {
        if !alive[i] || degree[i] != 1 {
            continue;
        }
        alive[i] = false;
        for &(j, bi) in mol.neighbors(i) {
            if !alive[j] {
                continue;
            }
            let order = mol.bonds()[bi].order.integer();
            debug_assert!(order.is_some(), "terminal atoms never carry aromatic bonds");
            extra_h[j] += order.unwrap_or(1);
            degree[j] -= 1;
            if degree[j] == 1 {
                queue.push(j);
            }
        }
    }

    let mut new_index = vec![usize::MAX; n];
    let mut atoms: Vec<Atom> = Vec::new();
    for i in 0..n {
        if alive[i] {
            new_index[i] = atoms.len();
            let mut atom = mol.atom(i);
            atom.n_h += extra_h[i];
            atoms.push(atom);
        }
    }
    let bonds: Vec<Bond> = mol
        .bonds()
        .iter()
        .filter(|b| alive[b.a] && alive[b.b])
        .map(|b| Bond { a: new_index[b.a], b: new_index[b.b], order: b.order })
        .collect();

    let infer = vec![false; atoms.len()];
    let scaffold = MoleculeGraph::from_parts(atoms, bonds, &infer)
        .expect("scaffold of a valid molecule is valid");
    Some(scaffold)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::canon::canonical_key;
    use crate::chem::smiles::parse_smiles;

    fn scaffold_key(smiles: &str) -> Option<String> {
        murcko_scaffold(&parse_smiles(smiles).unwrap())
            .map(|s| canonical_key(&s).into_string())
    }

    fn key(smiles: &str) -> String {
        canonical_key(&parse_smiles(smiles).unwrap()).into_string()
    }

    #[test]
    fn acyclic_has_no_scaffold() {
        assert_eq!(scaffold_key("CCO"), None);
        assert_eq!(scaffold_key("CC(=O)NCC"), None);
    }

    #[test]
    fn side_chains_are_peeled() {
        assert_eq!(scaffold_key("Cc1ccccc1"), Some(key("c1ccccc1")));
        assert_eq!(scaffold_key("CCc1ccccc1"), Some(key("c1ccccc1")));
        assert_eq!(scaffold_key("Cc1ccc(O)cc1"), Some(key("c1ccccc1")));
    }

    #[test]
    fn double_bonded_leaves_credit_two_hydrogens() {
        // Acetophenone peels the methyl, the carbonyl oxygen, then the
        // bare carbonyl carbon.
        assert_eq!(scaffold_key("CC(=O)c1ccccc1"), Some(key("c1ccccc1")));
        // The exocyclic ketone oxygen is terminal; the ring carbon
        // regains two hydrogens.
        assert_eq!(scaffold_key("O=C1CCCCC1"), Some(key("C1CCCCC1")));
    }

    #[test]
    fn rings_and_linkers_survive() {
        assert_eq!(scaffold_key("c1ccccc1-c1ccccc1"), Some(key("c1ccccc1-c1ccccc1")));
        // An ether bridge between rings is a linker, not a side chain.
        assert_eq!(
            scaffold_key("c1ccccc1OCc1ccccc1"),
            Some(key("c1ccccc1OCc1ccccc1"))
        );
        assert_eq!(scaffold_key("C1CCCCC1"), Some(key("C1CCCCC1")));
    }

    #[test]
    fn scaffold_is_idempotent() {
        let first = murcko_scaffold(&parse_smiles("CCc1ccc(CNC(C)=O)cc1").unwrap()).unwrap();
        let second = murcko_scaffold(&first).unwrap();
        assert_eq!(canonical_key(&first), canonical_key(&second));
    }
}
