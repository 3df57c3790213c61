//! Molecular graphs with implicit hydrogens and notational aromaticity.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::chem::element::Element;
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Integral order, `None` for aromatic bonds.
    pub fn integer(self) -> Option<u8> {
        match self {
            BondOrder::Single => Some(1),
            BondOrder::Double => Some(2),
            BondOrder::Triple => Some(3),
            BondOrder::Aromatic => None,
        }
    }

    /// Stable code used in hashing and serialization.
    pub fn code(self) -> u8 {
        match self {
            BondOrder::Single => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
            BondOrder::Aromatic => 4,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Atom {
    pub element: Element,
    pub aromatic: bool,
    /// Formal charge.
    pub charge: i8,
    /// Implicit hydrogen count. Hydrogens never appear as graph nodes.
    pub n_h: u8,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

impl Bond {
    pub fn other(&self, atom: usize) -> usize {
        if atom == self.a {
            self.b
        } else {
            self.a
        }
    }
}

/// A sanitized, connected molecular graph.
///
/// Invariants (enforced at construction):
/// * nonempty and connected;
/// * every atom's valence (bond order sum + hydrogens − charge) lies in
///   its element's permitted table, aromatic atoms within the one-double-
///   bond window;
/// * aromatic bonds join two aromatic atoms and lie on a five- or
///   six-membered cycle of aromatic bonds; every aromatic atom lies on
///   such a cycle.
#[derive(Clone, Debug)]
pub struct MoleculeGraph {
    atoms: Vec<Atom>,
    bonds: Vec<Bond>,
    /// Per atom: (neighbor atom, bond index), in bond insertion order.
    adj: Vec<Vec<(usize, usize)>>,
    ring_atom: Vec<bool>,
    ring_bond: Vec<bool>,
}

// ---------------------------------------------------------------------------
// Construction and sanitization
// ---------------------------------------------------------------------------

impl MoleculeGraph {
    /// Builds and sanitizes a graph. `infer_h[i]` selects implicit
    /// hydrogen inference for atom `i`; otherwise the provided `n_h` is
    /// kept verbatim (bracket atoms, preserved rewrite atoms).
    pub(crate) fn from_parts(mut atoms: Vec<Atom>, bonds: Vec<Bond>, infer_h: &[bool]) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::Molecule("empty molecule".into()));
        }
        if infer_h.len() != atoms.len() {
            return Err(Error::Molecule("inference mask length mismatch".into()));
        }
        let n = atoms.len();
        let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
        for (bi, bond) in bonds.iter().enumerate() {
            if bond.a >= n || bond.b >= n || bond.a == bond.b {
                return Err(Error::Molecule(format!("bad bond {}-{}", bond.a, bond.b)));
            }
            if adj[bond.a].iter().any(|&(nb, _)| nb == bond.b) {
                return Err(Error::Molecule(format!("duplicate bond {}-{}", bond.a, bond.b)));
            }
            adj[bond.a].push((bond.b, bi));
            adj[bond.b].push((bond.a, bi));
        }

        for (i, atom) in atoms.iter_mut().enumerate() {
            if infer_h[i] {
                atom.n_h = infer_hydrogens(*atom, &adj[i], &bonds)
                    .ok_or_else(|| Error::Molecule(format!("no valid valence for atom {i}")))?;
            }
        }

        let mol = MoleculeGraph {
            ring_atom: vec![false; n],
            ring_bond: vec![false; bonds.len()],
            atoms,
            bonds,
            adj,
        };
        mol.sanitized()
    }

    fn sanitized(mut self) -> Result<Self> {
        self.check_connected()?;
        self.mark_rings();
        self.check_aromaticity()?;
        self.check_valences()?;
        Ok(self)
    }

    fn check_connected(&self) -> Result<()> {
        let n = self.atoms.len();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for &(nb, _) in &self.adj[i] {
                if !seen[nb] {
                    seen[nb] = true;
                    count += 1;
                    stack.push(nb);
                }
            }
        }
        if count != n {
            return Err(Error::Molecule("disconnected graph".into()));
        }
        Ok(())
    }

    /// Marks atoms and bonds on any cycle. A bond is cyclic iff it is not
    /// a bridge.
    fn mark_rings(&mut self) {
        let n = self.atoms.len();
        let mut disc = vec![usize::MAX; n];
        let mut low = vec![0usize; n];
        let mut timer = 0usize;
        // Iterative bridge-finding DFS; (node, parent bond, neighbor cursor).
        let mut stack: Vec<(usize, usize, usize)> = Vec::new();
        for root in 0..n {
            if disc[root] != usize::MAX {
                continue;
            }
            disc[root] = timer;
            low[root] = timer;
            timer += 1;
            stack.push((root, usize::MAX, 0));
            while let Some(top) = stack.last_mut() {
                let (u, pbond) = (top.0, top.1);
                if top.2 < self.adj[u].len() {
                    let (v, bi) = self.adj[u][top.2];
                    top.2 += 1;
                    if bi == pbond {
                        continue;
                    }
                    if disc[v] == usize::MAX {
                        disc[v] = timer;
                        low[v] = timer;
                        timer += 1;
                        stack.push((v, bi, 0));
                    } else {
                        low[u] = low[u].min(disc[v]);
                        // Back edge: closes a cycle.
                        self.ring_bond[bi] = true;
                    }
                } else {
                    stack.pop();
                    if let Some(&(p, _, _)) = stack.last() {
                        low[p] = low[p].min(low[u]);
                        if low[u] <= disc[p] && pbond != usize::MAX {
                            // Not a bridge: the entering edge lies on a cycle.
                            self.ring_bond[pbond] = true;
                        }
                    }
                }
            }
        }
        for (bi, bond) in self.bonds.iter().enumerate() {
            if self.ring_bond[bi] {
                self.ring_atom[bond.a] = true;
                self.ring_atom[bond.b] = true;
            }
        }
    }

    /// Ring-local aromaticity: every aromatic bond must join aromatic
    /// atoms and lie on a 5/6-cycle of aromatic bonds, and every aromatic
    /// atom must lie on such a cycle.
    fn check_aromaticity(&self) -> Result<()> {
        for bond in &self.bonds {
            if bond.order == BondOrder::Aromatic
                && (!self.atoms[bond.a].aromatic || !self.atoms[bond.b].aromatic)
            {
                return Err(Error::Molecule(format!(
                    "aromatic bond {}-{} on non-aromatic atom",
                    bond.a, bond.b
                )));
            }
        }
        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.aromatic && !atom.element.can_be_aromatic() {
                return Err(Error::Molecule(format!(
                    "element {} cannot be aromatic (atom {i})",
                    atom.element.symbol()
                )));
            }
        }

        let n = self.atoms.len();
        let mut on_cycle_atom = vec![false; n];
        let mut on_cycle_bond = vec![false; self.bonds.len()];
        // Aromatic-bond adjacency only.
        let aro_adj: Vec<Vec<(usize, usize)>> = (0..n)
            .map(|i| {
                self.adj[i]
                    .iter()
                    .copied()
                    .filter(|&(_, bi)| self.bonds[bi].order == BondOrder::Aromatic)
                    .collect()
            })
            .collect();
        // Enumerate simple cycles of length 5/6 whose minimum atom is the
        // start; mark members. Path is a stack of (atom, bond-into-atom).
        let mut path: Vec<(usize, usize)> = Vec::new();
        for start in 0..n {
            if aro_adj[start].is_empty() {
                continue;
            }
            path.clear();
            path.push((start, usize::MAX));
            mark_aromatic_cycles(
                start,
                &aro_adj,
                &mut path,
                &mut on_cycle_atom,
                &mut on_cycle_bond,
            );
        }

        for (i, atom) in self.atoms.iter().enumerate() {
            if atom.aromatic && !on_cycle_atom[i] {
                return Err(Error::Molecule(format!(
                    "aromatic atom {i} outside any aromatic 5/6-ring"
                )));
            }
        }
        for (bi, bond) in self.bonds.iter().enumerate() {
            if bond.order == BondOrder::Aromatic && !on_cycle_bond[bi] {
                return Err(Error::Molecule(format!(
                    "aromatic bond {}-{} outside any aromatic 5/6-ring",
                    bond.a, bond.b
                )));
            }
        }
        Ok(())
    }

    fn check_valences(&self) -> Result<()> {
        for i in 0..self.atoms.len() {
            let atom = self.atoms[i];
            let (k, s0) = self.bond_split(i);
            let permitted = atom.element.permitted_valences();
            let h = i32::from(atom.n_h);
            let charge = i32::from(atom.charge);
            if atom.aromatic {
                if k < 2 {
                    return Err(Error::Molecule(format!(
                        "aromatic atom {i} has {k} aromatic bonds"
                    )));
                }
                // One of the ring bonds may act as a double bond.
                let lo = i32::from(k) + i32::from(s0) + h - charge;
                let hi = lo + 1;
                if !permitted.iter().any(|&v| i32::from(v) == lo || i32::from(v) == hi) {
                    return Err(Error::Molecule(format!(
                        "aromatic atom {i} valence window [{lo},{hi}] not permitted for {}",
                        atom.element.symbol()
                    )));
                }
            } else {
                if k > 0 {
                    return Err(Error::Molecule(format!(
                        "aliphatic atom {i} has aromatic bonds"
                    )));
                }
                let total = i32::from(s0) + h - charge;
                if !permitted.iter().any(|&v| i32::from(v) == total) {
                    return Err(Error::Molecule(format!(
                        "atom {i} valence {total} not permitted for {}",
                        atom.element.symbol()
                    )));
                }
            }
        }
        Ok(())
    }

    /// (aromatic bond count, non-aromatic bond order sum) at `i`.
    pub(crate) fn bond_split(&self, i: usize) -> (u8, u8) {
        let mut k = 0u8;
        let mut s = 0u8;
        for &(_, bi) in &self.adj[i] {
            match self.bonds[bi].order.integer() {
                Some(o) => s += o,
                None => k += 1,
            }
        }
        (k, s)
    }
}

fn mark_aromatic_cycles(
    start: usize,
    aro_adj: &[Vec<(usize, usize)>],
    path: &mut Vec<(usize, usize)>,
    on_atom: &mut [bool],
    on_bond: &mut [bool],
) {
    let (u, _) = *path.last().unwrap();
    for &(v, bi) in &aro_adj[u] {
        if v == start && path.len() >= 5 {
            if path.len() <= 6 {
                for &(a, b) in path.iter() {
                    on_atom[a] = true;
                    if b != usize::MAX {
                        on_bond[b] = true;
                    }
                }
                on_bond[bi] = true;
            }
            continue;
        }
        if path.len() >= 6 || v <= start || path.iter().any(|&(a, _)| a == v) {
            continue;
        }
        path.push((v, bi));
        mark_aromatic_cycles(start, aro_adj, path, on_atom, on_bond);
        path.pop();
    }
}

/// Implicit hydrogen count for an atom whose bonds are known.
fn infer_hydrogens(atom: Atom, adj: &[(usize, usize)], bonds: &[Bond]) -> Option<u8> {
    let mut k = 0i32;
    let mut s = 0i32;
    for &(_, bi) in adj {
        match bonds[bi].order.integer() {
            Some(o) => s += i32::from(o),
            None => k += 1,
        }
    }
    implied_hydrogens(atom.element, atom.aromatic, atom.charge, k, s)
}

/// Hydrogen count a bare (non-bracket) atom would receive given `k`
/// aromatic bonds and non-aromatic bond order sum `s0`.
///
/// Aliphatic: the smallest permitted valence at or above the charge-
/// adjusted bond order sum is filled with hydrogens. Aromatic: the
/// default valence minus (ring bonds + one assumed double bond + other
/// bonds), floored at zero, so plain `c` gets one hydrogen in benzene
/// while `o`/`s`/`n` get none in furan, thiophene, and pyridine.
pub(crate) fn implied_hydrogens(
    element: Element,
    aromatic: bool,
    charge: i8,
    k: i32,
    s0: i32,
) -> Option<u8> {
    let charge = i32::from(charge);
    if aromatic {
        let default = i32::from(element.permitted_valences()[0]);
        let base = k + 1 + s0 - charge;
        u8::try_from((default - base).max(0)).ok()
    } else {
        let need = s0 - charge;
        let v = element
            .permitted_valences()
            .iter()
            .map(|&v| i32::from(v))
            .find(|&v| v >= need)?;
        u8::try_from(v - need).ok()
    }
}

// ---------------------------------------------------------------------------
// Accessors
// ---------------------------------------------------------------------------

impl MoleculeGraph {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[Bond] {
        &self.bonds
    }

    pub fn atom(&self, i: usize) -> Atom {
        self.atoms[i]
    }

    /// `(neighbor, bond index)` pairs of `i`.
    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[i]
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adj[i].len()
    }

    pub fn atom_in_ring(&self, i: usize) -> bool {
        self.ring_atom[i]
    }

    pub fn bond_in_ring(&self, bi: usize) -> bool {
        self.ring_bond[bi]
    }

    pub fn bond_between(&self, a: usize, b: usize) -> Option<&Bond> {
        self.adj[a]
            .iter()
            .find(|&&(nb, _)| nb == b)
            .map(|&(_, bi)| &self.bonds[bi])
    }

    /// Total implicit hydrogen count.
    pub fn total_h(&self) -> u32 {
        self.atoms.iter().map(|a| u32::from(a.n_h)).sum()
    }

    /// Heavy-atom counts by element.
    pub fn element_counts(&self) -> BTreeMap<Element, u32> {
        let mut counts = BTreeMap::new();
        for atom in &self.atoms {
            *counts.entry(atom.element).or_insert(0) += 1;
        }
        counts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn atom(element: Element) -> Atom {
        Atom { element, aromatic: false, charge: 0, n_h: 0 }
    }

    #[test]
    fn infers_ethanol_hydrogens() {
        let atoms = vec![atom(Element::C), atom(Element::C), atom(Element::O)];
        let bonds = vec![
            Bond { a: 0, b: 1, order: BondOrder::Single },
            Bond { a: 1, b: 2, order: BondOrder::Single },
        ];
        let m = MoleculeGraph::from_parts(atoms, bonds, &[true, true, true]).unwrap();
        assert_eq!(m.atoms()[0].n_h, 3);
        assert_eq!(m.atoms()[1].n_h, 2);
        assert_eq!(m.atoms()[2].n_h, 1);
    }

    #[test]
    fn rejects_disconnected() {
        let atoms = vec![atom(Element::C), atom(Element::C)];
        let err = MoleculeGraph::from_parts(atoms, vec![], &[true, true]).unwrap_err();
        assert!(matches!(err, Error::Molecule(_)));
    }

    #[test]
    fn rejects_overfilled_carbon() {
        let atoms = vec![
            atom(Element::C),
            atom(Element::C),
            atom(Element::C),
            atom(Element::C),
            atom(Element::C),
            atom(Element::C),
        ];
        let bonds = (1..6)
            .map(|b| Bond { a: 0, b, order: BondOrder::Single })
            .collect();
        let err = MoleculeGraph::from_parts(atoms, bonds, &[true; 6]).unwrap_err();
        assert!(matches!(err, Error::Molecule(_)));
    }

    #[test]
    fn marks_ring_membership() {
        // Cyclopropane with a methyl substituent.
        let atoms = vec![atom(Element::C); 4];
        let bonds = vec![
            Bond { a: 0, b: 1, order: BondOrder::Single },
            Bond { a: 1, b: 2, order: BondOrder::Single },
            Bond { a: 2, b: 0, order: BondOrder::Single },
            Bond { a: 0, b: 3, order: BondOrder::Single },
        ];
        let m = MoleculeGraph::from_parts(atoms, bonds, &[true; 4]).unwrap();
        assert!(m.atom_in_ring(0));
        assert!(m.atom_in_ring(2));
        assert!(!m.atom_in_ring(3));
        assert!(m.bond_in_ring(0));
        assert!(!m.bond_in_ring(3));
    }

    #[test]
    fn rejects_isolated_aromatic_pair() {
        let mut a = atom(Element::C);
        a.aromatic = true;
        let atoms = vec![a, a];
        let bonds = vec![Bond { a: 0, b: 1, order: BondOrder::Aromatic }];
        assert!(MoleculeGraph::from_parts(atoms, bonds, &[true, true]).is_err());
    }

    #[test]
    fn accepts_benzene_ring() {
        let mut a = atom(Element::C);
        a.aromatic = true;
        let atoms = vec![a; 6];
        let bonds = (0..6)
            .map(|i| Bond { a: i, b: (i + 1) % 6, order: BondOrder::Aromatic })
            .collect();
        let m = MoleculeGraph::from_parts(atoms, bonds, &[true; 6]).unwrap();
        for at in m.atoms() {
            assert_eq!(at.n_h, 1);
        }
    }
}
