//! SMILES-subset parser.
//!
//! Supported: the organic subset `B C N O P S F Cl Br I` plus aromatic
//! `b c n o p s`, bracket atoms `[<element><Hn>?<+k|-k>?]` (also `[Si]`,
//! `[Se]`), bonds `- = # :`, branches, and ring closures `1`–`9` and
//! `%nn`. Unmarked bonds are single, or aromatic between two aromatic
//! atoms. No stereo descriptors, isotopes, explicit hydrogen nodes,
//! wildcards, or dot-separated fragments.

use std::collections::HashMap;

use crate::chem::element::Element;
use crate::chem::molecule::{Atom, Bond, BondOrder, MoleculeGraph};
use crate::error::{Error, Result};

/// Parses and sanitizes a molecule.
pub fn parse_smiles(input: &str) -> Result<MoleculeGraph> {
    let mut p = Parser::new(input);
    p.run()?;
    if p.atoms.is_empty() {
        return Err(Error::parse(0, "empty molecule"));
    }
    let infer: Vec<bool> = p.infer_h.clone();
    MoleculeGraph::from_parts(p.atoms, p.bonds, &infer)
}

struct Parser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<Atom>,
    infer_h: Vec<bool>,
    bonds: Vec<Bond>,
    /// Attachment point for the next atom or ring digit.
    prev: Option<usize>,
    /// Explicit bond symbol awaiting its right-hand atom or ring digit.
    pending: Option<BondOrder>,
    branch_stack: Vec<usize>,
    /// Ring closure number -> (atom, bond symbol at opening, byte pos).
    open_rings: HashMap<u16, (usize, Option<BondOrder>, usize)>,
}

impl<'a> Parser<'a> {
    fn new(input: &'a str) -> Self {
        Parser {
            bytes: input.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
            infer_h: Vec::new(),
            bonds: Vec::new(),
            prev: None,
            pending: None,
            branch_stack: Vec::new(),
            open_rings: HashMap::new(),
        }
    }

    fn peek(&self) -> Option<u8> {
        self.bytes.get(self.pos).copied()
    }

    fn bump(&mut self) -> Option<u8> {
        let b = self.peek();
        if b.is_some() {
            self.pos += 1;
        }
        b
    }

    fn run(&mut self) -> Result<()> {
        while let Some(c) = self.peek() {
            match c {
                b'-' | b'=' | b'#' | b':' => {
                    if self.pending.is_some() {
                        return Err(Error::parse(self.pos, "consecutive bond symbols"));
                    }
                    if self.prev.is_none() {
                        return Err(Error::parse(self.pos, "bond symbol without preceding atom"));
                    }
                    self.pending = Some(match c {
                        b'-' => BondOrder::Single,
                        b'=' => BondOrder::Double,
                        b'#' => BondOrder::Triple,
                        _ => BondOrder::Aromatic,
                    });
                    self.pos += 1;
                }
                b'(' => {
                    let prev = self
                        .prev
                        .ok_or_else(|| Error::parse(self.pos, "branch before first atom"))?;
                    if self.pending.is_some() {
                        return Err(Error::parse(self.pos, "bond symbol before branch open"));
                    }
                    self.branch_stack.push(prev);
                    self.pos += 1;
                }
                b')' => {
                    if self.pending.is_some() {
                        return Err(Error::parse(self.pos, "dangling bond before branch close"));
                    }
                    let saved = self
                        .branch_stack
                        .pop()
                        .ok_or_else(|| Error::parse(self.pos, "unmatched branch close"))?;
                    self.prev = Some(saved);
                    self.pos += 1;
                }
                b'0'..=b'9' => {
                    let n = u16::from(c - b'0');
                    self.pos += 1;
                    self.ring_digit(n)?;
                }
                b'%' => {
                    self.pos += 1;
                    let d1 = self.digit()?;
                    let d2 = self.digit()?;
                    self.ring_digit(d1 * 10 + d2)?;
                }
                b'[' => {
                    let atom = self.bracket_atom()?;
                    self.push_atom(atom, false)?;
                }
                _ => {
                    let atom = self.organic_atom()?;
                    self.push_atom(atom, true)?;
                }
            }
        }
        if !self.branch_stack.is_empty() {
            return Err(Error::parse(self.pos, "unclosed branch"));
        }
        if self.pending.is_some() {
            return Err(Error::parse(self.pos, "dangling bond symbol"));
        }
        if let Some((&n, &(_, _, pos))) = self.open_rings.iter().min_by_key(|(&n, _)| n) {
            return Err(Error::parse(pos, format!("ring bond {n} left open")));
        }
        Ok(())
    }

    fn digit(&mut self) -> Result<u16> {
        match self.bump() {
            Some(c @ b'0'..=b'9') => Ok(u16::from(c - b'0')),
            _ => Err(Error::parse(self.pos, "expected digit")),
        }
    }

    /// Reads an organic-subset atom at the cursor.
    fn organic_atom(&mut self) -> Result<Atom> {
        let start = self.pos;
        let c = self.bump().unwrap();
        let (element, aromatic) = match c {
            b'C' if self.peek() == Some(b'l') => {
                self.pos += 1;
                (Element::Cl, false)
            }
            b'B' if self.peek() == Some(b'r') => {
                self.pos += 1;
                (Element::Br, false)
            }
            b'B' => (Element::B, false),
            b'C' => (Element::C, false),
            b'N' => (Element::N, false),
            b'O' => (Element::O, false),
            b'P' => (Element::P, false),
            b'S' => (Element::S, false),
            b'F' => (Element::F, false),
            b'I' => (Element::I, false),
            b'b' => (Element::B, true),
            b'c' => (Element::C, true),
            b'n' => (Element::N, true),
            b'o' => (Element::O, true),
            b'p' => (Element::P, true),
            b's' => (Element::S, true),
            _ => return Err(Error::parse(start, format!("unexpected character {:?}", c as char))),
        };
        Ok(Atom { element, aromatic, charge: 0, n_h: 0 })
    }

    /// Reads a bracket atom; the cursor sits on `[`.
    fn bracket_atom(&mut self) -> Result<Atom> {
        let start = self.pos;
        self.pos += 1; // [
        let (element, aromatic) = self.bracket_element(start)?;
        if aromatic && !element.can_be_aromatic() {
            return Err(Error::parse(start, format!("{} cannot be aromatic", element.symbol())));
        }
        let mut n_h = 0u8;
        if self.peek() == Some(b'H') {
            self.pos += 1;
            n_h = 1;
            if let Some(c @ b'0'..=b'9') = self.peek() {
                n_h = c - b'0';
                self.pos += 1;
            }
        }
        let mut charge = 0i8;
        if let Some(sign @ (b'+' | b'-')) = self.peek() {
            self.pos += 1;
            let mut magnitude = 1i8;
            if let Some(c @ b'0'..=b'9') = self.peek() {
                magnitude = (c - b'0') as i8;
                self.pos += 1;
            }
            charge = if sign == b'+' { magnitude } else { -magnitude };
        }
        if self.bump() != Some(b']') {
            return Err(Error::parse(self.pos, "expected ]"));
        }
        Ok(Atom { element, aromatic, charge, n_h })
    }

    fn bracket_element(&mut self, start: usize) -> Result<(Element, bool)> {
        // Two-letter symbols first.
        for sym in ["Cl", "Br", "Si", "Se"] {
            if self.bytes[self.pos..].starts_with(sym.as_bytes()) {
                self.pos += 2;
                return Ok((Element::from_symbol(sym).unwrap(), false));
            }
        }
        let c = self
            .bump()
            .ok_or_else(|| Error::parse(start, "unterminated bracket"))?;
        if c.is_ascii_uppercase() {
            let sym = (c as char).to_string();
            let element = Element::from_symbol(&sym)
                .ok_or_else(|| Error::parse(start, format!("unsupported element {sym:?}")))?;
            Ok((element, false))
        } else if c.is_ascii_lowercase() {
            let sym = (c as char).to_ascii_uppercase().to_string();
            let element = Element::from_symbol(&sym)
                .ok_or_else(|| Error::parse(start, format!("unsupported element {sym:?}")))?;
            Ok((element, true))
        } else {
            Err(Error::parse(start, "expected element symbol"))
        }
    }

    fn push_atom(&mut self, atom: Atom, infer: bool) -> Result<()> {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        self.infer_h.push(infer);
        if let Some(prev) = self.prev {
            let pending = self.pending.take();
            let order = self.resolve_order(prev, idx, pending);
            self.bonds.push(Bond { a: prev, b: idx, order });
        }
        self.prev = Some(idx);
        Ok(())
    }

    fn ring_digit(&mut self, n: u16) -> Result<()> {
        let here = self
            .prev
            .ok_or_else(|| Error::parse(self.pos, "ring digit before first atom"))?;
        let sym = self.pending.take();
        match self.open_rings.remove(&n) {
            None => {
                self.open_rings.insert(n, (here, sym, self.pos));
                Ok(())
            }
            Some((there, open_sym, _)) => {
                if there == here {
                    return Err(Error::parse(self.pos, format!("ring bond {n} closes on itself")));
                }
                let order = match (open_sym, sym) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(Error::parse(
                            self.pos,
                            format!("ring bond {n} has conflicting bond symbols"),
                        ));
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => self.default_order(there, here),
                };
                self.bonds.push(Bond { a: there, b: here, order });
                Ok(())
            }
        }
    }

    fn resolve_order(&self, a: usize, b: usize, sym: Option<BondOrder>) -> BondOrder {
        sym.unwrap_or_else(|| self.default_order(a, b))
    }

    /// Unmarked bonds between two aromatic atoms read as aromatic.
    fn default_order(&self, a: usize, b: usize) -> BondOrder {
        if self.atoms[a].aromatic && self.atoms[b].aromatic {
            BondOrder::Aromatic
        } else {
            BondOrder::Single
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ethanol_hydrogen_counts() {
        let m = parse_smiles("CCO").unwrap();
        let hs: Vec<u8> = m.atoms().iter().map(|a| a.n_h).collect();
        assert_eq!(hs, vec![3, 2, 1]);
    }

    #[test]
    fn benzene_is_aromatic() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert_eq!(m.n_atoms(), 6);
        for a in m.atoms() {
            assert!(a.aromatic);
            assert_eq!(a.element, Element::C);
            assert_eq!(a.n_h, 1);
        }
        for b in m.bonds() {
            assert_eq!(b.order, BondOrder::Aromatic);
        }
        assert_eq!(m.bonds().len(), 6);
    }

    #[test]
    fn branches_and_double_bonds() {
        // Acetic acid.
        let m = parse_smiles("CC(=O)O").unwrap();
        assert_eq!(m.n_atoms(), 4);
        assert_eq!(m.bond_between(1, 2).unwrap().order, BondOrder::Double);
        assert_eq!(m.atoms()[3].n_h, 1);
        assert_eq!(m.total_h(), 4);
    }

    #[test]
    fn bracket_charge_and_h() {
        let m = parse_smiles("[NH4+]").unwrap();
        let a = m.atoms()[0];
        assert_eq!(a.n_h, 4);
        assert_eq!(a.charge, 1);

        let m = parse_smiles("C[O-]").unwrap();
        assert_eq!(m.atoms()[1].charge, -1);
        assert_eq!(m.atoms()[1].n_h, 0);
    }

    #[test]
    fn pyrrole_and_pyridine_nitrogens() {
        let pyridine = parse_smiles("c1ccncc1").unwrap();
        let n = pyridine.atoms().iter().find(|a| a.element == Element::N).unwrap();
        assert_eq!(n.n_h, 0);

        let pyrrole = parse_smiles("c1cc[nH]c1").unwrap();
        let n = pyrrole.atoms().iter().find(|a| a.element == Element::N).unwrap();
        assert_eq!(n.n_h, 1);
    }

    #[test]
    fn thiophene_and_furan() {
        for s in ["c1ccsc1", "c1ccoc1"] {
            let m = parse_smiles(s).unwrap();
            assert_eq!(m.n_atoms(), 5);
            assert_eq!(m.total_h(), 4);
        }
    }

    #[test]
    fn biphenyl_needs_explicit_single() {
        let m = parse_smiles("c1ccccc1-c1ccccc1").unwrap();
        assert_eq!(m.n_atoms(), 12);
        let cross: Vec<_> = m
            .bonds()
            .iter()
            .filter(|b| b.order == BondOrder::Single)
            .collect();
        assert_eq!(cross.len(), 1);
    }

    #[test]
    fn percent_ring_closure() {
        let a = parse_smiles("C%12CCCCC%12").unwrap();
        let b = parse_smiles("C1CCCCC1").unwrap();
        assert_eq!(a.n_atoms(), b.n_atoms());
        assert_eq!(a.bonds().len(), b.bonds().len());
    }

    #[test]
    fn error_positions() {
        assert!(matches!(parse_smiles(""), Err(Error::Parse { .. })));
        assert!(matches!(parse_smiles("C1CC"), Err(Error::Parse { .. })));
        assert!(matches!(parse_smiles("C(C"), Err(Error::Parse { .. })));
        assert!(matches!(parse_smiles("C="), Err(Error::Parse { .. })));
        assert!(matches!(parse_smiles("CC)C"), Err(Error::Parse { .. })));
        assert!(matches!(parse_smiles("C[Xe]C"), Err(Error::Parse { .. })));
        assert!(matches!(parse_smiles("CC(C)(C)(C)C"), Err(Error::Molecule(_))));
    }

    #[test]
    fn rejects_unsupported_notation() {
        for s in ["C.C", "C@C", "[13C]", "C/C=C/C", "c1ccccc1c"] {
            assert!(parse_smiles(s).is_err(), "{s} should fail");
        }
    }

    #[test]
    fn kekule_input_stays_kekule() {
        let m = parse_smiles("C1=CC=CC=C1").unwrap();
        assert!(m.atoms().iter().all(|a| !a.aromatic));
        let doubles = m
            .bonds()
            .iter()
            .filter(|b| b.order == BondOrder::Double)
            .count();
        assert_eq!(doubles, 3);
    }
}
