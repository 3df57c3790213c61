//! SMARTS-subset patterns for template matching.
//!
//! Atom primitives: `#n`, element symbols (case selects aromaticity),
//! `a`/`A`, `Hn`, `Dn`, `+k`/`-k`, and `R`; combined with `!` negation,
//! `&`/juxtaposition conjunction, `,` disjunction, and `;` low-precedence
//! conjunction (precedence `!` > `&` > `,` > `;`). Bracket atoms may
//! carry a trailing atom map `:n`. Bonds: `-`, `=`, `#`, `:`, `~`, or
//! unwritten (single-or-aromatic). Branches and ring closures follow
//! SMILES syntax. Patterns are single-component.

use std::collections::HashMap;

use crate::chem::element::Element;
use crate::chem::molecule::{BondOrder, MoleculeGraph};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtomPrimitive {
    /// `#n`: element by atomic number, either aromaticity.
    AtomicNum(u8),
    /// Element symbol; uppercase demands aliphatic, lowercase aromatic.
    Elem { element: Element, aromatic: bool },
    /// `a`
    Aromatic,
    /// `A`
    Aliphatic,
    /// `Hn`: implicit hydrogen count equals `n`.
    HCount(u8),
    /// `Dn`: heavy-atom degree equals `n`.
    Degree(u8),
    /// `+k` / `-k`: formal charge equals `k`.
    Charge(i8),
    /// `R`: member of at least one ring.
    InRing,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AtomExpr {
    Primitive(AtomPrimitive),
    Not(Box<AtomExpr>),
    And(Vec<AtomExpr>),
    Or(Vec<AtomExpr>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BondExpr {
    /// Unwritten bond: single or aromatic.
    Default,
    Order(BondOrder),
    /// `~`
    Any,
}

#[derive(Clone, Debug)]
pub struct PatternAtom {
    pub expr: AtomExpr,
    pub map: Option<u8>,
}

#[derive(Clone, Copy, Debug)]
pub struct PatternBond {
    pub a: usize,
    pub b: usize,
    pub expr: BondExpr,
}

/// A parsed, connected pattern graph.
#[derive(Clone, Debug)]
pub struct Pattern {
    atoms: Vec<PatternAtom>,
    bonds: Vec<PatternBond>,
    adj: Vec<Vec<(usize, usize)>>,
}

impl Pattern {
    pub fn n_atoms(&self) -> usize {
        self.atoms.len()
    }

    pub fn atoms(&self) -> &[PatternAtom] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[PatternBond] {
        &self.bonds
    }

    pub fn neighbors(&self, i: usize) -> &[(usize, usize)] {
        &self.adj[i]
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

impl AtomPrimitive {
    pub fn matches(&self, mol: &MoleculeGraph, i: usize) -> bool {
        let atom = mol.atom(i);
        match *self {
            AtomPrimitive::AtomicNum(n) => atom.element.atomic_number() == n,
            AtomPrimitive::Elem { element, aromatic } => {
                atom.element == element && atom.aromatic == aromatic
            }
            AtomPrimitive::Aromatic => atom.aromatic,
            AtomPrimitive::Aliphatic => !atom.aromatic,
            AtomPrimitive::HCount(n) => atom.n_h == n,
            AtomPrimitive::Degree(n) => mol.degree(i) == usize::from(n),
            AtomPrimitive::Charge(c) => atom.charge == c,
            AtomPrimitive::InRing => mol.atom_in_ring(i),
        }
    }
}

impl AtomExpr {
    pub fn matches(&self, mol: &MoleculeGraph, i: usize) -> bool {
        match self {
            AtomExpr::Primitive(p) => p.matches(mol, i),
            AtomExpr::Not(e) => !e.matches(mol, i),
            AtomExpr::And(es) => es.iter().all(|e| e.matches(mol, i)),
            AtomExpr::Or(es) => es.iter().any(|e| e.matches(mol, i)),
        }
    }
}

impl BondExpr {
    pub fn matches(&self, order: BondOrder) -> bool {
        match self {
            BondExpr::Default => matches!(order, BondOrder::Single | BondOrder::Aromatic),
            BondExpr::Order(o) => order == *o,
            BondExpr::Any => true,
        }
    }
}

// ---------------------------------------------------------------------------
// Parser
// ---------------------------------------------------------------------------

/// Parses a single-component pattern.
pub fn parse_smarts(input: &str) -> Result<Pattern> {
    let mut p = PatternParser::new(input);
    p.run()?;
    if p.atoms.is_empty() {
        return Err(Error::parse(0, "empty pattern"));
    }
    let n = p.atoms.len();
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (bi, bond) in p.bonds.iter().enumerate() {
        adj[bond.a].push((bond.b, bi));
        adj[bond.b].push((bond.a, bi));
    }
    // Connectivity.
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    let mut count = 1;
    while let Some(u) = stack.pop() {
        for &(v, _) in &adj[u] {
            if !seen[v] {
                seen[v] = true;
                count += 1;
                stack.push(v);
            }
        }
    }
    if count != n {
        return Err(Error::parse(0, "pattern is not a single component"));
    }
    Ok(Pattern { atoms: p.atoms, bonds: p.bonds, adj })
}

struct PatternParser<'a> {
    bytes: &'a [u8],
    pos: usize,
    atoms: Vec<PatternAtom>,
    bonds: Vec<PatternBond>,
    prev: Option<usize>,
    pending: Option<BondExpr>,
    branch_stack: Vec<usize>,
    open_rings: HashMap<u16, (usize, Option<BondExpr>, usize)>,
}

impl<'a> PatternParser<'a> {
    fn new(input: &'a str) -> Self {
        PatternParser {
            bytes: input.as_bytes(),
            pos: 0,
            atoms: Vec::new(),
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

    fn run(&mut self) -> Result<()> {
        while let Some(c) = self.peek() {
            match c {
                b'-' | b'=' | b'#' | b':' | b'~' => {
                    // Outside brackets `#` is always the triple bond;
                    // atomic-number primitives exist only inside brackets.
                    if self.pending.is_some() {
                        return Err(Error::parse(self.pos, "consecutive bond symbols"));
                    }
                    if self.prev.is_none() {
                        return Err(Error::parse(self.pos, "bond symbol without preceding atom"));
                    }
                    self.pending = Some(match c {
                        b'-' => BondExpr::Order(BondOrder::Single),
                        b'=' => BondExpr::Order(BondOrder::Double),
                        b'#' => BondExpr::Order(BondOrder::Triple),
                        b':' => BondExpr::Order(BondOrder::Aromatic),
                        _ => BondExpr::Any,
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
                    self.push_atom(atom);
                }
                _ => {
                    let expr = self.bare_atom()?;
                    self.push_atom(PatternAtom { expr, map: None });
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
        match self.peek() {
            Some(c @ b'0'..=b'9') => {
                self.pos += 1;
                Ok(u16::from(c - b'0'))
            }
            _ => Err(Error::parse(self.pos, "expected digit")),
        }
    }

    fn number(&mut self) -> Option<u32> {
        let start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == start {
            return None;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
    }

    fn push_atom(&mut self, atom: PatternAtom) {
        let idx = self.atoms.len();
        self.atoms.push(atom);
        if let Some(prev) = self.prev {
            let expr = self.pending.take().unwrap_or(BondExpr::Default);
            self.bonds.push(PatternBond { a: prev, b: idx, expr });
        }
        self.prev = Some(idx);
    }

    fn ring_digit(&mut self, n: u16) -> Result<()> {
        let here = self
            .prev
            .ok_or_else(|| Error::parse(self.pos, "ring digit before first atom"))?;
        let expr = self.pending.take();
        match self.open_rings.remove(&n) {
            None => {
                self.open_rings.insert(n, (here, expr, self.pos));
                Ok(())
            }
            Some((there, open_expr, _)) => {
                if there == here {
                    return Err(Error::parse(self.pos, format!("ring bond {n} closes on itself")));
                }
                let resolved = match (open_expr, expr) {
                    (Some(a), Some(b)) if a != b => {
                        return Err(Error::parse(
                            self.pos,
                            format!("ring bond {n} has conflicting bond symbols"),
                        ));
                    }
                    (Some(a), _) | (None, Some(a)) => a,
                    (None, None) => BondExpr::Default,
                };
                self.bonds.push(PatternBond { a: there, b: here, expr: resolved });
                Ok(())
            }
        }
    }

    /// Bare (non-bracket) atom: element symbol only.
    fn bare_atom(&mut self) -> Result<AtomExpr> {
        let start = self.pos;
        let c = self.peek().unwrap();
        self.pos += 1;
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
        Ok(AtomExpr::Primitive(AtomPrimitive::Elem { element, aromatic }))
    }

    /// Bracket atom: expression plus optional trailing `:map`.
    fn bracket_atom(&mut self) -> Result<PatternAtom> {
        self.pos += 1; // [
        let expr = self.expr_semi()?;
        let mut map = None;
        if self.peek() == Some(b':') {
            self.pos += 1;
            let n = self
                .number()
                .ok_or_else(|| Error::parse(self.pos, "expected atom map number"))?;
            let n = u8::try_from(n).map_err(|_| Error::parse(self.pos, "atom map too large"))?;
            map = Some(n);
        }
        if self.peek() != Some(b']') {
            return Err(Error::parse(self.pos, "expected ]"));
        }
        self.pos += 1;
        Ok(PatternAtom { expr, map })
    }

    fn expr_semi(&mut self) -> Result<AtomExpr> {
        let mut parts = vec![self.expr_or()?];
        while self.peek() == Some(b';') {
            self.pos += 1;
            parts.push(self.expr_or()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { AtomExpr::And(parts) })
    }

    fn expr_or(&mut self) -> Result<AtomExpr> {
        let mut parts = vec![self.expr_and()?];
        while self.peek() == Some(b',') {
            self.pos += 1;
            parts.push(self.expr_and()?);
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { AtomExpr::Or(parts) })
    }

    fn expr_and(&mut self) -> Result<AtomExpr> {
        let mut parts = vec![self.expr_not()?];
        loop {
            match self.peek() {
                Some(b'&') => {
                    self.pos += 1;
                    parts.push(self.expr_not()?);
                }
                Some(c) if starts_primitive(c) => parts.push(self.expr_not()?),
                _ => break,
            }
        }
        Ok(if parts.len() == 1 { parts.pop().unwrap() } else { AtomExpr::And(parts) })
    }

    fn expr_not(&mut self) -> Result<AtomExpr> {
        if self.peek() == Some(b'!') {
            self.pos += 1;
            return Ok(AtomExpr::Not(Box::new(self.expr_not()?)));
        }
        self.primitive()
    }

    fn primitive(&mut self) -> Result<AtomExpr> {
        let start = self.pos;
        let c = self
            .peek()
            .ok_or_else(|| Error::parse(start, "unterminated bracket"))?;
        let prim = match c {
            b'#' => {
                self.pos += 1;
                let n = self
                    .number()
                    .ok_or_else(|| Error::parse(self.pos, "expected atomic number"))?;
                let n = u8::try_from(n).map_err(|_| Error::parse(start, "atomic number too large"))?;
                if Element::from_atomic_number(n).is_none() {
                    return Err(Error::parse(start, format!("unsupported atomic number {n}")));
                }
                AtomPrimitive::AtomicNum(n)
            }
            b'a' => {
                self.pos += 1;
                AtomPrimitive::Aromatic
            }
            b'A' => {
                self.pos += 1;
                AtomPrimitive::Aliphatic
            }
            b'H' => {
                self.pos += 1;
                let n = self.number().unwrap_or(1);
                AtomPrimitive::HCount(
                    u8::try_from(n).map_err(|_| Error::parse(start, "H count too large"))?,
                )
            }
            b'D' => {
                self.pos += 1;
                let n = self.number().unwrap_or(1);
                AtomPrimitive::Degree(
                    u8::try_from(n).map_err(|_| Error::parse(start, "degree too large"))?,
                )
            }
            b'R' => {
                self.pos += 1;
                AtomPrimitive::InRing
            }
            b'+' | b'-' => {
                self.pos += 1;
                let magnitude = self.number().unwrap_or(1);
                let magnitude =
                    i8::try_from(magnitude).map_err(|_| Error::parse(start, "charge too large"))?;
                AtomPrimitive::Charge(if c == b'+' { magnitude } else { -magnitude })
            }
            _ => {
                // Element symbol, two-letter first.
                for (sym, element) in
                    [("Cl", Element::Cl), ("Br", Element::Br), ("Si", Element::Si), ("Se", Element::Se)]
                {
                    if self.bytes[self.pos..].starts_with(sym.as_bytes()) {
                        self.pos += 2;
                        return Ok(AtomExpr::Primitive(AtomPrimitive::Elem {
                            element,
                            aromatic: false,
                        }));
                    }
                }
                if c.is_ascii_uppercase() {
                    let sym = (c as char).to_string();
                    let element = Element::from_symbol(&sym)
                        .ok_or_else(|| Error::parse(start, format!("unsupported element {sym:?}")))?;
                    self.pos += 1;
                    AtomPrimitive::Elem { element, aromatic: false }
                } else if c.is_ascii_lowercase() {
                    let sym = (c as char).to_ascii_uppercase().to_string();
                    let element = Element::from_symbol(&sym)
                        .ok_or_else(|| Error::parse(start, format!("unsupported element {sym:?}")))?;
                    if !element.can_be_aromatic() {
                        return Err(Error::parse(start, format!("{sym} cannot be aromatic")));
                    }
                    self.pos += 1;
                    AtomPrimitive::Elem { element, aromatic: true }
                } else {
                    return Err(Error::parse(start, format!("unexpected character {:?}", c as char)));
                }
            }
        };
        Ok(AtomExpr::Primitive(prim))
    }
}

/// Whether `c` can begin an atom primitive inside brackets (for implicit
/// conjunction).
fn starts_primitive(c: u8) -> bool {
    matches!(c, b'#' | b'!' | b'+' | b'-') || c.is_ascii_alphabetic()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_plain_chain() {
        let p = parse_smarts("CC").unwrap();
        assert_eq!(p.n_atoms(), 2);
        assert_eq!(p.bonds().len(), 1);
        assert_eq!(p.bonds()[0].expr, BondExpr::Default);
    }

    #[test]
    fn parses_bracket_conjunction() {
        let p = parse_smarts("[N;H2:2]").unwrap();
        assert_eq!(p.atoms()[0].map, Some(2));
        match &p.atoms()[0].expr {
            AtomExpr::And(parts) => {
                assert_eq!(parts.len(), 2);
                assert_eq!(
                    parts[0],
                    AtomExpr::Primitive(AtomPrimitive::Elem { element: Element::N, aromatic: false })
                );
                assert_eq!(parts[1], AtomExpr::Primitive(AtomPrimitive::HCount(2)));
            }
            other => panic!("expected And, got {other:?}"),
        }
    }

    #[test]
    fn parses_negation_and_disjunction() {
        let p = parse_smarts("[!C;R]").unwrap();
        assert!(matches!(&p.atoms()[0].expr, AtomExpr::And(_)));
        let p = parse_smarts("[C,N]").unwrap();
        assert!(matches!(&p.atoms()[0].expr, AtomExpr::Or(_)));
        let p = parse_smarts("[Br,Cl,I]").unwrap();
        match &p.atoms()[0].expr {
            AtomExpr::Or(parts) => assert_eq!(parts.len(), 3),
            other => panic!("expected Or, got {other:?}"),
        }
    }

    #[test]
    fn parses_ring_pattern() {
        let p = parse_smarts("c1ccccc1").unwrap();
        assert_eq!(p.n_atoms(), 6);
        assert_eq!(p.bonds().len(), 6);
    }

    #[test]
    fn parses_bond_exprs() {
        let p = parse_smarts("C~[C:1]=O").unwrap();
        assert_eq!(p.bonds()[0].expr, BondExpr::Any);
        assert_eq!(p.bonds()[1].expr, BondExpr::Order(BondOrder::Double));
        assert_eq!(p.atoms()[1].map, Some(1));
    }

    #[test]
    fn parses_atomic_number() {
        let p = parse_smarts("[#6]").unwrap();
        assert_eq!(p.atoms()[0].expr, AtomExpr::Primitive(AtomPrimitive::AtomicNum(6)));
        assert!(parse_smarts("[#99]").is_err());
    }

    #[test]
    fn rejects_malformed() {
        assert!(parse_smarts("").is_err());
        assert!(parse_smarts("[C").is_err());
        assert!(parse_smarts("[]").is_err());
        assert!(parse_smarts("C1CC").is_err());
        assert!(parse_smarts("[$(CC)]").is_err());
        assert!(parse_smarts("C.C").is_err());
    }

    #[test]
    fn charge_primitives() {
        let p = parse_smarts("[N+]").unwrap();
        match &p.atoms()[0].expr {
            AtomExpr::And(parts) => {
                assert_eq!(parts[1], AtomExpr::Primitive(AtomPrimitive::Charge(1)));
            }
            other => panic!("expected And, got {other:?}"),
        }
        let p = parse_smarts("[N+0]").unwrap();
        match &p.atoms()[0].expr {
            AtomExpr::And(parts) => {
                assert_eq!(parts[1], AtomExpr::Primitive(AtomPrimitive::Charge(0)));
            }
            other => panic!("expected And, got {other:?}"),
        }
    }
}
