//! Supported elements with valence and weight data.

use serde::{Deserialize, Serialize};

/// Standard atomic weight of hydrogen; hydrogens exist only implicitly.
pub const HYDROGEN_WEIGHT: f64 = 1.008;

/// The closed element set the kernel understands.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Element {
    B,
    C,
    N,
    O,
    F,
    Si,
    P,
    S,
    Cl,
    Se,
    Br,
    I,
}

impl Element {
    pub const ALL: [Element; 12] = [
        Element::B,
        Element::C,
        Element::N,
        Element::O,
        Element::F,
        Element::Si,
        Element::P,
        Element::S,
        Element::Cl,
        Element::Se,
        Element::Br,
        Element::I,
    ];

    pub fn symbol(self) -> &'static str {
        match self {
            Element::B => "B",
            Element::C => "C",
            Element::N => "N",
            Element::O => "O",
            Element::F => "F",
            Element::Si => "Si",
            Element::P => "P",
            Element::S => "S",
            Element::Cl => "Cl",
            Element::Se => "Se",
            Element::Br => "Br",
            Element::I => "I",
        }
    }

    pub fn from_symbol(sym: &str) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.symbol() == sym)
    }

    pub fn atomic_number(self) -> u8 {
        match self {
            Element::B => 5,
            Element::C => 6,
            Element::N => 7,
            Element::O => 8,
            Element::F => 9,
            Element::Si => 14,
            Element::P => 15,
            Element::S => 16,
            Element::Cl => 17,
            Element::Se => 34,
            Element::Br => 35,
            Element::I => 53,
        }
    }

    pub fn from_atomic_number(n: u8) -> Option<Element> {
        Element::ALL.iter().copied().find(|e| e.atomic_number() == n)
    }

    /// Permitted total valences (bond order sum plus hydrogens, charge
    /// adjusted), in ascending order. The first entry is the default used
    /// for implicit-hydrogen inference.
    pub fn permitted_valences(self) -> &'static [u8] {
        match self {
            Element::B => &[3],
            Element::C | Element::Si => &[4],
            Element::N => &[3],
            Element::O => &[2],
            Element::F | Element::Cl | Element::Br | Element::I => &[1],
            Element::P => &[3, 5],
            Element::S | Element::Se => &[2, 4, 6],
        }
    }

    /// Whether the element may carry the aromatic flag.
    pub fn can_be_aromatic(self) -> bool {
        matches!(
            self,
            Element::B | Element::C | Element::N | Element::O | Element::P | Element::S
        )
    }

    /// Conventional standard atomic weight (IUPAC 2021 abridged values).
    pub fn standard_weight(self) -> f64 {
        match self {
            Element::B => 10.81,
            Element::C => 12.011,
            Element::N => 14.007,
            Element::O => 15.999,
            Element::F => 18.998,
            Element::Si => 28.085,
            Element::P => 30.974,
            Element::S => 32.06,
            Element::Cl => 35.45,
            Element::Se => 78.971,
            Element::Br => 79.904,
            Element::I => 126.904,
        }
    }

    /// Organic-subset elements may appear outside brackets in SMILES.
    pub fn in_organic_subset(self) -> bool {
        !matches!(self, Element::Si | Element::Se)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbol_round_trip() {
        for e in Element::ALL {
            assert_eq!(Element::from_symbol(e.symbol()), Some(e));
            assert_eq!(Element::from_atomic_number(e.atomic_number()), Some(e));
        }
    }

    #[test]
    fn aromatic_subset() {
        assert!(Element::C.can_be_aromatic());
        assert!(Element::S.can_be_aromatic());
        assert!(!Element::F.can_be_aromatic());
        assert!(!Element::Si.can_be_aromatic());
    }
}
