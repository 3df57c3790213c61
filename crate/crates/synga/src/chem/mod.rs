//! Minimal cheminformatics kernel: molecular graphs, a SMILES subset, a
//! SMARTS subset, reaction-template rewriting, count fingerprints, and
//! scaffolds.
//!
//! The kernel is deliberately small. It supports the element set
//! B, C, N, O, F, Si, P, S, Cl, Se, Br, I (aromatic b, c, n, o, p, s),
//! single/double/triple/aromatic bonds, branches, ring closures, and
//! bracket atoms carrying explicit hydrogen counts and formal charges.
//! There is no stereochemistry, no isotopes, and no multi-fragment input.
//! Aromaticity is notational: lowercase input marks atoms aromatic and
//! sanitization checks each one sits in a five- or six-membered ring of
//! aromatic bonds. Kekule-form input is kept as written, not aromatized.

mod canon;
mod element;
mod fingerprint;
mod matcher;
mod molecule;
mod reaction;
mod scaffold;
mod smarts;
mod smiles;

pub use canon::{canonical_key, CanonicalKey};
pub use element::Element;
pub use fingerprint::{morgan_count_fp, tanimoto, CountFingerprint};
pub use matcher::match_pattern;
pub use molecule::{Atom, Bond, BondOrder, MoleculeGraph};
pub use reaction::{
    apply_reaction, parse_reaction, parse_template_file, ReactionTemplate, TemplateProduct,
};
pub use scaffold::murcko_scaffold;
pub use smarts::{parse_smarts, AtomExpr, AtomPrimitive, BondExpr, Pattern};
pub use smiles::parse_smiles;

/// Standard molecular weight in daltons: heavy atoms plus implicit
/// hydrogens at 1.008 Da each.
pub fn molecular_weight(mol: &MoleculeGraph) -> f64 {
    mol.atoms()
        .iter()
        .map(|a| a.element.standard_weight() + f64::from(a.n_h) * element::HYDROGEN_WEIGHT)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn methane_weight() {
        let m = parse_smiles("C").unwrap();
        assert!((molecular_weight(&m) - 16.04).abs() < 0.01);
    }

    #[test]
    fn ethanol_weight() {
        let m = parse_smiles("CCO").unwrap();
        assert!((molecular_weight(&m) - 46.07).abs() < 0.01);
    }

    #[test]
    fn benzene_weight() {
        let m = parse_smiles("c1ccccc1").unwrap();
        assert!((molecular_weight(&m) - 78.11).abs() < 0.01);
    }
}
