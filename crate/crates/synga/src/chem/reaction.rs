//! Reaction templates and graph rewriting.
//!
//! A template is `lhs>>rhs` where the left side holds one or two
//! `.`-separated patterns and the right side one concrete product
//! pattern. Rewriting deletes matched-but-unmapped reactant atoms and
//! mapped atoms absent from the product, creates unmapped product atoms,
//! and rebuilds every bond among product atoms from the product side
//! alone; bonds to unmatched atoms are preserved. Mapped atoms take
//! element and aromaticity from the product pattern, keep their charge
//! unless the product writes one, and have hydrogens recomputed unless
//! the product writes an explicit count. Invalid or disconnected results
//! are dropped silently; survivors are deduplicated and sorted by
//! canonical key.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::chem::canon::{canonical_key, CanonicalKey};
use crate::chem::element::Element;
use crate::chem::matcher::match_pattern;
use crate::chem::molecule::{Atom, Bond, BondOrder, MoleculeGraph};
use crate::chem::smarts::{parse_smarts, AtomExpr, AtomPrimitive, BondExpr, Pattern};
use crate::error::{Error, Result};

// ---------------------------------------------------------------------------
// Template types
// ---------------------------------------------------------------------------

/// One atom of a compiled product side.
#[derive(Clone, Copy, Debug)]
pub struct ProductAtomSpec {
    pub element: Element,
    pub aromatic: bool,
    /// Written charge; `None` preserves the reactant charge (new atoms: 0).
    pub charge: Option<i8>,
    /// Written hydrogen count; `None` recomputes from valence.
    pub n_h: Option<u8>,
    pub map: Option<u8>,
}

/// Compiled concrete product side of a template.
#[derive(Clone, Debug)]
pub struct TemplateProduct {
    atoms: Vec<ProductAtomSpec>,
    bonds: Vec<(usize, usize, BondOrder)>,
}

impl TemplateProduct {
    pub fn atoms(&self) -> &[ProductAtomSpec] {
        &self.atoms
    }

    pub fn bonds(&self) -> &[(usize, usize, BondOrder)] {
        &self.bonds
    }
}

/// A named rewrite rule with one or two reactant patterns.
#[derive(Clone, Debug)]
pub struct ReactionTemplate {
    name: String,
    smirks: String,
    reactants: Vec<Pattern>,
    product: TemplateProduct,
}

impl ReactionTemplate {
    pub fn name(&self) -> &str {
        &self.name
    }

    /// The template source string (`lhs>>rhs`).
    pub fn smirks(&self) -> &str {
        &self.smirks
    }

    /// Number of reactant slots (1 or 2).
    pub fn arity(&self) -> usize {
        self.reactants.len()
    }

    pub fn reactant(&self, slot: usize) -> &Pattern {
        &self.reactants[slot]
    }

    pub fn product(&self) -> &TemplateProduct {
        &self.product
    }

    /// Whether `mol` matches the pattern in `slot`.
    pub fn slot_matches(&self, slot: usize, mol: &MoleculeGraph) -> bool {
        !match_pattern(&self.reactants[slot], mol).is_empty()
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parses `smirks` (`lhs>>rhs`) into a template named `name`.
pub fn parse_reaction(name: &str, smirks: &str) -> Result<ReactionTemplate> {
    let name = name.trim();
    if name.is_empty() {
        return Err(Error::Catalog("template name is empty".into()));
    }
    let Some((lhs, rhs)) = smirks.split_once(">>") else {
        return Err(Error::parse(0, "expected lhs>>rhs"));
    };
    if lhs.contains('>') || rhs.contains('>') {
        return Err(Error::parse(0, "expected exactly one >> separator"));
    }

    let reactants: Vec<Pattern> =
        lhs.split('.').map(parse_smarts).collect::<Result<_>>()?;
    if reactants.is_empty() || reactants.len() > 2 {
        return Err(Error::Catalog(format!(
            "template {name:?} has {} reactant patterns; expected 1 or 2",
            reactants.len()
        )));
    }
    if rhs.contains('.') {
        return Err(Error::Catalog(format!(
            "template {name:?} must produce a single component"
        )));
    }

    // Reactant maps must be unique across both patterns.
    let mut reactant_maps = HashMap::new();
    for (slot, pattern) in reactants.iter().enumerate() {
        for (i, atom) in pattern.atoms().iter().enumerate() {
            if let Some(m) = atom.map {
                if reactant_maps.insert(m, (slot, i)).is_some() {
                    return Err(Error::Catalog(format!(
                        "template {name:?} repeats reactant map {m}"
                    )));
                }
            }
        }
    }

    let product_pattern = parse_smarts(rhs)?;
    let product = compile_product(name, &product_pattern, &reactant_maps)?;

    Ok(ReactionTemplate {
        name: name.to_string(),
        smirks: smirks.to_string(),
        reactants,
        product,
    })
}

/// Flattens a product-side pattern into concrete atom and bond specs.
fn compile_product(
    name: &str,
    pattern: &Pattern,
    reactant_maps: &HashMap<u8, (usize, usize)>,
) -> Result<TemplateProduct> {
    let mut atoms = Vec::with_capacity(pattern.n_atoms());
    let mut seen_maps = HashMap::new();
    for (i, atom) in pattern.atoms().iter().enumerate() {
        let mut element = None;
        let mut aromatic = false;
        let mut charge = None;
        let mut n_h = None;
        let mut prims = Vec::new();
        flatten_product_expr(name, &atom.expr, &mut prims)?;
        for prim in prims {
            match prim {
                AtomPrimitive::Elem { element: e, aromatic: a } => {
                    if element.replace(e).is_some() {
                        return Err(Error::Catalog(format!(
                            "template {name:?}: product atom {i} written twice"
                        )));
                    }
                    aromatic = a;
                }
                AtomPrimitive::Charge(c) => {
                    if charge.replace(c).is_some() {
                        return Err(Error::Catalog(format!(
                            "template {name:?}: product atom {i} has two charges"
                        )));
                    }
                }
                AtomPrimitive::HCount(h) => {
                    if n_h.replace(h).is_some() {
                        return Err(Error::Catalog(format!(
                            "template {name:?}: product atom {i} has two H counts"
                        )));
                    }
                }
                other => {
                    return Err(Error::Catalog(format!(
                        "template {name:?}: product atom {i} uses non-concrete primitive {other:?}"
                    )));
                }
            }
        }
        let element = element.ok_or_else(|| {
            Error::Catalog(format!("template {name:?}: product atom {i} lacks an element"))
        })?;
        if let Some(m) = atom.map {
            if !reactant_maps.contains_key(&m) {
                return Err(Error::Catalog(format!(
                    "template {name:?}: product map {m} missing from reactants"
                )));
            }
            if seen_maps.insert(m, i).is_some() {
                return Err(Error::Catalog(format!(
                    "template {name:?} repeats product map {m}"
                )));
            }
        }
        atoms.push(ProductAtomSpec { element, aromatic, charge, n_h, map: atom.map });
    }

    let mut bonds = Vec::with_capacity(pattern.bonds().len());
    for bond in pattern.bonds() {
        let order = match bond.expr {
            BondExpr::Order(o) => o,
            BondExpr::Default => {
                if atoms[bond.a].aromatic && atoms[bond.b].aromatic {
                    BondOrder::Aromatic
                } else {
                    BondOrder::Single
                }
            }
            BondExpr::Any => {
                return Err(Error::Catalog(format!(
                    "template {name:?}: product bonds must be concrete"
                )));
            }
        };
        bonds.push((bond.a, bond.b, order));
    }
    Ok(TemplateProduct { atoms, bonds })
}

fn flatten_product_expr(
    name: &str,
    expr: &AtomExpr,
    out: &mut Vec<AtomPrimitive>,
) -> Result<()> {
    match expr {
        AtomExpr::Primitive(p) => {
            out.push(p.clone());
            Ok(())
        }
        AtomExpr::And(parts) => {
            for part in parts {
                flatten_product_expr(name, part, out)?;
            }
            Ok(())
        }
        AtomExpr::Not(_) | AtomExpr::Or(_) => Err(Error::Catalog(format!(
            "template {name:?}: product atoms cannot use !, `,`, or `;` logic"
        ))),
    }
}

/// Parses a template file: one `name<TAB>lhs>>rhs` per line, `#`
/// comments and blank lines skipped. Names must be unique.
pub fn parse_template_file(path: &Path) -> Result<Vec<ReactionTemplate>> {
    let text = std::fs::read_to_string(path)?;
    let mut templates: Vec<ReactionTemplate> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, smirks)) = line.split_once('\t') else {
            return Err(Error::Catalog(format!(
                "{}:{}: expected name<TAB>template",
                path.display(),
                lineno + 1
            )));
        };
        let template = parse_reaction(name, smirks.trim()).map_err(|e| {
            let mut msg = String::new();
            let _ = write!(msg, "{}:{}: {e}", path.display(), lineno + 1);
            Error::Catalog(msg)
        })?;
        if templates.iter().any(|t| t.name() == template.name()) {
            return Err(Error::Catalog(format!(
                "{}:{}: duplicate template name {:?}",
                path.display(),
                lineno + 1,
                template.name()
            )));
        }
        templates.push(template);
    }
    Ok(templates)
}

// ---------------------------------------------------------------------------
// Rewriting
// ---------------------------------------------------------------------------

/// Applies `template` to the given reactants (one per slot for unary
/// templates; binary templates additionally try the swapped order) and
/// returns all distinct valid products sorted by canonical key.
pub fn apply_reaction(
    template: &ReactionTemplate,
    reactants: &[&MoleculeGraph],
) -> Result<Vec<(CanonicalKey, MoleculeGraph)>> {
    if reactants.len() != template.arity() {
        return Err(Error::Catalog(format!(
            "template {:?} takes {} reactants, got {}",
            template.name(),
            template.arity(),
            reactants.len()
        )));
    }
    let mut out: Vec<(CanonicalKey, MoleculeGraph)> = Vec::new();
    let orders: &[&[usize]] =
        if template.arity() == 2 { &[&[0, 1], &[1, 0]] } else { &[&[0]] };
    for order in orders {
        let mols: Vec<&MoleculeGraph> = order.iter().map(|&i| reactants[i]).collect();
        apply_in_order(template, &mols, &mut out);
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out.dedup_by(|a, b| a.0 == b.0);
    Ok(out)
}

/// Applies with `mols[slot]` assigned to reactant pattern `slot`.
fn apply_in_order(
    template: &ReactionTemplate,
    mols: &[&MoleculeGraph],
    out: &mut Vec<(CanonicalKey, MoleculeGraph)>,
) {
    let match_sets: Vec<Vec<Vec<usize>>> = (0..template.arity())
        .map(|slot| match_pattern(&template.reactants[slot], mols[slot]))
        .collect();
    if match_sets.iter().any(|m| m.is_empty()) {
        return;
    }

    let offsets: Vec<usize> = {
        let mut acc = 0;
        mols.iter()
            .map(|m| {
                let o = acc;
                acc += m.n_atoms();
                o
            })
            .collect()
    };
    let total: usize = mols.iter().map(|m| m.n_atoms()).sum();

    // Cartesian product over per-slot matches.
    let mut picks = vec![0usize; template.arity()];
    loop {
        rewrite_one(template, mols, &offsets, total, &match_sets, &picks, out);
        // Advance the odometer.
        let mut slot = 0;
        loop {
            picks[slot] += 1;
            if picks[slot] < match_sets[slot].len() {
                break;
            }
            picks[slot] = 0;
            slot += 1;
            if slot == template.arity() {
                return;
            }
        }
    }
}

fn rewrite_one(
    template: &ReactionTemplate,
    mols: &[&MoleculeGraph],
    offsets: &[usize],
    total: usize,
    match_sets: &[Vec<Vec<usize>>],
    picks: &[usize],
    out: &mut Vec<(CanonicalKey, MoleculeGraph)>,
) {
    // Global-index bookkeeping across the (disjoint) reactant graphs.
    let mut matched = vec![false; total];
    let mut map_to_global: HashMap<u8, usize> = HashMap::new();
    for (slot, pattern) in template.reactants.iter().enumerate() {
        let mapping = &match_sets[slot][picks[slot]];
        for (p, &mol_atom) in mapping.iter().enumerate() {
            let g = offsets[slot] + mol_atom;
            matched[g] = true;
            if let Some(m) = pattern.atoms()[p].map {
                map_to_global.insert(m, g);
            }
        }
    }
    let product_maps: Vec<u8> =
        template.product.atoms.iter().filter_map(|a| a.map).collect();
    // Kept: unmatched atoms, plus mapped atoms the product retains.
    let mut kept = vec![false; total];
    for g in 0..total {
        kept[g] = !matched[g];
    }
    for m in &product_maps {
        kept[map_to_global[m]] = true;
    }

    let mut new_index = vec![usize::MAX; total];
    let mut atoms: Vec<Atom> = Vec::new();
    let mut infer = Vec::new();
    for (slot, mol) in mols.iter().enumerate() {
        for (i, atom) in mol.atoms().iter().enumerate() {
            let g = offsets[slot] + i;
            if kept[g] {
                new_index[g] = atoms.len();
                atoms.push(*atom);
                infer.push(false);
            }
        }
    }

    // Overlay product specs onto mapped atoms; append created atoms.
    let mut product_index = vec![usize::MAX; template.product.atoms.len()];
    for (j, spec) in template.product.atoms.iter().enumerate() {
        match spec.map {
            Some(m) => {
                let g = map_to_global[&m];
                let idx = new_index[g];
                let atom = &mut atoms[idx];
                atom.element = spec.element;
                atom.aromatic = spec.aromatic;
                if let Some(c) = spec.charge {
                    atom.charge = c;
                }
                match spec.n_h {
                    Some(h) => atom.n_h = h,
                    None => infer[idx] = true,
                }
                product_index[j] = idx;
            }
            None => {
                product_index[j] = atoms.len();
                atoms.push(Atom {
                    element: spec.element,
                    aromatic: spec.aromatic,
                    charge: spec.charge.unwrap_or(0),
                    n_h: spec.n_h.unwrap_or(0),
                });
                infer.push(spec.n_h.is_none());
            }
        }
    }

    // Carried bonds: both endpoints kept, except pairs the product side
    // owns (both endpoints mapped into the product).
    let mut in_product = vec![false; total];
    for m in &product_maps {
        in_product[map_to_global[m]] = true;
    }
    let mut bonds: Vec<Bond> = Vec::new();
    for (slot, mol) in mols.iter().enumerate() {
        for bond in mol.bonds() {
            let (ga, gb) = (offsets[slot] + bond.a, offsets[slot] + bond.b);
            if kept[ga] && kept[gb] && !(in_product[ga] && in_product[gb]) {
                bonds.push(Bond { a: new_index[ga], b: new_index[gb], order: bond.order });
            }
        }
    }
    for &(a, b, order) in &template.product.bonds {
        bonds.push(Bond { a: product_index[a], b: product_index[b], order });
    }

    // Sanitization rejects valence, aromaticity, and connectivity
    // violations; such products are dropped, not reported.
    if let Ok(mol) = MoleculeGraph::from_parts(atoms, bonds, &infer) {
        let key = canonical_key(&mol);
        out.push((key, mol));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chem::smiles::parse_smiles;

    fn products(template: &ReactionTemplate, smiles: &[&str]) -> Vec<String> {
        let mols: Vec<MoleculeGraph> =
            smiles.iter().map(|s| parse_smiles(s).unwrap()).collect();
        let refs: Vec<&MoleculeGraph> = mols.iter().collect();
        apply_reaction(template, &refs)
            .unwrap()
            .into_iter()
            .map(|(k, _)| k.into_string())
            .collect()
    }

    fn key_of(smiles: &str) -> String {
        canonical_key(&parse_smiles(smiles).unwrap()).into_string()
    }

    #[test]
    fn amide_coupling() {
        let t = parse_reaction("amide", "[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]").unwrap();
        assert_eq!(t.arity(), 2);
        let prods = products(&t, &["CC(=O)O", "NCC"]);
        assert_eq!(prods, vec![key_of("CC(=O)NCC")]);
    }

    #[test]
    fn amide_coupling_order_insensitive() {
        let t = parse_reaction("amide", "[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]").unwrap();
        let ab = products(&t, &["CC(=O)O", "NCC"]);
        let ba = products(&t, &["NCC", "CC(=O)O"]);
        assert_eq!(ab, ba);
    }

    #[test]
    fn unary_oxidation() {
        let t = parse_reaction("oxidation", "[C;!H0:1][O;H1:2]>>[C:1]=[O:2]").unwrap();
        assert_eq!(t.arity(), 1);
        let prods = products(&t, &["CCO"]);
        assert_eq!(prods, vec![key_of("CC=O")]);
    }

    #[test]
    fn nitro_reduction_resets_charges() {
        let t =
            parse_reaction("nitro", "[N+:1](=O)[O-]>>[N+0:1]").unwrap();
        let prods = products(&t, &["c1ccccc1[N+](=O)[O-]"]);
        assert_eq!(prods, vec![key_of("Nc1ccccc1")]);
    }

    #[test]
    fn multiple_sites_yield_multiple_products() {
        let t = parse_reaction("oxidation", "[C;!H0:1][O;H1:2]>>[C:1]=[O:2]").unwrap();
        // 1,2-propanediol oxidizes at either carbon.
        let mut expected = vec![key_of("O=CC(C)O"), key_of("OCC(C)=O")];
        expected.sort();
        assert_eq!(products(&t, &["OCC(C)O"]), expected);
        // The two equivalent ends of 1,3-propanediol collapse to one.
        assert_eq!(products(&t, &["OCCCO"]), vec![key_of("O=CCCO")]);
    }

    #[test]
    fn symmetric_sites_deduplicate() {
        let t = parse_reaction("amide", "[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]").unwrap();
        // Two equivalent amine matches on the diamine collapse to two
        // distinct products (one per end — but the ends are equivalent).
        let prods = products(&t, &["CC(=O)O", "NCCN"]);
        assert_eq!(prods, vec![key_of("CC(=O)NCCN")]);
    }

    #[test]
    fn aryl_coupling_keeps_single_bond() {
        let t = parse_reaction("suzuki", "[c:1][Br].[c:2]B([OH])[OH]>>[c:1]-[c:2]").unwrap();
        let prods = products(&t, &["Brc1ccccc1", "OB(O)c1ccccc1"]);
        assert_eq!(prods, vec![key_of("c1ccccc1-c1ccccc1")]);
    }

    #[test]
    fn no_match_is_empty() {
        let t = parse_reaction("oxidation", "[C;!H0:1][O;H1:2]>>[C:1]=[O:2]").unwrap();
        assert!(products(&t, &["CCC"]).is_empty());
    }

    #[test]
    fn disconnected_products_are_dropped() {
        // On COCC the match anchored at the methyl deletes the bridge
        // and strands the ethyl fragment; only the other anchoring
        // survives sanitization.
        let t = parse_reaction("cleave", "[C:1][O;D2]C>>[C:1]O").unwrap();
        let prods = products(&t, &["COCC"]);
        assert_eq!(prods, vec![key_of("CCO")]);
    }

    #[test]
    fn rejects_bad_templates() {
        assert!(parse_reaction("x", "CC").is_err());
        assert!(parse_reaction("x", "C>C>>C").is_err());
        assert!(parse_reaction("x", "[C:1].[C:1]>>[C:1]").is_err());
        assert!(parse_reaction("x", "[C:1]>>[C:2]").is_err());
        assert!(parse_reaction("x", "[C:1]>>[C:1].[C:1]").is_err());
        assert!(parse_reaction("x", "[C:1]>>[C,N:1]").is_err());
        assert!(parse_reaction("x", "[C:1].[N:2].[O:3]>>[C:1]").is_err());
        assert!(parse_reaction("", "[C:1]>>[C:1]").is_err());
    }

    #[test]
    fn explicit_product_hydrogens_stick() {
        let t = parse_reaction("dehydro", "[C;H3:1][C;H3:2]>>[C;H2:1]=[C;H2:2]").unwrap();
        let prods = products(&t, &["CC"]);
        assert_eq!(prods, vec![key_of("C=C")]);
    }

    #[test]
    fn template_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("templates.tsv");
        std::fs::write(
            &path,
            "# comment\namide\t[C:1](=O)[OH].[N;H2:2]>>[C:1](=O)[N:2]\n\noxidation\t[C;!H0:1][O;H1:2]>>[C:1]=[O:2]\n",
        )
        .unwrap();
        let templates = parse_template_file(&path).unwrap();
        assert_eq!(templates.len(), 2);
        assert_eq!(templates[0].name(), "amide");
        assert_eq!(templates[1].arity(), 1);

        std::fs::write(&path, "a\t[C:1]>>[C:1]\na\t[N:1]>>[N:1]\n").unwrap();
        assert!(parse_template_file(&path).is_err());
    }
}
