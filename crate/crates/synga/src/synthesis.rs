//! Synthesis trees: construction, validation, sampling, and replay.
//!
//! A route is an unordered tree whose leaves are catalog blocks and
//! whose internal nodes apply a template to their children's products,
//! each committing to one product of that application. Structure is
//! shared: nodes sit behind `Arc`, so subtree reuse in genetic
//! operators is free. Invariants (leaf membership, product membership,
//! at most [`MAX_INTERNAL_NODES`] reactions, every product at most
//! [`MAX_PRODUCT_WEIGHT`]) are established by the constructors and
//! re-checkable with [`validate_tree`].

use std::collections::HashSet;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::catalog::Catalog;
use crate::chem::{molecular_weight, CanonicalKey, MoleculeGraph};
use crate::error::{Error, Result};

/// Reaction-step cap per route.
pub const MAX_INTERNAL_NODES: usize = 5;
/// Mass cap applied to every node's molecule, in Da.
pub const MAX_PRODUCT_WEIGHT: f64 = 1000.0;
/// Attempts granted to one sampled operation before giving up.
pub const OP_RETRIES: usize = 10;

// ---------------------------------------------------------------------------
// Tree structure
// ---------------------------------------------------------------------------

/// One node: a catalog block or a template application with its chosen
/// product. Fields are public for inspection; use the [`Route`]
/// constructors to build valid trees.
#[derive(Clone, Debug)]
pub enum RouteNode {
    Block {
        block: u32,
        key: CanonicalKey,
    },
    Reaction {
        template: u32,
        key: CanonicalKey,
        mol: MoleculeGraph,
        children: Vec<Arc<RouteNode>>,
    },
}

impl RouteNode {
    pub fn key(&self) -> &CanonicalKey {
        match self {
            RouteNode::Block { key, .. } | RouteNode::Reaction { key, .. } => key,
        }
    }

    pub fn mol<'a>(&'a self, catalog: &'a Catalog) -> &'a MoleculeGraph {
        match self {
            RouteNode::Block { block, .. } => catalog.block(*block).mol(),
            RouteNode::Reaction { mol, .. } => mol,
        }
    }

    pub fn children(&self) -> &[Arc<RouteNode>] {
        match self {
            RouteNode::Block { .. } => &[],
            RouteNode::Reaction { children, .. } => children,
        }
    }

    pub fn is_leaf(&self) -> bool {
        matches!(self, RouteNode::Block { .. })
    }

    fn count_internal(&self) -> usize {
        match self {
            RouteNode::Block { .. } => 0,
            RouteNode::Reaction { children, .. } => {
                1 + children.iter().map(|c| c.count_internal()).sum::<usize>()
            }
        }
    }

    fn count_nodes(&self) -> usize {
        1 + self.children().iter().map(|c| c.count_nodes()).sum::<usize>()
    }
}

/// A synthesis route: a shared-structure tree with a designated root.
#[derive(Clone, Debug)]
pub struct Route {
    root: Arc<RouteNode>,
}

/// A route bundled with its product key and an optional fitness.
#[derive(Clone, Debug)]
pub struct RouteRecord {
    pub route: Route,
    pub product: CanonicalKey,
    pub fitness: Option<f64>,
}

impl Route {
    /// Wraps an existing node as a route root without validation.
    pub fn from_root(root: Arc<RouteNode>) -> Route {
        Route { root }
    }

    /// Single-block route.
    pub fn leaf(catalog: &Catalog, block: u32) -> Route {
        let key = catalog.block(block).key().clone();
        Route { root: Arc::new(RouteNode::Block { block, key }) }
    }

    /// Applies `template` to the children and commits to `product`,
    /// which must be among the application's products.
    pub fn reaction(
        catalog: &Catalog,
        template: u32,
        children: Vec<Route>,
        product: &CanonicalKey,
    ) -> Result<Route> {
        let inputs: Vec<(&CanonicalKey, &MoleculeGraph)> = children
            .iter()
            .map(|c| (c.root.key(), c.root.mol(catalog)))
            .collect();
        let products = catalog.apply(template, &inputs)?;
        let Some((key, mol)) = products.iter().find(|(k, _)| k == product) else {
            return Err(Error::Tree(format!(
                "product {product} is not produced by template {:?} on the given children",
                catalog.template(template).name()
            )));
        };
        let mut child_nodes: Vec<Arc<RouteNode>> =
            children.into_iter().map(|c| c.root).collect();
        child_nodes.sort_by(|a, b| a.key().cmp(b.key()));
        Ok(Route {
            root: Arc::new(RouteNode::Reaction {
                template,
                key: key.clone(),
                mol: mol.clone(),
                children: child_nodes,
            }),
        })
    }

    pub fn root(&self) -> &Arc<RouteNode> {
        &self.root
    }

    /// Canonical key of the route's final product.
    pub fn product_key(&self) -> &CanonicalKey {
        self.root.key()
    }

    pub fn product_mol<'a>(&'a self, catalog: &'a Catalog) -> &'a MoleculeGraph {
        self.root.mol(catalog)
    }

    pub fn n_internal(&self) -> usize {
        self.root.count_internal()
    }

    pub fn n_nodes(&self) -> usize {
        self.root.count_nodes()
    }

    /// Leaf block ids, left to right (duplicates preserved).
    pub fn leaf_blocks(&self) -> Vec<u32> {
        fn walk(node: &RouteNode, out: &mut Vec<u32>) {
            match node {
                RouteNode::Block { block, .. } => out.push(*block),
                RouteNode::Reaction { children, .. } => {
                    for c in children {
                        walk(c, out);
                    }
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Template ids used, preorder (duplicates preserved).
    pub fn templates_used(&self) -> Vec<u32> {
        fn walk(node: &RouteNode, out: &mut Vec<u32>) {
            if let RouteNode::Reaction { template, children, .. } = node {
                out.push(*template);
                for c in children {
                    walk(c, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Path (child indices from the root) of every node, preorder.
    pub fn node_paths(&self) -> Vec<Vec<usize>> {
        fn walk(node: &RouteNode, path: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
            out.push(path.clone());
            for (i, c) in node.children().iter().enumerate() {
                path.push(i);
                walk(c, path, out);
                path.pop();
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut Vec::new(), &mut out);
        out
    }

    pub fn node_at(&self, path: &[usize]) -> &Arc<RouteNode> {
        let mut node = &self.root;
        for &i in path {
            node = &node.children()[i];
        }
        node
    }

    /// Replaces the subtree at `path` and rebuilds every ancestor on the
    /// path, re-choosing each ancestor's product uniformly among the
    /// weight-admissible products of its template. `None` when some
    /// ancestor application has no admissible product.
    pub fn replace_at<R: Rng>(
        &self,
        catalog: &Catalog,
        rng: &mut R,
        path: &[usize],
        subtree: Arc<RouteNode>,
    ) -> Option<Route> {
        fn rebuild<R: Rng>(
            catalog: &Catalog,
            rng: &mut R,
            node: &Arc<RouteNode>,
            path: &[usize],
            subtree: Arc<RouteNode>,
        ) -> Option<Arc<RouteNode>> {
            let Some((&step, rest)) = path.split_first() else {
                return Some(subtree);
            };
            let RouteNode::Reaction { template, children, .. } = node.as_ref() else {
                unreachable!("path steps through internal nodes");
            };
            let new_child = rebuild(catalog, rng, &children[step], rest, subtree)?;
            let mut new_children: Vec<Arc<RouteNode>> = children.clone();
            new_children[step] = new_child;
            new_children.sort_by(|a, b| a.key().cmp(b.key()));
            let inputs: Vec<(&CanonicalKey, &MoleculeGraph)> =
                new_children.iter().map(|c| (c.key(), c.mol(catalog))).collect();
            let products = catalog.apply(*template, &inputs).ok()?;
            let admissible: Vec<&(CanonicalKey, MoleculeGraph)> = products
                .iter()
                .filter(|(_, m)| molecular_weight(m) <= MAX_PRODUCT_WEIGHT)
                .collect();
            if admissible.is_empty() {
                return None;
            }
            let (key, mol) = admissible[rng.gen_range(0..admissible.len())];
            Some(Arc::new(RouteNode::Reaction {
                template: *template,
                key: key.clone(),
                mol: mol.clone(),
                children: new_children,
            }))
        }
        rebuild(catalog, rng, &self.root, path, subtree).map(Route::from_root)
    }
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

/// Recheck of every route invariant; errors name the violating node.
pub fn validate_tree(route: &Route, catalog: &Catalog) -> Result<()> {
    fn walk(node: &RouteNode, catalog: &Catalog, path: &str) -> Result<()> {
        match node {
            RouteNode::Block { block, key } => {
                if *block as usize >= catalog.n_blocks() {
                    return Err(Error::Tree(format!("{path}: block id {block} out of range")));
                }
                let entry = catalog.block(*block);
                if entry.key() != key {
                    return Err(Error::Tree(format!(
                        "{path}: leaf key {key} does not match catalog block {block}"
                    )));
                }
                if entry.weight() > MAX_PRODUCT_WEIGHT {
                    return Err(Error::Tree(format!("{path}: leaf exceeds weight cap")));
                }
                Ok(())
            }
            RouteNode::Reaction { template, key, mol, children } => {
                if *template as usize >= catalog.n_templates() {
                    return Err(Error::Tree(format!(
                        "{path}: template id {template} out of range"
                    )));
                }
                let arity = catalog.template(*template).arity();
                if children.len() != arity {
                    return Err(Error::Tree(format!(
                        "{path}: template {:?} takes {arity} children, found {}",
                        catalog.template(*template).name(),
                        children.len()
                    )));
                }
                for (i, c) in children.iter().enumerate() {
                    walk(c, catalog, &format!("{path}.{i}"))?;
                }
                let inputs: Vec<(&CanonicalKey, &MoleculeGraph)> =
                    children.iter().map(|c| (c.key(), c.mol(catalog))).collect();
                let products = catalog.apply(*template, &inputs)?;
                if !products.iter().any(|(k, _)| k == key) {
                    return Err(Error::Tree(format!(
                        "{path}: stored product {key} not among template products"
                    )));
                }
                if crate::chem::canonical_key(mol) != *key {
                    return Err(Error::Tree(format!(
                        "{path}: stored molecule disagrees with stored key {key}"
                    )));
                }
                if molecular_weight(mol) > MAX_PRODUCT_WEIGHT {
                    return Err(Error::Tree(format!("{path}: product exceeds weight cap")));
                }
                Ok(())
            }
        }
    }
    if route.n_internal() > MAX_INTERNAL_NODES {
        return Err(Error::Tree(format!(
            "route has {} reactions; cap is {MAX_INTERNAL_NODES}",
            route.n_internal()
        )));
    }
    walk(&route.root, catalog, "root")
}

// ---------------------------------------------------------------------------
// Block picking
// ---------------------------------------------------------------------------

/// ε-mixed choice over block-id spaces: with probability 1−ε restrict
/// to the allowed subset when the restriction is nonempty, otherwise
/// (and on an empty restriction, without spending the coin) choose from
/// the whole space.
#[derive(Clone, Debug)]
pub struct BlockPicker {
    allowed: Vec<bool>,
    epsilon: f64,
}

impl BlockPicker {
    /// `allowed[b]` marks block `b` as preferred; `epsilon ∈ [0, 1]`.
    pub fn new(allowed: Vec<bool>, epsilon: f64) -> BlockPicker {
        assert!((0.0..=1.0).contains(&epsilon), "epsilon out of range");
        BlockPicker { allowed, epsilon }
    }

    pub fn allowed(&self) -> &[bool] {
        &self.allowed
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn pick<R: Rng>(&self, rng: &mut R, space: &[u32]) -> Option<u32> {
        if space.is_empty() {
            return None;
        }
        let restricted: Vec<u32> = space
            .iter()
            .copied()
            .filter(|&b| self.allowed.get(b as usize).copied().unwrap_or(false))
            .collect();
        if restricted.is_empty() {
            return Some(space[rng.gen_range(0..space.len())]);
        }
        if rng.gen::<f64>() < 1.0 - self.epsilon {
            Some(restricted[rng.gen_range(0..restricted.len())])
        } else {
            Some(space[rng.gen_range(0..space.len())])
        }
    }
}

/// Uniform or ε-filtered choice depending on whether a picker is given.
pub(crate) fn pick_block<R: Rng>(
    rng: &mut R,
    space: &[u32],
    picker: Option<&BlockPicker>,
) -> Option<u32> {
    match picker {
        Some(p) => p.pick(rng, space),
        None => {
            if space.is_empty() {
                None
            } else {
                Some(space[rng.gen_range(0..space.len())])
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Template slots whose pattern matches `mol`, ascending.
pub fn compatible_slots(catalog: &Catalog, mol: &MoleculeGraph) -> Vec<(u32, u8)> {
    let mut out = Vec::new();
    for t in 0..catalog.n_templates() as u32 {
        let template = catalog.template(t);
        for s in 0..template.arity() as u8 {
            if template.slot_matches(s as usize, mol) {
                out.push((t, s));
            }
        }
    }
    out
}

/// One growth attempt: put a new reaction above the root, drawing a
/// compatible (template, slot), a partner block for binary templates
/// (ε-filtered when a picker is given), and a product uniformly among
/// those under the weight cap. `None` when any stage has no choice.
pub fn grow_once<R: Rng>(
    route: &Route,
    rng: &mut R,
    catalog: &Catalog,
    picker: Option<&BlockPicker>,
) -> Option<Route> {
    if route.n_internal() >= MAX_INTERNAL_NODES {
        return None;
    }
    let slots = compatible_slots(catalog, route.product_mol(catalog));
    if slots.is_empty() {
        return None;
    }
    let (t, s) = slots[rng.gen_range(0..slots.len())];
    let template = catalog.template(t);
    let children: Vec<Route> = if template.arity() == 2 {
        let partner_slot = 1 - s;
        let space: Vec<u32> = catalog
            .compatible_blocks(t, partner_slot)
            .iter()
            .copied()
            .filter(|&b| catalog.block(b).weight() <= MAX_PRODUCT_WEIGHT)
            .collect();
        let partner = pick_block(rng, &space, picker)?;
        vec![route.clone(), Route::leaf(catalog, partner)]
    } else {
        vec![route.clone()]
    };
    let inputs: Vec<(&CanonicalKey, &MoleculeGraph)> = children
        .iter()
        .map(|c| (c.product_key(), c.product_mol(catalog)))
        .collect();
    let products = catalog.apply(t, &inputs).ok()?;
    let admissible: Vec<&CanonicalKey> = products
        .iter()
        .filter(|(_, m)| molecular_weight(m) <= MAX_PRODUCT_WEIGHT)
        .map(|(k, _)| k)
        .collect();
    if admissible.is_empty() {
        return None;
    }
    let product = admissible[rng.gen_range(0..admissible.len())].clone();
    Route::reaction(catalog, t, children, &product).ok()
}

/// Uniform random route: a seed block grown `k ~ Uniform{1..max_steps}`
/// times with [`OP_RETRIES`] attempts per step; exhaustion keeps the
/// partial route (possibly a bare leaf).
pub fn sample_route<R: Rng>(rng: &mut R, catalog: &Catalog, max_steps: usize) -> Route {
    sample_route_filtered(rng, catalog, max_steps, None)
}

/// [`sample_route`] with the seed block and growth partners drawn
/// through an ε-filter.
pub fn sample_route_filtered<R: Rng>(
    rng: &mut R,
    catalog: &Catalog,
    max_steps: usize,
    picker: Option<&BlockPicker>,
) -> Route {
    assert!(max_steps >= 1, "max_steps must be at least 1");
    let seed_space: Vec<u32> = (0..catalog.n_blocks() as u32)
        .filter(|&b| catalog.block(b).weight() <= MAX_PRODUCT_WEIGHT)
        .collect();
    let seed = pick_block(rng, &seed_space, picker)
        .expect("catalog has no block under the weight cap");
    let steps = rng.gen_range(1..=max_steps);
    let mut route = Route::leaf(catalog, seed);
    'steps: for _ in 0..steps {
        for _ in 0..OP_RETRIES {
            if let Some(grown) = grow_once(&route, rng, catalog, picker) {
                route = grown;
                continue 'steps;
            }
        }
        break;
    }
    route
}

// ---------------------------------------------------------------------------
// Subtrees and replay
// ---------------------------------------------------------------------------

/// Every node's descendant closure as its own route, preorder; the
/// first entry is the input itself.
pub fn enumerate_subtrees(route: &Route) -> Vec<Route> {
    fn walk(node: &Arc<RouteNode>, out: &mut Vec<Route>) {
        out.push(Route::from_root(Arc::clone(node)));
        for c in node.children() {
            walk(c, out);
        }
    }
    let mut out = Vec::new();
    walk(&route.root, &mut out);
    out
}

/// Streams every full product reassignment of the tree (blocks and
/// templates fixed), emitting rebuilt roots on the fly; weight-capped.
fn stream_alternatives(
    catalog: &Catalog,
    node: &Arc<RouteNode>,
    emit: &mut dyn FnMut(Arc<RouteNode>),
) {
    match node.as_ref() {
        RouteNode::Block { .. } => emit(Arc::clone(node)),
        RouteNode::Reaction { template, children, .. } => {
            let t = *template;
            if children.len() == 1 {
                stream_alternatives(catalog, &children[0], &mut |c0| {
                    emit_rebuilt(catalog, t, vec![c0], emit);
                });
            } else {
                let (left, right) = (&children[0], &children[1]);
                stream_alternatives(catalog, left, &mut |c0| {
                    stream_alternatives(catalog, right, &mut |c1| {
                        emit_rebuilt(catalog, t, vec![Arc::clone(&c0), c1], emit);
                    });
                });
            }
        }
    }
}

fn emit_rebuilt(
    catalog: &Catalog,
    template: u32,
    mut children: Vec<Arc<RouteNode>>,
    emit: &mut dyn FnMut(Arc<RouteNode>),
) {
    children.sort_by(|a, b| a.key().cmp(b.key()));
    let inputs: Vec<(&CanonicalKey, &MoleculeGraph)> =
        children.iter().map(|c| (c.key(), c.mol(catalog))).collect();
    let Ok(products) = catalog.apply(template, &inputs) else {
        debug_assert!(false, "replaying a valid tree cannot fail");
        return;
    };
    for (key, mol) in products.iter() {
        if molecular_weight(mol) > MAX_PRODUCT_WEIGHT {
            continue;
        }
        emit(Arc::new(RouteNode::Reaction {
            template,
            key: key.clone(),
            mol: mol.clone(),
            children: children.clone(),
        }));
    }
}

/// Reassigns intermediate products so the root product changes,
/// uniformly over the distinct alternative root products (reservoir
/// selection over the streamed enumeration); unchanged when no
/// alternative exists.
pub fn rerun<R: Rng>(route: &Route, rng: &mut R, catalog: &Catalog) -> Route {
    let current = route.product_key().clone();
    let mut seen: HashSet<CanonicalKey> = HashSet::new();
    let mut count = 0u64;
    let mut chosen: Option<Arc<RouteNode>> = None;
    stream_alternatives(catalog, &route.root, &mut |alt| {
        if *alt.key() == current || !seen.insert(alt.key().clone()) {
            return;
        }
        count += 1;
        if rng.gen_range(0..count) == 0 {
            chosen = Some(alt);
        }
    });
    match chosen {
        Some(root) => Route::from_root(root),
        None => route.clone(),
    }
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

/// JSON-facing node form: block keys and template names, so files stay
/// meaningful across catalog reloads.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RouteRepr {
    Block { block: String },
    Reaction { template: String, product: String, children: Vec<RouteRepr> },
}

impl Route {
    pub fn to_repr(&self, catalog: &Catalog) -> RouteRepr {
        fn conv(node: &RouteNode, catalog: &Catalog) -> RouteRepr {
            match node {
                RouteNode::Block { key, .. } => RouteRepr::Block { block: key.to_string() },
                RouteNode::Reaction { template, key, children, .. } => RouteRepr::Reaction {
                    template: catalog.template(*template).name().to_string(),
                    product: key.to_string(),
                    children: children.iter().map(|c| conv(c, catalog)).collect(),
                },
            }
        }
        conv(&self.root, catalog)
    }

    pub fn from_repr(repr: &RouteRepr, catalog: &Catalog) -> Result<Route> {
        match repr {
            RouteRepr::Block { block } => {
                let key = crate::chem::CanonicalKey::from_trusted(block.clone());
                let id = catalog
                    .find_block(&key)
                    .ok_or_else(|| Error::Tree(format!("block {block:?} not in catalog")))?;
                Ok(Route::leaf(catalog, id))
            }
            RouteRepr::Reaction { template, product, children } => {
                let t = (0..catalog.n_templates() as u32)
                    .find(|&t| catalog.template(t).name() == template)
                    .ok_or_else(|| Error::Tree(format!("template {template:?} not in catalog")))?;
                let children = children
                    .iter()
                    .map(|c| Route::from_repr(c, catalog))
                    .collect::<Result<Vec<_>>>()?;
                let key = crate::chem::CanonicalKey::from_trusted(product.clone());
                Route::reaction(catalog, t, children, &key)
            }
        }
    }

    pub fn to_json(&self, catalog: &Catalog) -> String {
        serde_json::to_string(&self.to_repr(catalog)).expect("route serialization")
    }

    pub fn from_json(json: &str, catalog: &Catalog) -> Result<Route> {
        let repr: RouteRepr = serde_json::from_str(json)
            .map_err(|e| Error::Tree(format!("route JSON: {e}")))?;
        Route::from_repr(&repr, catalog)
    }

    /// Canonical s-expression: `(bb "KEY")` leaves and
    /// `(rxn "template" "PRODUCT" child...)` reactions.
    pub fn to_sexp(&self, catalog: &Catalog) -> String {
        fn write(node: &RouteNode, catalog: &Catalog, out: &mut String) {
            match node {
                RouteNode::Block { key, .. } => {
                    out.push_str("(bb \"");
                    out.push_str(key.as_str());
                    out.push_str("\")");
                }
                RouteNode::Reaction { template, key, children, .. } => {
                    out.push_str("(rxn \"");
                    out.push_str(catalog.template(*template).name());
                    out.push_str("\" \"");
                    out.push_str(key.as_str());
                    out.push('"');
                    for c in children {
                        out.push(' ');
                        write(c, catalog, out);
                    }
                    out.push(')');
                }
            }
        }
        let mut out = String::new();
        write(&self.root, catalog, &mut out);
        out
    }

    pub fn from_sexp(text: &str, catalog: &Catalog) -> Result<Route> {
        let mut tokens = tokenize_sexp(text)?;
        tokens.reverse(); // pop from the back = read forward
        let repr = parse_sexp_node(&mut tokens)?;
        if !tokens.is_empty() {
            return Err(Error::Tree("trailing tokens after route".into()));
        }
        Route::from_repr(&repr, catalog)
    }
}

#[derive(Debug, PartialEq)]
enum SexpToken {
    Open,
    Close,
    Word(String),
    Str(String),
}

fn tokenize_sexp(text: &str) -> Result<Vec<SexpToken>> {
    let mut tokens = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'(' => {
                tokens.push(SexpToken::Open);
                i += 1;
            }
            b')' => {
                tokens.push(SexpToken::Close);
                i += 1;
            }
            b'"' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && bytes[j] != b'"' {
                    j += 1;
                }
                if j == bytes.len() {
                    return Err(Error::Tree("unterminated string".into()));
                }
                tokens.push(SexpToken::Str(text[start..j].to_string()));
                i = j + 1;
            }
            c if c.is_ascii_whitespace() => i += 1,
            _ => {
                let start = i;
                while i < bytes.len()
                    && !bytes[i].is_ascii_whitespace()
                    && !matches!(bytes[i], b'(' | b')' | b'"')
                {
                    i += 1;
                }
                tokens.push(SexpToken::Word(text[start..i].to_string()));
            }
        }
    }
    Ok(tokens)
}

fn parse_sexp_node(tokens: &mut Vec<SexpToken>) -> Result<RouteRepr> {
    let err = |msg: &str| Error::Tree(format!("route s-expression: {msg}"));
    if tokens.pop() != Some(SexpToken::Open) {
        return Err(err("expected ("));
    }
    let Some(SexpToken::Word(head)) = tokens.pop() else {
        return Err(err("expected bb or rxn"));
    };
    match head.as_str() {
        "bb" => {
            let Some(SexpToken::Str(key)) = tokens.pop() else {
                return Err(err("bb takes a quoted key"));
            };
            if tokens.pop() != Some(SexpToken::Close) {
                return Err(err("expected ) after bb"));
            }
            Ok(RouteRepr::Block { block: key })
        }
        "rxn" => {
            let Some(SexpToken::Str(template)) = tokens.pop() else {
                return Err(err("rxn takes a quoted template name"));
            };
            let Some(SexpToken::Str(product)) = tokens.pop() else {
                return Err(err("rxn takes a quoted product key"));
            };
            let mut children = Vec::new();
            loop {
                match tokens.last() {
                    Some(SexpToken::Open) => children.push(parse_sexp_node(tokens)?),
                    Some(SexpToken::Close) => {
                        tokens.pop();
                        break;
                    }
                    _ => return Err(err("expected child or )")),
                }
            }
            if children.is_empty() || children.len() > 2 {
                return Err(err("rxn takes 1 or 2 children"));
            }
            Ok(RouteRepr::Reaction { template, product, children })
        }
        _ => Err(err("unknown node kind")),
    }
}
