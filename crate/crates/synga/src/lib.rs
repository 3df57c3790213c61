//! Synthesis-constrained molecular optimization.
//!
//! The crate couples a small, self-contained cheminformatics kernel
//! ([`chem`]) with an evolutionary engine that searches the space of
//! building-block synthesis trees instead of raw molecular graphs. Every
//! candidate an optimizer proposes therefore carries its own synthesis
//! route by construction.
//!
//! Layering, bottom to top:
//!
//! * [`chem`] — molecular graphs, SMILES/SMARTS subsets, template
//!   rewriting, fingerprints, scaffolds.
//! * [`catalog`] — building-block sets, template compatibility indexing,
//!   memoized reaction products.
//! * [`synthesis`] — synthesis trees, route sampling, product
//!   reassignment, (de)serialization.
//! * [`genetic`] — crossover, mutation, rank-based selection, and the
//!   budgeted evolutionary loop.
//! * [`blockfilter`] — similarity and learned building-block filters with
//!   epsilon-greedy sampling.
//! * [`neural`] — dense networks, exact gradients, Adam, and the additive
//!   route-score model.
//! * [`surrogate`] — Tanimoto-kernel Gaussian process and the
//!   surrogate-guided optimization loop.
//! * [`oracles`] — toy fitness oracles, budgeted evaluation accounting,
//!   and run metrics.
//! * [`cli`] — configuration, run orchestration, and file output shared
//!   by the `synga` binary.

pub mod blockfilter;
pub mod catalog;
pub mod chem;
pub mod cli;
pub mod error;
pub mod genetic;
pub mod neural;
pub mod oracles;
pub mod surrogate;
pub mod synthesis;

pub use error::{Error, Result};
