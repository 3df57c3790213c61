//! Crate-wide error type.

use thiserror::Error;

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Text input (SMILES, SMARTS, reaction, s-expression) failed to parse.
    /// `pos` is a byte offset into the offending string.
    #[error("parse error at byte {pos}: {msg}")]
    Parse { pos: usize, msg: String },

    /// A molecular graph violates a structural invariant (valence,
    /// aromaticity, connectivity).
    #[error("invalid molecule: {0}")]
    Molecule(String),

    /// Catalog construction or lookup failure.
    #[error("catalog error: {0}")]
    Catalog(String),

    /// A synthesis tree violates its contract (unknown block, stale
    /// product, cap overflow).
    #[error("invalid synthesis tree: {0}")]
    Tree(String),

    /// Configuration rejected before any work ran.
    #[error("config error: {0}")]
    Config(String),

    /// Numerical routine could not complete (factorization failure,
    /// degenerate data).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An optimization run aborted.
    #[error("run error: {0}")]
    Run(String),

    /// Fitness evaluation failed for a specific product.
    #[error("oracle error for {key:?}: {msg}")]
    Oracle { key: String, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(pos: usize, msg: impl Into<String>) -> Self {
        Error::Parse { pos, msg: msg.into() }
    }

    /// Stable machine-readable code, used as the first token of CLI
    /// error lines.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "E_PARSE",
            Error::Molecule(_) => "E_MOLECULE",
            Error::Catalog(_) => "E_CATALOG",
            Error::Tree(_) => "E_TREE",
            Error::Config(_) => "E_CONFIG",
            Error::Numeric(_) => "E_NUMERIC",
            Error::Run(_) => "E_RUN",
            Error::Oracle { .. } => "E_ORACLE",
            Error::Io(_) => "E_IO",
        }
    }
}
