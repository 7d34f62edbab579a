use thiserror::Error;

/// Error type shared by every module of the laboratory.
///
/// Variants are grouped by the exit-code category they map to on the
/// command line: usage (1), geometry (2), solver (3), resolution (4),
/// everything else is internal (5).
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("geometry error: {0}")]
    Geometry(String),

    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error("resolution too coarse: {0}")]
    Resolution(String),

    #[error("solver did not converge: residual {residual:.3e} after {iters} iterations")]
    Solver { residual: f64, iters: usize },

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("level-set topology error: {0}")]
    Topology(String),

    #[error("quadrature error: {0}")]
    Quadrature(String),

    #[error("preimage inversion error: {0}")]
    Inversion(String),

    #[error("map construction error: {0}")]
    Construction(String),

    #[error("abscissa selection error: {0}")]
    Selection(String),

    #[error("scale refinement error: {0}")]
    Scale(String),

    #[error("level search error: {0}")]
    Search(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

impl Error {
    /// Process exit code for the CLI: 1 usage, 2 geometry, 3 solver,
    /// 4 resolution, 5 internal.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Domain(_) | Error::Format(_) => 1,
            Error::Geometry(_) | Error::Resource(_) | Error::Construction(_) => 2,
            Error::Solver { .. } => 3,
            Error::Resolution(_) | Error::Scale(_) | Error::Search(_) | Error::Sampling(_) => 4,
            _ => 5,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
