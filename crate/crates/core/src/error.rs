use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid coordinate set: {0}")]
    InvalidCoordinates(String),

    #[error("negative conditional entropy {0:e} beyond rounding tolerance")]
    NegativeEntropy(f64),

    #[error("invalid transition row {row}: {reason}")]
    InvalidRow { row: usize, reason: String },

    #[error("chain is not irreducible; communicating classes: {classes:?}")]
    Reducible { classes: Vec<Vec<usize>> },

    #[error("chain is periodic with period {period}")]
    Periodic { period: usize },

    #[error("unsupported order k={0}: only first-order chains are supported here")]
    UnsupportedOrder(usize),

    #[error("size budget exceeded: {0}")]
    Budget(String),

    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    #[error("site {site} out of range for {sites} sites")]
    SiteOutOfRange { site: usize, sites: usize },

    #[error("inconsistent correlations: {0}")]
    InconsistentCorrelations(String),

    #[error("second order transition point: integrand minimum {min_argument:e} below guard")]
    NearCritical { min_argument: f64 },

    #[error("no convergence: {0}")]
    NonConvergence(String),

    #[error("mixing failure: {0}")]
    MixingFailure(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at(self, stage: &'static str) -> Error {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Innermost error, with stage labels stripped.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            e => e,
        }
    }
}
