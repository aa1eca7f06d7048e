use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("unknown map `{0}`")]
    UnknownMap(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point {0} lies outside [0,1]")]
    OutOfDomain(f64),

    #[error("point {0} lies on the singular set")]
    PointOnSingularSet(f64),

    #[error("orbit hits the singular set at step {0}")]
    OrbitHitsSingularSet(usize),

    #[error("invalid interval set: {0}")]
    InvalidIntervalSet(String),

    #[error("point {0} is not in the inducing domain")]
    NotInDomain(f64),

    #[error("no return within {0} steps")]
    Censored(u64),

    #[error("branch boundary near {0} cannot be resolved at the requested tolerance")]
    ResolutionExceeded(f64),

    #[error("orbit does not visit the target interval within {0} steps")]
    NoVisit(u64),

    #[error("pullback interval collapsed below machine resolution at step {0}")]
    PullbackDegenerate(usize),

    #[error("too many censored returns: {censored} of {total}")]
    TooManyCensored { censored: u64, total: u64 },

    #[error("orbit entered the target set only {found} of {wanted} times within the iteration budget")]
    TooFewEntries { found: u64, wanted: u64 },

    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),

    #[error("only {0} correlation values above the noise floor; need at least 4")]
    InsufficientDecay(usize),

    #[error("every sample is censored")]
    AllCensored,

    #[error("{0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn in_stage(self, stage: &str) -> Error {
        Error::Stage { stage: stage.to_string(), source: Box::new(self) }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
