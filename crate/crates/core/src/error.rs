use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("point at distance {distance} from the minimizer lies outside the domain ball of radius {radius}")]
    Domain { distance: f64, radius: f64 },

    #[error("iterate became non-finite or left the divergence guard at step {t}")]
    Diverged { t: usize },

    #[error("solver stopped after {iterations} iterations with gradient norm {grad_norm}")]
    NotConverged { grad_norm: f64, iterations: usize },

    #[error("theorem precondition unmet: {0}")]
    Precondition(String),

    #[error("Monte-Carlo error bar {bar} exceeds 10% of the certification margin {margin}")]
    MonteCarloTooNoisy { bar: f64, margin: f64 },

    #[error("nonpositive value {value} at n = {n}; cannot take logarithms")]
    NonPositive { n: f64, value: f64 },

    #[error("trial {trial}: {source}")]
    Trial {
        trial: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Strips `Trial` wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Trial { source, .. } => source.root(),
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
