use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("failed to parse {what}: {source}")]
    Parse {
        what: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid `{field}`: {reason}")]
    Schema { field: String, reason: String },

    #[error("network is disconnected: nodes {unreachable:?} cannot reach the infinite bus")]
    Disconnected { unreachable: Vec<u32> },

    #[error("singular block when eliminating indices {indices:?}")]
    SingularBlock { indices: Vec<usize> },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("grounded Laplacian invariant violated: {0}")]
    NotGroundedLaplacian(String),

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("equivalent susceptance must be positive, got {b_eq}")]
    NonPositiveSusceptance { b_eq: f64 },

    #[error("network factor F has a pole at omega = {omega} rad/s")]
    NetworkFactorPole { omega: f64 },

    #[error("admittance model is singular at omega = {omega} rad/s")]
    Resonance { omega: f64 },

    #[error("I + L is near-singular at omega = {omega} rad/s (sigma_min = {sigma_min:e})")]
    NearSingular { omega: f64, sigma_min: f64 },

    #[error("invalid model: {0}")]
    Model(String),

    #[error("invalid frequency grid: {0}")]
    Grid(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn schema(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Schema {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }
}
