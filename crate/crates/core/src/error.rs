use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("kernel evaluated at a singular point (image n = {image})")]
    SingularPoint { image: i64 },

    #[error("target within {distance:.3e} of a shifted-image pole (n = {image}, l = {shift})")]
    PoleProximity { image: i64, shift: usize, distance: f64 },

    #[error("Wood configuration: orders {orders:?} are grazing; use shifted Green functions")]
    WoodFrequency { orders: Vec<i64> },

    #[error("forbidden shift h = {h}: |1 - exp(i beta_r h)| vanishes for propagating orders {orders:?}")]
    ForbiddenShift { h: f64, orders: Vec<i64> },

    #[error("singular matrix at pivot {pivot} (condition estimate {cond:.3e})")]
    Singular { pivot: usize, cond: f64 },

    #[error("non-finite matrix entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("stage {stage}: {source}")]
    Stage {
        stage: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("problem too large for dense assembly: {size} > {limit}")]
    SizeGuard { size: usize, limit: usize },

    #[error("invalid configuration at `{path}`: {message}")]
    Config { path: String, message: String },
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn at_stage(self, stage: usize) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// Process exit code for the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config { .. }
            | Error::Domain(_)
            | Error::WoodFrequency { .. }
            | Error::ForbiddenShift { .. }
            | Error::Resolution(_)
            | Error::SizeGuard { .. }
            | Error::PoleProximity { .. } => 1,
            Error::Singular { .. } | Error::NonFinite { .. } => 2,
            Error::Stage { source, .. } => source.exit_code(),
            Error::SingularPoint { .. } | Error::Shape(_) => 3,
        }
    }
}
