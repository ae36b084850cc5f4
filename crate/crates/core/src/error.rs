use crate::coupled::IterationHistory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("level-set gradient vanishes at ({x}, {y}, {z})")]
    DegenerateGradient { x: f64, y: f64, z: f64 },

    #[error("no quadrature nodes found for h = {h}")]
    EmptyQuadrature { h: f64 },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("{solver}: iterate became non-finite at iteration {iteration}")]
    Divergence { solver: &'static str, iteration: usize },

    #[error("Arnoldi breakdown with nonzero residual at step {step}")]
    Breakdown { step: usize },

    #[error("{solver} did not converge in {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { solver: &'static str, iterations: usize, residual: f64 },

    #[error("inner {stage} solve failed at outer iteration {iteration}: {source}")]
    InnerFailure {
        stage: &'static str,
        iteration: usize,
        history: Box<IterationHistory>,
        #[source]
        source: Box<Error>,
    },

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("zero denominator in {0}")]
    ZeroDenominator(&'static str),

    #[error("dense system of order {order} exceeds the limit {limit}")]
    TooLarge { order: usize, limit: usize },

    #[error("singular or non-finite factorization in {0}")]
    Singular(&'static str),

    #[error("point at distance {radius} is outside the {region} region")]
    RegionMismatch { region: &'static str, radius: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Module that raised the error, for diagnostics.
    pub fn module(&self) -> &'static str {
        match self {
            Self::DegenerateGradient { .. } | Self::EmptyQuadrature { .. } => "geometry",
            Self::Divergence { .. } | Self::Breakdown { .. } | Self::NoConvergence { .. } | Self::Singular(_) => "solvers",
            Self::InnerFailure { .. } | Self::Unsupported(_) | Self::ZeroDenominator(_) => "coupled",
            Self::TooLarge { .. } => "spectral",
            Self::RegionMismatch { .. } => "benchmarks",
            Self::Config(_) => "cli",
            Self::Io(_) => "output",
            Self::InvalidParameter(_) | Self::LengthMismatch { .. } => "input",
        }
    }
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, got })
    }
}

pub(crate) fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")))
    }
}
