use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid time {0}: must be finite and nonnegative")]
    InvalidTime(f64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("order {order} exceeds the supported maximum {max}")]
    OrderTooLarge { order: usize, max: usize },

    #[error("integer overflow while computing {0}")]
    Overflow(&'static str),

    #[error("quadrature did not converge: estimated error {error:e} above target {target:e}")]
    QuadratureNonConvergence { error: f64, target: f64 },

    #[error("grid error: {0}")]
    Grid(String),

    #[error("density does not decay at the domain boundary: |rho| = {0:e}")]
    BoundaryDecay(f64),

    #[error("field history cannot serve s = {s}: {reason}")]
    HistoryGap { s: f64, reason: String },

    #[error("coefficient path is inadmissible at s = {s}: |h| gamma/(-gamma'') = {ratio}")]
    InadmissibleCoefficient { s: f64, ratio: f64 },

    #[error("ODE integration failed: {0}")]
    Integration(String),

    #[error("Newton shooting did not converge for x = {x}, x0 = {x0}, t = {t}: residual {residual:e}")]
    NewtonNonConvergence { x: f64, x0: f64, t: f64, residual: f64 },

    #[error("trajectory left the grid domain at s = {s} (X = {x})")]
    OutOfDomain { s: f64, x: f64 },

    #[error("missing ladder order {0}")]
    MissingOrder(usize),

    #[error("initial data: {0}")]
    InitialData(String),

    #[error("configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
