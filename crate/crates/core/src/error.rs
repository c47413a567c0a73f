use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("derivative of order {0} requested on a finite-volume field")]
    DerivativeUnavailable(usize),

    #[error("need at least two samples for a finite time exponent, got {0}")]
    InsufficientSamples(usize),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("positivity lost at cell {cell} (rho = {rho:e}, t = {time}); try a smaller cfl")]
    PositivityLoss { cell: usize, rho: f64, time: f64 },

    #[error("time step {dt:e} exceeds the stable step {stable:e}")]
    CflViolation { dt: f64, stable: f64 },

    #[error("wall-clock budget of {budget_seconds} s exceeded at t = {time}")]
    WallBudgetExceeded { budget_seconds: f64, time: f64 },

    #[error("pressure-law hypothesis violated at rho = {sample}: {reason}")]
    HypothesisViolated { sample: f64, reason: String },

    #[error("spectrum under-resolved: top-band energy fraction {fraction:e} exceeds 1e-3")]
    UnderResolved { fraction: f64 },

    #[error("observable undefined at a realized state: {0}")]
    UndefinedObservable(String),

    #[error("snapshot times misaligned: {0}")]
    MisalignedTimes(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("wrap-around guard violated: L = {length} must exceed 2aT/eps_min = {required}")]
    WrapAround { length: f64, required: f64 },

    #[error("run failed for eps = {epsilon}, eta = {eta}: {source}")]
    Member {
        epsilon: f64,
        eta: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
