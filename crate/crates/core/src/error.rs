use thiserror::Error;

/// Errors raised by the numerical kernels.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QsdError {
    #[error("grid must have a power-of-two number of points >= 8, got {0}")]
    BadGridSize(usize),
    #[error("grid bounds must satisfy x_min < x_max (got {x_min}, {x_max})")]
    BadGridBounds { x_min: f64, x_max: f64 },
    #[error("operands live on different grids")]
    GridMismatch,
    #[error("unknown operator tag `{0}`")]
    UnknownTag(String),
    #[error("mass must be positive, got {0}")]
    NonPositiveMass(f64),
    #[error("hbar must be positive, got {0}")]
    NonPositiveHbar(f64),
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("invalid potential: {0}")]
    InvalidPotential(String),
    #[error("no root with Re(beta) > 0: roots are {r1} and {r2}")]
    NoStableRoot { r1: num_complex::Complex64, r2: num_complex::Complex64 },
    #[error("the stationary Gaussian solver needs c = hbar*a*b/2 (got c = {c}, expected {expected})")]
    NonStandardCoupling { c: f64, expected: f64 },
    #[error("a = b = 0: the model has no localizing fixed point")]
    NoCoupling,
    #[error("state norm collapsed to {norm:e} before renormalization (step too large)")]
    NormCollapse { norm: f64 },
    #[error("time step {dt:e} exceeds the stability bound {bound:e}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("stability violation at t = {t}: trace drift {trace_drift:e}, hermiticity drift {herm_drift:e}")]
    StabilityViolation { t: f64, trace_drift: f64, herm_drift: f64 },
    #[error("non-finite values encountered at t = {t}")]
    NonFinite { t: f64 },
    #[error("trajectory with seed {seed} failed: {source}")]
    Trajectory {
        seed: u64,
        #[source]
        source: Box<QsdError>,
    },
    #[error("requested time {0} is not on the record lattice")]
    OffLattice(f64),
    #[error("negative diffusion coefficient: {0}")]
    NegativeDiffusion(String),
    #[error("time step {dt:e} violates the explicit CFL bound {bound:e}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("phase-space cell area {area} (units of 2*pi*hbar) is below the minimum {min}")]
    CellTooSmall { area: f64, min: f64 },
    #[error("grid of {n} points is too large for the decoherence functional (max {max})")]
    GridTooLarge { n: usize, max: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, QsdError>;
