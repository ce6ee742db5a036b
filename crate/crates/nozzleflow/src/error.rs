use thiserror::Error;

/// Every failure the solvers can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("vacuum: B - |u|^2/2 = {0} is not positive")]
    Vacuum(f64),
    #[error("invalid nozzle profile: {0}")]
    InvalidProfile(String),
    #[error("throat cannot be classified from derivatives up to order 6")]
    UnclassifiableThroat,
    #[error("no subsonic inflow velocity makes the throat sonic")]
    NoSubsonicCalibration,
    #[error("no root of the Bernoulli residual at x1 = {x1} (F(t*) = {residual})")]
    NoRoot { x1: f64, residual: f64 },
    #[error("inflow is not calibrated: admissibility residual {0}")]
    NotCalibrated(f64),
    #[error("desingularized fixed point diverged at x1 = {0}")]
    SonicWindowDivergence(f64),
    #[error("operation requires throat class {expected}, found {found}")]
    WrongThroatClass { expected: String, found: String },
    #[error("only {found} samples in the fit window, need at least {needed}")]
    InsufficientPoints { found: usize, needed: usize },
    #[error("upstream state is not supersonic (M^2 = {0})")]
    NotSupersonic(f64),
    #[error("exit pressure {p_e} outside ({p_min}, {p_max})")]
    ExitPressureOutOfRange { p_e: f64, p_min: f64, p_max: f64 },
    #[error("exit pressure is not monotone in shock position near Ls = {0}")]
    NonMonotone(f64),
    #[error("singular banded system at row {0}")]
    SingularSystem(usize),
    #[error("sigma continuation is not converging: {0}")]
    NonConvergent(String),
    #[error("no multiplier offset satisfies the admissibility inequalities")]
    NoMultiplier,
    #[error("perturbation left the trust region: {0}")]
    TrustRegionExceeded(String),
    #[error("fixed-point iteration is not contracting: {0}")]
    NoContraction(String),
    #[error("Mach number is not increasing along x2 = {0}")]
    NonMonotoneMach(f64),
    #[error("entrance stream function is not strictly increasing")]
    NonMonotoneEntrance,
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn name(&self) -> &'static str {
        match self {
            Error::Domain(_) => "Domain",
            Error::Vacuum(_) => "Vacuum",
            Error::InvalidProfile(_) => "InvalidProfile",
            Error::UnclassifiableThroat => "UnclassifiableThroat",
            Error::NoSubsonicCalibration => "NoSubsonicCalibration",
            Error::NoRoot { .. } => "NoRoot",
            Error::NotCalibrated(_) => "NotCalibrated",
            Error::SonicWindowDivergence(_) => "SonicWindowDivergence",
            Error::WrongThroatClass { .. } => "WrongThroatClass",
            Error::InsufficientPoints { .. } => "InsufficientPoints",
            Error::NotSupersonic(_) => "NotSupersonic",
            Error::ExitPressureOutOfRange { .. } => "ExitPressureOutOfRange",
            Error::NonMonotone(_) => "NonMonotone",
            Error::SingularSystem(_) => "SingularSystem",
            Error::NonConvergent(_) => "NonConvergent",
            Error::NoMultiplier => "NoMultiplier",
            Error::TrustRegionExceeded(_) => "TrustRegionExceeded",
            Error::NoContraction(_) => "NoContraction",
            Error::NonMonotoneMach(_) => "NonMonotoneMach",
            Error::NonMonotoneEntrance => "NonMonotoneEntrance",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
