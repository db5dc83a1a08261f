use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("point ({u}, {v}) lies outside the unit fiber disk (u²+v² = {r2})")]
    OutsideDisk { u: f64, v: f64, r2: f64 },

    #[error("angular gap {gap} between samples {index} and {next} is too close to π; refine the sampling", next = .index + 1)]
    LiftAmbiguous { index: usize, gap: f64 },

    #[error("malformed curve: {0}")]
    MalformedCurve(String),

    #[error("operation requires a closed curve")]
    NotClosed,

    #[error("angle {angle} is not a regular value of the angular lift")]
    NotRegularValue { angle: f64 },

    #[error("no regular value found in the sweep; the curve has constant angle")]
    DegenerateCurve,

    #[error("linking certificate contradicts the crossing data: radial disks meet the curve {upper} times")]
    InconsistentCertificate { upper: u64 },

    #[error("refinement budget of {budget} samples exceeded")]
    RefinementBudgetExceeded { budget: usize },

    #[error("map is not an embedding of V: {reason}")]
    NotEmbedding { reason: String, t1: f64, t2: f64, separation: f64 },

    #[error("invalid map parameters: {0}")]
    InvalidMap(String),

    #[error("index data is uncertified (bounds {lower}..={upper})")]
    UncertifiedIndex { lower: u64, upper: u64 },

    #[error("{value} has no integer {root}-th root")]
    NotPerfectPower { value: i64, root: u32 },

    #[error("grid spacing {spacing} exceeds epsilon/4 = {limit}")]
    GridTooCoarse { spacing: f64, limit: f64 },

    #[error("unsupported smoothness order {0}; supported orders are 1, 2, 3")]
    UnsupportedOrder(usize),

    #[error("root isolation failed after {0} bisections")]
    RootIsolationFailed(usize),

    #[error("piece [{t0}, {t1}] is not normalized: measured derivative bound {bound}")]
    NormalizationFailed { t0: f64, t1: f64, bound: f64 },

    #[error("Taylor remainder {measured} exceeds bound {bound} on [{t0}, {t1}]")]
    TaylorRemainderExceeded { t0: f64, t1: f64, measured: f64, bound: f64 },

    #[error("epsilon {epsilon} is not below the rescaling threshold {epsilon0}")]
    EpsilonTooLarge { epsilon: f64, epsilon0: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config error: {0}")]
    Config(String),
}
