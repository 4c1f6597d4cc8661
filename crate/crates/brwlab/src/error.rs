use thiserror::Error;

/// Errors shared across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient points: log-log fit needs at least 3 points with distinct n")]
    InsufficientPoints,
    #[error("fit requires strictly positive y values, got {0}")]
    NonPositiveFitValue(f64),
    #[error("generation mismatch: overlap needs both addresses at the same generation ({0} vs {1})")]
    GenerationMismatch(usize, usize),
    #[error("subcritical mean: offspring mean must exceed 1, got {0}")]
    SubcriticalMean(f64),
    #[error("invalid offspring law: {0}")]
    InvalidOffspringLaw(String),
    #[error("survival conditioning failed: no surviving tree shape after {0} resamples")]
    SurvivalConditioningFailed(u64),
    #[error("pair count: overlap {h} out of range for depth {n}")]
    OverlapOutOfRange { h: u32, n: u32 },
    #[error("variance profile: {0}")]
    InvalidProfile(String),
    #[error("profile length mismatch: tree depth {depth} but profile length {len}")]
    ProfileLengthMismatch { depth: u32, len: usize },
    #[error("girsanov shift: {0}")]
    InvalidCovariance(String),
    #[error("overlap {h} exceeds walk length {n}")]
    TiltOverlapTooLarge { h: u32, n: u32 },
    #[error("invalid CREM profile: {0}")]
    InvalidCremProfile(String),
    #[error("depth cap: cascade depth {0} exceeds 24")]
    CascadeDepthCap(u32),
    #[error("gap identically zero: universality gap needs a non-constant profile (pass the override to force)")]
    GapIdenticallyZero,
    #[error("beta {beta} is not below beta_c {beta_c} (pass the override to force)")]
    BetaAboveCritical { beta: f64, beta_c: f64 },
    #[error("kernel domination violated: profile exceeds 1 at grid point {0}")]
    KernelDominationViolated(usize),
    #[error("n list too short: critical fit needs >= 3 depths with max/min >= 3")]
    NListTooShort,
    #[error("beta must equal beta_c ({expected}) for the critical fit, got {got}")]
    BetaNotCritical { expected: f64, got: f64 },
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
