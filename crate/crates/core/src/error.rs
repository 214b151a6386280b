use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("compfunc: argument {arg} outside the certified domain [0, {cap}]")]
    OutOfDomain { arg: f64, cap: f64 },
    #[error("compfunc: value {value} exceeds the reachable range {max} (raise domain_cap)")]
    RangeExceeded { value: f64, max: f64 },
    #[error("compfunc: cannot compose a {outer} function with a {inner} function")]
    ClassIncompatible { outer: String, inner: String },
    #[error("compfunc: {0}")]
    InvalidFunction(String),
    #[error("semigroup: {0}")]
    InvalidGenerator(String),
    #[error("semigroup: dimension mismatch (expected {expected}, got {got})")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("semigroup: no decay detected, ||T(t_max)|| = {norm_at_tmax} >= 1 at t_max = {t_max}")]
    NoDecay { t_max: f64, norm_at_tmax: f64 },
    #[error("evolution: {0}")]
    InvalidSignal(String),
    #[error(
        "evolution: fixed-point iteration failed to contract at t = {time} with step {step} \
         (effective Lipschitz constant {effective_lipschitz})"
    )]
    NonContraction {
        time: f64,
        step: f64,
        effective_lipschitz: f64,
    },
    #[error("evolution: blow-up cap {cap} exceeded at t = {escape_time} (last finite norm {last_norm})")]
    BlowUp { escape_time: f64, last_norm: f64, cap: f64 },
    #[error("lyap_linear: {0}")]
    InvalidLyapunov(String),
    #[error("wurs: {0}")]
    Synthesis(String),
    #[error("harness: {0}")]
    Harness(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}
