use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("parameter `{name}` = {value} is invalid: {reason}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        reason: &'static str,
    },

    #[error("{quantity} = {value} is not an integer multiple of the step h = {step}")]
    GridMisalignment {
        quantity: &'static str,
        value: f64,
        step: f64,
    },

    #[error("state component {component} reached {value} at t = {time}")]
    NegativeState {
        component: &'static str,
        value: f64,
        time: f64,
    },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("control value {value} outside [1, {upper}]")]
    ControlOutOfBounds { value: f64, upper: f64 },

    #[error("point is not an equilibrium (relative residual {residual:e})")]
    NotAnEquilibrium { residual: f64 },

    #[error("basic reproduction number R0 = {r0} does not exceed 1")]
    NoEndemicEquilibrium { r0: f64 },

    #[error("threshold case R0 = 1: stability is not classified")]
    ThresholdCase,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no feasible candidate: {0}")]
    Infeasible(String),

    #[error("bracketing failed: {0}")]
    NoBracket(String),

    #[error("config line {line}: {message}")]
    Config { line: usize, message: String },
}
