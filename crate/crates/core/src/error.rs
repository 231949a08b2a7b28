use thiserror::Error;

/// Failures raised by the construction pipeline.
///
/// Values are carried as `f64` regardless of the scalar type used for
/// the computation so that the error type stays non-generic.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("leading coefficient b1 nearly vanishes (min |b1| = {min_abs_b1:e})")]
    DegenerateLeadingCoefficient { min_abs_b1: f64 },

    #[error("coefficients do not share a common period")]
    PeriodMismatch,

    #[error("A(t) has constant nonzero sign; no sign-changing solution can exist")]
    NoZeros,

    #[error("slope field evaluated at x = 0 (t = {t})")]
    DivisionAtZero { t: f64 },

    #[error("step size underflow at t = {t}, x = {x:e}")]
    StepSizeUnderflow { t: f64, x: f64 },

    #[error("step count exceeded ({steps}) at t = {t}")]
    StepCountExceeded { steps: usize, t: f64 },

    #[error("zero at t = {t} is {kind}; branches can only be seeded at saddle or degenerate zeros")]
    WrongZeroKind { t: f64, kind: &'static str },

    #[error("branch left the admissible cone at t = {t}, x = {x:e}")]
    BranchEscape { t: f64, x: f64 },

    #[error("gluing mismatch at t = {t}: left slope {left}, right slope {right}, expected {expected}")]
    GluingMismatch {
        t: f64,
        left: f64,
        right: f64,
        expected: f64,
    },

    #[error("existence condition violated (margin {margin:e})")]
    ConditionViolated { margin: f64 },

    #[error("focus at t = {t} (discriminant {discriminant:e}); no solution can vanish there")]
    FocusAtZero { t: f64, discriminant: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, Error>;
