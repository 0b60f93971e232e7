use thiserror::Error;

/// Errors surfaced by solvers and verification operations.
#[derive(Error, Debug)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("Hessian at a minimum is not positive definite: {0}")]
    Degenerate(String),

    #[error("sigma integral saturates at {reached:.6} < {required:.6} before r_max={r_max}")]
    RMaxTooSmall {
        reached: f64,
        required: f64,
        r_max: f64,
    },

    #[error("minimization did not converge: {0}")]
    NonConvergence(String),

    #[error("box constraint active after minimization: max|u| = {max_norm:.6} > M = {ball_m:.6}")]
    ConstraintActive { max_norm: f64, ball_m: f64 },

    #[error("no excursion found: {0}")]
    PreconditionNotMet(String),

    #[error("excursion smallness test fails: ramp cost {lhs:.6e} >= barrier integral {rhs:.6e}")]
    SmallnessFails { lhs: f64, rhs: f64 },

    #[error("tail window too short: {0} usable nodes")]
    TailTooShort(usize),

    #[error("eigensolver failure: {0}")]
    Eigensolver(String),

    #[error("denominator guard violated: |v_y| = {vy_norm:.6} > |u'|/2 = {limit:.6}")]
    GuardViolated { vy_norm: f64, limit: f64 },

    #[error("confinement band violated beyond depth {measured_d:.3} (limit {limit:.3})")]
    TrapViolation { measured_d: f64, limit: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
