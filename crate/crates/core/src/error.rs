use thiserror::Error;

/// Errors raised by the numerical routines of this crate.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("state outside the domain: {0}")]
    Domain(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("primal dissipation potential not available")]
    MissingPrimal,
    #[error("supremum unbounded (value {value:.3e})")]
    Unbounded { value: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("Newton iteration diverged (residual {residual:.3e})")]
    NewtonDivergence { residual: f64 },
    #[error("step size {step:.3e} fell below the floor")]
    StepUnderflow { step: f64 },
    #[error("affine constraint is infeasible (residual {residual:.3e})")]
    ConstraintInfeasible { residual: f64 },
    #[error("constraint drift {residual:.3e} exceeds tolerance")]
    ConstraintDrift { residual: f64 },
    #[error("dual routes disagree: {primal} vs {dual}")]
    DualityMismatch { primal: f64, dual: f64 },
    #[error("minimization value {value:.3e} is not zero: no NESS at this port force")]
    NotNullMinimizer { value: f64 },
    #[error("constraint set {{u : P*DE(u) = -eta}} is infeasible")]
    Infeasible,
    #[error("BER condition {condition} violated at sample {witness} (excess {excess:.3e})")]
    BerViolation {
        condition: &'static str,
        witness: usize,
        excess: f64,
    },
    #[error("invalid eps {0}")]
    InvalidEps(f64),
    #[error("singular block: {0}")]
    SingularBlock(&'static str),
    #[error("singular coefficient: {0}")]
    SingularCoefficient(String),
    #[error("boundary value problem is singular")]
    BvpSingular,
    #[error("Wronskian drift {drift:.3e} exceeds tolerance")]
    WronskianDrift { drift: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("point {0} lies outside the map domain")]
    OutOfDomain(f64),
    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;
