use thiserror::Error;

/// Failure modes shared by every operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("leading term is neither invertible nor of Cauchy shape")]
    SingularLeadingTerm,
    #[error("series is not normalized (needs zero constant term and identity linear term)")]
    NotNormalized,
    #[error("oracle rejected the point: {0}")]
    DomainError(String),
    #[error("need data to order {needed}, have {available}")]
    InsufficientOrder { needed: usize, available: usize },
    #[error("unknown fixture `{0}`")]
    UnknownFixture(String),
    #[error("resolvent is singular")]
    SingularResolvent,
    #[error("outside the convergence region: ‖b⁻¹‖·M = {0}")]
    OutsideConvergence(f64),
    #[error("transform value is not invertible")]
    SingularValue,
    #[error("fixed-point map is not a contraction at this point: {0}")]
    NoContraction(String),
    #[error("no convergence after {0} iterations")]
    MaxIterations(usize),
    #[error("Kantorovich certificate failed: h = {0} > 1/2")]
    CertificateFailed(f64),
    #[error("derivative is singular")]
    SingularDerivative,
    #[error("constant term alpha is not self-adjoint (defect {0})")]
    NonSelfAdjointAlpha(f64),
    #[error("series violates R(b*) = R(b)* (defect {0})")]
    SelfAdjointnessViolated(f64),
    #[error("map is not completely positive (Choi min eigenvalue {0})")]
    NotCP(f64),
    #[error("distribution is not infinitely divisible (Gram min eigenvalue {0})")]
    NotInfinitelyDivisible(f64),
}

pub type Result<T> = std::result::Result<T, Error>;
