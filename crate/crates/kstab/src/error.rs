use thiserror::Error;

/// Errors raised by the library. Each variant maps to a stable machine-readable code.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("polyhedron has empty interior")]
    EmptyInterior,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("normal {0:?} is not primitive")]
    NonPrimitiveNormal(Vec<i64>),
    #[error("vertex {vertex} meets {facets} facets (not simple)")]
    NotSimple { vertex: String, facets: usize },
    #[error("direction is not strictly interior to the dual recession cone")]
    NotInteriorDirection,
    #[error("pole on domain at {0}")]
    PoleOnDomain(String),
    #[error("factor not positive on domain, witness {0}")]
    FactorNotPositive(String),
    #[error("divergent integral: {0}")]
    DivergentIntegral(String),
    #[error("tolerance not met: value {value} with error {error}")]
    ToleranceNotMet { value: f64, error: f64 },
    #[error("function is not admissible")]
    NotAdmissible,
    #[error("R = {0} is below sup f")]
    RTooSmall(String),
    #[error("Hessian is not positive definite at {0}")]
    NotConvexHere(String),
    #[error("grid data is not convex")]
    NotConvexGrid,
    #[error("affine Futaki invariant does not vanish: {0:?}")]
    AffineFutakiNonzero(Vec<f64>),
    #[error("zero denominator")]
    ZeroDenominator,
    #[error("no sign change in scanned range")]
    NoSignChange,
    #[error("potential does not solve the Abreu equation (residual {0})")]
    NotASolution(f64),
    #[error("empty family")]
    EmptyFamily,
    #[error("fixed-point iteration diverged at s = {0}")]
    FixedPointDiverged(f64),
    #[error("schema error: {0}")]
    SchemaError(String),
    #[error("regression mismatch: {0}")]
    RegressionMismatch(String),
}

impl Error {
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyInterior => "EmptyInterior",
            Error::Malformed(_) => "Malformed",
            Error::NonPrimitiveNormal(_) => "NonPrimitiveNormal",
            Error::NotSimple { .. } => "NotSimple",
            Error::NotInteriorDirection => "NotInteriorDirection",
            Error::PoleOnDomain(_) => "PoleOnDomain",
            Error::FactorNotPositive(_) => "FactorNotPositive",
            Error::DivergentIntegral(_) => "DivergentIntegral",
            Error::ToleranceNotMet { .. } => "ToleranceNotMet",
            Error::NotAdmissible => "NotAdmissible",
            Error::RTooSmall(_) => "RTooSmall",
            Error::NotConvexHere(_) => "NotConvexHere",
            Error::NotConvexGrid => "NotConvexGrid",
            Error::AffineFutakiNonzero(_) => "AffineFutakiNonzero",
            Error::ZeroDenominator => "ZeroDenominator",
            Error::NoSignChange => "NoSignChange",
            Error::NotASolution(_) => "NotASolution",
            Error::EmptyFamily => "EmptyFamily",
            Error::FixedPointDiverged(_) => "FixedPointDiverged",
            Error::SchemaError(_) => "SchemaError",
            Error::RegressionMismatch(_) => "RegressionMismatch",
        }
    }

    /// True for errors caused by the input rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::EmptyInterior
                | Error::Malformed(_)
                | Error::NonPrimitiveNormal(_)
                | Error::NotInteriorDirection
                | Error::FactorNotPositive(_)
                | Error::NotAdmissible
                | Error::RTooSmall(_)
                | Error::SchemaError(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
