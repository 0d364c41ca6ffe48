use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("metric is not positive definite at {point:?} (smallest eigenvalue {min_eig:e})")]
    NonPositiveDefinite { point: [f64; 3], min_eig: f64 },
    #[error("finite-difference stencil leaves the evaluation domain at {0:?}")]
    StencilOutOfDomain([f64; 3]),
    #[error("scale factor must be positive, got {0}")]
    NonPositiveScale(f64),
    #[error("level curve at v = {v} is degenerate (length {length:e})")]
    DegenerateLevelCurve { v: f64, length: f64 },
    #[error("contact angle is degenerate (sin = {sin:e}) at (u, v) = ({u}, {v})")]
    DegenerateContactAngle { u: f64, v: f64, sin: f64 },
    #[error("quadratic data is not strictly convex: c11 c22 - c12^2 = {0:e}")]
    NotStrictlyConvex(f64),
    #[error("leaf is empty or lies outside the domain")]
    EmptyLeaf,
    #[error("boundary variation is not tangent to the boundary (normal component {0:e})")]
    VariationNotTangent(f64),
    #[error("turning angle jumps by {0} between samples; refine the curve")]
    UnwrapAmbiguity(f64),
    #[error("leaf is not of disk type")]
    NonDiskTopology,
    #[error("direction (a, b) must be nonzero")]
    ZeroDirection,
    #[error("vertex metric is not positive definite")]
    DegenerateCone,
    #[error("scaled region leaves the truncated cone (height {0})")]
    RegionEscapesCone(f64),
    #[error("line search stalled after {iters} iterations")]
    LineSearchStall { iters: usize },
    #[error("leaf height range collapsed")]
    LeafDegenerate,
    #[error("Newton iteration diverged after {iters} iterations (residual {residual:e})")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("linearized operator is singular")]
    SingularLinearization,
    #[error("foliation leaves overlap between t = {0} and t = {1}")]
    FoliationOverlap(f64, f64),
    #[error("order fit needs at least 4 usable samples, got {0}")]
    InsufficientSamples(usize),
    #[error("scales must be positive and distinct")]
    DegenerateScales,
    #[error("parse error at byte {offset}: expected one of [{}], found {found}", expected.join(", "))]
    Parse { offset: usize, expected: Vec<String>, found: String },
    #[error("point {0:?} lies outside the domain")]
    OutOfDomain([f64; 3]),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;
