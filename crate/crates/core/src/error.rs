use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate triangle {element}: signed area {area:e}")]
    DegenerateTriangle { element: usize, area: f64 },

    #[error("mesh parse error at line {line}: {message}")]
    MeshParse { line: usize, message: String },

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("quadrature exactness degree {0} out of range (max 20)")]
    QuadratureDegree(usize),

    #[error("unsupported polynomial order k = {0}; k must be 1 or 2")]
    UnsupportedOrder(usize),

    #[error("singular local matrix on element {element} (pivot magnitude {pivot:e})")]
    SingularLocal { element: usize, pivot: f64 },

    #[error(
        "validity bound violated on element {element}: I - lambda Q2L has smallest singular value {sigma_min:e} at lambda = {lambda}"
    )]
    ResolventInvalid {
        element: usize,
        sigma_min: f64,
        lambda: f64,
    },

    #[error("condensed system is singular: {0}")]
    SingularCondensed(String),

    #[error("eigenvalue {index} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        index: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("eigenvalue {index} is tracked inside a cluster of relative width {width:e}")]
    EigenCluster { index: usize, width: f64 },

    #[error("requested {requested} eigenvalues but only {available} finite ones exist")]
    TooManyEigenvalues { requested: usize, available: usize },

    #[error("{what} size {size} exceeds cap {cap}")]
    CapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
