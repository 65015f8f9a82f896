use thiserror::Error;

pub type Result<T, E = NetError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("row {row}: loop edge ({vertex}, {vertex}) not allowed")]
    LoopEdge { row: usize, vertex: String },

    #[error("row {row}: edge weight must be positive, got {weight}")]
    NonPositiveWeight { row: usize, weight: f64 },

    #[error("empty edge list: m > 0 required")]
    EmptyEdgeList,

    #[error("empty input: at least one observation required")]
    EmptyInput,

    #[error("graph is disconnected ({components} components); apply largest_component first")]
    Disconnected { components: usize },

    #[error("vertex {vertex} has zero degree; apply largest_component first")]
    IsolatedVertex { vertex: usize },

    #[error("iterative solver did not converge after {iterations} iterations (residual norm {residual:.3e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("augmented Laplacian is singular; graph is not connected")]
    SingularAugmented,

    #[error("exact Cheeger exponential; use λ₂ bounds (n = {n} > {max})")]
    CheegerTooLarge { n: usize, max: usize },

    #[error("stochastic diagonal estimation requires at least 8 probes, got {0}")]
    TooFewProbes(usize),

    #[error("collinear covariates: rank(X) = {rank} < p = {p}")]
    CollinearCovariates { rank: usize, p: usize },

    #[error("covariates collinear with network dummies: rank deficiency {deficiency}")]
    CollinearWithNetwork { deficiency: usize },

    #[error("X collinear with B (ρ = {rho:.3e})")]
    RhoZero { rho: f64 },

    #[error("no residual degrees of freedom (m = {m}, n - 1 + p = {needed})")]
    NoResidualDf { m: usize, needed: usize },

    #[error("vertex pair must be distinct, got ({0}, {0})")]
    SameVertex(usize),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("missing column `{0}` in header")]
    MissingColumn(String),

    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownConfigKeys(Vec<String>),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl NetError {
    /// True for failures caused by the input data rather than by numerics.
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            NetError::NonConvergence { .. }
                | NetError::SingularAugmented
                | NetError::CollinearCovariates { .. }
                | NetError::CollinearWithNetwork { .. }
                | NetError::RhoZero { .. }
                | NetError::NoResidualDf { .. }
        )
    }
}
