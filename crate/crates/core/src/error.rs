use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid family spec: {0}")]
    InvalidSpec(String),

    #[error("collapse parameter epsilon = {0} outside (0, 1]")]
    EpsilonOutOfRange(f64),

    #[error("fiber under-resolved along axis {axis}: {nodes} nodes, at least {required} required")]
    UnderResolved {
        axis: usize,
        nodes: usize,
        required: usize,
    },

    #[error("radius {radius} reaches the chart cut locus (must stay below {limit}); use a smaller radius")]
    CutLocus { radius: f64, limit: f64 },

    #[error("degenerate metric at node {node}")]
    DegenerateMetric { node: usize },

    #[error("degenerate mesh face {face}")]
    DegenerateFace { face: usize },

    #[error("level {level:?} lies outside the range of the map on its domain")]
    LevelOutOfRange { level: Vec<f64> },

    #[error("no regular fiber found among {sampled} sampled levels")]
    NoRegularFiber { sampled: usize },

    #[error("empty region")]
    EmptyRegion,

    #[error("singular linear system: {0}")]
    SingularSystem(String),

    #[error("eigensolver did not converge: {converged} of {requested} pairs, worst residual {residual:e}")]
    EigenNoConvergence {
        converged: usize,
        requested: usize,
        residual: f64,
    },

    #[error("eigen residual {residual:e} exceeds {limit:e}")]
    EigenResidual { residual: f64, limit: f64 },

    #[error("ratio undefined: function vanishes on the outer ball")]
    UndefinedRatio,

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("node {node} is singular for the splitting map")]
    SingularPoint { node: usize },

    #[error("reprojection failed at t = {t} (last valid position {position:?})")]
    ReprojectionFailed { t: f64, position: Vec<f64> },

    #[error("step size {dt:e} violates stability limit {limit:e}")]
    StepSize { dt: f64, limit: f64 },

    #[error("fiber neighborhood of radius {radius} exits the domain of the map")]
    NeighborhoodExitsDomain { radius: f64 },

    #[error("hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("cache: {0}")]
    Cache(String),

    #[error("sweep point epsilon = {epsilon}: {source}")]
    SweepPoint {
        epsilon: f64,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
