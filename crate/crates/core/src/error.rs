use serde::{Deserialize, Serialize};

/// The compatibility condition that produced the worst distance in a CCBP build.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OffendingPair {
    /// Condition label: "origin", "base-plane", "same-scale" or "next-scale".
    pub condition: String,
    /// Level of the first ball.
    pub level: usize,
    /// Index of the first ball within its level.
    pub first: usize,
    /// Level of the second ball (equal to `level` for same-scale conditions).
    pub other_level: usize,
    /// Index of the second ball within `other_level`.
    pub second: usize,
    /// Normalized distance measured for this pair.
    pub value: f64,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("plane does not meet the ball of radius {radius} (distance {distance})")]
    EmptyIntersection { distance: f64, radius: f64 },

    #[error("ball of radius {radius} contains no sample mass")]
    EmptyBall { radius: f64 },

    #[error("operation requires unit normals but the surface has none")]
    MissingNormals,

    #[error("no sample point escapes the {neighborhood}-neighborhood of the subspace")]
    NoEscapePoint { neighborhood: f64 },

    #[error("subspace of dimension {dim} is not allowed (must be at most {max})")]
    InvalidSubspace { dim: usize, max: usize },

    #[error("hypothesis violated: {0}")]
    HypothesisViolated(String),

    #[error("scale {radius} is below the sampling resolution {h_min}")]
    ResolutionExceeded { radius: f64, h_min: f64 },

    #[error("average normal has norm {norm}, too small to define a plane")]
    DegenerateNormal { norm: f64 },

    #[error("achieved compatibility {achieved} exceeds target {target}")]
    EpsilonExceeded {
        achieved: f64,
        target: f64,
        worst: OffendingPair,
    },

    #[error("flow diverged at level {level}: displacement {displacement} > {limit}")]
    FlowDiverged {
        level: usize,
        displacement: f64,
        limit: f64,
    },

    #[error("grid points {0} and {1} have the same image")]
    DegeneratePair(usize, usize),

    #[error("values are not {lipschitz}-Lipschitz: points {first} and {second} give quotient {quotient}")]
    NotLipschitz {
        lipschitz: f64,
        first: usize,
        second: usize,
        quotient: f64,
    },

    #[error("point {0} has no neighbor within any of the given radii")]
    NoNeighbors(usize),

    #[error("intrinsic graph is disconnected ({components} components)")]
    Disconnected { components: usize },

    #[error("bad zoo specification: {0}")]
    BadSpec(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
