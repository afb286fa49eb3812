use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("{context}: expected length {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite gradient; step rejected")]
    NonFiniteGradient,
    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error)]
pub enum Td3Error {
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite {what} (critic1 loss {critic1_loss}, critic2 loss {critic2_loss})")]
    NonFinite {
        what: &'static str,
        critic1_loss: f64,
        critic2_loss: f64,
    },
    #[error("non-finite observation")]
    NonFiniteObservation,
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid agent configuration: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error)]
pub enum PlannerError {
    #[error("graph is empty")]
    EmptyGraph,
    #[error("no path from node {from} to node {to}")]
    Disconnected { from: usize, to: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("goal dimension {goal} does not match graph dimension {graph}")]
    DimensionMismatch { goal: usize, graph: usize },
}

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("geometry error: {0}")]
    Geometry(String),
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Planner(#[from] PlannerError),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("inconsistent trajectory: {0}")]
    InconsistentTrajectory(String),
    #[error("replay buffer is empty")]
    Empty,
    #[error("every sample attempt failed planner repair ({0} failures)")]
    RepairExhausted(usize),
}
