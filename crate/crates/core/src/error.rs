use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("CLEC cannot be satisfied at any positive distance")]
    Infeasible,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("virtual distance {d_v} is below the minimum connecting threshold {d_min}")]
    DisconnectedVrg { d_v: f64, d_min: f64 },

    #[error("GCO did not reach a connected topology within {iterations} iterations")]
    NonConvergence { iterations: usize },

    #[error("GCO diverged after {iterations} iterations")]
    Diverged { iterations: usize },

    #[error("training diverged at episode {episode}")]
    TrainingDiverged {
        episode: usize,
        last_finite: Box<crate::gcn::GcnParams<f64>>,
    },

    #[error("meta episode produced a non-finite gradient")]
    EpisodeDiverged,

    #[error("generation infeasible after {attempts} consecutive rejections")]
    GenerationInfeasible { attempts: usize },

    #[error("no connectivity-breaking destruction set found after {attempts} attempts")]
    NoBreakingSet { attempts: usize },

    #[error("meta-parameter store has no entry for n = {0}")]
    StoreMiss(usize),

    #[error("store format: {0}")]
    StoreFormat(String),

    #[error("invalid UED schedule: {0}")]
    ScheduleInvalid(String),

    #[error("protocol corruption: {0}")]
    ProtocolCorruption(String),

    #[error("healing failed: {0}")]
    HealFailed(String),

    #[error("invalid scenario: {0}")]
    Scenario(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
