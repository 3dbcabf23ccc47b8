use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("curriculum document is malformed: {0}")]
    Parse(String),
    #[error("duplicate concept id `{0}`")]
    DuplicateId(String),
    #[error("concept `{concept}` lists unknown prerequisite `{prereq}`")]
    DanglingPrerequisite { concept: String, prereq: String },
    #[error("prerequisite cycle through {0:?}")]
    Cycle(Vec<String>),
    #[error("concept `{concept}` declares depth {declared} but the graph gives {computed}")]
    DepthMismatch {
        concept: String,
        declared: u32,
        computed: u32,
    },
    #[error("knowledge state has {got} entries, graph has {expected} concepts")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("unknown concept `{0}`")]
    UnknownConcept(String),
    #[error("mastery decreased for concept `{0}`; expected an elementwise non-decreasing pair")]
    NotMonotone(String),
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("reward must be finite, got {0}")]
    NonFiniteReward(f64),
    #[error("no candidate (action, concept) pairs to select from")]
    EmptyCandidates,
    #[error("feature vector has {got} entries, model expects {expected}")]
    FeatureDimension { expected: usize, got: usize },
}

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("session has {steps} steps, fewer than one window of {window}")]
    ShortLog { steps: usize, window: usize },
    #[error("session has {steps} steps, needs more than the warm-up of {warmup}")]
    ShortWarmup { steps: usize, warmup: usize },
    #[error("reference reward must be positive, got {0}")]
    NonPositiveReference(f64),
    #[error("no per-window gains to calibrate from")]
    EmptyPool,
    #[error("no logs for the mastery-only condition")]
    MissingMasLogs,
    #[error("window length must be at least 1")]
    ZeroWindow,
    #[error("percentile {0} outside [0, 100]")]
    Percentile(f64),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("each sample needs at least two observations (got {0} and {1})")]
    TooFewObservations(usize, usize),
    #[error("both samples have zero variance")]
    ZeroVariance,
    #[error("family size must be at least 1")]
    EmptyFamily,
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("session {condition}/{profile}/seed {seed} failed: {source}")]
    Session {
        condition: String,
        profile: String,
        seed: u64,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("no logs to summarize")]
    EmptyLogSet,
    #[error("{path}:{line}: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
}

impl HarnessError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
