//! Simulation and offline evaluation of pedagogical safety for tutoring
//! bandits: prerequisite graph, simulated learners, constrained contextual
//! bandit, windowed constraint scoring, reward-hacking severity, and the
//! statistics and sensitivity analyses built on top of them.

pub mod agent;
pub mod config;
pub mod analysis;
pub mod error;
pub mod evaluate;
pub mod graph;
pub mod harness;
pub mod io;
pub mod log;
pub mod pedagogy;
pub mod report;
pub mod safety;
pub mod stats;
pub mod student;

pub use error::{AgentError, EvalError, GraphError, HarnessError, StatsError};
pub use graph::{ConceptGraph, KnowledgeState};
pub use harness::{run_matrix, run_session, ConditionConfig, ExperimentMatrix, SimSettings};
pub use log::{ConditionName, LogSet, SessionLog};
pub use pedagogy::Action;
pub use safety::ConstraintParams;
pub use student::{LearnerProfile, ProfileKind};
