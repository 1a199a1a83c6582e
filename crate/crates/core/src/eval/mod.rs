//! Grouped blind evaluation: anonymized, randomized trial queues for a human
//! operator, durable outcome records, rubric scoring and deanonymized
//! reports, served over HTTP.

mod config;
mod log;
mod report;
mod server;
mod session;

use thiserror::Error;

pub use config::{load_tasks, parse_tasks, EvalConfig, IterationOrder, TaskSpec, DEFAULT_TASKS};
pub use log::{now_ms, PersistentSession, SessionLog};
pub use report::{alias_report, deanonymize_report, score_percentage, EvalReport, ModelTaskStats};
pub use server::{router, serve, TOKEN_HEADER};
pub use session::{
    score_outcomes, Dispatch, EvalSession, Event, Group, QueueProgress, TranscriptEntry,
    TrialRecord, TrialTicket,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("no queue for task `{task}`, group {group}")]
    UnknownQueue { task: String, group: usize },
    #[error("out of order: {0}")]
    OutOfOrderRecord(String),
    #[error("trial {trial_index} of ({task}, {group}) is already recorded")]
    DuplicateRecord {
        task: String,
        group: usize,
        trial_index: usize,
    },
    #[error("expected {expected} checkpoint outcomes, got {got}")]
    RubricLengthMismatch { expected: usize, got: usize },
    #[error("checkpoint outcome must be 0 or 1, got {0}")]
    InvalidOutcome(u8),
    #[error("expected {expected} trials, got {got}")]
    IncompleteTrials { expected: usize, got: usize },
    #[error("session log: {0}")]
    Log(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl EvalError {
    /// Stable snake_case name used in wire and CLI errors.
    pub fn kind(&self) -> &'static str {
        match self {
            EvalError::InvalidConfig(_) => "invalid_config",
            EvalError::UnknownQueue { .. } => "unknown_queue",
            EvalError::OutOfOrderRecord(_) => "out_of_order_record",
            EvalError::DuplicateRecord { .. } => "duplicate_record",
            EvalError::RubricLengthMismatch { .. } => "rubric_length_mismatch",
            EvalError::InvalidOutcome(_) => "invalid_outcome",
            EvalError::IncompleteTrials { .. } => "incomplete_trials",
            EvalError::Log(_) => "log",
            EvalError::Io(_) => "io",
        }
    }
}
