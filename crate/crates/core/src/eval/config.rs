use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// The shipped rubric file with the four real-robot tasks.
pub const DEFAULT_TASKS: &str = include_str!("../../data/tasks.toml");

/// A scored task; every checkpoint is worth exactly one point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub id: String,
    pub name: String,
    pub max_score: u32,
    pub checkpoints: Vec<String>,
    #[serde(default = "default_trials")]
    pub trials: u32,
}

fn default_trials() -> u32 {
    10
}

impl TaskSpec {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.id.is_empty() {
            return Err(EvalError::InvalidConfig("task id is empty".into()));
        }
        if self.max_score == 0 || self.checkpoints.len() != self.max_score as usize {
            return Err(EvalError::InvalidConfig(format!(
                "task `{}` has {} checkpoints for max score {}",
                self.id,
                self.checkpoints.len(),
                self.max_score
            )));
        }
        Ok(())
    }
}

#[derive(Deserialize)]
struct TaskFile {
    task: Vec<TaskSpec>,
}

/// Parses a `[[task]]` rubric file.
pub fn parse_tasks(text: &str) -> Result<Vec<TaskSpec>, EvalError> {
    let file: TaskFile =
        toml::from_str(text).map_err(|e| EvalError::InvalidConfig(e.to_string()))?;
    for t in &file.task {
        t.validate()?;
    }
    Ok(file.task)
}

pub fn load_tasks(path: &Path) -> Result<Vec<TaskSpec>, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::InvalidConfig(format!("{}: {e}", path.display())))?;
    parse_tasks(&text)
}

/// Which loop of the protocol is outermost when the service picks the next queue.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IterationOrder {
    /// Every group runs task 1, then every group runs task 2, ...
    #[default]
    TaskOuter,
    /// Group 1 runs all tasks, then group 2, ...
    GroupOuter,
}

impl std::str::FromStr for IterationOrder {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "task_outer" => Ok(IterationOrder::TaskOuter),
            "group_outer" => Ok(IterationOrder::GroupOuter),
            other => Err(EvalError::InvalidConfig(format!(
                "unknown iteration order `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub models: Vec<String>,
    pub tasks: Vec<TaskSpec>,
    pub group_size: usize,
    pub trials_per_model: u32,
    pub seed: u64,
    #[serde(default)]
    pub order: IterationOrder,
}

impl EvalConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        if self.models.is_empty() {
            return Err(EvalError::InvalidConfig("model pool is empty".into()));
        }
        if self.tasks.is_empty() {
            return Err(EvalError::InvalidConfig("task set is empty".into()));
        }
        if self.group_size == 0 {
            return Err(EvalError::InvalidConfig(
                "group size must be at least 1".into(),
            ));
        }
        if self.trials_per_model == 0 {
            return Err(EvalError::InvalidConfig(
                "trials per model must be at least 1".into(),
            ));
        }
        let mut seen = std::collections::HashSet::new();
        for m in &self.models {
            if m.is_empty() || !seen.insert(m) {
                return Err(EvalError::InvalidConfig(format!(
                    "model id `{m}` is empty or repeated"
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for t in &self.tasks {
            t.validate()?;
            if !seen.insert(&t.id) {
                return Err(EvalError::InvalidConfig(format!(
                    "task id `{}` repeated",
                    t.id
                )));
            }
        }
        Ok(())
    }

    pub fn task(&self, id: &str) -> Option<&TaskSpec> {
        self.tasks.iter().find(|t| t.id == id)
    }
}
