use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::session::EvalSession;
use super::EvalError;

/// `100 · Σ scores / (N · max_score)`, requiring exactly `N` trials.
pub fn score_percentage(scores: &[u32], trials: u32, max_score: u32) -> Result<f64, EvalError> {
    if scores.len() != trials as usize {
        return Err(EvalError::IncompleteTrials {
            expected: trials as usize,
            got: scores.len(),
        });
    }
    let total: u32 = scores.iter().sum();
    Ok(100.0 * total as f64 / (trials as f64 * max_score as f64))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelTaskStats {
    pub model: String,
    pub task: String,
    pub trials: u32,
    pub total_score: u32,
    /// `None` when no trial was recorded.
    pub mean_score: Option<f64>,
    /// Over the recorded trials when the report is partial.
    pub percentage: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub partial: bool,
    pub rows: Vec<ModelTaskStats>,
}

impl EvalReport {
    pub fn get(&self, model: &str, task: &str) -> Option<&ModelTaskStats> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.task == task)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<24} {:<18} {:>6} {:>6} {:>8} {:>8}",
            "model", "task", "trials", "score", "mean", "pct"
        );
        for r in &self.rows {
            let mean = r.mean_score.map_or("-".into(), |m| format!("{m:.2}"));
            let pct = r.percentage.map_or("-".into(), |p| format!("{p:.1}%"));
            let _ = writeln!(
                out,
                "{:<24} {:<18} {:>6} {:>6} {:>8} {:>8}",
                r.model, r.task, r.trials, r.total_score, mean, pct
            );
        }
        if self.partial {
            out.push_str("partial: not every trial has been recorded\n");
        }
        out
    }
}

fn stats(key: String, task: &str, scores: &[u32], trials: u32, max_score: u32) -> ModelTaskStats {
    let n = scores.len() as u32;
    let total: u32 = scores.iter().sum();
    let percentage = if n == trials {
        score_percentage(scores, trials, max_score).ok()
    } else if n > 0 {
        Some(100.0 * total as f64 / (n as f64 * max_score as f64))
    } else {
        None
    };
    ModelTaskStats {
        model: key,
        task: task.to_string(),
        trials: n,
        total_score: total,
        mean_score: (n > 0).then(|| total as f64 / n as f64),
        percentage,
    }
}

/// Aggregates per true model id and task, in pool and task order.
pub fn deanonymize_report(session: &EvalSession) -> EvalReport {
    let cfg = session.config();
    let mut rows = Vec::with_capacity(cfg.models.len() * cfg.tasks.len());
    for model in &cfg.models {
        for task in &cfg.tasks {
            let scores: Vec<u32> = session
                .records()
                .iter()
                .filter(|r| {
                    r.task == task.id && session.resolve(r.group, &r.alias) == Some(model.as_str())
                })
                .map(|r| r.score)
                .collect();
            rows.push(stats(
                model.clone(),
                &task.id,
                &scores,
                cfg.trials_per_model,
                task.max_score,
            ));
        }
    }
    EvalReport {
        partial: !session.is_complete(),
        rows,
    }
}

/// The same aggregates keyed by `group/alias`, for reports that stay blind.
pub fn alias_report(session: &EvalSession) -> EvalReport {
    let cfg = session.config();
    let mut rows = Vec::new();
    for g in session.groups() {
        for alias in &g.aliases {
            for task in &cfg.tasks {
                let scores: Vec<u32> = session
                    .records()
                    .iter()
                    .filter(|r| r.task == task.id && r.group == g.index && &r.alias == alias)
                    .map(|r| r.score)
                    .collect();
                rows.push(stats(
                    format!("{}/{alias}", g.index),
                    &task.id,
                    &scores,
                    cfg.trials_per_model,
                    task.max_score,
                ));
            }
        }
    }
    EvalReport {
        partial: !session.is_complete(),
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rubric_percentages() {
        let mut scores = vec![2; 9];
        scores.push(3);
        assert_eq!(scores.iter().sum::<u32>(), 21);
        assert!((score_percentage(&scores, 10, 3).unwrap() - 70.0).abs() < 1e-12);
        assert_eq!(score_percentage(&[5; 10], 10, 5).unwrap(), 100.0);
        assert_eq!(score_percentage(&[0; 10], 10, 4).unwrap(), 0.0);
        assert!(matches!(
            score_percentage(&[1; 9], 10, 3),
            Err(EvalError::IncompleteTrials {
                expected: 10,
                got: 9
            })
        ));
    }
}
