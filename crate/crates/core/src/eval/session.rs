//! Session state: grouping, aliasing, trial queues and outcome records.
//!
//! The state is a pure fold over [`Event`]s. Dispatch cursors are held in
//! memory only; after a restart each queue resumes right after its last
//! recorded trial.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{EvalConfig, IterationOrder, TaskSpec};
use super::EvalError;

/// Hash of the seed and a labelled tuple; feeds every derived RNG and alias.
fn derive(seed: u64, label: &str, parts: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p);
    }
    h.finalize().into()
}

fn derived_rng(seed: u64, label: &str, parts: &[&[u8]]) -> ChaCha8Rng {
    ChaCha8Rng::from_seed(derive(seed, label, parts))
}

/// A block of models evaluated together under private aliases.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Group {
    pub index: usize,
    pub models: Vec<String>,
    /// `aliases[i]` stands for `models[i]`.
    pub aliases: Vec<String>,
}

impl Group {
    pub fn model_for(&self, alias: &str) -> Option<&str> {
        self.aliases
            .iter()
            .position(|a| a == alias)
            .map(|i| self.models[i].as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Queue {
    task: usize,
    group: usize,
    order: Vec<String>,
    /// Number of dispatched positions.
    cursor: usize,
    /// Position of the most recent record, if any.
    last_recorded: Option<usize>,
}

impl Queue {
    fn pending(&self) -> Option<usize> {
        let last = self.cursor.checked_sub(1)?;
        (self.last_recorded != Some(last)).then_some(last)
    }

    fn is_done(&self) -> bool {
        self.cursor == self.order.len() && self.pending().is_none()
    }
}

/// What the operator is told to run next. Carries no model identity.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialTicket {
    pub task: String,
    pub task_name: String,
    pub group: usize,
    pub alias: String,
    pub trial_index: usize,
    pub queue_len: usize,
    pub rubric: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Dispatch {
    Trial(TrialTicket),
    /// The queue is exhausted; the operator should rest before the next group.
    GroupComplete {
        task: String,
        group: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub record_id: u64,
    pub task: String,
    pub group: usize,
    pub alias: String,
    pub trial_index: usize,
    pub outcomes: Vec<u8>,
    pub score: u32,
    pub timestamp_ms: u64,
}

/// One line of the persisted log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Init { config: EvalConfig },
    Record(TrialRecord),
}

/// Operator-visible history, used to check that sessions replay identically.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Dispatch {
        task: String,
        group: usize,
        alias: String,
        trial_index: usize,
    },
    GroupComplete {
        task: String,
        group: usize,
    },
    Record {
        task: String,
        group: usize,
        alias: String,
        trial_index: usize,
        score: u32,
    },
}

/// Alias-only view of one queue.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct QueueProgress {
    pub task: String,
    pub group: usize,
    pub cursor: usize,
    pub recorded: usize,
    pub length: usize,
    pub pending: Option<TrialTicket>,
    pub complete: bool,
}

#[derive(Clone, Debug)]
pub struct EvalSession {
    cfg: EvalConfig,
    groups: Vec<Group>,
    queues: Vec<Queue>,
    records: Vec<TrialRecord>,
    transcript: Vec<TranscriptEntry>,
}

fn make_aliases(seed: u64, group: usize, models: &[String], pool: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(models.len());
    for m in models {
        let mut counter = 0u64;
        loop {
            let d = derive(
                seed,
                "alias",
                &[
                    &(group as u64).to_le_bytes(),
                    m.as_bytes(),
                    &counter.to_le_bytes(),
                ],
            );
            let alias = format!("h-{:02x}{:02x}{:02x}{:02x}", d[0], d[1], d[2], d[3]);
            let clashes = out.contains(&alias) || pool.iter().any(|id| alias.contains(id.as_str()));
            if !clashes {
                out.push(alias);
                break;
            }
            counter += 1;
        }
    }
    out
}

impl EvalSession {
    /// Partitions the pool, assigns aliases and shuffles every queue.
    pub fn init(cfg: EvalConfig) -> Result<Self, EvalError> {
        cfg.validate()?;
        let mut pool = cfg.models.clone();
        pool.shuffle(&mut derived_rng(cfg.seed, "groups", &[]));
        let groups: Vec<Group> = pool
            .chunks(cfg.group_size)
            .enumerate()
            .map(|(index, chunk)| Group {
                index,
                models: chunk.to_vec(),
                aliases: make_aliases(cfg.seed, index, chunk, &cfg.models),
            })
            .collect();

        let mut queues = Vec::with_capacity(cfg.tasks.len() * groups.len());
        for (t, task) in cfg.tasks.iter().enumerate() {
            for g in &groups {
                let mut order: Vec<String> = g
                    .aliases
                    .iter()
                    .flat_map(|a| std::iter::repeat_n(a.clone(), cfg.trials_per_model as usize))
                    .collect();
                let gi = (g.index as u64).to_le_bytes();
                order.shuffle(&mut derived_rng(
                    cfg.seed,
                    "queue",
                    &[task.id.as_bytes(), &gi],
                ));
                queues.push(Queue {
                    task: t,
                    group: g.index,
                    order,
                    cursor: 0,
                    last_recorded: None,
                });
            }
        }
        Ok(EvalSession {
            cfg,
            groups,
            queues,
            records: Vec::new(),
            transcript: Vec::new(),
        })
    }

    /// Rebuilds a session from its log. The first event must be `Init`.
    pub fn replay(events: impl IntoIterator<Item = Event>) -> Result<Self, EvalError> {
        let mut it = events.into_iter();
        let mut s = match it.next() {
            Some(Event::Init { config }) => Self::init(config)?,
            _ => {
                return Err(EvalError::Log(
                    "log does not start with an init event".into(),
                ))
            }
        };
        for ev in it {
            match ev {
                Event::Init { .. } => return Err(EvalError::Log("second init event".into())),
                Event::Record(r) => s.restore_record(r)?,
            }
        }
        Ok(s)
    }

    fn restore_record(&mut self, r: TrialRecord) -> Result<(), EvalError> {
        let qi = self.queue_index(&r.task, r.group)?;
        let q = &self.queues[qi];
        let task = &self.cfg.tasks[q.task];
        let fresh = q.last_recorded.is_none_or(|l| r.trial_index > l);
        if !fresh
            || q.order.get(r.trial_index) != Some(&r.alias)
            || r.record_id != self.records.len() as u64
        {
            return Err(EvalError::Log(format!(
                "record {} does not fit queue ({}, {})",
                r.record_id, r.task, r.group
            )));
        }
        let score = score_outcomes(task, &r.outcomes)?;
        if score != r.score {
            return Err(EvalError::Log(format!(
                "record {} has inconsistent score",
                r.record_id
            )));
        }
        let q = &mut self.queues[qi];
        q.cursor = r.trial_index + 1;
        q.last_recorded = Some(r.trial_index);
        self.records.push(r);
        Ok(())
    }

    pub fn config(&self) -> &EvalConfig {
        &self.cfg
    }

    /// Experimenter-only: groups with their alias maps.
    pub fn groups(&self) -> &[Group] {
        &self.groups
    }

    pub fn records(&self) -> &[TrialRecord] {
        &self.records
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// The shuffled alias order of one queue.
    pub fn queue_order(&self, task: &str, group: usize) -> Result<&[String], EvalError> {
        Ok(&self.queues[self.queue_index(task, group)?].order)
    }

    fn queue_index(&self, task: &str, group: usize) -> Result<usize, EvalError> {
        self.queues
            .iter()
            .position(|q| self.cfg.tasks[q.task].id == task && q.group == group)
            .ok_or_else(|| EvalError::UnknownQueue {
                task: task.to_string(),
                group,
            })
    }

    fn ticket(&self, q: &Queue, pos: usize) -> TrialTicket {
        let task = &self.cfg.tasks[q.task];
        TrialTicket {
            task: task.id.clone(),
            task_name: task.name.clone(),
            group: q.group,
            alias: q.order[pos].clone(),
            trial_index: pos,
            queue_len: q.order.len(),
            rubric: task.checkpoints.clone(),
        }
    }

    /// Pops the next alias of a queue.
    pub fn next_trial(&mut self, task: &str, group: usize) -> Result<Dispatch, EvalError> {
        let qi = self.queue_index(task, group)?;
        let q = &self.queues[qi];
        if q.cursor == q.order.len() {
            self.transcript.push(TranscriptEntry::GroupComplete {
                task: task.to_string(),
                group,
            });
            return Ok(Dispatch::GroupComplete {
                task: task.to_string(),
                group,
            });
        }
        let ticket = self.ticket(q, q.cursor);
        self.queues[qi].cursor += 1;
        self.transcript.push(TranscriptEntry::Dispatch {
            task: ticket.task.clone(),
            group,
            alias: ticket.alias.clone(),
            trial_index: ticket.trial_index,
        });
        Ok(Dispatch::Trial(ticket))
    }

    /// The first unfinished queue under the configured iteration order.
    pub fn current_queue(&self) -> Option<(String, usize)> {
        let n_groups = self.groups.len();
        let mut order: Vec<&Queue> = self.queues.iter().collect();
        if self.cfg.order == IterationOrder::GroupOuter {
            order.sort_by_key(|q| (q.group, q.task));
        } else {
            order.sort_by_key(|q| (q.task, q.group));
        }
        debug_assert_eq!(order.len(), n_groups * self.cfg.tasks.len());
        order
            .into_iter()
            .find(|q| !q.is_done())
            .map(|q| (self.cfg.tasks[q.task].id.clone(), q.group))
    }

    /// Validates an outcome against the queue's most recent dispatch without
    /// changing any state.
    pub fn prepare_record(
        &self,
        task: &str,
        group: usize,
        alias: &str,
        outcomes: &[u8],
        timestamp_ms: u64,
    ) -> Result<TrialRecord, EvalError> {
        let q = &self.queues[self.queue_index(task, group)?];
        let spec = &self.cfg.tasks[q.task];
        let Some(pos) = q.cursor.checked_sub(1) else {
            return Err(EvalError::OutOfOrderRecord(format!(
                "nothing dispatched yet on ({task}, {group})"
            )));
        };
        if q.last_recorded == Some(pos) {
            return Err(EvalError::DuplicateRecord {
                task: task.to_string(),
                group,
                trial_index: pos,
            });
        }
        if q.order[pos] != alias {
            return Err(EvalError::OutOfOrderRecord(format!(
                "`{alias}` is not the most recent dispatch on ({task}, {group})"
            )));
        }
        let score = score_outcomes(spec, outcomes)?;
        Ok(TrialRecord {
            record_id: self.records.len() as u64,
            task: task.to_string(),
            group,
            alias: alias.to_string(),
            trial_index: pos,
            outcomes: outcomes.to_vec(),
            score,
            timestamp_ms,
        })
    }

    /// Applies a record produced by [`EvalSession::prepare_record`].
    pub fn apply_record(&mut self, r: TrialRecord) {
        let qi = self
            .queue_index(&r.task, r.group)
            .expect("record was prepared against this session");
        self.queues[qi].last_recorded = Some(r.trial_index);
        self.transcript.push(TranscriptEntry::Record {
            task: r.task.clone(),
            group: r.group,
            alias: r.alias.clone(),
            trial_index: r.trial_index,
            score: r.score,
        });
        self.records.push(r);
    }

    /// In-memory record; see `PersistentSession` for the durable path.
    pub fn record_outcome(
        &mut self,
        task: &str,
        group: usize,
        alias: &str,
        outcomes: &[u8],
        timestamp_ms: u64,
    ) -> Result<TrialRecord, EvalError> {
        let r = self.prepare_record(task, group, alias, outcomes, timestamp_ms)?;
        self.apply_record(r.clone());
        Ok(r)
    }

    pub fn progress(&self) -> Vec<QueueProgress> {
        self.queues
            .iter()
            .map(|q| QueueProgress {
                task: self.cfg.tasks[q.task].id.clone(),
                group: q.group,
                cursor: q.cursor,
                recorded: self
                    .records
                    .iter()
                    .filter(|r| r.group == q.group && r.task == self.cfg.tasks[q.task].id)
                    .count(),
                length: q.order.len(),
                pending: q.pending().map(|p| self.ticket(q, p)),
                complete: q.is_done(),
            })
            .collect()
    }

    /// Every queue fully dispatched and its last dispatch recorded.
    pub fn is_complete(&self) -> bool {
        self.queues.iter().all(Queue::is_done)
    }

    /// True model id behind an alias of a group.
    pub fn resolve(&self, group: usize, alias: &str) -> Option<&str> {
        self.groups.get(group)?.model_for(alias)
    }
}

/// Sum of binary checkpoint outcomes.
pub fn score_outcomes(task: &TaskSpec, outcomes: &[u8]) -> Result<u32, EvalError> {
    if outcomes.len() != task.max_score as usize {
        return Err(EvalError::RubricLengthMismatch {
            expected: task.max_score as usize,
            got: outcomes.len(),
        });
    }
    if let Some(&bad) = outcomes.iter().find(|&&o| o > 1) {
        return Err(EvalError::InvalidOutcome(bad));
    }
    Ok(outcomes.iter().map(|&o| o as u32).sum())
}
