use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use super::config::EvalConfig;
use super::session::{Dispatch, EvalSession, Event, TrialRecord};
use super::EvalError;

/// Append-only JSON-lines event log. Every append is synced to disk before
/// it returns.
#[derive(Debug)]
pub struct SessionLog {
    path: PathBuf,
    file: File,
}

impl SessionLog {
    /// Creates a new log holding the init event. Refuses to overwrite.
    pub fn create(path: &Path, cfg: EvalConfig) -> Result<(Self, EvalSession), EvalError> {
        let session = EvalSession::init(cfg.clone())?;
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(path)?;
        let mut log = SessionLog {
            path: path.to_path_buf(),
            file,
        };
        log.append(&Event::Init { config: cfg })?;
        Ok((log, session))
    }

    /// Replays an existing log. A final line without a newline was never
    /// acknowledged and is cut off.
    pub fn open(path: &Path) -> Result<(Self, EvalSession), EvalError> {
        let mut file = OpenOptions::new().read(true).append(true).open(path)?;
        let mut events = Vec::new();
        let mut good_len = 0u64;
        let mut reader = BufReader::new(&file);
        let mut line = String::new();
        loop {
            line.clear();
            let n = reader.read_line(&mut line)?;
            if n == 0 || !line.ends_with('\n') {
                break;
            }
            let ev: Event = serde_json::from_str(line.trim_end())
                .map_err(|e| EvalError::Log(format!("line {}: {e}", events.len() + 1)))?;
            events.push(ev);
            good_len += n as u64;
        }
        if file.metadata()?.len() != good_len {
            file.set_len(good_len)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::End(0))?;
        let session = EvalSession::replay(events)?;
        Ok((
            SessionLog {
                path: path.to_path_buf(),
                file,
            },
            session,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&mut self, ev: &Event) -> Result<(), EvalError> {
        let mut line = serde_json::to_string(ev).map_err(|e| EvalError::Log(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.sync_data()?;
        Ok(())
    }

    /// Reads all events without opening for writing.
    pub fn read_events(path: &Path) -> Result<Vec<Event>, EvalError> {
        let text = std::fs::read_to_string(path)?;
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .enumerate()
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| EvalError::Log(format!("line {}: {e}", i + 1)))
            })
            .collect()
    }
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// A session whose records are durable before they are acknowledged.
#[derive(Debug)]
pub struct PersistentSession {
    session: EvalSession,
    log: SessionLog,
}

impl PersistentSession {
    pub fn create(path: &Path, cfg: EvalConfig) -> Result<Self, EvalError> {
        let (log, session) = SessionLog::create(path, cfg)?;
        Ok(PersistentSession { session, log })
    }

    pub fn open(path: &Path) -> Result<Self, EvalError> {
        let (log, session) = SessionLog::open(path)?;
        Ok(PersistentSession { session, log })
    }

    pub fn session(&self) -> &EvalSession {
        &self.session
    }

    pub fn log_path(&self) -> &Path {
        self.log.path()
    }

    pub fn next_trial(&mut self, task: &str, group: usize) -> Result<Dispatch, EvalError> {
        self.session.next_trial(task, group)
    }

    pub fn record_outcome(
        &mut self,
        task: &str,
        group: usize,
        alias: &str,
        outcomes: &[u8],
        timestamp_ms: u64,
    ) -> Result<TrialRecord, EvalError> {
        let r = self
            .session
            .prepare_record(task, group, alias, outcomes, timestamp_ms)?;
        self.log.append(&Event::Record(r.clone()))?;
        self.session.apply_record(r.clone());
        Ok(r)
    }
}
