//! Sessions persisted as append-only JSONL event logs, one file per
//! session, plus attachment blobs stored by content hash.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use pipewright_agents::{AgentEvent, Session};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tokio::sync::{Mutex, Notify};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path} line {line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One persisted event. Sequence numbers start at 1 and have no gaps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedEvent {
    pub seq: u64,
    pub event: AgentEvent,
}

/// A session with its event log. The state is behind an async mutex so
/// that one session's operations run one at a time; the log can be read
/// while an operation is running.
#[derive(Debug)]
pub struct ApiSession {
    pub id: String,
    pub state: Arc<Mutex<Session>>,
    log: RwLock<Vec<LoggedEvent>>,
    appended: Notify,
    path: PathBuf,
}

impl ApiSession {
    /// Events with `seq > since`.
    pub fn events_since(&self, since: u64) -> Vec<LoggedEvent> {
        let log = self.log.read().expect("log lock");
        log.iter().filter(|e| e.seq > since).cloned().collect()
    }

    pub fn last_seq(&self) -> u64 {
        self.log
            .read()
            .expect("log lock")
            .last()
            .map_or(0, |e| e.seq)
    }

    /// Waits until an event past `since` exists or `timeout` passes.
    pub async fn wait_for(&self, since: u64, timeout: std::time::Duration) -> Vec<LoggedEvent> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            let notified = self.appended.notified();
            let events = self.events_since(since);
            if !events.is_empty() {
                return events;
            }
            if tokio::time::timeout_at(deadline, notified).await.is_err() {
                return Vec::new();
            }
        }
    }

    /// Writes the session's new events and wakes anyone waiting on them.
    pub fn persist(&self, session: &mut Session) -> Result<(), StoreError> {
        self.write_events(session)?;
        self.notify();
        Ok(())
    }

    /// Wakes readers blocked in [`ApiSession::wait_for`].
    pub fn notify(&self) {
        self.appended.notify_waiters();
    }

    /// Writes the events the session journaled since the last call without
    /// waking readers. Each event is one `write` of one line to a file
    /// opened for appending.
    pub fn write_events(&self, session: &mut Session) -> Result<(), StoreError> {
        let events = session.take_events();
        if events.is_empty() {
            return Ok(());
        }
        let mut log = self.log.write().expect("log lock");
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(io(&self.path))?;
        let first = log.last().map_or(0, |e| e.seq) + 1;
        for (seq, event) in (first..).zip(events) {
            let entry = LoggedEvent { seq, event };
            let mut line = serde_json::to_string(&entry).expect("events serialize");
            line.push('\n');
            file.write_all(line.as_bytes()).map_err(io(&self.path))?;
            log.push(entry);
        }
        file.sync_data().map_err(io(&self.path))?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, Arc<ApiSession>>>,
}

impl SessionStore {
    /// Opens `data_dir`, replaying every session log found there. Sessions
    /// that were mid-build when the service stopped are marked failed,
    /// since their run cannot be resumed.
    pub fn open(data_dir: &Path) -> Result<Self, StoreError> {
        let dir = data_dir.join("sessions");
        fs::create_dir_all(&dir).map_err(io(&dir))?;
        fs::create_dir_all(data_dir.join("blobs")).map_err(io(data_dir))?;
        let mut sessions = HashMap::new();
        for entry in fs::read_dir(&dir).map_err(io(&dir))? {
            let path = entry.map_err(io(&dir))?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("jsonl") {
                continue;
            }
            let Some(id) = path
                .file_stem()
                .and_then(|s| s.to_str())
                .map(str::to_string)
            else {
                continue;
            };
            let log = read_log(&path)?;
            let mut session = Session::replay(id.clone(), log.iter().map(|e| &e.event));
            let api = ApiSession {
                id: id.clone(),
                state: Arc::new(Mutex::new(Session::new(id.clone()))),
                log: RwLock::new(log),
                appended: Notify::new(),
                path,
            };
            if session.confirmed && !session.status.is_terminal() {
                session.record(AgentEvent::Failed {
                    reason: "interrupted by a service restart".into(),
                });
                api.persist(&mut session)?;
            }
            *api.state.try_lock().expect("fresh mutex") = session;
            sessions.insert(id, Arc::new(api));
        }
        Ok(Self {
            dir: data_dir.to_path_buf(),
            sessions: RwLock::new(sessions),
        })
    }

    pub fn create(&self) -> Arc<ApiSession> {
        let id = uuid::Uuid::new_v4().simple().to_string();
        let path = self.dir.join("sessions").join(format!("{id}.jsonl"));
        let api = Arc::new(ApiSession {
            id: id.clone(),
            state: Arc::new(Mutex::new(Session::new(id.clone()))),
            log: RwLock::new(Vec::new()),
            appended: Notify::new(),
            path,
        });
        self.sessions
            .write()
            .expect("store lock")
            .insert(id, api.clone());
        api
    }

    pub fn get(&self, id: &str) -> Option<Arc<ApiSession>> {
        self.sessions.read().expect("store lock").get(id).cloned()
    }

    pub fn len(&self) -> usize {
        self.sessions.read().expect("store lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `bytes` under its SHA-256 and returns `sha256:<hex>`.
    pub fn put_blob(&self, bytes: &[u8]) -> Result<String, StoreError> {
        let digest = hex::encode(Sha256::digest(bytes));
        let path = self.dir.join("blobs").join(&digest);
        if !path.exists() {
            let tmp = path.with_extension("tmp");
            fs::write(&tmp, bytes).map_err(io(&tmp))?;
            fs::rename(&tmp, &path).map_err(io(&path))?;
        }
        Ok(format!("sha256:{digest}"))
    }
}

fn read_log(path: &Path) -> Result<Vec<LoggedEvent>, StoreError> {
    let file = File::open(path).map_err(io(path))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(io(path))?;
    let last = lines.iter().rposition(|l| !l.trim().is_empty());
    let mut out: Vec<LoggedEvent> = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let corrupt = |message: String| StoreError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let entry: LoggedEvent = match serde_json::from_str(line) {
            Ok(e) => e,
            // a write cut short by a crash
            Err(e) if Some(i) == last => {
                tracing::warn!(path = %path.display(), error = %e, "dropping truncated last event");
                let kept: String = lines[..i].iter().map(|l| format!("{l}\n")).collect();
                fs::write(path, kept).map_err(io(path))?;
                break;
            }
            Err(e) => return Err(corrupt(e.to_string())),
        };
        let expected = out.last().map_or(1, |e| e.seq + 1);
        if entry.seq != expected {
            return Err(corrupt(format!(
                "sequence {} follows {}",
                entry.seq,
                expected - 1
            )));
        }
        out.push(entry);
    }
    Ok(out)
}
