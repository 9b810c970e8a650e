//! Session registry. Requests for one session are serialized on its own
//! lock; distinct sessions proceed concurrently.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use crate::clock::{Clock, SystemClock};
use crate::error::{Result, ServiceError};
use crate::session::{
    RankingView, Report, ReportAck, SessionSpec, SessionState, SessionSummary, Snapshot, Suggestion,
};

#[derive(Debug)]
pub struct SessionManager {
    sessions: RwLock<HashMap<String, Arc<Mutex<SessionState>>>>,
    clock: Arc<dyn Clock>,
}

impl Default for SessionManager {
    fn default() -> Self {
        SessionManager::new(Arc::new(SystemClock))
    }
}

fn lock(session: &Mutex<SessionState>) -> MutexGuard<'_, SessionState> {
    // a panic mid-request leaves the state as it was before the request's
    // single mutation point, so the data is still usable
    session
        .lock()
        .unwrap_or_else(|poisoned| poisoned.into_inner())
}

impl SessionManager {
    pub fn new(clock: Arc<dyn Clock>) -> Self {
        SessionManager {
            sessions: RwLock::new(HashMap::new()),
            clock,
        }
    }

    fn now(&self) -> u64 {
        self.clock.now_secs()
    }

    fn get(&self, id: &str) -> Result<Arc<Mutex<SessionState>>> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::unknown_session(id))
    }

    fn insert(&self, state: SessionState) -> String {
        let mut sessions = self.sessions.write().unwrap_or_else(|p| p.into_inner());
        let mut id = uuid::Uuid::new_v4().to_string();
        while sessions.contains_key(&id) {
            id = uuid::Uuid::new_v4().to_string();
        }
        sessions.insert(id.clone(), Arc::new(Mutex::new(state)));
        id
    }

    fn with<T>(&self, id: &str, f: impl FnOnce(&mut SessionState, u64) -> Result<T>) -> Result<T> {
        let session = self.get(id)?;
        let mut state = lock(&session);
        f(&mut state, self.now())
    }

    pub fn create(&self, spec: &SessionSpec) -> Result<(String, SessionSummary)> {
        let state = SessionState::create(spec, self.now())?;
        let summary = state.summary();
        Ok((self.insert(state), summary))
    }

    pub fn summary(&self, id: &str) -> Result<SessionSummary> {
        self.with(id, |s, now| {
            s.expire(now);
            Ok(s.summary())
        })
    }

    pub fn suggest(&self, id: &str) -> Result<Suggestion> {
        self.with(id, |s, now| s.suggest(now))
    }

    pub fn report(&self, id: &str, report: &Report) -> Result<ReportAck> {
        self.with(id, |s, now| s.report(report, now))
    }

    pub fn ranking(&self, id: &str, x: usize) -> Result<RankingView> {
        self.with(id, |s, _| s.ranking(x))
    }

    pub fn reset(&self, id: &str) -> Result<SessionSummary> {
        self.with(id, |s, now| {
            s.reset(now);
            Ok(s.summary())
        })
    }

    pub fn snapshot(&self, id: &str) -> Result<Snapshot> {
        self.with(id, |s, _| s.snapshot())
    }

    /// Restore into a new session; the source session, if any, is untouched.
    pub fn restore(&self, snapshot: &Snapshot) -> Result<(String, SessionSummary)> {
        let state = SessionState::restore(snapshot)?;
        let summary = state.summary();
        Ok((self.insert(state), summary))
    }

    /// Copy of one session's state, for inspection.
    pub fn state(&self, id: &str) -> Result<SessionState> {
        self.with(id, |s, _| Ok(s.clone()))
    }

    pub fn len(&self) -> usize {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Write `<id>.json` for every session into `dir`. Returns the count.
    pub fn persist_all(&self, dir: &Path) -> std::io::Result<usize> {
        fs::create_dir_all(dir)?;
        let sessions: Vec<(String, Arc<Mutex<SessionState>>)> = self
            .sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        for (id, session) in &sessions {
            let snapshot = lock(session).snapshot().map_err(std::io::Error::other)?;
            let bytes = serde_json::to_vec(&snapshot)?;
            let tmp = dir.join(format!("{id}.json.tmp"));
            fs::write(&tmp, bytes)?;
            fs::rename(&tmp, dir.join(format!("{id}.json")))?;
        }
        Ok(sessions.len())
    }

    /// Load every `<id>.json` snapshot in `dir` under its original id.
    pub fn load_dir(&self, dir: &Path) -> std::io::Result<usize> {
        let mut loaded = 0;
        for entry in fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).map(str::to_owned) else {
                continue;
            };
            let bytes = fs::read(&path)?;
            let state = Snapshot::parse(&bytes)
                .and_then(|s| SessionState::restore(&s))
                .map_err(|e| {
                    std::io::Error::new(
                        std::io::ErrorKind::InvalidData,
                        format!("{}: {e}", path.display()),
                    )
                })?;
            self.sessions
                .write()
                .unwrap_or_else(|p| p.into_inner())
                .insert(id, Arc::new(Mutex::new(state)));
            loaded += 1;
        }
        Ok(loaded)
    }
}
