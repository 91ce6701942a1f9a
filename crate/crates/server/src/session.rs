//! In-memory dataset sessions.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use slicewise_core::{Audit, MaterializedGroup, Suggestions};

use crate::error::{ApiError, ApiResult};

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PinState {
    pub pinned: Option<String>,
    pub hovered: Option<String>,
}

/// One uploaded dataset. The audit (table, encoding, clustering) is replaced
/// wholesale on re-cluster so readers always see a complete state.
pub struct Session {
    pub id: String,
    audit: RwLock<Arc<Audit>>,
    groups: RwLock<Vec<Arc<MaterializedGroup>>>,
    pins: Mutex<PinState>,
    last_access: Mutex<Instant>,
}

impl Session {
    pub fn new(id: String, audit: Audit) -> Self {
        Self {
            id,
            audit: RwLock::new(Arc::new(audit)),
            groups: RwLock::new(Vec::new()),
            pins: Mutex::new(PinState::default()),
            last_access: Mutex::new(Instant::now()),
        }
    }

    pub fn audit(&self) -> Arc<Audit> {
        self.audit.read().unwrap().clone()
    }

    pub fn replace_suggestions(&self, suggestions: Suggestions) {
        let mut guard = self.audit.write().unwrap();
        let mut next = Audit::clone(&guard);
        next.suggestions = suggestions;
        *guard = Arc::new(next);
    }

    /// Adds groups not already present; returns the stored instances in the
    /// order given.
    pub fn add_groups(&self, groups: Vec<MaterializedGroup>) -> Vec<Arc<MaterializedGroup>> {
        let mut store = self.groups.write().unwrap();
        groups
            .into_iter()
            .map(|g| match store.iter().find(|s| s.id() == g.id()) {
                Some(existing) => existing.clone(),
                None => {
                    let g = Arc::new(g);
                    store.push(g.clone());
                    g
                }
            })
            .collect()
    }

    pub fn user_groups(&self) -> Vec<Arc<MaterializedGroup>> {
        self.groups.read().unwrap().clone()
    }

    /// User-generated groups followed by the current suggestions.
    pub fn universe(&self) -> Vec<Arc<MaterializedGroup>> {
        let mut all = self.user_groups();
        all.extend(
            self.audit()
                .suggestions
                .groups
                .iter()
                .cloned()
                .map(Arc::new),
        );
        all
    }

    pub fn find_group(&self, id: &str) -> ApiResult<Arc<MaterializedGroup>> {
        if let Some(g) = self.groups.read().unwrap().iter().find(|g| g.id() == id) {
            return Ok(g.clone());
        }
        self.audit()
            .suggestions
            .groups
            .iter()
            .find(|g| g.id() == id)
            .map(|g| Arc::new(g.clone()))
            .ok_or_else(|| ApiError::NotFound(format!("unknown subgroup `{id}`")))
    }

    pub fn pins(&self) -> PinState {
        self.pins.lock().unwrap().clone()
    }

    pub fn set_pins(&self, pins: PinState) -> ApiResult<PinState> {
        for id in pins.pinned.iter().chain(&pins.hovered) {
            self.find_group(id)?;
        }
        *self.pins.lock().unwrap() = pins.clone();
        Ok(pins)
    }

    /// Clears pins that no longer resolve, e.g. after a re-cluster.
    pub fn drop_stale_pins(&self) {
        let mut guard = self.pins.lock().unwrap();
        let pins = &mut *guard;
        for slot in [&mut pins.pinned, &mut pins.hovered] {
            if slot
                .as_deref()
                .is_some_and(|id| self.find_group(id).is_err())
            {
                *slot = None;
            }
        }
    }

    fn touch(&self) {
        *self.last_access.lock().unwrap() = Instant::now();
    }

    fn idle_for(&self, now: Instant) -> Duration {
        now.saturating_duration_since(*self.last_access.lock().unwrap())
    }
}

#[derive(Default)]
pub struct SessionStore {
    sessions: RwLock<HashMap<String, Arc<Session>>>,
}

impl SessionStore {
    pub fn insert(&self, session: Session) -> Arc<Session> {
        let session = Arc::new(session);
        self.sessions
            .write()
            .unwrap()
            .insert(session.id.clone(), session.clone());
        session
    }

    pub fn get(&self, id: &str) -> ApiResult<Arc<Session>> {
        let session = self
            .sessions
            .read()
            .unwrap()
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::NotFound(format!("unknown dataset `{id}`")))?;
        session.touch();
        Ok(session)
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Drops sessions untouched for longer than `max_idle`; returns how many.
    pub fn evict_idle(&self, max_idle: Duration, now: Instant) -> usize {
        let mut sessions = self.sessions.write().unwrap();
        let before = sessions.len();
        sessions.retain(|_, s| s.idle_for(now) <= max_idle);
        before - sessions.len()
    }
}
