//! File-backed session store: one JSON file per session, cached in memory.
//! Mutations of one session are serialized by its own lock; distinct
//! sessions never contend beyond the brief index lookup.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, MutexGuard};

use batchedit::session::SessionFile;
use batchedit::Session;

use crate::error::{ApiError, ApiResult};
use crate::ops::check_id;

struct Entry {
    path: PathBuf,
    session: Mutex<Session>,
}

pub struct SessionStore {
    dir: PathBuf,
    entries: Mutex<HashMap<String, Arc<Entry>>>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    // A panic mid-update never leaves a half-applied session behind
    // (updates work on a copy), so a poisoned lock is safe to reuse.
    m.lock().unwrap_or_else(|p| p.into_inner())
}

impl SessionStore {
    pub fn open(dir: impl Into<PathBuf>) -> ApiResult<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| ApiError::internal(format!("{}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            entries: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path_for(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }

    /// Serve an existing session file under its own id, wherever it lives.
    pub fn register_file(&self, path: impl Into<PathBuf>) -> ApiResult<String> {
        let path = path.into();
        let session = Session::load(&path)?;
        let id = session.id().to_string();
        check_id(&id)?;
        lock(&self.entries).insert(
            id.clone(),
            Arc::new(Entry {
                path,
                session: Mutex::new(session),
            }),
        );
        Ok(id)
    }

    /// Persist a new session. Fails with `conflict` if the id is taken.
    pub fn insert(&self, session: Session) -> ApiResult<SessionFile> {
        let id = session.id().to_string();
        check_id(&id)?;
        let mut entries = lock(&self.entries);
        let path = self.path_for(&id);
        if entries.contains_key(&id) || path.exists() {
            return Err(ApiError::conflict(format!("session {id:?} already exists")));
        }
        session.save(&path)?;
        let file = session.to_file();
        entries.insert(
            id,
            Arc::new(Entry {
                path,
                session: Mutex::new(session),
            }),
        );
        Ok(file)
    }

    fn entry(&self, id: &str) -> ApiResult<Arc<Entry>> {
        check_id(id)?;
        let mut entries = lock(&self.entries);
        if let Some(e) = entries.get(id) {
            return Ok(e.clone());
        }
        let path = self.path_for(id);
        if !path.exists() {
            return Err(ApiError::not_found(format!("no session {id:?}")));
        }
        let session = Session::load(&path)?;
        let entry = Arc::new(Entry {
            path,
            session: Mutex::new(session),
        });
        entries.insert(id.to_string(), entry.clone());
        Ok(entry)
    }

    pub fn read<T>(&self, id: &str, f: impl FnOnce(&Session) -> ApiResult<T>) -> ApiResult<T> {
        let entry = self.entry(id)?;
        let session = lock(&entry.session);
        f(&session)
    }

    /// Apply `f` to a copy of the session; on success persist it and make
    /// it current. On failure the stored session is untouched.
    pub fn update<T>(&self, id: &str, f: impl FnOnce(&mut Session) -> ApiResult<T>) -> ApiResult<T> {
        let entry = self.entry(id)?;
        let mut current = lock(&entry.session);
        let mut next = current.clone();
        let out = f(&mut next)?;
        next.save(&entry.path)?;
        *current = next;
        Ok(out)
    }
}
