use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use alice_core::feature_store::Dataset;
use alice_core::session::{Session, SessionSnapshot};
use alice_core::{Error, Result};

pub type SessionHandle = Arc<tokio::sync::RwLock<Session>>;

/// Live sessions keyed by id, each mirrored to `<dir>/<id>.json`.
///
/// The outer map lock only guards lookups and inserts; each session carries
/// its own reader/writer lock.
pub struct SessionStore {
    dir: PathBuf,
    sessions: RwLock<HashMap<String, SessionHandle>>,
    datasets: Mutex<HashMap<PathBuf, Arc<Dataset>>>,
}

/// A random 128-bit token, hex encoded.
pub fn new_session_id() -> String {
    format!("{:032x}", rand::random::<u128>())
}

fn is_session_id(s: &str) -> bool {
    s.len() == 32 && s.bytes().all(|b| b.is_ascii_hexdigit())
}

impl SessionStore {
    /// Opens `dir`, creating it if needed, and restores every snapshot in it.
    /// Snapshots that fail to restore are logged and left on disk.
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        let store = Self { dir: dir.to_path_buf(), sessions: RwLock::default(), datasets: Mutex::default() };
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)?.filter_map(|e| e.ok().map(|e| e.path())).collect();
        entries.sort();
        for path in entries {
            let Some(id) = path.file_stem().and_then(|s| s.to_str()).filter(|s| is_session_id(s)) else {
                continue;
            };
            if path.extension().and_then(|e| e.to_str()) != Some("json") {
                continue;
            }
            match store.restore(&path) {
                Ok(session) => {
                    store.sessions.write().unwrap().insert(id.to_string(), Arc::new(tokio::sync::RwLock::new(session)));
                }
                Err(e) => tracing::warn!("skipping {}: {e}", path.display()),
            }
        }
        Ok(store)
    }

    fn restore(&self, path: &Path) -> Result<Session> {
        let snap: SessionSnapshot = serde_json::from_slice(&fs::read(path)?)
            .map_err(|e| Error::MalformedSnapshot(format!("{}: {e}", path.display())))?;
        let dataset = self.dataset(&snap.config.dataset)?;
        Session::restore(snap, dataset)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Opens a dataset once and shares it between sessions.
    pub fn dataset(&self, path: &Path) -> Result<Arc<Dataset>> {
        let mut cache = self.datasets.lock().unwrap();
        if let Some(ds) = cache.get(path) {
            return Ok(ds.clone());
        }
        let ds = Arc::new(Dataset::open(path)?);
        cache.insert(path.to_path_buf(), ds.clone());
        Ok(ds)
    }

    pub fn get(&self, id: &str) -> Option<SessionHandle> {
        self.sessions.read().unwrap().get(id).cloned()
    }

    pub fn ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.sessions.read().unwrap().keys().cloned().collect();
        ids.sort();
        ids
    }

    pub fn len(&self) -> usize {
        self.sessions.read().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Persists and registers a new session, returning its id.
    pub fn insert(&self, session: Session) -> Result<String> {
        let mut map = self.sessions.write().unwrap();
        let id = loop {
            let id = new_session_id();
            if !map.contains_key(&id) {
                break id;
            }
        };
        self.persist(&id, &session)?;
        map.insert(id.clone(), Arc::new(tokio::sync::RwLock::new(session)));
        Ok(id)
    }

    pub fn persist(&self, id: &str, session: &Session) -> Result<()> {
        session.save(&self.path(id))
    }

    pub fn path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_are_128_bit_hex() {
        let a = new_session_id();
        assert!(is_session_id(&a));
        assert_ne!(a, new_session_id());
        assert!(!is_session_id("../etc/passwd"));
    }

    #[test]
    fn empty_directory_opens_empty() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("notes.txt"), "x").unwrap();
        fs::write(dir.path().join(format!("{}.json", "0".repeat(32))), "{").unwrap();
        let store = SessionStore::open(&dir.path().join("sessions")).unwrap();
        assert!(store.is_empty());
        let store = SessionStore::open(dir.path()).unwrap();
        assert!(store.is_empty());
    }
}
