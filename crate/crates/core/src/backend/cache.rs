//! Response cache: always consulted before a backend call, shared across
//! worker threads. The persistent variant keeps one JSON file per key under
//! a directory, written atomically; reads are concurrent, writes serialized.
//! Store I/O failures degrade the disk layer to memory-only with a warning
//! instead of failing the run.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use serde::{Deserialize, Serialize};

#[derive(Debug, Serialize, Deserialize)]
struct CacheRecord {
    key: String,
    request: serde_json::Value,
    response_text: String,
}

enum Inner {
    Disabled,
    Memory(RwLock<HashMap<String, String>>),
    Disk {
        dir: PathBuf,
        memory: RwLock<HashMap<String, String>>,
        write_lock: Mutex<()>,
        degraded: AtomicBool,
    },
}

/// A clonable handle to one cache. All clones share storage.
#[derive(Clone)]
pub struct Cache {
    inner: Arc<Inner>,
}

impl Cache {
    /// No caching: every request reaches the backend.
    pub fn disabled() -> Cache {
        Cache {
            inner: Arc::new(Inner::Disabled),
        }
    }

    /// Process-lifetime caching only.
    pub fn in_memory() -> Cache {
        Cache {
            inner: Arc::new(Inner::Memory(RwLock::new(HashMap::new()))),
        }
    }

    /// Content-addressed files under `dir`, plus a memory layer in front.
    /// If the directory cannot be created the cache degrades to memory-only.
    pub fn persistent(dir: &Path) -> Cache {
        if let Err(err) = fs::create_dir_all(dir) {
            log::warn!(
                "cannot create cache directory {}: {err}; caching in memory only",
                dir.display()
            );
            return Cache::in_memory();
        }
        Cache {
            inner: Arc::new(Inner::Disk {
                dir: dir.to_path_buf(),
                memory: RwLock::new(HashMap::new()),
                write_lock: Mutex::new(()),
                degraded: AtomicBool::new(false),
            }),
        }
    }

    /// Cache selected by environment: disabled when asked, persistent when
    /// `MHQA_CACHE_DIR` is set, in-memory otherwise.
    pub fn from_env(no_cache: bool) -> Cache {
        if no_cache {
            return Cache::disabled();
        }
        match std::env::var(super::MHQA_CACHE_DIR) {
            Ok(dir) if !dir.is_empty() => Cache::persistent(Path::new(&dir)),
            _ => Cache::in_memory(),
        }
    }

    pub fn get(&self, key: &str) -> Option<String> {
        match &*self.inner {
            Inner::Disabled => None,
            Inner::Memory(map) => map.read().expect("cache lock poisoned").get(key).cloned(),
            Inner::Disk { dir, memory, .. } => {
                if let Some(hit) = memory.read().expect("cache lock poisoned").get(key) {
                    return Some(hit.clone());
                }
                let path = dir.join(format!("{key}.json"));
                let text = fs::read_to_string(path).ok()?;
                let record: CacheRecord = serde_json::from_str(&text).ok()?;
                memory
                    .write()
                    .expect("cache lock poisoned")
                    .insert(key.to_string(), record.response_text.clone());
                Some(record.response_text)
            }
        }
    }

    pub fn put(&self, key: &str, response_text: &str, request: &serde_json::Value) {
        match &*self.inner {
            Inner::Disabled => {}
            Inner::Memory(map) => {
                map.write()
                    .expect("cache lock poisoned")
                    .insert(key.to_string(), response_text.to_string());
            }
            Inner::Disk {
                dir,
                memory,
                write_lock,
                degraded,
            } => {
                memory
                    .write()
                    .expect("cache lock poisoned")
                    .insert(key.to_string(), response_text.to_string());
                if degraded.load(Ordering::Relaxed) {
                    return;
                }
                let record = CacheRecord {
                    key: key.to_string(),
                    request: request.clone(),
                    response_text: response_text.to_string(),
                };
                let _guard = write_lock.lock().expect("cache lock poisoned");
                if let Err(err) = write_record(dir, key, &record) {
                    degraded.store(true, Ordering::Relaxed);
                    log::warn!(
                        "cache store under {} failed ({err}); continuing without persistence",
                        dir.display()
                    );
                }
            }
        }
    }

    pub fn is_disabled(&self) -> bool {
        matches!(&*self.inner, Inner::Disabled)
    }
}

fn write_record(dir: &Path, key: &str, record: &CacheRecord) -> std::io::Result<()> {
    let tmp = dir.join(format!(".{key}.tmp"));
    let path = dir.join(format!("{key}.json"));
    let text = serde_json::to_string_pretty(record).expect("cache record serializes");
    fs::write(&tmp, text)?;
    fs::rename(&tmp, &path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> serde_json::Value {
        serde_json::json!({"kind": "test"})
    }

    #[test]
    fn memory_cache_round_trips() {
        let cache = Cache::in_memory();
        assert_eq!(cache.get("k"), None);
        cache.put("k", "value", &meta());
        assert_eq!(cache.get("k").as_deref(), Some("value"));
    }

    #[test]
    fn disabled_cache_stores_nothing() {
        let cache = Cache::disabled();
        cache.put("k", "value", &meta());
        assert_eq!(cache.get("k"), None);
    }

    #[test]
    fn persistent_cache_survives_reopening() {
        let dir = tempfile::tempdir().unwrap();
        {
            let cache = Cache::persistent(dir.path());
            cache.put("deadbeef", "stored reply", &meta());
        }
        let reopened = Cache::persistent(dir.path());
        assert_eq!(reopened.get("deadbeef").as_deref(), Some("stored reply"));
    }

    #[test]
    fn persistent_records_carry_request_metadata() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::persistent(dir.path());
        cache.put("abc123", "reply", &serde_json::json!({"model_id": "m"}));
        let text = fs::read_to_string(dir.path().join("abc123.json")).unwrap();
        let record: CacheRecord = serde_json::from_str(&text).unwrap();
        assert_eq!(record.key, "abc123");
        assert_eq!(record.response_text, "reply");
        assert_eq!(record.request["model_id"], "m");
    }

    #[test]
    fn clones_share_storage() {
        let cache = Cache::in_memory();
        let clone = cache.clone();
        cache.put("k", "v", &meta());
        assert_eq!(clone.get("k").as_deref(), Some("v"));
    }

    #[test]
    fn concurrent_readers_and_writers_do_not_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let cache = Cache::persistent(dir.path());
        std::thread::scope(|scope| {
            for t in 0..4 {
                let cache = cache.clone();
                scope.spawn(move || {
                    for i in 0..50 {
                        let key = format!("key-{t}-{i}");
                        cache.put(&key, &format!("value-{t}-{i}"), &meta());
                        assert_eq!(cache.get(&key).as_deref(), Some(format!("value-{t}-{i}").as_str()));
                    }
                });
            }
        });
        for t in 0..4 {
            for i in 0..50 {
                assert_eq!(
                    cache.get(&format!("key-{t}-{i}")).as_deref(),
                    Some(format!("value-{t}-{i}").as_str())
                );
            }
        }
    }
}
