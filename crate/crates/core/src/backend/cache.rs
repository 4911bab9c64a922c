use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendError, ScoreResponse};

/// One line of the append-only cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response: ScoreResponse,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// Persistent score cache: many concurrent readers, serialized appends.
/// Entries are never rewritten once stored.
pub struct ScoreCache {
    entries: RwLock<HashMap<String, ScoreResponse>>,
    sink: Option<Mutex<File>>,
    path: Option<PathBuf>,
}

impl ScoreCache {
    pub fn in_memory() -> Self {
        ScoreCache {
            entries: RwLock::new(HashMap::new()),
            sink: None,
            path: None,
        }
    }

    /// Loads `path` (creating it if absent) and opens it for appending.
    ///
    /// A torn final line, left by an interrupted write, is truncated away.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, BackendError> {
        let path = path.as_ref();
        let mut text = String::new();
        if path.exists() {
            File::open(path)?.read_to_string(&mut text)?;
        }

        let mut entries = HashMap::new();
        let mut good_len = 0usize;
        let mut offset = 0usize;
        let mut torn = false;
        for (idx, line) in text.split_inclusive('\n').enumerate() {
            let terminated = line.ends_with('\n');
            let body = line.trim_end_matches('\n');
            offset += line.len();
            if body.trim().is_empty() {
                good_len = offset;
                continue;
            }
            match serde_json::from_str::<CacheEntry>(body) {
                Ok(entry) => {
                    if !terminated {
                        // complete JSON but missing its newline; keep it and terminate
                        torn = true;
                    }
                    entries.entry(entry.key).or_insert(entry.response);
                    good_len = offset;
                }
                Err(_) if !terminated => {
                    torn = true;
                    break;
                }
                Err(e) => {
                    return Err(BackendError::CacheFormat {
                        line: idx + 1,
                        reason: e.to_string(),
                    })
                }
            }
        }

        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if torn {
            file.set_len(good_len as u64)?;
            if good_len > 0 && !text[..good_len].ends_with('\n') {
                file.write_all(b"\n")?;
            }
        }
        Ok(ScoreCache {
            entries: RwLock::new(entries),
            sink: Some(Mutex::new(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<ScoreResponse> {
        self.entries.read().expect("cache lock").get(key).cloned()
    }

    pub fn contains(&self, key: &str) -> bool {
        self.entries.read().expect("cache lock").contains_key(key)
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `response` under `key` unless the key is already present.
    pub fn insert(&self, key: &str, response: &ScoreResponse) -> Result<(), BackendError> {
        let mut entries = self.entries.write().expect("cache lock");
        if entries.contains_key(key) {
            return Ok(());
        }
        if let Some(sink) = &self.sink {
            let created_at = SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            let entry = CacheEntry {
                key: key.to_string(),
                response: response.clone(),
                created_at,
            };
            let mut line = serde_json::to_vec(&entry).map_err(|e| BackendError::Other(e.to_string()))?;
            line.push(b'\n');
            let mut file = sink.lock().expect("cache sink lock");
            file.write_all(&line)?;
            file.flush()?;
        }
        entries.insert(key.to_string(), response.clone());
        Ok(())
    }

    /// Digest over the given keys and their stored responses, independent of
    /// key order and of entry timestamps. Missing keys hash as absent.
    pub fn state_hash<'a, I>(&self, keys: I) -> String
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut keys: Vec<&str> = keys.into_iter().collect();
        keys.sort_unstable();
        keys.dedup();
        let entries = self.entries.read().expect("cache lock");
        let mut h = Sha256::new();
        for k in keys {
            h.update(k.as_bytes());
            match entries.get(k) {
                Some(r) => h.update(serde_json::to_vec(r).expect("response serializes")),
                None => h.update(b"<absent>"),
            }
            h.update(b"\n");
        }
        hex::encode(h.finalize())
    }
}
