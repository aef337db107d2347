use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{sha256_hex, Decoding, GenerationParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheParams {
    pub max_new_tokens: u32,
    pub decoding: Decoding,
}

/// One line of the append-only cache file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub key: String,
    pub model: String,
    pub params: CacheParams,
    pub prompt_sha: String,
    pub text: String,
    pub ts: String,
}

impl CacheRecord {
    pub fn new(key: &str, params: &GenerationParams, prompt: &str, text: &str) -> Self {
        CacheRecord {
            key: key.to_string(),
            model: params.model_id.clone(),
            params: CacheParams {
                max_new_tokens: params.max_new_tokens,
                decoding: params.decoding,
            },
            prompt_sha: sha256_hex(prompt),
            text: text.to_string(),
            ts: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
        }
    }
}

/// Content-addressed completion store, optionally backed by a JSONL file.
///
/// Storing a different text under an existing key is an error.
pub struct CompletionCache {
    path: Option<PathBuf>,
    entries: Mutex<HashMap<String, CacheRecord>>,
    file: Mutex<Option<File>>,
}

impl CompletionCache {
    pub fn in_memory() -> Self {
        CompletionCache {
            path: None,
            entries: Mutex::new(HashMap::new()),
            file: Mutex::new(None),
        }
    }

    /// Opens (creating if needed) the cache file at `path` and loads its records.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
            for (index, line) in reader.lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                let record: CacheRecord = match serde_json::from_str(&line) {
                    Ok(record) => record,
                    Err(e) => {
                        // an interrupted append leaves a torn last line
                        log::warn!("{}:{}: skipping unreadable cache line: {e}", path.display(), index + 1);
                        continue;
                    }
                };
                insert_checked(&mut entries, record)?;
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        if ends_mid_line(path)? {
            file.write_all(b"\n").map_err(|e| Error::io(path, e))?;
        }
        Ok(CompletionCache {
            path: Some(path.to_path_buf()),
            entries: Mutex::new(entries),
            file: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<CacheRecord> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Inserts `record`; a no-op when the same text is already stored under its key.
    pub fn put(&self, record: CacheRecord) -> Result<()> {
        let mut entries = self.entries.lock().unwrap();
        if let Some(existing) = entries.get(&record.key) {
            if existing.text == record.text {
                return Ok(());
            }
            return Err(Error::CacheConflict { key: record.key });
        }
        let mut file = self.file.lock().unwrap();
        if let Some(file) = file.as_mut() {
            let mut line = serde_json::to_vec(&record)?;
            line.push(b'\n');
            let path = self.path.as_deref().unwrap_or(Path::new("<cache>"));
            file.write_all(&line).map_err(|e| Error::io(path, e))?;
            file.flush().map_err(|e| Error::io(path, e))?;
        }
        entries.insert(record.key.clone(), record);
        Ok(())
    }
}

fn ends_mid_line(path: &Path) -> Result<bool> {
    use std::io::{Read, Seek, SeekFrom};
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    if len == 0 {
        return Ok(false);
    }
    let mut last = [0u8; 1];
    file.seek(SeekFrom::End(-1))
        .and_then(|_| file.read_exact(&mut last))
        .map_err(|e| Error::io(path, e))?;
    Ok(last[0] != b'\n')
}

fn insert_checked(entries: &mut HashMap<String, CacheRecord>, record: CacheRecord) -> Result<()> {
    if let Some(existing) = entries.get(&record.key) {
        if existing.text != record.text {
            return Err(Error::CacheConflict { key: record.key });
        }
        return Ok(());
    }
    entries.insert(record.key.clone(), record);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(key: &str, text: &str) -> CacheRecord {
        CacheRecord::new(key, &GenerationParams::new("m"), "prompt", text)
    }

    #[test]
    fn persists_and_reloads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache/c.jsonl");
        {
            let cache = CompletionCache::open(&path).unwrap();
            cache.put(record("k1", "A")).unwrap();
            cache.put(record("k2", "B, No")).unwrap();
        }
        let cache = CompletionCache::open(&path).unwrap();
        assert_eq!(cache.len(), 2);
        assert_eq!(cache.get("k2").unwrap().text, "B, No");
        assert_eq!(cache.get("k1").unwrap().prompt_sha, sha256_hex("prompt"));
    }

    #[test]
    fn conflicting_text_is_rejected() {
        let cache = CompletionCache::in_memory();
        cache.put(record("k", "A")).unwrap();
        cache.put(record("k", "A")).unwrap();
        assert!(matches!(cache.put(record("k", "B")), Err(Error::CacheConflict { .. })));
        assert_eq!(cache.get("k").unwrap().text, "A");
    }

    #[test]
    fn torn_line_is_skipped_and_conflicts_in_file_are_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.jsonl");
        let good = serde_json::to_string(&record("k", "A")).unwrap();
        std::fs::write(&path, format!("{good}\n{{\"key\":\"k2\",\"mo")).unwrap();
        {
            let cache = CompletionCache::open(&path).unwrap();
            assert_eq!(cache.len(), 1);
            cache.put(record("k3", "B")).unwrap();
        }
        let reopened = CompletionCache::open(&path).unwrap();
        assert_eq!(reopened.len(), 2);
        assert_eq!(reopened.get("k3").unwrap().text, "B");

        let bad = serde_json::to_string(&record("k", "B")).unwrap();
        std::fs::write(&path, format!("{good}\n{bad}\n")).unwrap();
        assert!(matches!(CompletionCache::open(&path), Err(Error::CacheConflict { .. })));
    }

    #[test]
    fn record_layout() {
        let value = serde_json::to_value(record("abc", "A")).unwrap();
        let obj = value.as_object().unwrap();
        for field in ["key", "model", "params", "prompt_sha", "text", "ts"] {
            assert!(obj.contains_key(field), "missing {field}");
        }
        assert_eq!(value["params"]["decoding"], "greedy");
        assert_eq!(value["params"]["max_new_tokens"], 50);
    }
}
