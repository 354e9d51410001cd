use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::fsio::write_atomic;
use crate::gateway::{BackendError, ChatBackend, ChatRequest};

/// One stored response. Never rewritten once on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub endpoint_id: String,
    pub request: ChatRequest,
    pub value: String,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
}

/// Hex SHA-256 over the endpoint id and the canonical request encoding.
pub fn cache_key(endpoint_id: &str, request: &ChatRequest) -> String {
    let mut h = Sha256::new();
    h.update(endpoint_id.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(request).expect("request serialises"));
    hex::encode(h.finalize())
}

/// Content-addressed response cache in front of another backend.
///
/// Lookups compare the stored request with the incoming one, so a hash
/// collision can never return a foreign response.
pub struct CachingBackend<B> {
    inner: B,
    dir: PathBuf,
    hits: AtomicU64,
    misses: AtomicU64,
}

impl<B: ChatBackend> CachingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into(), hits: AtomicU64::new(0), misses: AtomicU64::new(0) }
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> u64 {
        self.misses.load(Ordering::Relaxed)
    }

    fn path_for(&self, key: &str) -> PathBuf {
        self.dir.join(&key[..2]).join(format!("{key}.json"))
    }

    pub fn lookup(&self, request: &ChatRequest) -> Option<CacheEntry> {
        let endpoint = self.inner.endpoint_id();
        let key = cache_key(&endpoint, request);
        read_entry(&self.path_for(&key)).filter(|e| e.endpoint_id == endpoint && &e.request == request)
    }
}

fn read_entry(path: &Path) -> Option<CacheEntry> {
    let text = std::fs::read_to_string(path).ok()?;
    match serde_json::from_str(&text) {
        Ok(e) => Some(e),
        Err(e) => {
            log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
            None
        }
    }
}

impl<B: ChatBackend> ChatBackend for CachingBackend<B> {
    fn endpoint_id(&self) -> String {
        self.inner.endpoint_id()
    }

    fn send(&self, request: &ChatRequest) -> Result<String, BackendError> {
        if let Some(entry) = self.lookup(request) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(entry.value);
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = self.inner.send(request)?;
        let endpoint_id = self.inner.endpoint_id();
        let key = cache_key(&endpoint_id, request);
        let path = self.path_for(&key);
        if !path.exists() {
            let entry = CacheEntry {
                key,
                endpoint_id,
                request: request.clone(),
                value: value.clone(),
                created_at: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            };
            let bytes = serde_json::to_vec_pretty(&entry).expect("cache entry serialises");
            if let Err(e) = write_atomic(&path, &bytes) {
                log::warn!("cannot write cache entry {}: {e}", path.display());
            }
        }
        Ok(value)
    }
}
