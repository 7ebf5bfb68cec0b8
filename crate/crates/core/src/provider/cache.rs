use std::collections::HashMap;
use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use sha2::{Digest, Sha256};

use super::{CompletionRequest, CompletionResponse, Provider};
use crate::error::{Error, Result};

/// SHA-256 over the canonical JSON of `(endpoint id, request)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey([u8; 32]);

impl CacheKey {
    pub fn new(endpoint_id: &str, request: &CompletionRequest) -> Self {
        let canonical = serde_json::to_string(request).expect("request serializes");
        let mut h = Sha256::new();
        h.update((endpoint_id.len() as u64).to_le_bytes());
        h.update(endpoint_id.as_bytes());
        h.update(canonical.as_bytes());
        CacheKey(h.finalize().into())
    }

    pub fn hex(&self) -> String {
        hex::encode(self.0)
    }
}

/// One JSON file per key under a directory.
#[derive(Debug)]
pub struct ResponseCache {
    dir: PathBuf,
    locks: Mutex<HashMap<CacheKey, Arc<Mutex<()>>>>,
}

impl ResponseCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Self {
            dir,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    fn path(&self, key: &CacheKey) -> PathBuf {
        self.dir.join(format!("{}.json", key.hex()))
    }

    fn lock_for(&self, key: &CacheKey) -> Arc<Mutex<()>> {
        let mut locks = self.locks.lock().expect("cache lock table poisoned");
        locks.entry(key.clone()).or_default().clone()
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<CompletionResponse>> {
        let path = self.path(key);
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
            Err(e) if e.kind() == ErrorKind::NotFound => Ok(None),
            Err(e) => Err(Error::io(path, e)),
        }
    }

    pub fn put(&self, key: &CacheKey, response: &CompletionResponse) -> Result<()> {
        let path = self.path(key);
        let tmp = self.dir.join(format!("{}.tmp", key.hex()));
        let bytes = serde_json::to_vec_pretty(response)?;
        fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
    }
}

/// Serves repeated requests from a [`ResponseCache`].
///
/// The per-key lock is held across the backend call, so concurrent identical
/// requests reach the backend at most once.
pub struct CachedProvider<P> {
    inner: P,
    cache: ResponseCache,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl<P: Provider> CachedProvider<P> {
    pub fn new(inner: P, cache: ResponseCache) -> Self {
        Self {
            inner,
            cache,
            hits: AtomicUsize::new(0),
            misses: AtomicUsize::new(0),
        }
    }

    pub fn inner(&self) -> &P {
        &self.inner
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::SeqCst)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::SeqCst)
    }
}

impl<P: Provider> Provider for CachedProvider<P> {
    fn endpoint_id(&self) -> String {
        self.inner.endpoint_id()
    }

    fn supports_logprobs(&self) -> bool {
        self.inner.supports_logprobs()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse> {
        let key = CacheKey::new(&self.inner.endpoint_id(), request);
        let lock = self.cache.lock_for(&key);
        let _guard = lock.lock().expect("cache key lock poisoned");
        if let Some(hit) = self.cache.get(&key)? {
            self.hits.fetch_add(1, Ordering::SeqCst);
            return Ok(hit);
        }
        self.misses.fetch_add(1, Ordering::SeqCst);
        let response = self.inner.complete(request)?;
        self.cache.put(&key, &response)?;
        Ok(response)
    }
}
