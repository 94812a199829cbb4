use std::num::NonZeroUsize;
use std::time::Duration;

use lru::LruCache;
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::canonical::CanonicalKey;
use crate::contract::Request;
use crate::hash::fnv1a64;

pub const DEFAULT_CACHE_CAPACITY: usize = 65_536;

/// FNV-1a-64 over `model|temperature|max_tokens|seed`, temperature printed
/// with six decimals.
pub fn config_fingerprint(request: &Request) -> u64 {
    let canonical = format!(
        "{}|{:.6}|{}|{}",
        request.model, request.temperature, request.max_tokens, request.seed
    );
    fnv1a64(canonical.as_bytes())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: CanonicalKey,
    pub config_fingerprint: u64,
    pub output: String,
    /// Logical insertion time: a per-cache counter, strictly increasing.
    pub inserted_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CacheError {
    #[error("cache lock not acquired within {0:?}")]
    Contended(Duration),
}

struct Inner {
    entries: LruCache<(CanonicalKey, u64), CacheEntry>,
    clock: u64,
}

/// Exact-match response cache, bounded LRU.
///
/// A hit needs both the canonical key and the config fingerprint to match;
/// a different seed or model never aliases. Each operation takes the lock
/// once, so readers see a whole entry or none.
pub struct ResponseCache {
    inner: Mutex<Inner>,
    capacity: NonZeroUsize,
}

impl std::fmt::Debug for ResponseCache {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ResponseCache")
            .field("capacity", &self.capacity)
            .field("len", &self.len())
            .finish()
    }
}

impl Default for ResponseCache {
    fn default() -> Self {
        Self::new(DEFAULT_CACHE_CAPACITY)
    }
}

impl ResponseCache {
    /// A capacity of zero is bumped to one.
    pub fn new(capacity: usize) -> Self {
        let capacity = NonZeroUsize::new(capacity).unwrap_or(NonZeroUsize::MIN);
        Self {
            inner: Mutex::new(Inner {
                entries: LruCache::new(capacity),
                clock: 0,
            }),
            capacity,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity.get()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, key: &CanonicalKey, fingerprint: u64) -> Option<String> {
        let mut inner = self.inner.lock();
        inner
            .entries
            .get(&(key.clone(), fingerprint))
            .map(|e| e.output.clone())
    }

    /// Like [`lookup`](Self::lookup) but gives up when the lock is held longer
    /// than `wait`.
    pub fn try_lookup(
        &self,
        key: &CanonicalKey,
        fingerprint: u64,
        wait: Duration,
    ) -> Result<Option<String>, CacheError> {
        let mut inner = self.inner.try_lock_for(wait).ok_or(CacheError::Contended(wait))?;
        Ok(inner
            .entries
            .get(&(key.clone(), fingerprint))
            .map(|e| e.output.clone()))
    }

    /// Reads an entry without touching recency.
    pub fn peek(&self, key: &CanonicalKey, fingerprint: u64) -> Option<CacheEntry> {
        self.inner
            .lock()
            .entries
            .peek(&(key.clone(), fingerprint))
            .cloned()
    }

    /// Inserts or overwrites. At capacity the least recently used entry goes.
    pub fn store(&self, key: CanonicalKey, fingerprint: u64, output: impl Into<String>) {
        let mut inner = self.inner.lock();
        inner.clock += 1;
        let entry = CacheEntry {
            key: key.clone(),
            config_fingerprint: fingerprint,
            output: output.into(),
            inserted_at: inner.clock,
        };
        inner.entries.put((key, fingerprint), entry);
    }

    pub fn clear(&self) {
        let mut inner = self.inner.lock();
        inner.entries.clear();
    }

    /// Holds the lock for the lifetime of the returned guard. Used to exercise
    /// the contended path.
    #[doc(hidden)]
    pub fn hold_lock(&self) -> impl Drop + '_ {
        self.inner.lock()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::resolvers::canonicalize;
    use std::sync::Arc;

    fn key(s: &str) -> CanonicalKey {
        canonicalize(s)
    }

    #[test]
    fn hit_requires_matching_fingerprint() {
        let cache = ResponseCache::new(8);
        let a = Request::deterministic("1", "hello world");
        let mut b = a.clone();
        b.seed = 99;
        cache.store(key(&a.prompt), config_fingerprint(&a), "out");
        assert_eq!(
            cache.lookup(&key(&a.prompt), config_fingerprint(&a)).as_deref(),
            Some("out")
        );
        assert_eq!(cache.lookup(&key(&b.prompt), config_fingerprint(&b)), None);
        assert_eq!(cache.lookup(&key("other"), config_fingerprint(&a)), None);
    }

    #[test]
    fn last_writer_wins() {
        let cache = ResponseCache::new(4);
        cache.store(key("k"), 1, "first");
        cache.store(key("k"), 1, "second");
        assert_eq!(cache.lookup(&key("k"), 1).as_deref(), Some("second"));
        assert_eq!(cache.len(), 1);
    }

    #[test]
    fn overflow_evicts_first_inserted() {
        let n = 16;
        let cache = ResponseCache::new(n);
        for i in 0..=n {
            cache.store(key(&format!("prompt {i}")), 7, format!("out {i}"));
        }
        assert_eq!(cache.len(), n);
        assert_eq!(cache.lookup(&key("prompt 0"), 7), None);
        assert_eq!(
            cache.lookup(&key(&format!("prompt {n}")), 7),
            Some(format!("out {n}"))
        );
        assert!(cache.lookup(&key("prompt 1"), 7).is_some());
    }

    #[test]
    fn lookup_refreshes_recency() {
        let cache = ResponseCache::new(2);
        cache.store(key("a"), 0, "A");
        cache.store(key("b"), 0, "B");
        assert!(cache.lookup(&key("a"), 0).is_some());
        cache.store(key("c"), 0, "C");
        assert!(cache.lookup(&key("a"), 0).is_some());
        assert!(cache.lookup(&key("b"), 0).is_none());
    }

    #[test]
    fn fingerprint_is_fnv_of_pipe_joined_config() {
        let r = Request::deterministic("x", "p");
        // computed offline over b"gpt2-124m|0.000000|1000|12345"
        assert_eq!(config_fingerprint(&r), 0x409d_bde0_d5c5_25cb);
    }

    #[test]
    fn contended_lookup_times_out() {
        let cache = ResponseCache::new(2);
        let _guard = cache.hold_lock();
        let res = cache.try_lookup(&key("a"), 0, Duration::from_millis(1));
        assert!(matches!(res, Err(CacheError::Contended(_))));
    }

    #[test]
    fn concurrent_readers_never_see_torn_entries() {
        let cache = Arc::new(ResponseCache::new(64));
        let k = key("shared");
        cache.store(k.clone(), 1, "v0-v0-v0");
        let writers: Vec<_> = (0..4)
            .map(|t| {
                let cache = Arc::clone(&cache);
                let k = k.clone();
                std::thread::spawn(move || {
                    for i in 0..500 {
                        let v = format!("v{t}{i}");
                        cache.store(k.clone(), 1, format!("{v}-{v}-{v}"));
                    }
                })
            })
            .collect();
        let readers: Vec<_> = (0..4)
            .map(|_| {
                let cache = Arc::clone(&cache);
                let k = k.clone();
                std::thread::spawn(move || {
                    for _ in 0..500 {
                        let v = cache.lookup(&k, 1).unwrap();
                        let parts: Vec<_> = v.split('-').collect();
                        assert_eq!(parts.len(), 3);
                        assert!(parts.iter().all(|p| *p == parts[0]));
                    }
                })
            })
            .collect();
        for h in writers.into_iter().chain(readers) {
            h.join().unwrap();
        }
    }
}
