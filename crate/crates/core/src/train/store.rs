//! Versioned parameter store shared between trainers (writers) and samplers (readers).

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex, RwLock};
use std::time::Duration;

use crate::error::{Error, Result};
use crate::nn::ParamVector;
use crate::rollout::RunningNorm;

/// An immutable published parameter set.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub version: u64,
    pub params: ParamVector,
    pub obs_norm: Option<RunningNorm>,
    checksum: u64,
}

fn checksum(version: u64, params: &ParamVector, obs_norm: Option<&RunningNorm>) -> u64 {
    let mut h = DefaultHasher::new();
    version.hash(&mut h);
    for v in params.values() {
        v.to_bits().hash(&mut h);
    }
    if let Some(n) = obs_norm {
        n.count.to_bits().hash(&mut h);
        for v in n.mean.iter().chain(&n.var) {
            v.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

impl Snapshot {
    fn new(version: u64, params: ParamVector, obs_norm: Option<RunningNorm>) -> Self {
        let checksum = checksum(version, &params, obs_norm.as_ref());
        Self {
            version,
            params,
            obs_norm,
            checksum,
        }
    }

    pub fn is_intact(&self) -> bool {
        self.checksum == checksum(self.version, &self.params, self.obs_norm.as_ref())
    }
}

/// Single-writer, multi-reader store. Readers receive whole snapshots; each
/// publish increments the version by exactly one.
pub struct ParamStore {
    current: RwLock<Arc<Snapshot>>,
    version: Mutex<u64>,
    published: Condvar,
    reads: AtomicU64,
}

impl ParamStore {
    pub fn new(params: ParamVector, obs_norm: Option<RunningNorm>) -> Self {
        Self {
            current: RwLock::new(Arc::new(Snapshot::new(0, params, obs_norm))),
            version: Mutex::new(0),
            published: Condvar::new(),
            reads: AtomicU64::new(0),
        }
    }

    /// The latest snapshot, validated against its checksum.
    pub fn read(&self) -> Result<Arc<Snapshot>> {
        let snap = Arc::clone(&self.current.read().expect("store lock"));
        self.reads.fetch_add(1, Ordering::Relaxed);
        if !snap.is_intact() {
            return Err(Error::TornSnapshot { version: snap.version });
        }
        Ok(snap)
    }

    pub fn version(&self) -> u64 {
        *self.version.lock().expect("version lock")
    }

    /// Publishes a new snapshot and returns its version.
    pub fn publish(&self, params: ParamVector, obs_norm: Option<RunningNorm>) -> u64 {
        let mut version = self.version.lock().expect("version lock");
        let next = *version + 1;
        *self.current.write().expect("store lock") = Arc::new(Snapshot::new(next, params, obs_norm));
        *version = next;
        self.published.notify_all();
        next
    }

    /// Blocks until the version reaches `min_version` or `timeout` passes.
    /// Returns the version observed.
    pub fn wait_for_version(&self, min_version: u64, timeout: Duration) -> u64 {
        let guard = self.version.lock().expect("version lock");
        let (guard, _) = self
            .published
            .wait_timeout_while(guard, timeout, |v| *v < min_version)
            .expect("version lock");
        *guard
    }

    /// Number of validated reads so far.
    pub fn reads(&self) -> u64 {
        self.reads.load(Ordering::Relaxed)
    }
}
