//! Failure-atomic persistent storage with a full version history.

use crate::protocol::Snapshot;

/// Every snapshot a replica ever committed. Version 0 is the initial state.
#[derive(Debug, Clone)]
pub struct PersistentStore {
    versions: Vec<Snapshot>,
    current: usize,
}

impl PersistentStore {
    pub fn new(initial: Snapshot) -> Self {
        PersistentStore {
            versions: vec![initial],
            current: 0,
        }
    }

    pub fn current(&self) -> usize {
        self.current
    }

    pub fn len(&self) -> usize {
        self.versions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.versions.is_empty()
    }

    /// Appends `snap` unless it equals the current version. Returns the new
    /// version index when something was written.
    pub fn commit(&mut self, snap: Snapshot) -> Option<usize> {
        if self.versions[self.current] == snap {
            return None;
        }
        self.versions.push(snap);
        self.current = self.versions.len() - 1;
        Some(self.current)
    }

    /// The latest committed version.
    pub fn latest(&self) -> (usize, Snapshot) {
        (self.current, self.versions[self.current].clone())
    }

    /// Restores a strictly older version, or `None` if `version` is not older
    /// than the current one.
    pub fn rollback_to(&mut self, version: usize) -> Option<Snapshot> {
        if version >= self.current {
            return None;
        }
        self.current = version;
        Some(self.versions[version].clone())
    }

    pub fn version(&self, index: usize) -> Option<&Snapshot> {
        self.versions.get(index)
    }
}
