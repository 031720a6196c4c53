//! Replay protection: per-peer nonce high-water marks and a time-bounded
//! window of recently accepted message digests.

use std::collections::{BTreeMap, BTreeSet};

use super::Reject;
use crate::ids::Identity;
use crate::time::{Timestamp, MICROS_PER_SEC};

/// Accepted clock skew between a message timestamp and the receiver's clock.
pub const DEFAULT_SKEW_SECS: u64 = 300;

#[derive(Clone, Debug)]
pub struct ReplayGuard {
    skew: u64,
    nonces: BTreeMap<(Identity, Identity), u64>,
    recent: BTreeMap<[u8; 32], Timestamp>,
    by_time: BTreeSet<(Timestamp, [u8; 32])>,
}

impl Default for ReplayGuard {
    fn default() -> Self {
        ReplayGuard::with_skew_secs(DEFAULT_SKEW_SECS)
    }
}

impl ReplayGuard {
    pub fn new() -> Self {
        ReplayGuard::default()
    }

    pub fn with_skew_secs(secs: u64) -> Self {
        ReplayGuard {
            skew: secs * MICROS_PER_SEC,
            nonces: BTreeMap::new(),
            recent: BTreeMap::new(),
            by_time: BTreeSet::new(),
        }
    }

    pub fn skew_micros(&self) -> u64 {
        self.skew
    }

    /// Highest nonce accepted from `sender` at `recipient`.
    pub fn high_water(&self, sender: &Identity, recipient: &Identity) -> Option<u64> {
        self.nonces.get(&(sender.clone(), recipient.clone())).copied()
    }

    pub fn check_nonce(&self, sender: &Identity, recipient: &Identity, nonce: u64) -> Result<(), Reject> {
        match self.high_water(sender, recipient) {
            Some(seen) if nonce <= seen => Err(Reject::StaleNonce),
            _ => Ok(()),
        }
    }

    pub fn commit_nonce(&mut self, sender: &Identity, recipient: &Identity, nonce: u64) {
        let entry = self
            .nonces
            .entry((sender.clone(), recipient.clone()))
            .or_insert(nonce);
        *entry = (*entry).max(nonce);
    }

    /// Rejects timestamps outside the skew bound and digests already seen.
    pub fn check_recent(&self, digest: &[u8; 32], timestamp: Timestamp, now: Timestamp) -> Result<(), Reject> {
        if timestamp.abs_diff(now) > self.skew {
            return Err(Reject::StaleTimestamp);
        }
        if self.recent.contains_key(digest) {
            return Err(Reject::Replay);
        }
        Ok(())
    }

    pub fn commit_recent(&mut self, digest: [u8; 32], timestamp: Timestamp, now: Timestamp) {
        self.prune(now);
        if self.recent.insert(digest, timestamp).is_none() {
            self.by_time.insert((timestamp, digest));
        }
    }

    /// Forgets digests older than twice the skew; their timestamps would be
    /// rejected as stale anyway.
    pub fn prune(&mut self, now: Timestamp) {
        let horizon = now.saturating_sub(2 * self.skew);
        while let Some(&(ts, digest)) = self.by_time.iter().next() {
            if ts >= horizon {
                break;
            }
            self.by_time.remove(&(ts, digest));
            self.recent.remove(&digest);
        }
    }

    pub fn recent_len(&self) -> usize {
        self.recent.len()
    }

    pub fn recent_entries(&self) -> impl Iterator<Item = (&[u8; 32], &Timestamp)> {
        self.recent.iter()
    }

    pub fn nonce_entries(&self) -> impl Iterator<Item = (&(Identity, Identity), &u64)> {
        self.nonces.iter()
    }
}
