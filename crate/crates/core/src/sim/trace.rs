//! What a simulation run leaves behind: per-period samples for every account
//! and a log of notable events.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::ids::{Identity, Resource};
use crate::time::Timestamp;

/// Column order of [`Trace::to_csv`].
pub const CSV_HEADER: &str = "time,host,user,resource,share,charge,balance,interval,work";

/// One account's state right after an allocation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: Timestamp,
    pub host: Identity,
    pub user: Identity,
    pub resource: Resource,
    /// Resource units granted for the period starting at `time`.
    pub share: f64,
    /// Credits per second charged for that period.
    pub charge: f64,
    /// Local balance after the charge.
    pub balance: f64,
    pub interval: f64,
    /// Cumulative work units the user has completed on this host.
    pub work: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "kebab-case")]
pub enum EventKind {
    Accepted { node: Identity, user: Identity, op: String },
    Rejected { node: Identity, user: Identity, op: String, reason: String },
    Dropped { node: Identity, op: String },
    Evicted { host: Identity, user: Identity },
    Killed { host: Identity },
    Expired { host: Identity },
    Minted { user: Identity, amount: f64 },
    Swept { host: Identity, amount: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub time: Timestamp,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// A scripted bid change and when it took effect at the host.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidChange {
    pub id: usize,
    pub user: Identity,
    pub host: Identity,
    pub interval: f64,
    pub issued: Timestamp,
    pub accepted: Option<Timestamp>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub samples: Vec<Sample>,
    pub events: Vec<TraceEvent>,
    pub changes: Vec<BidChange>,
    /// Messages handed to the network, including ones later dropped.
    pub messages_sent: u64,
}

/// Timing of one bid change.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReallocationLatency {
    pub issued: Timestamp,
    pub accepted: Timestamp,
    /// First allocation that used the new bid.
    pub reflected: Timestamp,
}

impl ReallocationLatency {
    /// Seconds from the user issuing the change to an allocation using it.
    pub fn from_issue_secs(&self) -> f64 {
        (self.reflected - self.issued) as f64 / 1e6
    }

    /// Seconds from the auctioneer accepting the change to an allocation using it.
    pub fn from_acceptance_secs(&self) -> f64 {
        (self.reflected - self.accepted) as f64 / 1e6
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum LatencyError {
    #[error("no bid change with id {0}")]
    NoSuchChange(usize),
    #[error("bid change {0} was never accepted")]
    NotAccepted(usize),
    #[error("bid change {0} never showed up in an allocation")]
    NotReflected(usize),
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(64 * (self.samples.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                s.time, s.host, s.user, s.resource, s.share, s.charge, s.balance, s.interval, s.work
            );
        }
        out
    }

    /// Events as JSON lines.
    pub fn events_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("events serialize"));
            out.push('\n');
        }
        out
    }

    pub fn samples_for<'a, 'b>(&'a self, host: &'b str, user: &'b str) -> impl Iterator<Item = &'a Sample> + use<'a, 'b> {
        self.samples
            .iter()
            .filter(move |s| s.host.as_str() == host && s.user.as_str() == user)
    }

    /// The sample for `user` on `host` at exactly `time`, if one was taken.
    pub fn sample_at(&self, host: &str, user: &str, time: Timestamp) -> Option<&Sample> {
        self.samples_for(host, user).find(|s| s.time == time)
    }

    /// Allocation times at `host`, in order.
    pub fn ticks(&self, host: &str) -> Vec<Timestamp> {
        let mut t: Vec<Timestamp> = self
            .samples
            .iter()
            .filter(|s| s.host.as_str() == host)
            .map(|s| s.time)
            .collect();
        t.dedup();
        t
    }

    /// Time from a bid change to the first allocation that used it: the
    /// first sample for that account at or after acceptance carrying the
    /// new interval.
    pub fn measure_reallocation_latency(&self, change: usize) -> Result<ReallocationLatency, LatencyError> {
        let c = self
            .changes
            .iter()
            .find(|c| c.id == change)
            .ok_or(LatencyError::NoSuchChange(change))?;
        let accepted = c.accepted.ok_or(LatencyError::NotAccepted(change))?;
        let reflected = self
            .samples
            .iter()
            .find(|s| s.time >= accepted && s.host == c.host && s.user == c.user && s.interval == c.interval)
            .ok_or(LatencyError::NotReflected(change))?;
        Ok(ReallocationLatency {
            issued: c.issued,
            accepted,
            reflected: reflected.time,
        })
    }
}
