//! Per-host auctioneer: local accounts, funding, the allocation loop and
//! advertisements for the service locator.
//!
//! An [`Auctioneer`] is a plain state machine. Callers feed it messages and
//! call [`Auctioneer::run_period`] every period; the network server and the
//! simulator both drive it that way.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{Identity, Resource};
use crate::market::{self, Bid, MarketError, ResourceCapacity, UsageRecord, DEFAULT_PERIOD_SECS};
use crate::market::AllocationResult;
use crate::protocol::messages::{AccountStatus, ResourceStatus, Signed, StatusQuery};
use crate::protocol::validate::{check_fund, check_set_interval, commit_fund};
use crate::protocol::{
    CreateAccountMessage, FundMessage, KeyRegistry, Keypair, PublicKey, ReplayGuard, Reject,
    SetIntervalMessage, Verifier,
};
use crate::sls::{HostAdvertisement, ResourceAd};
use crate::time::Timestamp;

/// Bid interval given to accounts that never set one, in seconds.
pub const DEFAULT_INTERVAL_SECS: f64 = 10_000_000.0;

#[derive(Debug, Error)]
pub enum AuctioneerError {
    #[error("no capacity configured")]
    NoResources,
    #[error(transparent)]
    Market(#[from] MarketError),
}

/// Stand-in for the host's virtualization layer: who wants to run, and how
/// much of a granted share they actually used.
pub trait WorkloadAdapter {
    /// Whether `user` has work for `resource` this period. Idle users are
    /// neither allocated nor charged.
    fn is_active(&self, _user: &Identity, _resource: Resource, _now: Timestamp) -> bool {
        true
    }

    /// Resource units consumed out of `granted` over a period of `period`
    /// seconds ending at `now`.
    fn consume(&mut self, user: &Identity, resource: Resource, granted: f64, period: f64, now: Timestamp) -> f64;

    /// Called once when `user` is logged off `resource`.
    fn disconnect(&mut self, _user: &Identity, _resource: Resource) {}
}

/// Every user is always busy and uses everything it is given.
#[derive(Clone, Copy, Debug, Default)]
pub struct FullUsage;

impl WorkloadAdapter for FullUsage {
    fn consume(&mut self, _: &Identity, _: Resource, granted: f64, _: f64, _: Timestamp) -> f64 {
        granted
    }
}

/// A user's local account for one resource.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalAccount {
    pub bid: Bid,
    pub last_share: f64,
    /// Credits per second charged in the last period.
    pub last_charge: f64,
    pub evicted: bool,
}

impl LocalAccount {
    fn status(&self) -> ResourceStatus {
        ResourceStatus {
            resource: self.bid.resource,
            balance: self.bid.balance(),
            interval: self.bid.interval(),
            last_share: self.last_share,
            last_charge: self.last_charge,
            evicted: self.evicted,
        }
    }
}

/// One row of the per-period trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub time: Timestamp,
    pub host: Identity,
    pub user: Identity,
    pub resource: Resource,
    pub share: f64,
    pub charge: f64,
    pub balance: f64,
}

/// What happened in one call to [`Auctioneer::run_period`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PeriodReport {
    pub time: Timestamp,
    pub results: BTreeMap<Resource, AllocationResult>,
    pub rows: Vec<TraceRow>,
}

#[derive(Debug)]
pub struct Auctioneer {
    host: Identity,
    keypair: Keypair,
    endpoint: String,
    capacities: BTreeMap<Resource, ResourceCapacity>,
    bank_key: PublicKey,
    users: KeyRegistry,
    guard: ReplayGuard,
    accounts: BTreeMap<Identity, BTreeMap<Resource, LocalAccount>>,
    last: BTreeMap<Resource, AllocationResult>,
    charging: bool,
    funded: f64,
    charged: f64,
}

impl Auctioneer {
    pub fn new(
        host: Identity,
        keypair: Keypair,
        capacities: Vec<ResourceCapacity>,
        bank_key: PublicKey,
        users: KeyRegistry,
    ) -> Result<Self, AuctioneerError> {
        if capacities.is_empty() {
            return Err(AuctioneerError::NoResources);
        }
        Ok(Auctioneer {
            endpoint: host.to_string(),
            host,
            keypair,
            capacities: capacities.into_iter().map(|c| (c.resource, c)).collect(),
            bank_key,
            users,
            guard: ReplayGuard::new(),
            accounts: BTreeMap::new(),
            last: BTreeMap::new(),
            charging: true,
            funded: 0.0,
            charged: 0.0,
        })
    }

    /// A host selling `cpu` units of CPU with the default period.
    pub fn with_cpu(
        host: Identity,
        keypair: Keypair,
        cpu: f64,
        bank_key: PublicKey,
        users: KeyRegistry,
    ) -> Result<Self, AuctioneerError> {
        let cap = ResourceCapacity::new(Resource::Cpu, cpu, DEFAULT_PERIOD_SECS)?;
        Auctioneer::new(host, keypair, vec![cap], bank_key, users)
    }

    pub fn set_endpoint(&mut self, endpoint: impl Into<String>) {
        self.endpoint = endpoint.into();
    }

    /// With charging off, shares are computed as usual but balances never
    /// move. Useful for measuring a plain proportional-share baseline.
    pub fn set_charging(&mut self, on: bool) {
        self.charging = on;
    }

    pub fn register_user(&mut self, user: Identity, key: PublicKey) {
        self.users.insert(user, key);
    }

    pub fn host(&self) -> &Identity {
        &self.host
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public()
    }

    pub fn capacity(&self, resource: Resource) -> Option<&ResourceCapacity> {
        self.capacities.get(&resource)
    }

    pub fn period_secs(&self) -> f64 {
        self.capacities
            .values()
            .next()
            .map_or(DEFAULT_PERIOD_SECS, ResourceCapacity::period)
    }

    pub fn account(&self, user: &Identity, resource: Resource) -> Option<&LocalAccount> {
        self.accounts.get(user)?.get(&resource)
    }

    pub fn accounts(&self) -> impl Iterator<Item = (&Identity, Resource, &LocalAccount)> {
        self.accounts
            .iter()
            .flat_map(|(u, m)| m.iter().map(move |(r, a)| (u, *r, a)))
    }

    /// Sum of all local balances.
    pub fn total_local_balance(&self) -> f64 {
        self.accounts().map(|(_, _, a)| a.bid.balance()).sum()
    }

    /// Credits received through fund and create_account messages so far.
    pub fn total_funded(&self) -> f64 {
        self.funded
    }

    /// Credits deducted from local balances by charging so far.
    pub fn total_charged(&self) -> f64 {
        self.charged
    }

    pub fn last_result(&self, resource: Resource) -> Option<&AllocationResult> {
        self.last.get(&resource)
    }

    fn verifier(&self) -> Verifier<'_> {
        Verifier {
            me: &self.host,
            bank_key: &self.bank_key,
            users: &self.users,
        }
    }

    /// Opens an account funded by the embedded fund messages, one per resource.
    pub fn handle_create_account(&mut self, message: &CreateAccountMessage, now: Timestamp) -> Result<(), Reject> {
        let user = message.sender().ok_or(Reject::Malformed)?.clone();
        if self.accounts.contains_key(&user) {
            return Err(Reject::DuplicateAccount);
        }
        let mut guard = self.guard.clone();
        let mut seen = Vec::new();
        for fund in &message.funds {
            if fund.sender != user || seen.contains(&fund.resource) {
                return Err(Reject::Malformed);
            }
            if !self.capacities.contains_key(&fund.resource) {
                return Err(Reject::UnknownResource);
            }
            let digest = check_fund(fund, &guard, &self.verifier(), now)?;
            commit_fund(fund, digest, &mut guard, now);
            seen.push(fund.resource);
        }
        self.guard = guard;
        for fund in &message.funds {
            self.credit(fund);
        }
        Ok(())
    }

    /// Adds a receipt's amount to the sender's local balance and sets the
    /// interval. Opens the account if it does not exist yet.
    pub fn handle_fund(&mut self, message: &FundMessage, now: Timestamp) -> Result<(), Reject> {
        if !self.capacities.contains_key(&message.resource) {
            return Err(Reject::UnknownResource);
        }
        let digest = check_fund(message, &self.guard, &self.verifier(), now)?;
        commit_fund(message, digest, &mut self.guard, now);
        self.credit(message);
        Ok(())
    }

    fn credit(&mut self, fund: &FundMessage) {
        let amount = fund.receipt.amount;
        self.funded += amount;
        let entry = self
            .accounts
            .entry(fund.sender.clone())
            .or_default()
            .entry(fund.resource);
        match entry {
            std::collections::btree_map::Entry::Occupied(mut e) => {
                let acct = e.get_mut();
                let balance = acct.bid.balance() + amount;
                acct.bid.set_balance(balance).expect("validated amount");
                acct.bid.set_interval(fund.interval).expect("validated interval");
                acct.evicted = false;
            }
            std::collections::btree_map::Entry::Vacant(e) => {
                e.insert(LocalAccount {
                    bid: Bid::new(fund.sender.clone(), fund.resource, amount, fund.interval)
                        .expect("validated fund"),
                    last_share: 0.0,
                    last_charge: 0.0,
                    evicted: false,
                });
            }
        }
    }

    /// Changes the bid interval without touching the balance.
    pub fn handle_set_interval(&mut self, message: &SetIntervalMessage) -> Result<(), Reject> {
        check_set_interval(message, &self.guard, &self.verifier())?;
        let acct = self
            .accounts
            .get_mut(&message.sender)
            .and_then(|m| m.get_mut(&message.resource))
            .ok_or(Reject::UnknownAccount)?;
        acct.bid
            .set_interval(message.interval)
            .map_err(|_| Reject::InvalidInterval)?;
        self.guard
            .commit_nonce(&message.sender, &message.recipient, message.nonce);
        Ok(())
    }

    pub fn get_status(&self, user: &Identity) -> Result<AccountStatus, Reject> {
        let acct = self.accounts.get(user).ok_or(Reject::UnknownAccount)?;
        Ok(AccountStatus {
            host: self.host.clone(),
            user: user.clone(),
            resources: acct.values().map(LocalAccount::status).collect(),
        })
    }

    /// Status for a query signed by the account owner.
    pub fn handle_status_query(&self, query: &StatusQuery, now: Timestamp) -> Result<AccountStatus, Reject> {
        if query.host != self.host {
            return Err(Reject::WrongRecipient);
        }
        let key = self.users.get(&query.user).ok_or(Reject::UnknownSender)?;
        if !query.verify(key) {
            return Err(Reject::BadSignature);
        }
        if query.timestamp.abs_diff(now) > self.guard.skew_micros() {
            return Err(Reject::StaleTimestamp);
        }
        self.get_status(&query.user)
    }

    /// Charges the period that just ended and recomputes shares.
    ///
    /// Only active, non-evicted accounts with a positive balance take part.
    /// Users evicted here are disconnected from the workload.
    pub fn run_period(&mut self, now: Timestamp, workload: &mut dyn WorkloadAdapter) -> PeriodReport {
        let mut report = PeriodReport {
            time: now,
            ..PeriodReport::default()
        };
        let capacities: Vec<ResourceCapacity> = self.capacities.values().cloned().collect();
        for cap in capacities {
            let resource = cap.resource;
            let bids: Vec<Bid> = self
                .accounts
                .iter()
                .filter_map(|(user, m)| m.get(&resource).map(|a| (user, a)))
                .filter(|(user, a)| !a.evicted && a.bid.balance() > 0.0 && workload.is_active(user, resource, now))
                .map(|(_, a)| a.bid.clone())
                .collect();
            let period = cap.period();
            let (mut result, updated) = market::settle_period_with(&bids, &cap, |shares| {
                shares
                    .iter()
                    .map(|(user, &granted)| {
                        let q = workload.consume(user, resource, granted, period, now);
                        UsageRecord::new(user.clone(), q.clamp(0.0, granted.max(0.0)))
                            .unwrap_or_else(|_| UsageRecord {
                                user: user.clone(),
                                consumed: 0.0,
                            })
                    })
                    .collect()
            })
            .expect("usage is sanitized");
            if !self.charging {
                for c in result.charges.values_mut() {
                    *c = 0.0;
                }
            }

            for m in self.accounts.values_mut() {
                if let Some(a) = m.get_mut(&resource) {
                    a.last_share = 0.0;
                    a.last_charge = 0.0;
                }
            }
            for bid in updated {
                let acct = self
                    .accounts
                    .get_mut(&bid.user)
                    .and_then(|m| m.get_mut(&resource))
                    .expect("bid came from an account");
                acct.last_share = result.shares.get(&bid.user).copied().unwrap_or(0.0);
                acct.last_charge = result.charges.get(&bid.user).copied().unwrap_or(0.0);
                if self.charging {
                    self.charged += acct.bid.balance() - bid.balance();
                    acct.bid = bid;
                }
            }
            for user in &result.evicted {
                if let Some(a) = self.accounts.get_mut(user).and_then(|m| m.get_mut(&resource)) {
                    a.evicted = true;
                }
                workload.disconnect(user, resource);
            }
            for (user, m) in &self.accounts {
                if let Some(a) = m.get(&resource) {
                    report.rows.push(TraceRow {
                        time: now,
                        host: self.host.clone(),
                        user: user.clone(),
                        resource,
                        share: a.last_share,
                        charge: a.last_charge,
                        balance: a.bid.balance(),
                    });
                }
            }
            self.last.insert(resource, result.clone());
            report.results.insert(resource, result);
        }
        report
    }

    /// Signed advertisement with capacities and last-period spending.
    pub fn advertise(&self, now: Timestamp) -> HostAdvertisement {
        let resources = self
            .capacities
            .values()
            .map(|cap| ResourceAd {
                resource: cap.resource,
                capacity: cap.total(),
                total_spent: self.last.get(&cap.resource).map_or(0.0, AllocationResult::total_spent),
            })
            .collect();
        HostAdvertisement::new_signed(&self.keypair, self.host.clone(), self.endpoint.clone(), resources, now)
    }
}
