//! Deterministic discrete-event simulation of a whole cluster: bank,
//! locator, auctioneers and users exchanging real signed messages over a
//! virtual network.
//!
//! Time is kept in integer microseconds. Events that fall on the same
//! instant run in a fixed order: message deliveries, host failures,
//! allocation ticks, then everything else (scripted actions, income,
//! registrations), ties broken by scheduling order. Each network link draws
//! its latency from its own RNG, seeded from the run seed and the two
//! endpoint names, so adding or removing a host does not disturb the
//! latencies seen on other links.

mod analysis;
pub mod scenario;
pub mod trace;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::{best_response, HostMarketView};
use crate::auctioneer::{Auctioneer, WorkloadAdapter, DEFAULT_INTERVAL_SECS};
use crate::bank::Bank;
use crate::ids::{Identity, Resource};
use crate::market::ResourceCapacity;
use crate::protocol::messages::Signed;
use crate::protocol::{
    CreateAccountMessage, FundMessage, KeyRegistry, Keypair, Message, SetIntervalMessage, TransferRequest,
};
use crate::sls::{QueryFilter, Registry};
use crate::time::{secs_to_micros, Timestamp};

pub use analysis::{
    arrival_periods, bursty_scenario, empirical_improvement, improvement_over_proportional_share,
    EmpiricalImprovement,
};
pub use scenario::{
    AccountSpec, AgentAction, FundAction, HostSpec, Income, IntervalAction, Latency, Problem, Scenario,
    ScenarioError, UserSpec, Workload,
};
pub use trace::{BidChange, EventKind, LatencyError, ReallocationLatency, Sample, Trace, TraceEvent, CSV_HEADER};

pub const ADMIN: &str = "admin";

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("need at least one continuous user, got {0}")]
    NoContinuousUsers(usize),
    #[error("setup failed: {0}")]
    Setup(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Bank,
    Sls,
    Host(usize),
    User(usize),
}

#[derive(Debug)]
enum Event {
    Deliver { from: Node, to: Node, bytes: Vec<u8> },
    Kill(usize),
    Tick(usize),
    Register(usize),
    Fund { user: usize, host: usize, amount: f64, interval: f64 },
    SetInterval { user: usize, host: usize, interval: f64, change: usize },
    Agent { user: usize, budget: f64, interval: f64 },
    Income(usize),
    Recirculate,
}

impl Event {
    fn class(&self) -> u8 {
        match self {
            Event::Deliver { .. } => 0,
            Event::Kill(_) => 1,
            Event::Tick(_) => 2,
            _ => 3,
        }
    }
}

/// Where every credit is at one instant.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Audit {
    pub issued: f64,
    pub bank_total: f64,
    pub user_bank: f64,
    pub admin_bank: f64,
    pub provider_bank: f64,
    pub local: f64,
    pub charged: f64,
    pub swept: f64,
    /// Receipts that reached a dead host or were refused there.
    pub orphaned: f64,
    /// Receipts issued but not yet presented to their host.
    pub in_flight: f64,
}

impl Audit {
    /// Allowed error: 1e-6 credits per million issued (at least 1e-6).
    pub fn tolerance(&self) -> f64 {
        1e-6 * (self.issued / 1e6).max(1.0)
    }

    /// Issued credits minus everything accounted for outside the providers'
    /// bank accounts, with those replaced by what the hosts hold.
    pub fn discrepancy(&self) -> f64 {
        self.issued
            - (self.user_bank + self.admin_bank + self.local + self.charged - self.swept + self.orphaned
                + self.in_flight)
    }

    /// Providers' bank balances minus what their auctioneers account for.
    pub fn provider_discrepancy(&self) -> f64 {
        self.provider_bank - (self.local + self.charged - self.swept + self.orphaned + self.in_flight)
    }

    pub fn holds(&self) -> bool {
        let tol = self.tolerance();
        self.discrepancy().abs() <= tol
            && self.provider_discrepancy().abs() <= tol
            && (self.bank_total - self.issued).abs() <= tol
    }
}

struct SimHost {
    spec: HostSpec,
    id: Identity,
    key: Keypair,
    auctioneer: Auctioneer,
    alive: bool,
    swept: f64,
    orphaned: f64,
    in_flight: f64,
}

struct PendingFund {
    host: usize,
    interval: f64,
}

struct SimUser {
    spec: UserSpec,
    id: Identity,
    key: Keypair,
    nonces: BTreeMap<usize, u64>,
    pending: BTreeMap<(Identity, Timestamp), PendingFund>,
    plans: VecDeque<(f64, f64)>,
}

impl SimUser {
    fn next_nonce(&mut self, host: usize) -> u64 {
        let n = self.nonces.entry(host).or_insert(0);
        *n += 1;
        *n
    }
}

struct Workloads {
    index: BTreeMap<Identity, usize>,
    kinds: Vec<(Workload, f64)>,
    done: Vec<f64>,
    per_host: BTreeMap<(usize, usize), f64>,
}

impl Workloads {
    fn active(&self, user: usize, now: Timestamp) -> bool {
        let t = now.as_secs_f64();
        match &self.kinds[user].0 {
            Workload::Continuous => true,
            Workload::Bursty { active } => active.iter().any(|&(s, e)| t >= s && t < e),
            Workload::Batch { work } => self.done[user] < *work,
        }
    }
}

struct HostWork<'a> {
    work: &'a mut Workloads,
    host: usize,
    speed: f64,
}

impl WorkloadAdapter for HostWork<'_> {
    fn is_active(&self, user: &Identity, _: Resource, now: Timestamp) -> bool {
        self.work.index.get(user).is_none_or(|&u| self.work.active(u, now))
    }

    fn consume(&mut self, user: &Identity, _: Resource, granted: f64, period: f64, _: Timestamp) -> f64 {
        let Some(&u) = self.work.index.get(user) else {
            return granted;
        };
        let (kind, frame_cost) = &self.work.kinds[u];
        let mut cpu_secs = granted * period;
        if let Workload::Batch { work } = kind {
            let left = (work - self.work.done[u]).max(0.0);
            cpu_secs = cpu_secs.min(left * frame_cost / self.speed);
        }
        let units = cpu_secs * self.speed / frame_cost;
        self.work.done[u] += units;
        *self.work.per_host.entry((u, self.host)).or_insert(0.0) += units;
        cpu_secs / period
    }
}

/// A cluster run in virtual time.
pub struct Simulation {
    scenario: Scenario,
    seed: u64,
    now: Timestamp,
    end: Timestamp,
    period: u64,
    queue: BinaryHeap<Reverse<(Timestamp, u8, u64)>>,
    pending: BTreeMap<u64, Event>,
    seq: u64,
    bank: Bank,
    admin: Keypair,
    sls: Registry,
    hosts: Vec<SimHost>,
    users: Vec<SimUser>,
    host_index: BTreeMap<Identity, usize>,
    links: BTreeMap<(Node, Node), ChaCha8Rng>,
    clocks: BTreeMap<Identity, Timestamp>,
    changes_by_nonce: BTreeMap<(usize, usize, u64), usize>,
    work: Workloads,
    trace: Trace,
    violations: Vec<String>,
}

impl Simulation {
    pub fn new(scenario: &Scenario, seed: u64) -> Result<Self, SimError> {
        scenario.validate()?;
        let s = scenario.clone();
        let bank_key = Keypair::derive("bank");
        let admin = Keypair::derive(ADMIN);
        let mut registry = KeyRegistry::default();
        registry.insert(ADMIN.into(), admin.public());

        let users: Vec<SimUser> = s
            .users
            .iter()
            .map(|u| SimUser {
                spec: u.clone(),
                id: Identity::from(u.name.as_str()),
                key: Keypair::derive(&format!("user:{}", u.name)),
                nonces: BTreeMap::new(),
                pending: BTreeMap::new(),
                plans: VecDeque::new(),
            })
            .collect();
        let user_registry: KeyRegistry = users.iter().map(|u| (u.id.clone(), u.key.public())).collect();
        for u in &users {
            registry.insert(u.id.clone(), u.key.public());
        }

        let mut hosts = Vec::new();
        for spec in &s.hosts {
            let id = Identity::from(spec.name.as_str());
            let key = Keypair::derive(&format!("host:{}", spec.name));
            registry.insert(id.clone(), key.public());
            let cap = ResourceCapacity::new(Resource::Cpu, spec.cpu, s.period)
                .map_err(|e| SimError::Setup(e.to_string()))?;
            let mut auctioneer = Auctioneer::new(id.clone(), key.clone(), vec![cap], bank_key.public(), user_registry.clone())
                .map_err(|e| SimError::Setup(e.to_string()))?;
            auctioneer.set_charging(s.charging);
            hosts.push(SimHost {
                spec: spec.clone(),
                id,
                key,
                auctioneer,
                alive: true,
                swept: 0.0,
                orphaned: 0.0,
                in_flight: 0.0,
            });
        }
        let host_index = hosts.iter().enumerate().map(|(i, h)| (h.id.clone(), i)).collect();
        let work = Workloads {
            index: users.iter().enumerate().map(|(i, u)| (u.id.clone(), i)).collect(),
            kinds: s.users.iter().map(|u| (u.workload.clone(), u.frame_cost)).collect(),
            done: vec![0.0; s.users.len()],
            per_host: BTreeMap::new(),
        };

        let mut sim = Simulation {
            end: Timestamp::from_secs_f64(s.duration),
            period: secs_to_micros(s.period),
            scenario: s,
            seed,
            now: Timestamp::ZERO,
            queue: BinaryHeap::new(),
            pending: BTreeMap::new(),
            seq: 0,
            bank: Bank::new(bank_key, registry),
            admin,
            sls: Registry::with_expiry_secs(scenario.expiry.round() as u64),
            hosts,
            users,
            host_index,
            links: BTreeMap::new(),
            clocks: BTreeMap::new(),
            changes_by_nonce: BTreeMap::new(),
            work,
            trace: Trace::default(),
            violations: Vec::new(),
        };
        sim.open_accounts()?;
        sim.schedule_script();
        Ok(sim)
    }

    /// Mints opening balances and opens the scripted accounts before the
    /// clock starts, through the normal bank and create_account paths.
    fn open_accounts(&mut self) -> Result<(), SimError> {
        for u in 0..self.users.len() {
            let bank = self.users[u].spec.bank;
            if bank > 0.0 {
                let id = self.users[u].id.clone();
                self.bank
                    .mint(&id, bank, Timestamp::ZERO)
                    .map_err(|e| SimError::Setup(e.to_string()))?;
            }
            for acct in self.users[u].spec.accounts.clone() {
                let h = self.host_index[&Identity::from(acct.host.as_str())];
                let ts = self.stamp(&self.users[u].id.clone());
                let user = &self.users[u];
                // summing the opening amounts can leave the last one short
                // by rounding dust; fund it with whatever is left
                let amount = acct.amount.min(self.bank.balance_of(&user.id));
                let req = TransferRequest::new_signed(&user.key, user.id.clone(), self.hosts[h].id.clone(), amount, ts);
                let receipt = self
                    .bank
                    .transfer(&req, Timestamp::ZERO)
                    .map_err(|e| SimError::Setup(format!("opening {}: {e}", acct.host)))?;
                let nonce = self.users[u].next_nonce(h);
                let fund = FundMessage::new_signed(&self.users[u].key, Resource::Cpu, nonce, acct.interval, receipt);
                let create = CreateAccountMessage { funds: vec![fund] };
                self.hosts[h]
                    .auctioneer
                    .handle_create_account(&create, Timestamp::ZERO)
                    .map_err(|e| SimError::Setup(format!("opening {}: {e}", acct.host)))?;
            }
        }
        Ok(())
    }

    fn schedule_script(&mut self) {
        let at = Timestamp::from_secs_f64;
        for h in 0..self.hosts.len() {
            self.schedule(Timestamp::ZERO, Event::Tick(h));
            self.schedule(Timestamp::ZERO, Event::Register(h));
            if let Some(k) = self.hosts[h].spec.kill_at {
                self.schedule(at(k), Event::Kill(h));
            }
        }
        for u in 0..self.users.len() {
            let spec = self.users[u].spec.clone();
            for f in &spec.funds {
                let host = self.host_index[&Identity::from(f.host.as_str())];
                self.schedule(
                    at(f.at),
                    Event::Fund {
                        user: u,
                        host,
                        amount: f.amount,
                        interval: f.interval,
                    },
                );
            }
            for s in &spec.set_intervals {
                let host = self.host_index[&Identity::from(s.host.as_str())];
                let change = self.trace.changes.len();
                self.trace.changes.push(BidChange {
                    id: change,
                    user: self.users[u].id.clone(),
                    host: self.hosts[host].id.clone(),
                    interval: s.interval,
                    issued: at(s.at),
                    accepted: None,
                });
                self.schedule(
                    at(s.at),
                    Event::SetInterval {
                        user: u,
                        host,
                        interval: s.interval,
                        change,
                    },
                );
            }
            for a in &spec.agents {
                self.schedule(
                    at(a.at),
                    Event::Agent {
                        user: u,
                        budget: a.budget,
                        interval: a.interval,
                    },
                );
            }
            if spec.income.is_some() {
                self.schedule(Timestamp::ZERO, Event::Income(u));
            }
        }
        if let Some(every) = self.scenario.recirculation {
            self.schedule(at(every), Event::Recirculate);
        }
    }

    fn schedule(&mut self, time: Timestamp, event: Event) {
        if time > self.end {
            return;
        }
        let seq = self.seq;
        self.seq += 1;
        self.queue.push(Reverse((time, event.class(), seq)));
        self.pending.insert(seq, event);
    }

    /// Processes every event up to the scenario's end.
    pub fn run(&mut self) {
        while let Some(Reverse((time, _, seq))) = self.queue.pop() {
            let event = self.pending.remove(&seq).expect("queued event");
            self.now = time;
            self.dispatch(event);
        }
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    /// Invariant violations noticed while running (empty when all is well).
    pub fn violations(&self) -> &[String] {
        &self.violations
    }

    pub fn bank(&self) -> &Bank {
        &self.bank
    }

    pub fn auctioneer(&self, host: &str) -> Option<&Auctioneer> {
        let h = *self.host_index.get(&Identity::from(host))?;
        Some(&self.hosts[h].auctioneer)
    }

    /// Total work units `user` has completed on all hosts.
    pub fn work_done(&self, user: &str) -> f64 {
        self.work
            .index
            .get(&Identity::from(user))
            .map_or(0.0, |&u| self.work.done[u])
    }

    pub fn audit(&self) -> Audit {
        let mut a = Audit {
            issued: self.bank.total_issued(),
            bank_total: self.bank.total_balance(),
            admin_bank: self.bank.balance_of(&ADMIN.into()),
            ..Audit::default()
        };
        for u in &self.users {
            a.user_bank += self.bank.balance_of(&u.id);
        }
        for h in &self.hosts {
            a.provider_bank += self.bank.balance_of(&h.id);
            a.local += h.auctioneer.total_local_balance();
            a.charged += h.auctioneer.total_charged();
            a.swept += h.swept;
            a.orphaned += h.orphaned;
            a.in_flight += h.in_flight;
        }
        a
    }

    fn node_name(&self, node: Node) -> String {
        match node {
            Node::Bank => "bank".into(),
            Node::Sls => "sls".into(),
            Node::Host(h) => format!("host:{}", self.hosts[h].spec.name),
            Node::User(u) => format!("user:{}", self.users[u].spec.name),
        }
    }

    fn node_id(&self, node: Node) -> Identity {
        match node {
            Node::Bank => "bank".into(),
            Node::Sls => "sls".into(),
            Node::Host(h) => self.hosts[h].id.clone(),
            Node::User(u) => self.users[u].id.clone(),
        }
    }

    fn latency(&mut self, from: Node, to: Node) -> u64 {
        match self.scenario.latency {
            Latency::Constant { secs } => secs_to_micros(secs),
            Latency::Uniform { min, max } => {
                if !self.links.contains_key(&(from, to)) {
                    let label = format!("{}:{}>{}", self.seed, self.node_name(from), self.node_name(to));
                    let digest = Sha256::digest(label.as_bytes());
                    let seed = u64::from_be_bytes(digest[..8].try_into().expect("8 bytes"));
                    self.links.insert((from, to), ChaCha8Rng::seed_from_u64(seed));
                }
                let rng = self.links.get_mut(&(from, to)).expect("link rng");
                secs_to_micros(rng.gen_range(min..=max))
            }
        }
    }

    fn send(&mut self, from: Node, to: Node, message: &Message) {
        let delay = self.latency(from, to);
        self.trace.messages_sent += 1;
        self.schedule(
            self.now + delay,
            Event::Deliver {
                from,
                to,
                bytes: message.encode(),
            },
        );
    }

    /// A fresh, strictly increasing timestamp for messages signed by `who`.
    fn stamp(&mut self, who: &Identity) -> Timestamp {
        let last = self.clocks.get(who).copied();
        let ts = match last {
            Some(l) if l >= self.now => l + 1,
            _ => self.now,
        };
        self.clocks.insert(who.clone(), ts);
        ts
    }

    fn log(&mut self, kind: EventKind) {
        self.trace.events.push(TraceEvent { time: self.now, kind });
    }

    fn dispatch(&mut self, event: Event) {
        match event {
            Event::Deliver { from, to, bytes } => self.deliver(from, to, &bytes),
            Event::Kill(h) => {
                self.hosts[h].alive = false;
                let host = self.hosts[h].id.clone();
                self.log(EventKind::Killed { host });
            }
            Event::Tick(h) => self.tick(h),
            Event::Register(h) => {
                if self.hosts[h].alive {
                    let ad = self.hosts[h].auctioneer.advertise(self.now);
                    self.send(Node::Host(h), Node::Sls, &Message::Advertisement(ad));
                    let next = self.now + secs_to_micros(self.scenario.registration_interval);
                    self.schedule(next, Event::Register(h));
                }
            }
            Event::Fund {
                user,
                host,
                amount,
                interval,
            } => self.start_fund(user, host, amount, interval),
            Event::SetInterval {
                user,
                host,
                interval,
                change,
            } => {
                let nonce = self.users[user].next_nonce(host);
                let u = &self.users[user];
                let msg = SetIntervalMessage::new_signed(
                    &u.key,
                    u.id.clone(),
                    self.hosts[host].id.clone(),
                    Resource::Cpu,
                    nonce,
                    interval,
                );
                self.changes_by_nonce.insert((user, host, nonce), change);
                self.send(Node::User(user), Node::Host(host), &Message::SetInterval(msg));
            }
            Event::Agent {
                user,
                budget,
                interval,
            } => {
                self.users[user].plans.push_back((budget, interval));
                let filter = QueryFilter {
                    resource: Some(Resource::Cpu),
                    min_capacity: None,
                };
                self.send(Node::User(user), Node::Sls, &Message::SlsQuery(filter));
            }
            Event::Income(u) => self.income(u),
            Event::Recirculate => self.recirculate(),
        }
    }

    fn tick(&mut self, h: usize) {
        if !self.hosts[h].alive {
            return;
        }
        let speed = self.hosts[h].spec.speed;
        let capacity = self.hosts[h].spec.cpu;
        let report = {
            let mut adapter = HostWork {
                work: &mut self.work,
                host: h,
                speed,
            };
            self.hosts[h].auctioneer.run_period(self.now, &mut adapter)
        };
        for (resource, result) in &report.results {
            let total: f64 = result.shares.values().sum();
            if result.shares.values().any(|&s| s > 0.0) && (total - capacity).abs() > 1e-9 * capacity {
                self.violations.push(format!(
                    "{} {} at {}: shares sum to {total}, capacity {capacity}",
                    self.hosts[h].id, resource, self.now
                ));
            }
            for user in &result.evicted {
                let host = self.hosts[h].id.clone();
                self.log(EventKind::Evicted {
                    host,
                    user: user.clone(),
                });
            }
        }
        for row in report.rows {
            let interval = self.hosts[h]
                .auctioneer
                .account(&row.user, row.resource)
                .map_or(0.0, |a| a.bid.interval());
            let work = self
                .work
                .index
                .get(&row.user)
                .and_then(|&u| self.work.per_host.get(&(u, h)))
                .copied()
                .unwrap_or(0.0);
            self.trace.samples.push(Sample {
                time: row.time,
                host: row.host,
                user: row.user,
                resource: row.resource,
                share: row.share,
                charge: row.charge,
                balance: row.balance,
                interval,
                work,
            });
        }
        let next = self.now + self.period;
        self.schedule(next, Event::Tick(h));
    }

    fn start_fund(&mut self, user: usize, host: usize, amount: f64, interval: f64) {
        let id = self.users[user].id.clone();
        let ts = self.stamp(&id);
        let host_id = self.hosts[host].id.clone();
        let u = &mut self.users[user];
        let req = TransferRequest::new_signed(&u.key, id, host_id.clone(), amount, ts);
        u.pending.insert((host_id, ts), PendingFund { host, interval });
        self.send(Node::User(user), Node::Bank, &Message::Transfer(req));
    }

    fn income(&mut self, u: usize) {
        let Some(inc) = self.users[u].spec.income.clone() else {
            return;
        };
        let amount = inc.rate * inc.every;
        let id = self.users[u].id.clone();
        let admin = Identity::from(ADMIN);
        if self.bank.balance_of(&admin) >= amount {
            let ts = self.stamp(&admin);
            let req = TransferRequest::new_signed(&self.admin, admin, id.clone(), amount, ts);
            if let Err(e) = self.bank.transfer(&req, self.now) {
                self.violations.push(format!("income transfer to {id} failed: {e}"));
            }
        } else {
            if let Err(e) = self.bank.mint(&id, amount, self.now) {
                self.violations.push(format!("income mint for {id} failed: {e}"));
            }
            self.log(EventKind::Minted { user: id.clone(), amount });
        }
        if let Some(host) = &inc.host {
            let h = self.host_index[&Identity::from(host.as_str())];
            let interval = self.hosts[h]
                .auctioneer
                .account(&id, Resource::Cpu)
                .map_or(DEFAULT_INTERVAL_SECS, |a| a.bid.interval());
            self.start_fund(u, h, amount, interval);
        }
        let next = self.now + secs_to_micros(inc.every);
        self.schedule(next, Event::Income(u));
    }

    fn recirculate(&mut self) {
        let admin = Identity::from(ADMIN);
        for h in 0..self.hosts.len() {
            if !self.hosts[h].alive {
                continue;
            }
            let host = &self.hosts[h];
            let owed = host.auctioneer.total_charged() - host.swept;
            let amount = owed.min(self.bank.balance_of(&host.id));
            if amount <= 0.0 {
                continue;
            }
            let id = host.id.clone();
            let ts = self.stamp(&id);
            let req = TransferRequest::new_signed(&self.hosts[h].key, id.clone(), admin.clone(), amount, ts);
            match self.bank.transfer(&req, self.now) {
                Ok(_) => {
                    self.hosts[h].swept += amount;
                    self.log(EventKind::Swept { host: id, amount });
                }
                Err(e) => self.violations.push(format!("sweep from {id} failed: {e}")),
            }
        }
        let next = self.now + secs_to_micros(self.scenario.recirculation.unwrap_or(f64::INFINITY));
        self.schedule(next, Event::Recirculate);
    }

    fn deliver(&mut self, from: Node, to: Node, bytes: &[u8]) {
        let message = match Message::decode(bytes) {
            Ok(m) => m,
            Err(e) => {
                self.violations.push(format!("undecodable message to {to:?}: {e}"));
                return;
            }
        };
        match to {
            Node::Bank => self.at_bank(from, message),
            Node::Sls => self.at_sls(from, message),
            Node::Host(h) => self.at_host(h, from, message),
            Node::User(u) => self.at_user(u, message),
        }
    }

    fn at_bank(&mut self, from: Node, message: Message) {
        let Message::Transfer(req) = message else {
            return;
        };
        match self.bank.transfer(&req, self.now) {
            Ok(receipt) => {
                if let Some(&h) = self.host_index.get(&receipt.recipient) {
                    self.hosts[h].in_flight += receipt.amount;
                }
                self.send(Node::Bank, from, &Message::Receipt(receipt));
            }
            Err(e) => {
                let reason = e.reject().map_or_else(|| e.to_string(), |r| r.code().to_owned());
                self.log(EventKind::Rejected {
                    node: "bank".into(),
                    user: req.sender.clone(),
                    op: "transfer".into(),
                    reason,
                });
                let reply = e.reject().map(Message::reject);
                if let Some(reply) = reply {
                    self.send(Node::Bank, from, &reply);
                }
            }
        }
    }

    fn at_sls(&mut self, from: Node, message: Message) {
        match message {
            Message::Advertisement(ad) => {
                let _ = self.sls.register(ad, self.now);
            }
            Message::SlsQuery(filter) => {
                for host in self.sls.sweep(self.now) {
                    self.log(EventKind::Expired { host });
                }
                let ads = self.sls.query(&filter, self.now);
                self.send(Node::Sls, from, &Message::SlsReply(ads));
            }
            _ => {}
        }
    }

    fn at_host(&mut self, h: usize, from: Node, message: Message) {
        let host = self.hosts[h].id.clone();
        if !self.hosts[h].alive {
            if let Message::Fund(f) = &message {
                self.settle_receipt(h, f.receipt.amount, false);
            }
            self.log(EventKind::Dropped {
                node: host,
                op: message.kind().into(),
            });
            return;
        }
        let user = self.node_id(from);
        let result = match &message {
            Message::Fund(f) => {
                let r = self.hosts[h].auctioneer.handle_fund(f, self.now);
                self.settle_receipt(h, f.receipt.amount, r.is_ok());
                r
            }
            Message::SetInterval(m) => {
                let r = self.hosts[h].auctioneer.handle_set_interval(m);
                if r.is_ok() {
                    if let Node::User(u) = from {
                        if let Some(&c) = self.changes_by_nonce.get(&(u, h, m.nonce)) {
                            self.trace.changes[c].accepted = Some(self.now);
                        }
                    }
                }
                r
            }
            _ => return,
        };
        let op = message.kind().to_owned();
        match result {
            Ok(()) => {
                self.log(EventKind::Accepted { node: host, user, op });
                self.send(Node::Host(h), from, &Message::Ack(String::new()));
            }
            Err(reason) => {
                self.log(EventKind::Rejected {
                    node: host,
                    user,
                    op,
                    reason: reason.code().into(),
                });
                self.send(Node::Host(h), from, &Message::reject(reason));
            }
        }
    }

    fn settle_receipt(&mut self, h: usize, amount: f64, credited: bool) {
        let host = &mut self.hosts[h];
        host.in_flight -= amount;
        if !credited {
            host.orphaned += amount;
        }
    }

    fn at_user(&mut self, u: usize, message: Message) {
        match message {
            Message::Receipt(receipt) => {
                let key = (receipt.recipient.clone(), receipt.timestamp);
                let Some(p) = self.users[u].pending.remove(&key) else {
                    return;
                };
                let nonce = self.users[u].next_nonce(p.host);
                let fund = FundMessage::new_signed(&self.users[u].key, Resource::Cpu, nonce, p.interval, receipt);
                self.send(Node::User(u), Node::Host(p.host), &Message::Fund(fund));
            }
            Message::SlsReply(ads) => {
                let Some((budget, interval)) = self.users[u].plans.pop_front() else {
                    return;
                };
                let id = self.users[u].id.clone();
                let views: Vec<HostMarketView> = ads
                    .iter()
                    .filter(|ad| ad.verify(&ad.public_key) && self.host_index.contains_key(&ad.host))
                    .filter_map(|ad| {
                        let h = self.host_index[&ad.host];
                        // what a status query would report
                        let own = self.hosts[h]
                            .auctioneer
                            .account(&id, Resource::Cpu)
                            .map_or(0.0, |a| a.last_charge);
                        let cap = ad.resource(Resource::Cpu)?.capacity;
                        HostMarketView::from_advertisement(ad, Resource::Cpu, cap * self.hosts[h].spec.speed, own)
                    })
                    .collect();
                let Ok(plan) = best_response(&views, budget) else {
                    return;
                };
                let funded: Vec<(usize, f64)> = plan
                    .funded()
                    .map(|(host, x)| (self.host_index[host], x))
                    .collect();
                for (h, x) in funded {
                    self.start_fund(u, h, x * interval, interval);
                }
            }
            _ => {}
        }
    }
}

/// Runs `scenario` to completion with `seed` and returns its trace.
pub fn run_scenario(scenario: &Scenario, seed: u64) -> Result<Trace, SimError> {
    let mut sim = Simulation::new(scenario, seed)?;
    sim.run();
    Ok(sim.into_trace())
}
