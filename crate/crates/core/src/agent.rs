//! Bidding strategies for a user spreading credits across many hosts.
//!
//! The central piece is [`best_response`]: given the other users' aggregate
//! bid `y` and the user's weight `w` on each host, it finds bids `x` with
//! `sum(x) = X` maximizing `sum(w * x / (x + y))`. At the optimum every funded
//! host has the same marginal value `w*y / (x+y)^2`, and the funded hosts are
//! a prefix of the hosts sorted by `w/y`.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{Identity, Resource};
use crate::sls::HostAdvertisement;

/// Floor applied to the observed competing bid on an idle host (credits/second).
pub const DEFAULT_OTHERS_FLOOR: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("no hosts to bid on")]
    NoHosts,
    #[error("budget must be finite and positive, got {0}")]
    InvalidBudget(f64),
    #[error("threshold must be finite and non-negative, got {0}")]
    InvalidThreshold(f64),
    #[error("weight for host {0} must be finite and non-negative")]
    InvalidWeight(Identity),
    #[error("every host has zero weight; nothing is worth bidding on")]
    AllWeightsZero,
    #[error("target share {share} is not below capacity {capacity}")]
    UnattainableShare { share: f64, capacity: f64 },
    #[error("invalid predictability input: {0}")]
    InvalidPredictability(&'static str),
    #[error("host {0} has no spending in the measurement window")]
    NoSpending(Identity),
}

/// What the agent knows about one host's market.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostMarketView {
    pub host: Identity,
    /// Value the user places on the whole host.
    pub weight: f64,
    /// Aggregate bid rate of everybody else on the host.
    pub others_bid: f64,
    pub capacity: f64,
    /// Total spend rate the host last advertised.
    pub total_spent: f64,
}

impl HostMarketView {
    /// Builds a view from a signed advertisement, estimating the competing
    /// bid as the advertised spend minus the agent's own last charge.
    pub fn from_advertisement(
        ad: &HostAdvertisement,
        resource: Resource,
        weight: f64,
        own_last_charge: f64,
    ) -> Option<Self> {
        let entry = ad.resource(resource)?;
        Some(HostMarketView {
            host: ad.host.clone(),
            weight,
            others_bid: estimate_others_bid(entry.total_spent, own_last_charge, DEFAULT_OTHERS_FLOOR),
            capacity: entry.capacity,
            total_spent: entry.total_spent,
        })
    }
}

/// Competing bid estimate: advertised total spend minus our own charge, floored.
pub fn estimate_others_bid(total_spent: f64, own_last_charge: f64, floor: f64) -> f64 {
    let diff = total_spent - own_last_charge;
    if diff.is_finite() && diff > floor {
        diff
    } else {
        floor
    }
}

/// Bids computed for a set of hosts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BidVector {
    /// Bid rate per host, credits/second. Unfunded hosts map to zero.
    pub bids: BTreeMap<Identity, f64>,
    pub budget: f64,
    /// Expected utility at these bids.
    pub utility: f64,
}

impl BidVector {
    pub fn total(&self) -> f64 {
        self.bids.values().sum()
    }

    pub fn funded(&self) -> impl Iterator<Item = (&Identity, f64)> {
        self.bids.iter().filter(|(_, x)| **x > 0.0).map(|(h, x)| (h, *x))
    }
}

/// Expected utility `sum(w * x / (x + y))` of a bid assignment.
pub fn utility(views: &[HostMarketView], bids: &[f64]) -> f64 {
    views
        .iter()
        .zip(bids)
        .map(|(v, &x)| {
            let y = v.others_bid.max(DEFAULT_OTHERS_FLOOR);
            if x > 0.0 {
                v.weight * x / (x + y)
            } else {
                0.0
            }
        })
        .sum()
}

/// Utility gained per extra credit on a host at bid `x`.
pub fn marginal_value(weight: f64, others_bid: f64, x: f64) -> f64 {
    weight * others_bid / ((x + others_bid) * (x + others_bid))
}

struct Prepared {
    host: Identity,
    weight: f64,
    others: f64,
}

fn prepare(views: &[HostMarketView], budget: f64) -> Result<Vec<Prepared>, AgentError> {
    if views.is_empty() {
        return Err(AgentError::NoHosts);
    }
    if !(budget.is_finite() && budget > 0.0) {
        return Err(AgentError::InvalidBudget(budget));
    }
    let mut hosts = Vec::with_capacity(views.len());
    for v in views {
        if !(v.weight.is_finite() && v.weight >= 0.0) {
            return Err(AgentError::InvalidWeight(v.host.clone()));
        }
        let others = if v.others_bid.is_finite() {
            v.others_bid.max(DEFAULT_OTHERS_FLOOR)
        } else {
            DEFAULT_OTHERS_FLOOR
        };
        hosts.push(Prepared {
            host: v.host.clone(),
            weight: v.weight,
            others,
        });
    }
    if hosts.iter().all(|h| h.weight == 0.0) {
        return Err(AgentError::AllWeightsZero);
    }
    // Decreasing w/y; equal ratios fall back to host identity.
    hosts.sort_by(|a, b| {
        let ra = a.weight / a.others;
        let rb = b.weight / b.others;
        rb.total_cmp(&ra).then_with(|| a.host.cmp(&b.host))
    });
    Ok(hosts)
}

fn finish(views: &[HostMarketView], budget: f64, assigned: BTreeMap<Identity, f64>) -> BidVector {
    let xs: Vec<f64> = views.iter().map(|v| assigned[&v.host]).collect();
    BidVector {
        utility: utility(views, &xs),
        bids: assigned,
        budget,
    }
}

/// Spends exactly `budget` across `views` to maximize expected utility.
///
/// Runs in O(n log n): sort hosts by `w/y`, take the longest prefix for which
/// the last host still gets a non-negative bid, then split
/// `budget + sum(y)` over that prefix in proportion to `sqrt(w*y)`.
pub fn best_response(views: &[HostMarketView], budget: f64) -> Result<BidVector, AgentError> {
    let hosts = prepare(views, budget)?;

    let mut sqrt_sum = 0.0;
    let mut others_sum = 0.0;
    let mut funded = 0;
    let mut level = 0.0;
    for (k, h) in hosts.iter().enumerate() {
        let root = (h.weight * h.others).sqrt();
        sqrt_sum += root;
        others_sum += h.others;
        if sqrt_sum <= 0.0 {
            continue;
        }
        let scale = (budget + others_sum) / sqrt_sum;
        if root * scale - h.others >= 0.0 {
            funded = k + 1;
            level = scale;
        }
    }

    let mut assigned: BTreeMap<Identity, f64> = BTreeMap::new();
    for (i, h) in hosts.iter().enumerate() {
        let x = if i < funded {
            ((h.weight * h.others).sqrt() * level - h.others).max(0.0)
        } else {
            0.0
        };
        assigned.insert(h.host.clone(), x);
    }
    Ok(finish(views, budget, assigned))
}

/// Like [`best_response`], but never funds a host whose marginal value would
/// drop below `threshold`, so part of the budget may be saved.
///
/// With `threshold == 0` this returns exactly what [`best_response`] does.
/// Otherwise the common marginal value `mu` of funded hosts is the larger of
/// `threshold` and the budget-exhausting level; at a given `mu` each host
/// gets `max(0, sqrt(w*y/mu) - y)`.
pub fn best_response_with_threshold(
    views: &[HostMarketView],
    budget: f64,
    threshold: f64,
) -> Result<BidVector, AgentError> {
    if !(threshold.is_finite() && threshold >= 0.0) {
        return Err(AgentError::InvalidThreshold(threshold));
    }
    let unconstrained = best_response(views, budget)?;
    if threshold == 0.0 {
        return Ok(unconstrained);
    }

    let hosts = prepare(views, budget)?;
    let spend_at = |mu: f64| -> BTreeMap<Identity, f64> {
        hosts
            .iter()
            .map(|h| {
                let x = ((h.weight * h.others / mu).sqrt() - h.others).max(0.0);
                (h.host.clone(), x)
            })
            .collect()
    };
    let at_threshold = spend_at(threshold);
    let spent: f64 = at_threshold.values().sum();
    if spent >= budget {
        // The budget runs out before marginals reach the threshold.
        return Ok(unconstrained);
    }
    Ok(finish(views, budget, at_threshold))
}

/// Bid rate needed to expect `target_share` of a resource of size `capacity`
/// when everybody else bids `others_total` in aggregate.
pub fn predictability_bid(target_share: f64, others_total: f64, capacity: f64) -> Result<f64, AgentError> {
    if !(capacity.is_finite() && capacity > 0.0) {
        return Err(AgentError::InvalidPredictability("capacity must be positive"));
    }
    if !(others_total.is_finite() && others_total >= 0.0) {
        return Err(AgentError::InvalidPredictability("competing bid must be non-negative"));
    }
    if !(target_share.is_finite() && target_share >= 0.0) {
        return Err(AgentError::InvalidPredictability("target share must be non-negative"));
    }
    if target_share >= capacity {
        return Err(AgentError::UnattainableShare {
            share: target_share,
            capacity,
        });
    }
    Ok(target_share * others_total / (capacity - target_share))
}

/// Sliding window of competing-bid observations for one host.
///
/// Bidding against a high percentile of recent history instead of the latest
/// value buys a better chance of actually getting the target share.
#[derive(Clone, Debug)]
pub struct BidHistory {
    window: usize,
    observations: VecDeque<f64>,
}

impl BidHistory {
    pub const DEFAULT_WINDOW: usize = 30;
    pub const DEFAULT_PERCENTILE: f64 = 95.0;

    pub fn new(window: usize) -> Self {
        BidHistory {
            window: window.max(1),
            observations: VecDeque::new(),
        }
    }

    pub fn observe(&mut self, others_total: f64) {
        if !others_total.is_finite() || others_total < 0.0 {
            return;
        }
        if self.observations.len() == self.window {
            self.observations.pop_front();
        }
        self.observations.push_back(others_total);
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Nearest-rank percentile of the window, `None` when empty.
    pub fn percentile(&self, p: f64) -> Option<f64> {
        if self.observations.is_empty() {
            return None;
        }
        let mut sorted: Vec<f64> = self.observations.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        let p = p.clamp(0.0, 100.0);
        let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
        Some(sorted[rank.clamp(1, sorted.len()) - 1])
    }

    /// Predictability bid against the `p`-th percentile of observed competition.
    pub fn bid_for(&self, target_share: f64, capacity: f64, p: f64) -> Result<f64, AgentError> {
        let others = self
            .percentile(p)
            .ok_or(AgentError::InvalidPredictability("no bid history for host"))?;
        predictability_bid(target_share, others, capacity)
    }
}

impl Default for BidHistory {
    fn default() -> Self {
        BidHistory::new(Self::DEFAULT_WINDOW)
    }
}

/// Work produced and credits spent on one host during one period.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectivenessSample {
    pub work: f64,
    pub spent: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EffectivenessConfig {
    /// Number of most recent samples per host that count.
    pub window: usize,
    /// Hosts below this fraction of the best host's ratio get weight zero.
    pub drop_fraction: f64,
}

impl Default for EffectivenessConfig {
    fn default() -> Self {
        EffectivenessConfig {
            window: 10,
            drop_fraction: 0.05,
        }
    }
}

/// Host weights from measured work per credit.
///
/// A host that takes credits but produces little (including one that cheats
/// on its allocation) ends up with weight zero and is no longer bid on.
pub fn measure_cost_effectiveness(
    trace: &BTreeMap<Identity, Vec<EffectivenessSample>>,
    config: &EffectivenessConfig,
) -> Result<BTreeMap<Identity, f64>, AgentError> {
    let window = config.window.max(1);
    let mut ratios = BTreeMap::new();
    for (host, samples) in trace {
        let recent = &samples[samples.len().saturating_sub(window)..];
        let work: f64 = recent.iter().map(|s| s.work).sum();
        let spent: f64 = recent.iter().map(|s| s.spent).sum();
        if spent.is_nan() || spent <= 0.0 {
            return Err(AgentError::NoSpending(host.clone()));
        }
        ratios.insert(host.clone(), work / spent);
    }
    let best = ratios.values().copied().fold(0.0, f64::max);
    for ratio in ratios.values_mut() {
        if *ratio < config.drop_fraction * best {
            *ratio = 0.0;
        }
    }
    Ok(ratios)
}

/// Accumulates per-host samples for [`measure_cost_effectiveness`].
#[derive(Clone, Debug, Default)]
pub struct CostEffectivenessTracker {
    config: EffectivenessConfig,
    samples: BTreeMap<Identity, Vec<EffectivenessSample>>,
}

impl CostEffectivenessTracker {
    pub fn new(config: EffectivenessConfig) -> Self {
        CostEffectivenessTracker {
            config,
            samples: BTreeMap::new(),
        }
    }

    pub fn record(&mut self, host: &Identity, work: f64, spent: f64) {
        let series = self.samples.entry(host.clone()).or_default();
        series.push(EffectivenessSample { work, spent });
        let excess = series.len().saturating_sub(self.config.window);
        if excess > 0 {
            series.drain(..excess);
        }
    }

    /// Weights for hosts that have seen spending; others are omitted.
    pub fn weights(&self) -> BTreeMap<Identity, f64> {
        let measurable: BTreeMap<Identity, Vec<EffectivenessSample>> = self
            .samples
            .iter()
            .filter(|(_, s)| s.iter().map(|x| x.spent).sum::<f64>() > 0.0)
            .map(|(h, s)| (h.clone(), s.clone()))
            .collect();
        measure_cost_effectiveness(&measurable, &self.config).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn view(host: &str, weight: f64, others: f64) -> HostMarketView {
        HostMarketView {
            host: host.into(),
            weight,
            others_bid: others,
            capacity: 1.0,
            total_spent: others,
        }
    }

    fn views(ws: &[f64], ys: &[f64]) -> Vec<HostMarketView> {
        ws.iter()
            .zip(ys)
            .enumerate()
            .map(|(i, (w, y))| view(&format!("h{i}"), *w, *y))
            .collect()
    }

    fn x(v: &BidVector, host: &str) -> f64 {
        v.bids[&Identity::from(host)]
    }

    /// Dense grid over the one-dimensional budget split between two hosts.
    fn grid_best_two(ws: [f64; 2], ys: [f64; 2], budget: f64) -> (f64, f64) {
        let steps = 2_000_000;
        let mut best = (f64::MIN, 0.0);
        for i in 0..=steps {
            let x0 = budget * i as f64 / steps as f64;
            let x1 = budget - x0;
            let u = ws[0] * x0 / (x0 + ys[0]) + ws[1] * x1 / (x1 + ys[1]);
            if u > best.0 {
                best = (u, x0);
            }
        }
        best
    }

    #[test]
    fn single_host_takes_the_whole_budget() {
        let v = best_response(&views(&[1.0], &[1.0]), 5.0).unwrap();
        assert!((x(&v, "h0") - 5.0).abs() < 1e-12);
    }

    #[test]
    fn two_hosts_match_grid_oracle() {
        let vs = views(&[4.0, 1.0], &[1.0, 1.0]);
        let v = best_response(&vs, 3.0).unwrap();
        assert!((x(&v, "h0") - 7.0 / 3.0).abs() < 1e-12);
        assert!((x(&v, "h1") - 2.0 / 3.0).abs() < 1e-12);
        let m0 = marginal_value(4.0, 1.0, x(&v, "h0"));
        let m1 = marginal_value(1.0, 1.0, x(&v, "h1"));
        assert!((m0 - 0.36).abs() < 1e-12 && (m1 - 0.36).abs() < 1e-12);

        let (grid_u, grid_x0) = grid_best_two([4.0, 1.0], [1.0, 1.0], 3.0);
        assert!(v.utility >= grid_u - 1e-6);
        assert!((grid_x0 - 7.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn symmetric_hosts_split_evenly() {
        let v = best_response(&views(&[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]), 6.0).unwrap();
        for h in ["h0", "h1", "h2"] {
            assert!((x(&v, h) - 2.0).abs() < 1e-12);
        }
    }

    #[test]
    fn low_value_hosts_stay_unfunded() {
        // h1 is nearly worthless relative to its competition.
        let v = best_response(&views(&[10.0, 0.01], &[1.0, 5.0]), 1.0).unwrap();
        assert_eq!(x(&v, "h1"), 0.0);
        assert!((x(&v, "h0") - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_degenerate_inputs() {
        assert_eq!(best_response(&[], 1.0), Err(AgentError::NoHosts));
        assert_eq!(
            best_response(&views(&[1.0], &[1.0]), 0.0),
            Err(AgentError::InvalidBudget(0.0))
        );
        assert_eq!(
            best_response(&views(&[0.0, 0.0], &[1.0, 1.0]), 1.0),
            Err(AgentError::AllWeightsZero)
        );
        assert!(best_response(&views(&[-1.0], &[1.0]), 1.0).is_err());
    }

    #[test]
    fn idle_host_is_clamped_not_divided_by_zero() {
        let v = best_response(&views(&[1.0, 1.0], &[0.0, 1.0]), 2.0).unwrap();
        assert!(v.total().is_finite());
        assert!((v.total() - 2.0).abs() < 1e-9);
    }

    #[test]
    fn equal_ratios_break_ties_by_host() {
        let vs = vec![view("b", 1.0, 1.0), view("a", 1.0, 1.0)];
        let v = best_response(&vs, 0.0001).unwrap();
        assert!(x(&v, "a") > 0.0);
    }

    #[test]
    fn threshold_zero_is_best_response() {
        let vs = views(&[4.0, 1.0, 2.5], &[1.0, 3.0, 0.5]);
        assert_eq!(
            best_response_with_threshold(&vs, 3.0, 0.0).unwrap(),
            best_response(&vs, 3.0).unwrap()
        );
    }

    #[test]
    fn threshold_saves_budget() {
        let v = best_response_with_threshold(&views(&[1.0], &[1.0]), 10.0, 0.04).unwrap();
        assert!((x(&v, "h0") - 4.0).abs() < 1e-12);
        assert!((v.budget - v.total() - 6.0).abs() < 1e-12);
        // Independent check: the marginal at the bid equals the threshold.
        assert!((marginal_value(1.0, 1.0, x(&v, "h0")) - 0.04).abs() < 1e-12);
    }

    #[test]
    fn threshold_above_every_marginal_bids_nothing() {
        let v = best_response_with_threshold(&views(&[1.0, 2.0], &[1.0, 1.0]), 10.0, 2.5).unwrap();
        assert_eq!(v.total(), 0.0);
        assert_eq!(v.utility, 0.0);
    }

    #[test]
    fn binding_budget_ignores_small_threshold() {
        let vs = views(&[4.0, 1.0], &[1.0, 1.0]);
        let v = best_response_with_threshold(&vs, 3.0, 0.1).unwrap();
        assert_eq!(v, best_response(&vs, 3.0).unwrap());
    }

    #[test]
    fn predictability_examples() {
        assert_eq!(predictability_bid(50.0, 7.0, 100.0).unwrap(), 7.0);
        assert_eq!(predictability_bid(0.0, 7.0, 100.0).unwrap(), 0.0);
        let b = predictability_bid(90.0, 2.0, 100.0).unwrap();
        assert!((b - 18.0).abs() < 1e-12);
        assert!(matches!(
            predictability_bid(100.0, 2.0, 100.0),
            Err(AgentError::UnattainableShare { .. })
        ));
    }

    #[test]
    fn predictability_round_trips_through_allocation() {
        use crate::market::{allocate, Bid, ResourceCapacity};
        let b = predictability_bid(90.0, 2.0, 100.0).unwrap();
        let cap = ResourceCapacity::with_default_period(Resource::Cpu, 100.0).unwrap();
        let shares = allocate(
            &[Bid::cpu("me", b, 1.0).unwrap(), Bid::cpu("rest", 2.0, 1.0).unwrap()],
            &cap,
        );
        assert!((shares[&"me".into()] - 90.0).abs() < 1e-9 * 90.0);
    }

    #[test]
    fn history_bids_against_high_percentile() {
        let mut h = BidHistory::new(4);
        for b in [1.0, 5.0, 2.0, 3.0, 4.0] {
            h.observe(b);
        }
        // window keeps 5, 2, 3, 4
        assert_eq!(h.len(), 4);
        assert_eq!(h.percentile(95.0), Some(5.0));
        assert_eq!(h.percentile(50.0), Some(3.0));
        let latest = predictability_bid(50.0, 4.0, 100.0).unwrap();
        assert!(h.bid_for(50.0, 100.0, 95.0).unwrap() > latest);
        assert!(BidHistory::default().bid_for(1.0, 2.0, 95.0).is_err());
    }

    #[test]
    fn cost_effectiveness_examples() {
        let cfg = EffectivenessConfig::default();
        let one: BTreeMap<Identity, Vec<EffectivenessSample>> =
            [("a".into(), vec![EffectivenessSample { work: 50.0, spent: 10.0 }])].into();
        assert_eq!(measure_cost_effectiveness(&one, &cfg).unwrap()[&"a".into()], 5.0);

        let two: BTreeMap<Identity, Vec<EffectivenessSample>> = [
            ("a".into(), vec![EffectivenessSample { work: 50.0, spent: 10.0 }]),
            ("b".into(), vec![EffectivenessSample { work: 1.0, spent: 10.0 }]),
        ]
        .into();
        let w = measure_cost_effectiveness(&two, &cfg).unwrap();
        assert_eq!(w[&"a".into()], 5.0);
        assert_eq!(w[&"b".into()], 0.0);

        let same: BTreeMap<Identity, Vec<EffectivenessSample>> = ["a", "b", "c"]
            .iter()
            .map(|h| ((*h).into(), vec![EffectivenessSample { work: 6.0, spent: 2.0 }]))
            .collect();
        let w = measure_cost_effectiveness(&same, &cfg).unwrap();
        assert!(w.values().all(|v| *v == 3.0));

        assert!(measure_cost_effectiveness(&BTreeMap::new(), &cfg).unwrap().is_empty());
    }

    #[test]
    fn cost_effectiveness_uses_only_the_window() {
        let mut t = CostEffectivenessTracker::new(EffectivenessConfig {
            window: 2,
            drop_fraction: 0.05,
        });
        let h: Identity = "a".into();
        t.record(&h, 100.0, 1.0);
        t.record(&h, 1.0, 1.0);
        t.record(&h, 3.0, 1.0);
        assert_eq!(t.weights()[&h], 2.0);
    }

    #[test]
    fn estimate_subtracts_own_charge_and_floors() {
        assert_eq!(estimate_others_bid(0.3, 0.1, 1e-6), 0.3 - 0.1);
        assert_eq!(estimate_others_bid(0.1, 0.3, 1e-6), 1e-6);
    }

    proptest! {
        #[test]
        fn kkt_and_budget_hold(
            raw in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..8),
            budget in 0.5f64..20.0,
        ) {
            let (ws, ys): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let vs = views(&ws, &ys);
            let v = best_response(&vs, budget).unwrap();
            prop_assert!((v.total() - budget).abs() <= 1e-9 * budget);

            let marginals: Vec<f64> = vs
                .iter()
                .filter(|h| x(&v, h.host.as_str()) > 0.0)
                .map(|h| marginal_value(h.weight, h.others_bid, x(&v, h.host.as_str())))
                .collect();
            let common = marginals[0];
            for m in &marginals {
                prop_assert!((m - common).abs() <= 1e-6 * common);
            }
            for h in &vs {
                if x(&v, h.host.as_str()) == 0.0 {
                    prop_assert!(h.weight / h.others_bid <= common * (1.0 + 1e-9));
                }
            }
        }

        #[test]
        fn threshold_respected(
            raw in prop::collection::vec((0.1f64..10.0, 0.1f64..10.0), 1..8),
            budget in 0.5f64..20.0,
            lambda in 0.001f64..5.0,
        ) {
            let (ws, ys): (Vec<f64>, Vec<f64>) = raw.into_iter().unzip();
            let vs = views(&ws, &ys);
            let v = best_response_with_threshold(&vs, budget, lambda).unwrap();
            prop_assert!(v.total() <= budget * (1.0 + 1e-12));
            for h in &vs {
                let xi = x(&v, h.host.as_str());
                if xi > 0.0 {
                    prop_assert!(marginal_value(h.weight, h.others_bid, xi) >= lambda * (1.0 - 1e-9));
                }
            }
        }
    }
}
