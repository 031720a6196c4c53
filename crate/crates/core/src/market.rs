//! Proportional-share allocation and usage-based charging.
//!
//! Every user holds a *continuous bid* on a resource: a local balance and an
//! interval over which the balance is meant to be spent. The bid rate
//! `balance / interval` (credits per second) decides the user's slice of the
//! resource, and the user pays at most that rate, scaled down by how much of
//! the slice it actually used. Everything here is a pure function of its
//! inputs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{Identity, Resource};

/// Allocation period used by auctioneers, in seconds.
pub const DEFAULT_PERIOD_SECS: f64 = 10.0;

/// Bidders whose share falls below this fraction of the resource are logged off.
pub const EVICTION_THRESHOLD: f64 = 0.001;

#[derive(Debug, Error, PartialEq)]
pub enum MarketError {
    #[error("balance must be finite and non-negative, got {0}")]
    InvalidBalance(f64),
    #[error("interval must be finite and positive, got {0}")]
    InvalidInterval(f64),
    #[error("capacity must be finite and positive, got {0}")]
    InvalidCapacity(f64),
    #[error("period must be finite and positive, got {0}")]
    InvalidPeriod(f64),
    #[error("consumption must be finite and non-negative, got {0}")]
    InvalidUsage(f64),
    #[error("usage reported for {0}, who holds no share")]
    MissingShare(Identity),
    #[error("usage reported for {0}, who holds no bid")]
    MissingBid(Identity),
}

/// A user's standing bid for one resource on one host.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub user: Identity,
    pub resource: Resource,
    balance: f64,
    interval: f64,
}

impl Bid {
    pub fn new(
        user: impl Into<Identity>,
        resource: Resource,
        balance: f64,
        interval: f64,
    ) -> Result<Self, MarketError> {
        check_balance(balance)?;
        check_interval(interval)?;
        Ok(Bid {
            user: user.into(),
            resource,
            balance,
            interval,
        })
    }

    /// Shorthand for a CPU bid, mostly for tests and examples.
    pub fn cpu(user: impl Into<Identity>, balance: f64, interval: f64) -> Result<Self, MarketError> {
        Bid::new(user, Resource::Cpu, balance, interval)
    }

    pub fn balance(&self) -> f64 {
        self.balance
    }

    pub fn interval(&self) -> f64 {
        self.interval
    }

    /// Credits per second this bid is willing to spend.
    pub fn rate(&self) -> f64 {
        self.balance / self.interval
    }

    pub fn set_balance(&mut self, balance: f64) -> Result<(), MarketError> {
        check_balance(balance)?;
        self.balance = balance;
        Ok(())
    }

    pub fn set_interval(&mut self, interval: f64) -> Result<(), MarketError> {
        check_interval(interval)?;
        self.interval = interval;
        Ok(())
    }
}

fn check_balance(balance: f64) -> Result<(), MarketError> {
    if balance.is_finite() && balance >= 0.0 {
        Ok(())
    } else {
        Err(MarketError::InvalidBalance(balance))
    }
}

fn check_interval(interval: f64) -> Result<(), MarketError> {
    if interval.is_finite() && interval > 0.0 {
        Ok(())
    } else {
        Err(MarketError::InvalidInterval(interval))
    }
}

/// Total amount of a resource on a host and the period it is allocated over.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceCapacity {
    pub resource: Resource,
    total: f64,
    period: f64,
}

impl ResourceCapacity {
    pub fn new(resource: Resource, total: f64, period: f64) -> Result<Self, MarketError> {
        if !(total.is_finite() && total > 0.0) {
            return Err(MarketError::InvalidCapacity(total));
        }
        if !(period.is_finite() && period > 0.0) {
            return Err(MarketError::InvalidPeriod(period));
        }
        Ok(ResourceCapacity {
            resource,
            total,
            period,
        })
    }

    pub fn with_default_period(resource: Resource, total: f64) -> Result<Self, MarketError> {
        ResourceCapacity::new(resource, total, DEFAULT_PERIOD_SECS)
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn period(&self) -> f64 {
        self.period
    }
}

/// Amount of the resource a user actually consumed during one period.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub user: Identity,
    pub consumed: f64,
}

impl UsageRecord {
    pub fn new(user: impl Into<Identity>, consumed: f64) -> Result<Self, MarketError> {
        if !(consumed.is_finite() && consumed >= 0.0) {
            return Err(MarketError::InvalidUsage(consumed));
        }
        Ok(UsageRecord {
            user: user.into(),
            consumed,
        })
    }
}

/// Outcome of one allocation period.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AllocationResult {
    /// Resource units granted per user.
    pub shares: BTreeMap<Identity, f64>,
    /// Credits per second charged per user.
    pub charges: BTreeMap<Identity, f64>,
    /// Users logged off this period, in eviction order.
    pub evicted: Vec<Identity>,
}

impl AllocationResult {
    /// Sum of charges, i.e. the amount the host advertises as spent.
    pub fn total_spent(&self) -> f64 {
        self.charges.values().sum()
    }
}

/// Splits `capacity` among bidders in proportion to their bid rates.
///
/// Users with a zero balance get a zero share and do not count towards the
/// denominator. If nobody has a positive rate every share is zero.
pub fn allocate(bids: &[Bid], capacity: &ResourceCapacity) -> BTreeMap<Identity, f64> {
    let total_rate: f64 = bids.iter().map(Bid::rate).sum();
    bids.iter()
        .map(|bid| {
            let rate = bid.rate();
            let share = if rate > 0.0 {
                rate / total_rate * capacity.total
            } else {
                0.0
            };
            (bid.user.clone(), share)
        })
        .collect()
}

/// Per-second charge for each user in `usage`: `min(q/r, 1) * rate`.
///
/// A user with no share that consumed nothing pays nothing.
pub fn charge(
    shares: &BTreeMap<Identity, f64>,
    usage: &[UsageRecord],
    bids: &[Bid],
) -> Result<BTreeMap<Identity, f64>, MarketError> {
    let rates: BTreeMap<&Identity, f64> = bids.iter().map(|b| (&b.user, b.rate())).collect();
    let mut charges = BTreeMap::new();
    for record in usage {
        let share = *shares
            .get(&record.user)
            .ok_or_else(|| MarketError::MissingShare(record.user.clone()))?;
        let rate = *rates
            .get(&record.user)
            .ok_or_else(|| MarketError::MissingBid(record.user.clone()))?;
        charges.insert(record.user.clone(), usage_fraction(record.consumed, share) * rate);
    }
    Ok(charges)
}

fn usage_fraction(consumed: f64, share: f64) -> f64 {
    if share > 0.0 {
        (consumed / share).min(1.0)
    } else if consumed > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Logs off bidders below [`EVICTION_THRESHOLD`] of the resource, smallest first.
///
/// After each removal the shares are recomputed, so evicting one tiny bidder
/// can lift another above the threshold. Ties on rate go to the
/// lexicographically smaller identity. Zero-balance users are not bidding
/// and are left alone.
pub fn evict_small_bidders(bids: &[Bid], capacity: &ResourceCapacity) -> (Vec<Bid>, Vec<Identity>) {
    evict_below(bids, capacity, EVICTION_THRESHOLD)
}

/// [`evict_small_bidders`] with an explicit threshold (fraction of the resource).
pub fn evict_below(
    bids: &[Bid],
    _capacity: &ResourceCapacity,
    threshold: f64,
) -> (Vec<Bid>, Vec<Identity>) {
    let mut evicted: BTreeSet<Identity> = BTreeSet::new();
    let mut order = Vec::new();
    loop {
        let live: Vec<&Bid> = bids
            .iter()
            .filter(|b| b.rate() > 0.0 && !evicted.contains(&b.user))
            .collect();
        let total: f64 = live.iter().map(|b| b.rate()).sum();
        let smallest = live.iter().min_by(|a, b| {
            a.rate()
                .total_cmp(&b.rate())
                .then_with(|| a.user.cmp(&b.user))
        });
        match smallest {
            Some(bid) if bid.rate() / total < threshold => {
                evicted.insert(bid.user.clone());
                order.push(bid.user.clone());
            }
            _ => break,
        }
    }
    let retained = bids
        .iter()
        .filter(|b| !evicted.contains(&b.user))
        .cloned()
        .collect();
    (retained, order)
}

/// Runs one allocation period: eviction, allocation, then charging.
///
/// See [`settle_period_with`]; this variant takes the usage up front.
pub fn settle_period(
    bids: &[Bid],
    capacity: &ResourceCapacity,
    usage: &[UsageRecord],
) -> Result<(AllocationResult, Vec<Bid>), MarketError> {
    settle_period_with(bids, capacity, |_| usage.to_vec())
}

/// Runs one allocation period, asking `measure` for consumption once shares are known.
///
/// Evicted users keep their balance untouched. Everyone else pays
/// `charge * period`; if that exceeds the remaining balance the balance is
/// floored at zero and the recorded charge is reduced to what was actually
/// taken. Usage reported for users who are not retained bidders is ignored.
/// The returned bids keep the input order.
pub fn settle_period_with<F>(
    bids: &[Bid],
    capacity: &ResourceCapacity,
    measure: F,
) -> Result<(AllocationResult, Vec<Bid>), MarketError>
where
    F: FnOnce(&BTreeMap<Identity, f64>) -> Vec<UsageRecord>,
{
    let (retained, evicted) = evict_small_bidders(bids, capacity);
    let shares = allocate(&retained, capacity);
    let usage: Vec<UsageRecord> = measure(&shares)
        .into_iter()
        .filter(|u| shares.contains_key(&u.user))
        .collect();
    let mut charges = charge(&shares, &usage, &retained)?;
    for user in shares.keys() {
        charges.entry(user.clone()).or_insert(0.0);
    }

    let period = capacity.period;
    let mut updated = Vec::with_capacity(bids.len());
    for bid in bids {
        let mut next = bid.clone();
        if let Some(rate) = charges.get_mut(&bid.user) {
            let due = *rate * period;
            if due > bid.balance {
                *rate = bid.balance / period;
                next.balance = 0.0;
            } else {
                next.balance = (bid.balance - due).max(0.0);
            }
        }
        updated.push(next);
    }

    Ok((
        AllocationResult {
            shares,
            charges,
            evicted,
        },
        updated,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;
    use num_traits::ToPrimitive;
    use proptest::prelude::*;

    fn cap(total: f64) -> ResourceCapacity {
        ResourceCapacity::with_default_period(Resource::Cpu, total).unwrap()
    }

    fn bid(user: &str, balance: f64, interval: f64) -> Bid {
        Bid::cpu(user, balance, interval).unwrap()
    }

    fn rel_eq(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * b.abs().max(1e-300)
    }

    /// Exact evaluation of the allocation formula over rationals.
    fn rational_allocate(bids: &[(i64, i64)], total: i64) -> Vec<BigRational> {
        let rates: Vec<BigRational> = bids
            .iter()
            .map(|&(b, t)| BigRational::new(b.into(), t.into()))
            .collect();
        let sum = rates
            .iter()
            .fold(BigRational::from_integer(0.into()), |acc, r| acc + r);
        rates
            .iter()
            .map(|r| r / &sum * BigRational::from_integer(total.into()))
            .collect()
    }

    fn to_f64(r: &BigRational) -> f64 {
        r.to_f64().unwrap()
    }

    #[test]
    fn rejects_invalid_bid_fields() {
        assert_eq!(
            Bid::cpu("a", -1.0, 10.0),
            Err(MarketError::InvalidBalance(-1.0))
        );
        assert_eq!(Bid::cpu("a", 1.0, 0.0), Err(MarketError::InvalidInterval(0.0)));
        assert!(Bid::cpu("a", f64::NAN, 1.0).is_err());
        assert!(ResourceCapacity::new(Resource::Cpu, 0.0, 10.0).is_err());
        assert!(ResourceCapacity::new(Resource::Cpu, 1.0, -10.0).is_err());
        assert!(UsageRecord::new("a", -0.5).is_err());
    }

    #[test]
    fn high_and_low_priority_split_ten_to_one() {
        let shares = allocate(&[bid("A", 10.0, 10_000.0), bid("B", 10.0, 100_000.0)], &cap(1.0));
        assert!(rel_eq(shares[&"A".into()], 10.0 / 11.0, 1e-12));
        assert!(rel_eq(shares[&"B".into()], 1.0 / 11.0, 1e-12));
    }

    #[test]
    fn sole_bidder_takes_everything() {
        let shares = allocate(&[bid("A", 5.0, 100.0)], &cap(1.0));
        assert_eq!(shares[&"A".into()], 1.0);
    }

    #[test]
    fn three_bidders_match_rational_oracle() {
        let exact = rational_allocate(&[(3, 30), (6, 30), (1, 10)], 100);
        let shares = allocate(
            &[bid("A", 3.0, 30.0), bid("B", 6.0, 30.0), bid("C", 1.0, 10.0)],
            &cap(100.0),
        );
        let got: Vec<f64> = ["A", "B", "C"].iter().map(|u| shares[&(*u).into()]).collect();
        for (g, e) in got.iter().zip(&exact) {
            assert!(rel_eq(*g, to_f64(e), 1e-12), "{g} vs {e}");
        }
        assert!(rel_eq(got[0], 25.0, 1e-12));
        assert!(rel_eq(got[1], 50.0, 1e-12));
        assert!(rel_eq(got[2], 25.0, 1e-12));
    }

    #[test]
    fn empty_and_zero_balance_inputs() {
        assert!(allocate(&[], &cap(1.0)).is_empty());
        let shares = allocate(&[bid("A", 0.0, 10.0), bid("B", 1.0, 10.0)], &cap(4.0));
        assert_eq!(shares[&"A".into()], 0.0);
        assert_eq!(shares[&"B".into()], 4.0);
        let shares = allocate(&[bid("A", 0.0, 10.0)], &cap(4.0));
        assert_eq!(shares[&"A".into()], 0.0);
    }

    #[test]
    fn charge_examples() {
        let bids = [bid("A", 10.0, 100.0)];
        let shares: BTreeMap<Identity, f64> = [("A".into(), 0.5)].into();
        let full = charge(&shares, &[UsageRecord::new("A", 0.5).unwrap()], &bids).unwrap();
        assert!(rel_eq(full[&"A".into()], 0.1, 1e-15));
        let half = charge(&shares, &[UsageRecord::new("A", 0.25).unwrap()], &bids).unwrap();
        assert!(rel_eq(half[&"A".into()], 0.05, 1e-15));
        let over = charge(&shares, &[UsageRecord::new("A", 1.0).unwrap()], &bids).unwrap();
        assert_eq!(over[&"A".into()], 0.1);
    }

    #[test]
    fn charge_zero_share_zero_use_is_free() {
        let bids = [bid("A", 0.0, 100.0)];
        let shares: BTreeMap<Identity, f64> = [("A".into(), 0.0)].into();
        let c = charge(&shares, &[UsageRecord::new("A", 0.0).unwrap()], &bids).unwrap();
        assert_eq!(c[&"A".into()], 0.0);
    }

    #[test]
    fn charge_rejects_unknown_users() {
        let bids = [bid("A", 1.0, 100.0)];
        let shares: BTreeMap<Identity, f64> = [("A".into(), 1.0)].into();
        assert_eq!(
            charge(&shares, &[UsageRecord::new("B", 0.0).unwrap()], &bids),
            Err(MarketError::MissingShare("B".into()))
        );
        let shares: BTreeMap<Identity, f64> = [("A".into(), 1.0), ("B".into(), 1.0)].into();
        assert_eq!(
            charge(&shares, &[UsageRecord::new("B", 0.0).unwrap()], &bids),
            Err(MarketError::MissingBid("B".into()))
        );
    }

    #[test]
    fn one_period_of_full_use() {
        let c = cap(1.0);
        let (result, next) =
            settle_period(&[bid("A", 10.0, 300.0)], &c, &[UsageRecord::new("A", 1.0).unwrap()]).unwrap();
        assert!(rel_eq(next[0].balance(), 10.0 * (1.0 - 10.0 / 300.0), 1e-12));
        assert!(rel_eq(result.charges[&"A".into()], 10.0 / 300.0, 1e-15));
    }

    #[test]
    fn forty_periods_follow_the_decay_law() {
        let c = cap(1.0);
        let mut bids = vec![bid("A", 10.0, 300.0)];
        for _ in 0..40 {
            let usage = [UsageRecord::new("A", 1.0).unwrap()];
            bids = settle_period(&bids, &c, &usage).unwrap().1;
        }
        let expected = 10.0 * (29.0f64 / 30.0).powi(40);
        assert!(rel_eq(bids[0].balance(), expected, 1e-9));
        assert!((bids[0].balance() - 2.577).abs() < 1e-3);
    }

    #[test]
    fn idle_user_keeps_balance() {
        let (result, next) =
            settle_period(&[bid("A", 10.0, 300.0)], &cap(1.0), &[UsageRecord::new("A", 0.0).unwrap()])
                .unwrap();
        assert_eq!(next[0].balance(), 10.0);
        assert_eq!(result.total_spent(), 0.0);
    }

    #[test]
    fn final_period_floors_balance_and_trims_charge() {
        // interval shorter than the period: full use would cost 2 credits.
        let (result, next) =
            settle_period(&[bid("A", 1.0, 5.0)], &cap(1.0), &[UsageRecord::new("A", 1.0).unwrap()]).unwrap();
        assert_eq!(next[0].balance(), 0.0);
        assert!(rel_eq(result.charges[&"A".into()] * 10.0, 1.0, 1e-15));
    }

    #[test]
    fn settle_ignores_usage_of_evicted_users() {
        let bids = [bid("A", 1.0, 1.0), bid("B", 0.0005, 1.0)];
        let usage = [UsageRecord::new("A", 1.0).unwrap(), UsageRecord::new("B", 1.0).unwrap()];
        let (result, next) = settle_period(&bids, &cap(1.0), &usage).unwrap();
        assert_eq!(result.evicted, vec![Identity::from("B")]);
        assert!(!result.charges.contains_key(&"B".into()));
        assert_eq!(next[1].balance(), 0.0005);
    }

    #[test]
    fn eviction_examples() {
        let c = cap(1.0);
        let (kept, gone) = evict_small_bidders(&[bid("A", 1.0, 1.0), bid("B", 0.0005, 1.0)], &c);
        assert_eq!(gone, vec![Identity::from("B")]);
        assert_eq!(kept.len(), 1);

        let (kept, gone) = evict_small_bidders(&[bid("A", 1e-9, 1.0)], &c);
        assert!(gone.is_empty());
        assert_eq!(kept.len(), 1);

        let (kept, gone) = evict_small_bidders(&[bid("A", 1.0, 1.0), bid("B", 1.0, 1.0)], &c);
        assert!(gone.is_empty());
        assert_eq!(kept.len(), 2);
    }

    #[test]
    fn eviction_goes_smallest_first_with_name_tiebreak() {
        let c = cap(1.0);
        let bids = [
            bid("big", 1.0, 1.0),
            bid("y", 0.0002, 1.0),
            bid("x", 0.0002, 1.0),
            bid("z", 0.0001, 1.0),
        ];
        let (_, gone) = evict_small_bidders(&bids, &c);
        assert_eq!(gone, vec![Identity::from("z"), "x".into(), "y".into()]);
    }

    #[test]
    fn eviction_recomputes_after_each_removal() {
        let c = cap(1.0);
        let bids = [
            bid("big", 1.0, 1.0),
            bid("p", 0.00099, 1.0),
            bid("q", 0.001, 1.0),
        ];
        // p: 0.00099/1.00199 < 0.001 -> evicted; then q: 0.001/1.001 < 0.001 -> evicted.
        let (_, gone) = evict_small_bidders(&bids, &c);
        assert_eq!(gone, vec![Identity::from("p"), "q".into()]);

        let bids = [bid("big", 1.0, 1.0), bid("p", 0.00099, 1.0), bid("q", 0.0011, 1.0)];
        let (kept, gone) = evict_small_bidders(&bids, &c);
        assert_eq!(gone, vec![Identity::from("p")]);
        assert_eq!(kept.len(), 2);
    }

    fn arb_bids(max: usize) -> impl Strategy<Value = Vec<Bid>> {
        prop::collection::vec((0.001f64..1000.0, 1.0f64..1e6), 1..max).prop_map(|v| {
            v.into_iter()
                .enumerate()
                .map(|(i, (b, t))| bid(&format!("u{i:02}"), b, t))
                .collect()
        })
    }

    proptest! {
        #[test]
        fn shares_sum_to_capacity(bids in arb_bids(12), total in 0.1f64..1000.0) {
            let shares = allocate(&bids, &cap(total));
            let sum: f64 = shares.values().sum();
            prop_assert!(rel_eq(sum, total, 1e-9));
        }

        #[test]
        fn allocate_matches_rational_arithmetic(
            raw in prop::collection::vec((1i64..1000, 1i64..1000), 1..6),
            total in 1i64..1000,
        ) {
            let bids: Vec<Bid> = raw
                .iter()
                .enumerate()
                .map(|(i, &(b, t))| bid(&format!("u{i}"), b as f64, t as f64))
                .collect();
            let shares = allocate(&bids, &cap(total as f64));
            let exact = rational_allocate(&raw, total);
            for (b, e) in bids.iter().zip(&exact) {
                prop_assert!(rel_eq(shares[&b.user], to_f64(e), 1e-12));
            }
        }

        #[test]
        fn scaling_balances_and_intervals_together_changes_nothing(
            bids in arb_bids(8), c in 0.01f64..100.0,
        ) {
            let scaled: Vec<Bid> = bids
                .iter()
                .map(|b| Bid::cpu(b.user.clone(), b.balance() * c, b.interval() * c).unwrap())
                .collect();
            let a = allocate(&bids, &cap(1.0));
            let s = allocate(&scaled, &cap(1.0));
            for (k, v) in &a {
                prop_assert!(rel_eq(s[k], *v, 1e-9));
            }
            let balances_only: Vec<Bid> = bids
                .iter()
                .map(|b| Bid::cpu(b.user.clone(), b.balance() * c, b.interval()).unwrap())
                .collect();
            let p = allocate(&balances_only, &cap(1.0));
            for (k, v) in &a {
                prop_assert!(rel_eq(p[k], *v, 1e-9));
            }
        }

        #[test]
        fn raising_one_balance_is_monotone(bids in arb_bids(8), bump in 0.0f64..100.0) {
            let before = allocate(&bids, &cap(1.0));
            let mut raised = bids.clone();
            let b0 = raised[0].balance();
            raised[0].set_balance(b0 + bump).unwrap();
            let after = allocate(&raised, &cap(1.0));
            let me = &bids[0].user;
            prop_assert!(after[me] >= before[me] * (1.0 - 1e-12));
            for b in &bids[1..] {
                prop_assert!(after[&b.user] <= before[&b.user] * (1.0 + 1e-12));
            }
        }

        #[test]
        fn payments_are_capped_and_fair(
            bids in arb_bids(8),
            fractions in prop::collection::vec(0.0f64..3.0, 8),
        ) {
            let c = cap(1.0);
            let shares = allocate(&bids, &c);
            let usage: Vec<UsageRecord> = bids
                .iter()
                .zip(&fractions)
                .map(|(b, f)| UsageRecord::new(b.user.clone(), shares[&b.user] * f).unwrap())
                .collect();
            let charges = charge(&shares, &usage, &bids).unwrap();
            let mut full_price = None;
            for (b, f) in bids.iter().zip(&fractions) {
                let s = charges[&b.user];
                prop_assert!(s <= b.rate());
                prop_assert!(s >= 0.0);
                if *f >= 1.0 && shares[&b.user] > 0.0 {
                    let price = s / shares[&b.user];
                    match full_price {
                        None => full_price = Some(price),
                        Some(p) => prop_assert!(rel_eq(price, p, 1e-9)),
                    }
                }
            }
        }

        #[test]
        fn balances_never_go_negative(
            bids in arb_bids(6),
            fractions in prop::collection::vec(0.0f64..3.0, 6),
            rounds in 1usize..30,
        ) {
            let c = cap(1.0);
            let mut bids = bids;
            for _ in 0..rounds {
                let fr = fractions.clone();
                let (result, next) = settle_period_with(&bids, &c, |shares| {
                    shares
                        .iter()
                        .zip(fr.iter())
                        .map(|((u, r), f)| UsageRecord::new(u.clone(), r * f).unwrap())
                        .collect()
                })
                .unwrap();
                for (before, after) in bids.iter().zip(&next) {
                    prop_assert!(after.balance() >= 0.0);
                    let paid = result.charges.get(&before.user).copied().unwrap_or(0.0) * c.period();
                    prop_assert!((before.balance() - after.balance() - paid).abs() <= 1e-9 * before.balance().max(1.0));
                }
                bids = next;
            }
        }

        #[test]
        fn sole_user_decays_geometrically(b0 in 0.1f64..1e4, t in 11.0f64..1e5, k in 1usize..60) {
            let c = cap(1.0);
            let mut bids = vec![bid("solo", b0, t)];
            for _ in 0..k {
                bids = settle_period(&bids, &c, &[UsageRecord::new("solo", 1.0).unwrap()]).unwrap().1;
            }
            let closed = b0 * (1.0 - 10.0 / t).powi(k as i32);
            prop_assert!(rel_eq(bids[0].balance(), closed, 1e-9));
        }

        #[test]
        fn eviction_is_idempotent(
            raw in prop::collection::vec(1e-7f64..1.0, 1..10),
        ) {
            let c = cap(1.0);
            let bids: Vec<Bid> = raw
                .iter()
                .enumerate()
                .map(|(i, r)| bid(&format!("u{i}"), *r, 1.0))
                .collect();
            let (kept, _) = evict_small_bidders(&bids, &c);
            let (again, gone) = evict_small_bidders(&kept, &c);
            prop_assert!(gone.is_empty());
            prop_assert_eq!(again, kept.clone());
            let shares = allocate(&kept, &c);
            for s in shares.values() {
                prop_assert!(*s >= EVICTION_THRESHOLD * c.total());
            }
        }
    }
}
