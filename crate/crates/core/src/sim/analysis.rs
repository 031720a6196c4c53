//! How much a user with bursty demand gains over plain proportional share.
//!
//! `n` continuous users keep a host busy while one infrequent user sits
//! idle. All bid the same credits over the same interval, so while the
//! infrequent user is idle the others' balances decay as `(1 - P/t)^k` and
//! it arrives with a larger share than the `1/(n+1)` an uncharged
//! proportional-share scheduler would give it.

use super::scenario::{Scenario, UserSpec, Workload};
use super::{Simulation, SimError};
use crate::time::Timestamp;

/// Share the infrequent user holds on arrival in the reference experiment.
pub const ARRIVAL_SHARE: f64 = 0.75;

const BALANCE: f64 = 10.0;
const INTERVAL: f64 = 300.0;
const BURSTY: &str = "bursty";

/// `(0.75 - s) / s` where `s = 1/(n+1)` is the proportional share of one of
/// `n + 1` equally funded users.
pub fn improvement_over_proportional_share(n: usize) -> Result<f64, SimError> {
    if n < 1 {
        return Err(SimError::NoContinuousUsers(n));
    }
    let fair = 1.0 / (n as f64 + 1.0);
    Ok((ARRIVAL_SHARE - fair) / fair)
}

/// Whole periods the continuous users must run alone for the arrival share
/// to be as close as possible to 0.75: their balances must fall to
/// `10 / (3n)`, i.e. `k = ln(3n) / ln(t / (t - P))`.
pub fn arrival_periods(n: usize, period: f64) -> u64 {
    let decay = INTERVAL / (INTERVAL - period);
    ((3.0 * n as f64).ln() / decay.ln()).round() as u64
}

/// `n` continuous users and one idle user on one host; the idle user wakes
/// at `arrival_periods(n)` periods and the run ends right there.
pub fn bursty_scenario(n: usize) -> Scenario {
    let mut s = Scenario::new(format!("bursty-{n}"), 0.0).host("host0", 1.0);
    let arrival = arrival_periods(n, s.period) as f64 * s.period;
    s.duration = arrival;
    for i in 0..n {
        s = s.user(UserSpec::new(format!("c{i}"), Workload::Continuous).with_account("host0", BALANCE, INTERVAL));
    }
    let bursty = UserSpec::new(
        BURSTY,
        Workload::Bursty {
            active: vec![(arrival, f64::MAX)],
        },
    )
    .with_account("host0", BALANCE, INTERVAL);
    s.user(bursty)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalImprovement {
    pub arrival: Timestamp,
    /// Arrival share with balances charged as usual.
    pub charged_share: f64,
    /// Arrival share with charging switched off.
    pub baseline_share: f64,
}

impl EmpiricalImprovement {
    pub fn improvement(&self) -> f64 {
        (self.charged_share - self.baseline_share) / self.baseline_share
    }
}

fn arrival_share(scenario: &Scenario, seed: u64) -> Result<(Timestamp, f64), SimError> {
    let mut sim = Simulation::new(scenario, seed)?;
    sim.run();
    let arrival = Timestamp::from_secs_f64(scenario.duration);
    let share = sim
        .trace()
        .sample_at("host0", BURSTY, arrival)
        .map(|s| s.share)
        .ok_or_else(|| SimError::Setup(format!("no sample for {BURSTY} at {arrival}")))?;
    Ok((arrival, share))
}

/// Runs [`bursty_scenario`] twice, with and without charging, and compares
/// the infrequent user's share on arrival.
pub fn empirical_improvement(n: usize, seed: u64) -> Result<EmpiricalImprovement, SimError> {
    if n < 1 {
        return Err(SimError::NoContinuousUsers(n));
    }
    let mut scenario = bursty_scenario(n);
    let (arrival, charged_share) = arrival_share(&scenario, seed)?;
    scenario.charging = false;
    let (_, baseline_share) = arrival_share(&scenario, seed)?;
    Ok(EmpiricalImprovement {
        arrival,
        charged_share,
        baseline_share,
    })
}
