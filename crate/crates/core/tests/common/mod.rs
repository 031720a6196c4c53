//! Helpers shared by the integration tests: an independent optimizer for the
//! bidding problem and a random scenario generator.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tycoon_core::sim::{AgentAction, FundAction, Income, IntervalAction, Latency, Scenario, UserSpec, Workload};

pub fn utility(w: &[f64], y: &[f64], x: &[f64]) -> f64 {
    w.iter()
        .zip(y)
        .zip(x)
        .map(|((w, y), x)| if x + y > 0.0 { w * x / (x + y) } else { 0.0 })
        .sum()
}

/// Golden-section maximum of a unimodal `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - g * (hi - lo);
    let mut b = lo + g * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if hi - lo < 1e-15 * (1.0 + hi.abs()) {
            break;
        }
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + g * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - g * (hi - lo);
            fa = f(a);
        }
    }
    (lo + hi) / 2.0
}

/// Maximizes `sum w x/(x+y)` subject to `sum x = budget`, `x >= 0`, by
/// repeatedly moving budget between pairs of hosts. Knows nothing about the
/// closed-form solution.
pub fn pairwise_maximize(w: &[f64], y: &[f64], budget: f64) -> Vec<f64> {
    let n = w.len();
    let mut x = vec![budget / n as f64; n];
    let mut best = utility(w, y, &x);
    for _ in 0..400 {
        for i in 0..n {
            for j in (i + 1)..n {
                let pool = x[i] + x[j];
                let term = |k: usize, v: f64| if v + y[k] > 0.0 { w[k] * v / (v + y[k]) } else { 0.0 };
                let t = golden_max(|t| term(i, t) + term(j, pool - t), 0.0, pool);
                x[i] = t;
                x[j] = pool - t;
            }
        }
        let u = utility(w, y, &x);
        if u - best < 1e-15 {
            break;
        }
        best = u;
    }
    x
}

/// A random cluster scenario exercising every feature of the simulator.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hosts = rng.gen_range(1..6);
    let users = rng.gen_range(1..8);
    let mut s = Scenario::new(format!("random-{seed}"), rng.gen_range(100.0..400.0));
    s.latency = Latency::Uniform {
        min: 0.001,
        max: rng.gen_range(0.01..0.5),
    };
    if rng.gen_bool(0.5) {
        s.recirculation = Some(rng.gen_range(20.0..90.0));
    }
    for h in 0..hosts {
        s = s.host(&format!("h{h}"), rng.gen_range(0.5..8.0));
        s.hosts[h].speed = rng.gen_range(0.5..2.0);
        if rng.gen_bool(0.2) {
            s.hosts[h].kill_at = Some(rng.gen_range(0.0..s.duration));
        }
    }
    let end = s.duration;
    let host = |rng: &mut ChaCha8Rng| format!("h{}", rng.gen_range(0..hosts));
    for u in 0..users {
        let workload = match rng.gen_range(0..3) {
            0 => Workload::Continuous,
            1 => Workload::Bursty {
                active: vec![(rng.gen_range(0.0..end / 2.0), rng.gen_range(end / 2.0..end * 2.0))],
            },
            _ => Workload::Batch {
                work: rng.gen_range(1.0..300.0),
            },
        };
        let mut spec = UserSpec::new(format!("u{u}"), workload);
        spec.frame_cost = rng.gen_range(0.5..3.0);
        for h in 0..hosts {
            if rng.gen_bool(0.5) {
                spec = spec.with_account(&format!("h{h}"), rng.gen_range(0.01..50.0), rng.gen_range(5.0..10_000.0));
            }
        }
        spec.bank += rng.gen_range(0.0..200.0);
        for _ in 0..rng.gen_range(0..5) {
            spec.funds.push(FundAction {
                at: rng.gen_range(0.0..end),
                host: host(&mut rng),
                amount: rng.gen_range(0.01..80.0),
                interval: rng.gen_range(5.0..10_000.0),
            });
        }
        for _ in 0..rng.gen_range(0..4) {
            spec.set_intervals.push(IntervalAction {
                at: rng.gen_range(0.0..end),
                host: host(&mut rng),
                interval: rng.gen_range(1.0..10_000.0),
            });
        }
        if rng.gen_bool(0.4) {
            spec.income = Some(Income {
                rate: rng.gen_range(0.001..1.0),
                every: rng.gen_range(5.0..60.0),
                host: rng.gen_bool(0.5).then(|| host(&mut rng)),
            });
        }
        if rng.gen_bool(0.3) {
            spec.agents.push(AgentAction {
                at: rng.gen_range(0.0..end),
                budget: rng.gen_range(0.001..0.5),
                interval: rng.gen_range(50.0..2000.0),
            });
        }
        s = s.user(spec);
    }
    s
}
