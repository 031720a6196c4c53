//! The `sim` command: run a scenario and summarize it.

use std::path::Path;

use anyhow::{anyhow, Context, Result};
use serde::Serialize;
use tycoon_core::sim::{Scenario, Simulation};

/// Scenarios shipped with the tool, by name.
pub const BUNDLED: [(&str, &str); 5] = [
    ("priority", include_str!("../../../scenarios/priority.toml")),
    ("interval-change", include_str!("../../../scenarios/interval-change.toml")),
    ("bursty", include_str!("../../../scenarios/bursty.toml")),
    ("eviction", include_str!("../../../scenarios/eviction.toml")),
    ("cluster", include_str!("../../../scenarios/cluster.toml")),
];

/// Reads `arg` as a file if one exists, else looks it up among the bundled
/// scenarios.
pub fn load(arg: &str) -> Result<Scenario> {
    let (origin, text) = if Path::new(arg).exists() {
        (arg.to_owned(), std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))?)
    } else if let Some((_, text)) = BUNDLED.iter().find(|(name, _)| *name == arg) {
        (format!("bundled scenario {arg}"), (*text).to_owned())
    } else {
        let names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        return Err(anyhow!("no scenario file `{arg}` and no bundled scenario by that name (bundled: {})", names.join(", ")));
    };
    Scenario::from_toml(&text).map_err(|e| anyhow!("{origin} is invalid:\n{e}"))
}

#[derive(Debug, Serialize)]
pub struct UserSummary {
    pub user: String,
    pub work: f64,
    /// Work units per virtual second.
    pub throughput: f64,
}

#[derive(Debug, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub seed: u64,
    pub duration: f64,
    pub samples: usize,
    pub messages: u64,
    pub users: Vec<UserSummary>,
    pub bid_changes: usize,
    pub mean_latency: Option<f64>,
    pub max_latency: Option<f64>,
    pub conserved: bool,
    pub discrepancy: f64,
    pub violations: Vec<String>,
}

impl Summary {
    pub fn ok(&self) -> bool {
        self.conserved && self.violations.is_empty()
    }
}

pub struct Outputs<'a> {
    pub csv: Option<&'a Path>,
    pub events: Option<&'a Path>,
}

pub fn run(scenario: &Scenario, seed: u64, out: Outputs<'_>) -> Result<Summary> {
    let mut sim = Simulation::new(scenario, seed)?;
    sim.run();
    let trace = sim.trace();
    if let Some(p) = out.csv {
        std::fs::write(p, trace.to_csv()).with_context(|| format!("writing {}", p.display()))?;
    }
    if let Some(p) = out.events {
        std::fs::write(p, trace.events_jsonl()).with_context(|| format!("writing {}", p.display()))?;
    }
    let latencies: Vec<f64> = trace
        .changes
        .iter()
        .filter_map(|c| trace.measure_reallocation_latency(c.id).ok())
        .map(|l| l.from_issue_secs())
        .collect();
    let audit = sim.audit();
    Ok(Summary {
        scenario: scenario.name.clone(),
        seed,
        duration: scenario.duration,
        samples: trace.samples.len(),
        messages: trace.messages_sent,
        users: scenario
            .users
            .iter()
            .map(|u| {
                let work = sim.work_done(&u.name);
                UserSummary {
                    user: u.name.clone(),
                    work,
                    throughput: work / scenario.duration,
                }
            })
            .collect(),
        bid_changes: trace.changes.len(),
        mean_latency: (!latencies.is_empty()).then(|| latencies.iter().sum::<f64>() / latencies.len() as f64),
        max_latency: latencies.iter().copied().reduce(f64::max),
        conserved: audit.holds(),
        discrepancy: audit.discrepancy(),
        violations: sim.violations().to_vec(),
    })
}

pub fn print(s: &Summary) {
    println!("scenario {} (seed {}), {}s virtual, {} samples, {} messages", s.scenario, s.seed, s.duration, s.samples, s.messages);
    println!("{:<16} {:>14} {:>14}", "user", "work", "work/s");
    for u in &s.users {
        println!("{:<16} {:>14.4} {:>14.6}", u.user, u.work, u.throughput);
    }
    match (s.mean_latency, s.max_latency) {
        (Some(mean), Some(max)) => {
            println!("reallocation latency over {} bid changes: mean {mean:.3}s, max {max:.3}s", s.bid_changes)
        }
        _ => println!("no scripted bid changes"),
    }
    println!(
        "credit conservation: {} (discrepancy {:.3e})",
        if s.conserved { "holds" } else { "VIOLATED" },
        s.discrepancy
    );
    for v in &s.violations {
        println!("violation: {v}");
    }
}
