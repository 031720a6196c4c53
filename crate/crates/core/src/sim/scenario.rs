//! Scenario description: hosts, users, their workloads and scripted actions.
//!
//! Scenarios are usually written in TOML (see `docs/WIRE.md` for the
//! schema); [`Scenario::from_toml`] parses and validates one, reporting every
//! problem with the line it came from.

use std::collections::BTreeSet;
use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::market::DEFAULT_PERIOD_SECS;
use crate::sls::{DEFAULT_EXPIRY_SECS, DEFAULT_REGISTRATION_INTERVAL_SECS};

/// Default one-way message latency, seconds.
pub const DEFAULT_LATENCY_SECS: f64 = 0.05;

/// Names the simulator reserves for its own nodes.
pub const RESERVED_NAMES: [&str; 3] = ["bank", "sls", "admin"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Latency {
    Constant { secs: f64 },
    Uniform { min: f64, max: f64 },
}

impl Default for Latency {
    fn default() -> Self {
        Latency::Constant {
            secs: DEFAULT_LATENCY_SECS,
        }
    }
}

impl Latency {
    pub fn max_secs(&self) -> f64 {
        match *self {
            Latency::Constant { secs } => secs,
            Latency::Uniform { max, .. } => max,
        }
    }
}

/// What a user's jobs want from the hosts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Workload {
    /// Always runnable.
    Continuous,
    /// Runnable only inside the `[start, end)` windows, in seconds.
    Bursty { active: Vec<(f64, f64)> },
    /// Runnable until `work` units are done.
    Batch { work: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HostSpec {
    pub name: String,
    pub cpu: f64,
    /// Work units per cpu-second.
    pub speed: f64,
    pub kill_at: Option<f64>,
}

/// An account opened before the clock starts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccountSpec {
    pub host: String,
    pub amount: f64,
    pub interval: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FundAction {
    pub at: f64,
    pub host: String,
    pub amount: f64,
    pub interval: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalAction {
    pub at: f64,
    pub host: String,
    pub interval: f64,
}

/// Open-loop funding: `rate` credits per second, paid every `every` seconds
/// starting at time zero. With a `host`, each payment is forwarded straight
/// into that host.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Income {
    pub rate: f64,
    pub every: f64,
    pub host: Option<String>,
}

/// At `at`, query the locator and spread `budget` credits/second over the
/// live hosts with the best-response rule, funding each over `interval`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AgentAction {
    pub at: f64,
    pub budget: f64,
    pub interval: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserSpec {
    pub name: String,
    pub bank: f64,
    pub workload: Workload,
    /// Cpu-seconds per work unit on a speed-1 host.
    pub frame_cost: f64,
    pub accounts: Vec<AccountSpec>,
    pub funds: Vec<FundAction>,
    pub set_intervals: Vec<IntervalAction>,
    pub income: Option<Income>,
    pub agents: Vec<AgentAction>,
}

impl UserSpec {
    pub fn new(name: impl Into<String>, workload: Workload) -> Self {
        UserSpec {
            name: name.into(),
            bank: 0.0,
            workload,
            frame_cost: 1.0,
            accounts: Vec::new(),
            funds: Vec::new(),
            set_intervals: Vec::new(),
            income: None,
            agents: Vec::new(),
        }
    }

    pub fn with_account(mut self, host: &str, amount: f64, interval: f64) -> Self {
        self.bank += amount;
        self.accounts.push(AccountSpec {
            host: host.to_owned(),
            amount,
            interval,
        });
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub duration: f64,
    pub period: f64,
    pub seed: u64,
    pub charging: bool,
    pub latency: Latency,
    pub registration_interval: f64,
    pub expiry: f64,
    /// Seconds between provider sweeps back to the administrator.
    pub recirculation: Option<f64>,
    pub hosts: Vec<HostSpec>,
    pub users: Vec<UserSpec>,
}

impl Scenario {
    pub fn new(name: impl Into<String>, duration: f64) -> Self {
        Scenario {
            name: name.into(),
            duration,
            period: DEFAULT_PERIOD_SECS,
            seed: 0,
            charging: true,
            latency: Latency::default(),
            registration_interval: DEFAULT_REGISTRATION_INTERVAL_SECS as f64,
            expiry: DEFAULT_EXPIRY_SECS as f64,
            recirculation: None,
            hosts: Vec::new(),
            users: Vec::new(),
        }
    }

    pub fn host(mut self, name: &str, cpu: f64) -> Self {
        self.hosts.push(HostSpec {
            name: name.to_owned(),
            cpu,
            speed: 1.0,
            kill_at: None,
        });
        self
    }

    pub fn user(mut self, user: UserSpec) -> Self {
        self.users.push(user);
        self
    }

    /// Checks the scenario without source positions.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let mut v = Validator::default();
        v.scenario(self, &Spans::default());
        v.finish()
    }

    pub fn from_toml(text: &str) -> Result<Scenario, ScenarioError> {
        let file: ScenarioFile = toml::from_str(text).map_err(|e| ScenarioError {
            problems: vec![Problem {
                line: e.span().map(|s| line_of(text, s.start)),
                message: e.message().to_owned(),
            }],
        })?;
        let (scenario, spans, problems) = file.lower(text);
        let mut v = Validator { problems };
        v.scenario(&scenario, &spans);
        v.finish()?;
        Ok(scenario)
    }
}

/// One thing wrong with a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Problem {
    pub line: Option<usize>,
    pub message: String,
}

/// Every problem found in a scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct ScenarioError {
    pub problems: Vec<Problem>,
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid scenario:")?;
        for p in &self.problems {
            match p.line {
                Some(line) => writeln!(f, "  line {line}: {}", p.message)?,
                None => writeln!(f, "  {}", p.message)?,
            }
        }
        Ok(())
    }
}

impl std::error::Error for ScenarioError {}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

#[derive(Default)]
struct Spans {
    top: Option<usize>,
    hosts: Vec<Option<usize>>,
    users: Vec<Option<usize>>,
}

#[derive(Default)]
struct Validator {
    problems: Vec<Problem>,
}

impl Validator {
    fn check(&mut self, ok: bool, line: Option<usize>, message: impl FnOnce() -> String) {
        if !ok {
            self.problems.push(Problem {
                line,
                message: message(),
            });
        }
    }

    fn positive(&mut self, value: f64, line: Option<usize>, field: &str) {
        self.check(value.is_finite() && value > 0.0, line, || {
            format!("{field} must be positive, got {value}")
        });
    }

    fn non_negative(&mut self, value: f64, line: Option<usize>, field: &str) {
        self.check(value.is_finite() && value >= 0.0, line, || {
            format!("{field} must be non-negative, got {value}")
        });
    }

    fn scenario(&mut self, s: &Scenario, spans: &Spans) {
        let top = spans.top;
        self.positive(s.duration, top, "duration");
        self.positive(s.period, top, "period");
        self.positive(s.registration_interval, top, "sls.registration_interval");
        self.positive(s.expiry, top, "sls.expiry");
        if let Some(r) = s.recirculation {
            self.positive(r, top, "recirculation.every");
        }
        match s.latency {
            Latency::Constant { secs } => self.non_negative(secs, top, "latency.secs"),
            Latency::Uniform { min, max } => {
                self.non_negative(min, top, "latency.min");
                self.check(max.is_finite() && max >= min, top, || {
                    format!("latency.max ({max}) must be at least latency.min ({min})")
                });
            }
        }
        self.check(!s.hosts.is_empty(), top, || "at least one [[host]] is required".into());

        let mut names = BTreeSet::new();
        for (i, h) in s.hosts.iter().enumerate() {
            let line = spans.hosts.get(i).copied().flatten();
            let field = |f: &str| format!("host `{}`: {f}", h.name);
            self.name(&h.name, line, &mut names);
            self.positive(h.cpu, line, &field("cpu"));
            self.positive(h.speed, line, &field("speed"));
            if let Some(k) = h.kill_at {
                self.non_negative(k, line, &field("kill_at"));
            }
        }
        let hosts: BTreeSet<&str> = s.hosts.iter().map(|h| h.name.as_str()).collect();
        for (i, u) in s.users.iter().enumerate() {
            let line = spans.users.get(i).copied().flatten();
            self.user(u, line, &hosts, &mut names);
        }
    }

    fn name(&mut self, name: &str, line: Option<usize>, seen: &mut BTreeSet<String>) {
        self.check(!name.trim().is_empty(), line, || "names must not be empty".into());
        self.check(!RESERVED_NAMES.contains(&name), line, || format!("`{name}` is a reserved name"));
        self.check(seen.insert(name.to_owned()), line, || format!("duplicate name `{name}`"));
    }

    fn host_ref(&mut self, host: &str, line: Option<usize>, hosts: &BTreeSet<&str>, user: &str, what: &str) {
        self.check(hosts.contains(host), line, || {
            format!("user `{user}`: {what} names unknown host `{host}`")
        });
    }

    fn user(&mut self, u: &UserSpec, line: Option<usize>, hosts: &BTreeSet<&str>, names: &mut BTreeSet<String>) {
        let field = |f: &str| format!("user `{}`: {f}", u.name);
        self.name(&u.name, line, names);
        self.non_negative(u.bank, line, &field("bank"));
        self.positive(u.frame_cost, line, &field("frame_cost"));
        match &u.workload {
            Workload::Continuous => {}
            Workload::Bursty { active } => {
                for &(start, end) in active {
                    self.check(start.is_finite() && start >= 0.0 && end > start, line, || {
                        field(&format!("active window [{start}, {end}) is empty or negative"))
                    });
                }
            }
            Workload::Batch { work } => self.positive(*work, line, &field("work")),
        }
        let mut opened = BTreeSet::new();
        for a in &u.accounts {
            self.host_ref(&a.host, line, hosts, &u.name, "account");
            self.check(opened.insert(a.host.as_str()), line, || {
                field(&format!("two accounts on `{}`", a.host))
            });
            self.positive(a.amount, line, &field("account.amount"));
            self.positive(a.interval, line, &field("account.interval"));
        }
        let opening: f64 = u.accounts.iter().map(|a| a.amount).sum();
        self.check(opening <= u.bank + 1e-9, line, || {
            field(&format!("accounts need {opening} credits but bank is {}", u.bank))
        });
        for f in &u.funds {
            self.host_ref(&f.host, line, hosts, &u.name, "fund");
            self.non_negative(f.at, line, &field("fund.at"));
            self.positive(f.amount, line, &field("fund.amount"));
            self.positive(f.interval, line, &field("fund.interval"));
        }
        for s in &u.set_intervals {
            self.host_ref(&s.host, line, hosts, &u.name, "set_interval");
            self.non_negative(s.at, line, &field("set_interval.at"));
            self.positive(s.interval, line, &field("set_interval.interval"));
        }
        if let Some(inc) = &u.income {
            self.positive(inc.rate, line, &field("income.rate"));
            self.positive(inc.every, line, &field("income.every"));
            if let Some(h) = &inc.host {
                self.host_ref(h, line, hosts, &u.name, "income");
            }
        }
        for a in &u.agents {
            self.non_negative(a.at, line, &field("agent.at"));
            self.positive(a.budget, line, &field("agent.budget"));
            self.positive(a.interval, line, &field("agent.interval"));
        }
    }

    fn finish(mut self) -> Result<(), ScenarioError> {
        if self.problems.is_empty() {
            Ok(())
        } else {
            self.problems.sort_by_key(|p| p.line);
            Err(ScenarioError {
                problems: self.problems,
            })
        }
    }
}

// On-disk layout. Kept separate so the in-memory types stay free of spans.

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    name: Option<String>,
    duration: Spanned<f64>,
    period: Option<f64>,
    seed: Option<u64>,
    charging: Option<bool>,
    latency: Option<Latency>,
    sls: Option<SlsFile>,
    recirculation: Option<RecirculationFile>,
    #[serde(default)]
    host: Vec<Spanned<HostFile>>,
    #[serde(default)]
    user: Vec<Spanned<UserFile>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SlsFile {
    registration_interval: Option<f64>,
    expiry: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecirculationFile {
    every: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct HostFile {
    name: String,
    count: Option<usize>,
    #[serde(default = "one")]
    cpu: f64,
    #[serde(default = "one")]
    speed: f64,
    kill_at: Option<f64>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct UserFile {
    name: String,
    #[serde(default)]
    bank: f64,
    #[serde(default = "continuous")]
    workload: String,
    #[serde(default)]
    active: Vec<(f64, f64)>,
    work: Option<f64>,
    #[serde(default = "one")]
    frame_cost: f64,
    #[serde(default)]
    account: Vec<AccountSpec>,
    #[serde(default)]
    fund: Vec<FundAction>,
    #[serde(default)]
    set_interval: Vec<IntervalAction>,
    income: Option<Income>,
    #[serde(default)]
    agent: Vec<AgentAction>,
}

fn one() -> f64 {
    1.0
}

fn continuous() -> String {
    "continuous".into()
}

impl ScenarioFile {
    fn lower(self, text: &str) -> (Scenario, Spans, Vec<Problem>) {
        let line = |span: Range<usize>| Some(line_of(text, span.start));
        let mut spans = Spans {
            top: line(self.duration.span()),
            ..Spans::default()
        };
        let mut s = Scenario::new(self.name.unwrap_or_else(|| "scenario".into()), *self.duration.get_ref());
        s.period = self.period.unwrap_or(DEFAULT_PERIOD_SECS);
        s.seed = self.seed.unwrap_or(0);
        s.charging = self.charging.unwrap_or(true);
        s.latency = self.latency.unwrap_or_default();
        if let Some(sls) = self.sls {
            s.registration_interval = sls.registration_interval.unwrap_or(s.registration_interval);
            s.expiry = sls.expiry.unwrap_or(s.expiry);
        }
        s.recirculation = self.recirculation.map(|r| r.every);
        for h in self.host {
            let l = line(h.span());
            let h = h.into_inner();
            let names: Vec<String> = match h.count {
                Some(n) => (0..n).map(|i| format!("{}{i}", h.name)).collect(),
                None => vec![h.name.clone()],
            };
            for name in names {
                spans.hosts.push(l);
                s.hosts.push(HostSpec {
                    name,
                    cpu: h.cpu,
                    speed: h.speed,
                    kill_at: h.kill_at,
                });
            }
        }
        let mut problems = Vec::new();
        for u in self.user {
            let l = line(u.span());
            let u = u.into_inner();
            let workload = match u.workload.as_str() {
                "continuous" => Workload::Continuous,
                "bursty" => Workload::Bursty { active: u.active },
                "batch" => Workload::Batch {
                    work: u.work.unwrap_or(f64::NAN),
                },
                other => {
                    problems.push(Problem {
                        line: l,
                        message: format!("user `{}`: unknown workload `{other}`", u.name),
                    });
                    Workload::Continuous
                }
            };
            spans.users.push(l);
            s.users.push(UserSpec {
                name: u.name,
                bank: u.bank,
                workload,
                frame_cost: u.frame_cost,
                accounts: u.account,
                funds: u.fund,
                set_intervals: u.set_interval,
                income: u.income,
                agents: u.agent,
            });
        }
        (s, spans, problems)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const PRIORITY: &str = r#"
name = "priority"
duration = 300

[[host]]
name = "host0"

[[user]]
name = "low"
bank = 10
account = [{ host = "host0", amount = 10, interval = 100000 }]
income = { rate = 0.0001, every = 10, host = "host0" }

[[user]]
name = "high"
bank = 10
fund = [{ at = 220, host = "host0", amount = 10, interval = 10000 }]
"#;

    #[test]
    fn parses_a_small_scenario() {
        let s = Scenario::from_toml(PRIORITY).unwrap();
        assert_eq!(s.name, "priority");
        assert_eq!(s.period, 10.0);
        assert_eq!(s.hosts[0].cpu, 1.0);
        assert_eq!(s.users.len(), 2);
        assert_eq!(s.users[1].funds[0].interval, 10000.0);
        assert_eq!(s.latency, Latency::Constant { secs: 0.05 });
    }

    #[test]
    fn host_count_expands_names() {
        let s = Scenario::from_toml("duration = 10\n[[host]]\nname = \"h\"\ncount = 3\n").unwrap();
        let names: Vec<&str> = s.hosts.iter().map(|h| h.name.as_str()).collect();
        assert_eq!(names, ["h0", "h1", "h2"]);
    }

    #[test]
    fn problems_carry_line_numbers() {
        let text = "duration = 10\n\n[[host]]\nname = \"h\"\ncpu = -1\n\n[[user]]\nname = \"u\"\nfund = [{ at = 1, host = \"nope\", amount = 1, interval = 1 }]\n";
        let err = Scenario::from_toml(text).unwrap_err();
        assert_eq!(err.problems.len(), 2, "{err}");
        assert_eq!(err.problems[0].line, Some(3));
        assert!(err.problems[0].message.contains("cpu"));
        assert_eq!(err.problems[1].line, Some(7));
        assert!(err.problems[1].message.contains("nope"));
    }

    #[test]
    fn syntax_and_schema_errors_are_located() {
        let err = Scenario::from_toml("duration = 10\nbogus = 1\n").unwrap_err();
        assert_eq!(err.problems[0].line, Some(2));
        let err = Scenario::from_toml("name = \"x\"\n").unwrap_err();
        assert!(err.problems[0].message.contains("duration"));
    }

    #[test]
    fn unknown_workload_is_reported() {
        let err = Scenario::from_toml("duration = 1\n[[host]]\nname = \"h\"\n[[user]]\nname = \"u\"\nworkload = \"spiky\"\n")
            .unwrap_err();
        assert!(err.to_string().contains("spiky"), "{err}");
        assert_eq!(err.problems[0].line, Some(4));
    }

    #[test]
    fn reserved_and_duplicate_names_are_refused() {
        let s = Scenario::new("x", 10.0).host("bank", 1.0).host("h", 1.0).host("h", 1.0);
        let err = s.validate().unwrap_err();
        assert_eq!(err.problems.len(), 2);
    }

    #[test]
    fn accounts_must_fit_the_bank() {
        let mut u = UserSpec::new("u", Workload::Continuous).with_account("h", 5.0, 10.0);
        u.bank = 1.0;
        let err = Scenario::new("x", 10.0).host("h", 1.0).user(u).validate().unwrap_err();
        assert!(err.problems[0].message.contains("bank"));
    }
}
