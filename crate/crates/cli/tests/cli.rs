//! Drives the `tycoon` binary: the scenario runner, and the user commands
//! against bank, SLS and auctioneer processes on localhost.

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Output, Stdio};
use std::time::{Duration, Instant};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tycoon");

fn tycoon(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("TYCOON_CONFIG")
        .env("HOME", "/nonexistent")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn bundled_priority_scenario_shows_the_ten_to_one_split() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("p.csv");
    let o = tycoon(&["sim", "priority", "--out", csv.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("credit conservation: holds"));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("time,host,user,resource,share,charge,balance,interval,work"));
    let share = |user: &str| -> f64 {
        text.lines()
            .find(|l| l.starts_with("230.000000,host0,") && l.split(',').nth(2) == Some(user))
            .and_then(|l| l.split(',').nth(4))
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!((share("high") - 10.0 / 11.0).abs() < 1e-9);
    assert!((share("low") - 1.0 / 11.0).abs() < 1e-9);
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let csv = dir.path().join(format!("{name}.csv"));
        let ev = dir.path().join(format!("{name}.jsonl"));
        let o = tycoon(&["sim", "cluster", "--seed", "9", "--out", csv.to_str().unwrap(), "--events", ev.to_str().unwrap()]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        (std::fs::read(csv).unwrap(), std::fs::read(ev).unwrap())
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn sim_reports_json_summary_and_lists_bundled() {
    let o = tycoon(&["sim", "interval-change", "--json"]);
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["scenario"], "interval-change");
    assert_eq!(v["conserved"], true);
    assert_eq!(v["users"].as_array().unwrap().len(), 2);
    assert!(v["max_latency"].as_f64().unwrap() <= 10.0 + 0.05 + 1e-9);

    let o = tycoon(&["sim", "--list"]);
    for name in ["priority", "interval-change", "bursty", "eviction", "cluster"] {
        assert!(stdout(&o).contains(name));
    }
}

#[test]
fn missing_and_invalid_scenarios_fail_with_code_2() {
    let o = tycoon(&["sim", "/nonexistent/scenario.toml"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no scenario file"));

    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.toml");
    std::fs::write(
        &p,
        "name = \"bad\"\nduration = 100\n\n[[host]]\nname = \"h\"\ncpu = -1\n\n[[user]]\nname = \"u\"\nworkload = \"sometimes\"\n",
    )
    .unwrap();
    let o = tycoon(&["sim", p.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    let host = err.find("line 4: host `h`: cpu must be positive").expect(&err);
    let user = err.find("line 8: user `u`: unknown workload").expect(&err);
    assert!(host < user, "{err}");
}

/// A service process, killed on drop.
struct Service {
    child: Child,
    addr: String,
}

impl Service {
    fn start(args: &[&str]) -> Service {
        let mut child = Command::new(BIN)
            .args(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .expect("service starts");
        let mut line = String::new();
        BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
        let addr = line
            .trim()
            .strip_prefix("listening on ")
            .unwrap_or_else(|| panic!("unexpected banner {line:?}"))
            .to_owned();
        Service { child, addr }
    }
}

impl Drop for Service {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

struct Deployment {
    dir: tempfile::TempDir,
    _services: Vec<Service>,
    config: PathBuf,
}

impl Deployment {
    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Runs a user command with the deployment's config.
    fn run(&self, args: &[&str]) -> Output {
        let mut all = vec!["--config", self.config.to_str().unwrap()];
        all.extend_from_slice(args);
        tycoon(&all)
    }

    fn json(&self, args: &[&str]) -> (Option<i32>, Value) {
        let mut all = vec!["--json"];
        all.extend_from_slice(args);
        let o = self.run(&all);
        let v = serde_json::from_slice(&o.stdout).unwrap_or_else(|_| panic!("{} / {}", stdout(&o), stderr(&o)));
        (o.status.code(), v)
    }

    fn balance(&self) -> f64 {
        self.json(&["balance"]).1["balance"].as_f64().unwrap()
    }
}

fn keygen(path: &Path) -> String {
    let o = tycoon(&["keygen", "--out", path.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    stdout(&o).trim().to_owned()
}

fn deploy() -> Deployment {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    let bank_pub = keygen(&p("bank.key"));
    let alice_pub = keygen(&p("alice.key"));
    keygen(&p("host0.key"));
    keygen(&p("host1.key"));
    std::fs::write(p("users.toml"), format!("alice = \"{alice_pub}\"\n")).unwrap();

    let bank = Service::start(&[
        "serve",
        "bank",
        "--listen",
        "127.0.0.1:0",
        "--bank-key",
        p("bank.key").to_str().unwrap(),
        "--users",
        p("users.toml").to_str().unwrap(),
        "--journal",
        p("ledger").to_str().unwrap(),
    ]);
    let sls = Service::start(&["serve", "sls", "--listen", "127.0.0.1:0"]);
    let mut services = vec![bank, sls];
    for (i, extra) in [(0, "memory = 4\ndisk = 100\n"), (1, "")] {
        let cfg = p(&format!("host{i}.toml"));
        std::fs::write(
            &cfg,
            format!(
                "name = \"host{i}\"\nlisten = \"127.0.0.1:0\"\nkey = \"host{i}.key\"\nbank_key = \"{bank_pub}\"\n\
                 users = \"users.toml\"\ncpu = {}\n{extra}period = 600\nsls = \"{}\"\ntrace = \"host{i}.csv\"\n",
                i + 1,
                services[1].addr
            ),
        )
        .unwrap();
        services.push(Service::start(&["serve", "auctioneer", "--host-config", cfg.to_str().unwrap()]));
    }
    let config = p("client.toml");
    std::fs::write(
        &config,
        format!(
            "bank = \"{}\"\nsls = \"{}\"\nuser = \"alice\"\nkey = \"{}\"\ntimeout_secs = 5\n",
            services[0].addr,
            services[1].addr,
            p("alice.key").display()
        ),
    )
    .unwrap();
    let d = Deployment {
        dir,
        _services: services,
        config,
    };
    // wait for both hosts to register with the locator
    let deadline = Instant::now() + Duration::from_secs(10);
    loop {
        let o = d.run(&["--json", "get_status", "host0", "host1"]);
        let v: Value = serde_json::from_slice(&o.stdout).unwrap_or(Value::Null);
        let resolved = v
            .as_array()
            .is_some_and(|a| a.iter().all(|h| !h["detail"].as_str().unwrap_or("").contains("not registered")));
        if resolved {
            break;
        }
        assert!(Instant::now() < deadline, "hosts never registered");
        std::thread::sleep(Duration::from_millis(50));
    }
    d
}

fn cpu_status(v: &Value) -> &Value {
    v[0]["status"]["resources"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["resource"] == "cpu")
        .unwrap()
}

#[test]
fn user_commands_against_live_services() {
    let d = deploy();
    let bank_key = d.path("bank.key");
    let o = d.run(&["admin", "mint", "alice", "1000", "--bank-key", bank_key.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(d.balance(), 1000.0);

    // create_account host0 10 10 10
    let (code, v) = d.json(&["create_account", "host0", "10", "10", "10"]);
    assert_eq!(code, Some(0), "{v}");
    assert_eq!(d.balance(), 970.0);
    let (_, v) = d.json(&["get_status", "host0"]);
    let resources = v[0]["status"]["resources"].as_array().unwrap();
    assert_eq!(resources.len(), 3);
    assert!(resources.iter().all(|r| r["balance"] == 10.0));

    // fund host0 cpu 90 1000
    let (code, _) = d.json(&["fund", "host0", "cpu", "90", "1000"]);
    assert_eq!(code, Some(0));
    let (_, v) = d.json(&["get_status", "host0"]);
    assert_eq!(cpu_status(&v)["balance"], 100.0);
    assert_eq!(cpu_status(&v)["interval"], 1000.0);

    // set_interval host0 cpu 2000, and a retry with a fresh nonce
    for _ in 0..2 {
        let (code, _) = d.json(&["set_interval", "host0", "cpu", "2000"]);
        assert_eq!(code, Some(0));
    }
    let (_, v) = d.json(&["get_status", "host0"]);
    assert_eq!(cpu_status(&v)["balance"], 100.0);
    assert_eq!(cpu_status(&v)["interval"], 2000.0);

    // a protocol reject comes back with its reason code
    let o = d.run(&["set_interval", "host1", "cpu", "50"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("rejected: unknown-account"), "{}", stdout(&o));

    // insufficient funds: nothing is transferred
    let o = d.run(&["create_account", "host1", "5000", "0", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nothing was transferred"));
    assert_eq!(d.balance(), 880.0);

    // one dead host of three: two successes and one connection error
    let (code, v) = d.json(&["create_account", "host1", "dead@127.0.0.1:1", "host0", "1", "0", "0"]);
    assert_eq!(code, Some(1));
    let by_host: Vec<(&str, bool)> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|h| (h["host"].as_str().unwrap(), h["ok"].as_bool().unwrap()))
        .collect();
    // host0 already has an account; that is found before any credits move
    assert_eq!(by_host, [("dead", false), ("host0", false), ("host1", true)]);
    assert!(v[1]["detail"].as_str().unwrap().contains("already"));
    assert_eq!(d.balance(), 879.0);
    let (code, v) = d.json(&["get_status", "host0", "host1", "dead@127.0.0.1:1"]);
    assert_eq!(code, Some(1));
    assert_eq!(v.as_array().unwrap().iter().filter(|h| h["ok"] == true).count(), 2);
}

#[test]
fn bid_plans_across_registered_hosts() {
    let d = deploy();
    let bank_key = d.path("bank.key");
    d.run(&["admin", "mint", "alice", "100", "--bank-key", bank_key.to_str().unwrap()]);

    let (code, v) = d.json(&["bid", "--budget", "0.01", "--interval", "1000", "--dry-run"]);
    assert_eq!(code, Some(0), "{v}");
    let plan = v["plan"].as_array().unwrap();
    assert_eq!(plan.len(), 2);
    let total: f64 = plan.iter().map(|p| p["bid"].as_f64().unwrap()).sum();
    assert!((total - 0.01).abs() < 1e-12);
    assert!(v["executed"].as_array().unwrap().is_empty());
    assert_eq!(d.balance(), 100.0);

    // a threshold above every marginal value keeps the whole budget
    let (_, v) = d.json(&["bid", "--budget", "0.01", "--threshold", "1e12", "--dry-run"]);
    assert!(v["plan"].as_array().unwrap().iter().all(|p| p["bid"] == 0.0));

    let (code, v) = d.json(&["bid", "--budget", "0.01", "--interval", "1000", "--yes"]);
    assert_eq!(code, Some(0), "{v}");
    let funded = v["executed"].as_array().unwrap();
    assert!(!funded.is_empty() && funded.iter().all(|h| h["ok"] == true));
    assert!((d.balance() - 90.0).abs() < 1e-9);
}

#[test]
fn commands_without_configuration_explain_what_is_missing() {
    let o = tycoon(&["get_status", "host0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("no user configured"));
    let o = tycoon(&["--user", "a", "--key", "/nonexistent", "balance"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("loading key"));
}
