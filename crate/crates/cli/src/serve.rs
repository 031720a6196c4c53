//! Long-running services: bank, SLS and per-host auctioneer.

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tycoon_core::auctioneer::{Auctioneer, TraceRow};
use tycoon_core::bank::Bank;
use tycoon_core::market::ResourceCapacity;
use tycoon_core::net::{self, AuctioneerHandler, AuctioneerLoop, BankHandler, Handler, SlsHandler};
use tycoon_core::protocol::{KeyRegistry, Keypair, PublicKey};
use tycoon_core::sls::{Registry, DEFAULT_REGISTRATION_INTERVAL_SECS};
use tycoon_core::{Identity, Resource};

/// Binds, announces the bound address on stdout and serves forever.
fn run(listen: &str, handler: Arc<dyn Handler>, before: impl FnOnce(&str)) -> Result<()> {
    let listener = TcpListener::bind(listen).with_context(|| format!("binding {listen}"))?;
    let addr = listener.local_addr()?.to_string();
    before(&addr);
    println!("listening on {addr}");
    std::io::stdout().flush()?;
    net::serve(listener, handler)?;
    Ok(())
}

fn load_users(path: &Path) -> Result<KeyRegistry> {
    KeyRegistry::load(path).with_context(|| format!("loading user keys {}", path.display()))
}

pub fn bank(listen: &str, key: &Path, users: &Path, journal: Option<&Path>) -> Result<()> {
    let keypair = Keypair::load(key).with_context(|| format!("loading bank key {}", key.display()))?;
    let users = load_users(users)?;
    let bank = match journal {
        Some(dir) => Bank::open(keypair, users, dir).with_context(|| format!("opening journal in {}", dir.display()))?,
        None => Bank::new(keypair, users),
    };
    run(listen, Arc::new(BankHandler(Arc::new(Mutex::new(bank)))), |_| {})
}

pub fn sls(listen: &str, expiry_secs: u64) -> Result<()> {
    let registry = Registry::with_expiry_secs(expiry_secs);
    run(listen, Arc::new(SlsHandler(Arc::new(Mutex::new(registry)))), |_| {})
}

fn default_period() -> f64 {
    10.0
}

fn default_registration() -> u64 {
    DEFAULT_REGISTRATION_INTERVAL_SECS
}

/// Per-host auctioneer settings, read from a TOML file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HostConfig {
    pub name: String,
    pub listen: String,
    /// Address advertised to the SLS; defaults to the bound address.
    pub endpoint: Option<String>,
    pub key: PathBuf,
    /// The bank's public key, hex.
    pub bank_key: String,
    pub users: PathBuf,
    pub cpu: f64,
    pub memory: Option<f64>,
    pub disk: Option<f64>,
    #[serde(default = "default_period")]
    pub period: f64,
    pub sls: Option<String>,
    #[serde(default = "default_registration")]
    pub registration_interval: u64,
    /// CSV file the per-period rows are appended to.
    pub trace: Option<PathBuf>,
}

impl HostConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg: HostConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if !(cfg.period.is_finite() && cfg.period > 0.0) {
            bail!("period must be positive");
        }
        Ok(cfg)
    }

    /// Relative paths are taken relative to the config file.
    fn relative_to(mut self, base: &Path) -> Self {
        for p in [&mut self.key, &mut self.users] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(t) = &mut self.trace {
            if t.is_relative() {
                *t = base.join(&*t);
            }
        }
        self
    }

    fn capacities(&self) -> Result<Vec<ResourceCapacity>> {
        [(Resource::Cpu, Some(self.cpu)), (Resource::Memory, self.memory), (Resource::Disk, self.disk)]
            .into_iter()
            .filter_map(|(r, c)| c.map(|c| (r, c)))
            .map(|(r, c)| ResourceCapacity::new(r, c, self.period).with_context(|| format!("{r} capacity")))
            .collect()
    }
}

const TRACE_HEADER: &str = "time,host,user,resource,share,charge,balance";

type RowSink = Box<dyn FnMut(&TraceRow) + Send>;

fn trace_writer(path: Option<&Path>) -> Result<RowSink> {
    let Some(path) = path else {
        return Ok(Box::new(|row: &TraceRow| {
            log::debug!("{} {} {} share={} charge={} balance={}", row.time, row.host, row.user, row.share, row.charge, row.balance)
        }));
    };
    let fresh = !path.exists() || std::fs::metadata(path)?.len() == 0;
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .with_context(|| format!("opening trace {}", path.display()))?;
    let mut out = BufWriter::new(file);
    if fresh {
        writeln!(out, "{TRACE_HEADER}")?;
        out.flush()?;
    }
    Ok(Box::new(move |row: &TraceRow| {
        let r = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.time, row.host, row.user, row.resource, row.share, row.charge, row.balance
        )
        .and_then(|_| out.flush());
        if let Err(e) = r {
            log::warn!("trace write failed: {e}");
        }
    }))
}

pub fn auctioneer(config: &Path) -> Result<()> {
    let base = config.parent().unwrap_or(Path::new("."));
    let cfg = HostConfig::load(config)?.relative_to(base);
    let keypair = Keypair::load(&cfg.key).with_context(|| format!("loading host key {}", cfg.key.display()))?;
    let bank_key = PublicKey::from_hex(&cfg.bank_key).context("bank_key")?;
    let users = load_users(&cfg.users)?;
    let host = Auctioneer::new(Identity::from(cfg.name.as_str()), keypair, cfg.capacities()?, bank_key, users)?;
    let state = Arc::new(Mutex::new(host));
    let on_row = trace_writer(cfg.trace.as_deref())?;
    let loop_cfg = AuctioneerLoop {
        period: Duration::from_secs_f64(cfg.period),
        sls: cfg.sls.clone(),
        registration_interval: Duration::from_secs(cfg.registration_interval),
    };
    let handler = Arc::new(AuctioneerHandler(state.clone()));
    run(&cfg.listen, handler, |addr| {
        let endpoint = cfg.endpoint.clone().unwrap_or_else(|| addr.to_owned());
        state.lock().expect("auctioneer lock poisoned").set_endpoint(endpoint);
        net::spawn_auctioneer_loop(state.clone(), loop_cfg, on_row);
    })
}
