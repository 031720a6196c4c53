//! Client settings: a TOML file, overridden by `TYCOON_*` environment
//! variables, overridden by command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use serde::Deserialize;
use tycoon_core::protocol::Keypair;
use tycoon_core::Identity;

pub const DEFAULT_TIMEOUT_SECS: f64 = 10.0;
pub const DEFAULT_PARALLELISM: usize = 16;

/// What the config file may contain. Every field is optional.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub bank: Option<String>,
    pub sls: Option<String>,
    pub user: Option<String>,
    pub key: Option<PathBuf>,
    pub timeout_secs: Option<f64>,
    pub parallelism: Option<usize>,
    /// Host name to `address:port`, for hosts not found through the SLS.
    #[serde(default)]
    pub hosts: BTreeMap<String, String>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    /// The file named by `explicit`, else `~/.config/tycoon/config.toml`
    /// when it exists, else nothing.
    pub fn discover(explicit: Option<&Path>) -> Result<Self> {
        if let Some(p) = explicit {
            return FileConfig::load(p);
        }
        match std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".config/tycoon/config.toml")) {
            Some(p) if p.exists() => FileConfig::load(&p),
            _ => Ok(FileConfig::default()),
        }
    }
}

/// Values given on the command line or through the environment.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub bank: Option<String>,
    pub sls: Option<String>,
    pub user: Option<String>,
    pub key: Option<PathBuf>,
    pub timeout_secs: Option<f64>,
    pub parallelism: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct CliConfig {
    pub bank: Option<String>,
    pub sls: Option<String>,
    pub user: Option<Identity>,
    pub key: Option<PathBuf>,
    pub timeout: Duration,
    pub parallelism: usize,
    pub hosts: BTreeMap<String, String>,
}

impl CliConfig {
    pub fn resolve(file: FileConfig, over: Overrides) -> Result<Self> {
        let bank = over.bank.or(file.bank);
        let sls = over.sls.or(file.sls);
        for (what, ep) in [("bank", &bank), ("sls", &sls)] {
            if let Some(ep) = ep {
                check_endpoint(ep).with_context(|| format!("{what} endpoint"))?;
            }
        }
        for (name, ep) in &file.hosts {
            check_endpoint(ep).with_context(|| format!("endpoint for host {name}"))?;
        }
        let timeout_secs = over.timeout_secs.or(file.timeout_secs).unwrap_or(DEFAULT_TIMEOUT_SECS);
        if !(timeout_secs.is_finite() && timeout_secs > 0.0) {
            bail!("timeout must be a positive number of seconds, got {timeout_secs}");
        }
        let parallelism = over.parallelism.or(file.parallelism).unwrap_or(DEFAULT_PARALLELISM);
        if parallelism == 0 {
            bail!("parallelism must be at least 1");
        }
        Ok(CliConfig {
            bank,
            sls,
            user: over.user.or(file.user).map(Identity::from),
            key: over.key.or(file.key),
            timeout: Duration::from_secs_f64(timeout_secs),
            parallelism,
            hosts: file.hosts,
        })
    }

    pub fn bank(&self) -> Result<&str> {
        self.bank
            .as_deref()
            .context("no bank endpoint configured (set `bank` in the config file, TYCOON_BANK or --bank)")
    }

    pub fn sls(&self) -> Result<&str> {
        self.sls
            .as_deref()
            .context("no SLS endpoint configured (set `sls` in the config file, TYCOON_SLS or --sls)")
    }

    /// The user's identity and signing key.
    pub fn credentials(&self) -> Result<(Identity, Keypair)> {
        let user = self
            .user
            .clone()
            .context("no user configured (set `user` in the config file, TYCOON_USER or --user)")?;
        let path = self
            .key
            .as_deref()
            .context("no key file configured (set `key` in the config file, TYCOON_KEY or --key)")?;
        let key = Keypair::load(path).with_context(|| format!("loading key {}", path.display()))?;
        Ok((user, key))
    }
}

/// Accepts `host:port` with a numeric port.
pub fn check_endpoint(ep: &str) -> Result<()> {
    let Some((host, port)) = ep.rsplit_once(':') else {
        bail!("`{ep}` is not of the form host:port");
    };
    if host.is_empty() {
        bail!("`{ep}` has an empty host part");
    }
    port.parse::<u16>()
        .with_context(|| format!("`{ep}` has an invalid port"))?;
    Ok(())
}
