//! `tycoon`: user commands, services and the scenario runner.

mod client;
mod config;
mod fanout;
mod serve;
mod sim;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use tycoon_core::auctioneer::DEFAULT_INTERVAL_SECS;
use tycoon_core::protocol::Keypair;
use tycoon_core::sls::DEFAULT_EXPIRY_SECS;
use tycoon_core::Resource;

use crate::client::{BidOptions, Session};
use crate::config::{CliConfig, FileConfig, Overrides};

#[derive(Debug, Parser)]
#[command(name = "tycoon", version, about = "Market-based resource allocation: client, services and simulator")]
struct Cli {
    /// Config file (default: ~/.config/tycoon/config.toml if present).
    #[arg(long, global = true, env = "TYCOON_CONFIG")]
    config: Option<PathBuf>,
    /// Bank endpoint, host:port.
    #[arg(long, global = true, env = "TYCOON_BANK")]
    bank: Option<String>,
    /// Service location service endpoint, host:port.
    #[arg(long, global = true, env = "TYCOON_SLS")]
    sls: Option<String>,
    /// Your identity.
    #[arg(long, global = true, env = "TYCOON_USER")]
    user: Option<String>,
    /// File holding your hex-encoded secret key.
    #[arg(long, global = true, env = "TYCOON_KEY")]
    key: Option<PathBuf>,
    /// Per-request timeout in seconds.
    #[arg(long, global = true, env = "TYCOON_TIMEOUT")]
    timeout: Option<f64>,
    /// How many hosts to contact at once.
    #[arg(long, global = true, env = "TYCOON_PARALLEL")]
    parallel: Option<usize>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Open accounts: `create_account HOST... CPU MEMORY DISK`.
    #[command(name = "create_account", alias = "create-account")]
    CreateAccount {
        /// One or more hosts followed by the initial credits for cpu, memory and disk.
        #[arg(required = true, num_args = 4.., value_name = "HOST... CPU MEMORY DISK")]
        args: Vec<String>,
        /// Bid interval for the new accounts, in seconds.
        #[arg(long, default_value_t = DEFAULT_INTERVAL_SECS)]
        interval: f64,
    },
    /// Add credits to an account and set its bid interval.
    Fund {
        host: String,
        resource: Resource,
        amount: f64,
        interval: f64,
    },
    /// Change how fast an account's balance is spent.
    #[command(name = "set_interval", alias = "set-interval")]
    SetInterval { host: String, resource: Resource, interval: f64 },
    /// Show balance, interval and last share and charge per resource.
    #[command(name = "get_status", alias = "get-status")]
    GetStatus {
        #[arg(required = true)]
        hosts: Vec<String>,
    },
    /// Show your bank balance.
    Balance,
    /// Let the agent spread a budget over the hosts the SLS knows.
    Bid {
        /// Total spend rate, credits per second.
        #[arg(long)]
        budget: f64,
        /// Skip hosts whose marginal value would fall below this.
        #[arg(long)]
        threshold: Option<f64>,
        /// Bid interval in seconds; each host is funded bid * interval credits.
        #[arg(long, default_value_t = 1000.0)]
        interval: f64,
        #[arg(long, default_value = "cpu")]
        resource: Resource,
        /// Value of a host, as HOST=WEIGHT. Unlisted hosts are valued by capacity.
        #[arg(long = "weight", value_name = "HOST=WEIGHT")]
        weight: Vec<String>,
        /// TOML file of `host = weight` lines.
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Print the plan without placing any bids.
        #[arg(long)]
        dry_run: bool,
        /// Place the bids without asking.
        #[arg(long, short = 'y')]
        yes: bool,
    },
    /// Run a scenario file or a bundled scenario in virtual time.
    Sim {
        /// Path to a scenario file, or the name of a bundled scenario.
        #[arg(required_unless_present = "list")]
        scenario: Option<String>,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the trace CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the event log (JSON lines) here.
        #[arg(long)]
        events: Option<PathBuf>,
        /// List the bundled scenarios.
        #[arg(long)]
        list: bool,
    },
    /// Run a service.
    #[command(subcommand)]
    Serve(ServeCommand),
    /// Create a signing key.
    Keygen {
        #[arg(long)]
        out: PathBuf,
        /// Overwrite an existing key file.
        #[arg(long)]
        force: bool,
    },
    /// Operator commands.
    #[command(subcommand)]
    Admin(AdminCommand),
}

#[derive(Debug, Subcommand)]
enum ServeCommand {
    Bank {
        #[arg(long, default_value = "127.0.0.1:7000")]
        listen: String,
        /// The bank's secret key file.
        #[arg(long = "bank-key")]
        bank_key: PathBuf,
        /// TOML file of `user = "hex public key"` lines.
        #[arg(long)]
        users: PathBuf,
        /// Directory for the journal and snapshot; in-memory when absent.
        #[arg(long)]
        journal: Option<PathBuf>,
    },
    Sls {
        #[arg(long, default_value = "127.0.0.1:7001")]
        listen: String,
        /// Seconds without re-registration before a host is dropped.
        #[arg(long, default_value_t = DEFAULT_EXPIRY_SECS)]
        expiry: u64,
    },
    Auctioneer {
        /// Host config file.
        #[arg(long = "host-config")]
        host_config: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
enum AdminCommand {
    /// Create credits in a user's bank account.
    Mint {
        owner: String,
        amount: f64,
        #[arg(long = "bank-key")]
        bank_key: PathBuf,
    },
}

/// Splits `HOST... CPU MEMORY DISK`.
fn split_create_args(args: &[String]) -> Result<(Vec<String>, [f64; 3])> {
    if args.len() < 4 {
        bail!("expected at least one host followed by three amounts");
    }
    let (hosts, nums) = args.split_at(args.len() - 3);
    let mut amounts = [0.0; 3];
    for (slot, text) in amounts.iter_mut().zip(nums) {
        *slot = text.parse().with_context(|| format!("`{text}` is not an amount"))?;
    }
    Ok((hosts.to_vec(), amounts))
}

fn parse_weights(pairs: &[String], file: Option<&Path>) -> Result<BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, f64> = match file {
        Some(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        None => BTreeMap::new(),
    };
    for pair in pairs {
        let (host, w) = pair
            .split_once('=')
            .with_context(|| format!("`{pair}` is not HOST=WEIGHT"))?;
        out.insert(host.to_owned(), w.parse().with_context(|| format!("bad weight in `{pair}`"))?);
    }
    if let Some((h, w)) = out.iter().find(|(_, w)| !(w.is_finite() && **w >= 0.0)) {
        bail!("weight for {h} must be a non-negative number, got {w}");
    }
    Ok(out)
}

fn config(cli: &Cli) -> Result<CliConfig> {
    let file = FileConfig::discover(cli.config.as_deref())?;
    let over = Overrides {
        bank: cli.bank.clone(),
        sls: cli.sls.clone(),
        user: cli.user.clone(),
        key: cli.key.clone(),
        timeout_secs: cli.timeout,
        parallelism: cli.parallel,
    };
    CliConfig::resolve(file, over)
}

fn session(cli: &Cli) -> Result<Session> {
    let cfg = config(cli)?;
    let (user, key) = cfg.credentials()?;
    Ok(Session { cfg, user, key })
}

fn run(cli: Cli) -> Result<u8> {
    let json = cli.json;
    match &cli.command {
        Command::CreateAccount { args, interval } => {
            let (hosts, amounts) = split_create_args(args)?;
            let outcomes = session(&cli)?.create_account(&hosts, amounts, *interval)?;
            Ok(client::report(&outcomes, json))
        }
        Command::Fund {
            host,
            resource,
            amount,
            interval,
        } => Ok(client::report(&session(&cli)?.fund(host, *resource, *amount, *interval), json)),
        Command::SetInterval { host, resource, interval } => {
            Ok(client::report(&session(&cli)?.set_interval(host, *resource, *interval), json))
        }
        Command::GetStatus { hosts } => Ok(client::report(&session(&cli)?.get_status(hosts), json)),
        Command::Balance => {
            let s = session(&cli)?;
            let balance = s.bank_balance()?;
            if json {
                println!("{}", serde_json::json!({ "owner": s.user, "balance": balance }));
            } else {
                println!("{} {balance}", s.user);
            }
            Ok(0)
        }
        Command::Bid {
            budget,
            threshold,
            interval,
            resource,
            weight,
            weights,
            dry_run,
            yes,
        } => {
            let opts = BidOptions {
                budget: *budget,
                threshold: *threshold,
                interval: *interval,
                resource: *resource,
                weights: parse_weights(weight, weights.as_deref())?,
                dry_run: *dry_run,
                yes: *yes,
            };
            if !(interval.is_finite() && *interval > 0.0) {
                bail!("interval must be positive");
            }
            let report = session(&cli)?.bid(&opts, client::ask_on_terminal)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report)?);
            } else {
                client::print_plan(&report);
                if !report.executed.is_empty() {
                    println!();
                    client::report(&report.executed, false);
                }
            }
            let ok = report.executed.iter().filter(|o| o.ok).count();
            Ok(fanout::exit_code(ok, report.executed.len()))
        }
        Command::Sim {
            scenario,
            seed,
            out,
            events,
            list,
        } => {
            if *list {
                for (name, text) in sim::BUNDLED {
                    let first = text.lines().next().unwrap_or("").trim_start_matches('#').trim();
                    println!("{name:<16} {first}");
                }
                return Ok(0);
            }
            let arg = scenario.as_deref().expect("clap requires a scenario");
            let sc = sim::load(arg)?;
            let seed = seed.unwrap_or(sc.seed);
            let summary = sim::run(
                &sc,
                seed,
                sim::Outputs {
                    csv: out.as_deref(),
                    events: events.as_deref(),
                },
            )?;
            if json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                sim::print(&summary);
            }
            Ok(if summary.ok() { 0 } else { 1 })
        }
        Command::Serve(cmd) => {
            match cmd {
                ServeCommand::Bank {
                    listen,
                    bank_key,
                    users,
                    journal,
                } => serve::bank(listen, bank_key, users, journal.as_deref())?,
                ServeCommand::Sls { listen, expiry } => serve::sls(listen, *expiry)?,
                ServeCommand::Auctioneer { host_config } => serve::auctioneer(host_config)?,
            }
            Ok(0)
        }
        Command::Keygen { out, force } => {
            if out.exists() && !force {
                bail!("{} already exists; pass --force to replace it", out.display());
            }
            let key = Keypair::generate();
            std::fs::write(out, key.seed_hex() + "\n").with_context(|| format!("writing {}", out.display()))?;
            let public = key.public().to_hex();
            if json {
                println!("{}", serde_json::json!({ "key": out, "public": public }));
            } else {
                println!("{public}");
            }
            Ok(0)
        }
        Command::Admin(AdminCommand::Mint { owner, amount, bank_key }) => {
            let cfg = config(&cli)?;
            let key = Keypair::load(bank_key).with_context(|| format!("loading {}", bank_key.display()))?;
            let text = client::admin_mint(&cfg, &key, owner, *amount)?;
            if json {
                println!("{}", serde_json::json!({ "ok": true, "detail": text }));
            } else {
                println!("{text}");
            }
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
