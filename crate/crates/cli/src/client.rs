//! User commands against live bank, SLS and auctioneer services.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use anyhow::{anyhow, bail, Context, Result};
use serde::Serialize;
use tycoon_core::agent::{best_response, best_response_with_threshold, BidVector, HostMarketView};
use tycoon_core::net;
use tycoon_core::protocol::messages::{AccountStatus, BalanceQuery, MintRequest, StatusQuery};
use tycoon_core::protocol::{
    CreateAccountMessage, FundMessage, Keypair, Message, Receipt, Reject, SetIntervalMessage, TransferRequest,
};
use tycoon_core::sls::{HostAdvertisement, QueryFilter};
use tycoon_core::{Identity, Resource, Timestamp};

use crate::config::{check_endpoint, CliConfig};
use crate::fanout::{exit_code, fan_out};

/// Everything a user command needs.
pub struct Session {
    pub cfg: CliConfig,
    pub user: Identity,
    pub key: Keypair,
}

/// Result of one host's part of a command.
#[derive(Debug, Serialize)]
pub struct HostOutcome {
    pub host: String,
    pub ok: bool,
    pub detail: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<AccountStatus>,
}

impl HostOutcome {
    fn from_result(host: &str, r: Result<(String, Option<AccountStatus>)>) -> Self {
        match r {
            Ok((detail, status)) => HostOutcome {
                host: host.to_owned(),
                ok: true,
                detail,
                status,
            },
            Err(e) => HostOutcome {
                host: host.to_owned(),
                ok: false,
                detail: format!("{e:#}"),
                status: None,
            },
        }
    }
}

/// Prints per-host outcomes and returns the exit code.
pub fn report(outcomes: &[HostOutcome], json: bool) -> u8 {
    if json {
        println!("{}", serde_json::to_string_pretty(outcomes).expect("outcomes serialize"));
    } else {
        for o in outcomes {
            println!("{:<16} {:<6} {}", o.host, if o.ok { "ok" } else { "FAILED" }, o.detail);
            if let Some(s) = &o.status {
                println!("  {:<8} {:>14} {:>12} {:>10} {:>12}  evicted", "resource", "balance", "interval", "share", "charge/s");
                for r in &s.resources {
                    println!(
                        "  {:<8} {:>14.6} {:>12} {:>10.6} {:>12.6}  {}",
                        r.resource.as_str(),
                        r.balance,
                        r.interval,
                        r.last_share,
                        r.last_charge,
                        if r.evicted { "yes" } else { "no" }
                    );
                }
            }
        }
    }
    exit_code(outcomes.iter().filter(|o| o.ok).count(), outcomes.len())
}

/// Sends `msg` and turns a protocol reject into an error carrying the
/// reason code as sent.
pub fn call(endpoint: &str, msg: &Message, cfg: &CliConfig) -> Result<Message> {
    let reply = net::request(endpoint, msg, cfg.timeout).with_context(|| format!("contacting {endpoint}"))?;
    match reply {
        Message::Reject { reason, detail } if detail.is_empty() => bail!("rejected: {reason}"),
        Message::Reject { reason, detail } => bail!("rejected: {reason} ({detail})"),
        other => Ok(other),
    }
}

/// A nonce larger than any this user has sent before from this clock.
fn fresh_nonce() -> u64 {
    Timestamp::now().as_micros()
}

impl Session {
    /// Maps host names to endpoints: the config's `[hosts]` table first,
    /// then `name@address` arguments, then the SLS.
    pub fn resolve_hosts(&self, names: &[String]) -> Vec<(Identity, Result<String>)> {
        let mut out = Vec::with_capacity(names.len());
        let mut ads: Option<Result<Vec<HostAdvertisement>>> = None;
        for name in names {
            if let Some(ep) = self.cfg.hosts.get(name) {
                out.push((Identity::from(name.as_str()), Ok(ep.clone())));
                continue;
            }
            if let Some((id, ep)) = name.split_once('@') {
                let r = check_endpoint(ep).map(|_| ep.to_owned());
                out.push((Identity::from(id), r));
                continue;
            }
            let listing = ads.get_or_insert_with(|| self.query_sls(&QueryFilter::default()));
            let r = match listing {
                Ok(list) => list
                    .iter()
                    .find(|a| a.host.as_str() == name)
                    .map(|a| a.endpoint.clone())
                    .ok_or_else(|| anyhow!("host {name} is not configured and not registered with the SLS")),
                Err(e) => Err(anyhow!("cannot resolve host {name}: {e:#}")),
            };
            out.push((Identity::from(name.as_str()), r));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    pub fn query_sls(&self, filter: &QueryFilter) -> Result<Vec<HostAdvertisement>> {
        match call(self.cfg.sls()?, &Message::SlsQuery(filter.clone()), &self.cfg)? {
            Message::SlsReply(ads) => Ok(ads.into_iter().filter(|a| a.is_valid()).collect()),
            other => bail!("unexpected {} reply from the SLS", other.kind()),
        }
    }

    pub fn bank_balance(&self) -> Result<f64> {
        let q = BalanceQuery::new_signed(&self.key, self.user.clone(), Timestamp::now());
        match call(self.cfg.bank()?, &Message::BalanceQuery(q), &self.cfg)? {
            Message::BalanceReply { balance, .. } => Ok(balance),
            other => bail!("unexpected {} reply from the bank", other.kind()),
        }
    }

    fn transfer(&self, host: &Identity, amount: f64) -> Result<Receipt> {
        let req = TransferRequest::new_signed(&self.key, self.user.clone(), host.clone(), amount, Timestamp::now());
        match call(self.cfg.bank()?, &Message::Transfer(req), &self.cfg).context("bank transfer")? {
            Message::Receipt(r) => Ok(r),
            other => bail!("unexpected {} reply from the bank", other.kind()),
        }
    }

    fn status(&self, host: &Identity, endpoint: &str) -> Result<AccountStatus> {
        let q = StatusQuery::new_signed(&self.key, self.user.clone(), host.clone(), Timestamp::now());
        match call(endpoint, &Message::StatusQuery(q), &self.cfg)? {
            Message::StatusReply(s) => Ok(s),
            other => bail!("unexpected {} reply", other.kind()),
        }
    }

    fn expect_ack(endpoint: &str, msg: &Message, cfg: &CliConfig) -> Result<String> {
        match call(endpoint, msg, cfg)? {
            Message::Ack(text) => Ok(text),
            other => bail!("unexpected {} reply", other.kind()),
        }
    }

    /// Runs `op` on every resolved host in parallel.
    fn per_host<F>(&self, names: &[String], op: F) -> Vec<HostOutcome>
    where
        F: Fn(&Identity, &str) -> Result<(String, Option<AccountStatus>)> + Sync,
    {
        let hosts = self.resolve_hosts(names);
        fan_out(&hosts, self.cfg.parallelism, |(host, ep)| {
            let r = match ep {
                Ok(ep) => op(host, ep),
                Err(e) => Err(anyhow!("{e:#}")),
            };
            HostOutcome::from_result(host.as_str(), r)
        })
    }

    /// Opens an account on each host with the given credits per resource.
    pub fn create_account(&self, hosts: &[String], amounts: [f64; 3], interval: f64) -> Result<Vec<HostOutcome>> {
        if amounts.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            bail!("initial credits must be non-negative numbers");
        }
        let per_host: f64 = amounts.iter().sum();
        if per_host <= 0.0 {
            bail!("at least one resource needs a positive amount");
        }
        let need = per_host * hosts.len() as f64;
        let have = self.bank_balance()?;
        if have < need {
            bail!("bank balance {have} does not cover {need} credits for {} host(s); nothing was transferred", hosts.len());
        }
        Ok(self.per_host(hosts, |host, ep| {
            // find dead hosts and existing accounts before any credits move
            match self.status(host, ep) {
                Ok(_) => bail!("an account already exists on {host}"),
                Err(e) if format!("{e:#}").contains(Reject::UnknownAccount.code()) => {}
                Err(e) => return Err(e),
            }
            let base = fresh_nonce();
            let mut funds = Vec::new();
            for (i, (r, amount)) in Resource::ALL.into_iter().zip(amounts).enumerate() {
                if amount > 0.0 {
                    let receipt = self.transfer(host, amount)?;
                    funds.push(FundMessage::new_signed(&self.key, r, base + i as u64, interval, receipt));
                }
            }
            let text = Self::expect_ack(ep, &Message::CreateAccount(CreateAccountMessage { funds }), &self.cfg)?;
            Ok((text, None))
        }))
    }

    pub fn fund(&self, host: &str, resource: Resource, amount: f64, interval: f64) -> Vec<HostOutcome> {
        self.per_host(&[host.to_owned()], |host, ep| {
            let receipt = self.transfer(host, amount)?;
            let msg = FundMessage::new_signed(&self.key, resource, fresh_nonce(), interval, receipt);
            Ok((Self::expect_ack(ep, &Message::Fund(msg), &self.cfg)?, None))
        })
    }

    pub fn set_interval(&self, host: &str, resource: Resource, interval: f64) -> Vec<HostOutcome> {
        self.per_host(&[host.to_owned()], |host, ep| {
            let msg =
                SetIntervalMessage::new_signed(&self.key, self.user.clone(), host.clone(), resource, fresh_nonce(), interval);
            Ok((Self::expect_ack(ep, &Message::SetInterval(msg), &self.cfg)?, None))
        })
    }

    pub fn get_status(&self, hosts: &[String]) -> Vec<HostOutcome> {
        self.per_host(hosts, |host, ep| {
            let s = self.status(host, ep)?;
            Ok((format!("{} resource(s)", s.resources.len()), Some(s)))
        })
    }
}

/// Options for the `bid` command.
#[derive(Debug, Clone)]
pub struct BidOptions {
    pub budget: f64,
    pub threshold: Option<f64>,
    pub interval: f64,
    pub resource: Resource,
    /// Per-host weights; hosts not listed are valued by their capacity.
    pub weights: BTreeMap<String, f64>,
    pub dry_run: bool,
    pub yes: bool,
}

#[derive(Debug, Serialize)]
pub struct PlannedBid {
    pub host: String,
    pub weight: f64,
    pub others_bid: f64,
    pub bid: f64,
    pub credits: f64,
}

#[derive(Debug, Serialize)]
pub struct BidReport {
    pub budget: f64,
    pub utility: f64,
    pub interval: f64,
    pub plan: Vec<PlannedBid>,
    pub executed: Vec<HostOutcome>,
}

/// Best response, or its thresholded variant when `threshold` is set.
pub fn plan_bids(views: &[HostMarketView], budget: f64, threshold: Option<f64>) -> Result<BidVector> {
    Ok(match threshold {
        Some(t) => best_response_with_threshold(views, budget, t)?,
        None => best_response(views, budget)?,
    })
}

impl Session {
    /// Builds market views from the SLS and each host's view of our own
    /// last charge, then plans and (unless dry-running) places the bids.
    pub fn bid(&self, opts: &BidOptions, confirm: impl FnOnce(&BidReport) -> Result<bool>) -> Result<BidReport> {
        let filter = QueryFilter {
            resource: Some(opts.resource),
            min_capacity: None,
        };
        let ads = self.query_sls(&filter)?;
        if ads.is_empty() {
            bail!("the SLS knows no live hosts selling {}", opts.resource);
        }
        let own: Vec<f64> = fan_out(&ads, self.cfg.parallelism, |ad| {
            self.status(&ad.host, &ad.endpoint)
                .ok()
                .and_then(|s| s.resource(opts.resource).map(|r| r.last_charge))
                .unwrap_or(0.0)
        });
        let views: Vec<HostMarketView> = ads
            .iter()
            .zip(&own)
            .filter_map(|(ad, own)| {
                let cap = ad.resource(opts.resource)?.capacity;
                let w = opts.weights.get(ad.host.as_str()).copied().unwrap_or(cap);
                HostMarketView::from_advertisement(ad, opts.resource, w, *own)
            })
            .collect();
        let plan = plan_bids(&views, opts.budget, opts.threshold)?;
        let mut report = BidReport {
            budget: opts.budget,
            utility: plan.utility,
            interval: opts.interval,
            plan: views
                .iter()
                .map(|v| {
                    let x = plan.bids.get(&v.host).copied().unwrap_or(0.0);
                    PlannedBid {
                        host: v.host.to_string(),
                        weight: v.weight,
                        others_bid: v.others_bid,
                        bid: x,
                        credits: x * opts.interval,
                    }
                })
                .collect(),
            executed: Vec::new(),
        };
        report.plan.sort_by(|a, b| a.host.cmp(&b.host));
        if opts.dry_run || !(opts.yes || confirm(&report)?) {
            return Ok(report);
        }
        let funded: Vec<&PlannedBid> = report.plan.iter().filter(|p| p.bid > 0.0).collect();
        let endpoints: BTreeMap<&str, &str> = ads.iter().map(|a| (a.host.as_str(), a.endpoint.as_str())).collect();
        let executed = fan_out(&funded, self.cfg.parallelism, |p| {
            let host = Identity::from(p.host.as_str());
            let r = (|| {
                let receipt = self.transfer(&host, p.credits)?;
                let msg = FundMessage::new_signed(&self.key, opts.resource, fresh_nonce(), opts.interval, receipt);
                Ok((Self::expect_ack(endpoints[p.host.as_str()], &Message::Fund(msg), &self.cfg)?, None))
            })();
            HostOutcome::from_result(&p.host, r)
        });
        report.executed = executed;
        Ok(report)
    }
}

pub fn print_plan(report: &BidReport) {
    println!("budget {} credits/s, interval {}s, expected utility {:.6}", report.budget, report.interval, report.utility);
    println!("{:<16} {:>10} {:>12} {:>12} {:>12}", "host", "weight", "others/s", "bid/s", "credits");
    for p in &report.plan {
        println!("{:<16} {:>10.4} {:>12.6} {:>12.6} {:>12.4}", p.host, p.weight, p.others_bid, p.bid, p.credits);
    }
}

/// Asks on the terminal whether to go ahead.
pub fn ask_on_terminal(report: &BidReport) -> Result<bool> {
    print_plan(report);
    print!("place these bids? [y/N] ");
    std::io::stdout().flush()?;
    let mut line = String::new();
    std::io::stdin().lock().read_line(&mut line)?;
    Ok(matches!(line.trim(), "y" | "Y" | "yes"))
}

/// Mints credits into `owner`'s bank account, signed with the bank's key.
pub fn admin_mint(cfg: &CliConfig, bank_key: &Keypair, owner: &str, amount: f64) -> Result<String> {
    let req = MintRequest::new_signed(bank_key, Identity::from(owner), amount, Timestamp::now());
    Session::expect_ack(cfg.bank()?, &Message::Mint(req), cfg)
}
