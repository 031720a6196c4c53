//! The central bank: user and provider balances, signed transfers, receipts.
//!
//! State changes go through [`Bank::mint`] and [`Bank::transfer`]. When a
//! journal is attached, each accepted operation is appended to it as one
//! JSON line before it is applied, so [`Bank::open`] can rebuild the exact
//! ledger after a restart.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::Identity;
use crate::protocol::messages::{BalanceQuery, MintRequest, Signed};
use crate::protocol::validate::check_transfer;
use crate::protocol::{KeyRegistry, Keypair, PublicKey, Receipt, ReplayGuard, Reject, TransferRequest};
use crate::time::Timestamp;

const JOURNAL_FILE: &str = "journal.jsonl";
const SNAPSHOT_FILE: &str = "snapshot.json";

#[derive(Debug, Error)]
pub enum BankError {
    #[error("rejected: {0}")]
    Rejected(#[from] Reject),
    #[error("journal i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("journal line {line}: {source}")]
    Corrupt {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error("snapshot: {0}")]
    Snapshot(serde_json::Error),
}

impl BankError {
    /// The protocol reject reason, if this was a refusal rather than a fault.
    pub fn reject(&self) -> Option<Reject> {
        match self {
            BankError::Rejected(r) => Some(*r),
            _ => None,
        }
    }
}

/// One accepted ledger operation as written to the journal.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "kebab-case")]
pub enum JournalEntry {
    Mint {
        owner: Identity,
        amount: f64,
        at: Timestamp,
    },
    Transfer {
        sender: Identity,
        recipient: Identity,
        amount: f64,
        timestamp: Timestamp,
        digest: String,
        at: Timestamp,
    },
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    accounts: BTreeMap<Identity, f64>,
    total_issued: f64,
    recent: Vec<(String, Timestamp)>,
}

#[derive(Debug)]
struct Journal {
    dir: PathBuf,
    file: File,
}

impl Journal {
    fn append(&mut self, entry: &JournalEntry) -> Result<(), BankError> {
        let mut line = serde_json::to_vec(entry).map_err(BankError::Snapshot)?;
        line.push(b'\n');
        self.file.write_all(&line)?;
        self.file.flush()?;
        Ok(())
    }
}

#[derive(Debug)]
pub struct Bank {
    keypair: Keypair,
    registry: KeyRegistry,
    accounts: BTreeMap<Identity, f64>,
    total_issued: f64,
    guard: ReplayGuard,
    journal: Option<Journal>,
}

impl Bank {
    /// An in-memory bank with no persistence.
    pub fn new(keypair: Keypair, registry: KeyRegistry) -> Self {
        Bank {
            keypair,
            registry,
            accounts: BTreeMap::new(),
            total_issued: 0.0,
            guard: ReplayGuard::new(),
            journal: None,
        }
    }

    /// Loads the snapshot and journal under `dir` (creating it if needed)
    /// and keeps journaling there.
    pub fn open(keypair: Keypair, registry: KeyRegistry, dir: &Path) -> Result<Self, BankError> {
        fs::create_dir_all(dir)?;
        let mut bank = Bank::new(keypair, registry);
        let snap_path = dir.join(SNAPSHOT_FILE);
        if snap_path.exists() {
            let snap: Snapshot =
                serde_json::from_slice(&fs::read(&snap_path)?).map_err(BankError::Snapshot)?;
            bank.accounts = snap.accounts;
            bank.total_issued = snap.total_issued;
            for (digest, ts) in snap.recent {
                bank.guard.commit_recent(parse_digest(&digest)?, ts, ts);
            }
        }
        let journal_path = dir.join(JOURNAL_FILE);
        if journal_path.exists() {
            let reader = BufReader::new(File::open(&journal_path)?);
            for (i, line) in reader.lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: JournalEntry = serde_json::from_str(&line)
                    .map_err(|source| BankError::Corrupt { line: i + 1, source })?;
                bank.apply(&entry)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&journal_path)?;
        bank.journal = Some(Journal {
            dir: dir.to_path_buf(),
            file,
        });
        Ok(bank)
    }

    /// Writes a snapshot of the current ledger and truncates the journal.
    pub fn snapshot(&mut self) -> Result<(), BankError> {
        let Some(journal) = self.journal.as_mut() else {
            return Ok(());
        };
        let snap = Snapshot {
            accounts: self.accounts.clone(),
            total_issued: self.total_issued,
            recent: self
                .guard
                .recent_entries()
                .map(|(d, ts)| (hex::encode(d), *ts))
                .collect(),
        };
        let tmp = journal.dir.join(format!("{SNAPSHOT_FILE}.tmp"));
        fs::write(&tmp, serde_json::to_vec_pretty(&snap).map_err(BankError::Snapshot)?)?;
        fs::rename(&tmp, journal.dir.join(SNAPSHOT_FILE))?;
        journal.file = File::create(journal.dir.join(JOURNAL_FILE))?;
        Ok(())
    }

    pub fn public_key(&self) -> PublicKey {
        self.keypair.public()
    }

    pub fn keypair(&self) -> &Keypair {
        &self.keypair
    }

    pub fn registry(&self) -> &KeyRegistry {
        &self.registry
    }

    pub fn register_key(&mut self, owner: Identity, key: PublicKey) {
        self.registry.insert(owner, key);
    }

    /// Issues new credits to `owner`, creating the account if needed.
    pub fn mint(&mut self, owner: &Identity, amount: f64, now: Timestamp) -> Result<(), BankError> {
        if !(amount.is_finite() && amount > 0.0) {
            return Err(Reject::NonPositiveAmount.into());
        }
        let entry = JournalEntry::Mint {
            owner: owner.clone(),
            amount,
            at: now,
        };
        self.record(&entry)?;
        self.apply(&entry)
    }

    /// Mint authorized by a message signed with the bank's own key.
    pub fn handle_mint(&mut self, request: &MintRequest, now: Timestamp) -> Result<(), BankError> {
        if !request.verify(&self.keypair.public()) {
            return Err(Reject::Unauthorized.into());
        }
        let digest = request.digest();
        self.guard.check_recent(&digest, request.timestamp, now)?;
        self.mint(&request.owner, request.amount, now)?;
        self.guard.commit_recent(digest, request.timestamp, now);
        Ok(())
    }

    /// Validates and applies a transfer. A rejected transfer changes nothing.
    pub fn transfer(&mut self, request: &TransferRequest, now: Timestamp) -> Result<Receipt, BankError> {
        let digest = check_transfer(request, &self.guard, &self.registry, now)?;
        if self.balance_of(&request.sender) < request.amount {
            return Err(Reject::InsufficientFunds.into());
        }
        let entry = JournalEntry::Transfer {
            sender: request.sender.clone(),
            recipient: request.recipient.clone(),
            amount: request.amount,
            timestamp: request.timestamp,
            digest: hex::encode(digest),
            at: now,
        };
        self.record(&entry)?;
        self.apply(&entry)?;
        Ok(Receipt::issue(&self.keypair, request))
    }

    /// Answers a balance query signed by the account owner.
    pub fn handle_balance_query(&self, query: &BalanceQuery, now: Timestamp) -> Result<f64, Reject> {
        let key = self.registry.get(&query.owner).ok_or(Reject::UnknownSender)?;
        if !query.verify(key) {
            return Err(Reject::BadSignature);
        }
        if query.timestamp.abs_diff(now) > self.guard.skew_micros() {
            return Err(Reject::StaleTimestamp);
        }
        Ok(self.balance_of(&query.owner))
    }

    pub fn balance_of(&self, owner: &Identity) -> f64 {
        self.accounts.get(owner).copied().unwrap_or(0.0)
    }

    pub fn accounts(&self) -> &BTreeMap<Identity, f64> {
        &self.accounts
    }

    pub fn total_issued(&self) -> f64 {
        self.total_issued
    }

    pub fn total_balance(&self) -> f64 {
        self.accounts.values().sum()
    }

    fn record(&mut self, entry: &JournalEntry) -> Result<(), BankError> {
        match self.journal.as_mut() {
            Some(j) => j.append(entry),
            None => Ok(()),
        }
    }

    fn apply(&mut self, entry: &JournalEntry) -> Result<(), BankError> {
        match entry {
            JournalEntry::Mint { owner, amount, .. } => {
                *self.accounts.entry(owner.clone()).or_insert(0.0) += amount;
                self.total_issued += amount;
            }
            JournalEntry::Transfer {
                sender,
                recipient,
                amount,
                timestamp,
                digest,
                at,
            } => {
                *self.accounts.entry(sender.clone()).or_insert(0.0) -= amount;
                *self.accounts.entry(recipient.clone()).or_insert(0.0) += amount;
                self.guard.commit_recent(parse_digest(digest)?, *timestamp, *at);
            }
        }
        Ok(())
    }
}

fn parse_digest(text: &str) -> Result<[u8; 32], BankError> {
    let mut out = [0u8; 32];
    hex::decode_to_slice(text, &mut out).map_err(|e| {
        BankError::Io(std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    })?;
    Ok(out)
}
