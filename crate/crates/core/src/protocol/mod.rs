//! Authenticated messages exchanged between users, the bank, auctioneers and
//! the service locator, plus the checks each receiver performs.
//!
//! Every message travels as `[type tag][version][field]*`, where each field
//! is a big-endian `u32` length followed by that many bytes. Signatures
//! cover the bytes up to (not including) the signature field, so the tag
//! and version are signed too. See `docs/WIRE.md` for the full layout.

pub mod crypto;
pub mod encoding;
pub mod guard;
pub mod messages;
pub mod validate;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use crypto::{KeyRegistry, Keypair, PublicKey, Signature};
pub use guard::ReplayGuard;
pub use messages::{
    CreateAccountMessage, FundMessage, Message, Receipt, SetIntervalMessage, TransferRequest,
};
pub use validate::{validate_fund, validate_set_interval, validate_transfer, Verifier};

/// Current protocol version byte.
pub const PROTOCOL_VERSION: u8 = 1;

/// Why a receiver refused a message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reject {
    BadSignature,
    Replay,
    UnknownSender,
    NonPositiveAmount,
    StaleTimestamp,
    WrongRecipient,
    StaleNonce,
    ReceiptWrongPayee,
    BadBankSignature,
    BadSenderSignature,
    ReceiptReplay,
    InsufficientFunds,
    UnknownAccount,
    DuplicateAccount,
    InvalidInterval,
    UnknownResource,
    Unauthorized,
    Malformed,
}

impl Reject {
    pub const ALL: [Reject; 18] = [
        Reject::BadSignature,
        Reject::Replay,
        Reject::UnknownSender,
        Reject::NonPositiveAmount,
        Reject::StaleTimestamp,
        Reject::WrongRecipient,
        Reject::StaleNonce,
        Reject::ReceiptWrongPayee,
        Reject::BadBankSignature,
        Reject::BadSenderSignature,
        Reject::ReceiptReplay,
        Reject::InsufficientFunds,
        Reject::UnknownAccount,
        Reject::DuplicateAccount,
        Reject::InvalidInterval,
        Reject::UnknownResource,
        Reject::Unauthorized,
        Reject::Malformed,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Reject::BadSignature => "bad-signature",
            Reject::Replay => "replay",
            Reject::UnknownSender => "unknown-sender",
            Reject::NonPositiveAmount => "non-positive-amount",
            Reject::StaleTimestamp => "stale-timestamp",
            Reject::WrongRecipient => "wrong-recipient",
            Reject::StaleNonce => "stale-nonce",
            Reject::ReceiptWrongPayee => "receipt-wrong-payee",
            Reject::BadBankSignature => "bad-bank-signature",
            Reject::BadSenderSignature => "bad-sender-signature",
            Reject::ReceiptReplay => "receipt-replay",
            Reject::InsufficientFunds => "insufficient-funds",
            Reject::UnknownAccount => "unknown-account",
            Reject::DuplicateAccount => "duplicate-account",
            Reject::InvalidInterval => "invalid-interval",
            Reject::UnknownResource => "unknown-resource",
            Reject::Unauthorized => "unauthorized",
            Reject::Malformed => "malformed",
        }
    }
}

impl fmt::Display for Reject {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl std::error::Error for Reject {}

impl FromStr for Reject {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Reject::ALL.iter().copied().find(|r| r.code() == s).ok_or(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reject_codes_round_trip() {
        for r in Reject::ALL {
            assert_eq!(r.code().parse::<Reject>(), Ok(r));
        }
    }
}
