//! Receiver-side checks for transfers, fund and set_interval messages.
//!
//! The `check_*` functions are pure with respect to the guard; the
//! `validate_*` wrappers commit to the guard only when every check passes.

use super::crypto::{KeyRegistry, PublicKey};
use super::guard::ReplayGuard;
use super::messages::{FundMessage, SetIntervalMessage, Signed, TransferRequest};
use super::Reject;
use crate::ids::Identity;
use crate::time::Timestamp;

/// Checks a bank transfer request; returns its digest on success.
pub fn check_transfer(
    request: &TransferRequest,
    guard: &ReplayGuard,
    registry: &KeyRegistry,
    now: Timestamp,
) -> Result<[u8; 32], Reject> {
    let key = registry.get(&request.sender).ok_or(Reject::UnknownSender)?;
    if !request.verify(key) {
        return Err(Reject::BadSignature);
    }
    if !(request.amount.is_finite() && request.amount > 0.0) {
        return Err(Reject::NonPositiveAmount);
    }
    let digest = request.digest();
    guard.check_recent(&digest, request.timestamp, now)?;
    Ok(digest)
}

pub fn validate_transfer(
    request: &TransferRequest,
    guard: &mut ReplayGuard,
    registry: &KeyRegistry,
    now: Timestamp,
) -> Result<(), Reject> {
    let digest = check_transfer(request, guard, registry, now)?;
    guard.commit_recent(digest, request.timestamp, now);
    Ok(())
}

/// What an auctioneer needs to judge incoming fund and set_interval messages.
#[derive(Clone, Copy, Debug)]
pub struct Verifier<'a> {
    pub me: &'a Identity,
    pub bank_key: &'a PublicKey,
    pub users: &'a KeyRegistry,
}

/// Runs the fund checks in order: recipient, nonce, receipt payee, bank
/// signature, sender signature, then amount, interval and receipt freshness.
/// Returns the receipt digest.
pub fn check_fund(
    message: &FundMessage,
    guard: &ReplayGuard,
    verifier: &Verifier<'_>,
    now: Timestamp,
) -> Result<[u8; 32], Reject> {
    if &message.recipient != verifier.me {
        return Err(Reject::WrongRecipient);
    }
    guard.check_nonce(&message.sender, &message.recipient, message.nonce)?;
    let receipt = &message.receipt;
    if &receipt.recipient != verifier.me || receipt.sender != message.sender {
        return Err(Reject::ReceiptWrongPayee);
    }
    if !receipt.verify(verifier.bank_key) {
        return Err(Reject::BadBankSignature);
    }
    let sender_key = verifier
        .users
        .get(&message.sender)
        .ok_or(Reject::UnknownSender)?;
    if !message.verify(sender_key) {
        return Err(Reject::BadSenderSignature);
    }
    if !(receipt.amount.is_finite() && receipt.amount > 0.0) {
        return Err(Reject::NonPositiveAmount);
    }
    if !(message.interval.is_finite() && message.interval > 0.0) {
        return Err(Reject::InvalidInterval);
    }
    let digest = receipt.digest();
    guard
        .check_recent(&digest, receipt.timestamp, now)
        .map_err(|r| if r == Reject::Replay { Reject::ReceiptReplay } else { r })?;
    Ok(digest)
}

/// Applies the guard updates for a fund message that passed [`check_fund`].
pub fn commit_fund(message: &FundMessage, receipt_digest: [u8; 32], guard: &mut ReplayGuard, now: Timestamp) {
    guard.commit_nonce(&message.sender, &message.recipient, message.nonce);
    guard.commit_recent(receipt_digest, message.receipt.timestamp, now);
}

pub fn validate_fund(
    message: &FundMessage,
    guard: &mut ReplayGuard,
    verifier: &Verifier<'_>,
    now: Timestamp,
) -> Result<(), Reject> {
    let digest = check_fund(message, guard, verifier, now)?;
    commit_fund(message, digest, guard, now);
    Ok(())
}

pub fn check_set_interval(
    message: &SetIntervalMessage,
    guard: &ReplayGuard,
    verifier: &Verifier<'_>,
) -> Result<(), Reject> {
    if &message.recipient != verifier.me {
        return Err(Reject::WrongRecipient);
    }
    guard.check_nonce(&message.sender, &message.recipient, message.nonce)?;
    let key = verifier
        .users
        .get(&message.sender)
        .ok_or(Reject::UnknownSender)?;
    if !message.verify(key) {
        return Err(Reject::BadSenderSignature);
    }
    if !(message.interval.is_finite() && message.interval > 0.0) {
        return Err(Reject::InvalidInterval);
    }
    Ok(())
}

pub fn validate_set_interval(
    message: &SetIntervalMessage,
    guard: &mut ReplayGuard,
    verifier: &Verifier<'_>,
) -> Result<(), Reject> {
    check_set_interval(message, guard, verifier)?;
    guard.commit_nonce(&message.sender, &message.recipient, message.nonce);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ids::Resource;
    use crate::protocol::crypto::Keypair;
    use crate::protocol::messages::Receipt;

    struct World {
        alice: Keypair,
        bank: Keypair,
        users: KeyRegistry,
        me: Identity,
        now: Timestamp,
    }

    impl World {
        fn new() -> Self {
            let alice = Keypair::derive("alice");
            let users: KeyRegistry = [("alice".into(), alice.public())].into_iter().collect();
            World {
                alice,
                bank: Keypair::derive("bank"),
                users,
                me: "host0".into(),
                now: Timestamp::from_secs(1000),
            }
        }

        fn verifier(&self) -> (Identity, PublicKey) {
            (self.me.clone(), self.bank.public())
        }

        fn receipt_to(&self, payee: &str, amount: f64, at: Timestamp) -> Receipt {
            let req = TransferRequest::new_signed(&self.alice, "alice".into(), payee.into(), amount, at);
            Receipt::issue(&self.bank, &req)
        }

        fn fund(&self, nonce: u64, payee: &str) -> FundMessage {
            FundMessage::new_signed(&self.alice, Resource::Cpu, nonce, 1000.0, self.receipt_to(payee, 90.0, self.now + nonce))
        }
    }

    #[test]
    fn fresh_transfer_is_accepted_once() {
        let w = World::new();
        let mut guard = ReplayGuard::new();
        let req = TransferRequest::new_signed(&w.alice, "alice".into(), "bob".into(), 5.0, w.now);
        assert_eq!(validate_transfer(&req, &mut guard, &w.users, w.now), Ok(()));
        assert_eq!(validate_transfer(&req, &mut guard, &w.users, w.now), Err(Reject::Replay));
    }

    #[test]
    fn transfer_rejections() {
        let w = World::new();
        let mut guard = ReplayGuard::new();
        let mallory = Keypair::derive("mallory");
        let unknown = TransferRequest::new_signed(&mallory, "mallory".into(), "bob".into(), 5.0, w.now);
        assert_eq!(validate_transfer(&unknown, &mut guard, &w.users, w.now), Err(Reject::UnknownSender));

        let forged = TransferRequest::new_signed(&mallory, "alice".into(), "bob".into(), 5.0, w.now);
        assert_eq!(validate_transfer(&forged, &mut guard, &w.users, w.now), Err(Reject::BadSignature));

        let zero = TransferRequest::new_signed(&w.alice, "alice".into(), "bob".into(), 0.0, w.now);
        assert_eq!(validate_transfer(&zero, &mut guard, &w.users, w.now), Err(Reject::NonPositiveAmount));

        let old = TransferRequest::new_signed(&w.alice, "alice".into(), "bob".into(), 1.0, Timestamp::from_secs(1));
        assert_eq!(validate_transfer(&old, &mut guard, &w.users, w.now), Err(Reject::StaleTimestamp));
        assert_eq!(guard.recent_len(), 0);
    }

    #[test]
    fn fund_accepts_increasing_nonces_and_rejects_replays() {
        let w = World::new();
        let (me, bank_key) = w.verifier();
        let v = Verifier { me: &me, bank_key: &bank_key, users: &w.users };
        let mut guard = ReplayGuard::new();
        guard.commit_nonce(&"alice".into(), &me, 6);
        let m7 = w.fund(7, "host0");
        assert_eq!(validate_fund(&m7, &mut guard, &v, w.now), Ok(()));
        assert_eq!(validate_fund(&m7, &mut guard, &v, w.now), Err(Reject::StaleNonce));
        assert_eq!(guard.high_water(&"alice".into(), &me), Some(7));
    }

    #[test]
    fn fund_rejection_reasons() {
        let w = World::new();
        let (me, bank_key) = w.verifier();
        let v = Verifier { me: &me, bank_key: &bank_key, users: &w.users };
        let mut guard = ReplayGuard::new();

        let mut other_host = w.fund(1, "host1");
        other_host.recipient = "host1".into();
        assert_eq!(validate_fund(&other_host, &mut guard, &v, w.now), Err(Reject::WrongRecipient));

        let wrong_payee = FundMessage {
            recipient: "host0".into(),
            ..w.fund(1, "host1")
        };
        assert_eq!(validate_fund(&wrong_payee, &mut guard, &v, w.now), Err(Reject::ReceiptWrongPayee));

        let mut self_signed = w.fund(1, "host0");
        self_signed.receipt.bank_signature = w.alice.sign(&self_signed.receipt.canonical_bytes());
        assert_eq!(validate_fund(&self_signed, &mut guard, &v, w.now), Err(Reject::BadBankSignature));

        let mut tampered = w.fund(1, "host0");
        tampered.interval = 1.0;
        assert_eq!(validate_fund(&tampered, &mut guard, &v, w.now), Err(Reject::BadSenderSignature));

        assert_eq!(guard.high_water(&"alice".into(), &me), None);
    }

    #[test]
    fn a_receipt_funds_only_once() {
        let w = World::new();
        let (me, bank_key) = w.verifier();
        let v = Verifier { me: &me, bank_key: &bank_key, users: &w.users };
        let mut guard = ReplayGuard::new();
        let first = w.fund(1, "host0");
        assert_eq!(validate_fund(&first, &mut guard, &v, w.now), Ok(()));
        let again = FundMessage::new_signed(&w.alice, Resource::Cpu, 2, 10.0, first.receipt.clone());
        assert_eq!(validate_fund(&again, &mut guard, &v, w.now), Err(Reject::ReceiptReplay));
    }

    #[test]
    fn set_interval_checks() {
        let w = World::new();
        let (me, bank_key) = w.verifier();
        let v = Verifier { me: &me, bank_key: &bank_key, users: &w.users };
        let mut guard = ReplayGuard::new();
        let ok = SetIntervalMessage::new_signed(&w.alice, "alice".into(), me.clone(), Resource::Cpu, 1, 300.0);
        assert_eq!(validate_set_interval(&ok, &mut guard, &v), Ok(()));
        assert_eq!(validate_set_interval(&ok, &mut guard, &v), Err(Reject::StaleNonce));
        let bad = SetIntervalMessage::new_signed(&w.alice, "alice".into(), me.clone(), Resource::Cpu, 2, 0.0);
        assert_eq!(validate_set_interval(&bad, &mut guard, &v), Err(Reject::InvalidInterval));
        let elsewhere = SetIntervalMessage::new_signed(&w.alice, "alice".into(), "x".into(), Resource::Cpu, 3, 1.0);
        assert_eq!(validate_set_interval(&elsewhere, &mut guard, &v), Err(Reject::WrongRecipient));
    }
}
