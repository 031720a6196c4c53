//! Protocol message types and their canonical encodings.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::crypto::{Keypair, PublicKey, Signature};
use super::encoding::{DecodeError, Decoder, Encoder};
use super::{Reject, PROTOCOL_VERSION};
use crate::ids::{Identity, Resource};
use crate::sls::{HostAdvertisement, QueryFilter};
use crate::time::Timestamp;

/// One-byte message type tags.
pub mod tag {
    pub const TRANSFER: u8 = 0x01;
    pub const RECEIPT: u8 = 0x02;
    pub const FUND: u8 = 0x03;
    pub const SET_INTERVAL: u8 = 0x04;
    pub const CREATE_ACCOUNT: u8 = 0x05;
    pub const ADVERTISEMENT: u8 = 0x06;
    pub const STATUS_QUERY: u8 = 0x07;
    pub const STATUS_REPLY: u8 = 0x08;
    pub const BALANCE_QUERY: u8 = 0x09;
    pub const BALANCE_REPLY: u8 = 0x0a;
    pub const MINT: u8 = 0x0b;
    pub const SLS_QUERY: u8 = 0x0c;
    pub const SLS_REPLY: u8 = 0x0d;
    pub const ACK: u8 = 0x0e;
    pub const REJECT: u8 = 0x0f;
}

/// Messages whose canonical encoding is covered by a signature.
pub trait Signed {
    const TAG: u8;

    /// Writes every field except the signature.
    fn encode_fields(&self, enc: Encoder) -> Encoder;

    fn signature(&self) -> &Signature;

    /// `[tag][version][fields]`: the bytes the signature covers.
    fn canonical_bytes(&self) -> Vec<u8> {
        self.encode_fields(Encoder::message(Self::TAG, PROTOCOL_VERSION))
            .finish()
    }

    /// Canonical bytes followed by the signature field.
    fn to_wire(&self) -> Vec<u8> {
        Encoder::extend(self.canonical_bytes())
            .bytes(self.signature().as_bytes())
            .finish()
    }

    fn verify(&self, key: &PublicKey) -> bool {
        key.verify(&self.canonical_bytes(), self.signature())
    }

    /// SHA-256 of the canonical bytes; identifies the message in replay windows.
    fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.canonical_bytes()).into()
    }
}

fn read_header(d: &mut Decoder<'_>, expected: u8) -> Result<(), DecodeError> {
    let tag = d.raw_u8()?;
    if tag != expected {
        return Err(DecodeError::UnknownTag(tag));
    }
    let version = d.raw_u8()?;
    if version != PROTOCOL_VERSION {
        return Err(DecodeError::UnsupportedVersion(version));
    }
    Ok(())
}

fn read_signature(d: &mut Decoder<'_>) -> Result<Signature, DecodeError> {
    Ok(Signature(d.fixed::<64>()?))
}

/// Decodes a standalone signed message of type `T` from its wire bytes.
fn decode_whole<T, F>(bytes: &[u8], tag: u8, body: F) -> Result<T, DecodeError>
where
    F: FnOnce(&mut Decoder<'_>) -> Result<T, DecodeError>,
{
    let mut d = Decoder::new(bytes);
    read_header(&mut d, tag)?;
    let value = body(&mut d)?;
    d.finish()?;
    Ok(value)
}

/// A user's signed instruction to the bank to move credits.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferRequest {
    pub sender: Identity,
    pub recipient: Identity,
    pub amount: f64,
    pub timestamp: Timestamp,
    pub signature: Signature,
}

impl TransferRequest {
    pub fn new_signed(
        key: &Keypair,
        sender: Identity,
        recipient: Identity,
        amount: f64,
        timestamp: Timestamp,
    ) -> Self {
        let mut req = TransferRequest {
            sender,
            recipient,
            amount,
            timestamp,
            signature: Signature([0; 64]),
        };
        req.signature = key.sign(&req.canonical_bytes());
        req
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(TransferRequest {
            sender: d.identity()?,
            recipient: d.identity()?,
            amount: d.f64()?,
            timestamp: d.timestamp()?,
            signature: read_signature(d)?,
        })
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, DecodeError> {
        decode_whole(bytes, tag::TRANSFER, Self::decode_body)
    }
}

impl Signed for TransferRequest {
    const TAG: u8 = tag::TRANSFER;

    fn encode_fields(&self, enc: Encoder) -> Encoder {
        enc.identity(&self.sender)
            .identity(&self.recipient)
            .f64(self.amount)
            .timestamp(self.timestamp)
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }
}

/// The bank's signed statement that a transfer happened.
#[derive(Clone, Debug, PartialEq)]
pub struct Receipt {
    pub sender: Identity,
    pub recipient: Identity,
    pub amount: f64,
    pub timestamp: Timestamp,
    pub bank_signature: Signature,
}

impl Receipt {
    /// Echoes the request's fields under the bank's signature.
    pub fn issue(bank: &Keypair, request: &TransferRequest) -> Self {
        let mut receipt = Receipt {
            sender: request.sender.clone(),
            recipient: request.recipient.clone(),
            amount: request.amount,
            timestamp: request.timestamp,
            bank_signature: Signature([0; 64]),
        };
        receipt.bank_signature = bank.sign(&receipt.canonical_bytes());
        receipt
    }

    /// True iff the receipt echoes `request` field for field.
    pub fn matches(&self, request: &TransferRequest) -> bool {
        self.sender == request.sender
            && self.recipient == request.recipient
            && self.amount.to_bits() == request.amount.to_bits()
            && self.timestamp == request.timestamp
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(Receipt {
            sender: d.identity()?,
            recipient: d.identity()?,
            amount: d.f64()?,
            timestamp: d.timestamp()?,
            bank_signature: read_signature(d)?,
        })
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, DecodeError> {
        decode_whole(bytes, tag::RECEIPT, Self::decode_body)
    }
}

impl Signed for Receipt {
    const TAG: u8 = tag::RECEIPT;

    fn encode_fields(&self, enc: Encoder) -> Encoder {
        enc.identity(&self.sender)
            .identity(&self.recipient)
            .f64(self.amount)
            .timestamp(self.timestamp)
    }

    fn signature(&self) -> &Signature {
        &self.bank_signature
    }
}

/// Credits a user's local balance on a host and sets its bidding interval.
#[derive(Clone, Debug, PartialEq)]
pub struct FundMessage {
    pub sender: Identity,
    pub recipient: Identity,
    pub resource: Resource,
    pub nonce: u64,
    pub interval: f64,
    pub receipt: Receipt,
    pub signature: Signature,
}

impl FundMessage {
    pub fn new_signed(
        key: &Keypair,
        resource: Resource,
        nonce: u64,
        interval: f64,
        receipt: Receipt,
    ) -> Self {
        let mut msg = FundMessage {
            sender: receipt.sender.clone(),
            recipient: receipt.recipient.clone(),
            resource,
            nonce,
            interval,
            receipt,
            signature: Signature([0; 64]),
        };
        msg.signature = key.sign(&msg.canonical_bytes());
        msg
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(FundMessage {
            sender: d.identity()?,
            recipient: d.identity()?,
            resource: d.resource()?,
            nonce: d.u64()?,
            interval: d.f64()?,
            receipt: Receipt::from_wire(d.bytes()?)?,
            signature: read_signature(d)?,
        })
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, DecodeError> {
        decode_whole(bytes, tag::FUND, Self::decode_body)
    }
}

impl Signed for FundMessage {
    const TAG: u8 = tag::FUND;

    fn encode_fields(&self, enc: Encoder) -> Encoder {
        enc.identity(&self.sender)
            .identity(&self.recipient)
            .resource(self.resource)
            .u64(self.nonce)
            .f64(self.interval)
            .bytes(&self.receipt.to_wire())
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }
}

/// Changes a bidding interval without touching the balance.
#[derive(Clone, Debug, PartialEq)]
pub struct SetIntervalMessage {
    pub sender: Identity,
    pub recipient: Identity,
    pub resource: Resource,
    pub nonce: u64,
    pub interval: f64,
    pub signature: Signature,
}

impl SetIntervalMessage {
    pub fn new_signed(
        key: &Keypair,
        sender: Identity,
        recipient: Identity,
        resource: Resource,
        nonce: u64,
        interval: f64,
    ) -> Self {
        let mut msg = SetIntervalMessage {
            sender,
            recipient,
            resource,
            nonce,
            interval,
            signature: Signature([0; 64]),
        };
        msg.signature = key.sign(&msg.canonical_bytes());
        msg
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(SetIntervalMessage {
            sender: d.identity()?,
            recipient: d.identity()?,
            resource: d.resource()?,
            nonce: d.u64()?,
            interval: d.f64()?,
            signature: read_signature(d)?,
        })
    }
}

impl Signed for SetIntervalMessage {
    const TAG: u8 = tag::SET_INTERVAL;

    fn encode_fields(&self, enc: Encoder) -> Encoder {
        enc.identity(&self.sender)
            .identity(&self.recipient)
            .resource(self.resource)
            .u64(self.nonce)
            .f64(self.interval)
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }
}

/// Opens an account on a host, funding one or more resources at once.
///
/// Each embedded fund message is individually signed and nonce-protected.
#[derive(Clone, Debug, PartialEq)]
pub struct CreateAccountMessage {
    pub funds: Vec<FundMessage>,
}

impl CreateAccountMessage {
    pub fn encode(&self) -> Vec<u8> {
        let mut enc = Encoder::message(tag::CREATE_ACCOUNT, PROTOCOL_VERSION).u64(self.funds.len() as u64);
        for f in &self.funds {
            enc = enc.bytes(&f.to_wire());
        }
        enc.finish()
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let n = d.u64()?;
        if n > 64 {
            return Err(DecodeError::InvalidValue(format!("{n} fund messages")));
        }
        let funds = (0..n)
            .map(|_| FundMessage::from_wire(d.bytes()?))
            .collect::<Result<_, _>>()?;
        Ok(CreateAccountMessage { funds })
    }

    pub fn sender(&self) -> Option<&Identity> {
        self.funds.first().map(|f| &f.sender)
    }
}

/// A user's signed request for its own account status on a host.
#[derive(Clone, Debug, PartialEq)]
pub struct StatusQuery {
    pub user: Identity,
    pub host: Identity,
    pub timestamp: Timestamp,
    pub signature: Signature,
}

impl StatusQuery {
    pub fn new_signed(key: &Keypair, user: Identity, host: Identity, timestamp: Timestamp) -> Self {
        let mut q = StatusQuery {
            user,
            host,
            timestamp,
            signature: Signature([0; 64]),
        };
        q.signature = key.sign(&q.canonical_bytes());
        q
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(StatusQuery {
            user: d.identity()?,
            host: d.identity()?,
            timestamp: d.timestamp()?,
            signature: read_signature(d)?,
        })
    }
}

impl Signed for StatusQuery {
    const TAG: u8 = tag::STATUS_QUERY;

    fn encode_fields(&self, enc: Encoder) -> Encoder {
        enc.identity(&self.user)
            .identity(&self.host)
            .timestamp(self.timestamp)
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }
}

/// A user's signed request for its bank balance.
#[derive(Clone, Debug, PartialEq)]
pub struct BalanceQuery {
    pub owner: Identity,
    pub timestamp: Timestamp,
    pub signature: Signature,
}

impl BalanceQuery {
    pub fn new_signed(key: &Keypair, owner: Identity, timestamp: Timestamp) -> Self {
        let mut q = BalanceQuery {
            owner,
            timestamp,
            signature: Signature([0; 64]),
        };
        q.signature = key.sign(&q.canonical_bytes());
        q
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(BalanceQuery {
            owner: d.identity()?,
            timestamp: d.timestamp()?,
            signature: read_signature(d)?,
        })
    }
}

impl Signed for BalanceQuery {
    const TAG: u8 = tag::BALANCE_QUERY;

    fn encode_fields(&self, enc: Encoder) -> Encoder {
        enc.identity(&self.owner).timestamp(self.timestamp)
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }
}

/// Administrative credit issue, signed with the bank's own key.
#[derive(Clone, Debug, PartialEq)]
pub struct MintRequest {
    pub owner: Identity,
    pub amount: f64,
    pub timestamp: Timestamp,
    pub signature: Signature,
}

impl MintRequest {
    pub fn new_signed(bank: &Keypair, owner: Identity, amount: f64, timestamp: Timestamp) -> Self {
        let mut m = MintRequest {
            owner,
            amount,
            timestamp,
            signature: Signature([0; 64]),
        };
        m.signature = bank.sign(&m.canonical_bytes());
        m
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        Ok(MintRequest {
            owner: d.identity()?,
            amount: d.f64()?,
            timestamp: d.timestamp()?,
            signature: read_signature(d)?,
        })
    }
}

impl Signed for MintRequest {
    const TAG: u8 = tag::MINT;

    fn encode_fields(&self, enc: Encoder) -> Encoder {
        enc.identity(&self.owner)
            .f64(self.amount)
            .timestamp(self.timestamp)
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }
}

/// Per-resource view of a user's account on a host.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceStatus {
    pub resource: Resource,
    pub balance: f64,
    pub interval: f64,
    pub last_share: f64,
    pub last_charge: f64,
    pub evicted: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccountStatus {
    pub host: Identity,
    pub user: Identity,
    pub resources: Vec<ResourceStatus>,
}

impl AccountStatus {
    pub fn resource(&self, resource: Resource) -> Option<&ResourceStatus> {
        self.resources.iter().find(|r| r.resource == resource)
    }

    fn encode_fields(&self, mut enc: Encoder) -> Encoder {
        enc = enc
            .identity(&self.host)
            .identity(&self.user)
            .u64(self.resources.len() as u64);
        for r in &self.resources {
            enc = enc
                .resource(r.resource)
                .f64(r.balance)
                .f64(r.interval)
                .f64(r.last_share)
                .f64(r.last_charge)
                .u64(r.evicted as u64);
        }
        enc
    }

    fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let host = d.identity()?;
        let user = d.identity()?;
        let n = d.u64()?;
        if n > Resource::ALL.len() as u64 {
            return Err(DecodeError::InvalidValue(format!("{n} resources")));
        }
        let resources = (0..n)
            .map(|_| {
                Ok(ResourceStatus {
                    resource: d.resource()?,
                    balance: d.f64()?,
                    interval: d.f64()?,
                    last_share: d.f64()?,
                    last_charge: d.f64()?,
                    evicted: d.u64()? != 0,
                })
            })
            .collect::<Result<_, DecodeError>>()?;
        Ok(AccountStatus {
            host,
            user,
            resources,
        })
    }
}

/// Everything that can travel over a connection.
#[derive(Clone, Debug, PartialEq)]
pub enum Message {
    Transfer(TransferRequest),
    Receipt(Receipt),
    Fund(FundMessage),
    SetInterval(SetIntervalMessage),
    CreateAccount(CreateAccountMessage),
    Advertisement(HostAdvertisement),
    StatusQuery(StatusQuery),
    StatusReply(AccountStatus),
    BalanceQuery(BalanceQuery),
    BalanceReply { owner: Identity, balance: f64 },
    Mint(MintRequest),
    SlsQuery(QueryFilter),
    SlsReply(Vec<HostAdvertisement>),
    Ack(String),
    Reject { reason: Reject, detail: String },
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self {
            Message::Transfer(_) => "transfer",
            Message::Receipt(_) => "receipt",
            Message::Fund(_) => "fund",
            Message::SetInterval(_) => "set_interval",
            Message::CreateAccount(_) => "create_account",
            Message::Advertisement(_) => "advertisement",
            Message::StatusQuery(_) => "status_query",
            Message::StatusReply(_) => "status_reply",
            Message::BalanceQuery(_) => "balance_query",
            Message::BalanceReply { .. } => "balance_reply",
            Message::Mint(_) => "mint",
            Message::SlsQuery(_) => "sls_query",
            Message::SlsReply(_) => "sls_reply",
            Message::Ack(_) => "ack",
            Message::Reject { .. } => "reject",
        }
    }

    pub fn reject(reason: Reject) -> Self {
        Message::Reject {
            reason,
            detail: String::new(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let header = |t: u8| Encoder::message(t, PROTOCOL_VERSION);
        match self {
            Message::Transfer(m) => m.to_wire(),
            Message::Receipt(m) => m.to_wire(),
            Message::Fund(m) => m.to_wire(),
            Message::SetInterval(m) => m.to_wire(),
            Message::CreateAccount(m) => m.encode(),
            Message::Advertisement(m) => m.to_wire(),
            Message::StatusQuery(m) => m.to_wire(),
            Message::StatusReply(s) => s.encode_fields(header(tag::STATUS_REPLY)).finish(),
            Message::BalanceQuery(m) => m.to_wire(),
            Message::BalanceReply { owner, balance } => header(tag::BALANCE_REPLY)
                .identity(owner)
                .f64(*balance)
                .finish(),
            Message::Mint(m) => m.to_wire(),
            Message::SlsQuery(f) => f.encode_fields(header(tag::SLS_QUERY)).finish(),
            Message::SlsReply(ads) => {
                let mut enc = header(tag::SLS_REPLY).u64(ads.len() as u64);
                for ad in ads {
                    enc = enc.bytes(&ad.to_wire());
                }
                enc.finish()
            }
            Message::Ack(detail) => header(tag::ACK).str(detail).finish(),
            Message::Reject { reason, detail } => header(tag::REJECT)
                .str(reason.code())
                .str(detail)
                .finish(),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let t = d.raw_u8()?;
        let version = d.raw_u8()?;
        if version != PROTOCOL_VERSION {
            return Err(DecodeError::UnsupportedVersion(version));
        }
        let msg = match t {
            tag::TRANSFER => Message::Transfer(TransferRequest::decode_body(&mut d)?),
            tag::RECEIPT => Message::Receipt(Receipt::decode_body(&mut d)?),
            tag::FUND => Message::Fund(FundMessage::decode_body(&mut d)?),
            tag::SET_INTERVAL => Message::SetInterval(SetIntervalMessage::decode_body(&mut d)?),
            tag::CREATE_ACCOUNT => Message::CreateAccount(CreateAccountMessage::decode_body(&mut d)?),
            tag::ADVERTISEMENT => Message::Advertisement(HostAdvertisement::decode_body(&mut d)?),
            tag::STATUS_QUERY => Message::StatusQuery(StatusQuery::decode_body(&mut d)?),
            tag::STATUS_REPLY => Message::StatusReply(AccountStatus::decode_body(&mut d)?),
            tag::BALANCE_QUERY => Message::BalanceQuery(BalanceQuery::decode_body(&mut d)?),
            tag::BALANCE_REPLY => Message::BalanceReply {
                owner: d.identity()?,
                balance: d.f64()?,
            },
            tag::MINT => Message::Mint(MintRequest::decode_body(&mut d)?),
            tag::SLS_QUERY => Message::SlsQuery(QueryFilter::decode_body(&mut d)?),
            tag::SLS_REPLY => {
                let n = d.u64()?;
                if n > 1_000_000 {
                    return Err(DecodeError::InvalidValue(format!("{n} advertisements")));
                }
                let ads = (0..n)
                    .map(|_| HostAdvertisement::from_wire(d.bytes()?))
                    .collect::<Result<_, _>>()?;
                Message::SlsReply(ads)
            }
            tag::ACK => Message::Ack(d.str()?.to_owned()),
            tag::REJECT => {
                let code = d.str()?;
                let reason = code
                    .parse()
                    .map_err(|_| DecodeError::InvalidValue(format!("reject code `{code}`")))?;
                Message::Reject {
                    reason,
                    detail: d.str()?.to_owned(),
                }
            }
            other => return Err(DecodeError::UnknownTag(other)),
        };
        d.finish()?;
        Ok(msg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn alice() -> Keypair {
        Keypair::derive("alice")
    }

    fn request() -> TransferRequest {
        TransferRequest::new_signed(&alice(), "alice".into(), "host0".into(), 10.0, Timestamp(1000))
    }

    #[test]
    fn transfer_golden_vector() {
        let req = TransferRequest::new_signed(&alice(), "A".into(), "B".into(), 10.0, Timestamp(1000));
        assert_eq!(
            hex::encode(req.canonical_bytes()),
            "0101\
             0000000141\
             0000000142\
             000000084024000000000000\
             0000000800000000000003e8"
        );
    }

    #[test]
    fn receipt_echoes_request() {
        let bank = Keypair::derive("bank");
        let req = request();
        let r = Receipt::issue(&bank, &req);
        assert!(r.matches(&req));
        assert!(r.verify(&bank.public()));
        assert!(!r.verify(&alice().public()));
    }

    #[test]
    fn request_and_receipt_signatures_are_domain_separated() {
        // Same fields, different tag: a user's request never passes as a receipt.
        let req = request();
        let forged = Receipt {
            sender: req.sender.clone(),
            recipient: req.recipient.clone(),
            amount: req.amount,
            timestamp: req.timestamp,
            bank_signature: req.signature,
        };
        assert!(!forged.verify(&alice().public()));
    }

    #[test]
    fn every_message_decodes_to_itself() {
        let bank = Keypair::derive("bank");
        let receipt = Receipt::issue(&bank, &request());
        let fund = FundMessage::new_signed(&alice(), Resource::Cpu, 3, 1000.0, receipt.clone());
        let set = SetIntervalMessage::new_signed(&alice(), "alice".into(), "host0".into(), Resource::Disk, 4, 2.5);
        let host = Keypair::derive("host0");
        let ad = HostAdvertisement::new_signed(
            &host,
            "host0".into(),
            "127.0.0.1:1".into(),
            vec![crate::sls::ResourceAd {
                resource: Resource::Cpu,
                capacity: 1.0,
                total_spent: 0.25,
            }],
            Timestamp(5),
        );
        let messages = vec![
            Message::Transfer(request()),
            Message::Receipt(receipt),
            Message::Fund(fund.clone()),
            Message::SetInterval(set),
            Message::CreateAccount(CreateAccountMessage { funds: vec![fund] }),
            Message::Advertisement(ad.clone()),
            Message::StatusQuery(StatusQuery::new_signed(&alice(), "alice".into(), "host0".into(), Timestamp(9))),
            Message::StatusReply(AccountStatus {
                host: "host0".into(),
                user: "alice".into(),
                resources: vec![ResourceStatus {
                    resource: Resource::Cpu,
                    balance: 1.0,
                    interval: 2.0,
                    last_share: 0.5,
                    last_charge: 0.1,
                    evicted: true,
                }],
            }),
            Message::BalanceQuery(BalanceQuery::new_signed(&alice(), "alice".into(), Timestamp(1))),
            Message::BalanceReply {
                owner: "alice".into(),
                balance: 3.5,
            },
            Message::Mint(MintRequest::new_signed(&bank, "alice".into(), 5.0, Timestamp(2))),
            Message::SlsQuery(QueryFilter {
                resource: Some(Resource::Cpu),
                min_capacity: Some(0.5),
            }),
            Message::SlsQuery(QueryFilter::default()),
            Message::SlsReply(vec![ad]),
            Message::Ack("ok".into()),
            Message::Reject {
                reason: Reject::StaleNonce,
                detail: "nonce 3 <= 7".into(),
            },
        ];
        for m in messages {
            let bytes = m.encode();
            assert_eq!(Message::decode(&bytes).unwrap(), m, "{}", m.kind());
            assert_eq!(bytes[1], PROTOCOL_VERSION);
        }
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(Message::decode(&[]).is_err());
        assert_eq!(Message::decode(&[0x7f, 1]), Err(DecodeError::UnknownTag(0x7f)));
        assert_eq!(Message::decode(&[1, 9]), Err(DecodeError::UnsupportedVersion(9)));
        let mut bytes = Message::Transfer(request()).encode();
        bytes.push(0);
        assert!(Message::decode(&bytes).is_err());
    }
}
