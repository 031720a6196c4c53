//! Soft-state service location.
//!
//! Auctioneers register a signed advertisement every 30 seconds; entries not
//! refreshed within 120 seconds are dropped. Agents query the registry and
//! get the advertisements verbatim, signatures included.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::ids::{Identity, Resource};
use crate::protocol::crypto::{Keypair, PublicKey, Signature};
use crate::protocol::encoding::{DecodeError, Decoder, Encoder};
use crate::protocol::messages::{tag, Signed};
use crate::protocol::{Reject, PROTOCOL_VERSION};
use crate::time::{Timestamp, MICROS_PER_SEC};

pub const DEFAULT_REGISTRATION_INTERVAL_SECS: u64 = 30;
pub const DEFAULT_EXPIRY_SECS: u64 = 120;

/// Capacity and last-period spend for one resource.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResourceAd {
    pub resource: Resource,
    pub capacity: f64,
    /// Sum of charges at the last allocation, credits/second.
    pub total_spent: f64,
}

/// A host's signed description of what it sells.
#[derive(Clone, Debug, PartialEq)]
pub struct HostAdvertisement {
    pub host: Identity,
    pub public_key: PublicKey,
    /// Address where the auctioneer accepts connections.
    pub endpoint: String,
    pub resources: Vec<ResourceAd>,
    pub issued_at: Timestamp,
    pub signature: Signature,
}

impl HostAdvertisement {
    pub fn new_signed(
        key: &Keypair,
        host: Identity,
        endpoint: String,
        resources: Vec<ResourceAd>,
        issued_at: Timestamp,
    ) -> Self {
        let mut ad = HostAdvertisement {
            host,
            public_key: key.public(),
            endpoint,
            resources,
            issued_at,
            signature: Signature([0; 64]),
        };
        ad.signature = key.sign(&ad.canonical_bytes());
        ad
    }

    pub fn resource(&self, resource: Resource) -> Option<&ResourceAd> {
        self.resources.iter().find(|r| r.resource == resource)
    }

    /// Signature valid under the embedded key and every spend non-negative.
    pub fn is_valid(&self) -> bool {
        self.resources
            .iter()
            .all(|r| r.total_spent >= 0.0 && r.capacity > 0.0)
            && self.verify(&self.public_key)
    }

    pub(crate) fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let host = d.identity()?;
        let public_key = PublicKey::from_bytes(d.bytes()?)
            .map_err(|e| DecodeError::InvalidValue(e.to_string()))?;
        let endpoint = d.str()?.to_owned();
        let issued_at = d.timestamp()?;
        let n = d.u64()?;
        if n > Resource::ALL.len() as u64 {
            return Err(DecodeError::InvalidValue(format!("{n} resources")));
        }
        let resources = (0..n)
            .map(|_| {
                Ok(ResourceAd {
                    resource: d.resource()?,
                    capacity: d.f64()?,
                    total_spent: d.f64()?,
                })
            })
            .collect::<Result<_, DecodeError>>()?;
        Ok(HostAdvertisement {
            host,
            public_key,
            endpoint,
            resources,
            issued_at,
            signature: Signature(d.fixed::<64>()?),
        })
    }

    pub fn from_wire(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut d = Decoder::new(bytes);
        let t = d.raw_u8()?;
        if t != tag::ADVERTISEMENT {
            return Err(DecodeError::UnknownTag(t));
        }
        let v = d.raw_u8()?;
        if v != PROTOCOL_VERSION {
            return Err(DecodeError::UnsupportedVersion(v));
        }
        let ad = HostAdvertisement::decode_body(&mut d)?;
        d.finish()?;
        Ok(ad)
    }
}

impl Signed for HostAdvertisement {
    const TAG: u8 = tag::ADVERTISEMENT;

    fn encode_fields(&self, enc: Encoder) -> Encoder {
        let mut enc = enc
            .identity(&self.host)
            .bytes(&self.public_key.to_bytes())
            .str(&self.endpoint)
            .timestamp(self.issued_at)
            .u64(self.resources.len() as u64);
        for r in &self.resources {
            enc = enc.resource(r.resource).f64(r.capacity).f64(r.total_spent);
        }
        enc
    }

    fn signature(&self) -> &Signature {
        &self.signature
    }
}

/// Optional constraints on a registry query.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryFilter {
    pub resource: Option<Resource>,
    /// Requires at least this much capacity of `resource` (or of any
    /// resource when none is named).
    pub min_capacity: Option<f64>,
}

impl QueryFilter {
    pub fn matches(&self, ad: &HostAdvertisement) -> bool {
        let candidates: Vec<&ResourceAd> = match self.resource {
            Some(r) => ad.resource(r).into_iter().collect(),
            None => ad.resources.iter().collect(),
        };
        if self.resource.is_some() && candidates.is_empty() {
            return false;
        }
        match self.min_capacity {
            Some(min) => candidates.iter().any(|r| r.capacity >= min),
            None => true,
        }
    }

    pub(crate) fn encode_fields(&self, enc: Encoder) -> Encoder {
        enc.str(self.resource.map(Resource::as_str).unwrap_or(""))
            .f64(self.min_capacity.unwrap_or(-1.0))
    }

    pub(crate) fn decode_body(d: &mut Decoder<'_>) -> Result<Self, DecodeError> {
        let resource = match d.str()? {
            "" => None,
            s => Some(
                Resource::from_canonical(s).ok_or_else(|| DecodeError::InvalidValue(format!("resource `{s}`")))?,
            ),
        };
        let min = d.f64()?;
        Ok(QueryFilter {
            resource,
            min_capacity: (min >= 0.0).then_some(min),
        })
    }
}

#[derive(Clone, Debug)]
struct Entry {
    ad: HostAdvertisement,
    last_seen: Timestamp,
}

/// In-memory soft-state table of live hosts.
#[derive(Clone, Debug)]
pub struct Registry {
    expiry: u64,
    entries: BTreeMap<Identity, Entry>,
}

impl Default for Registry {
    fn default() -> Self {
        Registry::with_expiry_secs(DEFAULT_EXPIRY_SECS)
    }
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    pub fn with_expiry_secs(secs: u64) -> Self {
        Registry {
            expiry: secs * MICROS_PER_SEC,
            entries: BTreeMap::new(),
        }
    }

    /// Inserts or refreshes `ad` if its signature checks out.
    pub fn register(&mut self, ad: HostAdvertisement, now: Timestamp) -> Result<(), Reject> {
        if !ad.is_valid() {
            return Err(Reject::BadSignature);
        }
        self.entries.insert(ad.host.clone(), Entry { ad, last_seen: now });
        Ok(())
    }

    /// Drops entries not refreshed within the expiry horizon.
    pub fn sweep(&mut self, now: Timestamp) -> Vec<Identity> {
        let expiry = self.expiry;
        let expired: Vec<Identity> = self
            .entries
            .iter()
            .filter(|(_, e)| now - e.last_seen > expiry)
            .map(|(h, _)| h.clone())
            .collect();
        for host in &expired {
            self.entries.remove(host);
        }
        expired
    }

    /// Live advertisements matching `filter`, ordered by host.
    pub fn query(&self, filter: &QueryFilter, now: Timestamp) -> Vec<HostAdvertisement> {
        self.entries
            .values()
            .filter(|e| now - e.last_seen <= self.expiry)
            .filter(|e| filter.matches(&e.ad))
            .map(|e| e.ad.clone())
            .collect()
    }

    pub fn last_seen(&self, host: &Identity) -> Option<Timestamp> {
        self.entries.get(host).map(|e| e.last_seen)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}
