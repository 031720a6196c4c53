//! Market-based resource allocation for shared clusters.
//!
//! Each host runs an [`auctioneer`] that splits its resources in proportion
//! to users' bid rates and charges them for what they actually use. Users
//! pay auctioneers with receipts issued by a central [`bank`], find hosts
//! through the soft-state [`sls`] registry, and spread a budget across hosts
//! with the best-response strategy in [`agent`]. The [`sim`] module wires all
//! of it together on a virtual clock.

pub mod agent;
pub mod auctioneer;
pub mod bank;
pub mod ids;
pub mod market;
pub mod net;
pub mod protocol;
pub mod sim;
pub mod sls;
pub mod time;

pub use ids::{Identity, Resource};
pub use time::Timestamp;
