//! Detection and analysis of Wasabi and Samourai Whirlpool CoinJoins over a
//! canonical transaction feed.
//!
//! The pipeline is: ingest a feed into a [`chain::ChainStore`], detect
//! CoinJoins ([`wasabi`], [`whirlpool`], optionally the [`forest`]
//! classifier), cluster addresses into entities ([`entity`]), and derive the
//! flow and anonymity series in [`metrics`]. [`synth`] generates labelled
//! chains for validating all of it.

pub mod amount;
pub mod chain;
pub mod detect;
pub mod entity;
pub mod forest;
pub mod metrics;
pub mod par;
pub mod synth;
pub mod wasabi;
pub mod whirlpool;

#[cfg(test)]
pub(crate) mod testutil;

pub use amount::Amount;
pub use chain::{ChainStore, Transaction, TxId};
