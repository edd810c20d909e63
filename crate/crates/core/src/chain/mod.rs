//! Canonical transaction model, NDJSON feed ingestion and the indexed
//! chronological store every analysis runs over.

mod feed;
mod store;
mod tx;

use thiserror::Error;

use crate::amount::AmountError;

pub use feed::{read_feed, write_feed, FeedError, FeedReader};
pub use store::{ChainStore, StoreError, TxIndex, UnresolvedInput};
pub use tx::{parse_tx_record, OutPoint, ScriptClass, Transaction, TxId, TxInput, TxOutput};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("malformed JSON: {0}")]
    Json(String),
    #[error("missing field `{0}`")]
    MissingField(&'static str),
    #[error("invalid txid `{0}`: expected 64 hex characters")]
    InvalidTxid(String),
    #[error(transparent)]
    Amount(#[from] AmountError),
    #[error("output value must be positive")]
    NonPositiveValue,
    #[error("output address must be non-empty")]
    EmptyAddress,
    #[error("transaction has no inputs")]
    EmptyInputs,
    #[error("transaction has no outputs")]
    EmptyOutputs,
}
