use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::amount::Amount;
use crate::chain::ParseError;

/// 32-byte transaction id, displayed and serialized as 64 lowercase hex chars.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId([u8; 32]);

impl TxId {
    pub const fn from_bytes(bytes: [u8; 32]) -> Self {
        TxId(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }
}

impl FromStr for TxId {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.len() != 64 {
            return Err(ParseError::InvalidTxid(s.to_owned()));
        }
        let mut out = [0u8; 32];
        hex::decode_to_slice(s, &mut out).map_err(|_| ParseError::InvalidTxid(s.to_owned()))?;
        Ok(TxId(out))
    }
}

impl fmt::Display for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&hex::encode(self.0))
    }
}

impl fmt::Debug for TxId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TxId({})", &hex::encode(self.0)[..16])
    }
}

impl Serialize for TxId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TxId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Reference to a transaction output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OutPoint {
    pub txid: TxId,
    pub vout: u32,
}

impl fmt::Display for OutPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.txid, self.vout)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ScriptClass {
    /// Native segwit pay-to-witness-public-key-hash.
    P2wpkh,
    /// Any other script tag, kept verbatim for round-tripping.
    Other(String),
}

impl ScriptClass {
    pub fn is_p2wpkh(&self) -> bool {
        matches!(self, ScriptClass::P2wpkh)
    }

    pub fn as_str(&self) -> &str {
        match self {
            ScriptClass::P2wpkh => "p2wpkh",
            ScriptClass::Other(s) => s,
        }
    }
}

impl From<&str> for ScriptClass {
    fn from(s: &str) -> Self {
        if s == "p2wpkh" {
            ScriptClass::P2wpkh
        } else {
            ScriptClass::Other(s.to_owned())
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxInput {
    pub prev_txid: TxId,
    pub prev_vout: u32,
}

impl TxInput {
    pub fn outpoint(&self) -> OutPoint {
        OutPoint {
            txid: self.prev_txid,
            vout: self.prev_vout,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxOutput {
    pub value: Amount,
    pub address: String,
    pub script: ScriptClass,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub txid: TxId,
    pub block_height: u64,
    /// UTC seconds.
    pub timestamp: i64,
    pub inputs: Vec<TxInput>,
    pub outputs: Vec<TxOutput>,
}

impl Transaction {
    pub fn output_sum(&self) -> Amount {
        self.outputs.iter().map(|o| o.value).sum()
    }

    /// Serializes to one canonical NDJSON line (no trailing newline).
    pub fn to_ndjson(&self) -> String {
        let record = RawTxOut {
            txid: self.txid.to_string(),
            height: self.block_height,
            time: self.timestamp,
            inputs: self
                .inputs
                .iter()
                .map(|i| RawInputOut {
                    prev_txid: i.prev_txid.to_string(),
                    prev_vout: i.prev_vout,
                })
                .collect(),
            outputs: self
                .outputs
                .iter()
                .map(|o| RawOutputOut {
                    value: o.value.to_btc_string(),
                    address: &o.address,
                    script: o.script.as_str(),
                })
                .collect(),
        };
        serde_json::to_string(&record).expect("transaction record serializes")
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTx {
    txid: Option<String>,
    height: Option<u64>,
    time: Option<i64>,
    inputs: Option<Vec<RawInput>>,
    outputs: Option<Vec<RawOutput>>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInput {
    prev_txid: Option<String>,
    prev_vout: Option<u32>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    value: Option<String>,
    address: Option<String>,
    script: Option<String>,
}

#[derive(Serialize)]
struct RawTxOut<'a> {
    txid: String,
    height: u64,
    time: i64,
    inputs: Vec<RawInputOut>,
    outputs: Vec<RawOutputOut<'a>>,
}

#[derive(Serialize)]
struct RawInputOut {
    prev_txid: String,
    prev_vout: u32,
}

#[derive(Serialize)]
struct RawOutputOut<'a> {
    value: String,
    address: &'a str,
    script: &'a str,
}

fn required<T>(v: Option<T>, field: &'static str) -> Result<T, ParseError> {
    v.ok_or(ParseError::MissingField(field))
}

/// Parses and validates one feed line.
pub fn parse_tx_record(line: &str) -> Result<Transaction, ParseError> {
    let raw: RawTx = serde_json::from_str(line).map_err(|e| ParseError::Json(e.to_string()))?;
    let txid: TxId = required(raw.txid, "txid")?.parse()?;
    let block_height = required(raw.height, "height")?;
    let timestamp = required(raw.time, "time")?;

    let raw_inputs = required(raw.inputs, "inputs")?;
    if raw_inputs.is_empty() {
        return Err(ParseError::EmptyInputs);
    }
    let inputs = raw_inputs
        .into_iter()
        .map(|i| {
            Ok(TxInput {
                prev_txid: required(i.prev_txid, "prev_txid")?.parse()?,
                prev_vout: required(i.prev_vout, "prev_vout")?,
            })
        })
        .collect::<Result<Vec<_>, ParseError>>()?;

    let raw_outputs = required(raw.outputs, "outputs")?;
    if raw_outputs.is_empty() {
        return Err(ParseError::EmptyOutputs);
    }
    let outputs = raw_outputs
        .into_iter()
        .map(|o| {
            let value = Amount::from_btc_str(&required(o.value, "value")?)?;
            if value == Amount::ZERO {
                return Err(ParseError::NonPositiveValue);
            }
            let address = required(o.address, "address")?;
            if address.is_empty() {
                return Err(ParseError::EmptyAddress);
            }
            let script = ScriptClass::from(required(o.script, "script")?.as_str());
            Ok(TxOutput {
                value,
                address,
                script,
            })
        })
        .collect::<Result<Vec<_>, ParseError>>()?;

    Ok(Transaction {
        txid,
        block_height,
        timestamp,
        inputs,
        outputs,
    })
}
