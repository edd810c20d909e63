use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};

use serde::Serialize;
use thiserror::Error;

use crate::chain::TxId;
use crate::detect::Protocol;
use crate::metrics::ExchangeHop;
use crate::whirlpool::PoolKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SynthLabel {
    Wasabi,
    Whirlpool(PoolKind),
    Tx0,
    Background,
}

impl SynthLabel {
    pub fn name(&self) -> &'static str {
        match self {
            SynthLabel::Wasabi => "wasabi",
            SynthLabel::Whirlpool(_) => "whirlpool",
            SynthLabel::Tx0 => "tx0",
            SynthLabel::Background => "background",
        }
    }

    pub fn is_wasabi(&self) -> bool {
        matches!(self, SynthLabel::Wasabi)
    }
}

impl fmt::Display for SynthLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SynthLabel::Whirlpool(p) => write!(f, "whirlpool/{p}"),
            other => f.write_str(other.name()),
        }
    }
}

/// Which detector condition a planted lookalike breaks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NearMiss {
    /// Fewer than ten equal outputs.
    FewEqualOutputs,
    /// Equal-output value outside the denomination band.
    OutOfBand,
    /// Fewer than two output values that occur once.
    FewUniqueOutputs,
    /// Fewer inputs than equal outputs.
    FewInputs,
    /// Five and five, one output off the denomination.
    WhirlpoolValue,
    WhirlpoolInputCount,
    WhirlpoolOutputCount,
}

impl NearMiss {
    pub const WASABI: [NearMiss; 4] = [
        NearMiss::FewEqualOutputs,
        NearMiss::OutOfBand,
        NearMiss::FewUniqueOutputs,
        NearMiss::FewInputs,
    ];
    pub const WHIRLPOOL: [NearMiss; 3] = [
        NearMiss::WhirlpoolValue,
        NearMiss::WhirlpoolInputCount,
        NearMiss::WhirlpoolOutputCount,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PlantedFlow {
    pub coinjoin: TxId,
    pub vout: u32,
    /// Transaction spending the mixed output.
    pub spender: TxId,
    #[serde(serialize_with = "ser_hop")]
    pub hop: ExchangeHop,
}

fn ser_hop<S: serde::Serializer>(hop: &ExchangeHop, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(match hop {
        ExchangeHop::Direct => "direct",
        ExchangeHop::Indirect => "indirect",
    })
}

/// A Wasabi round planted together with its `fan` related addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FanPlant {
    pub coinjoin: TxId,
    pub fan: usize,
}

/// Satoshi sums the generator fed into each protocol's CoinJoins.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct InflowTruth {
    pub fresh_sat: u64,
    pub remix_sat: u64,
}

/// What the generator knows about the chain it produced.
#[derive(Debug, Clone, Default, Serialize)]
pub struct GroundTruth {
    /// One label per transaction, in chain order. Written separately as CSV.
    #[serde(skip)]
    pub labels: Vec<(TxId, SynthLabel)>,
    pub near_misses: BTreeMap<TxId, NearMiss>,
    pub zero_remix_plants: BTreeSet<TxId>,
    pub genesis: BTreeMap<PoolKind, BTreeSet<TxId>>,
    /// Wasabi rounds that spend no earlier round's output.
    pub remixless_wasabi: BTreeSet<TxId>,
    pub exchange_flows: Vec<PlantedFlow>,
    pub stars: Vec<FanPlant>,
    pub collectors: Vec<FanPlant>,
    pub inflows: BTreeMap<Protocol, InflowTruth>,
}

impl GroundTruth {
    pub fn txids_with(&self, pred: impl Fn(&SynthLabel) -> bool) -> BTreeSet<TxId> {
        self.labels.iter().filter(|(_, l)| pred(l)).map(|(t, _)| *t).collect()
    }

    pub fn wasabi(&self) -> BTreeSet<TxId> {
        self.txids_with(SynthLabel::is_wasabi)
    }

    pub fn whirlpool(&self, pool: PoolKind) -> BTreeSet<TxId> {
        self.txids_with(|l| *l == SynthLabel::Whirlpool(pool))
    }

    pub fn tx0s(&self) -> BTreeSet<TxId> {
        self.txids_with(|l| *l == SynthLabel::Tx0)
    }

    pub fn count(&self, pred: impl Fn(&SynthLabel) -> bool) -> usize {
        self.labels.iter().filter(|(_, l)| pred(l)).count()
    }
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("labels CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("labels CSV line {line}: {msg}")]
    Row { line: u64, msg: String },
}

/// Writes `txid,label,pool`; the pool column is filled for Whirlpool mixes.
pub fn write_labels_csv<W: Write>(out: W, labels: &[(TxId, SynthLabel)]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["txid", "label", "pool"])?;
    for (txid, label) in labels {
        let pool = match label {
            SynthLabel::Whirlpool(p) => p.label(),
            _ => "",
        };
        w.write_record([txid.to_string().as_str(), label.name(), pool])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels_csv<R: Read>(input: R) -> Result<Vec<(TxId, SynthLabel)>, LabelError> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let err = |msg: String| LabelError::Row { line, msg };
        if rec.len() != 3 {
            return Err(err(format!("expected 3 fields, found {}", rec.len())));
        }
        let txid: TxId = rec[0].parse().map_err(|e| err(format!("txid: {e}")))?;
        let label = match (&rec[1], &rec[2]) {
            ("wasabi", "") => SynthLabel::Wasabi,
            ("tx0", "") => SynthLabel::Tx0,
            ("background", "") => SynthLabel::Background,
            ("whirlpool", pool) => {
                SynthLabel::Whirlpool(pool.parse().map_err(|e| err(format!("pool: {e}")))?)
            }
            (l, p) => return Err(err(format!("unknown label `{l}` with pool `{p}`"))),
        };
        out.push((txid, label));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels_round_trip() {
        let labels = vec![
            (TxId::from_bytes([1; 32]), SynthLabel::Wasabi),
            (TxId::from_bytes([2; 32]), SynthLabel::Whirlpool(PoolKind::Btc0_05)),
            (TxId::from_bytes([3; 32]), SynthLabel::Tx0),
            (TxId::from_bytes([4; 32]), SynthLabel::Background),
        ];
        let mut buf = Vec::new();
        write_labels_csv(&mut buf, &labels).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("txid,label,pool\n"));
        assert!(text.contains(",whirlpool,0.05\n"));
        assert_eq!(read_labels_csv(&buf[..]).unwrap(), labels);
    }

    #[test]
    fn rejects_unknown_label() {
        let data = format!("txid,label,pool\n{},mystery,\n", TxId::from_bytes([1; 32]));
        assert!(matches!(read_labels_csv(data.as_bytes()), Err(LabelError::Row { line: 2, .. })));
    }
}
