use std::collections::{BTreeMap, HashMap};
use std::fmt;

use chrono::NaiveDate;

use super::month::{day_of, MonthKey};
use crate::amount::Amount;
use crate::chain::{ChainStore, OutPoint, Transaction, TxIndex};
use crate::detect::{DetectionSet, Protocol};
use crate::par;
use crate::whirlpool::PoolKind;

/// A group of CoinJoins whose coins are tracked as one mixing ecosystem.
/// Remix links are only recognised inside a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Wasabi,
    Samourai,
    Pool(PoolKind),
}

impl Stream {
    pub fn all() -> Vec<Stream> {
        let mut v = vec![Stream::Wasabi, Stream::Samourai];
        v.extend(PoolKind::ALL.iter().map(|&p| Stream::Pool(p)));
        v
    }

    pub fn protocol(self) -> Protocol {
        match self {
            Stream::Wasabi => Protocol::Wasabi,
            _ => Protocol::Samourai,
        }
    }

    /// Smallest mixed denomination: 0.01 BTC for Wasabi, the pool
    /// denomination per pool, the smallest pool for Samourai overall.
    pub fn beta(self) -> Amount {
        match self {
            Stream::Wasabi => Amount::from_sat(1_000_000),
            Stream::Samourai => PoolKind::Btc0_001.denomination(),
            Stream::Pool(p) => p.denomination(),
        }
    }

    pub fn contains(self, detections: &DetectionSet, tx: &Transaction) -> bool {
        match self {
            Stream::Wasabi => detections.is_wasabi(&tx.txid),
            Stream::Samourai => detections.protocol_of(&tx.txid) == Some(Protocol::Samourai),
            Stream::Pool(p) => {
                detections.protocol_of(&tx.txid) == Some(Protocol::Samourai)
                    && detections.whirlpool.pool_of(&tx.txid) == Some(p)
            }
        }
    }
}

impl fmt::Display for Stream {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stream::Wasabi => f.write_str("wasabi"),
            Stream::Samourai => f.write_str("samourai"),
            Stream::Pool(p) => write!(f, "samourai-{p}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum OutputStatus {
    RemixSpent,
    MixedExit,
    Unspent,
}

impl OutputStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputStatus::RemixSpent => "remix-spent",
            OutputStatus::MixedExit => "mixed-exit",
            OutputStatus::Unspent => "unspent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerEntry {
    pub outpoint: OutPoint,
    pub coinjoin: TxIndex,
    pub value: Amount,
    /// Anonymity-bearing output: every Whirlpool output, and Wasabi outputs
    /// whose value occurs at least three times in the transaction.
    pub eligible: bool,
    pub status: OutputStatus,
    pub spender: Option<TxIndex>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FlowKind {
    Fresh,
    Remix,
    MixedExit,
    ChangeExit,
    Fee,
}

/// One dated movement. Inputs and fees are dated by the CoinJoin, exits by
/// the spending transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowEvent {
    pub day: NaiveDate,
    pub kind: FlowKind,
    pub amount: Amount,
    pub coinjoin: TxIndex,
    /// CoinJoin input index for `Fresh`/`Remix`, output index for exits.
    pub slot: u32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FlowTotals {
    pub coinjoins: usize,
    pub fresh_in: Amount,
    pub remix_in: Amount,
    pub remix_spent: Amount,
    pub mixed_exit: Amount,
    pub change_exit: Amount,
    pub unspent_eligible: Amount,
    pub unspent_change: Amount,
    pub fees: Amount,
    /// CoinJoin inputs whose prevout is not in the store; they carry no
    /// value in any total and break the identity below.
    pub unresolved_inputs: usize,
}

impl FlowTotals {
    pub fn inflow(&self) -> Amount {
        self.fresh_in + self.remix_in
    }

    pub fn outflow(&self) -> Amount {
        self.remix_spent
            + self.mixed_exit
            + self.change_exit
            + self.unspent_eligible
            + self.unspent_change
            + self.fees
    }

    /// Value conservation over the stream's CoinJoins:
    /// fresh + remix-in = remix-spent + exits + unspent + fees.
    pub fn is_balanced(&self) -> bool {
        self.inflow() == self.outflow()
    }
}

/// Per-stream account of every CoinJoin output and every dated movement.
#[derive(Debug, Clone)]
pub struct StreamLedger {
    pub stream: Stream,
    pub entries: Vec<LedgerEntry>,
    pub events: Vec<FlowEvent>,
    pub totals: FlowTotals,
}

impl StreamLedger {
    pub fn build(store: &ChainStore, detections: &DetectionSet, stream: Stream) -> StreamLedger {
        let txs = store.transactions();
        let member = |tx: &Transaction| stream.contains(detections, tx);
        let mut entries = Vec::new();
        let mut events = Vec::new();
        let mut totals = FlowTotals::default();

        for (idx, tx) in txs.iter().enumerate() {
            if !member(tx) {
                continue;
            }
            let idx = idx as TxIndex;
            let day = day_of(tx.timestamp);
            totals.coinjoins += 1;

            for (slot, input) in tx.inputs.iter().enumerate() {
                let Some(prev) = store.output(&input.outpoint()) else {
                    totals.unresolved_inputs += 1;
                    continue;
                };
                let source = store.get(&input.prev_txid).expect("resolved input has a source");
                let kind = if member(source) {
                    totals.remix_in += prev.value;
                    FlowKind::Remix
                } else {
                    totals.fresh_in += prev.value;
                    FlowKind::Fresh
                };
                events.push(FlowEvent {
                    day,
                    kind,
                    amount: prev.value,
                    coinjoin: idx,
                    slot: slot as u32,
                });
            }
            if let Some(fee) = store.fee(tx) {
                totals.fees += fee;
                events.push(FlowEvent {
                    day,
                    kind: FlowKind::Fee,
                    amount: fee,
                    coinjoin: idx,
                    slot: 0,
                });
            }

            let mut multiplicity: HashMap<Amount, usize> = HashMap::new();
            for o in &tx.outputs {
                *multiplicity.entry(o.value).or_insert(0) += 1;
            }
            for (vout, out) in tx.outputs.iter().enumerate() {
                let outpoint = OutPoint {
                    txid: tx.txid,
                    vout: vout as u32,
                };
                let eligible = stream.protocol() == Protocol::Samourai || multiplicity[&out.value] >= 3;
                let spender = store.spender(&outpoint);
                let status = match spender {
                    None => OutputStatus::Unspent,
                    Some(s) if member(store.tx(s)) => OutputStatus::RemixSpent,
                    Some(_) => OutputStatus::MixedExit,
                };
                match (status, eligible) {
                    (OutputStatus::Unspent, true) => totals.unspent_eligible += out.value,
                    (OutputStatus::Unspent, false) => totals.unspent_change += out.value,
                    (OutputStatus::RemixSpent, _) => totals.remix_spent += out.value,
                    (OutputStatus::MixedExit, e) => {
                        let kind = if e {
                            totals.mixed_exit += out.value;
                            FlowKind::MixedExit
                        } else {
                            totals.change_exit += out.value;
                            FlowKind::ChangeExit
                        };
                        let s = spender.expect("exit has a spender");
                        events.push(FlowEvent {
                            day: day_of(store.tx(s).timestamp),
                            kind,
                            amount: out.value,
                            coinjoin: idx,
                            slot: vout as u32,
                        });
                    }
                }
                entries.push(LedgerEntry {
                    outpoint,
                    coinjoin: idx,
                    value: out.value,
                    eligible,
                    status,
                    spender,
                });
            }
        }
        StreamLedger {
            stream,
            entries,
            events,
            totals,
        }
    }

    /// Per-month sums by kind.
    pub fn monthly(&self) -> BTreeMap<MonthKey, BTreeMap<FlowKind, Amount>> {
        let mut out: BTreeMap<MonthKey, BTreeMap<FlowKind, Amount>> = BTreeMap::new();
        for e in &self.events {
            *out.entry(MonthKey::of_date(e.day))
                .or_default()
                .entry(e.kind)
                .or_insert(Amount::ZERO) += e.amount;
        }
        out
    }

    /// Dated amounts of one kind, for currency conversion.
    pub fn dated(&self, kind: FlowKind) -> Vec<(NaiveDate, Amount)> {
        self.events
            .iter()
            .filter(|e| e.kind == kind)
            .map(|e| (e.day, e.amount))
            .collect()
    }
}

/// Ledgers for every stream.
#[derive(Debug, Clone)]
pub struct MixFlowLedger {
    pub streams: BTreeMap<Stream, StreamLedger>,
}

impl MixFlowLedger {
    pub fn build(store: &ChainStore, detections: &DetectionSet) -> MixFlowLedger {
        let streams = Stream::all();
        let ledgers = par::map(&streams, |&s| StreamLedger::build(store, detections, s));
        MixFlowLedger {
            streams: streams.into_iter().zip(ledgers).collect(),
        }
    }

    pub fn stream(&self, s: Stream) -> &StreamLedger {
        &self.streams[&s]
    }

    pub fn protocol(&self, p: Protocol) -> &StreamLedger {
        self.stream(match p {
            Protocol::Wasabi => Stream::Wasabi,
            Protocol::Samourai => Stream::Samourai,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect, DetectConfig};
    use crate::testutil::Builder;

    const D: u64 = 1_000_000;

    /// Genesis mix, one remix, one exit to a payment and one unspent chain.
    fn chain() -> (ChainStore, Vec<crate::chain::TxId>) {
        let mut b = Builder::new();
        let f = b.fund_values(&[("src", 100_000_000)]);
        let pre: Vec<String> = (0..9).map(|i| format!("pre{i}")).collect();
        let outs: Vec<(&str, u64)> = pre.iter().map(|a| (a.as_str(), 1_050_000)).collect();
        let tx0 = b.spend_values(&[(f, 0)], &outs);
        let g_out: Vec<String> = (0..5).map(|i| format!("g{i}")).collect();
        let g = b.spend_values(
            &(0..5).map(|v| (tx0, v)).collect::<Vec<_>>(),
            &g_out.iter().map(|a| (a.as_str(), D)).collect::<Vec<_>>(),
        );
        let m_out: Vec<String> = (0..5).map(|i| format!("m{i}")).collect();
        let mut ins: Vec<_> = (5..9).map(|v| (tx0, v)).collect();
        ins.push((g, 0));
        let m = b.spend_values(&ins, &m_out.iter().map(|a| (a.as_str(), D)).collect::<Vec<_>>());
        let pay = b.spend_values(&[(g, 1)], &[("shop", 990_000)]);
        (b.store(), vec![tx0, g, m, pay])
    }

    #[test]
    fn statuses_and_identity() {
        let (store, ids) = chain();
        let d = detect(&store, &DetectConfig::with_default_pools(), None);
        assert_eq!(d.whirlpool.len(), 2);
        let l = StreamLedger::build(&store, &d, Stream::Samourai);
        assert_eq!(l.entries.len(), 10);
        let status = |txid, vout| {
            l.entries
                .iter()
                .find(|e| e.outpoint == OutPoint { txid, vout })
                .unwrap()
                .status
        };
        assert_eq!(status(ids[1], 0), OutputStatus::RemixSpent);
        assert_eq!(status(ids[1], 1), OutputStatus::MixedExit);
        assert_eq!(status(ids[2], 3), OutputStatus::Unspent);

        let t = l.totals;
        assert_eq!(t.fresh_in, Amount::from_sat(9 * 1_050_000));
        assert_eq!(t.remix_in, Amount::from_sat(D));
        assert_eq!(t.remix_spent, Amount::from_sat(D));
        assert_eq!(t.mixed_exit, Amount::from_sat(D));
        assert_eq!(t.unspent_eligible, Amount::from_sat(8 * D));
        assert_eq!(t.fees, Amount::from_sat(9 * 50_000));
        assert!(t.is_balanced());
        assert_eq!(l.stream.beta(), Amount::from_sat(100_000));
    }

    #[test]
    fn pool_streams_split_the_protocol() {
        let (store, _) = chain();
        let d = detect(&store, &DetectConfig::with_default_pools(), None);
        let all = MixFlowLedger::build(&store, &d);
        let pool = all.stream(Stream::Pool(PoolKind::Btc0_01)).totals;
        assert_eq!(pool, all.protocol(Protocol::Samourai).totals);
        assert_eq!(all.stream(Stream::Pool(PoolKind::Btc0_05)).totals, FlowTotals::default());
        assert_eq!(all.protocol(Protocol::Wasabi).entries.len(), 0);
    }
}
