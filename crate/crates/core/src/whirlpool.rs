//! Samourai Whirlpool detection: the fixed 5-in/5-out structure, genesis
//! mix identification, the chronological chain scan from genesis seeds, and
//! Tx0 identification.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::Amount;
use crate::chain::{ChainStore, ParseError, Transaction, TxId, TxIndex};
use crate::par;

pub const MIX_INPUTS: usize = 5;
pub const MIX_OUTPUTS: usize = 5;
pub const DEFAULT_PREMIX_TOLERANCE: Amount = Amount::from_sat(110_000);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PoolKind {
    #[serde(rename = "0.001")]
    Btc0_001,
    #[serde(rename = "0.01")]
    Btc0_01,
    #[serde(rename = "0.05")]
    Btc0_05,
    #[serde(rename = "0.5")]
    Btc0_5,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PoolError {
    #[error("unknown pool `{0}` (expected 0.001, 0.01, 0.05 or 0.5)")]
    UnknownPool(String),
    #[error("{0} is not a Whirlpool denomination")]
    Denomination(Amount),
}

impl PoolKind {
    pub const ALL: [PoolKind; 4] = [
        PoolKind::Btc0_001,
        PoolKind::Btc0_01,
        PoolKind::Btc0_05,
        PoolKind::Btc0_5,
    ];

    pub const fn denomination(self) -> Amount {
        Amount::from_sat(match self {
            PoolKind::Btc0_001 => 100_000,
            PoolKind::Btc0_01 => 1_000_000,
            PoolKind::Btc0_05 => 5_000_000,
            PoolKind::Btc0_5 => 50_000_000,
        })
    }

    pub const fn label(self) -> &'static str {
        match self {
            PoolKind::Btc0_001 => "0.001",
            PoolKind::Btc0_01 => "0.01",
            PoolKind::Btc0_05 => "0.05",
            PoolKind::Btc0_5 => "0.5",
        }
    }

    pub fn from_denomination(value: Amount) -> Result<PoolKind, PoolError> {
        PoolKind::ALL
            .into_iter()
            .find(|p| p.denomination() == value)
            .ok_or(PoolError::Denomination(value))
    }
}

impl fmt::Display for PoolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PoolKind {
    type Err = PoolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PoolKind::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| PoolError::UnknownPool(s.to_owned()))
    }
}

/// A pool with the tolerance accepted above the denomination for premix
/// inputs of genesis mixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pool {
    pub kind: PoolKind,
    pub premix_tolerance: Amount,
}

impl Pool {
    pub const fn new(kind: PoolKind) -> Self {
        Pool {
            kind,
            premix_tolerance: DEFAULT_PREMIX_TOLERANCE,
        }
    }

    pub const fn with_tolerance(kind: PoolKind, premix_tolerance: Amount) -> Self {
        Pool {
            kind,
            premix_tolerance,
        }
    }

    pub const fn denomination(&self) -> Amount {
        self.kind.denomination()
    }

    /// Whether `value` fits the premix band `[d, d + tolerance]`.
    pub fn accepts_premix(&self, value: Amount) -> bool {
        let d = self.denomination();
        value >= d && value <= d + self.premix_tolerance
    }
}

/// Exactly five inputs, five outputs, every output value equal to the pool
/// denomination.
pub fn is_whirlpool_shape(tx: &Transaction, pool: &Pool) -> bool {
    tx.inputs.len() == MIX_INPUTS
        && tx.outputs.len() == MIX_OUTPUTS
        && tx.outputs.iter().all(|o| o.value == pool.denomination())
}

/// The pool whose shape `tx` matches, if any (at most one can).
pub fn shape_pool(tx: &Transaction) -> Option<PoolKind> {
    if tx.inputs.len() != MIX_INPUTS || tx.outputs.len() != MIX_OUTPUTS {
        return None;
    }
    let v = tx.outputs[0].value;
    if tx.outputs.iter().any(|o| o.value != v) {
        return None;
    }
    PoolKind::from_denomination(v).ok()
}

/// Mixes funded entirely by premix inputs: shape matches, every resolved
/// input value lies in the premix band, and no input comes from a
/// transaction that itself has the pool's mix shape. Inputs that do not
/// resolve are skipped, but at least one must resolve.
pub fn find_genesis_mixes(store: &ChainStore, pool: &Pool) -> BTreeSet<TxId> {
    let txs = store.transactions();
    par::filter_indices(txs, |tx| is_genesis_candidate(store, tx, pool))
        .into_iter()
        .map(|i| txs[i].txid)
        .collect()
}

fn is_genesis_candidate(store: &ChainStore, tx: &Transaction, pool: &Pool) -> bool {
    if !is_whirlpool_shape(tx, pool) {
        return false;
    }
    let mut resolved = 0;
    for input in &tx.inputs {
        let Some(parent) = store.get(&input.prev_txid) else {
            continue;
        };
        let Some(prev) = parent.outputs.get(input.prev_vout as usize) else {
            continue;
        };
        if !pool.accepts_premix(prev.value) || is_whirlpool_shape(parent, pool) {
            return false;
        }
        resolved += 1;
    }
    resolved > 0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MixInfo {
    pub pool: PoolKind,
    pub index: TxIndex,
    /// Earlier members of the same pool this mix spends from.
    pub parents: Vec<TxId>,
    pub remix_inputs: usize,
    pub is_genesis: bool,
}

/// Detected Whirlpool mixes with their parent links, kept in chain order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WhirlpoolSet {
    members: HashMap<TxId, MixInfo>,
    order: Vec<TxId>,
}

impl WhirlpoolSet {
    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn contains(&self, txid: &TxId) -> bool {
        self.members.contains_key(txid)
    }

    pub fn get(&self, txid: &TxId) -> Option<&MixInfo> {
        self.members.get(txid)
    }

    pub fn pool_of(&self, txid: &TxId) -> Option<PoolKind> {
        self.members.get(txid).map(|m| m.pool)
    }

    /// Members in chain order.
    pub fn iter(&self) -> impl Iterator<Item = (&TxId, &MixInfo)> {
        self.order.iter().map(move |t| (t, &self.members[t]))
    }

    pub fn txids(&self, pool: PoolKind) -> BTreeSet<TxId> {
        self.iter()
            .filter(|(_, m)| m.pool == pool)
            .map(|(t, _)| *t)
            .collect()
    }

    pub fn count_by_pool(&self) -> BTreeMap<PoolKind, usize> {
        let mut counts: BTreeMap<PoolKind, usize> = PoolKind::ALL.iter().map(|&p| (p, 0)).collect();
        for m in self.members.values() {
            *counts.get_mut(&m.pool).expect("all pools present") += 1;
        }
        counts
    }

    fn insert(&mut self, txid: TxId, info: MixInfo) {
        self.order.push(txid);
        self.members.insert(txid, info);
    }
}

pub type GenesisSets = BTreeMap<PoolKind, BTreeSet<TxId>>;

/// Genesis mixes of every pool, using each pool's tolerance.
pub fn find_all_genesis(store: &ChainStore, pools: &[Pool]) -> GenesisSets {
    pools
        .iter()
        .map(|p| (p.kind, find_genesis_mixes(store, p)))
        .collect()
}

/// One chronological pass: a transaction joins pool `p` when it is a pinned
/// genesis of `p`, or has `p`'s mix shape and spends an output of a mix
/// already in `p`'s set. Shapes are precomputed in parallel; membership is
/// sequential.
pub fn scan_whirlpool(store: &ChainStore, genesis: &GenesisSets) -> WhirlpoolSet {
    let txs = store.transactions();
    let shapes: Vec<Option<PoolKind>> = par::map(txs, shape_pool);
    let genesis_pool: HashMap<TxId, PoolKind> = genesis
        .iter()
        .flat_map(|(&p, set)| set.iter().map(move |&t| (t, p)))
        .collect();

    let mut set = WhirlpoolSet::default();
    for (i, tx) in txs.iter().enumerate() {
        let pinned = genesis_pool.get(&tx.txid).copied();
        let Some(pool) = pinned.or(shapes[i]) else {
            continue;
        };
        if pinned.is_some() && shapes[i] != pinned {
            log::warn!("pinned genesis {} does not have the {} pool shape", tx.txid, pool);
        }
        let mut parents: Vec<TxId> = Vec::new();
        let mut remix_inputs = 0;
        for input in &tx.inputs {
            if set.pool_of(&input.prev_txid) == Some(pool) {
                remix_inputs += 1;
                if !parents.contains(&input.prev_txid) {
                    parents.push(input.prev_txid);
                }
            }
        }
        if pinned.is_none() && parents.is_empty() {
            continue;
        }
        set.insert(
            tx.txid,
            MixInfo {
                pool,
                index: i as TxIndex,
                parents,
                remix_inputs,
                is_genesis: pinned.is_some(),
            },
        );
    }
    set
}

/// Transactions with at least one output spent as a premix (non-remix)
/// input of a detected mix.
pub fn identify_tx0(store: &ChainStore, wp: &WhirlpoolSet) -> BTreeSet<TxId> {
    let mut out = BTreeSet::new();
    for (_, mix) in wp.iter() {
        for input in &store.tx(mix.index).inputs {
            if wp.pool_of(&input.prev_txid) != Some(mix.pool) && store.contains(&input.prev_txid) {
                out.insert(input.prev_txid);
            }
        }
    }
    out
}

/// Parses one txid per line (blank lines and `#` comments skipped).
pub fn parse_txid_list(text: &str) -> Result<BTreeSet<TxId>, ParseError> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::parse)
        .collect()
}

/// Writes `txid,pool,height,remix_input_count` rows in chain order.
pub fn write_whirlpool_csv<W: Write>(
    out: W,
    store: &ChainStore,
    wp: &WhirlpoolSet,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["txid", "pool", "height", "remix_input_count"])?;
    for (txid, m) in wp.iter() {
        w.write_record([
            txid.to_string(),
            m.pool.label().to_owned(),
            store.tx(m.index).block_height.to_string(),
            m.remix_inputs.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::Builder;

    const D: u64 = 1_000_000;
    const PREMIX: u64 = 1_050_000;

    fn pool() -> Pool {
        Pool::new(PoolKind::Btc0_01)
    }

    /// Tx0 with `n` premix outputs.
    fn tx0(b: &mut Builder, tag: &str, n: usize, premix: u64) -> TxId {
        let f = b.fund_values(&[(&format!("{tag}-src"), 100_000_000)]);
        let names: Vec<String> = (0..n).map(|i| format!("{tag}-pre{i}")).collect();
        let outs: Vec<(&str, u64)> = names.iter().map(|a| (a.as_str(), premix)).collect();
        b.spend_values(&[(f, 0)], &outs)
    }

    fn mix(b: &mut Builder, tag: &str, ins: &[(TxId, u32)], value: u64) -> TxId {
        let names: Vec<String> = (0..5).map(|i| format!("{tag}-out{i}")).collect();
        let outs: Vec<(&str, u64)> = names.iter().map(|a| (a.as_str(), value)).collect();
        b.spend_values(ins, &outs)
    }

    #[test]
    fn shape_examples() {
        let mut b = Builder::new();
        let t0 = tx0(&mut b, "a", 5, PREMIX);
        let ins: Vec<_> = (0..5).map(|v| (t0, v)).collect();
        let good = mix(&mut b, "g", &ins, D);
        let t1 = tx0(&mut b, "b", 5, PREMIX);
        let names: Vec<String> = (0..5).map(|i| format!("x{i}")).collect();
        let mut outs: Vec<(&str, u64)> = names.iter().map(|a| (a.as_str(), D)).collect();
        outs[4].1 = D + 1;
        let off = b.spend_values(&(0..5).map(|v| (t1, v)).collect::<Vec<_>>(), &outs);
        let t2 = tx0(&mut b, "c", 4, 1_300_000);
        let four = mix(&mut b, "f", &(0..4).map(|v| (t2, v)).collect::<Vec<_>>(), D);
        let store = b.store();
        assert!(is_whirlpool_shape(store.get(&good).unwrap(), &pool()));
        assert!(!is_whirlpool_shape(store.get(&good).unwrap(), &Pool::new(PoolKind::Btc0_05)));
        assert!(!is_whirlpool_shape(store.get(&off).unwrap(), &pool()));
        assert!(!is_whirlpool_shape(store.get(&four).unwrap(), &pool()));
        assert_eq!(shape_pool(store.get(&good).unwrap()), Some(PoolKind::Btc0_01));
        assert_eq!(shape_pool(store.get(&off).unwrap()), None);
    }

    #[test]
    fn genesis_requires_all_premix_inputs() {
        let mut b = Builder::new();
        let t0 = tx0(&mut b, "a", 5, PREMIX);
        let g = mix(&mut b, "g", &(0..5).map(|v| (t0, v)).collect::<Vec<_>>(), D);
        let t1 = tx0(&mut b, "b", 4, PREMIX);
        // One remix input (exactly D, inside the band) + four premix.
        let mut ins: Vec<_> = (0..4).map(|v| (t1, v)).collect();
        ins.push((g, 0));
        let m1 = mix(&mut b, "m1", &ins, D);
        let store = b.store();
        let genesis = find_genesis_mixes(&store, &pool());
        assert_eq!(genesis, BTreeSet::from([g]));
        assert!(!genesis.contains(&m1));
    }

    #[test]
    fn scan_follows_remix_links() {
        let mut b = Builder::new();
        let t0 = tx0(&mut b, "a", 5, PREMIX);
        let g = mix(&mut b, "g", &(0..5).map(|v| (t0, v)).collect::<Vec<_>>(), D);
        let t1 = tx0(&mut b, "b", 4, PREMIX);
        let mut ins: Vec<_> = (0..4).map(|v| (t1, v)).collect();
        ins.push((g, 0));
        let m1 = mix(&mut b, "m1", &ins, D);
        // Shape-matching, zero remix inputs, premix out of band.
        let t2 = tx0(&mut b, "c", 5, D + 500_000);
        let stray = mix(&mut b, "s", &(0..5).map(|v| (t2, v)).collect::<Vec<_>>(), D);
        let store = b.store();

        let genesis = find_all_genesis(&store, &[pool()]);
        assert_eq!(genesis[&PoolKind::Btc0_01], BTreeSet::from([g]));
        let wp = scan_whirlpool(&store, &genesis);
        assert_eq!(wp.len(), 2);
        assert!(wp.get(&g).unwrap().is_genesis);
        assert_eq!(wp.get(&m1).unwrap().parents, vec![g]);
        assert_eq!(wp.get(&m1).unwrap().remix_inputs, 1);
        assert!(!wp.contains(&stray));

        assert_eq!(identify_tx0(&store, &wp), BTreeSet::from([t0, t1]));

        let mut buf = Vec::new();
        write_whirlpool_csv(&mut buf, &store, &wp).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "txid,pool,height,remix_input_count");
        assert_eq!(lines[2], format!("{m1},0.01,{},1", store.get(&m1).unwrap().block_height));
    }

    #[test]
    fn tx0_requires_spend_into_mix() {
        let mut b = Builder::new();
        let t0 = tx0(&mut b, "a", 7, PREMIX);
        let g = mix(&mut b, "g", &(0..5).map(|v| (t0, v)).collect::<Vec<_>>(), D);
        let unused = tx0(&mut b, "u", 3, PREMIX);
        let store = b.store();
        let wp = scan_whirlpool(&store, &find_all_genesis(&store, &[pool()]));
        assert!(wp.contains(&g));
        let tx0s = identify_tx0(&store, &wp);
        assert!(tx0s.contains(&t0));
        assert!(!tx0s.contains(&unused));
    }

    #[test]
    fn pool_parsing() {
        assert_eq!("0.05".parse::<PoolKind>().unwrap(), PoolKind::Btc0_05);
        assert!("0.2".parse::<PoolKind>().is_err());
        assert_eq!(PoolKind::from_denomination(Amount::from_sat(100_000)).unwrap(), PoolKind::Btc0_001);
        assert!(PoolKind::from_denomination(Amount::from_sat(100_001)).is_err());
        assert!(pool().accepts_premix(Amount::from_sat(D)));
        assert!(pool().accepts_premix(Amount::from_sat(D + 110_000)));
        assert!(!pool().accepts_premix(Amount::from_sat(D + 110_001)));
        assert!(!pool().accepts_premix(Amount::from_sat(D - 1)));
    }

    #[test]
    fn txid_list_parsing() {
        let text = format!("# pinned\n{}\n\n", TxId::from_bytes([3; 32]));
        assert_eq!(parse_txid_list(&text).unwrap().len(), 1);
        assert!(parse_txid_list("xyz\n").is_err());
    }
}
