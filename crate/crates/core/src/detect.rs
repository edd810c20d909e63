//! Combined detection over a store: both Wasabi heuristics (optionally the
//! forest classifier) and the Whirlpool scanner.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;

use serde::Serialize;

use crate::chain::{ChainStore, TxId, TxIndex};
use crate::entity::{cluster_entities, likely_coinjoin, EntityMap};
use crate::forest::Forest;
use crate::par;
use crate::wasabi::{extract_features, scan_static, scan_wcdh, WcdhConfig};
use crate::whirlpool::{
    find_all_genesis, identify_tx0, scan_whirlpool, GenesisSets, Pool, PoolKind, WhirlpoolSet,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Wasabi,
    Samourai,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::Wasabi, Protocol::Samourai];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::Wasabi => "wasabi",
            Protocol::Samourai => "samourai",
        }
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Default)]
pub struct DetectConfig {
    pub wcdh: WcdhConfig,
    pub coordinators: HashSet<String>,
    pub pools: Vec<Pool>,
    /// Pinned genesis mixes; pools absent here fall back to the genesis
    /// predicate.
    pub genesis_override: GenesisSets,
}

impl DetectConfig {
    pub fn with_default_pools() -> Self {
        DetectConfig {
            pools: PoolKind::ALL.iter().map(|&k| Pool::new(k)).collect(),
            ..DetectConfig::default()
        }
    }
}

/// Detected CoinJoins per protocol and heuristic.
#[derive(Debug, Clone)]
pub struct DetectionSet {
    pub wasabi_static: BTreeSet<TxId>,
    pub wasabi_wcdh: BTreeSet<TxId>,
    pub wasabi_forest: Option<BTreeSet<TxId>>,
    pub genesis: GenesisSets,
    pub whirlpool: WhirlpoolSet,
    pub tx0: BTreeSet<TxId>,
    wasabi: HashSet<TxId>,
}

/// Co-spent clustering that skips every transaction the structural
/// pre-filter flags. Used for the cluster-size feature so that features never
/// depend on detection output.
pub fn prefilter_entities(store: &ChainStore) -> EntityMap {
    let txs = store.transactions();
    let flagged: HashSet<TxId> = par::filter_indices(txs, likely_coinjoin)
        .into_iter()
        .map(|i| txs[i].txid)
        .collect();
    cluster_entities(store, &flagged)
}

/// Transactions the forest labels Wasabi. Transactions with unresolved
/// inputs have no feature vector and are skipped.
pub fn scan_forest(store: &ChainStore, entities: &EntityMap, forest: &Forest) -> BTreeSet<TxId> {
    let txs = store.transactions();
    par::filter_indices(txs, |tx| match extract_features(tx, store, entities) {
        Ok(fv) => forest.predict(&fv.to_array()).is_wasabi(),
        Err(_) => false,
    })
    .into_iter()
    .map(|i| txs[i].txid)
    .collect()
}

pub fn detect(store: &ChainStore, cfg: &DetectConfig, forest: Option<&Forest>) -> DetectionSet {
    let wasabi_static: BTreeSet<TxId> = scan_static(store, &cfg.coordinators).into_iter().collect();
    let wasabi_wcdh: BTreeSet<TxId> = scan_wcdh(store, &cfg.wcdh).into_iter().collect();
    let wasabi_forest = forest.map(|f| scan_forest(store, &prefilter_entities(store), f));

    let mut genesis = find_all_genesis(store, &cfg.pools);
    for (pool, set) in &cfg.genesis_override {
        genesis.insert(*pool, set.clone());
    }
    let whirlpool = scan_whirlpool(store, &genesis);
    let tx0 = identify_tx0(store, &whirlpool);

    let mut wasabi: HashSet<TxId> = wasabi_static.iter().chain(&wasabi_wcdh).copied().collect();
    if let Some(f) = &wasabi_forest {
        wasabi.extend(f);
    }
    DetectionSet {
        wasabi_static,
        wasabi_wcdh,
        wasabi_forest,
        genesis,
        whirlpool,
        tx0,
        wasabi,
    }
}

impl DetectionSet {
    /// Protocol of a detected CoinJoin. A transaction flagged by both sides
    /// is reported as Wasabi.
    pub fn protocol_of(&self, txid: &TxId) -> Option<Protocol> {
        if self.wasabi.contains(txid) {
            Some(Protocol::Wasabi)
        } else if self.whirlpool.contains(txid) {
            Some(Protocol::Samourai)
        } else {
            None
        }
    }

    pub fn is_wasabi(&self, txid: &TxId) -> bool {
        self.wasabi.contains(txid)
    }

    pub fn is_coinjoin(&self, txid: &TxId) -> bool {
        self.protocol_of(txid).is_some()
    }

    pub fn wasabi_count(&self) -> usize {
        self.wasabi.len()
    }

    pub fn coinjoin_txids(&self) -> HashSet<TxId> {
        let mut all = self.wasabi.clone();
        all.extend(self.whirlpool.iter().map(|(t, _)| *t));
        all
    }

    /// Store positions of detected CoinJoins of `protocol`, ascending.
    pub fn indices(&self, store: &ChainStore, protocol: Protocol) -> Vec<TxIndex> {
        (0..store.len() as TxIndex)
            .filter(|&i| self.protocol_of(&store.tx(i).txid) == Some(protocol))
            .collect()
    }

    pub fn summary(&self) -> DetectionSummary {
        DetectionSummary {
            wasabi: self.wasabi.len(),
            wasabi_static: self.wasabi_static.len(),
            wasabi_wcdh: self.wasabi_wcdh.len(),
            wasabi_forest: self.wasabi_forest.as_ref().map(BTreeSet::len),
            samourai: self.whirlpool.len(),
            samourai_by_pool: self
                .whirlpool
                .count_by_pool()
                .into_iter()
                .map(|(p, c)| (p.label().to_owned(), c))
                .collect(),
            genesis_by_pool: self
                .genesis
                .iter()
                .map(|(p, s)| (p.label().to_owned(), s.len()))
                .collect(),
            tx0: self.tx0.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DetectionSummary {
    pub wasabi: usize,
    pub wasabi_static: usize,
    pub wasabi_wcdh: usize,
    pub wasabi_forest: Option<usize>,
    pub samourai: usize,
    pub samourai_by_pool: BTreeMap<String, usize>,
    pub genesis_by_pool: BTreeMap<String, usize>,
    pub tx0: usize,
}
