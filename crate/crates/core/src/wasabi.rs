//! Wasabi CoinJoin detection: the static-coordinator rule, the four-clause
//! threshold heuristic (WCDH) and the transaction feature extractor used by
//! the forest classifier.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::amount::Amount;
use crate::chain::{ChainStore, StoreError, Transaction, TxId};
use crate::entity::EntityMap;
use crate::par;

/// Thresholds of the WCDH predicate. Defaults: ten equal outputs, mode in
/// 0.1 ± 0.02 BTC (inclusive), two unique values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WcdhConfig {
    pub min_equal_outputs: usize,
    pub mode_center: Amount,
    pub mode_tolerance: Amount,
    pub min_unique_values: usize,
}

impl Default for WcdhConfig {
    fn default() -> Self {
        WcdhConfig {
            min_equal_outputs: 10,
            mode_center: Amount::from_sat(10_000_000),
            mode_tolerance: Amount::from_sat(2_000_000),
            min_unique_values: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),
    #[error("mode tolerance {tolerance} must be below mode center {center}")]
    Tolerance { tolerance: Amount, center: Amount },
}

impl WcdhConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.min_equal_outputs == 0 {
            return Err(ConfigError::ZeroCount("min_equal_outputs"));
        }
        if self.min_unique_values == 0 {
            return Err(ConfigError::ZeroCount("min_unique_values"));
        }
        if self.mode_tolerance >= self.mode_center {
            return Err(ConfigError::Tolerance {
                tolerance: self.mode_tolerance,
                center: self.mode_center,
            });
        }
        Ok(())
    }
}

fn value_counts(tx: &Transaction) -> HashMap<Amount, usize> {
    let mut counts = HashMap::with_capacity(tx.outputs.len());
    for o in &tx.outputs {
        *counts.entry(o.value).or_insert(0) += 1;
    }
    counts
}

/// Early-Wasabi rule: pays one of the static coordinator addresses and has
/// at least three outputs of one identical value.
pub fn detect_wasabi_static(tx: &Transaction, coordinators: &HashSet<String>) -> bool {
    tx.outputs.iter().any(|o| coordinators.contains(&o.address))
        && value_counts(tx).values().any(|&c| c >= 3)
}

/// Four-clause WCDH predicate. When several values share the maximal
/// multiplicity, the transaction matches if any of them lies in the band.
pub fn detect_wasabi_wcdh(tx: &Transaction, cfg: &WcdhConfig) -> bool {
    let counts = value_counts(tx);
    let Some(&mode_count) = counts.values().max() else {
        return false;
    };
    if mode_count < cfg.min_equal_outputs || tx.inputs.len() < mode_count {
        return false;
    }
    let unique = counts.values().filter(|&&c| c == 1).count();
    if unique < cfg.min_unique_values {
        return false;
    }
    counts.iter().any(|(v, &c)| {
        c == mode_count && v.abs_diff(cfg.mode_center) <= cfg.mode_tolerance
    })
}

pub const FEATURE_NAMES: [&str; 8] = [
    "num_uniq_output_val",
    "ratio_num_input_num_output",
    "min_output_val",
    "rng_output_val",
    "mean_dec_places",
    "num_input_reuse",
    "mean_output_cluster_size",
    "is_native_segwit",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub num_uniq_output_val: u32,
    pub ratio_num_input_num_output: f64,
    pub min_output_val: Amount,
    pub rng_output_val: Amount,
    pub mean_dec_places: f64,
    pub num_input_reuse: u32,
    pub mean_output_cluster_size: f64,
    pub is_native_segwit: bool,
}

impl FeatureVector {
    /// Numeric row in `FEATURE_NAMES` order; amounts in satoshis, the
    /// boolean as 0/1.
    pub fn to_array(&self) -> [f64; 8] {
        [
            f64::from(self.num_uniq_output_val),
            self.ratio_num_input_num_output,
            self.min_output_val.to_sat() as f64,
            self.rng_output_val.to_sat() as f64,
            self.mean_dec_places,
            f64::from(self.num_input_reuse),
            self.mean_output_cluster_size,
            if self.is_native_segwit { 1.0 } else { 0.0 },
        ]
    }
}

/// Computes the eight transaction features. Only `tx`, the outputs its
/// inputs spend, and the cluster sizes of its output addresses are read.
pub fn extract_features(
    tx: &Transaction,
    store: &ChainStore,
    entities: &EntityMap,
) -> Result<FeatureVector, StoreError> {
    let mut prev_addresses: HashSet<&str> = HashSet::with_capacity(tx.inputs.len());
    let mut all_segwit = true;
    for input in &tx.inputs {
        let op = input.outpoint();
        let prev = store.output(&op).ok_or(StoreError::UnknownOutpoint(op))?;
        all_segwit &= prev.script.is_p2wpkh();
        prev_addresses.insert(&prev.address);
    }

    let n_out = tx.outputs.len();
    let mut distinct: HashSet<Amount> = HashSet::with_capacity(n_out);
    let mut min = Amount::from_sat(u64::MAX);
    let mut max = Amount::ZERO;
    let mut dec_places = 0u32;
    let mut cluster_total = 0u64;
    let mut output_addresses: HashSet<&str> = HashSet::with_capacity(n_out);
    for o in &tx.outputs {
        distinct.insert(o.value);
        min = min.min(o.value);
        max = max.max(o.value);
        dec_places += o.value.decimal_places();
        cluster_total += u64::from(entities.cluster_size(&o.address));
        all_segwit &= o.script.is_p2wpkh();
        output_addresses.insert(&o.address);
    }
    let reuse = prev_addresses
        .iter()
        .filter(|a| output_addresses.contains(*a))
        .count();

    Ok(FeatureVector {
        num_uniq_output_val: distinct.len() as u32,
        ratio_num_input_num_output: tx.inputs.len() as f64 / n_out as f64,
        min_output_val: min,
        rng_output_val: max - min,
        mean_dec_places: f64::from(dec_places) / n_out as f64,
        num_input_reuse: reuse as u32,
        mean_output_cluster_size: cluster_total as f64 / n_out as f64,
        is_native_segwit: all_segwit,
    })
}

/// Txids matching WCDH, in store order.
pub fn scan_wcdh(store: &ChainStore, cfg: &WcdhConfig) -> Vec<TxId> {
    let txs = store.transactions();
    par::filter_indices(txs, |tx| detect_wasabi_wcdh(tx, cfg))
        .into_iter()
        .map(|i| txs[i].txid)
        .collect()
}

/// Txids matching the static-coordinator rule, in store order.
pub fn scan_static(store: &ChainStore, coordinators: &HashSet<String>) -> Vec<TxId> {
    if coordinators.is_empty() {
        return Vec::new();
    }
    let txs = store.transactions();
    par::filter_indices(txs, |tx| detect_wasabi_static(tx, coordinators))
        .into_iter()
        .map(|i| txs[i].txid)
        .collect()
}

/// Features for a batch of transactions (all must be in `store`).
pub fn extract_features_batch(
    txs: &[&Transaction],
    store: &ChainStore,
    entities: &EntityMap,
) -> Result<Vec<FeatureVector>, StoreError> {
    par::map(txs, |tx| extract_features(tx, store, entities))
        .into_iter()
        .collect()
}

/// Reads a coordinator address list: one address per line, blank lines and
/// `#` comments ignored.
pub fn parse_coordinator_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_owned)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{ScriptClass, TxInput, TxOutput};
    use crate::entity::cluster_entities;
    use crate::testutil::Builder;
    use proptest::prelude::*;

    const BTC_0_1: u64 = 10_000_000;

    fn shaped(n_inputs: usize, outputs: &[(u64, &str)]) -> Transaction {
        Transaction {
            txid: TxId::from_bytes([1; 32]),
            block_height: 1,
            timestamp: 0,
            inputs: (0..n_inputs)
                .map(|i| TxInput {
                    prev_txid: TxId::from_bytes([2; 32]),
                    prev_vout: i as u32,
                })
                .collect(),
            outputs: outputs
                .iter()
                .map(|&(v, a)| TxOutput {
                    value: Amount::from_sat(v),
                    address: a.into(),
                    script: ScriptClass::P2wpkh,
                })
                .collect(),
        }
    }

    fn wasabi_like(n_inputs: usize, mix_value: u64, mix_count: usize, changes: &[u64]) -> Transaction {
        let mut outs: Vec<(u64, &str)> = vec![(mix_value, "m"); mix_count];
        outs.extend(changes.iter().map(|&c| (c, "c")));
        shaped(n_inputs, &outs)
    }

    #[test]
    fn wcdh_examples() {
        let cfg = WcdhConfig::default();
        let changes = [1_234_567, 2_345_678, 3_456_789];
        assert!(detect_wasabi_wcdh(&wasabi_like(15, BTC_0_1, 12, &changes), &cfg));
        assert!(!detect_wasabi_wcdh(&wasabi_like(15, 2 * BTC_0_1, 12, &changes), &cfg));
        assert!(!detect_wasabi_wcdh(&wasabi_like(9, BTC_0_1, 12, &changes), &cfg));
    }

    #[test]
    fn wcdh_single_clause_boundaries() {
        let cfg = WcdhConfig::default();
        let ch = [1_111_111, 2_222_222];
        // (a) nine equal outputs
        assert!(!detect_wasabi_wcdh(&wasabi_like(20, BTC_0_1, 9, &ch), &cfg));
        assert!(detect_wasabi_wcdh(&wasabi_like(20, BTC_0_1, 10, &ch), &cfg));
        // (b) band is inclusive on both ends
        assert!(detect_wasabi_wcdh(&wasabi_like(20, 12_000_000, 10, &ch), &cfg));
        assert!(detect_wasabi_wcdh(&wasabi_like(20, 8_000_000, 10, &ch), &cfg));
        assert!(!detect_wasabi_wcdh(&wasabi_like(20, 12_000_001, 10, &ch), &cfg));
        assert!(!detect_wasabi_wcdh(&wasabi_like(20, 7_999_999, 10, &ch), &cfg));
        // (c) one unique value only
        assert!(!detect_wasabi_wcdh(&wasabi_like(20, BTC_0_1, 10, &[5, 6, 6]), &cfg));
        // (d) inputs == mode count passes, one fewer fails
        assert!(detect_wasabi_wcdh(&wasabi_like(10, BTC_0_1, 10, &ch), &cfg));
        assert!(!detect_wasabi_wcdh(&wasabi_like(9, BTC_0_1, 10, &ch), &cfg));
    }

    #[test]
    fn wcdh_tie_accepts_any_in_band_mode() {
        let cfg = WcdhConfig::default();
        let mut outs: Vec<(u64, &str)> = vec![(2 * BTC_0_1, "a"); 10];
        outs.extend(vec![(BTC_0_1, "b"); 10]);
        outs.extend([(7, "c"), (8, "d")]);
        assert!(detect_wasabi_wcdh(&shaped(20, &outs), &cfg));
        let out_of_band: Vec<(u64, &str)> = outs
            .iter()
            .map(|&(v, a)| if v == BTC_0_1 { (3 * BTC_0_1, a) } else { (v, a) })
            .collect();
        assert!(!detect_wasabi_wcdh(&shaped(20, &out_of_band), &cfg));
    }

    #[test]
    fn static_rule_examples() {
        let coord: HashSet<String> = parse_coordinator_list("# list\ncoord1\n\ncoord2\n");
        assert_eq!(coord.len(), 2);
        let three_equal = shaped(3, &[(BTC_0_1, "x"), (BTC_0_1, "y"), (BTC_0_1, "z"), (5, "coord1")]);
        assert!(detect_wasabi_static(&three_equal, &coord));
        let distinct = shaped(3, &[(1, "x"), (2, "y"), (3, "z"), (5, "coord1")]);
        assert!(!detect_wasabi_static(&distinct, &coord));
        let no_coord = shaped(5, &[(BTC_0_1, "a"); 5]);
        assert!(!detect_wasabi_static(&no_coord, &coord));
    }

    #[test]
    fn config_validation() {
        assert!(WcdhConfig::default().validate().is_ok());
        let bad = WcdhConfig {
            mode_tolerance: Amount::from_sat(BTC_0_1),
            ..WcdhConfig::default()
        };
        assert!(matches!(bad.validate(), Err(ConfigError::Tolerance { .. })));
        let zero = WcdhConfig {
            min_equal_outputs: 0,
            ..WcdhConfig::default()
        };
        assert_eq!(zero.validate(), Err(ConfigError::ZeroCount("min_equal_outputs")));
    }

    #[test]
    fn feature_example_arithmetic() {
        let mut b = Builder::new();
        let f = b.fund_values(&[("a1", 30_000_000)]);
        let t = b.spend_values(&[(f, 0)], &[("o1", BTC_0_1), ("o2", BTC_0_1), ("o3", 5_000_000)]);
        let store = b.store();
        let entities = cluster_entities(&store, &HashSet::new());
        let fv = extract_features(store.get(&t).unwrap(), &store, &entities).unwrap();
        assert_eq!(fv.num_uniq_output_val, 2);
        assert_eq!(fv.rng_output_val, Amount::from_sat(5_000_000));
        assert_eq!(fv.min_output_val, Amount::from_sat(5_000_000));
        assert!(fv.is_native_segwit);
        assert_eq!(fv.mean_dec_places, (1.0 + 1.0 + 2.0) / 3.0);
        assert_eq!(fv.ratio_num_input_num_output, 1.0 / 3.0);
        assert_eq!(fv.num_input_reuse, 0);
        assert_eq!(fv.mean_output_cluster_size, 1.0);
        assert_eq!(fv.to_array()[7], 1.0);
    }

    #[test]
    fn feature_input_reuse_and_cluster_size() {
        let mut b = Builder::new();
        let f = b.fund(&["a1", "a2"]);
        let t = b.spend_values(&[(f, 0), (f, 1)], &[("a1", 5), ("z", 6)]);
        let store = b.store();
        let entities = cluster_entities(&store, &HashSet::new());
        let fv = extract_features(store.get(&t).unwrap(), &store, &entities).unwrap();
        assert_eq!(fv.num_input_reuse, 1);
        // a1 is in the {a1, a2} cluster, z is alone.
        assert_eq!(fv.mean_output_cluster_size, 1.5);
    }

    #[test]
    fn non_segwit_prevout_clears_flag() {
        let mut b = Builder::new();
        let f = b.fund(&["legacy"]);
        let t = b.spend(&[(f, 0)], &["x"]);
        let mut txs = b.transactions().to_vec();
        txs[0].outputs[0].script = ScriptClass::Other("p2pkh".into());
        let store = ChainStore::build(txs).unwrap();
        let entities = cluster_entities(&store, &HashSet::new());
        let fv = extract_features(store.get(&t).unwrap(), &store, &entities).unwrap();
        assert!(!fv.is_native_segwit);
    }

    #[test]
    fn unresolvable_input_is_an_error() {
        let mut b = Builder::new();
        let f = b.fund(&["a"]);
        let store = b.store();
        let entities = cluster_entities(&store, &HashSet::new());
        let err = extract_features(store.get(&f).unwrap(), &store, &entities).unwrap_err();
        assert!(matches!(err, StoreError::UnknownOutpoint(_)));
    }

    #[test]
    fn features_are_local_to_tx_and_prevouts() {
        // Full chain vs. a sub-store holding only the parent and the tx: all
        // features except cluster size must agree; cluster size agrees when
        // the entity map is the same.
        let mut b = Builder::new();
        let f = b.fund(&["p1", "p2", "q"]);
        b.spend(&[(f, 2)], &["noise"]);
        let t = b.spend_values(&[(f, 0), (f, 1)], &[("o1", 7), ("o2", 7), ("o3", 9)]);
        let full_txs = b.transactions().to_vec();
        let full = ChainStore::build(full_txs.clone()).unwrap();
        let entities = cluster_entities(&full, &HashSet::new());
        let sub = ChainStore::build(vec![full_txs[0].clone(), full_txs[2].clone()]).unwrap();
        let a = extract_features(full.get(&t).unwrap(), &full, &entities).unwrap();
        let b2 = extract_features(sub.get(&t).unwrap(), &sub, &entities).unwrap();
        assert_eq!(a, b2);
    }

    proptest! {
        #[test]
        fn wcdh_is_permutation_invariant(
            mix in 8_000_000u64..12_000_000,
            m in 8usize..14,
            changes in proptest::collection::vec(1u64..5_000_000, 0..5),
            extra_inputs in 0usize..5,
            seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let tx = wasabi_like(m + extra_inputs, mix, m, &changes);
            let expected = detect_wasabi_wcdh(&tx, &WcdhConfig::default());
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut shuffled = tx.clone();
            shuffled.outputs.shuffle(&mut rng);
            shuffled.inputs.shuffle(&mut rng);
            prop_assert_eq!(detect_wasabi_wcdh(&shuffled, &WcdhConfig::default()), expected);
        }

        #[test]
        fn scaling_out_of_band_flips_only_band_clause(
            m in 10usize..20,
            extra in 0usize..3,
        ) {
            let changes = [1_000_001, 2_000_003];
            let tx = wasabi_like(m + extra, BTC_0_1, m, &changes);
            prop_assert!(detect_wasabi_wcdh(&tx, &WcdhConfig::default()));
            let mut scaled = tx.clone();
            for o in &mut scaled.outputs {
                o.value = Amount::from_sat(o.value.to_sat() * 3);
            }
            prop_assert!(!detect_wasabi_wcdh(&scaled, &WcdhConfig::default()));
            // Same tx with the band re-centred on the scaled mode matches again.
            let recentred = WcdhConfig { mode_center: Amount::from_sat(3 * BTC_0_1), ..WcdhConfig::default() };
            prop_assert!(detect_wasabi_wcdh(&scaled, &recentred));
        }
    }
}
