use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

use super::{OutPoint, Transaction, TxId, TxInput, TxOutput};
use crate::amount::Amount;

/// Position of a transaction in store (chronological) order.
pub type TxIndex = u32;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("duplicate transaction {0}")]
    DuplicateTx(TxId),
    #[error("transaction {txid} at height {height} follows height {previous}")]
    OutOfOrder {
        txid: TxId,
        height: u64,
        previous: u64,
    },
    #[error("output {outpoint} spent by both {first} and {second}")]
    DoubleSpend {
        outpoint: OutPoint,
        first: TxId,
        second: TxId,
    },
    #[error("transaction {txid} spends {inputs} but creates {outputs}")]
    NegativeFee {
        txid: TxId,
        inputs: Amount,
        outputs: Amount,
    },
    #[error("unknown outpoint {0}")]
    UnknownOutpoint(OutPoint),
}

/// An input whose referenced output was not present (earlier) in the feed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UnresolvedInput {
    pub spending_txid: TxId,
    pub input_index: u32,
    pub outpoint: OutPoint,
}

/// Chronologically ordered transactions with output and spent indexes.
///
/// Immutable once built; all analyses take it by shared reference.
#[derive(Debug, Default)]
pub struct ChainStore {
    txs: Vec<Transaction>,
    by_id: HashMap<TxId, TxIndex>,
    spent: HashMap<OutPoint, TxIndex>,
    block_times: BTreeMap<u64, i64>,
    unresolved: Vec<UnresolvedInput>,
}

impl ChainStore {
    /// Builds a store in one sequential pass. Inputs must reference outputs
    /// of transactions that appear earlier in the stream; anything else is
    /// recorded in the unresolved report rather than failing the build.
    pub fn build<I>(records: I) -> Result<ChainStore, StoreError>
    where
        I: IntoIterator<Item = Transaction>,
    {
        let mut store = ChainStore::default();
        for tx in records {
            store.push(tx)?;
        }
        Ok(store)
    }

    /// Appends one transaction, updating every index.
    pub fn push(&mut self, tx: Transaction) -> Result<(), StoreError> {
        if let Some(last) = self.txs.last() {
            if tx.block_height < last.block_height {
                return Err(StoreError::OutOfOrder {
                    txid: tx.txid,
                    height: tx.block_height,
                    previous: last.block_height,
                });
            }
        }
        if self.by_id.contains_key(&tx.txid) {
            return Err(StoreError::DuplicateTx(tx.txid));
        }
        let idx = self.txs.len() as TxIndex;

        let mut input_sum = Amount::ZERO;
        let mut all_resolved = true;
        let mut spends = Vec::with_capacity(tx.inputs.len());
        let mut unresolved = Vec::new();
        for (i, input) in tx.inputs.iter().enumerate() {
            let op = input.outpoint();
            if let Some(&first) = self.spent.get(&op) {
                return Err(StoreError::DoubleSpend {
                    outpoint: op,
                    first: self.txs[first as usize].txid,
                    second: tx.txid,
                });
            }
            if spends.contains(&op) {
                return Err(StoreError::DoubleSpend {
                    outpoint: op,
                    first: tx.txid,
                    second: tx.txid,
                });
            }
            match self.output(&op) {
                Some(out) => {
                    input_sum += out.value;
                    spends.push(op);
                }
                None => {
                    all_resolved = false;
                    unresolved.push(UnresolvedInput {
                        spending_txid: tx.txid,
                        input_index: i as u32,
                        outpoint: op,
                    });
                }
            }
        }
        let output_sum = tx.output_sum();
        if all_resolved && input_sum < output_sum {
            return Err(StoreError::NegativeFee {
                txid: tx.txid,
                inputs: input_sum,
                outputs: output_sum,
            });
        }

        for op in spends {
            self.spent.insert(op, idx);
        }
        self.unresolved.extend(unresolved);
        self.block_times
            .entry(tx.block_height)
            .or_insert(tx.timestamp);
        self.by_id.insert(tx.txid, idx);
        self.txs.push(tx);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn tx(&self, idx: TxIndex) -> &Transaction {
        &self.txs[idx as usize]
    }

    pub fn index_of(&self, txid: &TxId) -> Option<TxIndex> {
        self.by_id.get(txid).copied()
    }

    pub fn get(&self, txid: &TxId) -> Option<&Transaction> {
        self.index_of(txid).map(|i| self.tx(i))
    }

    pub fn contains(&self, txid: &TxId) -> bool {
        self.by_id.contains_key(txid)
    }

    pub fn output(&self, op: &OutPoint) -> Option<&TxOutput> {
        self.get(&op.txid)
            .and_then(|tx| tx.outputs.get(op.vout as usize))
    }

    /// Value and address of the output an input spends.
    pub fn resolve_input(&self, input: &TxInput) -> Result<(Amount, &str), StoreError> {
        let op = input.outpoint();
        self.output(&op)
            .map(|o| (o.value, o.address.as_str()))
            .ok_or(StoreError::UnknownOutpoint(op))
    }

    /// Referenced outputs of every input of `tx`, `None` where unresolved.
    pub fn prevouts<'a>(
        &'a self,
        tx: &'a Transaction,
    ) -> impl Iterator<Item = Option<&'a TxOutput>> + 'a {
        tx.inputs.iter().map(move |i| self.output(&i.outpoint()))
    }

    /// Index of the transaction that spends `op`, if any.
    pub fn spender(&self, op: &OutPoint) -> Option<TxIndex> {
        self.spent.get(op).copied()
    }

    pub fn unresolved(&self) -> &[UnresolvedInput] {
        &self.unresolved
    }

    pub fn timestamp_at(&self, height: u64) -> Option<i64> {
        self.block_times.get(&height).copied()
    }

    pub fn height_range(&self) -> Option<(u64, u64)> {
        Some((
            self.txs.first()?.block_height,
            self.txs.last()?.block_height,
        ))
    }

    /// Fee of `tx`, or `None` when one of its inputs is unresolved.
    pub fn fee(&self, tx: &Transaction) -> Option<Amount> {
        let inputs: Option<Amount> = self.prevouts(tx).map(|o| o.map(|o| o.value)).sum();
        inputs.map(|i| i - tx.output_sum())
    }

    /// Sum of fees over all fully resolved transactions.
    pub fn total_fees(&self) -> Amount {
        self.txs.iter().filter_map(|tx| self.fee(tx)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::ScriptClass;

    fn txid(n: u8) -> TxId {
        TxId::from_bytes([n; 32])
    }

    fn tx(id: u8, height: u64, inputs: &[(u8, u32)], outputs: &[(u64, &str)]) -> Transaction {
        Transaction {
            txid: txid(id),
            block_height: height,
            timestamp: 1_500_000_000 + height as i64 * 600,
            inputs: inputs
                .iter()
                .map(|&(t, v)| TxInput {
                    prev_txid: txid(t),
                    prev_vout: v,
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

    #[test]
    fn spent_index_links_child_to_parent() {
        let store = ChainStore::build(vec![
            tx(1, 10, &[(0xff, 0)], &[(50_000_000, "a3"), (10, "a4")]),
            tx(2, 11, &[(1, 0)], &[(49_000_000, "a5")]),
        ])
        .unwrap();
        let op = OutPoint { txid: txid(1), vout: 0 };
        assert_eq!(store.spender(&op), Some(1));
        assert_eq!(store.tx(1).txid, txid(2));
        assert_eq!(store.spender(&OutPoint { txid: txid(1), vout: 1 }), None);
        assert_eq!(store.fee(store.tx(1)), Some(Amount::from_sat(1_000_000)));
        assert_eq!(store.fee(store.tx(0)), None);
        assert_eq!(store.total_fees(), Amount::from_sat(1_000_000));
    }

    #[test]
    fn unknown_inputs_are_reported_not_fatal() {
        let store = ChainStore::build(vec![tx(1, 1, &[(9, 4)], &[(5, "x")])]).unwrap();
        assert_eq!(store.len(), 1);
        assert_eq!(
            store.unresolved(),
            &[UnresolvedInput {
                spending_txid: txid(1),
                input_index: 0,
                outpoint: OutPoint { txid: txid(9), vout: 4 },
            }]
        );
    }

    #[test]
    fn empty_stream_builds_empty_store() {
        let store = ChainStore::build(Vec::new()).unwrap();
        assert!(store.is_empty());
        assert!(store.unresolved().is_empty());
        assert_eq!(store.height_range(), None);
    }

    #[test]
    fn resolve_input_cases() {
        let store = ChainStore::build(vec![tx(
            1,
            1,
            &[(0xff, 0)],
            &[(50_000_000, "a3"), (1, "b")],
        )])
        .unwrap();
        let ok = TxInput { prev_txid: txid(1), prev_vout: 0 };
        assert_eq!(store.resolve_input(&ok).unwrap(), (Amount::from_sat(50_000_000), "a3"));
        let bad_vout = TxInput { prev_txid: txid(1), prev_vout: 7 };
        assert_eq!(
            store.resolve_input(&bad_vout),
            Err(StoreError::UnknownOutpoint(bad_vout.outpoint()))
        );
        let coinbase_like = TxInput { prev_txid: TxId::from_bytes([0; 32]), prev_vout: 0 };
        assert!(matches!(
            store.resolve_input(&coinbase_like),
            Err(StoreError::UnknownOutpoint(_))
        ));
    }

    #[test]
    fn ingest_errors() {
        let dup = ChainStore::build(vec![tx(1, 1, &[(9, 0)], &[(5, "x")]), tx(1, 2, &[(9, 1)], &[(5, "x")])]);
        assert_eq!(dup.unwrap_err(), StoreError::DuplicateTx(txid(1)));

        let order = ChainStore::build(vec![tx(1, 5, &[(9, 0)], &[(5, "x")]), tx(2, 4, &[(9, 1)], &[(5, "x")])]);
        assert!(matches!(order.unwrap_err(), StoreError::OutOfOrder { height: 4, previous: 5, .. }));

        let double = ChainStore::build(vec![
            tx(1, 1, &[(9, 0)], &[(5, "x")]),
            tx(2, 2, &[(1, 0)], &[(4, "y")]),
            tx(3, 2, &[(1, 0)], &[(4, "z")]),
        ]);
        assert!(matches!(double.unwrap_err(), StoreError::DoubleSpend { .. }));

        let neg = ChainStore::build(vec![tx(1, 1, &[(9, 0)], &[(5, "x")]), tx(2, 2, &[(1, 0)], &[(6, "y")])]);
        assert!(matches!(neg.unwrap_err(), StoreError::NegativeFee { .. }));
    }

    #[test]
    fn same_height_keeps_feed_order() {
        let store = ChainStore::build(vec![
            tx(1, 3, &[(9, 0)], &[(5, "x")]),
            tx(2, 3, &[(1, 0)], &[(5, "y")]),
        ])
        .unwrap();
        assert_eq!(store.index_of(&txid(2)), Some(1));
        assert!(store.unresolved().len() == 1);
        assert_eq!(store.timestamp_at(3), Some(1_500_000_000 + 1800));
    }
}
