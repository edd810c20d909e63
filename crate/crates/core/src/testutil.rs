//! Hand-built chains for unit tests.

use std::collections::HashMap;

use crate::amount::Amount;
use crate::chain::{ChainStore, ScriptClass, Transaction, TxId, TxInput, TxOutput};

/// Appends transactions one block apart. `fund` creates coins from an
/// external (unresolved) source; `spend` splits the spent value evenly over
/// its outputs.
pub struct Builder {
    txs: Vec<Transaction>,
    values: HashMap<TxId, Vec<u64>>,
    next: u32,
    pub base_time: i64,
    pub block_secs: i64,
}

impl Builder {
    pub fn new() -> Self {
        Builder {
            txs: Vec::new(),
            values: HashMap::new(),
            next: 1,
            base_time: 1_600_000_000,
            block_secs: 600,
        }
    }

    fn id(&mut self) -> TxId {
        let mut b = [0u8; 32];
        b[..4].copy_from_slice(&self.next.to_be_bytes());
        self.next += 1;
        TxId::from_bytes(b)
    }

    fn push(&mut self, inputs: Vec<TxInput>, outputs: Vec<(String, u64)>) -> TxId {
        let txid = self.id();
        let h = self.txs.len() as u64;
        self.values
            .insert(txid, outputs.iter().map(|(_, v)| *v).collect());
        self.txs.push(Transaction {
            txid,
            block_height: h,
            timestamp: self.base_time + h as i64 * self.block_secs,
            inputs,
            outputs: outputs
                .into_iter()
                .map(|(a, v)| TxOutput {
                    value: Amount::from_sat(v),
                    address: a,
                    script: ScriptClass::P2wpkh,
                })
                .collect(),
        });
        txid
    }

    pub fn fund(&mut self, addrs: &[&str]) -> TxId {
        self.fund_values(&addrs.iter().map(|a| (*a, 100_000_000)).collect::<Vec<_>>())
    }

    pub fn fund_values(&mut self, outs: &[(&str, u64)]) -> TxId {
        let n = self.next;
        self.push(
            vec![TxInput {
                prev_txid: TxId::from_bytes([0xff; 32]),
                prev_vout: n,
            }],
            outs.iter().map(|(a, v)| (a.to_string(), *v)).collect(),
        )
    }

    pub fn spend(&mut self, ins: &[(TxId, u32)], outs: &[&str]) -> TxId {
        let total: u64 = ins.iter().map(|(t, v)| self.values[t][*v as usize]).sum();
        let each = total / outs.len() as u64;
        self.spend_values(ins, &outs.iter().map(|a| (*a, each)).collect::<Vec<_>>())
    }

    pub fn spend_values(&mut self, ins: &[(TxId, u32)], outs: &[(&str, u64)]) -> TxId {
        self.push(
            ins.iter()
                .map(|&(t, v)| TxInput {
                    prev_txid: t,
                    prev_vout: v,
                })
                .collect(),
            outs.iter().map(|(a, v)| (a.to_string(), *v)).collect(),
        )
    }

    pub fn transactions(&self) -> &[Transaction] {
        &self.txs
    }

    pub fn store(self) -> ChainStore {
        ChainStore::build(self.txs).unwrap()
    }
}
