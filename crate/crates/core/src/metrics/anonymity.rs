use std::collections::{BTreeMap, HashMap, HashSet};

use super::ledger::{FlowKind, OutputStatus, StreamLedger};
use super::month::MonthKey;
use crate::amount::Amount;
use crate::chain::{ChainStore, Transaction, TxIndex};
use crate::entity::{EntityId, EntityMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AnonymityBound {
    pub month: MonthKey,
    /// Coins still in the mixing process at month end.
    pub alpha: Amount,
    pub beta: Amount,
    pub bound: u64,
}

/// Running balance per month end: cumulative fresh inputs minus cumulative
/// exits (mixed and change) minus cumulative fees, and its floor ratio to
/// `beta`.
pub fn anonymity_upper_bound(
    ledger: &StreamLedger,
    beta: Amount,
    months: &[MonthKey],
) -> Vec<AnonymityBound> {
    assert!(beta > Amount::ZERO, "beta must be positive");
    let monthly = ledger.monthly();
    let mut added = Amount::ZERO;
    let mut removed = Amount::ZERO;
    let mut out = Vec::with_capacity(months.len());
    let mut pending = monthly.range(..).peekable();
    for &m in months {
        while let Some((&k, sums)) = pending.peek() {
            if k > m {
                break;
            }
            for (kind, &amt) in *sums {
                match kind {
                    FlowKind::Fresh => added += amt,
                    FlowKind::MixedExit | FlowKind::ChangeExit | FlowKind::Fee => removed += amt,
                    FlowKind::Remix => {}
                }
            }
            pending.next();
        }
        let alpha = added
            .checked_sub(removed)
            .expect("exits never exceed fresh inputs within a stream");
        out.push(AnonymityBound {
            month: m,
            alpha,
            beta,
            bound: alpha.to_sat() / beta.to_sat(),
        });
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SideCounts {
    pub addresses: usize,
    pub entities: usize,
}

/// Pre-mix and post-mix anonymity set sizes per month.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnonymitySetReport {
    pub pre: BTreeMap<MonthKey, SideCounts>,
    pub post: BTreeMap<MonthKey, SideCounts>,
}

/// Largest-value output of a transaction (lowest index on ties).
fn main_output(tx: &Transaction) -> &str {
    let mut best = &tx.outputs[0];
    for o in &tx.outputs[1..] {
        if o.value > best.value {
            best = o;
        }
    }
    &best.address
}

#[derive(Default)]
struct Side {
    seen: HashMap<String, Option<EntityId>>,
}

impl Side {
    fn add(&mut self, address: &str, entity: Option<EntityId>) {
        self.seen.entry(address.to_owned()).or_insert(entity);
    }

    fn counts(&self) -> SideCounts {
        let entities: HashSet<EntityId> = self.seen.values().flatten().copied().collect();
        SideCounts {
            addresses: self.seen.len(),
            entities: entities.len(),
        }
    }
}

/// Pre side, by CoinJoin month: distinct fresh-input addresses, and the
/// distinct entities that funded them (sender of the transaction that
/// created the input, or the address's own entity when that transaction has
/// no resolved input). Post side, by spending month: for each eligible
/// mixed exit, the largest output address of the spending transaction and
/// its entity. An address keeps the entity of its first occurrence in a
/// month.
pub fn pre_post_anonymity(
    store: &ChainStore,
    ledger: &StreamLedger,
    entities: &EntityMap,
    months: &[MonthKey],
) -> AnonymitySetReport {
    let mut pre: BTreeMap<MonthKey, Side> = BTreeMap::new();
    let mut post: BTreeMap<MonthKey, Side> = BTreeMap::new();

    let mut events: Vec<_> = ledger.events.iter().collect();
    events.sort_by_key(|e| (e.coinjoin, e.slot, e.kind));
    for e in events.into_iter().filter(|e| e.kind == FlowKind::Fresh) {
        let input = &store.tx(e.coinjoin).inputs[e.slot as usize];
        let prev = store.output(&input.outpoint()).expect("fresh input is resolved");
        let source = store.get(&input.prev_txid).expect("fresh input has a source");
        let funder = entities.sender_of(store, source).or_else(|| entities.entity_of(&prev.address));
        pre.entry(MonthKey::of_date(e.day)).or_default().add(&prev.address, funder);
    }

    let mut exits: Vec<_> = ledger
        .entries
        .iter()
        .filter(|e| e.status == OutputStatus::MixedExit && e.eligible)
        .collect();
    exits.sort_by_key(|e| (e.spender, e.coinjoin, e.outpoint.vout));
    for e in exits {
        let s = store.tx(e.spender.expect("exit has a spender"));
        let dest = main_output(s);
        post.entry(MonthKey::of_timestamp(s.timestamp))
            .or_default()
            .add(dest, entities.entity_of(dest));
    }

    let fill = |sides: &BTreeMap<MonthKey, Side>| {
        months
            .iter()
            .map(|m| (*m, sides.get(m).map(Side::counts).unwrap_or_default()))
            .collect()
    };
    AnonymitySetReport {
        pre: fill(&pre),
        post: fill(&post),
    }
}

/// Stream CoinJoins none of whose inputs spend an earlier CoinJoin of the
/// same stream, in store order.
pub fn remixless_coinjoins(ledger: &StreamLedger) -> Vec<TxIndex> {
    let mut members: Vec<TxIndex> = ledger.entries.iter().map(|e| e.coinjoin).collect();
    members.dedup();
    let remixing: HashSet<TxIndex> = ledger
        .events
        .iter()
        .filter(|e| e.kind == FlowKind::Remix)
        .map(|e| e.coinjoin)
        .collect();
    members.retain(|i| !remixing.contains(i));
    members
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect, DetectConfig};
    use crate::entity::cluster_entities;
    use crate::metrics::ledger::Stream;
    use crate::metrics::month::month_span;
    use crate::testutil::Builder;

    /// Wasabi round spending `ins`: ten 0.1 BTC outputs, two change outputs.
    fn wasabi_round(b: &mut Builder, ins: &[(crate::chain::TxId, u32)], tag: &str) -> crate::chain::TxId {
        let names: Vec<String> = (0..12).map(|i| format!("{tag}{i:02}")).collect();
        let mut outs: Vec<(&str, u64)> = names[..10].iter().map(|a| (a.as_str(), 10_000_000)).collect();
        outs.push((&names[10], 1_111_111));
        outs.push((&names[11], 2_222_222));
        b.spend_values(ins, &outs)
    }

    #[test]
    fn one_btc_in_nothing_out_gives_bound_100() {
        let mut b = Builder::new();
        let addrs: Vec<String> = (0..12).map(|i| format!("in{i}")).collect();
        let vals: Vec<(&str, u64)> = addrs
            .iter()
            .enumerate()
            .map(|(i, a)| (a.as_str(), if i < 11 { 8_000_000 } else { 100_000_000 - 88_000_000 }))
            .collect();
        let f = b.fund_values(&vals);
        let ins: Vec<_> = (0..12).map(|v| (f, v)).collect();
        let names: Vec<String> = (0..12).map(|i| format!("o{i:02}")).collect();
        let mut outs: Vec<(&str, u64)> = names[..10].iter().map(|a| (a.as_str(), 9_000_000)).collect();
        outs.push((&names[10], 4_000_000));
        outs.push((&names[11], 6_000_000));
        b.spend_values(&ins, &outs);
        let store = b.store();
        let d = detect(&store, &DetectConfig::with_default_pools(), None);
        assert_eq!(d.wasabi_count(), 1);
        let l = StreamLedger::build(&store, &d, Stream::Wasabi);
        assert_eq!(l.totals.fresh_in, Amount::from_sat(100_000_000));
        let bounds = anonymity_upper_bound(&l, Stream::Wasabi.beta(), &month_span(&store));
        assert_eq!(bounds.last().unwrap().bound, 100);
    }

    #[test]
    fn alpha_zero_gives_bound_zero() {
        let store = Builder::new().store();
        let d = detect(&store, &DetectConfig::with_default_pools(), None);
        let l = StreamLedger::build(&store, &d, Stream::Wasabi);
        let b = anonymity_upper_bound(&l, Amount::from_sat(1_000_000), &[MonthKey::new(2020, 1)]);
        assert_eq!((b[0].alpha, b[0].bound), (Amount::ZERO, 0));
    }

    #[test]
    fn star_funding_collapses_to_one_entity() {
        let mut b = Builder::new();
        let f = b.fund_values(&[("funder", 200_000_000)]);
        let star: Vec<String> = (0..12).map(|i| format!("s{i:02}")).collect();
        let fan = b.spend(&[(f, 0)], &star.iter().map(String::as_str).collect::<Vec<_>>());
        let ins: Vec<_> = (0..12).map(|v| (fan, v)).collect();
        let cj = wasabi_round(&mut b, &ins, "o");
        let store = b.store();
        let d = detect(&store, &DetectConfig::with_default_pools(), None);
        assert!(d.is_wasabi(&cj));
        let ents = cluster_entities(&store, &d.coinjoin_txids());
        let l = StreamLedger::build(&store, &d, Stream::Wasabi);
        let months = month_span(&store);
        let r = pre_post_anonymity(&store, &l, &ents, &months);
        let pre = r.pre[&months[0]];
        assert_eq!((pre.addresses, pre.entities), (12, 1));
        assert_eq!(remixless_coinjoins(&l), vec![store.index_of(&cj).unwrap()]);
    }

    #[test]
    fn unrelated_funders_do_not_collapse() {
        let mut b = Builder::new();
        let mut ins = Vec::new();
        for i in 0..12 {
            let f = b.fund(&[&format!("f{i}")]);
            let s = b.spend(&[(f, 0)], &[&format!("s{i}")]);
            ins.push((s, 0));
        }
        let cj = wasabi_round(&mut b, &ins, "o");
        let next = wasabi_round(&mut b, &(0..12).map(|v| (cj, v)).collect::<Vec<_>>(), "p");
        let store = b.store();
        let d = detect(&store, &DetectConfig::with_default_pools(), None);
        assert!(d.is_wasabi(&next));
        let ents = cluster_entities(&store, &d.coinjoin_txids());
        let l = StreamLedger::build(&store, &d, Stream::Wasabi);
        let months = month_span(&store);
        let r = pre_post_anonymity(&store, &l, &ents, &months);
        let pre = r.pre[&months[0]];
        assert_eq!((pre.addresses, pre.entities), (12, 12));
        assert_eq!(remixless_coinjoins(&l), vec![store.index_of(&cj).unwrap()]);
    }
}
