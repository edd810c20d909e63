use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::ledger::{OutputStatus, StreamLedger};
use super::month::MonthKey;
use crate::amount::Amount;
use crate::chain::{ChainStore, TxIndex};
use crate::entity::{EntityId, EntityMap};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ExchangeHop {
    Direct,
    Indirect,
}

/// How a mixed-exit output reached an exchange, if it did. `Direct`: the
/// output's own entity or a recipient of the spending transaction is an
/// exchange. `Indirect`: a recipient entity with out-degree at most
/// `threshold` pays an exchange. Direct takes precedence.
pub fn classify_exit(
    store: &ChainStore,
    entities: &EntityMap,
    own_address: &str,
    spender: TxIndex,
    threshold: usize,
) -> Option<ExchangeHop> {
    let own = entities.entity_of(own_address);
    if own.is_some_and(|e| entities.is_exchange(e)) {
        return Some(ExchangeHop::Direct);
    }
    let recipients: BTreeSet<EntityId> = store
        .tx(spender)
        .outputs
        .iter()
        .filter_map(|o| entities.entity_of(&o.address))
        .filter(|&e| Some(e) != own)
        .collect();
    if recipients.iter().any(|&e| entities.is_exchange(e)) {
        return Some(ExchangeHop::Direct);
    }
    let indirect = recipients.iter().any(|&r| {
        entities.out_degree(r) <= threshold
            && entities.successors(r).iter().any(|&s| entities.is_exchange(s))
    });
    indirect.then_some(ExchangeHop::Indirect)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ExchangeFlowRow {
    /// CoinJoins with at least one output in this class, cumulative.
    pub txs: usize,
    pub amount: Amount,
}

/// Cumulative per-month exchange flows of one stream, keyed by the month of
/// the spending transaction. Every month in `months` gets a row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExchangeFlowSeries {
    pub rows: BTreeMap<MonthKey, BTreeMap<ExchangeHop, ExchangeFlowRow>>,
}

pub fn exchange_flow_series(
    store: &ChainStore,
    ledger: &StreamLedger,
    entities: &EntityMap,
    threshold: usize,
    months: &[MonthKey],
) -> ExchangeFlowSeries {
    let mut per_month: BTreeMap<MonthKey, BTreeMap<ExchangeHop, (usize, Amount)>> = BTreeMap::new();
    let mut counted: HashSet<(TxIndex, ExchangeHop)> = HashSet::new();
    // Exits in spending order, so a CoinJoin is counted in the month of its
    // first qualifying exit.
    let mut exits: Vec<_> = ledger
        .entries
        .iter()
        .filter(|e| e.status == OutputStatus::MixedExit && e.eligible)
        .collect();
    exits.sort_by_key(|e| (e.spender, e.coinjoin, e.outpoint.vout));
    for e in exits {
        let spender = e.spender.expect("exit has a spender");
        let address = &store.tx(e.coinjoin).outputs[e.outpoint.vout as usize].address;
        let Some(hop) = classify_exit(store, entities, address, spender, threshold) else {
            continue;
        };
        let month = MonthKey::of_timestamp(store.tx(spender).timestamp);
        let slot = per_month.entry(month).or_default().entry(hop).or_default();
        slot.1 += e.value;
        if counted.insert((e.coinjoin, hop)) {
            slot.0 += 1;
        }
    }

    let mut rows = BTreeMap::new();
    let mut running: BTreeMap<ExchangeHop, ExchangeFlowRow> = [ExchangeHop::Direct, ExchangeHop::Indirect]
        .into_iter()
        .map(|h| (h, ExchangeFlowRow::default()))
        .collect();
    for &m in months {
        if let Some(inc) = per_month.get(&m) {
            for (hop, (n, amt)) in inc {
                let r = running.get_mut(hop).expect("both hops present");
                r.txs += n;
                r.amount += *amt;
            }
        }
        rows.insert(m, running.clone());
    }
    ExchangeFlowSeries { rows }
}
