use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::Write;

use super::{EntityId, EntityMap};
use crate::chain::{ChainStore, TxId};

/// Which side of the CoinJoins the traversal explores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Direction {
    /// Upstream of CoinJoin inputs: entities that sent coins into mixes.
    Send,
    /// Downstream of CoinJoin outputs: entities that received mixed coins.
    Receive,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::Send => "send",
            Direction::Receive => "receive",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Minimal hop level (0, 1 or 2) of every entity reached from the CoinJoin
/// addresses on one side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LevelAssignment {
    pub direction: Direction,
    pub threshold: usize,
    levels: BTreeMap<EntityId, u8>,
}

impl LevelAssignment {
    pub fn level_of(&self, id: EntityId) -> Option<u8> {
        self.levels.get(&id).copied()
    }

    pub fn at_level(&self, level: u8) -> impl Iterator<Item = EntityId> + '_ {
        self.levels
            .iter()
            .filter(move |(_, &l)| l == level)
            .map(|(&e, _)| e)
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, u8)> + '_ {
        self.levels.iter().map(|(&e, &l)| (e, l))
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }
}

pub const MAX_LEVEL: u8 = 2;

/// Breadth-first traversal from the entities of CoinJoin addresses, at most
/// two hops along `direction`. An entity whose relevant degree (out-degree
/// for `Receive`, in-degree for `Send`) exceeds `threshold` keeps its level
/// but is not expanded.
pub fn assign_levels(
    store: &ChainStore,
    entities: &EntityMap,
    coinjoins: &HashSet<TxId>,
    threshold: usize,
    direction: Direction,
) -> LevelAssignment {
    let mut seeds: BTreeSet<EntityId> = BTreeSet::new();
    // Iterate in store order so the seed set never depends on hash order.
    for tx in store.transactions().iter().filter(|t| coinjoins.contains(&t.txid)) {
        match direction {
            Direction::Receive => {
                seeds.extend(tx.outputs.iter().filter_map(|o| entities.entity_of(&o.address)));
            }
            Direction::Send => {
                seeds.extend(
                    store
                        .prevouts(tx)
                        .flatten()
                        .filter_map(|o| entities.entity_of(&o.address)),
                );
            }
        }
    }

    let mut levels: BTreeMap<EntityId, u8> = seeds.iter().map(|&e| (e, 0)).collect();
    let mut frontier: Vec<EntityId> = seeds.into_iter().collect();
    for level in 1..=MAX_LEVEL {
        let mut next = Vec::new();
        for &u in &frontier {
            let (degree, neighbours) = match direction {
                Direction::Receive => (entities.out_degree(u), entities.successors(u)),
                Direction::Send => (entities.in_degree(u), entities.predecessors(u)),
            };
            if degree > threshold {
                continue;
            }
            for &v in neighbours {
                if let std::collections::btree_map::Entry::Vacant(slot) = levels.entry(v) {
                    slot.insert(level);
                    next.push(v);
                }
            }
        }
        frontier = next;
    }

    LevelAssignment {
        direction,
        threshold,
        levels,
    }
}

/// Exchange-tagged entities per level.
pub fn match_exchanges(
    levels: &LevelAssignment,
    entities: &EntityMap,
) -> BTreeMap<u8, BTreeSet<EntityId>> {
    let mut out: BTreeMap<u8, BTreeSet<EntityId>> =
        (0..=MAX_LEVEL).map(|l| (l, BTreeSet::new())).collect();
    for (e, l) in levels.iter() {
        if entities.is_exchange(e) {
            out.entry(l).or_default().insert(e);
        }
    }
    out
}

/// Writes `entity,level,direction,category` rows sorted by entity.
pub fn write_levels_csv<W: Write>(
    out: W,
    levels: &LevelAssignment,
    entities: &EntityMap,
) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["entity", "level", "direction", "category"])?;
    for (e, l) in levels.iter() {
        let category = entities.category(e).map_or("", |c| c.as_str());
        w.write_record([
            entities.entity(e).representative.as_str(),
            &l.to_string(),
            levels.direction.as_str(),
            category,
        ])?;
    }
    w.flush()?;
    Ok(())
}
