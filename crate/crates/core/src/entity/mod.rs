//! Co-spent address clustering, entity-level transaction graph, attribution
//! tags and bounded hop traversal around CoinJoin transactions.

mod levels;
mod tags;
mod union_find;

use std::collections::{HashMap, HashSet};

use crate::chain::{ChainStore, Transaction, TxId};
use crate::par;

pub use levels::{assign_levels, match_exchanges, write_levels_csv, Direction, LevelAssignment};
pub use tags::{read_tags, AttributionTag, Category, TagError, TagReport, TagTarget};
pub use union_find::UnionFind;

/// Dense entity id: position in the entity list sorted by representative.
pub type EntityId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entity {
    /// Lexicographically smallest member address.
    pub representative: String,
    pub address_count: u32,
    pub tag: Option<EntityTag>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityTag {
    pub label: String,
    pub category: Category,
}

/// Partition of every address seen in a store into co-spent entities.
#[derive(Debug, Clone, Default)]
pub struct EntityMap {
    address_ids: HashMap<String, u32>,
    entity_of_addr: Vec<EntityId>,
    entities: Vec<Entity>,
    excluded: HashSet<TxId>,
    graph: Option<EntityGraph>,
}

/// Distinct-counterparty adjacency between entities.
#[derive(Debug, Clone, Default)]
struct EntityGraph {
    out: Vec<Vec<EntityId>>,
    inc: Vec<Vec<EntityId>>,
}

/// Cheap structural pre-filter: any output value repeated at least three
/// times. Used to keep CoinJoin-like transactions out of co-spent clustering
/// before (or without) running the real detectors.
pub fn likely_coinjoin(tx: &Transaction) -> bool {
    let mut counts: HashMap<u64, u32> = HashMap::with_capacity(tx.outputs.len());
    tx.outputs.iter().any(|o| {
        let c = counts.entry(o.value.to_sat()).or_insert(0);
        *c += 1;
        *c >= 3
    })
}

/// Clusters addresses with the co-spent heuristic: all input addresses of
/// each transaction not in `coinjoins` belong to one entity.
pub fn cluster_entities(store: &ChainStore, coinjoins: &HashSet<TxId>) -> EntityMap {
    let mut address_ids: HashMap<String, u32> = HashMap::new();
    let mut addresses: Vec<&str> = Vec::new();
    for tx in store.transactions() {
        for out in &tx.outputs {
            if !address_ids.contains_key(&out.address) {
                address_ids.insert(out.address.clone(), addresses.len() as u32);
                addresses.push(&out.address);
            }
        }
    }

    let mut uf = UnionFind::new(addresses.len());
    for tx in store.transactions() {
        if coinjoins.contains(&tx.txid) {
            continue;
        }
        let mut first = None;
        for prev in store.prevouts(tx).flatten() {
            let id = address_ids[&prev.address];
            match first {
                None => first = Some(id),
                Some(f) => {
                    uf.union(f, id);
                }
            }
        }
    }

    // Canonical representative per class: smallest address.
    let mut rep_of_root: HashMap<u32, u32> = HashMap::new();
    let mut size_of_root: HashMap<u32, u32> = HashMap::new();
    for id in 0..addresses.len() as u32 {
        let root = uf.find(id);
        let rep = rep_of_root.entry(root).or_insert(id);
        if addresses[id as usize] < addresses[*rep as usize] {
            *rep = id;
        }
        *size_of_root.entry(root).or_insert(0) += 1;
    }
    let mut roots: Vec<u32> = rep_of_root.keys().copied().collect();
    roots.sort_unstable_by(|a, b| addresses[rep_of_root[a] as usize].cmp(addresses[rep_of_root[b] as usize]));
    let entity_of_root: HashMap<u32, EntityId> = roots
        .iter()
        .enumerate()
        .map(|(i, &r)| (r, i as EntityId))
        .collect();
    let entities = roots
        .iter()
        .map(|r| Entity {
            representative: addresses[rep_of_root[r] as usize].to_owned(),
            address_count: size_of_root[r],
            tag: None,
        })
        .collect();
    let entity_of_addr = (0..addresses.len() as u32)
        .map(|id| entity_of_root[&uf.find(id)])
        .collect();

    EntityMap {
        address_ids,
        entity_of_addr,
        entities,
        excluded: coinjoins.clone(),
        graph: None,
    }
}

/// Fills in distinct-counterparty in/out degrees over every transaction not
/// excluded from clustering. Self-payments (change) are not edges.
pub fn compute_degrees(store: &ChainStore, mut entities: EntityMap) -> EntityMap {
    entities.compute_degrees(store);
    entities
}

impl EntityMap {
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn entity_of(&self, address: &str) -> Option<EntityId> {
        self.address_ids
            .get(address)
            .map(|&a| self.entity_of_addr[a as usize])
    }

    pub fn entity(&self, id: EntityId) -> &Entity {
        &self.entities[id as usize]
    }

    pub fn entities(&self) -> &[Entity] {
        &self.entities
    }

    /// Entity whose representative address is `rep`.
    pub fn by_representative(&self, rep: &str) -> Option<EntityId> {
        self.entities
            .binary_search_by(|e| e.representative.as_str().cmp(rep))
            .ok()
            .map(|i| i as EntityId)
    }

    /// Number of addresses in the entity containing `address` (1 for an
    /// address never seen in the store).
    pub fn cluster_size(&self, address: &str) -> u32 {
        self.entity_of(address)
            .map_or(1, |e| self.entities[e as usize].address_count)
    }

    pub fn category(&self, id: EntityId) -> Option<Category> {
        self.entities[id as usize].tag.as_ref().map(|t| t.category)
    }

    pub fn is_exchange(&self, id: EntityId) -> bool {
        self.category(id) == Some(Category::Exchange)
    }

    pub fn excluded_txids(&self) -> &HashSet<TxId> {
        &self.excluded
    }

    /// `(address, entity representative)` pairs sorted by address.
    pub fn address_assignments(&self) -> Vec<(&str, &str)> {
        let mut rows: Vec<(&str, &str)> = self
            .address_ids
            .iter()
            .map(|(a, &i)| {
                (
                    a.as_str(),
                    self.entities[self.entity_of_addr[i as usize] as usize]
                        .representative
                        .as_str(),
                )
            })
            .collect();
        rows.sort_unstable();
        rows
    }

    pub fn has_degrees(&self) -> bool {
        self.graph.is_some()
    }

    /// Entity sending in `tx`: the entity of its first resolved input.
    pub fn sender_of(&self, store: &ChainStore, tx: &Transaction) -> Option<EntityId> {
        store
            .prevouts(tx)
            .flatten()
            .next()
            .and_then(|o| self.entity_of(&o.address))
    }

    pub fn compute_degrees(&mut self, store: &ChainStore) {
        let txs = store.transactions();
        let per_tx: Vec<Vec<(EntityId, EntityId)>> = par::map(txs, |tx| {
            if self.excluded.contains(&tx.txid) {
                return Vec::new();
            }
            let Some(sender) = self.sender_of(store, tx) else {
                return Vec::new();
            };
            let mut edges: Vec<(EntityId, EntityId)> = tx
                .outputs
                .iter()
                .filter_map(|o| self.entity_of(&o.address))
                .filter(|&r| r != sender)
                .map(|r| (sender, r))
                .collect();
            edges.sort_unstable();
            edges.dedup();
            edges
        });
        let mut edges: Vec<(EntityId, EntityId)> = per_tx.into_iter().flatten().collect();
        edges.sort_unstable();
        edges.dedup();

        let n = self.entities.len();
        let mut graph = EntityGraph {
            out: vec![Vec::new(); n],
            inc: vec![Vec::new(); n],
        };
        for &(a, b) in &edges {
            graph.out[a as usize].push(b);
            graph.inc[b as usize].push(a);
        }
        for list in &mut graph.inc {
            list.sort_unstable();
        }
        self.graph = Some(graph);
    }

    fn graph(&self) -> &EntityGraph {
        self.graph
            .as_ref()
            .expect("compute_degrees must run before degree queries")
    }

    pub fn out_degree(&self, id: EntityId) -> usize {
        self.graph().out[id as usize].len()
    }

    pub fn in_degree(&self, id: EntityId) -> usize {
        self.graph().inc[id as usize].len()
    }

    /// Entities that received from `id`.
    pub fn successors(&self, id: EntityId) -> &[EntityId] {
        &self.graph().out[id as usize]
    }

    /// Entities that sent to `id`.
    pub fn predecessors(&self, id: EntityId) -> &[EntityId] {
        &self.graph().inc[id as usize]
    }

    /// Lifts address and entity tags onto entities. Conflicting categories
    /// resolve to `Exchange` when any tag says so, otherwise to the first
    /// tag seen; unknown targets are skipped.
    pub fn apply_tags(&mut self, tags: &[AttributionTag]) -> TagReport {
        let mut report = TagReport::default();
        for tag in tags {
            let target = match &tag.target {
                TagTarget::Address(a) => self.entity_of(a),
                TagTarget::Entity(rep) => self.by_representative(rep),
            };
            let Some(id) = target else {
                log::warn!("attribution tag for unknown {} skipped", tag.target);
                report.skipped_unknown += 1;
                continue;
            };
            report.applied += 1;
            let entity = &mut self.entities[id as usize];
            let slot = &mut entity.tag;
            match slot {
                None => {
                    *slot = Some(EntityTag {
                        label: tag.label.clone(),
                        category: tag.category,
                    })
                }
                Some(existing) if existing.category != tag.category => {
                    log::warn!(
                        "conflicting categories for entity {}: {:?} vs {:?}",
                        entity.representative,
                        existing.category,
                        tag.category
                    );
                    report.conflicts += 1;
                    if tag.category == Category::Exchange {
                        existing.category = Category::Exchange;
                        existing.label = tag.label.clone();
                    }
                }
                Some(_) => {}
            }
        }
        report
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    use crate::testutil::Builder;

    #[test]
    fn co_spending_is_transitive() {
        let mut b = Builder::new();
        let f = b.fund(&["a1", "a2", "a3", "a2x"]);
        b.spend(&[(f, 0), (f, 1)], &["z1"]);
        let g = b.fund(&["a2"]);
        b.spend(&[(g, 0), (f, 2)], &["z2"]);
        let store = b.store();
        let map = cluster_entities(&store, &HashSet::new());
        let e = map.entity_of("a1").unwrap();
        assert_eq!(map.entity_of("a2"), Some(e));
        assert_eq!(map.entity_of("a3"), Some(e));
        assert_eq!(map.entity(e).representative, "a1");
        assert_eq!(map.entity(e).address_count, 3);
        assert_ne!(map.entity_of("a2x"), Some(e));
        assert_eq!(map.cluster_size("never-seen"), 1);
    }

    #[test]
    fn coinjoin_inputs_are_not_merged() {
        let mut b = Builder::new();
        let f = b.fund(&["a1", "b1"]);
        let cj = b.spend(&[(f, 0), (f, 1)], &["o1", "o2"]);
        let store = b.store();
        let map = cluster_entities(&store, &HashSet::from([cj]));
        assert_ne!(map.entity_of("a1"), map.entity_of("b1"));
        let merged = cluster_entities(&store, &HashSet::new());
        assert_eq!(merged.entity_of("a1"), merged.entity_of("b1"));
    }

    #[test]
    fn degrees_count_distinct_counterparties() {
        let mut b = Builder::new();
        let f = b.fund(&["e1", "e1", "e1"]);
        for v in 0..3 {
            b.spend(&[(f, v)], &["f1"]);
        }
        let recipients: Vec<String> = (0..101).map(|i| format!("r{i:03}")).collect();
        let g = b.fund(&["big"]);
        let refs: Vec<&str> = recipients.iter().map(String::as_str).collect();
        b.spend(&[(g, 0)], &refs);
        let store = b.store();
        let map = compute_degrees(&store, cluster_entities(&store, &HashSet::new()));
        let e = map.entity_of("e1").unwrap();
        let f1 = map.entity_of("f1").unwrap();
        assert_eq!(map.out_degree(e), 1);
        assert_eq!(map.successors(e), &[f1]);
        assert_eq!(map.in_degree(f1), 1);
        assert_eq!(map.out_degree(map.entity_of("big").unwrap()), 101);
    }

    #[test]
    fn one_entity_paying_one_entity_three_times_has_degree_one() {
        let mut b = Builder::new();
        let f = b.fund(&["e1", "e2", "e3", "e1", "e2"]);
        b.spend(&[(f, 0), (f, 1)], &["f1"]);
        b.spend(&[(f, 2), (f, 3)], &["f1"]);
        b.spend(&[(f, 4)], &["f1"]);
        let store = b.store();
        let map = compute_degrees(&store, cluster_entities(&store, &HashSet::new()));
        let e = map.entity_of("e1").unwrap();
        assert_eq!(map.entity_of("e3"), Some(e));
        let f1 = map.entity_of("f1").unwrap();
        assert_eq!(map.successors(e), &[f1]);
        assert_eq!(map.out_degree(e), 1);
        assert_eq!(map.in_degree(f1), 1);
    }

    #[test]
    fn tags_lift_and_resolve_conflicts() {
        let mut b = Builder::new();
        let f = b.fund(&["x1", "x2"]);
        b.spend(&[(f, 0), (f, 1)], &["y"]);
        let store = b.store();
        let mut map = cluster_entities(&store, &HashSet::new());
        let report = map.apply_tags(&[
            AttributionTag { target: TagTarget::Address("x2".into()), label: "svc".into(), category: Category::Service },
            AttributionTag { target: TagTarget::Entity("x1".into()), label: "ex".into(), category: Category::Exchange },
            AttributionTag { target: TagTarget::Address("nope".into()), label: "?".into(), category: Category::Other },
        ]);
        assert_eq!(report, TagReport { applied: 2, skipped_unknown: 1, conflicts: 1 });
        let e = map.entity_of("x1").unwrap();
        assert!(map.is_exchange(e));
        assert_eq!(map.entity(e).tag.as_ref().unwrap().label, "ex");
    }

    #[test]
    fn prefilter_flags_three_equal_outputs() {
        let mut b = Builder::new();
        let f = b.fund(&["a", "b", "c"]);
        let store = b.store();
        assert!(likely_coinjoin(store.get(&f).unwrap()));
    }
}
