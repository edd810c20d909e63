//! Deterministic synthetic chains with ground truth.
//!
//! A [`ScenarioPlan`] fixes the seed and the number of each kind of
//! transaction to plant. [`generate`] interleaves them in a seeded random
//! order on top of a faucet that funds ordinary wallets, and records what
//! each transaction is in a [`GroundTruth`]. Transaction ids and addresses
//! are hashes of the seed and a counter, one transaction per block slot.

mod gen;
mod plan;
mod truth;

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

pub use plan::{PlanError, PoolPlan, ScenarioPlan};
pub use truth::{
    read_labels_csv, write_labels_csv, FanPlant, GroundTruth, InflowTruth, LabelError, NearMiss,
    PlantedFlow, SynthLabel,
};

use crate::chain::{write_feed, ChainStore, StoreError, Transaction, TxId};
use crate::detect::prefilter_entities;
use crate::entity::{AttributionTag, TagTarget};
use crate::forest::{CorpusError, Label, LabeledCorpus};
use crate::par;
use crate::wasabi::extract_features_batch;

#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub plan: ScenarioPlan,
    pub transactions: Vec<Transaction>,
    pub truth: GroundTruth,
    /// Exchange deposit addresses and the service addresses.
    pub tags: Vec<AttributionTag>,
    /// Addresses the static Wasabi rule should know.
    pub coordinators: Vec<String>,
}

pub const OUTPUT_FILES: [&str; 6] = [
    "feed.ndjson",
    "labels.csv",
    "plan.json",
    "truth.json",
    "tags.csv",
    "coordinators.txt",
];

pub fn generate(plan: &ScenarioPlan) -> Result<SynthOutput, PlanError> {
    plan.validate()?;
    let g = gen::Generator::new(plan).run();
    Ok(SynthOutput {
        plan: plan.clone(),
        transactions: g.transactions,
        truth: g.truth,
        tags: g.tags,
        coordinators: g.coordinators,
    })
}

/// Independent scenarios, generated in parallel.
pub fn generate_many(plans: &[ScenarioPlan]) -> Vec<Result<SynthOutput, PlanError>> {
    par::map(plans, generate)
}

impl SynthOutput {
    pub fn store(&self) -> ChainStore {
        ChainStore::build(self.transactions.iter().cloned()).expect("generated chains are well formed")
    }

    pub fn write_feed<W: Write>(&self, out: W) -> io::Result<()> {
        write_feed(out, &self.transactions)
    }

    pub fn write_tags<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["target_type", "target", "label", "category"])?;
        for t in &self.tags {
            let (kind, target) = match &t.target {
                TagTarget::Address(a) => ("address", a),
                TagTarget::Entity(e) => ("entity", e),
            };
            w.write_record([kind, target, &t.label, t.category.as_str()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes every file in [`OUTPUT_FILES`] into `dir` (created if needed).
    pub fn write_dir(&self, dir: &Path) -> io::Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir)?;
        let path = |name: &str| dir.join(name);
        let create = |name: &str| File::create(path(name)).map(BufWriter::new);

        self.write_feed(create("feed.ndjson")?)?;
        write_labels_csv(create("labels.csv")?, &self.truth.labels).map_err(io::Error::other)?;
        let mut plan = create("plan.json")?;
        serde_json::to_writer_pretty(&mut plan, &self.plan)?;
        writeln!(plan)?;
        plan.flush()?;
        let mut truth = create("truth.json")?;
        serde_json::to_writer_pretty(&mut truth, &self.truth)?;
        writeln!(truth)?;
        truth.flush()?;
        self.write_tags(create("tags.csv")?).map_err(io::Error::other)?;
        let mut coord = create("coordinators.txt")?;
        for c in &self.coordinators {
            writeln!(coord, "{c}")?;
        }
        coord.flush()?;
        Ok(OUTPUT_FILES.iter().map(|n| path(n)).collect())
    }
}

#[derive(Debug, Error)]
pub enum CorpusBuildError {
    #[error("labelled transaction {0} is not in the feed")]
    UnknownTxid(TxId),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// Feature corpus of Wasabi versus everything else. Transactions with an
/// unresolved input are skipped. With `per_class`, each class is sampled
/// down (seeded) to at most that many rows; rows keep chain order.
pub fn labeled_corpus(
    store: &ChainStore,
    labels: &[(TxId, SynthLabel)],
    per_class: Option<usize>,
    seed: u64,
) -> Result<LabeledCorpus, CorpusBuildError> {
    let by_id: HashMap<TxId, bool> = labels.iter().map(|(t, l)| (*t, l.is_wasabi())).collect();
    let mut classes: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (t, _) in labels {
        let idx = store.index_of(t).ok_or(CorpusBuildError::UnknownTxid(*t))?;
        let tx = store.tx(idx);
        if tx.inputs.iter().all(|i| store.output(&i.outpoint()).is_some()) {
            classes[usize::from(by_id[t])].push(idx as usize);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = Vec::new();
    for mut c in classes {
        c.sort_unstable();
        c.dedup();
        if let Some(k) = per_class {
            c.shuffle(&mut rng);
            c.truncate(k);
        }
        chosen.extend(c);
    }
    chosen.sort_unstable();

    let entities = prefilter_entities(store);
    let txs: Vec<&Transaction> = chosen.iter().map(|&i| &store.transactions()[i]).collect();
    let rows = extract_features_batch(&txs, store, &entities)?;
    let ids = txs.iter().map(|t| t.txid.to_string()).collect();
    let labs = txs.iter().map(|t| Label::from_bool(by_id[&t.txid])).collect();
    Ok(LabeledCorpus::from_feature_vectors(ids, &rows, labs)?)
}
