use std::collections::{BTreeMap, HashMap};
use std::fmt::Display;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use serde_json::{json, Value};

use mixtrace_core::amount::Amount;
use mixtrace_core::chain::{read_feed, ChainStore, Transaction, TxId};
use mixtrace_core::detect::{detect as run_detect, prefilter_entities, DetectConfig, DetectionSet, Protocol};
use mixtrace_core::entity::{
    assign_levels, cluster_entities, compute_degrees, match_exchanges, read_tags, write_levels_csv,
    AttributionTag, Direction, EntityMap,
};
use mixtrace_core::forest::{
    evaluate, split_train_test, train_forest, write_metrics_csv, EvalMetrics, Forest, Label, TrainConfig,
};
use mixtrace_core::metrics::{build_report, RateTable, ReportInputs, REPORT_FILES};
use mixtrace_core::synth::{generate, labeled_corpus, read_labels_csv, ScenarioPlan, SynthLabel};
use mixtrace_core::wasabi::{
    detect_wasabi_wcdh, extract_features_batch, parse_coordinator_list, WcdhConfig, FEATURE_NAMES,
};
use mixtrace_core::whirlpool::{parse_txid_list, write_whirlpool_csv, Pool, PoolKind};

use crate::{
    ClusterArgs, DetectArgs, DetectorArgs, EvalArgs, FeaturesArgs, FeedArgs, ForestArgs, GraphArgs,
    IngestArgs, Preset, ReportArgs, SynthArgs, TrainArgs,
};

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_DATA: u8 = 2;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub inner: anyhow::Error,
}

type Outcome = Result<Value, CliError>;

trait Classify<T> {
    fn or_config(self, what: impl Display) -> Result<T, CliError>;
    fn or_data(self, what: impl Display) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_config(self, what: impl Display) -> Result<T, CliError> {
        self.map_err(|e| CliError { code: EXIT_CONFIG, inner: e.into().context(what.to_string()) })
    }

    fn or_data(self, what: impl Display) -> Result<T, CliError> {
        self.map_err(|e| CliError { code: EXIT_DATA, inner: e.into().context(what.to_string()) })
    }
}

fn config_error(msg: String) -> CliError {
    CliError { code: EXIT_CONFIG, inner: anyhow!(msg) }
}

fn data_error(msg: String) -> CliError {
    CliError { code: EXIT_DATA, inner: anyhow!(msg) }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).or_config(format!("cannot read {}", path.display()))
}

fn open(path: &Path) -> Result<File, CliError> {
    File::open(path).or_config(format!("cannot open {}", path.display()))
}

fn require_files(feeds: &FeedArgs) -> Result<(), CliError> {
    for p in &feeds.feeds {
        if !p.is_file() {
            return Err(config_error(format!("feed {} does not exist", p.display())));
        }
    }
    Ok(())
}

fn load_store(feeds: &FeedArgs) -> Result<ChainStore, CliError> {
    let mut store = ChainStore::default();
    for path in &feeds.feeds {
        let reader = read_feed(path).or_data(format!("cannot read feed {}", path.display()))?;
        for tx in reader {
            let tx = tx.or_data(format!("feed {}", path.display()))?;
            store.push(tx).or_data(format!("feed {}", path.display()))?;
        }
        log::info!("{}: {} transactions so far", path.display(), store.len());
    }
    Ok(store)
}

fn create_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).or_config(format!("cannot create {}", dir.display()))
}

fn out_file(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    let p = dir.join(name);
    File::create(&p).map(BufWriter::new).or_data(format!("cannot write {}", p.display()))
}

fn write_summary(dir: &Path, summary: &Value) -> Result<(), CliError> {
    let mut f = out_file(dir, "summary.json")?;
    serde_json::to_writer_pretty(&mut f, summary)
        .map_err(anyhow::Error::from)
        .and_then(|_| writeln!(f).and_then(|_| f.flush()).map_err(anyhow::Error::from))
        .or_data("cannot write summary.json")
}

fn path_echo(p: &Option<PathBuf>) -> Value {
    p.as_ref().map_or(Value::Null, |p| json!(p.display().to_string()))
}

fn feeds_echo(f: &FeedArgs) -> Value {
    json!(f.feeds.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())
}

fn block_range(store: &ChainStore) -> Value {
    store.height_range().map_or(Value::Null, |(lo, hi)| json!([lo, hi]))
}

fn btc(s: &str, flag: &str) -> Result<Amount, CliError> {
    Amount::from_btc_str(s).or_config(format!("--{flag} `{s}`"))
}

struct Detector {
    cfg: DetectConfig,
    forest: Option<Forest>,
    echo: Value,
}

fn detector(a: &DetectorArgs) -> Result<Detector, CliError> {
    let wcdh = WcdhConfig {
        min_equal_outputs: a.min_equal_outputs,
        mode_center: btc(&a.mode_center, "mode-center")?,
        mode_tolerance: btc(&a.mode_tolerance, "mode-tolerance")?,
        min_unique_values: a.min_unique_values,
    };
    wcdh.validate().or_config("WCDH settings")?;
    let tolerance = btc(&a.premix_tolerance, "premix-tolerance")?;
    let coordinators = match &a.coordinators {
        Some(p) => parse_coordinator_list(&read_text(p)?),
        None => Default::default(),
    };
    let mut cfg = DetectConfig {
        wcdh,
        coordinators,
        pools: PoolKind::ALL.iter().map(|&k| Pool::with_tolerance(k, tolerance)).collect(),
        ..DetectConfig::default()
    };
    let mut pins = BTreeMap::new();
    for spec in &a.genesis {
        let (pool, path) = spec
            .split_once('=')
            .ok_or_else(|| config_error(format!("--genesis `{spec}`: expected POOL=PATH")))?;
        let pool: PoolKind = pool.parse().or_config(format!("--genesis `{spec}`"))?;
        let ids = parse_txid_list(&read_text(Path::new(path))?).or_config(format!("genesis list {path}"))?;
        if ids.is_empty() {
            return Err(config_error(format!("genesis list {path} for pool {pool} is empty")));
        }
        pins.insert(pool.label().to_owned(), json!(path));
        if cfg.genesis_override.insert(pool, ids).is_some() {
            return Err(config_error(format!("pool {pool} pinned twice")));
        }
    }
    let forest = match &a.model {
        Some(p) => Some(Forest::read_json(std::io::BufReader::new(open(p)?)).or_config(format!("model {}", p.display()))?),
        None => None,
    };
    let echo = json!({
        "min_equal_outputs": wcdh.min_equal_outputs,
        "mode_center_sat": wcdh.mode_center.to_sat(),
        "mode_tolerance_sat": wcdh.mode_tolerance.to_sat(),
        "min_unique_values": wcdh.min_unique_values,
        "premix_tolerance_sat": tolerance.to_sat(),
        "coordinators": path_echo(&a.coordinators),
        "coordinator_count": cfg.coordinators.len(),
        "genesis_pins": pins,
        "model": path_echo(&a.model),
    });
    Ok(Detector { cfg, forest, echo })
}

fn warn_missing_pins(store: &ChainStore, cfg: &DetectConfig) {
    for (pool, ids) in &cfg.genesis_override {
        for id in ids.iter().filter(|t| !store.contains(t)) {
            log::warn!("pinned genesis {id} for pool {pool} is not in the feed");
        }
    }
}

fn run_detection(store: &ChainStore, det: &Detector) -> DetectionSet {
    warn_missing_pins(store, &det.cfg);
    run_detect(store, &det.cfg, det.forest.as_ref())
}

fn read_tag_file(p: &Option<PathBuf>) -> Result<Vec<AttributionTag>, CliError> {
    match p {
        Some(p) => read_tags(open(p)?).or_config(format!("tags {}", p.display())),
        None => Ok(Vec::new()),
    }
}

fn read_labels(p: &Path) -> Result<Vec<(TxId, SynthLabel)>, CliError> {
    read_labels_csv(open(p)?).or_config(format!("labels {}", p.display()))
}

fn train_config(f: &ForestArgs) -> Result<TrainConfig, CliError> {
    let cfg = TrainConfig {
        n_trees: f.trees,
        mtry: f.mtry,
        rng_seed: f.seed,
        max_depth: f.max_depth,
        min_leaf: f.min_leaf,
    };
    cfg.validate(FEATURE_NAMES.len()).or_config("forest settings")?;
    if f.per_class == Some(0) {
        return Err(config_error("--per-class must be at least 1".into()));
    }
    Ok(cfg)
}

fn forest_echo(f: &ForestArgs) -> Value {
    json!({
        "trees": f.trees,
        "mtry": f.mtry,
        "max_depth": f.max_depth,
        "min_leaf": f.min_leaf,
        "per_class": f.per_class,
        "seed": f.seed,
    })
}

fn metrics_json(m: &EvalMetrics) -> Value {
    serde_json::to_value(m).expect("metrics serialize")
}

// ---- subcommands ----

pub fn ingest_check(a: IngestArgs) -> Outcome {
    require_files(&a.feed)?;
    let store = load_store(&a.feed)?;
    let (first, last) = match (store.transactions().first(), store.transactions().last()) {
        (Some(f), Some(l)) => (json!(f.timestamp), json!(l.timestamp)),
        _ => (Value::Null, Value::Null),
    };
    Ok(json!({
        "command": "ingest-check",
        "transactions": store.len(),
        "outputs": store.transactions().iter().map(|t| t.outputs.len()).sum::<usize>(),
        "block_range": block_range(&store),
        "time_range": [first, last],
        "unresolved_inputs": store.unresolved().len(),
        "total_fees_sat": store.total_fees().to_sat(),
        "config": { "feeds": feeds_echo(&a.feed) },
    }))
}

pub fn synth(a: SynthArgs) -> Outcome {
    let mut plan = match &a.plan {
        Some(p) => serde_json::from_str::<ScenarioPlan>(&read_text(p)?).or_config(format!("plan {}", p.display()))?,
        None => {
            let seed = a.seed.unwrap_or(ScenarioPlan::default().seed);
            match a.preset {
                Preset::Default => ScenarioPlan { seed, ..ScenarioPlan::default() },
                Preset::Empty => ScenarioPlan::empty(seed),
                Preset::Wcdh => ScenarioPlan::wcdh_suite(seed),
                Preset::Classifier => ScenarioPlan::classifier_suite(seed),
                Preset::Whirlpool => ScenarioPlan::whirlpool_suite(seed),
                Preset::Star => ScenarioPlan::star(seed, a.fan),
                Preset::Collector => ScenarioPlan::collector(seed, a.fan),
            }
        }
    };
    if let Some(s) = a.seed {
        plan.seed = s;
    }
    plan.validate().or_config("scenario plan")?;
    let out = generate(&plan).or_config("scenario plan")?;
    create_out(&a.out.dir)?;
    let files = out.write_dir(&a.out.dir).or_data(format!("cannot write into {}", a.out.dir.display()))?;

    let mut labels: BTreeMap<String, usize> = BTreeMap::new();
    for (_, l) in &out.truth.labels {
        *labels.entry(l.to_string()).or_default() += 1;
    }
    let summary = json!({
        "command": "synth",
        "transactions": out.transactions.len(),
        "labels": labels,
        "near_misses": out.truth.near_misses.len(),
        "files": files.iter().map(|p| p.display().to_string()).collect::<Vec<_>>(),
        "config": { "plan": serde_json::to_value(&plan).expect("plan serializes") },
    });
    write_summary(&a.out.dir, &summary)?;
    Ok(summary)
}

fn write_wasabi_csv(dir: &Path, store: &ChainStore, d: &DetectionSet) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out_file(dir, "wasabi.csv")?);
    let flag = |b: bool| if b { "1" } else { "0" };
    let mut rows = || -> csv::Result<()> {
        w.write_record(["txid", "height", "static", "wcdh", "forest"])?;
        for tx in store.transactions().iter().filter(|t| d.is_wasabi(&t.txid)) {
            let forest = d.wasabi_forest.as_ref().map_or("", |f| flag(f.contains(&tx.txid)));
            w.write_record([
                tx.txid.to_string().as_str(),
                &tx.block_height.to_string(),
                flag(d.wasabi_static.contains(&tx.txid)),
                flag(d.wasabi_wcdh.contains(&tx.txid)),
                forest,
            ])?;
        }
        w.flush()?;
        Ok(())
    };
    rows().or_data("cannot write wasabi.csv")
}

fn write_tx0_csv(dir: &Path, store: &ChainStore, d: &DetectionSet) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(out_file(dir, "tx0.csv")?);
    let mut rows = || -> csv::Result<()> {
        w.write_record(["txid", "height"])?;
        for tx in store.transactions().iter().filter(|t| d.tx0.contains(&t.txid)) {
            w.write_record([tx.txid.to_string(), tx.block_height.to_string()])?;
        }
        w.flush()?;
        Ok(())
    };
    rows().or_data("cannot write tx0.csv")
}

fn write_detection_files(dir: &Path, store: &ChainStore, d: &DetectionSet) -> Result<(), CliError> {
    write_wasabi_csv(dir, store, d)?;
    write_whirlpool_csv(out_file(dir, "whirlpool.csv")?, store, &d.whirlpool).or_data("cannot write whirlpool.csv")?;
    write_tx0_csv(dir, store, d)
}

pub fn detect(a: DetectArgs) -> Outcome {
    let det = detector(&a.detector)?;
    require_files(&a.feed)?;
    let store = load_store(&a.feed)?;
    let d = run_detection(&store, &det);
    create_out(&a.out.dir)?;
    write_detection_files(&a.out.dir, &store, &d)?;
    let summary = json!({
        "command": "detect",
        "transactions": store.len(),
        "block_range": block_range(&store),
        "counts": serde_json::to_value(d.summary()).expect("summary serializes"),
        "config": { "feeds": feeds_echo(&a.feed), "detector": det.echo },
    });
    write_summary(&a.out.dir, &summary)?;
    Ok(summary)
}

fn resolved(store: &ChainStore, tx: &Transaction) -> bool {
    tx.inputs.iter().all(|i| store.output(&i.outpoint()).is_some())
}

pub fn features(a: FeaturesArgs) -> Outcome {
    let labels = a.labels.as_deref().map(read_labels).transpose()?;
    require_files(&a.feed)?;
    let store = load_store(&a.feed)?;
    let label_of: Option<HashMap<TxId, SynthLabel>> = labels.map(|l| l.into_iter().collect());
    let candidates: Vec<&Transaction> = match &label_of {
        Some(map) => {
            if let Some(t) = map.keys().find(|t| !store.contains(t)) {
                return Err(data_error(format!("labelled transaction {t} is not in the feed")));
            }
            store.transactions().iter().filter(|t| map.contains_key(&t.txid)).collect()
        }
        None => store.transactions().iter().collect(),
    };
    let (rows_tx, skipped): (Vec<&Transaction>, Vec<&Transaction>) =
        candidates.into_iter().partition(|t| resolved(&store, t));
    let entities = prefilter_entities(&store);
    let rows = extract_features_batch(&rows_tx, &store, &entities).or_data("feature extraction")?;

    create_out(&a.out.dir)?;
    let mut w = csv::Writer::from_writer(out_file(&a.out.dir, "features.csv")?);
    let mut write = || -> csv::Result<()> {
        let mut header = vec!["txid"];
        header.extend(FEATURE_NAMES);
        if label_of.is_some() {
            header.push("label");
        }
        w.write_record(&header)?;
        for (tx, fv) in rows_tx.iter().zip(&rows) {
            let mut rec = vec![tx.txid.to_string()];
            rec.extend(fv.to_array().iter().map(f64::to_string));
            if let Some(map) = &label_of {
                rec.push(Label::from_bool(map[&tx.txid].is_wasabi()).to_string());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    };
    write().or_data("cannot write features.csv")?;
    let summary = json!({
        "command": "features",
        "rows": rows.len(),
        "skipped_unresolved": skipped.len(),
        "config": { "feeds": feeds_echo(&a.feed), "labels": path_echo(&a.labels) },
    });
    write_summary(&a.out.dir, &summary)?;
    Ok(summary)
}

pub fn train(a: TrainArgs) -> Outcome {
    let cfg = train_config(&a.forest)?;
    let labels = read_labels(&a.labels)?;
    require_files(&a.feed)?;
    let store = load_store(&a.feed)?;
    let corpus = labeled_corpus(&store, &labels, a.forest.per_class, a.forest.seed).or_data("labelled corpus")?;
    let forest = train_forest(&corpus, &cfg).or_data("training")?;
    let oob = forest.oob_error(&corpus);
    if let Some(parent) = a.model_out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_out(parent)?;
    }
    let mut f = File::create(&a.model_out)
        .map(BufWriter::new)
        .or_data(format!("cannot write {}", a.model_out.display()))?;
    forest
        .write_json(&mut f)
        .map_err(anyhow::Error::from)
        .and_then(|_| f.flush().map_err(anyhow::Error::from))
        .or_data(format!("cannot write {}", a.model_out.display()))?;
    let [background, wasabi] = corpus.class_counts();
    Ok(json!({
        "command": "train",
        "rows": corpus.len(),
        "class_counts": { "background": background, "wasabi": wasabi },
        "oob": oob.map(|o| serde_json::to_value(o).expect("oob serializes")),
        "model": a.model_out.display().to_string(),
        "config": {
            "feeds": feeds_echo(&a.feed),
            "labels": a.labels.display().to_string(),
            "forest": forest_echo(&a.forest),
        },
    }))
}

pub fn eval(a: EvalArgs) -> Outcome {
    let cfg = train_config(&a.forest)?;
    if !(a.train_fraction > 0.0 && a.train_fraction < 1.0) {
        return Err(config_error(format!("--train-fraction {} must lie strictly between 0 and 1", a.train_fraction)));
    }
    let det = detector(&a.detector)?;
    let labels = read_labels(&a.labels)?;
    require_files(&a.feed)?;
    let store = load_store(&a.feed)?;
    let corpus = labeled_corpus(&store, &labels, a.forest.per_class, a.forest.seed).or_data("labelled corpus")?;
    if corpus.class_counts().contains(&0) {
        return Err(data_error(format!(
            "labelled corpus has a single class (background {}, wasabi {}); evaluation needs both",
            corpus.class_counts()[0],
            corpus.class_counts()[1]
        )));
    }
    let (train, test) = split_train_test(&corpus, a.train_fraction, a.forest.seed).or_data("split")?;
    if test.is_empty() {
        return Err(data_error("the test split is empty".into()));
    }
    let forest = train_forest(&train, &cfg).or_data("training")?;
    let rf = evaluate(&forest, &test);
    let wcdh_pred: Vec<Label> = (0..test.len())
        .map(|i| {
            let id: TxId = test.id(i).parse().expect("corpus ids are txids");
            let tx = store.get(&id).expect("corpus rows come from the store");
            Label::from_bool(detect_wasabi_wcdh(tx, &det.cfg.wcdh))
        })
        .collect();
    let wcdh = EvalMetrics::from_labels(test.labels(), &wcdh_pred);

    create_out(&a.out.dir)?;
    write_metrics_csv(out_file(&a.out.dir, "metrics.csv")?, &[("wcdh", wcdh), ("random_forest", rf)])
        .or_data("cannot write metrics.csv")?;
    let summary = json!({
        "command": "eval",
        "train_rows": train.len(),
        "test_rows": test.len(),
        "wcdh": metrics_json(&wcdh),
        "random_forest": metrics_json(&rf),
        "config": {
            "feeds": feeds_echo(&a.feed),
            "labels": a.labels.display().to_string(),
            "train_fraction": a.train_fraction,
            "forest": forest_echo(&a.forest),
            "detector": det.echo,
        },
    });
    write_summary(&a.out.dir, &summary)?;
    Ok(summary)
}

fn graph_echo(g: &GraphArgs) -> Value {
    json!({ "tags": path_echo(&g.tags), "threshold": g.threshold })
}

fn entity_map(store: &ChainStore, d: &DetectionSet, tags: &[AttributionTag]) -> (EntityMap, Value) {
    let mut ents = compute_degrees(store, cluster_entities(store, &d.coinjoin_txids()));
    let r = ents.apply_tags(tags);
    let echo = json!({
        "applied": r.applied,
        "skipped_unknown": r.skipped_unknown,
        "conflicts": r.conflicts,
    });
    (ents, echo)
}

pub fn cluster(a: ClusterArgs) -> Outcome {
    if a.graph.threshold == 0 {
        return Err(config_error("--threshold must be at least 1".into()));
    }
    let det = detector(&a.detector)?;
    let tags = read_tag_file(&a.graph.tags)?;
    require_files(&a.feed)?;
    let store = load_store(&a.feed)?;
    let d = run_detection(&store, &det);
    let (ents, tag_report) = entity_map(&store, &d, &tags);
    let coinjoins = d.coinjoin_txids();

    create_out(&a.out.dir)?;
    let mut w = csv::Writer::from_writer(out_file(&a.out.dir, "entities.csv")?);
    let mut write = || -> csv::Result<()> {
        w.write_record(["address", "entity"])?;
        for (addr, rep) in ents.address_assignments() {
            w.write_record([addr, rep])?;
        }
        w.flush()?;
        Ok(())
    };
    write().or_data("cannot write entities.csv")?;

    let mut levels = serde_json::Map::new();
    for dir in [Direction::Receive, Direction::Send] {
        let lv = assign_levels(&store, &ents, &coinjoins, a.graph.threshold, dir);
        let name = format!("levels_{}.csv", dir.as_str());
        write_levels_csv(out_file(&a.out.dir, &name)?, &lv, &ents).or_data(format!("cannot write {name}"))?;
        let mut per_level: BTreeMap<u8, usize> = BTreeMap::new();
        for (_, l) in lv.iter() {
            *per_level.entry(l).or_default() += 1;
        }
        let exchanges: BTreeMap<u8, usize> = match_exchanges(&lv, &ents).into_iter().map(|(l, s)| (l, s.len())).collect();
        levels.insert(dir.as_str().to_owned(), json!({ "entities": per_level, "exchanges": exchanges }));
    }
    let summary = json!({
        "command": "cluster",
        "addresses": ents.address_assignments().len(),
        "entities": ents.len(),
        "excluded_coinjoins": coinjoins.len(),
        "tags": tag_report,
        "levels": levels,
        "config": { "feeds": feeds_echo(&a.feed), "detector": det.echo, "graph": graph_echo(&a.graph) },
    });
    write_summary(&a.out.dir, &summary)?;
    Ok(summary)
}

pub fn report(a: ReportArgs) -> Outcome {
    if a.graph.threshold == 0 {
        return Err(config_error("--threshold must be at least 1".into()));
    }
    let det = detector(&a.detector)?;
    let tags = read_tag_file(&a.graph.tags)?;
    let rates = match &a.rates {
        Some(p) => Some(RateTable::read_csv(open(p)?).or_config(format!("rates {}", p.display()))?),
        None => None,
    };
    require_files(&a.feed)?;
    let store = load_store(&a.feed)?;
    let d = run_detection(&store, &det);
    let (ents, tag_report) = entity_map(&store, &d, &tags);
    let report = build_report(&ReportInputs {
        store: &store,
        detections: &d,
        entities: &ents,
        degree_threshold: a.graph.threshold,
        rates: rates.as_ref(),
    })
    .or_data("USD conversion")?;

    create_out(&a.out.dir)?;
    report.write_all(&a.out.dir, &store).or_data(format!("cannot write into {}", a.out.dir.display()))?;
    write_detection_files(&a.out.dir, &store, &d)?;

    let totals: BTreeMap<String, Value> = Protocol::ALL
        .iter()
        .map(|&p| {
            let t = &report.ledger.protocol(p).totals;
            (
                p.to_string(),
                json!({
                    "coinjoins": t.coinjoins,
                    "fresh_in_sat": t.fresh_in.to_sat(),
                    "mixed_exit_sat": t.mixed_exit.to_sat(),
                    "balanced": t.is_balanced(),
                }),
            )
        })
        .collect();
    let summary = json!({
        "command": "report",
        "transactions": store.len(),
        "block_range": block_range(&store),
        "months": report.months.len(),
        "counts": serde_json::to_value(d.summary()).expect("summary serializes"),
        "flows": totals,
        "remixless": report.remixless.len(),
        "tags": tag_report,
        "files": REPORT_FILES,
        "config": {
            "feeds": feeds_echo(&a.feed),
            "detector": det.echo,
            "graph": graph_echo(&a.graph),
            "rates": path_echo(&a.rates),
        },
    });
    write_summary(&a.out.dir, &summary)?;
    Ok(summary)
}
