//! Monthly series over detected CoinJoins: transaction counts, the mix flow
//! ledger, exchange flows, anonymity bounds, pre/post-mix anonymity sets and
//! remix-less rounds. Every series is written as a fixed-schema CSV.

mod anonymity;
mod flows;
mod ledger;
mod month;
mod usd;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

pub use anonymity::{
    anonymity_upper_bound, pre_post_anonymity, remixless_coinjoins, AnonymityBound,
    AnonymitySetReport, SideCounts,
};
pub use flows::{classify_exit, exchange_flow_series, ExchangeFlowRow, ExchangeFlowSeries, ExchangeHop};
pub use ledger::{
    FlowEvent, FlowKind, FlowTotals, LedgerEntry, MixFlowLedger, OutputStatus, Stream, StreamLedger,
};
pub use month::{day_of, month_span, MonthKey};
pub use usd::{usd_convert, RateError, RateTable, MAX_RATE_GAP_DAYS};

use crate::amount::Amount;
use crate::chain::{ChainStore, TxIndex};
use crate::detect::{DetectionSet, Protocol};
use crate::entity::EntityMap;
use crate::whirlpool::PoolKind;

pub const DEFAULT_DEGREE_THRESHOLD: usize = 100;

/// CoinJoin counts of one month: Wasabi, Samourai, then each pool.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MonthlyCounts {
    pub wasabi: usize,
    pub samourai: usize,
    pub by_pool: [usize; 4],
}

/// Per-month CoinJoin counts, one row for every month in `months`.
pub fn monthly_counts(
    store: &ChainStore,
    detections: &DetectionSet,
    months: &[MonthKey],
) -> BTreeMap<MonthKey, MonthlyCounts> {
    let mut out: BTreeMap<MonthKey, MonthlyCounts> =
        months.iter().map(|&m| (m, MonthlyCounts::default())).collect();
    for tx in store.transactions() {
        let Some(protocol) = detections.protocol_of(&tx.txid) else {
            continue;
        };
        let row = out.entry(MonthKey::of_timestamp(tx.timestamp)).or_default();
        match protocol {
            Protocol::Wasabi => row.wasabi += 1,
            Protocol::Samourai => {
                row.samourai += 1;
                let pool = detections.whirlpool.pool_of(&tx.txid).expect("samourai tx has a pool");
                let slot = PoolKind::ALL.iter().position(|&p| p == pool).expect("known pool");
                row.by_pool[slot] += 1;
            }
        }
    }
    out
}

pub struct ReportInputs<'a> {
    pub store: &'a ChainStore,
    pub detections: &'a DetectionSet,
    /// Clustered with detected CoinJoins excluded, degrees computed and tags
    /// applied.
    pub entities: &'a EntityMap,
    pub degree_threshold: usize,
    pub rates: Option<&'a RateTable>,
}

/// USD sums per month of fresh inputs and mixed exits.
type UsdSeries = BTreeMap<Stream, (BTreeMap<MonthKey, f64>, BTreeMap<MonthKey, f64>)>;

pub struct MetricsReport {
    pub months: Vec<MonthKey>,
    pub counts: BTreeMap<MonthKey, MonthlyCounts>,
    pub ledger: MixFlowLedger,
    pub usd: Option<UsdSeries>,
    pub exchange_flows: BTreeMap<Protocol, ExchangeFlowSeries>,
    pub bounds: BTreeMap<Stream, Vec<AnonymityBound>>,
    pub pre_post: BTreeMap<Protocol, AnonymitySetReport>,
    pub remixless: Vec<TxIndex>,
}

pub fn build_report(inputs: &ReportInputs<'_>) -> Result<MetricsReport, RateError> {
    let store = inputs.store;
    let months = month_span(store);
    let ledger = MixFlowLedger::build(store, inputs.detections);

    let usd = match inputs.rates {
        None => None,
        Some(rates) => {
            let mut series = BTreeMap::new();
            for (&s, l) in &ledger.streams {
                let fresh = usd_convert(&l.dated(FlowKind::Fresh), rates)?;
                let exit = usd_convert(&l.dated(FlowKind::MixedExit), rates)?;
                series.insert(s, (fresh, exit));
            }
            Some(series)
        }
    };

    let exchange_flows = Protocol::ALL
        .iter()
        .map(|&p| {
            let series = exchange_flow_series(
                store,
                ledger.protocol(p),
                inputs.entities,
                inputs.degree_threshold,
                &months,
            );
            (p, series)
        })
        .collect();
    let bounds = ledger
        .streams
        .iter()
        .map(|(&s, l)| (s, anonymity_upper_bound(l, s.beta(), &months)))
        .collect();
    let pre_post = Protocol::ALL
        .iter()
        .map(|&p| (p, pre_post_anonymity(store, ledger.protocol(p), inputs.entities, &months)))
        .collect();
    let remixless = remixless_coinjoins(ledger.protocol(Protocol::Wasabi));

    Ok(MetricsReport {
        counts: monthly_counts(store, inputs.detections, &months),
        months,
        ledger,
        usd,
        exchange_flows,
        bounds,
        pre_post,
        remixless,
    })
}

fn sat(a: Amount) -> String {
    a.to_sat().to_string()
}

fn usd_cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.2}"))
}

pub const REPORT_FILES: [&str; 6] = [
    "monthly_counts.csv",
    "mix_flows.csv",
    "exchange_flows.csv",
    "anonymity_bounds.csv",
    "pre_post_anonymity.csv",
    "remixless.csv",
];

impl MetricsReport {
    pub fn write_monthly_counts<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["month".to_owned(), "wasabi".into(), "samourai".into()];
        header.extend(PoolKind::ALL.iter().map(|p| format!("samourai_{p}")));
        w.write_record(&header)?;
        for (m, c) in &self.counts {
            let mut row = vec![m.to_string(), c.wasabi.to_string(), c.samourai.to_string()];
            row.extend(c.by_pool.iter().map(usize::to_string));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_mix_flows<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "month",
            "stream",
            "fresh_in_sat",
            "remix_in_sat",
            "mixed_exit_sat",
            "change_exit_sat",
            "fees_sat",
            "fresh_in_usd",
            "mixed_exit_usd",
        ])?;
        for (&s, l) in &self.ledger.streams {
            let monthly = l.monthly();
            for m in &self.months {
                let get = |k: FlowKind| {
                    monthly
                        .get(m)
                        .and_then(|r| r.get(&k))
                        .copied()
                        .unwrap_or(Amount::ZERO)
                };
                let usd = self.usd.as_ref().map(|u| &u[&s]);
                w.write_record([
                    m.to_string(),
                    s.to_string(),
                    sat(get(FlowKind::Fresh)),
                    sat(get(FlowKind::Remix)),
                    sat(get(FlowKind::MixedExit)),
                    sat(get(FlowKind::ChangeExit)),
                    sat(get(FlowKind::Fee)),
                    usd_cell(usd.map(|u| u.0.get(m).copied().unwrap_or(0.0))),
                    usd_cell(usd.map(|u| u.1.get(m).copied().unwrap_or(0.0))),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_exchange_flows<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "month",
            "protocol",
            "direct_txs",
            "direct_sat",
            "indirect_txs",
            "indirect_sat",
        ])?;
        for (p, series) in &self.exchange_flows {
            for (m, row) in &series.rows {
                let d = row[&ExchangeHop::Direct];
                let i = row[&ExchangeHop::Indirect];
                w.write_record([
                    m.to_string(),
                    p.to_string(),
                    d.txs.to_string(),
                    sat(d.amount),
                    i.txs.to_string(),
                    sat(i.amount),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_anonymity_bounds<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["month", "stream", "alpha_sat", "beta_sat", "bound"])?;
        for (s, rows) in &self.bounds {
            for b in rows {
                w.write_record([
                    b.month.to_string(),
                    s.to_string(),
                    sat(b.alpha),
                    sat(b.beta),
                    b.bound.to_string(),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_pre_post<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["month", "protocol", "side", "addresses", "entities"])?;
        for (p, r) in &self.pre_post {
            for (side, rows) in [("pre", &r.pre), ("post", &r.post)] {
                for (m, c) in rows {
                    w.write_record([
                        m.to_string(),
                        p.to_string(),
                        side.to_owned(),
                        c.addresses.to_string(),
                        c.entities.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_remixless<W: Write>(&self, out: W, store: &ChainStore) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["txid", "height", "month"])?;
        for &i in &self.remixless {
            let tx = store.tx(i);
            w.write_record([
                tx.txid.to_string(),
                tx.block_height.to_string(),
                MonthKey::of_timestamp(tx.timestamp).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes every CSV in [`REPORT_FILES`] into `dir`.
    pub fn write_all(&self, dir: &Path, store: &ChainStore) -> io::Result<()> {
        let open = |name: &str| File::create(dir.join(name)).map(BufWriter::new);
        self.write_monthly_counts(open(REPORT_FILES[0])?)?;
        self.write_mix_flows(open(REPORT_FILES[1])?)?;
        self.write_exchange_flows(open(REPORT_FILES[2])?)?;
        self.write_anonymity_bounds(open(REPORT_FILES[3])?)?;
        self.write_pre_post(open(REPORT_FILES[4])?)?;
        self.write_remixless(open(REPORT_FILES[5])?, store)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::{detect, DetectConfig};
    use crate::entity::{cluster_entities, compute_degrees};
    use crate::testutil::Builder;

    #[test]
    fn counts_include_empty_months() {
        let mut b = Builder::new();
        // Second round about 70 days after the first.
        b.block_secs = 6 * 86_400;
        let mut last = None;
        for r in 0..12 {
            let ins: Vec<String> = (0..10).map(|i| format!("r{r}in{i}")).collect();
            let f = b.fund(&ins.iter().map(String::as_str).collect::<Vec<_>>());
            if r % 11 == 0 {
                let outs: Vec<String> = (0..12).map(|i| format!("r{r}o{i}")).collect();
                let mut vals: Vec<(&str, u64)> = outs[..10].iter().map(|a| (a.as_str(), 10_000_000)).collect();
                vals.push((&outs[10], 1));
                vals.push((&outs[11], 2));
                last = Some(b.spend_values(&(0..10).map(|v| (f, v)).collect::<Vec<_>>(), &vals));
            }
        }
        let store = b.store();
        let d = detect(&store, &DetectConfig::with_default_pools(), None);
        assert!(last.is_some_and(|t| d.is_wasabi(&t)));
        let months = month_span(&store);
        let c = monthly_counts(&store, &d, &months);
        assert_eq!(c.len(), months.len());
        assert_eq!(c.values().map(|r| r.wasabi).sum::<usize>(), 2);
        assert!(c.values().any(|r| r.wasabi == 0));
    }

    #[test]
    fn report_writes_fixed_headers() {
        let mut b = Builder::new();
        let f = b.fund(&["a"]);
        b.spend(&[(f, 0)], &["b"]);
        let store = b.store();
        let d = detect(&store, &DetectConfig::with_default_pools(), None);
        let ents = compute_degrees(&store, cluster_entities(&store, &d.coinjoin_txids()));
        let r = build_report(&ReportInputs {
            store: &store,
            detections: &d,
            entities: &ents,
            degree_threshold: DEFAULT_DEGREE_THRESHOLD,
            rates: None,
        })
        .unwrap();
        let mut buf = Vec::new();
        r.write_monthly_counts(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "month,wasabi,samourai,samourai_0.001,samourai_0.01,samourai_0.05,samourai_0.5"
        );
        assert_eq!(text.lines().nth(1).unwrap(), "2020-09,0,0,0,0,0,0");
        let mut buf = Vec::new();
        r.write_mix_flows(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(text.contains("2020-09,samourai-0.01,0,0,0,0,0,,\n"));
    }
}
