use std::collections::BTreeMap;
use std::io::Read;

use chrono::NaiveDate;
use serde::Deserialize;
use thiserror::Error;

use super::month::MonthKey;
use crate::amount::Amount;

/// Longest allowed distance, in days, to the most recent earlier rate.
pub const MAX_RATE_GAP_DAYS: i64 = 7;

#[derive(Debug, Error)]
pub enum RateError {
    #[error("rates CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("rates CSV: bad date `{0}` (expected YYYY-MM-DD)")]
    Date(String),
    #[error("rates CSV: rate for {0} must be a positive finite number")]
    Value(NaiveDate),
    #[error("rates CSV: duplicate date {0}")]
    Duplicate(NaiveDate),
    #[error("no exchange rate on or before {0}")]
    Missing(NaiveDate),
    #[error("RateGap: nearest rate for {date} is from {last} ({days} days earlier)")]
    RateGap { date: NaiveDate, last: NaiveDate, days: i64 },
}

/// Daily closing USD rates.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RateTable {
    rates: BTreeMap<NaiveDate, f64>,
}

#[derive(Deserialize)]
struct RateRow {
    date: String,
    rate: f64,
}

impl RateTable {
    pub fn from_pairs<I: IntoIterator<Item = (NaiveDate, f64)>>(pairs: I) -> Self {
        RateTable {
            rates: pairs.into_iter().collect(),
        }
    }

    /// Reads a `date,rate` CSV.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, RateError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rates = BTreeMap::new();
        for row in rdr.deserialize::<RateRow>() {
            let row = row?;
            let date = NaiveDate::parse_from_str(row.date.trim(), "%Y-%m-%d")
                .map_err(|_| RateError::Date(row.date.clone()))?;
            if !(row.rate.is_finite() && row.rate > 0.0) {
                return Err(RateError::Value(date));
            }
            if rates.insert(date, row.rate).is_some() {
                return Err(RateError::Duplicate(date));
            }
        }
        Ok(RateTable { rates })
    }

    pub fn len(&self) -> usize {
        self.rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rates.is_empty()
    }

    /// Rate for `date`, falling back to the most recent earlier day at most
    /// seven days back.
    pub fn rate_on(&self, date: NaiveDate) -> Result<f64, RateError> {
        let (&last, &rate) = self
            .rates
            .range(..=date)
            .next_back()
            .ok_or(RateError::Missing(date))?;
        let days = (date - last).num_days();
        if days > MAX_RATE_GAP_DAYS {
            return Err(RateError::RateGap { date, last, days });
        }
        if days > 0 {
            log::warn!("no rate for {date}; using {last}");
        }
        Ok(rate)
    }

    pub fn to_usd(&self, date: NaiveDate, amount: Amount) -> Result<f64, RateError> {
        Ok(amount.as_btc_f64() * self.rate_on(date)?)
    }
}

/// Converts each dated amount at its own day's rate, then sums per month.
pub fn usd_convert(
    series: &[(NaiveDate, Amount)],
    rates: &RateTable,
) -> Result<BTreeMap<MonthKey, f64>, RateError> {
    let mut out = BTreeMap::new();
    for &(date, amount) in series {
        *out.entry(MonthKey::of_date(date)).or_insert(0.0) += rates.to_usd(date, amount)?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    #[test]
    fn converts_at_daily_rate() {
        let r = RateTable::from_pairs([(d("2020-01-01"), 50_000.0)]);
        assert_eq!(r.to_usd(d("2020-01-01"), Amount::from_sat(200_000_000)).unwrap(), 100_000.0);
    }

    #[test]
    fn gap_policy() {
        let r = RateTable::from_pairs([(d("2020-01-01"), 10.0), (d("2020-01-03"), 20.0)]);
        assert_eq!(r.rate_on(d("2020-01-02")).unwrap(), 10.0);
        assert_eq!(r.rate_on(d("2020-01-10")).unwrap(), 20.0);
        assert!(matches!(r.rate_on(d("2020-01-11")), Err(RateError::RateGap { days: 8, .. })));
        assert!(matches!(r.rate_on(d("2019-12-31")), Err(RateError::Missing(_))));
    }

    #[test]
    fn monthly_sum_of_daily_conversions() {
        let r = RateTable::from_pairs([(d("2020-01-01"), 10.0), (d("2020-01-02"), 30.0)]);
        let series = [
            (d("2020-01-01"), Amount::from_sat(100_000_000)),
            (d("2020-01-02"), Amount::from_sat(100_000_000)),
        ];
        let m = usd_convert(&series, &r).unwrap();
        assert_eq!(m[&MonthKey::new(2020, 1)], 40.0);
    }

    #[test]
    fn reads_csv() {
        let r = RateTable::read_csv("date,rate\n2020-01-01,7200.5\n".as_bytes()).unwrap();
        assert_eq!(r.len(), 1);
        assert!(RateTable::read_csv("date,rate\n2020-01-01,-1\n".as_bytes()).is_err());
        assert!(RateTable::read_csv("date,rate\n01/01/2020,1\n".as_bytes()).is_err());
    }
}
