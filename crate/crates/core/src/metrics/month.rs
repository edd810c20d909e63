use std::fmt;

use chrono::{DateTime, Datelike, NaiveDate};

use crate::chain::ChainStore;

/// UTC calendar month.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MonthKey {
    pub year: i32,
    pub month: u32,
}

/// UTC calendar day of a block timestamp.
pub fn day_of(timestamp: i64) -> NaiveDate {
    DateTime::from_timestamp(timestamp, 0)
        .unwrap_or_else(|| panic!("timestamp {timestamp} outside the supported range"))
        .date_naive()
}

impl MonthKey {
    pub fn new(year: i32, month: u32) -> Self {
        assert!((1..=12).contains(&month), "month {month} out of range");
        MonthKey { year, month }
    }

    pub fn of_date(d: NaiveDate) -> Self {
        MonthKey {
            year: d.year(),
            month: d.month(),
        }
    }

    pub fn of_timestamp(timestamp: i64) -> Self {
        MonthKey::of_date(day_of(timestamp))
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            MonthKey::new(self.year + 1, 1)
        } else {
            MonthKey::new(self.year, self.month + 1)
        }
    }

    /// Every month from `first` to `last` inclusive.
    pub fn range(first: MonthKey, last: MonthKey) -> Vec<MonthKey> {
        let mut out = Vec::new();
        let mut m = first;
        while m <= last {
            out.push(m);
            m = m.succ();
        }
        out
    }
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Months spanned by the store's timestamps, gaps included.
pub fn month_span(store: &ChainStore) -> Vec<MonthKey> {
    let ts = store.transactions().iter().map(|t| t.timestamp);
    match (ts.clone().min(), ts.max()) {
        (Some(lo), Some(hi)) => MonthKey::range(MonthKey::of_timestamp(lo), MonthKey::of_timestamp(hi)),
        _ => Vec::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_from_timestamps() {
        // 2020-01-31T23:59:59Z and one second later.
        assert_eq!(MonthKey::of_timestamp(1_580_515_199), MonthKey::new(2020, 1));
        assert_eq!(MonthKey::of_timestamp(1_580_515_200), MonthKey::new(2020, 2));
        assert_eq!(MonthKey::new(2019, 12).succ(), MonthKey::new(2020, 1));
        assert_eq!(MonthKey::new(2020, 3).to_string(), "2020-03");
    }

    #[test]
    fn range_is_inclusive() {
        let r = MonthKey::range(MonthKey::new(2019, 11), MonthKey::new(2020, 2));
        assert_eq!(r.len(), 4);
        assert!(MonthKey::range(MonthKey::new(2020, 2), MonthKey::new(2020, 1)).is_empty());
    }
}
