//! In-memory market dataset keyed by delivery day and hour.

use std::collections::BTreeMap;

use chrono::{Duration, NaiveDate};

use crate::curves::StepCurve;

pub const HOURS_PER_DAY: u8 = 24;

/// Everything known about one delivery hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourRecord {
    pub date: NaiveDate,
    /// Delivery hour, 1..=24.
    pub hour: u8,
    pub bid: Option<StepCurve>,
    pub ask: Option<StepCurve>,
    /// Settled price, EUR/MWh.
    pub price: Option<f64>,
    /// Settled volume, MWh.
    pub volume: Option<f64>,
    /// Point forecast of the price, EUR/MWh.
    pub p_hat: Option<f64>,
}

impl HourRecord {
    pub fn empty(date: NaiveDate, hour: u8) -> Self {
        HourRecord {
            date,
            hour,
            bid: None,
            ask: None,
            price: None,
            volume: None,
            p_hat: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    records: BTreeMap<(NaiveDate, u8), HourRecord>,
}

impl Dataset {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, date: NaiveDate, hour: u8) -> Option<&HourRecord> {
        self.records.get(&(date, hour))
    }

    /// Record for `(date, hour)`, created empty if absent.
    pub fn entry(&mut self, date: NaiveDate, hour: u8) -> &mut HourRecord {
        self.records
            .entry((date, hour))
            .or_insert_with(|| HourRecord::empty(date, hour))
    }

    pub fn insert(&mut self, record: HourRecord) {
        self.records.insert((record.date, record.hour), record);
    }

    /// Records in (date, hour) order.
    pub fn iter(&self) -> impl Iterator<Item = &HourRecord> {
        self.records.values()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut HourRecord> {
        self.records.values_mut()
    }

    pub fn first_date(&self) -> Option<NaiveDate> {
        self.records.keys().next().map(|k| k.0)
    }

    pub fn last_date(&self) -> Option<NaiveDate> {
        self.records.keys().next_back().map(|k| k.0)
    }

    /// Distinct dates in ascending order.
    pub fn dates(&self) -> Vec<NaiveDate> {
        let mut out: Vec<NaiveDate> = Vec::new();
        for &(d, _) in self.records.keys() {
            if out.last() != Some(&d) {
                out.push(d);
            }
        }
        out
    }

    pub fn day(&self, date: NaiveDate) -> impl Iterator<Item = &HourRecord> {
        self.records
            .range((date, 0)..=(date, u8::MAX))
            .map(|(_, r)| r)
    }

    /// Records dated strictly before `date`.
    pub fn before(&self, date: NaiveDate) -> impl Iterator<Item = &HourRecord> {
        self.records.range(..(date, 0)).map(|(_, r)| r)
    }

    /// Most recent ask curve for `hour` dated before `date`, looking back at
    /// most `max_lag_days` days. Returns the curve and its lag in days.
    pub fn latest_ask_before(
        &self,
        date: NaiveDate,
        hour: u8,
        max_lag_days: u32,
    ) -> Option<(&StepCurve, u32)> {
        (1..=max_lag_days).find_map(|lag| {
            let d = date - Duration::days(i64::from(lag));
            self.get(d, hour)
                .and_then(|r| r.ask.as_ref())
                .map(|c| (c, lag))
        })
    }
}

impl FromIterator<HourRecord> for Dataset {
    fn from_iter<I: IntoIterator<Item = HourRecord>>(iter: I) -> Self {
        let mut ds = Dataset::new();
        for r in iter {
            ds.insert(r);
        }
        ds
    }
}
