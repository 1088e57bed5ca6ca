//! CSV readers and writers for every file the pipeline exchanges.
//!
//! All files are UTF-8 with a header row. Readers report the offending
//! line on malformed input. Observed prices and point forecasts that appear
//! twice for the same `(date, hour)` (the repeated hour of a daylight-saving
//! change) are averaged into one record; a missing hour is simply absent.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{self, BufReader, BufWriter};
use std::path::Path;

use chrono::NaiveDate;
use log::warn;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::curves::{PriceLimits, Side, StepCurve};
use crate::dataset::{Dataset, HOURS_PER_DAY};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub date: NaiveDate,
    pub hour: u8,
    pub side: Side,
    pub volume_mwh: f64,
    pub price_eur: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservedRow {
    pub date: NaiveDate,
    pub hour: u8,
    pub price_eur: f64,
    pub volume_mwh: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointForecastRow {
    pub date: NaiveDate,
    pub hour: u8,
    pub p_hat_eur: f64,
}

fn data_err(source: &str, line: u64, message: impl Into<String>) -> Error {
    Error::Data {
        path: source.to_string(),
        line,
        message: message.into(),
    }
}

fn check_hour(source: &str, line: u64, hour: u8) -> Result<()> {
    if (1..=HOURS_PER_DAY).contains(&hour) {
        Ok(())
    } else {
        Err(data_err(source, line, format!("hour {hour} outside 1..=24")))
    }
}

fn check_finite(source: &str, line: u64, name: &str, x: f64) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(data_err(source, line, format!("{name} is not finite")))
    }
}

/// Deserializes every row, pairing it with its 1-based line number.
/// `source` names the input in error messages.
pub fn read_csv<T, R>(reader: R, source: &str) -> Result<Vec<(u64, T)>>
where
    T: DeserializeOwned,
    R: io::Read,
{
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|err| data_err(source, 1, err.to_string()))?
        .clone();
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|err| {
            let line = err.position().map_or(0, |p| p.line());
            data_err(source, line, err.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let value = record.deserialize(Some(&headers)).map_err(|err| {
            let message = match err.kind() {
                csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                _ => err.to_string(),
            };
            data_err(source, line, message)
        })?;
        out.push((line, value));
    }
    Ok(out)
}

pub fn write_csv<T, W, I>(writer: W, rows: I) -> Result<()>
where
    T: Serialize,
    W: io::Write,
    I: IntoIterator<Item = T>,
{
    let mut wtr = csv::Writer::from_writer(writer);
    for row in rows {
        wtr.serialize(row)?;
    }
    wtr.flush()?;
    Ok(())
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path)?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Reads bid and ask curves. Rows of one `(date, hour, side)` group must be
/// contiguous and sorted by volume. A group that reappears later (a repeated
/// daylight-saving hour) is ignored with a warning.
pub fn read_curves<R: io::Read>(reader: R, source: &str, limits: PriceLimits) -> Result<Dataset> {
    let rows: Vec<(u64, CurveRow)> = read_csv(reader, source)?;
    if rows.is_empty() {
        return Err(data_err(source, 1, "no curve rows"));
    }
    let mut ds = Dataset::new();
    let mut i = 0;
    while i < rows.len() {
        let (_, first) = rows[i];
        let key = (first.date, first.hour, first.side);
        let mut j = i;
        while j < rows.len() && (rows[j].1.date, rows[j].1.hour, rows[j].1.side) == key {
            j += 1;
        }
        let group = &rows[i..j];
        let (date, hour, side) = key;
        check_hour(source, group[0].0, hour)?;
        let points: Vec<(f64, f64)> = group.iter().map(|(_, r)| (r.volume_mwh, r.price_eur)).collect();
        let curve = StepCurve::with_limits(side, &points, limits).map_err(|err| Error::CurveRow {
            date,
            hour,
            side,
            line: err.index().map_or(group[0].0, |k| group[k].0),
            source: err,
        })?;
        let rec = ds.entry(date, hour);
        let slot = match side {
            Side::Bid => &mut rec.bid,
            Side::Ask => &mut rec.ask,
        };
        if slot.is_some() {
            warn!(
                "{source}: line {}: repeated {side:?} curve for {date} hour {hour} ignored",
                group[0].0
            );
        } else {
            *slot = Some(curve);
        }
        i = j;
    }
    Ok(ds)
}

pub fn load_curves(path: &Path, limits: PriceLimits) -> Result<Dataset> {
    read_curves(open(path)?, &path.display().to_string(), limits)
}

/// Writes every bid and ask curve in `(date, hour)` order, bid first.
pub fn write_curves<W: io::Write>(writer: W, ds: &Dataset) -> Result<()> {
    let rows = ds.iter().flat_map(|rec| {
        [rec.bid.as_ref(), rec.ask.as_ref()]
            .into_iter()
            .flatten()
            .flat_map(move |c| {
                c.points().map(move |(v, p)| CurveRow {
                    date: rec.date,
                    hour: rec.hour,
                    side: c.side(),
                    volume_mwh: v,
                    price_eur: p,
                })
            })
    });
    write_csv(writer, rows)
}

/// Averages rows sharing a `(date, hour)`.
fn average_duplicates<const N: usize>(
    source: &str,
    rows: impl IntoIterator<Item = (u64, NaiveDate, u8, [f64; N])>,
) -> BTreeMap<(NaiveDate, u8), [f64; N]> {
    let mut acc: BTreeMap<(NaiveDate, u8), ([f64; N], usize)> = BTreeMap::new();
    for (line, date, hour, values) in rows {
        let slot = acc.entry((date, hour)).or_insert(([0.0; N], 0));
        if slot.1 > 0 {
            warn!("{source}: line {line}: duplicate row for {date} hour {hour} averaged");
        }
        for (s, v) in slot.0.iter_mut().zip(values) {
            *s += v;
        }
        slot.1 += 1;
    }
    acc.into_iter()
        .map(|(k, (sum, n))| (k, sum.map(|s| s / n as f64)))
        .collect()
}

/// Settled prices and volumes; duplicate hours are averaged.
pub fn read_observed<R: io::Read>(reader: R, source: &str) -> Result<Vec<ObservedRow>> {
    let rows: Vec<(u64, ObservedRow)> = read_csv(reader, source)?;
    for (line, r) in &rows {
        check_hour(source, *line, r.hour)?;
        check_finite(source, *line, "price_eur", r.price_eur)?;
        check_finite(source, *line, "volume_mwh", r.volume_mwh)?;
    }
    let merged = average_duplicates(
        source,
        rows.iter().map(|(l, r)| (*l, r.date, r.hour, [r.price_eur, r.volume_mwh])),
    );
    Ok(merged
        .into_iter()
        .map(|((date, hour), [price_eur, volume_mwh])| ObservedRow {
            date,
            hour,
            price_eur,
            volume_mwh,
        })
        .collect())
}

/// Point forecasts; duplicate hours are averaged.
pub fn read_point_forecasts<R: io::Read>(reader: R, source: &str) -> Result<Vec<PointForecastRow>> {
    let rows: Vec<(u64, PointForecastRow)> = read_csv(reader, source)?;
    for (line, r) in &rows {
        check_hour(source, *line, r.hour)?;
        check_finite(source, *line, "p_hat_eur", r.p_hat_eur)?;
    }
    let merged = average_duplicates(source, rows.iter().map(|(l, r)| (*l, r.date, r.hour, [r.p_hat_eur])));
    Ok(merged
        .into_iter()
        .map(|((date, hour), [p_hat_eur])| PointForecastRow {
            date,
            hour,
            p_hat_eur,
        })
        .collect())
}

pub fn load_observed(path: &Path) -> Result<Vec<ObservedRow>> {
    read_observed(open(path)?, &path.display().to_string())
}

pub fn load_point_forecasts(path: &Path) -> Result<Vec<PointForecastRow>> {
    read_point_forecasts(open(path)?, &path.display().to_string())
}

pub fn merge_observed(ds: &mut Dataset, rows: &[ObservedRow]) {
    for r in rows {
        let rec = ds.entry(r.date, r.hour);
        rec.price = Some(r.price_eur);
        rec.volume = Some(r.volume_mwh);
    }
}

pub fn merge_point_forecasts(ds: &mut Dataset, rows: &[PointForecastRow]) {
    for r in rows {
        ds.entry(r.date, r.hour).p_hat = Some(r.p_hat_eur);
    }
}

/// Curves, observations and forecasts joined into one dataset.
pub fn load_market(
    curves: &Path,
    observed: &Path,
    forecasts: &Path,
    limits: PriceLimits,
) -> Result<Dataset> {
    let mut ds = load_curves(curves, limits)?;
    merge_observed(&mut ds, &load_observed(observed)?);
    merge_point_forecasts(&mut ds, &load_point_forecasts(forecasts)?);
    Ok(ds)
}

pub fn write_observed<W: io::Write>(writer: W, ds: &Dataset) -> Result<()> {
    write_csv(
        writer,
        ds.iter().filter_map(|r| {
            Some(ObservedRow {
                date: r.date,
                hour: r.hour,
                price_eur: r.price?,
                volume_mwh: r.volume?,
            })
        }),
    )
}

pub fn write_point_forecasts<W: io::Write>(writer: W, ds: &Dataset) -> Result<()> {
    write_csv(
        writer,
        ds.iter().filter_map(|r| {
            Some(PointForecastRow {
                date: r.date,
                hour: r.hour,
                p_hat_eur: r.p_hat?,
            })
        }),
    )
}

/// File names used for the three market files inside a directory.
pub const CURVES_FILE: &str = "curves.csv";
pub const OBSERVED_FILE: &str = "observed.csv";
pub const FORECASTS_FILE: &str = "forecasts.csv";

/// Writes `curves.csv`, `observed.csv` and `forecasts.csv` into `dir`.
pub fn write_market(dir: &Path, ds: &Dataset) -> Result<()> {
    write_curves(create(&dir.join(CURVES_FILE))?, ds)?;
    write_observed(create(&dir.join(OBSERVED_FILE))?, ds)?;
    write_point_forecasts(create(&dir.join(FORECASTS_FILE))?, ds)?;
    Ok(())
}

/// Reads any table of serde rows from a file, dropping line numbers.
pub fn load_table<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    Ok(read_csv(open(path)?, &path.display().to_string())?
        .into_iter()
        .map(|(_, r)| r)
        .collect())
}

pub fn save_table<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    write_csv(create(path)?, rows)
}
