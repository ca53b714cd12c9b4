//! Scenario files.
//!
//! Two hourly CSV files carry the series:
//!
//! - prosumers: `timestamp,prosumer_id,demand_kw,pv_kw`
//! - prices: `timestamp,spot_price,tou_price`
//!
//! Timestamps are ISO-8601 (`2024-01-01T00:00:00`), hourly, starting at
//! midnight. An optional `prosumer_meta.csv` (`prosumer_id,pv_peak_kw,
//! ess_capacity_kwh,ess_power_kw`) carries the hardware. A small manifest ties
//! the files together with the feed-in tariff, seed and horizon.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDateTime, TimeDelta, Timelike};
use sesim_core::domain::{Prosumer, Tariffs, HOURS_PER_DAY};
use sesim_core::scenario::{forecast_series, Scenario};

use crate::IoError;

pub const TIMESTAMP_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";
pub const MANIFEST_NAME: &str = "scenario.txt";

/// Default first hour written by [`write_scenario`].
pub fn default_start() -> NaiveDateTime {
    NaiveDateTime::parse_from_str("2024-01-01T00:00:00", TIMESTAMP_FORMAT).expect("valid literal")
}

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    let s = s.trim();
    NaiveDateTime::parse_from_str(s, TIMESTAMP_FORMAT)
        .or_else(|_| NaiveDateTime::parse_from_str(s, "%Y-%m-%d %H:%M:%S"))
        .ok()
        .or_else(|| DateTime::parse_from_rfc3339(s).ok().map(|d| d.naive_utc()))
}

/// Values used when the scenario files leave something out.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadDefaults {
    pub fit: f64,
    pub ess_capacity_kwh: f64,
    pub ess_power_kw: f64,
    pub seed: u64,
}

impl Default for LoadDefaults {
    fn default() -> Self {
        Self { fit: 0.07, ess_capacity_kwh: 15.0, ess_power_kw: 7.5, seed: 0 }
    }
}

fn data_err(path: &Path, line: u64, msg: String) -> IoError {
    IoError::Data { path: path.to_path_buf(), line, msg }
}

fn reader(path: &Path) -> Result<csv::Reader<fs::File>, IoError> {
    let file = fs::File::open(path).map_err(|e| IoError::file(path, e))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn check_header(path: &Path, rdr: &mut csv::Reader<fs::File>, want: &[&str]) -> Result<(), IoError> {
    let got: Vec<String> = rdr.headers()?.iter().map(|h| h.to_ascii_lowercase()).collect();
    if got != want {
        return Err(data_err(path, 1, format!("expected header {}, got {}", want.join(","), got.join(","))));
    }
    Ok(())
}

fn field<'r>(path: &Path, rec: &'r csv::StringRecord, i: usize, line: u64, name: &str) -> Result<&'r str, IoError> {
    rec.get(i).ok_or_else(|| data_err(path, line, format!("missing column {name}")))
}

fn number(path: &Path, rec: &csv::StringRecord, i: usize, line: u64, name: &str) -> Result<f64, IoError> {
    let s = field(path, rec, i, line, name)?;
    let v: f64 = s.parse().map_err(|_| data_err(path, line, format!("{name}: not a number: {s:?}")))?;
    if !v.is_finite() {
        return Err(data_err(path, line, format!("{name}: not finite: {s:?}")));
    }
    Ok(v)
}

fn timestamp(path: &Path, rec: &csv::StringRecord, line: u64) -> Result<NaiveDateTime, IoError> {
    let s = field(path, rec, 0, line, "timestamp")?;
    parse_timestamp(s).ok_or_else(|| data_err(path, line, format!("bad timestamp {s:?}")))
}

/// Checks that `ts` is the next expected hour after `prev` (if any).
fn check_sequence(
    path: &Path,
    line: u64,
    ts: NaiveDateTime,
    prev: Option<(NaiveDateTime, u64)>,
    what: &str,
) -> Result<(), IoError> {
    if let Some((p, pline)) = prev {
        let step = ts - p;
        if step == TimeDelta::zero() {
            return Err(data_err(path, line, format!("duplicate timestamp {ts}{what} (first at line {pline})")));
        }
        if step < TimeDelta::zero() {
            return Err(data_err(path, line, format!("timestamp {ts}{what} is earlier than {p} at line {pline}")));
        }
        if step != TimeDelta::hours(1) {
            return Err(data_err(path, line, format!("missing hours between {p} and {ts}{what}")));
        }
    }
    Ok(())
}

struct PriceSeries {
    start: NaiveDateTime,
    spot: Vec<f64>,
    tou: Vec<f64>,
}

fn load_prices(path: &Path) -> Result<PriceSeries, IoError> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["timestamp", "spot_price", "tou_price"])?;
    let (mut spot, mut tou) = (Vec::new(), Vec::new());
    let mut prev: Option<(NaiveDateTime, u64)> = None;
    let mut start = None;
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let ts = timestamp(path, &rec, line)?;
        check_sequence(path, line, ts, prev, "")?;
        if start.is_none() {
            if ts.hour() != 0 || ts.minute() != 0 || ts.second() != 0 {
                return Err(data_err(path, line, format!("series must start at midnight, got {ts}")));
            }
            start = Some(ts);
        }
        spot.push(number(path, &rec, 1, line, "spot_price")?);
        let t = number(path, &rec, 2, line, "tou_price")?;
        if t < 0.0 {
            return Err(data_err(path, line, format!("tou_price must be >= 0, got {t}")));
        }
        tou.push(t);
        prev = Some((ts, line));
    }
    let start = start.ok_or_else(|| data_err(path, 1, "no rows".into()))?;
    if spot.len() % HOURS_PER_DAY != 0 {
        return Err(data_err(
            path,
            prev.map_or(1, |p| p.1),
            format!("{} hours is not a whole number of days", spot.len()),
        ));
    }
    Ok(PriceSeries { start, spot, tou })
}

struct Series {
    demand: Vec<f64>,
    pv: Vec<f64>,
    last: Option<(NaiveDateTime, u64)>,
}

fn load_prosumer_series(path: &Path, start: NaiveDateTime, hours: usize) -> Result<BTreeMap<u32, Series>, IoError> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["timestamp", "prosumer_id", "demand_kw", "pv_kw"])?;
    let mut out: BTreeMap<u32, Series> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let ts = timestamp(path, &rec, line)?;
        let id_s = field(path, &rec, 1, line, "prosumer_id")?;
        let id: u32 = id_s.parse().map_err(|_| data_err(path, line, format!("bad prosumer_id {id_s:?}")))?;
        let s = out.entry(id).or_insert(Series { demand: Vec::new(), pv: Vec::new(), last: None });
        let what = format!(" for prosumer {id}");
        if s.last.is_none() && ts != start {
            return Err(data_err(path, line, format!("prosumer {id} starts at {ts}, expected {start}")));
        }
        check_sequence(path, line, ts, s.last, &what)?;
        if s.demand.len() >= hours {
            return Err(data_err(path, line, format!("timestamp {ts}{what} beyond the price series")));
        }
        let d = number(path, &rec, 2, line, "demand_kw")?;
        let g = number(path, &rec, 3, line, "pv_kw")?;
        if d < 0.0 || g < 0.0 {
            return Err(data_err(path, line, "demand_kw and pv_kw must be >= 0".into()));
        }
        s.demand.push(d);
        s.pv.push(g);
        s.last = Some((ts, line));
    }
    for (id, s) in &out {
        if s.demand.len() != hours {
            return Err(data_err(
                path,
                s.last.map_or(0, |l| l.1),
                format!("prosumer {id} has {} hours, prices have {hours}", s.demand.len()),
            ));
        }
    }
    if out.is_empty() {
        return Err(data_err(path, 1, "no rows".into()));
    }
    Ok(out)
}

type Meta = BTreeMap<u32, (f64, f64, f64)>;

fn load_meta(path: &Path) -> Result<Meta, IoError> {
    let mut rdr = reader(path)?;
    check_header(path, &mut rdr, &["prosumer_id", "pv_peak_kw", "ess_capacity_kwh", "ess_power_kw"])?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let id_s = field(path, &rec, 0, line, "prosumer_id")?;
        let id: u32 = id_s.parse().map_err(|_| data_err(path, line, format!("bad prosumer_id {id_s:?}")))?;
        let row = (
            number(path, &rec, 1, line, "pv_peak_kw")?,
            number(path, &rec, 2, line, "ess_capacity_kwh")?,
            number(path, &rec, 3, line, "ess_power_kw")?,
        );
        if out.insert(id, row).is_some() {
            return Err(data_err(path, line, format!("duplicate prosumer_id {id}")));
        }
    }
    Ok(out)
}

/// Loads and validates a scenario from its CSV files.
pub fn load_csv(
    prosumers: &Path,
    prices: &Path,
    meta: Option<&Path>,
    defaults: &LoadDefaults,
) -> Result<Scenario, IoError> {
    let p = load_prices(prices)?;
    let hours = p.spot.len();
    let series = load_prosumer_series(prosumers, p.start, hours)?;
    let meta = meta.map(load_meta).transpose()?;
    let mut list = Vec::with_capacity(series.len());
    for (id, s) in series {
        let (pv_peak, cap, power) = match &meta {
            Some(m) => *m.get(&id).ok_or_else(|| {
                IoError::Invalid(format!("prosumer {id} missing from metadata file"))
            })?,
            None => {
                let peak = s.pv.iter().cloned().fold(0.0, f64::max);
                (if peak > 0.0 { peak } else { 1.0 }, defaults.ess_capacity_kwh, defaults.ess_power_kw)
            }
        };
        list.push(Prosumer {
            id,
            pv_peak_kw: pv_peak,
            ess_capacity_kwh: cap,
            ess_power_kw: power,
            demand_kw: s.demand,
            pv_kw: s.pv,
            active: true,
        });
    }
    let spot_forecast = forecast_series(&p.spot);
    let scenario = Scenario {
        prosumers: list,
        tariffs: Tariffs { tou: p.tou, fit: defaults.fit, spot: p.spot, spot_forecast },
        days: hours / HOURS_PER_DAY,
        seed: defaults.seed,
    };
    scenario.validate()?;
    Ok(scenario)
}

fn write_file(path: &Path, text: &str) -> Result<(), IoError> {
    fs::write(path, text).map_err(|e| IoError::file(path, e))
}

/// Writes the CSV files and manifest into `dir`; returns the manifest path.
pub fn write_scenario(dir: &Path, scenario: &Scenario, start: NaiveDateTime) -> Result<PathBuf, IoError> {
    fs::create_dir_all(dir).map_err(|e| IoError::file(dir, e))?;
    let stamp = |t: usize| (start + TimeDelta::hours(t as i64)).format(TIMESTAMP_FORMAT).to_string();

    let mut prices = String::from("timestamp,spot_price,tou_price\n");
    for t in 0..scenario.hours() {
        let _ = writeln!(prices, "{},{},{}", stamp(t), scenario.tariffs.spot[t], scenario.tariffs.tou[t]);
    }
    let mut pros = String::from("timestamp,prosumer_id,demand_kw,pv_kw\n");
    for t in 0..scenario.hours() {
        let ts = stamp(t);
        for p in &scenario.prosumers {
            let _ = writeln!(pros, "{ts},{},{},{}", p.id, p.demand_kw[t], p.pv_kw[t]);
        }
    }
    let mut meta = String::from("prosumer_id,pv_peak_kw,ess_capacity_kwh,ess_power_kw\n");
    for p in &scenario.prosumers {
        let _ = writeln!(meta, "{},{},{},{}", p.id, p.pv_peak_kw, p.ess_capacity_kwh, p.ess_power_kw);
    }
    write_file(&dir.join("prices.csv"), &prices)?;
    write_file(&dir.join("prosumers.csv"), &pros)?;
    write_file(&dir.join("prosumer_meta.csv"), &meta)?;
    let manifest = format!(
        "# sesim scenario\nprosumers = prosumers.csv\nprices = prices.csv\nmeta = prosumer_meta.csv\nfit = {}\nseed = {}\nhorizon_days = {}\nstart = {}\n",
        scenario.tariffs.fit,
        scenario.seed,
        scenario.days,
        start.format(TIMESTAMP_FORMAT)
    );
    let path = dir.join(MANIFEST_NAME);
    write_file(&path, &manifest)?;
    Ok(path)
}

/// Loads a scenario through its manifest. File names resolve relative to the manifest.
pub fn load_scenario(manifest: &Path) -> Result<Scenario, IoError> {
    let text = fs::read_to_string(manifest).map_err(|e| IoError::file(manifest, e))?;
    let base = manifest.parent().unwrap_or(Path::new("."));
    let mut files: BTreeMap<&str, PathBuf> = BTreeMap::new();
    let mut defaults = LoadDefaults::default();
    let mut horizon = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content
            .split_once('=')
            .map(|(k, v)| (k.trim(), v.trim()))
            .ok_or_else(|| IoError::Parse { line, msg: format!("expected key = value, got {content:?}") })?;
        let bad = |what: &str| IoError::Parse { line, msg: format!("{k}: expected {what}, got {v:?}") };
        match k {
            "prosumers" | "prices" | "meta" => {
                files.insert(k, base.join(v));
            }
            "fit" => defaults.fit = v.parse().map_err(|_| bad("a number"))?,
            "seed" => defaults.seed = v.parse().map_err(|_| bad("an integer"))?,
            "ess_capacity_kwh" => defaults.ess_capacity_kwh = v.parse().map_err(|_| bad("a number"))?,
            "ess_power_kw" => defaults.ess_power_kw = v.parse().map_err(|_| bad("a number"))?,
            "horizon_days" => horizon = Some(v.parse::<usize>().map_err(|_| bad("an integer"))?),
            "start" | "name" | "case" => {}
            other => return Err(IoError::Parse { line, msg: format!("unknown key {other:?}") }),
        }
    }
    let need = |k: &str| {
        files.get(k).cloned().ok_or_else(|| IoError::Invalid(format!("{}: missing {k} entry", manifest.display())))
    };
    let scenario = load_csv(&need("prosumers")?, &need("prices")?, files.get("meta").map(|p| p.as_path()), &defaults)?;
    if let Some(h) = horizon {
        if h != scenario.days {
            return Err(IoError::Invalid(format!(
                "{}: horizon_days = {h} but the data spans {} days",
                manifest.display(),
                scenario.days
            )));
        }
    }
    Ok(scenario)
}

/// Resolves a relative scenario path against the data directory variable, if set.
pub fn resolve_data_path(path: &Path) -> PathBuf {
    if path.is_relative() {
        if let Some(dir) = std::env::var_os(crate::DATA_DIR_ENV) {
            return PathBuf::from(dir).join(path);
        }
    }
    path.to_path_buf()
}
