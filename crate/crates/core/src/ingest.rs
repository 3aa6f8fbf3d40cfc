//! Daily station CSVs to a trajectory panel: parsing, transforms, coverage
//! filters, last-observation-carried-forward filling, lag embedding and the
//! k-nearest-neighbour station graph.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::{Datelike, NaiveDate};
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{knn_graph, Graph};
use crate::lds::TrajectoryPanel;

/// Floor applied before taking logarithms.
pub const LOG_GUARD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Station {
    pub id: String,
    pub lat: f64,
    pub lon: f64,
}

/// One station's daily record; `dates` strictly increasing, `None` marks a
/// missing reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub dates: Vec<NaiveDate>,
    pub values: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transform {
    None,
    /// `log x`.
    Log,
    /// `log(log(x + 1))`.
    LogLog,
}

impl Transform {
    pub fn parse(s: &str) -> Option<Transform> {
        Some(match s {
            "none" => Transform::None,
            "log" => Transform::Log,
            "loglog" | "log_log" => Transform::LogLog,
            _ => return None,
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transform::None => "none",
            Transform::Log => "log",
            Transform::LogLog => "loglog",
        }
    }

    /// Transformed value and whether the guard clipped it.
    pub fn apply(&self, x: f64) -> (f64, bool) {
        match self {
            Transform::None => (x, false),
            Transform::Log => {
                if x < LOG_GUARD {
                    (LOG_GUARD.ln(), true)
                } else {
                    (x.ln(), false)
                }
            }
            Transform::LogLog => {
                if x < LOG_GUARD {
                    ((LOG_GUARD + 1.0).ln().ln(), true)
                } else {
                    ((x + 1.0).ln().ln(), false)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StationTable {
    pub variable: String,
    pub stations: Vec<Station>,
    pub series: Vec<Series>,
    /// Transform already applied, if any.
    pub transform: Option<Transform>,
}

impl StationTable {
    pub fn num_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn coords(&self) -> Vec<(f64, f64)> {
        self.stations.iter().map(|s| (s.lat, s.lon)).collect()
    }
}

/// Reads `station_id,date,value,lat,lon` rows (an optional boolean `drop`
/// column removes flagged rows). Empty values are missing readings.
pub fn load_station_csv(path: &Path, variable: &str) -> Result<StationTable> {
    let file = std::fs::File::open(path)?;
    read_station_csv(file, path, variable)
}

pub fn read_station_csv<R: std::io::Read>(r: R, path: &Path, variable: &str) -> Result<StationTable> {
    let parse_err = |line: u64, msg: String| Error::Parse { path: path.to_path_buf(), line, msg };
    let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
    let headers = rd.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (Some(c_id), Some(c_date), Some(c_val), Some(c_lat), Some(c_lon)) =
        (col("station_id"), col("date"), col("value"), col("lat"), col("lon"))
    else {
        return Err(parse_err(1, "header must contain station_id, date, value, lat, lon".into()));
    };
    let c_drop = col("drop");

    let mut order: Vec<String> = Vec::new();
    let mut meta: BTreeMap<String, (f64, f64)> = BTreeMap::new();
    let mut obs: BTreeMap<String, BTreeMap<NaiveDate, Option<f64>>> = BTreeMap::new();
    for rec in rd.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize| rec.get(c).unwrap_or("");
        let id = field(c_id).to_string();
        if id.is_empty() {
            return Err(parse_err(line, "empty station_id".into()));
        }
        let date = NaiveDate::parse_from_str(field(c_date), "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date {:?}: {e}", field(c_date))))?;
        let num = |c: usize, what: &str| -> Result<f64> {
            field(c).parse::<f64>().map_err(|_| parse_err(line, format!("bad {what} {:?}", field(c))))
        };
        let lat = num(c_lat, "lat")?;
        let lon = num(c_lon, "lon")?;
        let value = if field(c_val).is_empty() { None } else { Some(num(c_val, "value")?) };
        if let Some(v) = value {
            if !v.is_finite() {
                return Err(parse_err(line, format!("non-finite value {v}")));
            }
        }
        let dropped = match c_drop.map(field) {
            None | Some("") | Some("0") | Some("false") | Some("False") | Some("FALSE") => false,
            Some("1") | Some("true") | Some("True") | Some("TRUE") => true,
            Some(other) => return Err(parse_err(line, format!("bad drop flag {other:?}"))),
        };
        match meta.get(&id) {
            Some(&(la, lo)) if (la - lat).abs() > 1e-9 || (lo - lon).abs() > 1e-9 => {
                return Err(parse_err(line, format!("station {id} changes coordinates")));
            }
            Some(_) => {}
            None => {
                meta.insert(id.clone(), (lat, lon));
                order.push(id.clone());
            }
        }
        let entry = obs.entry(id.clone()).or_default();
        if entry.contains_key(&date) {
            return Err(Error::DuplicateObservation { station: id, date: date.to_string() });
        }
        entry.insert(date, if dropped { None } else { value });
    }
    let mut stations = Vec::new();
    let mut series = Vec::new();
    for id in order {
        let (lat, lon) = meta[&id];
        let rows = obs.remove(&id).unwrap_or_default();
        series.push(Series { dates: rows.keys().copied().collect(), values: rows.values().copied().collect() });
        stations.push(Station { id, lat, lon });
    }
    Ok(StationTable { variable: variable.to_string(), stations, series, transform: None })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreprocessOptions {
    pub transform: Transform,
    /// Restrict the output to this calendar year.
    pub year: Option<i32>,
    pub coverage_min: f64,
    pub year_missing_max: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        PreprocessOptions { transform: Transform::None, year: None, coverage_min: 0.75, year_missing_max: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedStation {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessReport {
    pub dropped: Vec<DroppedStation>,
    /// Stations whose leading gap was filled with their first reading.
    pub leading_filled: Vec<String>,
    /// Number of readings clipped by the log guard.
    pub guard_clipped: usize,
    pub filled_values: usize,
}

/// Coverage filter over the full record, missing-fraction filter within
/// `year`, transform, then gap filling on the shared daily calendar. Every
/// retained station ends up with one finite value per calendar day.
pub fn preprocess_series(t: &StationTable, opts: &PreprocessOptions) -> Result<(StationTable, PreprocessReport)> {
    if let Some(done) = t.transform {
        if done != opts.transform {
            return Err(Error::Data(format!(
                "table already carries transform {}, asked for {}",
                done.name(),
                opts.transform.name()
            )));
        }
    }
    let Some((first, last)) = calendar_bounds(t) else {
        return Err(Error::Data("no observations".into()));
    };
    let calendar: Vec<NaiveDate> = first.iter_days().take_while(|d| *d <= last).collect();
    let year_days: Vec<NaiveDate> = match opts.year {
        Some(y) => calendar.iter().copied().filter(|d| d.year() == y).collect(),
        None => Vec::new(),
    };
    if opts.year.is_some() && year_days.is_empty() {
        return Err(Error::Data(format!("record does not cover year {}", opts.year.unwrap())));
    }

    // Per station: filled values, leading gap, clipped and filled counts, or
    // the reason for dropping it.
    type Kept = std::result::Result<(Vec<f64>, bool, usize, usize), String>;
    let transform_now = t.transform.is_none();
    let outs: Vec<Kept> = t
        .series
        .par_iter()
        .map(|s| {
            let by_date: BTreeMap<NaiveDate, f64> =
                s.dates.iter().zip(&s.values).filter_map(|(d, v)| v.map(|x| (*d, x))).collect();
            let coverage = by_date.len() as f64 / calendar.len() as f64;
            if coverage < opts.coverage_min {
                return Err(format!("coverage {coverage:.3} below {}", opts.coverage_min));
            }
            if opts.year.is_some() {
                let missing = year_days.iter().filter(|d| !by_date.contains_key(d)).count();
                let frac = missing as f64 / year_days.len() as f64;
                if frac >= opts.year_missing_max {
                    return Err(format!("missing fraction {frac:.3} in year"));
                }
            }
            let days: &[NaiveDate] = if opts.year.is_some() { &year_days } else { &calendar };
            let mut clipped = 0;
            let mut filled = 0;
            let mut raw: Vec<Option<f64>> = days
                .iter()
                .map(|d| {
                    by_date.get(d).map(|&x| {
                        if transform_now {
                            let (y, c) = opts.transform.apply(x);
                            clipped += c as usize;
                            y
                        } else {
                            x
                        }
                    })
                })
                .collect();
            let Some(first_val) = raw.iter().flatten().next().copied() else {
                return Err("no readings in range".into());
            };
            let leading = raw[0].is_none();
            let mut carry = first_val;
            for v in raw.iter_mut() {
                match v {
                    Some(x) => carry = *x,
                    None => {
                        *v = Some(carry);
                        filled += 1;
                    }
                }
            }
            let vals: Vec<f64> = raw.into_iter().map(|v| v.unwrap()).collect();
            if vals.iter().any(|v| !v.is_finite()) {
                return Err("non-finite value after transform".into());
            }
            Ok((vals, leading, clipped, filled))
        })
        .collect();

    let days: Vec<NaiveDate> = if opts.year.is_some() { year_days } else { calendar };
    let mut report = PreprocessReport::default();
    let mut stations = Vec::new();
    let mut series = Vec::new();
    for (st, out) in t.stations.iter().zip(outs) {
        match out {
            Ok((vals, leading, clipped, filled)) => {
                if leading {
                    report.leading_filled.push(st.id.clone());
                }
                report.guard_clipped += clipped;
                report.filled_values += filled;
                stations.push(st.clone());
                series.push(Series { dates: days.clone(), values: vals.into_iter().map(Some).collect() });
            }
            Err(reason) => report.dropped.push(DroppedStation { id: st.id.clone(), reason }),
        }
    }
    let table = StationTable { variable: t.variable.clone(), stations, series, transform: Some(opts.transform) };
    Ok((table, report))
}

fn calendar_bounds(t: &StationTable) -> Option<(NaiveDate, NaiveDate)> {
    let first = t.series.iter().filter_map(|s| s.dates.first()).min()?;
    let last = t.series.iter().filter_map(|s| s.dates.last()).max()?;
    Some((*first, *last))
}

/// Lag embedding `x_t = (y_t, y_{t-1}, …, y_{t-d+1})` over calendar
/// positions `start..end` of a preprocessed table. The window of `n` days
/// gives `n − d + 1` states.
pub fn to_lds_panel(t: &StationTable, start: usize, end: usize, d: usize) -> Result<TrajectoryPanel> {
    if d == 0 {
        return Err(Error::InvalidArgument("state dimension must be at least 1".into()));
    }
    if t.series.is_empty() {
        return Err(Error::Data("no stations".into()));
    }
    let len = t.series[0].values.len();
    if end > len || start >= end {
        return Err(Error::InvalidArgument(format!("window {start}..{end} outside record of {len} days")));
    }
    if end - start < d.max(2) {
        return Err(Error::InvalidArgument(format!("window of {} days is too short", end - start)));
    }
    let n_states = end - start - d + 1;
    let mut states = Vec::with_capacity(t.series.len());
    for s in &t.series {
        if s.values.len() != len {
            return Err(Error::Data("series lengths differ; preprocess first".into()));
        }
        let y: Vec<f64> = s.values[start..end]
            .iter()
            .map(|v| v.ok_or_else(|| Error::Data("missing value; preprocess first".into())))
            .collect::<Result<_>>()?;
        states.push(DMatrix::from_fn(d, n_states, |i, k| y[k + d - 1 - i]));
    }
    TrajectoryPanel::new(d, states)
}

/// kNN graph over station coordinates and whether it is connected. With
/// `k` or fewer other stations every station links to all of them.
pub fn station_graph(t: &StationTable, k: usize) -> Result<(Graph, bool)> {
    let k = k.min(t.num_stations().saturating_sub(1));
    if k == 0 {
        return Err(Error::Data("a station graph needs at least two stations and k >= 1".into()));
    }
    let g = knn_graph(&t.coords(), k)?;
    let connected = g.is_connected();
    Ok((g, connected))
}
