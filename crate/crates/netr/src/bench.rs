//! Query benchmarking: runs a batch of queries through one or more engine
//! modes, optionally sweeping a single parameter over its standard range,
//! and reports per-query plus mean rows as CSV.

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDateTime;

use crate::error::{Error, Result};
use crate::geo::{check_coordinates, GeoPoint};
use crate::index::NetrIndex;
use crate::model::{UserId, TIMESTAMP_FORMAT};
use crate::engine::Query;
use crate::scoring::ScoreWeights;

pub const BENCH_CSV_HEADER: &str =
    "query_id,mode,sweep_param,sweep_value,k,returned,node_accesses,elapsed_us";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchMode {
    Netr,
    BaselineIr,
}

impl BenchMode {
    pub fn label(&self) -> &'static str {
        match self {
            BenchMode::Netr => "netr",
            BenchMode::BaselineIr => "baseline-ir",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "netr" => Ok(BenchMode::Netr),
            "baseline-ir" => Ok(BenchMode::BaselineIr),
            other => Err(Error::InvalidParameter(format!(
                "unknown mode `{other}`; expected netr or baseline-ir"
            ))),
        }
    }

    /// Comma-separated list, e.g. `netr,baseline-ir`.
    pub fn parse_list(s: &str) -> Result<Vec<Self>> {
        let modes: Vec<Self> = s
            .split(',')
            .map(|m| Self::parse(m.trim()))
            .collect::<Result<_>>()?;
        if modes.is_empty() {
            return Err(Error::InvalidParameter("no modes given".into()));
        }
        Ok(modes)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sweep {
    K,
    QueryWords,
    Radius,
    Gamma,
}

impl Sweep {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "k" => Ok(Sweep::K),
            "qw" => Ok(Sweep::QueryWords),
            "radius" => Ok(Sweep::Radius),
            "gamma" => Ok(Sweep::Gamma),
            other => Err(Error::InvalidParameter(format!(
                "unknown sweep `{other}`; expected k, qw, radius, or gamma"
            ))),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            Sweep::K => "k",
            Sweep::QueryWords => "qw",
            Sweep::Radius => "radius",
            Sweep::Gamma => "gamma",
        }
    }

    pub fn values(&self) -> &'static [f64] {
        match self {
            Sweep::K | Sweep::QueryWords => &[1.0, 3.0, 5.0, 7.0, 9.0],
            Sweep::Radius => &[4.0, 8.0, 12.0, 16.0, 20.0],
            Sweep::Gamma => &[0.1, 0.2, 0.3, 0.4, 0.5],
        }
    }

    /// Overrides one knob of `query`. A word-count sweep keeps the first `v`
    /// keywords; queries with fewer keep what they have.
    fn apply(&self, query: &mut Query, v: f64) {
        match self {
            Sweep::K => query.k = v as usize,
            Sweep::QueryWords => query.keywords.truncate(v as usize),
            Sweep::Radius => query.max_distance_km = v,
            Sweep::Gamma => query.weights.social = v,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub query_id: String,
    pub mode: &'static str,
    pub sweep_param: &'static str,
    pub sweep_value: f64,
    pub k: f64,
    pub returned: f64,
    pub node_accesses: f64,
    pub elapsed_us: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(BENCH_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.query_id,
                r.mode,
                r.sweep_param,
                number(r.sweep_value),
                number(r.k),
                number(r.returned),
                number(r.node_accesses),
                number(r.elapsed_us),
            ));
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Integral values print without a fraction so counts stay readable.
fn number(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v:.4}")
    }
}

/// Runs every query in every mode, repeated per sweep value when a sweep is
/// given, then appends one `mean` row per (mode, sweep value) group
/// averaging k, result size, node accesses, and latency.
pub fn run_bench(
    index: &NetrIndex,
    queries: &[Query],
    modes: &[BenchMode],
    sweep: Option<Sweep>,
) -> Result<BenchReport> {
    if queries.is_empty() {
        return Err(Error::InvalidParameter("no queries to run".into()));
    }
    let (sweep_param, sweep_values): (&'static str, Vec<f64>) = match sweep {
        Some(s) => (s.label(), s.values().to_vec()),
        None => ("none", vec![0.0]),
    };
    let mut rows = Vec::new();
    for &value in &sweep_values {
        for &mode in modes {
            for (qi, base) in queries.iter().enumerate() {
                let mut query = base.clone();
                if let Some(s) = sweep {
                    s.apply(&mut query, value);
                }
                let result = match mode {
                    BenchMode::Netr => index.top_k(&query)?,
                    BenchMode::BaselineIr => index.top_k_baseline_ir(&query)?,
                };
                rows.push(BenchRow {
                    query_id: format!("q{qi}"),
                    mode: mode.label(),
                    sweep_param,
                    sweep_value: value,
                    k: query.k as f64,
                    returned: result.entries.len() as f64,
                    node_accesses: result.stats.node_accesses as f64,
                    elapsed_us: result.stats.elapsed.as_secs_f64() * 1e6,
                });
            }
        }
    }

    let mut groups: BTreeMap<(usize, usize), Vec<&BenchRow>> = BTreeMap::new();
    for row in &rows {
        let vi = sweep_values
            .iter()
            .position(|v| *v == row.sweep_value)
            .expect("row value came from sweep_values");
        let mi = modes
            .iter()
            .position(|m| m.label() == row.mode)
            .expect("row mode came from modes");
        groups.entry((vi, mi)).or_default().push(row);
    }
    let mut means = Vec::new();
    for ((vi, mi), group) in groups {
        let n = group.len() as f64;
        let mean = |f: fn(&BenchRow) -> f64| group.iter().map(|r| f(r)).sum::<f64>() / n;
        means.push(BenchRow {
            query_id: "mean".to_string(),
            mode: modes[mi].label(),
            sweep_param,
            sweep_value: sweep_values[vi],
            k: mean(|r| r.k),
            returned: mean(|r| r.returned),
            node_accesses: mean(|r| r.node_accesses),
            elapsed_us: mean(|r| r.elapsed_us),
        });
    }
    rows.extend(means);
    Ok(BenchReport { rows })
}

/// Reads a query batch CSV (`user_id,lat,lon,keywords,timestamp,k`; keywords
/// `|`-separated, possibly empty). Weights and radius are not part of the
/// file and come from the caller.
pub fn read_query_batch(
    path: &Path,
    weights: ScoreWeights,
    max_distance_km: f64,
) -> Result<Vec<Query>> {
    let file_name = path.display().to_string();
    let file = std::fs::File::open(path)
        .map_err(|e| Error::corrupt(&file_name, format!("cannot open: {e}")))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let expected = ["user_id", "lat", "lon", "keywords", "timestamp", "k"];
    let headers: Vec<&str> = reader
        .headers()
        .map_err(|e| Error::parse(&file_name, 1, e.to_string()))?
        .iter()
        .collect();
    if headers != expected {
        return Err(Error::parse(
            &file_name,
            1,
            format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                headers.join(",")
            ),
        ));
    }
    let mut queries = Vec::new();
    for row in reader.records() {
        let record = row.map_err(|e| Error::parse(&file_name, 0, e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<&str> {
            record
                .get(i)
                .ok_or_else(|| Error::parse(&file_name, line, format!("missing field `{name}`")))
        };
        let user = field(0, "user_id")?;
        if user.is_empty() {
            return Err(Error::parse(&file_name, line, "empty field `user_id`"));
        }
        let lat: f64 = field(1, "lat")?
            .parse()
            .map_err(|_| Error::parse(&file_name, line, "field `lat` is not a number"))?;
        let lon: f64 = field(2, "lon")?
            .parse()
            .map_err(|_| Error::parse(&file_name, line, "field `lon` is not a number"))?;
        check_coordinates(lat, lon).map_err(|msg| Error::parse(&file_name, line, msg))?;
        let keywords: Vec<String> = field(3, "keywords")?
            .split('|')
            .filter(|w| !w.is_empty())
            .map(str::to_string)
            .collect();
        let stamp = field(4, "timestamp")?;
        let time = NaiveDateTime::parse_from_str(stamp, TIMESTAMP_FORMAT).map_err(|_| {
            Error::parse(
                &file_name,
                line,
                format!("field `timestamp`: `{stamp}` is not an ISO-8601 local time"),
            )
        })?;
        let k: usize = field(5, "k")?
            .parse()
            .map_err(|_| Error::parse(&file_name, line, "field `k` is not a positive integer"))?;
        if k == 0 {
            return Err(Error::parse(&file_name, line, "field `k` must be at least 1"));
        }
        queries.push(Query {
            user: UserId(user.to_string()),
            location: GeoPoint { lat, lon },
            keywords,
            time,
            k,
            max_distance_km,
            weights,
        });
    }
    Ok(queries)
}
