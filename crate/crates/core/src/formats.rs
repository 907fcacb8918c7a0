//! On-disk formats written by the harness, with their parsers.
//!
//! Raw samples are CSV with header `replicate,statistic,value`, preceded by
//! a `#` comment line naming the schema version and config hash. A
//! statistic is written as `rung:name`, e.g. `n=64:T` or `all:D[L=8]`.
//! Values use the shortest representation that round-trips.
//!
//! Summaries, manifests and fit reports are JSON. Geodesic dumps are one
//! `x y` pair per line after the same comment header.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimators::SampleSummary;
use crate::fit::{ChiXiReport, CorrelationFit, ExponentFit};
use crate::geometry::LatticePoint;

pub const SCHEMA_VERSION: u32 = 1;

pub const RAW_HEADER: [&str; 3] = ["replicate", "statistic", "value"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FormatError {
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("bad header: {0}")]
    Header(String),
    #[error("json: {0}")]
    Json(String),
    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),
}

/// `# schema_version=1 config_hash=<hex>` comment line.
pub fn header_line(config_hash: &str) -> String {
    format!("# schema_version={SCHEMA_VERSION} config_hash={config_hash}")
}

fn parse_header_line(line: &str) -> Result<String, FormatError> {
    let rest = line
        .strip_prefix('#')
        .ok_or_else(|| FormatError::Header("missing comment header".into()))?;
    let mut version = None;
    let mut hash = None;
    for tok in rest.split_whitespace() {
        match tok.split_once('=') {
            Some(("schema_version", v)) => version = v.parse::<u32>().ok(),
            Some(("config_hash", h)) => hash = Some(h.to_string()),
            _ => return Err(FormatError::Header(format!("unexpected token {tok:?}"))),
        }
    }
    match (version, hash) {
        (Some(SCHEMA_VERSION), Some(h))
            if !h.is_empty() && h.bytes().all(|b| b.is_ascii_hexdigit()) =>
        {
            Ok(h)
        }
        (Some(v), Some(_)) if v != SCHEMA_VERSION => Err(FormatError::SchemaVersion(v)),
        _ => Err(FormatError::Header(line.to_string())),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawRow {
    pub replicate: usize,
    /// `rung:name`.
    pub statistic: String,
    pub value: f64,
}

impl RawRow {
    pub fn rung(&self) -> &str {
        self.statistic.split_once(':').map_or("", |(r, _)| r)
    }

    pub fn name(&self) -> &str {
        self.statistic
            .split_once(':')
            .map_or(self.statistic.as_str(), |(_, n)| n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub config_hash: String,
    pub rows: Vec<RawRow>,
}

pub fn write_raw_csv(config_hash: &str, rows: &[RawRow]) -> String {
    let mut out = header_line(config_hash);
    out.push('\n');
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RAW_HEADER).expect("in-memory write");
    for r in rows {
        w.write_record([
            r.replicate.to_string(),
            r.statistic.clone(),
            r.value.to_string(),
        ])
        .expect("in-memory write");
    }
    out.push_str(
        std::str::from_utf8(&w.into_inner().expect("in-memory flush")).expect("utf8 input"),
    );
    out
}

pub fn parse_raw_csv(text: &str) -> Result<RawTable, FormatError> {
    let (first, body) = text
        .split_once('\n')
        .ok_or_else(|| FormatError::Header("empty file".into()))?;
    let config_hash = parse_header_line(first.trim_end_matches('\r'))?;
    let mut rd = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(body.as_bytes());
    let headers = rd
        .headers()
        .map_err(|e| FormatError::Header(e.to_string()))?;
    if headers.iter().ne(RAW_HEADER) {
        return Err(FormatError::Header(format!("{headers:?}")));
    }
    let mut rows = Vec::new();
    for (k, rec) in rd.records().enumerate() {
        let line = k + 3;
        let rec = rec.map_err(|e| FormatError::Syntax {
            line,
            reason: e.to_string(),
        })?;
        if rec.len() != 3 {
            return Err(FormatError::Syntax {
                line,
                reason: format!("{} fields", rec.len()),
            });
        }
        let replicate = rec[0].parse().map_err(|_| FormatError::Syntax {
            line,
            reason: format!("replicate {:?}", &rec[0]),
        })?;
        let value: f64 = rec[2].parse().map_err(|_| FormatError::Syntax {
            line,
            reason: format!("value {:?}", &rec[2]),
        })?;
        if !value.is_finite() {
            return Err(FormatError::Syntax {
                line,
                reason: "non-finite value".into(),
            });
        }
        if rec[1].is_empty() {
            return Err(FormatError::Syntax {
                line,
                reason: "empty statistic".into(),
            });
        }
        rows.push(RawRow {
            replicate,
            statistic: rec[1].to_string(),
            value,
        });
    }
    Ok(RawTable { config_hash, rows })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    pub statistic: String,
    pub parameters: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<SampleSummary>,
    #[serde(default)]
    pub derived: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum FitOutcome {
    Fitted(ExponentFit),
    Correlation(CorrelationFit),
    Report(ChiXiReport),
    Skipped { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub config_hash: String,
    pub experiment: String,
    pub records: Vec<SummaryRecord>,
    #[serde(default)]
    pub fits: BTreeMap<String, FitOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub schema_version: u32,
    pub config_hash: String,
    pub experiment: String,
    pub fits: BTreeMap<String, FitOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitStatus {
    Pending,
    Succeeded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnitEntry {
    pub rung: String,
    pub replicate: usize,
    pub status: UnitStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub experiment: String,
    pub config_hash: String,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: Option<String>,
    pub n_replicates: usize,
    pub units: Vec<UnitEntry>,
    pub complete: bool,
}

impl RunManifest {
    pub fn count(&self, status: UnitStatus) -> usize {
        self.units.iter().filter(|u| u.status == status).count()
    }
}

fn check_version(v: u32) -> Result<(), FormatError> {
    if v == SCHEMA_VERSION {
        Ok(())
    } else {
        Err(FormatError::SchemaVersion(v))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

pub fn parse_summary(text: &str) -> Result<Summary, FormatError> {
    let s: Summary = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    check_version(s.schema_version)?;
    Ok(s)
}

pub fn parse_fit_report(text: &str) -> Result<FitReport, FormatError> {
    let s: FitReport = serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    check_version(s.schema_version)?;
    Ok(s)
}

pub fn parse_manifest(text: &str) -> Result<RunManifest, FormatError> {
    let m: RunManifest =
        serde_json::from_str(text).map_err(|e| FormatError::Json(e.to_string()))?;
    check_version(m.schema_version)?;
    Ok(m)
}

pub fn write_geodesic_dump(config_hash: &str, path: &[LatticePoint]) -> String {
    let mut out = header_line(config_hash);
    out.push('\n');
    for p in path {
        out.push_str(&format!("{} {}\n", p.x, p.y));
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicDump {
    pub config_hash: String,
    pub path: Vec<LatticePoint>,
}

/// Parses a dump and checks that consecutive points are lattice neighbours.
pub fn parse_geodesic_dump(text: &str) -> Result<GeodesicDump, FormatError> {
    let mut lines = text.lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| FormatError::Header("empty file".into()))?;
    let config_hash = parse_header_line(first)?;
    let mut path: Vec<LatticePoint> = Vec::new();
    for (k, line) in lines {
        let line_no = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_whitespace().map(str::parse::<i64>);
        let (Some(Ok(x)), Some(Ok(y)), None) = (it.next(), it.next(), it.next()) else {
            return Err(FormatError::Syntax {
                line: line_no,
                reason: format!("expected `x y`, got {line:?}"),
            });
        };
        let p = LatticePoint::new(x, y);
        if let Some(q) = path.last() {
            if q.x.abs_diff(p.x) + q.y.abs_diff(p.y) != 1 {
                return Err(FormatError::Syntax {
                    line: line_no,
                    reason: "not a nearest-neighbour step".into(),
                });
            }
        }
        path.push(p);
    }
    Ok(GeodesicDump { config_hash, path })
}
