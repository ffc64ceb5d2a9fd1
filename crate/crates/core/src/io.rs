//! Instance, tables and report file formats.
//!
//! Every output carries the instance content hash: JSON documents in an
//! `instance_hash` field, CSV files in a leading `# instance_hash=...`
//! comment line. Seller numbers in files are 1-based, matching the
//! `s_1..s_N` column names.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Instance, ProblemInstance, SalesVector, StateKey, ValidationReport};
use crate::simulator::{SimulationReport, TraceRow};
use crate::solver::{SolverError, ValueTables};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },

    #[error("invalid instance:\n{0}")]
    Invalid(ValidationReport),

    #[error("{0}")]
    Tables(#[from] SolverError),

    #[error("tables file hash {found} does not match its embedded instance ({expected})")]
    HashMismatch { expected: String, found: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn read_text(path: &Path) -> Result<String, IoError> {
    fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn read_instance(path: &Path) -> Result<ProblemInstance, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: path.display().to_string(),
        source,
    })
}

/// Reads and validates an instance file.
pub fn load_instance(path: &Path) -> Result<Instance, IoError> {
    Instance::new(read_instance(path)?).map_err(IoError::Invalid)
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|source| IoError::File {
            path: parent.display().to_string(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| IoError::File {
        path: path.display().to_string(),
        source,
    })
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    write_file(path, to_json(value).as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableRow {
    pub seller: usize,
    pub t: u32,
    pub d: u32,
    pub s: Vec<u32>,
    pub value: f64,
    /// Accept flag per price atom; absent in the sentinel period.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accept: Option<Vec<bool>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TablesDocument {
    pub instance_hash: String,
    pub instance: ProblemInstance,
    pub rows: Vec<TableRow>,
}

pub fn tables_document(tables: &ValueTables) -> TablesDocument {
    TablesDocument {
        instance_hash: tables.instance().content_hash().to_string(),
        instance: tables.instance().raw().clone(),
        rows: tables
            .entries()
            .map(|(key, value, accept)| TableRow {
                seller: key.seller + 1,
                t: key.period,
                d: key.remaining,
                s: key.sales.as_slice().to_vec(),
                value,
                accept,
            })
            .collect(),
    }
}

pub fn tables_from_document(
    doc: TablesDocument,
    max_states: usize,
) -> Result<ValueTables, IoError> {
    let instance = Instance::new(doc.instance).map_err(IoError::Invalid)?;
    if instance.content_hash() != doc.instance_hash {
        return Err(IoError::HashMismatch {
            expected: instance.content_hash().to_string(),
            found: doc.instance_hash,
        });
    }
    let entries = doc.rows.into_iter().map(|r| {
        (
            StateKey {
                seller: r.seller.wrapping_sub(1),
                period: r.t,
                remaining: r.d,
                sales: SalesVector::from(r.s),
            },
            r.value,
            r.accept,
        )
    });
    Ok(ValueTables::assemble(&instance, max_states, entries)?)
}

/// Loads tables from a JSON file, or from `tables.json` inside a directory.
pub fn read_tables(path: &Path, max_states: usize) -> Result<ValueTables, IoError> {
    let file = if path.is_dir() {
        path.join("tables.json")
    } else {
        path.to_path_buf()
    };
    let text = read_text(&file)?;
    let doc: TablesDocument = serde_json::from_str(&text).map_err(|source| IoError::Json {
        path: file.display().to_string(),
        source,
    })?;
    tables_from_document(doc, max_states)
}

fn hash_line<W: Write>(w: &mut W, hash: &str) -> std::io::Result<()> {
    writeln!(w, "# instance_hash={hash}")
}

/// Columns: seller, t, d, s_1..s_N, value, accept_1..accept_I.
pub fn tables_csv(tables: &ValueTables) -> Result<Vec<u8>, IoError> {
    let n = tables.instance().num_sellers();
    let atoms = tables.instance().prices().len();
    let mut buf = Vec::new();
    hash_line(&mut buf, tables.instance().content_hash()).expect("write to Vec");
    let mut w = csv::Writer::from_writer(buf);
    let mut header = vec!["seller".to_string(), "t".to_string(), "d".to_string()];
    header.extend((1..=n).map(|i| format!("s_{i}")));
    header.push("value".to_string());
    header.extend((1..=atoms).map(|i| format!("accept_{i}")));
    w.write_record(&header)?;
    for (key, value, accept) in tables.entries() {
        let mut rec = vec![
            (key.seller + 1).to_string(),
            key.period.to_string(),
            key.remaining.to_string(),
        ];
        rec.extend(key.sales.as_slice().iter().map(|x| x.to_string()));
        rec.push(value.to_string());
        match accept {
            Some(flags) => rec.extend(flags.iter().map(|&f| u8::from(f).to_string())),
            None => rec.extend(std::iter::repeat_n(String::new(), atoms)),
        }
        w.write_record(&rec)?;
    }
    w.into_inner()
        .map_err(|e| IoError::Csv(e.into_error().into()))
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// One row per seller of each report.
pub fn simulation_csv(reports: &[SimulationReport]) -> Result<Vec<u8>, IoError> {
    let mut buf = Vec::new();
    if let Some(first) = reports.first() {
        hash_line(&mut buf, &first.instance_hash).expect("write to Vec");
    }
    let atoms = reports
        .first()
        .and_then(|r| r.sellers.first())
        .map_or(0, |s| s.acceptance_rate.len());
    let mut w = csv::Writer::from_writer(buf);
    let mut header: Vec<String> = [
        "focal",
        "seller",
        "name",
        "mean_revenue",
        "std_error",
        "sellout_frequency",
        "target",
        "z_score",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    header.extend((1..=atoms).map(|i| format!("acceptance_rate_{i}")));
    w.write_record(&header)?;
    for report in reports {
        for (n, s) in report.sellers.iter().enumerate() {
            let mut rec = vec![
                report.focal.map(|f| f.to_string()).unwrap_or_default(),
                (n + 1).to_string(),
                s.name.clone(),
                s.mean_revenue.to_string(),
                s.std_error.to_string(),
                s.sellout_frequency.to_string(),
                opt(s.target),
                opt(s.z_score),
            ];
            rec.extend(s.acceptance_rate.iter().map(|&a| opt(a)));
            w.write_record(&rec)?;
        }
    }
    w.into_inner()
        .map_err(|e| IoError::Csv(e.into_error().into()))
}

pub fn trace_csv(hash: &str, rows: &[TraceRow]) -> Result<Vec<u8>, IoError> {
    let mut buf = Vec::new();
    hash_line(&mut buf, hash).expect("write to Vec");
    let mut w = csv::Writer::from_writer(buf);
    w.write_record([
        "replication",
        "t",
        "price",
        "accepters",
        "selected",
        "revenue",
    ])?;
    for r in rows {
        let accepters = r
            .accepters
            .iter()
            .map(|a| a.to_string())
            .collect::<Vec<_>>()
            .join(";");
        w.write_record([
            r.replication.to_string(),
            r.t.to_string(),
            r.price.to_string(),
            accepters,
            r.selected.map(|s| s.to_string()).unwrap_or_default(),
            r.revenue.to_string(),
        ])?;
    }
    w.into_inner()
        .map_err(|e| IoError::Csv(e.into_error().into()))
}
