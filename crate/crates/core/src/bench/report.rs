use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum System {
    Ledger,
    Baseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operation {
    Read,
    Write,
}

impl System {
    pub fn as_str(self) -> &'static str {
        match self {
            System::Ledger => "ledger",
            System::Baseline => "baseline",
        }
    }
}

impl Operation {
    pub fn as_str(self) -> &'static str {
        match self {
            Operation::Read => "read",
            Operation::Write => "write",
        }
    }
}

impl fmt::Display for System {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Operation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for System {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "ledger" => Ok(System::Ledger),
            "baseline" => Ok(System::Baseline),
            other => Err(format!("unknown system {other:?} (expected ledger or baseline)")),
        }
    }
}

impl FromStr for Operation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "read" => Ok(Operation::Read),
            "write" => Ok(Operation::Write),
            other => Err(format!("unknown operation {other:?} (expected read or write)")),
        }
    }
}

/// One measured point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub system: System,
    pub operation: Operation,
    pub entries: u64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub trials: usize,
    pub seed: u64,
    pub config_hash: String,
}

/// A published latency, shown next to measurements for comparison only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reference {
    pub system: &'static str,
    pub operation: Operation,
    pub entries: u64,
    pub ms: f64,
}

const SIZES: [u64; 5] = [10, 1_000, 10_000, 100_000, 1_000_000];

const fn row(system: &'static str, operation: Operation, ms: [f64; 5]) -> [Reference; 5] {
    let mut out = [Reference {
        system,
        operation,
        entries: 0,
        ms: 0.0,
    }; 5];
    let mut i = 0;
    while i < 5 {
        out[i].entries = SIZES[i];
        out[i].ms = ms[i];
        i += 1;
    }
    out
}

const LEDGER_READ: [Reference; 5] = row("ledger", Operation::Read, [180.0; 5]);
const LEDGER_WRITE: [Reference; 5] = row("ledger", Operation::Write, [230.0; 5]);
const BASELINE_READ: [Reference; 5] = row("baseline", Operation::Read, [2.0, 3.0, 10.0, 44.0, 220.0]);
const BASELINE_WRITE: [Reference; 5] = row("baseline", Operation::Write, [4.0, 5.0, 6.0, 9.0, 11.0]);
const BLOCKSTACK_READ: [Reference; 5] = row("blockstack", Operation::Read, [360.0; 5]);
const BLOCKSTACK_WRITE: [Reference; 5] = row("blockstack", Operation::Write, [530.0; 5]);

/// Reported read/write latencies (ms) per entry count for the ledger, the
/// column-encrypted database and a Gaia-backed store.
pub fn reported() -> Vec<Reference> {
    [LEDGER_READ, LEDGER_WRITE, BASELINE_READ, BASELINE_WRITE, BLOCKSTACK_READ, BLOCKSTACK_WRITE]
        .concat()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Csv,
    Table,
}

impl FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(Format::Csv),
            "table" => Ok(Format::Table),
            other => Err(format!("unknown format {other:?} (expected csv or table)")),
        }
    }
}

pub const CSV_HEADER: &str = "system,operation,entries,median_ms,p95_ms,trials,seed,config_hash";

pub fn emit_report(rows: &[BenchRow], format: Format) -> String {
    match format {
        Format::Csv => emit_csv(rows),
        Format::Table => emit_table(rows),
    }
}

fn emit_csv(rows: &[BenchRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    if rows.is_empty() {
        w.write_record(CSV_HEADER.split(',')).expect("write to memory");
    }
    for r in rows {
        w.serialize(r).expect("write to memory");
    }
    String::from_utf8(w.into_inner().expect("flush to memory")).expect("csv is utf-8")
}

pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>, BenchError> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| BenchError::Csv(e.to_string()))?
        .iter()
        .collect::<Vec<_>>()
        .join(",");
    if header != CSV_HEADER {
        return Err(BenchError::Csv(format!("unexpected header {header:?}")));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(|e| BenchError::Csv(e.to_string())))
        .collect()
}

fn emit_table(rows: &[BenchRow]) -> String {
    let mut lines: Vec<[String; 9]> = vec![[
        "source", "system", "operation", "entries", "median_ms", "p95_ms", "trials", "seed", "config",
    ]
    .map(String::from)];
    for r in rows {
        lines.push([
            "measured".into(),
            r.system.to_string(),
            r.operation.to_string(),
            r.entries.to_string(),
            format!("{:.4}", r.median_ms),
            format!("{:.4}", r.p95_ms),
            r.trials.to_string(),
            r.seed.to_string(),
            r.config_hash.clone(),
        ]);
    }
    for r in reported() {
        lines.push([
            "reported".into(),
            r.system.into(),
            r.operation.to_string(),
            r.entries.to_string(),
            format!("{}", r.ms),
            "-".into(),
            "-".into(),
            "-".into(),
            "-".into(),
        ]);
    }
    let mut widths = [0usize; 9];
    for l in &lines {
        for (w, cell) in widths.iter_mut().zip(l) {
            *w = (*w).max(cell.len());
        }
    }
    let mut out = String::new();
    out.push_str("# latency per call in ms: median and p95 over the stated trials, warm-up calls excluded\n");
    out.push_str("# ledger read: keyed query by record id; ledger write: store through endorse, order, commit\n");
    out.push_str("# baseline read: unindexed domain scan with decryption of hits; baseline write: single-row insert\n");
    out.push_str("# reported rows are published figures on other hardware, for shape comparison only\n");
    for l in &lines {
        let cells: Vec<String> = l
            .iter()
            .zip(widths)
            .map(|(c, w)| format!("{c:<w$}"))
            .collect();
        let _ = writeln!(out, "{}", cells.join("  ").trim_end());
    }
    out
}
