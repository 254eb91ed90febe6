//! Table rendering to CSV and JSON, plus the metadata sidecar.
//!
//! Floats are written with the shortest representation that parses back to
//! the same bits. Every file carries the config hash and the switch settings.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::config::{profile_name, RunConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
    #[default]
    Both,
}

impl Format {
    fn csv(self) -> bool {
        matches!(self, Format::Csv | Format::Both)
    }

    fn json(self) -> bool {
        matches!(self, Format::Json | Format::Both)
    }
}

/// Modelling choices that change the numbers, recorded with every output.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Switches {
    pub alpha_reconstruction: &'static str,
    pub fluctuation_form: &'static str,
    pub profile_v: &'static str,
    pub gamma_denominator: &'static str,
}

impl Switches {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            alpha_reconstruction: "i(f.c)u/omega",
            fluctuation_form: if cfg.fluctuations { "constrained-dipole" } else { "disabled" },
            profile_v: profile_name(cfg.profile),
            gamma_denominator: "first-power",
        }
    }

    fn pairs(&self) -> [(&'static str, &'static str); 4] {
        [
            ("alpha_reconstruction", self.alpha_reconstruction),
            ("fluctuation_form", self.fluctuation_form),
            ("profile_v", self.profile_v),
            ("gamma_denominator", self.gamma_denominator),
        ]
    }
}

/// Shortest decimal that round-trips to the same `f64`, in the same
/// notation as the JSON output.
pub fn format_float(x: f64) -> String {
    if x.is_finite() {
        serde_json::to_string(&x).expect("finite floats serialise")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Bool(bool),
    Text(String),
    Empty,
}

impl Cell {
    fn csv(&self) -> String {
        match self {
            Cell::Float(x) => format_float(*x),
            Cell::Int(i) => i.to_string(),
            Cell::Bool(b) => b.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self) -> Value {
        match self {
            Cell::Float(x) => json!(x),
            Cell::Int(i) => json!(i),
            Cell::Bool(b) => json!(b),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

impl From<usize> for Cell {
    fn from(i: usize) -> Self {
        Cell::Int(i as i64)
    }
}

impl From<i32> for Cell {
    fn from(i: i32) -> Self {
        Cell::Int(i64::from(i))
    }
}

impl From<bool> for Cell {
    fn from(b: bool) -> Self {
        Cell::Bool(b)
    }
}

impl From<String> for Cell {
    fn from(s: String) -> Self {
        Cell::Text(s)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    /// Scalars that belong to the whole table (fit results, settings).
    pub summary: Vec<(&'static str, Cell)>,
}

impl Table {
    pub fn new(name: impl Into<String>, header: Vec<&'static str>) -> Self {
        Self { name: name.into(), header, rows: Vec::new(), summary: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let idx = self.header.iter().position(|h| *h == name)?;
        Some(self.rows.iter().map(|r| &r[idx]).collect())
    }
}

/// What every file must identify.
#[derive(Clone, Debug)]
pub struct Provenance {
    pub command: &'static str,
    pub config_hash: String,
    pub switches: Switches,
    pub serial: bool,
}

impl Provenance {
    pub fn new(command: &'static str, cfg: &RunConfig, serial: bool) -> Self {
        Self { command, config_hash: cfg.hash(), switches: Switches::from_config(cfg), serial }
    }
}

pub fn render_csv(table: &Table, prov: &Provenance) -> String {
    let mut out = format!("# command = {}\n# config_hash = {}\n", prov.command, prov.config_hash);
    for (k, v) in prov.switches.pairs() {
        out.push_str(&format!("# switch.{k} = {v}\n"));
    }
    for (k, v) in &table.summary {
        out.push_str(&format!("# {k} = {}\n", match v {
            Cell::Empty => "null".to_string(),
            other => other.csv(),
        }));
    }
    out.push_str(&table.header.join(","));
    out.push('\n');
    for row in &table.rows {
        out.push_str(&row.iter().map(Cell::csv).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}

pub fn render_json(table: &Table, prov: &Provenance) -> String {
    let mut doc = Map::new();
    doc.insert("command".into(), json!(prov.command));
    doc.insert("config_hash".into(), json!(prov.config_hash));
    doc.insert("switches".into(), json!(prov.switches));
    for (k, v) in &table.summary {
        doc.insert((*k).into(), v.json());
    }
    let rows: Vec<Value> = table
        .rows
        .iter()
        .map(|row| {
            let obj: Map<String, Value> =
                table.header.iter().zip(row).map(|(h, c)| ((*h).to_string(), c.json())).collect();
            Value::Object(obj)
        })
        .collect();
    doc.insert("rows".into(), Value::Array(rows));
    let mut text = serde_json::to_string_pretty(&Value::Object(doc)).expect("json values serialise");
    text.push('\n');
    text
}

pub fn render_metadata(cfg: &RunConfig, prov: &Provenance, tables: &[Table]) -> String {
    let doc = json!({
        "command": prov.command,
        "config_hash": prov.config_hash,
        "switches": prov.switches,
        "reduction": if prov.serial { "serial" } else { "parallel" },
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg.canonical().lines().collect::<Vec<_>>(),
        "tables": tables.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(),
    });
    let mut text = serde_json::to_string_pretty(&doc).expect("json values serialise");
    text.push('\n');
    text
}

/// Write each table in the requested formats plus `<command>.meta.json`.
pub fn write_all(
    dir: &Path,
    format: Format,
    cfg: &RunConfig,
    prov: &Provenance,
    tables: &[Table],
) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    for table in tables {
        if format.csv() {
            let path = dir.join(format!("{}.csv", table.name));
            fs::write(&path, render_csv(table, prov))?;
            written.push(path);
        }
        if format.json() {
            let path = dir.join(format!("{}.json", table.name));
            fs::write(&path, render_json(table, prov))?;
            written.push(path);
        }
    }
    let path = dir.join(format!("{}.meta.json", prov.command));
    fs::write(&path, render_metadata(cfg, prov, tables))?;
    written.push(path);
    Ok(written)
}
