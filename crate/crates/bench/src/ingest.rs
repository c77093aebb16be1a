//! Proxy and accuracy tables from CSV or JSON.
//!
//! Schema: `arch_index,dataset`, any subset of the fifteen proxy names,
//! `clean`, and any number of `{attack}@{k}/255` columns. Empty, `NA` and
//! `nan` cells are missing. Lines starting with `#` are comments; `# key=value`
//! comments are kept as metadata.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use zcp_core::space::NUM_ARCHS;
use zcp_core::{canonical_form, ArchEncoding};
use zcp_proxies::ProxyId;

use crate::columns::AccColumn;
use crate::error::{invalid, BenchError, Result};

/// Number of non-isomorphic cells a complete benchmark table covers.
pub const EXPECTED_UNIQUE: usize = 6_466;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("json") => Format::Json,
            _ => Format::Csv,
        }
    }
}

impl FromStr for Format {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(invalid(format!("unknown format {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PercentMode {
    /// Scale by 1/100 when any accuracy exceeds 1.
    #[default]
    Auto,
    Percent,
    Fraction,
}

impl FromStr for PercentMode {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auto" => Ok(PercentMode::Auto),
            "percent" | "yes" | "true" => Ok(PercentMode::Percent),
            "fraction" | "no" | "false" => Ok(PercentMode::Fraction),
            _ => Err(invalid(format!("unknown percent mode {s:?}"))),
        }
    }
}

/// Unit of the `flops` column on input. Stored values are in millions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlopsUnit {
    Raw,
    #[default]
    Mega,
    Giga,
}

impl FlopsUnit {
    fn to_mega(self) -> f64 {
        match self {
            FlopsUnit::Raw => 1e-6,
            FlopsUnit::Mega => 1.0,
            FlopsUnit::Giga => 1e3,
        }
    }
}

impl FromStr for FlopsUnit {
    type Err = BenchError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "raw" | "flops" | "macs" => Ok(FlopsUnit::Raw),
            "mega" | "m" | "mflops" => Ok(FlopsUnit::Mega),
            "giga" | "g" | "gflops" => Ok(FlopsUnit::Giga),
            _ => Err(invalid(format!("unknown flops unit {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestOptions {
    pub percent: PercentMode,
    pub flops_units: FlopsUnit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Record {
    pub arch_index: usize,
    pub dataset: String,
    /// Source line (CSV) or 1-based record number (JSON).
    pub line: usize,
    /// Aligned with [`IngestTable::proxies`].
    pub proxies: Vec<Option<f64>>,
    /// Aligned with [`IngestTable::columns`].
    pub accuracies: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct IngestTable {
    /// Present proxy columns in canonical order.
    pub proxies: Vec<ProxyId>,
    /// Present accuracy columns in canonical order; always starts with clean.
    pub columns: Vec<AccColumn>,
    pub records: Vec<Record>,
    /// True when accuracies were divided by 100.
    pub percent_scaled: bool,
    pub warnings: Vec<String>,
    pub meta: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub dataset: String,
    pub rows: usize,
    pub unique_canonical: usize,
    pub missing_cells: usize,
}

struct Raw {
    header: Vec<String>,
    rows: Vec<(usize, Vec<String>)>,
    meta: BTreeMap<String, String>,
}

enum Col {
    Arch,
    Dataset,
    Proxy(usize),
    Acc(usize),
    Ignored,
}

pub fn ingest_path(path: &Path, format: Format, opts: &IngestOptions) -> Result<IngestTable> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| invalid(format!("cannot read {}: {e}", path.display())))?;
    ingest_str(&text, format, opts)
}

pub fn ingest_str(text: &str, format: Format, opts: &IngestOptions) -> Result<IngestTable> {
    let raw = match format {
        Format::Csv => read_csv(text)?,
        Format::Json => read_json(text)?,
    };
    build(raw, opts)
}

fn read_meta(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .filter_map(|l| l.trim_start().strip_prefix('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

// Record positions can point at a preceding comment line.
fn data_line(text: &str, mut byte: usize) -> usize {
    let mut line = text[..byte].matches('\n').count() + 1;
    while let Some(rest) = text.get(byte..) {
        let head = rest.split('\n').next().unwrap_or("");
        if !(head.trim_start().starts_with('#') || head.trim().is_empty()) || head.len() == rest.len() {
            break;
        }
        byte += head.len() + 1;
        line += 1;
    }
    line
}

fn read_csv(text: &str) -> Result<Raw> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| invalid(format!("header: {e}")))?
        .iter()
        .map(str::to_string)
        .collect();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            invalid(format!("line {line}: {e}"))
        })?;
        let line = rec.position().map_or(0, |p| data_line(text, p.byte() as usize));
        rows.push((line, rec.iter().map(str::to_string).collect()));
    }
    Ok(Raw {
        header,
        rows,
        meta: read_meta(text),
    })
}

fn read_json(text: &str) -> Result<Raw> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| invalid(format!("json: {e}")))?;
    let items = match value {
        serde_json::Value::Array(a) => a,
        serde_json::Value::Object(mut o) => match o.remove("records") {
            Some(serde_json::Value::Array(a)) => a,
            _ => return Err(invalid("json: expected an array or {\"records\": [...]}")),
        },
        _ => return Err(invalid("json: expected an array of records")),
    };
    let mut header: Vec<String> = Vec::new();
    for item in &items {
        if let Some(o) = item.as_object() {
            for k in o.keys() {
                if !header.contains(k) {
                    header.push(k.clone());
                }
            }
        }
    }
    let mut rows = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let o = item
            .as_object()
            .ok_or_else(|| invalid(format!("record {}: not an object", i + 1)))?;
        let cells = header
            .iter()
            .map(|k| match o.get(k) {
                None | Some(serde_json::Value::Null) => String::new(),
                Some(serde_json::Value::String(s)) => s.clone(),
                Some(v) => v.to_string(),
            })
            .collect();
        rows.push((i + 1, cells));
    }
    Ok(Raw {
        header,
        rows,
        meta: BTreeMap::new(),
    })
}

fn parse_cell(s: &str) -> std::result::Result<Option<f64>, ()> {
    let s = s.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") || s.eq_ignore_ascii_case("nan") {
        return Ok(None);
    }
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(Some(v)),
        _ => Err(()),
    }
}

fn build(raw: Raw, opts: &IngestOptions) -> Result<IngestTable> {
    let mut warnings = Vec::new();
    let mut proxies: Vec<ProxyId> = Vec::new();
    let mut columns: Vec<AccColumn> = Vec::new();
    let mut roles = Vec::with_capacity(raw.header.len());
    let mut seen = BTreeSet::new();
    for h in &raw.header {
        if !seen.insert(h.to_ascii_lowercase()) {
            return Err(invalid(format!("duplicate column {h:?}")));
        }
        let role = if h.eq_ignore_ascii_case("arch_index") {
            Col::Arch
        } else if h.eq_ignore_ascii_case("dataset") {
            Col::Dataset
        } else if let Ok(p) = h.parse::<ProxyId>() {
            proxies.push(p);
            Col::Proxy(proxies.len() - 1)
        } else if let Ok(c) = h.parse::<AccColumn>() {
            columns.push(c);
            Col::Acc(columns.len() - 1)
        } else {
            warnings.push(format!("ignored column {h:?}"));
            Col::Ignored
        };
        roles.push(role);
    }
    let mut missing = Vec::new();
    if !roles.iter().any(|r| matches!(r, Col::Arch)) {
        missing.push("arch_index");
    }
    if !roles.iter().any(|r| matches!(r, Col::Dataset)) {
        missing.push("dataset");
    }
    if !columns.contains(&AccColumn::Clean) {
        missing.push("clean");
    }
    if !missing.is_empty() {
        return Err(invalid(format!("missing required columns: {}", missing.join(", "))));
    }

    // canonical column order
    let mut p_order: Vec<usize> = (0..proxies.len()).collect();
    p_order.sort_by_key(|&i| proxies[i]);
    let mut c_order: Vec<usize> = (0..columns.len()).collect();
    c_order.sort_by(|&a, &b| columns[a].cmp(&columns[b]));
    let p_rank = inverse(&p_order);
    let c_rank = inverse(&c_order);
    let flops_slot = proxies.iter().position(|&p| p == ProxyId::Flops).map(|i| p_rank[i]);

    let mut errors = Vec::new();
    let mut keys: HashMap<(usize, String), usize> = HashMap::new();
    let mut records = Vec::with_capacity(raw.rows.len());
    for (line, cells) in raw.rows {
        let mut rec = Record {
            arch_index: 0,
            dataset: String::new(),
            line,
            proxies: vec![None; proxies.len()],
            accuracies: vec![None; columns.len()],
        };
        let mut ok = true;
        for (role, (cell, name)) in roles.iter().zip(cells.iter().zip(&raw.header)) {
            match role {
                Col::Arch => match cell.trim().parse::<usize>() {
                    Ok(i) if i < NUM_ARCHS => rec.arch_index = i,
                    _ => {
                        errors.push(format!("line {line}: arch_index {cell:?} not in [0, {}]", NUM_ARCHS - 1));
                        ok = false;
                    }
                },
                Col::Dataset => {
                    if cell.trim().is_empty() {
                        errors.push(format!("line {line}: empty dataset"));
                        ok = false;
                    }
                    rec.dataset = cell.trim().to_string();
                }
                Col::Proxy(i) | Col::Acc(i) => match parse_cell(cell) {
                    Ok(v) => match role {
                        Col::Proxy(_) => rec.proxies[p_rank[*i]] = v,
                        _ => rec.accuracies[c_rank[*i]] = v,
                    },
                    Err(()) => {
                        errors.push(format!("line {line}, column {name}: cannot parse {cell:?}"));
                        ok = false;
                    }
                },
                Col::Ignored => {}
            }
        }
        if !ok {
            continue;
        }
        if let Some(s) = flops_slot {
            if let Some(v) = rec.proxies[s].as_mut() {
                *v *= opts.flops_units.to_mega();
            }
        }
        let key = (rec.arch_index, rec.dataset.to_ascii_lowercase());
        if let Some(first) = keys.insert(key, line) {
            errors.push(format!(
                "duplicate key (arch_index {}, dataset {}) on lines {first} and {line}",
                rec.arch_index, rec.dataset
            ));
            continue;
        }
        records.push(rec);
    }
    if !errors.is_empty() {
        return Err(invalid(errors.join("\n")));
    }

    let max_acc = records
        .iter()
        .flat_map(|r| r.accuracies.iter().flatten())
        .fold(0.0f64, |m, &v| m.max(v));
    let percent_scaled = match opts.percent {
        PercentMode::Percent => true,
        PercentMode::Fraction => false,
        PercentMode::Auto => max_acc > 1.0,
    };
    if percent_scaled {
        if opts.percent == PercentMode::Auto {
            warnings.push("accuracies read as percentages and divided by 100".into());
        }
        for r in &mut records {
            r.accuracies.iter_mut().flatten().for_each(|v| *v /= 100.0);
        }
    }
    let proxies_sorted: Vec<ProxyId> = p_order.iter().map(|&i| proxies[i]).collect();
    let columns_sorted: Vec<AccColumn> = c_order.iter().map(|&i| columns[i].clone()).collect();
    for r in &records {
        for (v, c) in r.accuracies.iter().zip(&columns_sorted) {
            if let Some(v) = v {
                if !(0.0..=1.0).contains(v) {
                    errors.push(format!("line {}, column {c}: accuracy {v} outside [0, 1]", r.line));
                }
            }
        }
    }
    if !errors.is_empty() {
        return Err(invalid(errors.join("\n")));
    }

    Ok(IngestTable {
        proxies: proxies_sorted,
        columns: columns_sorted,
        records,
        percent_scaled,
        warnings,
        meta: raw.meta,
    })
}

fn inverse(order: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; order.len()];
    for (rank, &i) in order.iter().enumerate() {
        inv[i] = rank;
    }
    inv
}

impl IngestTable {
    /// Builds a table from whole columns; rows are numbered as if read from
    /// a CSV with one header line.
    pub fn from_columns(
        dataset: &str,
        arch: &[usize],
        proxies: Vec<(ProxyId, Vec<f64>)>,
        accuracies: Vec<(AccColumn, Vec<f64>)>,
    ) -> Result<IngestTable> {
        let n = arch.len();
        if proxies.iter().map(|c| c.1.len()).chain(accuracies.iter().map(|c| c.1.len())).any(|l| l != n) {
            return Err(invalid("columns differ in length"));
        }
        let mut text = String::from("arch_index,dataset");
        for (p, _) in &proxies {
            let _ = write!(text, ",{p}");
        }
        for (c, _) in &accuracies {
            let _ = write!(text, ",{c}");
        }
        text.push('\n');
        for (i, a) in arch.iter().enumerate() {
            let _ = write!(text, "{a},{dataset}");
            for (_, v) in &proxies {
                let _ = write!(text, ",{}", v[i]);
            }
            for (_, v) in &accuracies {
                let _ = write!(text, ",{}", v[i]);
            }
            text.push('\n');
        }
        let opts = IngestOptions {
            percent: PercentMode::Fraction,
            flops_units: FlopsUnit::Mega,
        };
        ingest_str(&text, Format::Csv, &opts)
    }

    /// Dataset names in first-seen order.
    pub fn datasets(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for r in &self.records {
            if !out.iter().any(|d| d.eq_ignore_ascii_case(&r.dataset)) {
                out.push(r.dataset.clone());
            }
        }
        out
    }

    /// Rows of one dataset (case-insensitive).
    pub fn for_dataset(&self, dataset: &str) -> Result<IngestTable> {
        let records: Vec<Record> = self
            .records
            .iter()
            .filter(|r| r.dataset.eq_ignore_ascii_case(dataset))
            .cloned()
            .collect();
        if records.is_empty() {
            return Err(invalid(format!(
                "dataset {dataset:?} not in table (have: {})",
                self.datasets().join(", ")
            )));
        }
        Ok(IngestTable {
            records,
            ..self.clone_meta()
        })
    }

    fn clone_meta(&self) -> IngestTable {
        IngestTable {
            proxies: self.proxies.clone(),
            columns: self.columns.clone(),
            records: Vec::new(),
            percent_scaled: self.percent_scaled,
            warnings: self.warnings.clone(),
            meta: self.meta.clone(),
        }
    }

    pub fn proxy_values(&self, id: ProxyId) -> Option<Vec<Option<f64>>> {
        let j = self.proxies.iter().position(|&p| p == id)?;
        Some(self.records.iter().map(|r| r.proxies[j]).collect())
    }

    pub fn column_index(&self, col: &AccColumn) -> Option<usize> {
        self.columns.iter().position(|c| c == col)
    }

    pub fn accuracy_values(&self, col: &AccColumn) -> Option<Vec<Option<f64>>> {
        let j = self.column_index(col)?;
        Some(self.records.iter().map(|r| r.accuracies[j]).collect())
    }

    pub fn summary(&self) -> Vec<DatasetSummary> {
        self.datasets()
            .into_iter()
            .map(|d| {
                let rows: Vec<&Record> = self
                    .records
                    .iter()
                    .filter(|r| r.dataset.eq_ignore_ascii_case(&d))
                    .collect();
                let unique: BTreeSet<_> = rows
                    .iter()
                    .map(|r| canonical_form(&ArchEncoding::decode(r.arch_index).expect("validated")))
                    .collect();
                let missing_cells = rows
                    .iter()
                    .map(|r| {
                        r.proxies.iter().filter(|v| v.is_none()).count()
                            + r.accuracies.iter().filter(|v| v.is_none()).count()
                    })
                    .sum();
                DatasetSummary {
                    dataset: d,
                    rows: rows.len(),
                    unique_canonical: unique.len(),
                    missing_cells,
                }
            })
            .collect()
    }

    /// Human-readable summary lines, one per dataset.
    pub fn summary_text(&self) -> String {
        let mut s = String::new();
        for d in self.summary() {
            let _ = write!(
                s,
                "{}: {} rows, {} unique canonical architectures, {} missing cells",
                d.dataset, d.rows, d.unique_canonical, d.missing_cells
            );
            if d.unique_canonical != EXPECTED_UNIQUE {
                let _ = write!(s, " (a full table has {EXPECTED_UNIQUE})");
            }
            s.push('\n');
        }
        let _ = writeln!(
            s,
            "{} proxy columns, {} accuracy columns, {} warnings{}",
            self.proxies.len(),
            self.columns.len(),
            self.warnings.len(),
            if self.percent_scaled { ", percent inputs scaled" } else { "" }
        );
        s
    }

    /// Writes the table in canonical column order with accuracies as
    /// fractions and flops in millions.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# flops_units=mega")?;
        let mut header = vec!["arch_index".to_string(), "dataset".to_string()];
        header.extend(self.proxies.iter().map(|p| p.name().to_string()));
        header.extend(self.columns.iter().map(ToString::to_string));
        writeln!(out, "{}", header.join(","))?;
        for r in &self.records {
            write!(out, "{},{}", r.arch_index, r.dataset)?;
            for v in r.proxies.iter().chain(&r.accuracies) {
                match v {
                    Some(v) => write!(out, ",{v}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}
