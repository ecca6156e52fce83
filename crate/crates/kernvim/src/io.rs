//! CSV input: datasets with categorical covariates one-hot encoded into
//! groups, and externally fitted nuisance predictions.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{self, Read, Write};
use std::path::Path;

use kernvim_core::nuisance::{Dataset, ExternalNuisances};
use kernvim_core::{Matrix, Subset};

use crate::error::{CliError, Result};

/// A covariate as named in the input file; categorical covariates span
/// several one-hot columns.
#[derive(Debug, Clone, PartialEq)]
pub struct CovariateGroup {
    pub name: String,
    pub columns: Subset,
    /// Category labels in column order, for one-hot groups.
    pub levels: Option<Vec<String>>,
}

#[derive(Debug, Clone)]
pub struct LoadedData {
    pub dataset: Dataset,
    pub groups: Vec<CovariateGroup>,
}

impl LoadedData {
    /// Resolves a group name (e.g. `Country`) or an encoded column name
    /// (e.g. `Country=KEN` or `age`) to its covariate columns.
    pub fn resolve(&self, name: &str) -> Result<Subset> {
        if let Some(g) = self.groups.iter().find(|g| g.name == name) {
            return Ok(g.columns);
        }
        if let Some(j) = self.dataset.column_names().iter().position(|c| c == name) {
            return Ok(Subset::singleton(j));
        }
        Err(CliError::usage(format!(
            "unknown covariate {name:?}; available: {}",
            self.groups.iter().map(|g| g.name.as_str()).collect::<Vec<_>>().join(", ")
        )))
    }

    pub fn resolve_list(&self, names: &[String]) -> Result<Subset> {
        names.iter().try_fold(Subset::EMPTY, |acc, n| Ok(acc.union(self.resolve(n)?)))
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ColumnSpec<'a> {
    pub outcome: &'a str,
    pub treatment: &'a str,
    /// `None` uses every other column.
    pub covariates: Option<&'a [String]>,
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| CliError::file(path, e.to_string()))
}

struct RawTable {
    headers: Vec<String>,
    rows: Vec<Vec<String>>,
    lines: Vec<u64>,
}

fn read_table<R: Read>(reader: R, source: &Path) -> Result<RawTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr
        .headers()
        .map_err(|e| CliError::file(source, format!("cannot read header: {e}")))?
        .iter()
        .map(str::to_owned)
        .collect();
    let mut seen = BTreeSet::new();
    for h in &headers {
        if !seen.insert(h.as_str()) {
            return Err(CliError::file(source, format!("duplicate column {h:?}")));
        }
    }
    let mut rows = Vec::new();
    let mut lines = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            CliError::file(source, format!("line {line}: {e}"))
        })?;
        lines.push(record.position().map(|p| p.line()).unwrap_or(0));
        rows.push(record.iter().map(str::to_owned).collect());
    }
    Ok(RawTable { headers, rows, lines })
}

fn column_index(table: &RawTable, name: &str, source: &Path) -> Result<usize> {
    table
        .headers
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::file(source, format!("no column named {name:?}")))
}

fn parse_number(value: &str, column: &str, line: u64, source: &Path) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| CliError::file(source, format!("line {line}: column {column:?}: {value:?} is not a number")))?;
    if !v.is_finite() {
        return Err(CliError::file(source, format!("line {line}: column {column:?}: value is not finite")));
    }
    Ok(v)
}

pub fn read_dataset(path: &Path, spec: ColumnSpec<'_>) -> Result<LoadedData> {
    parse_dataset(open(path)?, path, spec)
}

/// Parses a headered CSV. Covariate columns whose values are all numeric are
/// used as-is; any other covariate column is treated as categorical and
/// expanded into one indicator column per level (levels sorted).
pub fn parse_dataset<R: Read>(reader: R, source: &Path, spec: ColumnSpec<'_>) -> Result<LoadedData> {
    let table = read_table(reader, source)?;
    let y_col = column_index(&table, spec.outcome, source)?;
    let a_col = column_index(&table, spec.treatment, source)?;
    if y_col == a_col {
        return Err(CliError::usage("outcome and treatment must be different columns"));
    }
    let covariate_cols: Vec<usize> = match spec.covariates {
        Some(names) => names.iter().map(|n| column_index(&table, n, source)).collect::<Result<_>>()?,
        None => (0..table.headers.len()).filter(|&j| j != y_col && j != a_col).collect(),
    };
    if covariate_cols.is_empty() {
        return Err(CliError::usage("no covariate columns selected"));
    }
    if let Some(&j) = covariate_cols.iter().find(|&&j| j == y_col || j == a_col) {
        return Err(CliError::usage(format!("column {:?} cannot be both a covariate and the outcome/treatment", table.headers[j])));
    }

    let n = table.rows.len();
    let mut outcome = Vec::with_capacity(n);
    let mut treatment = Vec::with_capacity(n);
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        outcome.push(parse_number(&row[y_col], spec.outcome, line, source)?);
        let a = parse_number(&row[a_col], spec.treatment, line, source)?;
        if a != 0.0 && a != 1.0 {
            return Err(CliError::file(source, format!("line {line}: treatment must be 0 or 1, got {}", row[a_col])));
        }
        treatment.push(a as u8);
    }

    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names = Vec::new();
    let mut groups = Vec::new();
    for &j in &covariate_cols {
        let name = &table.headers[j];
        let values: Vec<&str> = table.rows.iter().map(|r| r[j].as_str()).collect();
        if let Some((k, _)) = values.iter().enumerate().find(|(_, v)| v.is_empty()) {
            return Err(CliError::file(source, format!("line {}: column {name:?} is empty", table.lines[k])));
        }
        let numeric: Option<Vec<f64>> = values.iter().map(|v| v.parse::<f64>().ok().filter(|x| x.is_finite())).collect();
        let start = columns.len();
        let levels = match numeric {
            Some(v) => {
                columns.push(v);
                names.push(name.clone());
                None
            }
            None => {
                let levels: Vec<String> = values.iter().map(|v| v.to_string()).collect::<BTreeSet<_>>().into_iter().collect();
                for level in &levels {
                    columns.push(values.iter().map(|v| f64::from(u8::from(*v == level))).collect());
                    names.push(format!("{name}={level}"));
                }
                Some(levels)
            }
        };
        if columns.len() > kernvim_core::subset::MAX_DIM {
            return Err(CliError::usage(format!(
                "{} encoded covariate columns exceed the limit of {}",
                columns.len(),
                kernvim_core::subset::MAX_DIM
            )));
        }
        groups.push(CovariateGroup { name: name.clone(), columns: Subset::from_indices(start..columns.len()), levels });
    }
    let x = Matrix::from_fn(n, columns.len(), |i, j| columns[j][i]);
    let dataset = Dataset::new(x, treatment, outcome, names)?;
    Ok(LoadedData { dataset, groups })
}

pub fn read_nuisances(path: &Path) -> Result<ExternalNuisances> {
    parse_nuisances(open(path)?, path)
}

/// Reads `g1,mu1,mu0` predictions, one row per observation.
pub fn parse_nuisances<R: Read>(reader: R, source: &Path) -> Result<ExternalNuisances> {
    let table = read_table(reader, source)?;
    let idx = |c| column_index(&table, c, source).map_err(|_| CliError::file(source, "nuisance file needs the header g1,mu1,mu0"));
    let (g, m1, m0) = (idx("g1")?, idx("mu1")?, idx("mu0")?);
    let mut out = ExternalNuisances { g1: Vec::new(), mu1: Vec::new(), mu0: Vec::new() };
    for (row, &line) in table.rows.iter().zip(&table.lines) {
        let p = parse_number(&row[g], "g1", line, source)?;
        if !(0.0..=1.0).contains(&p) {
            return Err(CliError::file(source, format!("line {line}: propensity {p} outside [0, 1]")));
        }
        out.g1.push(p);
        out.mu1.push(parse_number(&row[m1], "mu1", line, source)?);
        out.mu0.push(parse_number(&row[m0], "mu0", line, source)?);
    }
    Ok(out)
}

/// Writes to `path`, or to standard output when `path` is `None` or `-`.
pub fn write_output(path: Option<&Path>, contents: &str) -> Result<()> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::write(p, contents).map_err(|e| CliError::file(p, e.to_string())),
        _ => {
            let mut out = io::stdout().lock();
            out.write_all(contents.as_bytes()).map_err(|e| CliError::file(Path::new("<stdout>"), e.to_string()))
        }
    }
}

/// CSV text from a header and rows of already formatted fields.
pub fn csv_string(header: &[String], rows: &[Vec<String>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let fail = |e: csv::Error| CliError::usage(format!("cannot format CSV: {e}"));
    w.write_record(header).map_err(fail)?;
    for r in rows {
        w.write_record(r).map_err(fail)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::usage(format!("cannot format CSV: {e}")))?;
    String::from_utf8(bytes).map_err(|e| CliError::usage(e.to_string()))
}
