//! Price panels, contract metadata, stationary transforms and missing-value
//! imputation.
//!
//! Missing cells are represented as `NaN` inside the value matrices. Every
//! panel also carries enough bookkeeping to tell an originally missing cell
//! apart from an imputed one.

use std::collections::HashMap;
use std::io::Read;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

/// Date-indexed matrix of contract prices, `T` rows by `K` symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePanel {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    values: DMatrix<f64>,
}

impl PricePanel {
    pub fn new(dates: Vec<NaiveDate>, symbols: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if values.nrows() != dates.len() || values.ncols() != symbols.len() {
            return Err(Error::Shape(format!(
                "panel values are {}x{} but there are {} dates and {} symbols",
                values.nrows(),
                values.ncols(),
                dates.len(),
                symbols.len()
            )));
        }
        if let Some(i) = dates.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidParameter(format!(
                "dates must be strictly increasing (row {})",
                i + 1
            )));
        }
        check_unique_symbols(&symbols)?;
        Ok(Self {
            dates,
            symbols,
            values,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    pub fn is_missing(&self, t: usize, k: usize) -> bool {
        self.values[(t, k)].is_nan()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_nan()).count()
    }
}

fn check_unique_symbols(symbols: &[String]) -> Result<()> {
    let mut seen = HashMap::with_capacity(symbols.len());
    for (i, s) in symbols.iter().enumerate() {
        if let Some(prev) = seen.insert(s.as_str(), i) {
            return Err(Error::InvalidParameter(format!(
                "duplicate symbol `{s}` (columns {} and {})",
                prev + 1,
                i + 1
            )));
        }
    }
    Ok(())
}

/// Reads a price panel from CSV.
///
/// The first header must be `date`; the remaining headers are contract
/// symbols. Empty cells are missing observations. Reported rows are file line
/// numbers (header is line 1) and columns are 1-based.
pub fn load_panel<R: Read>(source: R) -> Result<PricePanel> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    match headers.get(0) {
        Some("date") => {}
        other => {
            return Err(Error::Parse {
                row: 1,
                column: 1,
                message: format!("expected first header `date`, found {other:?}"),
            })
        }
    }
    let symbols: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    if symbols.is_empty() {
        return Err(Error::Parse {
            row: 1,
            column: 2,
            message: "no symbol columns".into(),
        });
    }
    let mut seen = HashMap::new();
    for (i, s) in symbols.iter().enumerate() {
        if s.is_empty() {
            return Err(Error::Parse {
                row: 1,
                column: i + 2,
                message: "empty symbol name".into(),
            });
        }
        if seen.insert(s.clone(), i).is_some() {
            return Err(Error::Parse {
                row: 1,
                column: i + 2,
                message: format!("duplicate symbol `{s}`"),
            });
        }
    }

    let k = symbols.len();
    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut cells: Vec<f64> = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let line = idx + 2;
        let record = record?;
        if record.len() != k + 1 {
            return Err(Error::Parse {
                row: line,
                column: record.len().min(k + 1),
                message: format!("expected {} fields, found {}", k + 1, record.len()),
            });
        }
        let date = NaiveDate::parse_from_str(&record[0], "%Y-%m-%d").map_err(|e| Error::Parse {
            row: line,
            column: 1,
            message: format!("invalid ISO-8601 date `{}`: {e}", &record[0]),
        })?;
        if let Some(last) = dates.last() {
            if date == *last {
                return Err(Error::Parse {
                    row: line,
                    column: 1,
                    message: format!("duplicate date {date}"),
                });
            }
            if date < *last {
                return Err(Error::Parse {
                    row: line,
                    column: 1,
                    message: format!("date {date} is earlier than preceding date {last}"),
                });
            }
        }
        dates.push(date);
        for (j, cell) in record.iter().skip(1).enumerate() {
            let value = if cell.is_empty() {
                f64::NAN
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::Parse {
                    row: line,
                    column: j + 2,
                    message: format!("unparseable number `{cell}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        row: line,
                        column: j + 2,
                        message: format!("non-finite number `{cell}`"),
                    });
                }
                v
            };
            cells.push(value);
        }
    }
    let t = dates.len();
    let values = DMatrix::from_row_slice(t, k, &cells);
    PricePanel::new(dates, symbols, values)
}

/// Writes a panel back to the CSV layout accepted by [`load_panel`].
pub fn write_panel<W: std::io::Write>(
    dates: &[NaiveDate],
    symbols: &[String],
    values: &DMatrix<f64>,
    sink: W,
) -> Result<()> {
    let mut writer = csv::Writer::from_writer(sink);
    let mut header = vec!["date".to_string()];
    header.extend(symbols.iter().cloned());
    writer.write_record(&header)?;
    for (t, date) in dates.iter().enumerate() {
        let mut row = Vec::with_capacity(symbols.len() + 1);
        row.push(date.format("%Y-%m-%d").to_string());
        for k in 0..symbols.len() {
            let v = values[(t, k)];
            row.push(if v.is_nan() {
                String::new()
            } else {
                crate::io::fmt_f64(v)
            });
        }
        writer.write_record(&row)?;
    }
    writer.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContractInfo {
    pub symbol: String,
    pub type_code: String,
    pub description: String,
}

/// Contract metadata keyed by symbol, in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ContractCatalog {
    entries: Vec<ContractInfo>,
    index: HashMap<String, usize>,
}

impl ContractCatalog {
    pub fn new(entries: Vec<ContractInfo>) -> Result<Self> {
        let mut index = HashMap::with_capacity(entries.len());
        for (i, e) in entries.iter().enumerate() {
            if e.type_code.trim().is_empty() {
                return Err(Error::InvalidParameter(format!(
                    "contract `{}` has an empty type code",
                    e.symbol
                )));
            }
            if index.insert(e.symbol.clone(), i).is_some() {
                return Err(Error::InvalidParameter(format!(
                    "duplicate catalog symbol `{}`",
                    e.symbol
                )));
            }
        }
        Ok(Self { entries, index })
    }

    pub fn get(&self, symbol: &str) -> Option<&ContractInfo> {
        self.index.get(symbol).map(|&i| &self.entries[i])
    }

    pub fn entries(&self) -> &[ContractInfo] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Reads a `symbol,type,description` metadata CSV.
pub fn load_catalog<R: Read>(source: R) -> Result<ContractCatalog> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(source);
    let headers = reader.headers()?.clone();
    let position = |name: &str| -> Result<usize> {
        headers.iter().position(|h| h == name).ok_or_else(|| Error::Parse {
            row: 1,
            column: 1,
            message: format!("metadata is missing the `{name}` column"),
        })
    };
    let (si, ti, di) = (position("symbol")?, position("type")?, position("description")?);
    let mut entries = Vec::new();
    for (idx, record) in reader.records().enumerate() {
        let record = record?;
        let field = |i: usize| record.get(i).unwrap_or("").to_string();
        let entry = ContractInfo {
            symbol: field(si),
            type_code: field(ti),
            description: field(di),
        };
        if entry.type_code.is_empty() {
            return Err(Error::Parse {
                row: idx + 2,
                column: ti + 1,
                message: format!("empty type for `{}`", entry.symbol),
            });
        }
        entries.push(entry);
    }
    ContractCatalog::new(entries)
}

/// Assignment of panel columns to contract-type groups.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupMap {
    /// Group label per group index.
    pub labels: Vec<String>,
    /// Group index per variable index.
    pub assignment: Vec<usize>,
}

impl GroupMap {
    /// Every variable in its own group, labelled by `symbols`.
    pub fn singletons(symbols: &[String]) -> Self {
        Self {
            labels: symbols.to_vec(),
            assignment: (0..symbols.len()).collect(),
        }
    }

    pub fn from_assignment(assignment: Vec<usize>) -> Result<Self> {
        let n_groups = assignment.iter().map(|g| g + 1).max().unwrap_or(0);
        for g in 0..n_groups {
            if !assignment.contains(&g) {
                return Err(Error::InvalidParameter(format!(
                    "group indices must be contiguous; group {g} is empty"
                )));
            }
        }
        Ok(Self {
            labels: (0..n_groups).map(|g| format!("G{g}")).collect(),
            assignment,
        })
    }

    pub fn n_groups(&self) -> usize {
        self.labels.len()
    }

    pub fn n_vars(&self) -> usize {
        self.assignment.len()
    }

    pub fn group_of(&self, var: usize) -> usize {
        self.assignment[var]
    }
}

/// Maps each symbol to a contiguous group index, numbered by first
/// appearance of its type code.
pub fn group_map(catalog: &ContractCatalog, symbols: &[String]) -> Result<GroupMap> {
    let mut labels: Vec<String> = Vec::new();
    let mut by_label: HashMap<&str, usize> = HashMap::new();
    let mut assignment = Vec::with_capacity(symbols.len());
    for symbol in symbols {
        let info = catalog
            .get(symbol)
            .ok_or_else(|| Error::UnknownSymbol(symbol.clone()))?;
        let next = labels.len();
        let g = *by_label.entry(info.type_code.as_str()).or_insert(next);
        if g == next {
            labels.push(info.type_code.clone());
        }
        assignment.push(g);
    }
    Ok(GroupMap { labels, assignment })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Transform {
    Diff,
    Logdiff,
}

impl std::str::FromStr for Transform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "diff" => Ok(Transform::Diff),
            "logdiff" => Ok(Transform::Logdiff),
            other => Err(Error::InvalidParameter(format!(
                "unknown transform `{other}` (expected diff or logdiff)"
            ))),
        }
    }
}

/// Stationary returns derived from a [`PricePanel`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnPanel {
    dates: Vec<NaiveDate>,
    symbols: Vec<String>,
    values: DMatrix<f64>,
    transform: Transform,
    missing_mask: DMatrix<bool>,
}

impl ReturnPanel {
    /// Wraps an already stationary matrix. `NaN` cells are recorded as missing.
    pub fn from_values(
        dates: Vec<NaiveDate>,
        symbols: Vec<String>,
        values: DMatrix<f64>,
        transform: Transform,
    ) -> Result<Self> {
        let checked = PricePanel::new(dates, symbols, values)?;
        let missing_mask = checked.values.map(|v| v.is_nan());
        Ok(Self {
            dates: checked.dates,
            symbols: checked.symbols,
            values: checked.values,
            transform,
            missing_mask,
        })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn transform(&self) -> Transform {
        self.transform
    }

    /// Cells that were missing before any imputation.
    pub fn missing_mask(&self) -> &DMatrix<bool> {
        &self.missing_mask
    }

    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_vars(&self) -> usize {
        self.values.ncols()
    }

    /// True when no cell is currently `NaN`.
    pub fn is_complete(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Contiguous block of rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let n = end - start;
        Self {
            dates: self.dates[start..end].to_vec(),
            symbols: self.symbols.clone(),
            values: self.values.rows(start, n).into_owned(),
            transform: self.transform,
            missing_mask: self.missing_mask.rows(start, n).into_owned(),
        }
    }
}

/// First differences (or log differences) of a price panel.
///
/// A return is missing when either adjacent price is missing. Under
/// `Logdiff`, nonpositive prices also yield missing returns.
pub fn difference(panel: &PricePanel, mode: Transform) -> Result<ReturnPanel> {
    let t = panel.n_obs();
    if t < 2 {
        return Err(Error::InsufficientData(format!(
            "differencing needs at least 2 observations, panel has {t}"
        )));
    }
    let k = panel.n_vars();
    let prices = panel.values();
    let values = DMatrix::from_fn(t - 1, k, |i, j| {
        let (prev, cur) = (prices[(i, j)], prices[(i + 1, j)]);
        if prev.is_nan() || cur.is_nan() {
            return f64::NAN;
        }
        match mode {
            Transform::Diff => cur - prev,
            Transform::Logdiff if prev > 0.0 && cur > 0.0 => cur.ln() - prev.ln(),
            Transform::Logdiff => f64::NAN,
        }
    });
    ReturnPanel::from_values(
        panel.dates()[1..].to_vec(),
        panel.symbols().to_vec(),
        values,
        mode,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImputationReport {
    pub imputed_per_column: Vec<usize>,
    pub seed: u64,
    pub sweeps: usize,
    pub chains: usize,
    /// Symbols whose observed values were constant and were filled with that
    /// constant instead of a regression draw.
    pub constant_columns: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImputeConfig {
    pub sweeps: usize,
    pub chains: usize,
    pub seed: u64,
    /// Donor pool size for predictive mean matching.
    pub donors: usize,
}

impl Default for ImputeConfig {
    fn default() -> Self {
        Self {
            sweeps: 10,
            chains: 5,
            seed: 0,
            donors: 5,
        }
    }
}

/// Chained-equation imputation with predictive mean matching.
///
/// Each chain initialises missing cells with random observed values of the
/// same column, then for `sweeps` rounds regresses every incomplete column on
/// all other columns (rows where the target is observed) and replaces each
/// missing cell by the observed value of a donor drawn from the `donors`
/// rows whose predictions are nearest. The chains are averaged cell-wise.
pub fn impute(returns: &ReturnPanel, config: ImputeConfig) -> Result<(ReturnPanel, ImputationReport)> {
    if config.chains == 0 {
        return Err(Error::InvalidParameter("imputation needs at least one chain".into()));
    }
    let values = returns.values();
    let (n, k) = values.shape();
    let missing = values.map(|v| v.is_nan());
    let mut imputed_per_column = vec![0usize; k];
    let mut constant_columns = Vec::new();
    let mut incomplete = Vec::new();
    let mut constant_value = vec![None; k];
    for j in 0..k {
        let observed: Vec<f64> = (0..n).filter(|&i| !missing[(i, j)]).map(|i| values[(i, j)]).collect();
        let n_missing = n - observed.len();
        imputed_per_column[j] = n_missing;
        if n_missing == 0 {
            continue;
        }
        if observed.is_empty() {
            return Err(Error::EmptyColumn(returns.symbols()[j].clone()));
        }
        if observed.iter().all(|&v| v == observed[0]) {
            constant_value[j] = Some(observed[0]);
            constant_columns.push(returns.symbols()[j].clone());
        } else {
            incomplete.push(j);
        }
    }

    let report = ImputationReport {
        imputed_per_column,
        seed: config.seed,
        sweeps: config.sweeps,
        chains: config.chains,
        constant_columns,
    };
    if report.imputed_per_column.iter().all(|&c| c == 0) {
        return Ok((returns.clone(), report));
    }

    let chains: Vec<DMatrix<f64>> = (0..config.chains)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            rng.set_stream(c as u64);
            run_chain(values, &missing, &incomplete, &constant_value, config, &mut rng)
        })
        .collect();

    let mut pooled = values.clone();
    for j in 0..k {
        for i in 0..n {
            if missing[(i, j)] {
                let sum: f64 = chains.iter().map(|m| m[(i, j)]).sum();
                pooled[(i, j)] = sum / chains.len() as f64;
            }
        }
    }
    let out = ReturnPanel {
        dates: returns.dates.clone(),
        symbols: returns.symbols.clone(),
        values: pooled,
        transform: returns.transform,
        missing_mask: returns.missing_mask.clone(),
    };
    Ok((out, report))
}

fn run_chain(
    values: &DMatrix<f64>,
    missing: &DMatrix<bool>,
    incomplete: &[usize],
    constant_value: &[Option<f64>],
    config: ImputeConfig,
    rng: &mut ChaCha8Rng,
) -> DMatrix<f64> {
    let (n, k) = values.shape();
    let mut filled = values.clone();
    for (j, c) in constant_value.iter().enumerate() {
        if let Some(c) = c {
            for i in 0..n {
                if missing[(i, j)] {
                    filled[(i, j)] = *c;
                }
            }
        }
    }
    let observed_rows: Vec<Vec<usize>> = (0..k)
        .map(|j| (0..n).filter(|&i| !missing[(i, j)]).collect())
        .collect();
    for &j in incomplete {
        let donors: Vec<f64> = observed_rows[j].iter().map(|&i| values[(i, j)]).collect();
        for i in 0..n {
            if missing[(i, j)] {
                filled[(i, j)] = *donors.choose(rng).expect("column has observations");
            }
        }
    }
    if k == 1 {
        // No predictors: the random hot-deck fill is the imputation.
        return filled;
    }

    for _ in 0..config.sweeps {
        for &j in incomplete {
            let rows = &observed_rows[j];
            let design = |i: usize| -> DVector<f64> {
                let mut x = DVector::zeros(k);
                x[0] = 1.0;
                let mut c = 1;
                for col in 0..k {
                    if col != j {
                        x[c] = filled[(i, col)];
                        c += 1;
                    }
                }
                x
            };
            let mut xtx = DMatrix::<f64>::zeros(k, k);
            let mut xty = DVector::<f64>::zeros(k);
            for &i in rows {
                let x = design(i);
                xtx.ger(1.0, &x, &x, 1.0);
                xty.axpy(values[(i, j)], &x, 1.0);
            }
            let beta = linalg::ridge_solve(xtx, &xty, 1e-8);
            let predicted: Vec<f64> = (0..n).map(|i| design(i).dot(&beta)).collect();
            for i in 0..n {
                if !missing[(i, j)] {
                    continue;
                }
                let target = predicted[i];
                let mut ranked: Vec<(f64, usize)> = rows
                    .iter()
                    .map(|&d| ((predicted[d] - target).abs(), d))
                    .collect();
                let pool = config.donors.max(1).min(ranked.len());
                ranked.select_nth_unstable_by(pool - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                ranked.truncate(pool);
                ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
                let donor = ranked[rng.random_range(0..pool)].1;
                filled[(i, j)] = values[(donor, j)];
            }
        }
    }
    filled
}
