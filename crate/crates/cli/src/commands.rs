//! The four batch commands. Inputs are loaded before the output directory is
//! touched, so an unreadable input leaves nothing behind.

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use chrono::NaiveDate;
use nalgebra::DMatrix;
use serde::Serialize;
use sparsevar_core::connectedness::{
    self, ConnectednessSummary, FevdTable, GroupTable, RollingConfig, WithinCross,
};
use sparsevar_core::dataset::{self, ContractCatalog, GroupMap, PricePanel, ReturnPanel};
use sparsevar_core::screening::{self, IterationTrace};
use sparsevar_core::selection::{self, WelchTest};
use sparsevar_core::varcore::{self, VarCoefficients};
use sparsevar_core::{graph, io, synthetic};

use crate::config::{LagChoice, RunConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{OutputDir, RunManifest};

fn open(path: &Path, what: &str) -> CliResult<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| CliError::input(format!("cannot open {what} {}: {e}", path.display())))
}

fn load_inputs(cfg: &RunConfig) -> CliResult<(PricePanel, Option<ContractCatalog>)> {
    let path = cfg.require_panel()?;
    let panel = dataset::load_panel(open(path, "panel")?).map_err(|e| CliError::from(e).context(&path.display().to_string()))?;
    let catalog = match &cfg.metadata {
        Some(m) => Some(dataset::load_catalog(open(m, "metadata")?).map_err(|e| CliError::from(e).context(&m.display().to_string()))?),
        None => None,
    };
    Ok((panel, catalog))
}

fn groups_for(catalog: Option<&ContractCatalog>, symbols: &[String]) -> CliResult<GroupMap> {
    match catalog {
        Some(c) => Ok(dataset::group_map(c, symbols)?),
        None => Ok(GroupMap::singletons(symbols)),
    }
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> sparsevar_core::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    Ok(buf)
}

/// Runs `body` against a fresh output directory; on error the manifest is
/// still written, flagged as failed.
fn with_outputs(
    command: &str,
    cfg: &RunConfig,
    body: impl FnOnce(&mut OutputDir) -> CliResult<()>,
) -> CliResult<RunManifest> {
    let mut out = OutputDir::create(command, cfg)?;
    match body(&mut out) {
        Ok(()) => out.finish(),
        Err(e) => Err(out.fail(e)),
    }
}

/// Differenced, imputed returns.
fn prepare_returns(panel: &PricePanel, cfg: &RunConfig, out: &mut OutputDir) -> CliResult<ReturnPanel> {
    let returns = dataset::difference(panel, cfg.transform)?;
    out.lap("difference");
    let (filled, report) = dataset::impute(&returns, cfg.impute)?;
    out.write_json("imputation.json", &report)?;
    out.record("observations", filled.n_obs());
    out.record("variables", filled.n_vars());
    out.lap("impute");
    Ok(filled)
}

/// Applies the configured lag rule, writing the criteria table when BIC
/// selection runs.
fn choose_lag(data: &DMatrix<f64>, cfg: &RunConfig, out: &mut OutputDir) -> CliResult<usize> {
    let p = match cfg.lag {
        LagChoice::Fixed(p) => p,
        LagChoice::Bic(p_max) => {
            let sel = selection::select_lag(data, p_max, &cfg.isis, cfg.df_mode)?;
            out.write("criteria.csv", &csv_bytes(|b| io::write_criteria_csv(&sel.rows, b))?)?;
            if !sel.failures.is_empty() {
                out.record("lag_failures", &sel.failures);
            }
            out.record("best_aic", sel.best_aic);
            out.record("best_hq", sel.best_hq);
            sel.best_bic
        }
    };
    out.record("p", p);
    out.lap("lag selection");
    Ok(p)
}

/// Innovation stream seed, kept apart from the coefficient draw.
pub fn innovation_seed(seed: u64) -> u64 {
    seed ^ 0x9e37_79b9_7f4a_7c15
}

#[derive(Serialize)]
struct FitReport<'a> {
    p: usize,
    spectral_radius: f64,
    stable: bool,
    converged: bool,
    nonzero_coefficients: usize,
    coefficients: &'a VarCoefficients,
    sigma: Vec<Vec<f64>>,
    traces: &'a [IterationTrace],
}

#[derive(Serialize)]
struct TableView {
    summary: ConnectednessSummary,
    within_cross: WithinCross,
    groups: GroupTable,
}

impl TableView {
    fn of(table: &FevdTable, groups: &GroupMap) -> CliResult<Self> {
        Ok(Self {
            summary: connectedness::summarize(table),
            within_cross: connectedness::decompose_within_cross(table, groups)?,
            groups: connectedness::aggregate(table, groups)?,
        })
    }
}

#[derive(Serialize)]
struct HorizonView {
    horizon: usize,
    raw: TableView,
    normalized: TableView,
}

#[derive(Serialize)]
struct PipelineSummary {
    symbols: Vec<String>,
    p: usize,
    spectral_radius: f64,
    stable: bool,
    /// `total` is the off-diagonal mass divided by K, `off_diagonal_sum` the
    /// mass itself. Values are shares, not multiplied by `table_scale`.
    horizons: Vec<HorizonView>,
}

fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn simulate(cfg: &RunConfig) -> CliResult<RunManifest> {
    let sim = &cfg.simulation;
    let truth = synthetic::draw_sparse_var(&sim.design, cfg.seed)?;
    let returns = varcore::simulate(&truth.coeffs, &truth.sigma, sim.t, sim.burn_in, innovation_seed(cfg.seed))?;
    with_outputs("simulate", cfg, |out| {
        let k = returns.n_vars();
        let r = returns.values();
        let mut levels = DMatrix::from_element(r.nrows() + 1, k, 100.0);
        for t in 0..r.nrows() {
            for j in 0..k {
                levels[(t + 1, j)] = levels[(t, j)] + r[(t, j)];
            }
        }
        let first = returns.dates()[0].pred_opt().unwrap_or(NaiveDate::MIN);
        let mut dates = vec![first];
        dates.extend_from_slice(returns.dates());
        let symbols = returns.symbols();
        out.write(
            "panel.csv",
            &csv_bytes(|b| dataset::write_panel(&dates, symbols, &levels, b))?,
        )?;

        let mut meta = String::from("symbol,type,description\n");
        for (i, s) in symbols.iter().enumerate() {
            let g = i * sim.groups / k + 1;
            meta.push_str(&format!("{s},G{g},synthetic variable {}\n", i + 1));
        }
        out.write("metadata.csv", meta.as_bytes())?;
        out.write_json("truth.json", &truth)?;
        out.record("spectral_radius", truth.spectral_radius);
        out.record("nonzero_coefficients", truth.coeffs.nonzero_count());
        out.lap("simulate");
        Ok(())
    })
}

pub fn pipeline(cfg: &RunConfig) -> CliResult<RunManifest> {
    let (panel, catalog) = load_inputs(cfg)?;
    let groups = groups_for(catalog.as_ref(), panel.symbols())?;
    with_outputs("pipeline", cfg, |out| {
        out.lap("load");
        let returns = prepare_returns(&panel, cfg, out)?;
        let data = returns.values();
        let p = choose_lag(data, cfg, out)?;

        let fit = screening::fit_sparse_var(data, p, &cfg.isis)?;
        let stability = varcore::is_stable(&fit.coeffs);
        if !stability.stable {
            log::warn!("fitted VAR is unstable (spectral radius {:.4})", stability.spectral_radius);
        }
        out.write_json(
            "fit.json",
            &FitReport {
                p,
                spectral_radius: stability.spectral_radius,
                stable: stability.stable,
                converged: fit.converged(),
                nonzero_coefficients: fit.coeffs.nonzero_count(),
                coefficients: &fit.coeffs,
                sigma: rows_of(&fit.sigma),
                traces: &fit.traces,
            },
        )?;
        out.record("spectral_radius", stability.spectral_radius);
        out.lap("fit");

        let symbols = returns.symbols().to_vec();
        let mut horizons = Vec::with_capacity(cfg.horizons.len());
        for &q in &cfg.horizons {
            let raw = connectedness::fevd(&fit.coeffs, &fit.sigma, q)?;
            let normalized = connectedness::normalize_rows(&raw)?;
            out.write(
                &format!("table_raw_h{q}.csv"),
                &csv_bytes(|b| io::write_connectedness_csv(&raw, &symbols, cfg.table_scale, b))?,
            )?;
            let view = HorizonView {
                horizon: q,
                raw: TableView::of(&raw, &groups)?,
                normalized: TableView::of(&normalized, &groups)?,
            };
            out.write(
                &format!("groups_raw_h{q}.csv"),
                &csv_bytes(|b| io::write_group_csv(&view.raw.groups, cfg.table_scale, b))?,
            )?;
            let (kind, net_table) = if cfg.graph_normalized { ("normalized", &normalized) } else { ("raw", &raw) };
            let text = graph::export_graph(net_table, &symbols, &groups, cfg.threshold, cfg.format)?;
            out.write(&format!("network_{kind}_h{q}.{}", cfg.graph_extension()), text.as_bytes())?;
            horizons.push(view);
        }
        out.write_json(
            "summary.json",
            &PipelineSummary {
                symbols,
                p,
                spectral_radius: stability.spectral_radius,
                stable: stability.stable,
                horizons,
            },
        )?;
        out.lap("connectedness");
        Ok(())
    })
}

#[derive(Serialize)]
struct WindowTotals {
    horizon: usize,
    total: f64,
    off_diagonal_sum: f64,
    within: f64,
    cross: f64,
}

#[derive(Serialize)]
struct WindowRow {
    start: usize,
    end: usize,
    start_date: NaiveDate,
    end_date: NaiveDate,
    spectral_radius: f64,
    horizons: Vec<WindowTotals>,
}

#[derive(Serialize)]
struct HorizonComparison {
    horizon_a: usize,
    horizon_b: usize,
    welch: WelchTest,
}

#[derive(Serialize)]
struct RollingReport {
    p: usize,
    window: usize,
    step: usize,
    normalized: bool,
    horizons: Vec<usize>,
    windows: Vec<WindowRow>,
    failures: Vec<connectedness::WindowFailure>,
    /// Welch tests between the total-connectedness series of each pair of
    /// horizons.
    comparisons: Vec<HorizonComparison>,
}

pub fn roll(cfg: &RunConfig) -> CliResult<RunManifest> {
    let (panel, catalog) = load_inputs(cfg)?;
    let groups = groups_for(catalog.as_ref(), panel.symbols())?;
    with_outputs("roll", cfg, |out| {
        out.lap("load");
        let returns = prepare_returns(&panel, cfg, out)?;
        let data = returns.values();
        let p = choose_lag(data, cfg, out)?;
        let rc = RollingConfig {
            window: cfg.window,
            step: cfg.step,
            p,
            horizons: cfg.horizons.clone(),
            normalized: cfg.roll_normalized,
            estimator: cfg.isis,
        };
        let series = connectedness::rolling_connectedness(data, &groups, &rc)?;
        out.lap("rolling");
        if series.windows.is_empty() {
            return Err(CliError::numeric(format!(
                "every window failed; first reason: {}",
                series.failures.first().map_or("none", |f| f.reason.as_str())
            )));
        }
        out.record("windows", series.windows.len());
        out.record("failed_windows", series.failures.len());

        let dates = returns.dates();
        let windows: Vec<WindowRow> = series
            .windows
            .iter()
            .map(|w| WindowRow {
                start: w.start,
                end: w.end,
                start_date: dates[w.start],
                end_date: dates[w.end - 1],
                spectral_radius: w.spectral_radius,
                horizons: w
                    .horizons
                    .iter()
                    .map(|h| WindowTotals {
                        horizon: h.horizon,
                        total: h.summary.total,
                        off_diagonal_sum: h.summary.off_diagonal_sum,
                        within: h.within_cross.within,
                        cross: h.within_cross.cross,
                    })
                    .collect(),
            })
            .collect();

        let mut comparisons = Vec::new();
        if series.windows.len() >= 2 {
            for (i, &a) in series.horizons.iter().enumerate() {
                for &b in &series.horizons[i + 1..] {
                    let ta = series.totals(a).expect("horizon present");
                    let tb = series.totals(b).expect("horizon present");
                    comparisons.push(HorizonComparison {
                        horizon_a: a,
                        horizon_b: b,
                        welch: selection::welch_t_test(&ta, &tb)?,
                    });
                }
            }
        }

        let mut csv = String::from("start,end,start_date,end_date,spectral_radius");
        for q in &series.horizons {
            csv.push_str(&format!(",total_h{q},off_diagonal_h{q},within_h{q},cross_h{q}"));
        }
        csv.push('\n');
        for w in &windows {
            csv.push_str(&format!(
                "{},{},{},{},{}",
                w.start,
                w.end,
                w.start_date,
                w.end_date,
                io::fmt_f64(w.spectral_radius)
            ));
            for h in &w.horizons {
                for v in [h.total, h.off_diagonal_sum, h.within, h.cross] {
                    csv.push(',');
                    csv.push_str(&io::fmt_f64(v));
                }
            }
            csv.push('\n');
        }
        out.write("rolling.csv", csv.as_bytes())?;
        out.write_json(
            "rolling.json",
            &RollingReport {
                p,
                window: cfg.window,
                step: cfg.step,
                normalized: cfg.roll_normalized,
                horizons: series.horizons.clone(),
                windows,
                failures: series.failures.clone(),
                comparisons,
            },
        )?;
        out.lap("write");
        Ok(())
    })
}

pub fn export_graph(cfg: &RunConfig) -> CliResult<RunManifest> {
    let path = cfg
        .table
        .as_deref()
        .ok_or_else(|| CliError::input("no connectedness table given (use --table or the config file)"))?;
    let (labels, theta) =
        io::read_connectedness_csv(open(path, "table")?, cfg.table_scale).map_err(|e| CliError::from(e).context(&path.display().to_string()))?;
    let catalog = match &cfg.metadata {
        Some(m) => Some(dataset::load_catalog(open(m, "metadata")?)?),
        None => None,
    };
    let groups = groups_for(catalog.as_ref(), &labels)?;
    with_outputs("export-graph", cfg, |out| {
        let raw = FevdTable {
            theta,
            horizon: cfg.horizons[0],
            normalized: false,
        };
        let (kind, table) = if cfg.graph_normalized {
            ("normalized", connectedness::normalize_rows(&raw)?)
        } else {
            ("raw", raw)
        };
        let text = graph::export_graph(&table, &labels, &groups, cfg.threshold, cfg.format)?;
        out.write(&format!("network_{kind}.{}", cfg.graph_extension()), text.as_bytes())?;
        out.lap("export");
        Ok(())
    })
}
