//! Generalized forecast error variance decomposition and the connectedness
//! measures built on it.
//!
//! Entry `(i, j)` of a [`FevdTable`] is the share of variable `i`'s
//! `Q`-step forecast error variance attributed to shocks in variable `j`,
//! i.e. the pairwise connectedness from `j` to `i`:
//!
//! ```text
//! theta_ij(Q) = sigma_jj^-1 * sum_{h<Q} (e_i' B_h S e_j)^2 / sum_{h<Q} e_i' B_h S B_h' e_i
//! ```
//!
//! where `B_h` are the moving-average coefficients and `S` the innovation
//! covariance. Rows of the raw table do not sum to one.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::GroupMap;
use crate::error::{Error, Result};
use crate::screening::{self, IsisConfig};
use crate::varcore::{self, VarCoefficients};

pub const DEFAULT_HORIZON: usize = 10;
pub const DEFAULT_WINDOW: usize = 36;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FevdTable {
    #[serde(with = "matrix_rows")]
    pub theta: DMatrix<f64>,
    pub horizon: usize,
    pub normalized: bool,
}

impl FevdTable {
    pub fn k(&self) -> usize {
        self.theta.nrows()
    }

    pub fn off_diagonal_sum(&self) -> f64 {
        let k = self.k();
        let mut s = 0.0;
        for i in 0..k {
            for j in 0..k {
                if i != j {
                    s += self.theta[(i, j)];
                }
            }
        }
        s
    }
}

pub fn fevd(coeffs: &VarCoefficients, sigma: &DMatrix<f64>, horizon: usize) -> Result<FevdTable> {
    let k = coeffs.k();
    if sigma.shape() != (k, k) {
        return Err(Error::Shape(format!("sigma is {}x{}, expected {k}x{k}", sigma.nrows(), sigma.ncols())));
    }
    crate::linalg::check_symmetric(sigma, "innovation covariance")?;
    if let Some(j) = (0..k).find(|&j| !(sigma[(j, j)] > 0.0)) {
        return Err(Error::ZeroVariance(j));
    }
    let stability = varcore::is_stable(coeffs);
    if !stability.stable {
        log::warn!(
            "FEVD on an unstable VAR (spectral radius {:.4}); shares need not converge in the horizon",
            stability.spectral_radius
        );
    }
    let ma = varcore::ma_coefficients(coeffs, horizon)?;
    let mut num = DMatrix::<f64>::zeros(k, k);
    let mut den = vec![0.0; k];
    for b in &ma.terms {
        let bs = b * sigma;
        for i in 0..k {
            for j in 0..k {
                num[(i, j)] += bs[(i, j)] * bs[(i, j)];
            }
            den[i] += bs.row(i).dot(&b.row(i));
        }
    }
    let theta = DMatrix::from_fn(k, k, |i, j| num[(i, j)] / (sigma[(j, j)] * den[i]));
    if theta.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("variance decomposition".into()));
    }
    Ok(FevdTable {
        theta,
        horizon,
        normalized: false,
    })
}

/// Divides each row by its sum.
pub fn normalize_rows(table: &FevdTable) -> Result<FevdTable> {
    let k = table.k();
    let mut theta = table.theta.clone();
    for i in 0..k {
        let s: f64 = theta.row(i).sum();
        if !(s > 0.0) {
            return Err(Error::Degenerate(format!("row {i} of the decomposition sums to {s}")));
        }
        for j in 0..k {
            theta[(i, j)] /= s;
        }
    }
    Ok(FevdTable {
        theta,
        horizon: table.horizon,
        normalized: true,
    })
}

/// `C_{i<-j} = theta_ij`.
pub fn pairwise(table: &FevdTable, i: usize, j: usize) -> Result<f64> {
    let k = table.k();
    if i >= k || j >= k {
        return Err(Error::InvalidParameter(format!("index ({i}, {j}) out of range for K = {k}")));
    }
    Ok(table.theta[(i, j)])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConnectednessSummary {
    /// `C_{i<-.}`: off-diagonal row sums.
    pub from: Vec<f64>,
    /// `C_{.<-j}`: off-diagonal column sums.
    pub to: Vec<f64>,
    /// `to - from`.
    pub net: Vec<f64>,
    /// Off-diagonal mass divided by `K`.
    pub total: f64,
    /// Off-diagonal mass.
    pub off_diagonal_sum: f64,
}

pub fn summarize(table: &FevdTable) -> ConnectednessSummary {
    let (from, to) = off_diagonal_margins(&table.theta);
    let net = net(&to, &from);
    let off_diagonal_sum = table.off_diagonal_sum();
    let k = table.k().max(1);
    ConnectednessSummary {
        from,
        to,
        net,
        total: off_diagonal_sum / k as f64,
        off_diagonal_sum,
    }
}

/// `to - from`, elementwise.
pub fn net(to: &[f64], from: &[f64]) -> Vec<f64> {
    to.iter().zip(from).map(|(t, f)| t - f).collect()
}

fn off_diagonal_margins(m: &DMatrix<f64>) -> (Vec<f64>, Vec<f64>) {
    let k = m.nrows();
    let mut from = vec![0.0; k];
    let mut to = vec![0.0; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                from[i] += m[(i, j)];
                to[j] += m[(i, j)];
            }
        }
    }
    (from, to)
}

/// Connectedness between groups of variables.
///
/// Off-diagonal cells hold summed cross-group connectedness; diagonal cells
/// hold within-group connectedness between distinct members. Own-variable
/// shares `theta_ii` are excluded everywhere.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupTable {
    pub labels: Vec<String>,
    #[serde(with = "matrix_rows")]
    pub matrix: DMatrix<f64>,
    /// Row sums excluding the diagonal.
    pub from: Vec<f64>,
    /// Column sums excluding the diagonal.
    pub to: Vec<f64>,
    pub net: Vec<f64>,
    /// Row sums including the within-group diagonal.
    pub from_with_within: Vec<f64>,
    /// Column sums including the within-group diagonal.
    pub to_with_within: Vec<f64>,
}

impl GroupTable {
    pub fn grand_total(&self) -> f64 {
        self.matrix.sum()
    }
}

fn check_groups(table: &FevdTable, groups: &GroupMap) -> Result<()> {
    if groups.n_vars() != table.k() {
        return Err(Error::Shape(format!(
            "group map covers {} variables, table has {}",
            groups.n_vars(),
            table.k()
        )));
    }
    if let Some(v) = groups.assignment.iter().position(|&g| g >= groups.n_groups()) {
        return Err(Error::InvalidParameter(format!("variable {v} maps to an unknown group")));
    }
    Ok(())
}

pub fn aggregate(table: &FevdTable, groups: &GroupMap) -> Result<GroupTable> {
    check_groups(table, groups)?;
    let g = groups.n_groups();
    let k = table.k();
    let mut matrix = DMatrix::zeros(g, g);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                matrix[(groups.group_of(i), groups.group_of(j))] += table.theta[(i, j)];
            }
        }
    }
    let (from, to) = off_diagonal_margins(&matrix);
    let net = net(&to, &from);
    let from_with_within = (0..g).map(|r| matrix.row(r).sum()).collect();
    let to_with_within = (0..g).map(|c| matrix.column(c).sum()).collect();
    Ok(GroupTable {
        labels: groups.labels.clone(),
        matrix,
        from,
        to,
        net,
        from_with_within,
        to_with_within,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WithinCross {
    pub within: f64,
    pub cross: f64,
}

/// Splits off-diagonal mass by whether a pair shares a group.
pub fn decompose_within_cross(table: &FevdTable, groups: &GroupMap) -> Result<WithinCross> {
    check_groups(table, groups)?;
    let k = table.k();
    let (mut within, mut cross) = (0.0, 0.0);
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            if groups.group_of(i) == groups.group_of(j) {
                within += table.theta[(i, j)];
            } else {
                cross += table.theta[(i, j)];
            }
        }
    }
    Ok(WithinCross { within, cross })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingConfig {
    pub window: usize,
    pub step: usize,
    pub p: usize,
    pub horizons: Vec<usize>,
    /// Use row-normalized tables for the recorded summaries.
    pub normalized: bool,
    pub estimator: IsisConfig,
}

impl Default for RollingConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            step: 1,
            p: 1,
            horizons: vec![DEFAULT_HORIZON],
            normalized: false,
            estimator: IsisConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonResult {
    pub horizon: usize,
    pub summary: ConnectednessSummary,
    pub groups: GroupTable,
    pub within_cross: WithinCross,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowResult {
    /// First row of the window.
    pub start: usize,
    /// One past the last row.
    pub end: usize,
    pub spectral_radius: f64,
    pub horizons: Vec<HorizonResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowFailure {
    pub start: usize,
    pub end: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RollingSeries {
    pub horizons: Vec<usize>,
    pub windows: Vec<WindowResult>,
    pub failures: Vec<WindowFailure>,
}

impl RollingSeries {
    /// Total connectedness per successful window at the given horizon.
    pub fn totals(&self, horizon: usize) -> Option<Vec<f64>> {
        let h = self.horizons.iter().position(|&q| q == horizon)?;
        Some(self.windows.iter().map(|w| w.horizons[h].summary.total).collect())
    }
}

/// Static analysis of one sample: sparse fit, stability check, and the
/// connectedness tables at each horizon.
pub fn analyze_window(
    data: &DMatrix<f64>,
    groups: &GroupMap,
    config: &RollingConfig,
) -> Result<(screening::SparseVarFit, f64, Vec<(FevdTable, HorizonResult)>)> {
    let fit = screening::fit_sparse_var(data, config.p, &config.estimator)?;
    let stability = varcore::is_stable(&fit.coeffs);
    if !stability.stable {
        return Err(Error::Unstable(stability.spectral_radius));
    }
    let mut out = Vec::with_capacity(config.horizons.len());
    for &q in &config.horizons {
        let raw = fevd(&fit.coeffs, &fit.sigma, q)?;
        let table = if config.normalized { normalize_rows(&raw)? } else { raw };
        let result = HorizonResult {
            horizon: q,
            summary: summarize(&table),
            groups: aggregate(&table, groups)?,
            within_cross: decompose_within_cross(&table, groups)?,
        };
        out.push((table, result));
    }
    Ok((fit, stability.spectral_radius, out))
}

/// Re-estimates the network on windows `[s, s + window)` for
/// `s = 0, step, 2 step, ...`. Failed windows are recorded and skipped.
pub fn rolling_connectedness(data: &DMatrix<f64>, groups: &GroupMap, config: &RollingConfig) -> Result<RollingSeries> {
    let t = data.nrows();
    if config.window <= config.p {
        return Err(Error::InvalidParameter(format!(
            "window {} must exceed the lag order {}",
            config.window, config.p
        )));
    }
    if config.step == 0 {
        return Err(Error::InvalidParameter("step must be >= 1".into()));
    }
    if config.horizons.is_empty() || config.horizons.contains(&0) {
        return Err(Error::InvalidParameter("horizons must be nonempty and >= 1".into()));
    }
    if config.window > t {
        return Err(Error::InsufficientData(format!("window {} exceeds sample length {t}", config.window)));
    }
    if groups.n_vars() != data.ncols() {
        return Err(Error::Shape(format!(
            "group map covers {} variables, data has {}",
            groups.n_vars(),
            data.ncols()
        )));
    }
    let starts: Vec<usize> = (0..=t - config.window).step_by(config.step).collect();
    let outcomes: Vec<std::result::Result<WindowResult, WindowFailure>> = starts
        .par_iter()
        .map(|&start| {
            let end = start + config.window;
            let slice = data.rows(start, config.window).into_owned();
            analyze_window(&slice, groups, config)
                .map(|(_, radius, results)| WindowResult {
                    start,
                    end,
                    spectral_radius: radius,
                    horizons: results.into_iter().map(|(_, r)| r).collect(),
                })
                .map_err(|e| WindowFailure {
                    start,
                    end,
                    reason: e.to_string(),
                })
        })
        .collect();
    let mut windows = Vec::new();
    let mut failures = Vec::new();
    for o in outcomes {
        match o {
            Ok(w) => windows.push(w),
            Err(f) => failures.push(f),
        }
    }
    Ok(RollingSeries {
        horizons: config.horizons.clone(),
        windows,
        failures,
    })
}

/// Serde adapter storing a matrix as a list of rows.
pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        use serde::de::Error;
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(D::Error::custom("ragged matrix"));
        }
        Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
    }
}
