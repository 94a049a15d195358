//! Sure independence screening and the iterated screening/selection driver.
//!
//! [`iterated_sis`] alternates marginal screening with a penalized fit on the
//! screened columns. After each fit the unselected columns are re-ranked by
//! their correlation with the current residual and the screened set is
//! refilled up to `d_keep`, always keeping the current support. The loop
//! stops at a fixed point of the selected set (or of the screened set, which
//! implies the next fit would repeat) or after `max_iter` fits.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::penalty::{self, PenalizedFit, PenaltyFamily, Standardized};
use crate::varcore::{self, VarCoefficients};

/// Marginal scores `X' y`. `x` is expected to hold standardized columns.
pub fn sis_scores(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if x.nrows() != y.len() {
        return Err(Error::Shape(format!("design has {} rows, response {}", x.nrows(), y.len())));
    }
    if x.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("screening input".into()));
    }
    Ok(x.tr_mul(y))
}

/// Ridge scores `(X'X + lam I)^{-1} X' y`.
pub fn ridge_scores(x: &DMatrix<f64>, y: &DVector<f64>, lam: f64) -> Result<DVector<f64>> {
    if !(lam > 0.0 && lam.is_finite()) {
        return Err(Error::InvalidParameter(format!("ridge parameter must be > 0, got {lam}")));
    }
    let xty = sis_scores(x, y)?;
    let mut gram = x.tr_mul(x);
    for i in 0..gram.nrows() {
        gram[(i, i)] += lam;
    }
    let chol = gram
        .cholesky()
        .ok_or_else(|| Error::Singular("ridge system is not positive definite".into()))?;
    let out = chol.solve(&xty);
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ridge scores".into()));
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScreeningResult {
    pub scores: Vec<f64>,
    /// All indices by decreasing `|score|`, ties by ascending index.
    pub ranked: Vec<usize>,
    /// The first `d_keep` entries of `ranked`, in ascending index order.
    pub kept: Vec<usize>,
}

pub fn screen(scores: &[f64], d_keep: usize) -> Result<ScreeningResult> {
    let d = scores.len();
    if d_keep == 0 || d_keep > d {
        return Err(Error::InvalidParameter(format!("d_keep must lie in 1..={d}, got {d_keep}")));
    }
    let ranked = rank_by_magnitude(scores, 0..d);
    let mut kept = ranked[..d_keep].to_vec();
    kept.sort_unstable();
    Ok(ScreeningResult {
        scores: scores.to_vec(),
        ranked,
        kept,
    })
}

/// Indices of the `d_keep` largest `|score|`, ties by ascending index,
/// returned in ascending order.
pub fn sis_select(scores: &[f64], d_keep: usize) -> Result<Vec<usize>> {
    screen(scores, d_keep).map(|s| s.kept)
}

fn rank_by_magnitude(scores: &[f64], candidates: impl Iterator<Item = usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = candidates.collect();
    idx.sort_by(|&a, &b| scores[b].abs().total_cmp(&scores[a].abs()).then(a.cmp(&b)));
    idx
}

/// How the penalty level is chosen inside each penalized fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum LambdaRule {
    Fixed { lambda: f64 },
    /// BIC over a log-spaced path computed on the screened columns.
    Bic { n_points: usize, ratio: f64 },
}

impl Default for LambdaRule {
    fn default() -> Self {
        LambdaRule::Bic {
            n_points: 30,
            ratio: 1e-2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsisConfig {
    pub family: PenaltyFamily,
    pub lambda: LambdaRule,
    /// Screened set size; `None` means `floor(n / ln n)`.
    pub d_keep: Option<usize>,
    pub max_iter: usize,
    pub tol: f64,
    pub cd_max_iter: usize,
}

impl Default for IsisConfig {
    fn default() -> Self {
        Self {
            family: PenaltyFamily::Lasso,
            lambda: LambdaRule::default(),
            d_keep: None,
            max_iter: 10,
            tol: penalty::DEFAULT_TOL,
            cd_max_iter: penalty::DEFAULT_MAX_ITER,
        }
    }
}

impl IsisConfig {
    pub fn new(family: PenaltyFamily) -> Self {
        Self {
            family,
            ..Default::default()
        }
    }
}

/// `floor(n / ln n)`, at least 1.
pub fn default_d_keep(n: usize) -> usize {
    if n < 3 {
        return 1;
    }
    ((n as f64) / (n as f64).ln()).floor().max(1.0) as usize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Two consecutive fits selected the same set.
    SelectionFixedPoint,
    /// Re-screening reproduced the screened set, so the next fit would too.
    ScreenFixedPoint,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub screened: usize,
    pub selected: Vec<usize>,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl IterationTrace {
    pub fn iterations(&self) -> usize {
        self.records.len()
    }

    pub fn converged(&self) -> bool {
        self.termination != Termination::MaxIter
    }
}

#[derive(Debug, Clone)]
pub struct IsisFit {
    pub support: Vec<usize>,
    pub fit: PenalizedFit,
    pub trace: IterationTrace,
}

pub fn iterated_sis(x: &DMatrix<f64>, y: &DVector<f64>, config: &IsisConfig) -> Result<IsisFit> {
    let full = Standardized::new(x, y, None)?;
    iterated_sis_on(x, y, &full, config)
}

fn iterated_sis_on(x: &DMatrix<f64>, y: &DVector<f64>, full: &Standardized, config: &IsisConfig) -> Result<IsisFit> {
    let (n, d) = x.shape();
    if config.max_iter == 0 {
        return Err(Error::InvalidParameter("iterated screening needs max_iter >= 1".into()));
    }
    let d_keep = match config.d_keep {
        Some(0) => return Err(Error::InvalidParameter("d_keep must be >= 1".into())),
        Some(k) => k.min(d),
        None => default_d_keep(n).min(d),
    };

    // Scores live on the full column index; constant columns score zero.
    let scores_for = |resid: &DVector<f64>| -> Vec<f64> {
        let mut s = vec![0.0; d];
        for (c, &j) in full.columns.iter().enumerate() {
            s[j] = full.x.column(c).dot(resid);
        }
        s
    };

    let mut screened = sis_select(&scores_for(&full.y), d_keep)?;
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut last_fit: Option<PenalizedFit> = None;
    let mut termination = Termination::MaxIter;

    for _ in 0..config.max_iter {
        let (fit, lambda) = penalized_step(x, y, &screened, config)?;
        let selected = fit.support();
        let repeat = records.last().is_some_and(|r| r.selected == selected);
        records.push(IterationRecord {
            screened: screened.len(),
            selected: selected.clone(),
            lambda,
        });

        // residual of the current fit, on the centered scale used for scoring
        let mut resid = y - fit.predict(x);
        let m = resid.mean();
        resid.add_scalar_mut(-m);
        last_fit = Some(fit);
        if repeat {
            termination = Termination::SelectionFixedPoint;
            break;
        }

        let mut next = selected.clone();
        if next.len() < d_keep {
            let scores = scores_for(&resid);
            let pool = rank_by_magnitude(&scores, (0..d).filter(|j| selected.binary_search(j).is_err()));
            next.extend(pool.into_iter().take(d_keep - selected.len()));
            next.sort_unstable();
        }
        if next == screened {
            termination = Termination::ScreenFixedPoint;
            break;
        }
        screened = next;
    }

    let fit = last_fit.expect("at least one iteration");
    Ok(IsisFit {
        support: fit.support(),
        fit,
        trace: IterationTrace { records, termination },
    })
}

fn penalized_step(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    screened: &[usize],
    config: &IsisConfig,
) -> Result<(PenalizedFit, f64)> {
    let prob = Standardized::new(x, y, Some(screened))?;
    match config.lambda {
        LambdaRule::Fixed { lambda } => {
            let spec = penalty::PenaltySpec {
                kind: config.family.with_lambda(lambda),
                tol: config.tol,
                max_iter: config.cd_max_iter,
            };
            Ok((penalty::fit_penalized(x, y, &spec, Some(screened))?, lambda))
        }
        LambdaRule::Bic { n_points, ratio } => match penalty::path_for(&prob, n_points, ratio) {
            Ok(path) => {
                let sel = penalty::select_lambda_on(&prob, config.family, &path, config.tol, config.cd_max_iter)?;
                Ok((sel.fit, sel.lambda))
            }
            // Nothing left to explain: the null model is the fit.
            Err(Error::Degenerate(_)) => {
                let spec = penalty::PenaltySpec {
                    kind: config.family.with_lambda(f64::MAX / 4.0),
                    tol: config.tol,
                    max_iter: config.cd_max_iter,
                };
                Ok((penalty::fit_penalized(x, y, &spec, Some(screened))?, f64::INFINITY))
            }
            Err(e) => Err(e),
        },
    }
}

/// Equation-by-equation sparse VAR fit.
#[derive(Debug, Clone)]
pub struct SparseVarFit {
    pub coeffs: VarCoefficients,
    pub traces: Vec<IterationTrace>,
    pub residuals: DMatrix<f64>,
    pub sigma: DMatrix<f64>,
}

impl SparseVarFit {
    pub fn converged(&self) -> bool {
        self.traces.iter().all(IterationTrace::converged)
    }
}

/// Runs [`iterated_sis`] on each VAR equation over the shared lagged design.
pub fn fit_sparse_var(data: &DMatrix<f64>, p: usize, config: &IsisConfig) -> Result<SparseVarFit> {
    let design = varcore::build_design(data, p)?;
    let x = design.lagged();
    let k = data.ncols();
    let fits = (0..k)
        .into_par_iter()
        .map(|eq| {
            let y = design.y.column(eq).into_owned();
            iterated_sis(&x, &y, config)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut traces = Vec::with_capacity(k);
    let rows: Vec<DVector<f64>> = fits
        .into_iter()
        .map(|f| {
            traces.push(f.trace);
            let mut row = DVector::zeros(1 + x.ncols());
            row[0] = f.fit.intercept;
            row.rows_mut(1, x.ncols()).copy_from(&f.fit.beta);
            row
        })
        .collect();
    let coeffs = VarCoefficients::from_equation_rows(k, p, &rows)?;
    let residuals = varcore::residuals_on_design(&design, &coeffs);
    let sigma = varcore::residual_covariance(&varcore::ResidualSet { u: residuals.clone() })?;
    Ok(SparseVarFit {
        coeffs,
        traces,
        residuals,
        sigma,
    })
}
