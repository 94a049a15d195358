//! Information criteria, lag-order selection, rolling out-of-sample forecast
//! evaluation and the Welch two-sample t-test.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::beta::beta_reg;

use crate::error::{Error, Result};
use crate::linalg;
use crate::screening::{self, IsisConfig};
use crate::varcore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Criteria {
    pub aic: f64,
    pub hq: f64,
    pub bic: f64,
}

/// `log|H| + c_T * df` with `c_T` equal to `2/T`, `2 log log T / T` and
/// `log T / T` for AIC, HQ and BIC.
pub fn criteria_with_df(h: &DMatrix<f64>, df: f64, t: usize) -> Result<Criteria> {
    if t < 3 {
        return Err(Error::InsufficientData(format!("criteria need T >= 3, got {t}")));
    }
    let log_det = linalg::log_det_spd(h)?;
    let tf = t as f64;
    Ok(Criteria {
        aic: log_det + 2.0 / tf * df,
        hq: log_det + 2.0 * tf.ln().ln() / tf * df,
        bic: log_det + tf.ln() / tf * df,
    })
}

/// Criteria with the nominal parameter count `p K^2`.
pub fn information_criteria(h: &DMatrix<f64>, k: usize, p: usize, t: usize) -> Result<Criteria> {
    if h.shape() != (k, k) {
        return Err(Error::Shape(format!("H is {}x{}, expected {k}x{k}", h.nrows(), h.ncols())));
    }
    criteria_with_df(h, (p * k * k) as f64, t)
}

/// Parameter count used by the criteria.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DfMode {
    /// `p K^2`.
    #[default]
    Nominal,
    /// Number of nonzero lag coefficients.
    Sparse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriteriaRow {
    pub estimator: String,
    pub p: usize,
    pub aic: f64,
    pub hq: f64,
    pub bic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LagSelection {
    pub rows: Vec<CriteriaRow>,
    pub best_aic: usize,
    pub best_hq: usize,
    pub best_bic: usize,
    /// Lag orders whose estimation failed, with the reason.
    pub failures: Vec<(usize, String)>,
}

pub fn estimator_tag(config: &IsisConfig) -> String {
    format!("iterated-sis-{}", config.family.name())
}

/// Fits every lag order `1..=p_max` and picks the minimizer of each
/// criterion. Each order uses its own effective sample `T - p`.
pub fn select_lag(data: &DMatrix<f64>, p_max: usize, config: &IsisConfig, df_mode: DfMode) -> Result<LagSelection> {
    let (t, k) = data.shape();
    if p_max == 0 {
        return Err(Error::InvalidParameter("p_max must be >= 1".into()));
    }
    if t <= p_max {
        return Err(Error::InsufficientData(format!("need T > p_max ({t} <= {p_max})")));
    }
    let tag = estimator_tag(config);
    let outcomes: Vec<(usize, Result<CriteriaRow>)> = (1..=p_max)
        .into_par_iter()
        .map(|p| {
            let row = screening::fit_sparse_var(data, p, config).and_then(|fit| {
                let df = match df_mode {
                    DfMode::Nominal => (p * k * k) as f64,
                    DfMode::Sparse => fit.coeffs.nonzero_count() as f64,
                };
                let c = criteria_with_df(&fit.sigma, df, t - p)?;
                Ok(CriteriaRow {
                    estimator: tag.clone(),
                    p,
                    aic: c.aic,
                    hq: c.hq,
                    bic: c.bic,
                })
            });
            (p, row)
        })
        .collect();
    let mut rows = Vec::new();
    let mut failures = Vec::new();
    for (p, r) in outcomes {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => failures.push((p, e.to_string())),
        }
    }
    if rows.is_empty() {
        return Err(Error::Degenerate(format!("estimation failed for every lag order: {failures:?}")));
    }
    let argmin = |f: fn(&CriteriaRow) -> f64| {
        rows.iter()
            .min_by(|a, b| f(a).total_cmp(&f(b)).then(a.p.cmp(&b.p)))
            .map(|r| r.p)
            .expect("rows nonempty")
    };
    Ok(LagSelection {
        best_aic: argmin(|r| r.aic),
        best_hq: argmin(|r| r.hq),
        best_bic: argmin(|r| r.bic),
        rows,
        failures,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmseReport {
    pub estimator: String,
    pub p: usize,
    pub fmse: f64,
    /// `||y_hat_t - y_t||^2 / K` per out-of-sample step.
    pub step_errors: Vec<f64>,
}

/// Expanding-window one-step forecast evaluation.
///
/// For every `t >= split_index` the model is refitted on rows `0..t` and
/// forecasts row `t`.
pub fn rolling_fmse(data: &DMatrix<f64>, split_index: usize, config: &IsisConfig, p: usize) -> Result<FmseReport> {
    let (t, k) = data.shape();
    if p == 0 {
        return Err(Error::InvalidParameter("p must be >= 1".into()));
    }
    if split_index < p + 1 || split_index >= t {
        return Err(Error::InvalidParameter(format!(
            "split index {split_index} must leave >= {} in-sample rows and >= 1 out-of-sample row (T = {t})",
            p + 1
        )));
    }
    let step_errors = (split_index..t)
        .into_par_iter()
        .map(|step| {
            let history = data.rows(0, step).into_owned();
            let fit = screening::fit_sparse_var(&history, p, config)?;
            let forecast = varcore::forecast_one_step(&fit.coeffs, &history)?;
            let err = (0..k).map(|j| (forecast[j] - data[(step, j)]).powi(2)).sum::<f64>() / k as f64;
            Ok(err)
        })
        .collect::<Result<Vec<f64>>>()?;
    let fmse = step_errors.iter().sum::<f64>() / step_errors.len() as f64;
    Ok(FmseReport {
        estimator: estimator_tag(config),
        p,
        fmse,
        step_errors,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchTest {
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Two-sided Welch two-sample t-test of equal means.
pub fn welch_t_test(a: &[f64], b: &[f64]) -> Result<WelchTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "Welch test needs >= 2 observations per sample (got {} and {})",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("Welch test sample".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let df = na + nb - 2.0;
        return Ok(if ma == mb {
            WelchTest { t: 0.0, df, p_value: 1.0 }
        } else {
            WelchTest {
                t: f64::INFINITY.copysign(ma - mb),
                df,
                p_value: 0.0,
            }
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let df = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let p_value = student_t_two_sided(t, df);
    Ok(WelchTest { t, df, p_value })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t == 0.0 {
        return 1.0;
    }
    let x = df / (df + t * t);
    beta_reg(df / 2.0, 0.5, x).clamp(0.0, 1.0)
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
