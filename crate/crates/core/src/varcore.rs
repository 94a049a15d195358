//! VAR(p) representation: design matrices, residuals, moving-average
//! coefficients, stability, simulation and one-step forecasts.
//!
//! Observations are `T x K` matrices with one row per time point, oldest
//! first.

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataset::{ReturnPanel, Transform};
use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarSpec {
    pub k: usize,
    pub p: usize,
    pub include_intercept: bool,
}

impl VarSpec {
    pub fn new(k: usize, p: usize) -> Result<Self> {
        if k == 0 || p == 0 {
            return Err(Error::InvalidParameter(format!("VAR needs K >= 1 and p >= 1 (got K={k}, p={p})")));
        }
        Ok(Self {
            k,
            p,
            include_intercept: true,
        })
    }

    /// Number of regressors per equation, intercept included.
    pub fn n_regressors(&self) -> usize {
        usize::from(self.include_intercept) + self.k * self.p
    }
}

/// Intercept `nu` and lag matrices `A_1..A_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct VarCoefficients {
    pub nu: DVector<f64>,
    pub lags: Vec<DMatrix<f64>>,
}

impl VarCoefficients {
    pub fn new(nu: DVector<f64>, lags: Vec<DMatrix<f64>>) -> Result<Self> {
        let k = nu.len();
        if k == 0 || lags.is_empty() {
            return Err(Error::InvalidParameter("VAR needs K >= 1 and p >= 1".into()));
        }
        for (i, a) in lags.iter().enumerate() {
            if a.shape() != (k, k) {
                return Err(Error::Shape(format!(
                    "lag matrix A_{} is {}x{}, expected {k}x{k}",
                    i + 1,
                    a.nrows(),
                    a.ncols()
                )));
            }
        }
        Ok(Self { nu, lags })
    }

    pub fn zeros(k: usize, p: usize) -> Self {
        Self {
            nu: DVector::zeros(k),
            lags: vec![DMatrix::zeros(k, k); p],
        }
    }

    pub fn k(&self) -> usize {
        self.nu.len()
    }

    pub fn p(&self) -> usize {
        self.lags.len()
    }

    pub fn spec(&self) -> VarSpec {
        VarSpec {
            k: self.k(),
            p: self.p(),
            include_intercept: true,
        }
    }

    /// Coefficient `(nu_k, row k of A_1, ..., row k of A_p)`, aligned with the
    /// columns of [`Design::z`].
    pub fn equation_row(&self, eq: usize) -> DVector<f64> {
        let k = self.k();
        let mut row = DVector::zeros(1 + k * self.p());
        row[0] = self.nu[eq];
        for (l, a) in self.lags.iter().enumerate() {
            for j in 0..k {
                row[1 + l * k + j] = a[(eq, j)];
            }
        }
        row
    }

    /// Inverse of [`Self::equation_row`]: assembles coefficients from one
    /// regressor-aligned row per equation.
    pub fn from_equation_rows(k: usize, p: usize, rows: &[DVector<f64>]) -> Result<Self> {
        if rows.len() != k || rows.iter().any(|r| r.len() != 1 + k * p) {
            return Err(Error::Shape(format!("expected {k} rows of length {}", 1 + k * p)));
        }
        let nu = DVector::from_iterator(k, rows.iter().map(|r| r[0]));
        let lags = (0..p)
            .map(|l| DMatrix::from_fn(k, k, |i, j| rows[i][1 + l * k + j]))
            .collect();
        Ok(Self { nu, lags })
    }

    /// Boolean support of the lag matrices (`true` = nonzero).
    pub fn support(&self) -> Vec<DMatrix<bool>> {
        self.lags.iter().map(|a| a.map(|v| v != 0.0)).collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.lags.iter().map(|a| a.iter().filter(|v| **v != 0.0).count()).sum()
    }

    /// Kp x Kp companion matrix.
    pub fn companion(&self) -> DMatrix<f64> {
        let (k, p) = (self.k(), self.p());
        let mut c = DMatrix::zeros(k * p, k * p);
        for (l, a) in self.lags.iter().enumerate() {
            c.view_mut((0, l * k), (k, k)).copy_from(a);
        }
        for i in k..k * p {
            c[(i, i - k)] = 1.0;
        }
        c
    }
}

#[derive(Serialize, Deserialize)]
struct CoefficientsDoc {
    #[serde(rename = "K")]
    k: usize,
    p: usize,
    nu: Vec<f64>,
    lags: Vec<Vec<Vec<f64>>>,
}

impl Serialize for VarCoefficients {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        CoefficientsDoc {
            k: self.k(),
            p: self.p(),
            nu: self.nu.iter().copied().collect(),
            lags: self
                .lags
                .iter()
                .map(|a| a.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for VarCoefficients {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let doc = CoefficientsDoc::deserialize(d)?;
        if doc.nu.len() != doc.k || doc.lags.len() != doc.p {
            return Err(D::Error::custom("nu/lags lengths disagree with K/p"));
        }
        let mut lags = Vec::with_capacity(doc.p);
        for rows in &doc.lags {
            if rows.len() != doc.k || rows.iter().any(|r| r.len() != doc.k) {
                return Err(D::Error::custom("lag matrix is not K x K"));
            }
            lags.push(DMatrix::from_fn(doc.k, doc.k, |i, j| rows[i][j]));
        }
        VarCoefficients::new(DVector::from_vec(doc.nu), lags).map_err(D::Error::custom)
    }
}

/// Regression layout of a VAR(p): `y` holds targets, `z` holds
/// `(1, y_{t-1}, ..., y_{t-p})` per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub y: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub p: usize,
}

impl Design {
    /// Regressors without the leading intercept column.
    pub fn lagged(&self) -> DMatrix<f64> {
        self.z.columns(1, self.z.ncols() - 1).into_owned()
    }
}

pub fn build_design(data: &DMatrix<f64>, p: usize) -> Result<Design> {
    let (t, k) = data.shape();
    if p == 0 {
        return Err(Error::InvalidParameter("lag order must be >= 1".into()));
    }
    if t <= p {
        return Err(Error::InsufficientData(format!(
            "VAR({p}) needs more than {p} observations, got {t}"
        )));
    }
    let n = t - p;
    let y = data.rows(p, n).into_owned();
    let mut z = DMatrix::zeros(n, 1 + k * p);
    for row in 0..n {
        z[(row, 0)] = 1.0;
        for l in 0..p {
            for j in 0..k {
                z[(row, 1 + l * k + j)] = data[(p + row - l - 1, j)];
            }
        }
    }
    Ok(Design { y, z, p })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResidualSet {
    pub u: DMatrix<f64>,
}

/// `u_t = y_t - nu - sum_i A_i y_{t-i}` for `t = p..T`.
pub fn residuals(data: &DMatrix<f64>, coeffs: &VarCoefficients) -> Result<ResidualSet> {
    if data.ncols() != coeffs.k() {
        return Err(Error::Shape(format!(
            "data has {} variables, coefficients have {}",
            data.ncols(),
            coeffs.k()
        )));
    }
    let design = build_design(data, coeffs.p())?;
    let u = residuals_on_design(&design, coeffs);
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("residuals".into()));
    }
    Ok(ResidualSet { u })
}

pub(crate) fn residuals_on_design(design: &Design, coeffs: &VarCoefficients) -> DMatrix<f64> {
    let k = coeffs.k();
    let b = DMatrix::from_fn(design.z.ncols(), k, |r, eq| {
        if r == 0 {
            coeffs.nu[eq]
        } else {
            let (l, j) = ((r - 1) / k, (r - 1) % k);
            coeffs.lags[l][(eq, j)]
        }
    });
    &design.y - &design.z * b
}

/// `(1 / n) * sum_t u_t u_t^T` over the `n` residual rows.
pub fn residual_covariance(res: &ResidualSet) -> Result<DMatrix<f64>> {
    let n = res.u.nrows();
    if n == 0 {
        return Err(Error::InsufficientData("empty residual set".into()));
    }
    let mut h = res.u.tr_mul(&res.u) / n as f64;
    // exact symmetry
    for i in 0..h.nrows() {
        for j in 0..i {
            let m = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = m;
            h[(j, i)] = m;
        }
    }
    Ok(h)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaCoefficients {
    /// `B_0 .. B_{Q-1}`.
    pub terms: Vec<DMatrix<f64>>,
}

impl MaCoefficients {
    pub fn horizon(&self) -> usize {
        self.terms.len()
    }
}

/// `B_0 = I`, `B_i = sum_{j=1..min(i,p)} B_{i-j} A_j`.
pub fn ma_coefficients(coeffs: &VarCoefficients, horizon: usize) -> Result<MaCoefficients> {
    if horizon == 0 {
        return Err(Error::InvalidParameter("horizon must be >= 1".into()));
    }
    let k = coeffs.k();
    let mut terms: Vec<DMatrix<f64>> = Vec::with_capacity(horizon);
    terms.push(DMatrix::identity(k, k));
    for i in 1..horizon {
        let mut b = DMatrix::zeros(k, k);
        for (j, a) in coeffs.lags.iter().enumerate().take(i) {
            b.gemm(1.0, &terms[i - j - 1], a, 1.0);
        }
        terms.push(b);
    }
    Ok(MaCoefficients { terms })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stability {
    pub stable: bool,
    pub spectral_radius: f64,
}

/// Stable iff every companion eigenvalue lies strictly inside the unit circle.
pub fn is_stable(coeffs: &VarCoefficients) -> Stability {
    let spectral_radius = linalg::spectral_radius(&coeffs.companion());
    Stability {
        stable: spectral_radius < 1.0,
        spectral_radius,
    }
}

/// Gaussian VAR simulation.
///
/// Innovations are `L z` with `L` the lower Cholesky factor of `sigma` and
/// `z` standard normal draws from a ChaCha8 stream seeded by `seed`. The
/// recursion starts at the unconditional mean and the first `burn_in` draws
/// are discarded. Returned rows carry consecutive daily dates from
/// 2000-01-01 and symbols `y1..yK`.
pub fn simulate(
    coeffs: &VarCoefficients,
    sigma: &DMatrix<f64>,
    t: usize,
    burn_in: usize,
    seed: u64,
) -> Result<ReturnPanel> {
    let data = simulate_matrix(coeffs, sigma, t, burn_in, seed)?;
    let k = coeffs.k();
    let start = NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date");
    let dates = (0..t).map(|i| start + chrono::Days::new(i as u64)).collect();
    let symbols = (1..=k).map(|i| format!("y{i}")).collect();
    ReturnPanel::from_values(dates, symbols, data, Transform::Diff)
}

/// [`simulate`] without the panel wrapper.
pub fn simulate_matrix(
    coeffs: &VarCoefficients,
    sigma: &DMatrix<f64>,
    t: usize,
    burn_in: usize,
    seed: u64,
) -> Result<DMatrix<f64>> {
    let k = coeffs.k();
    if sigma.shape() != (k, k) {
        return Err(Error::Shape(format!("sigma must be {k}x{k}")));
    }
    let chol = linalg::cholesky_lower(sigma, "innovation covariance")?;
    let stability = is_stable(coeffs);
    if !stability.stable {
        return Err(Error::Unstable(stability.spectral_radius));
    }
    let p = coeffs.p();
    let sum_a = coeffs.lags.iter().fold(DMatrix::identity(k, k), |acc, a| acc - a);
    let mean = sum_a
        .lu()
        .solve(&coeffs.nu)
        .ok_or_else(|| Error::Singular("I - sum A_i".into()))?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let total = burn_in + t;
    let mut history: Vec<DVector<f64>> = vec![mean.clone(); p];
    let mut out = DMatrix::zeros(t, k);
    let mut z = DVector::zeros(k);
    for step in 0..total {
        for zi in z.iter_mut() {
            *zi = StandardNormal.sample(&mut rng);
        }
        let mut y = &coeffs.nu + &chol * &z;
        for (l, a) in coeffs.lags.iter().enumerate() {
            y.gemv(1.0, a, &history[history.len() - 1 - l], 1.0);
        }
        if step >= burn_in {
            out.set_row(step - burn_in, &y.transpose());
        }
        history.remove(0);
        history.push(y);
    }
    Ok(out)
}

/// `nu + sum_i A_i y_{t+1-i}` using the last `p` rows of `history`.
pub fn forecast_one_step(coeffs: &VarCoefficients, history: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (rows, k) = history.shape();
    let p = coeffs.p();
    if k != coeffs.k() {
        return Err(Error::Shape(format!("history has {k} variables, coefficients have {}", coeffs.k())));
    }
    if rows < p {
        return Err(Error::InsufficientData(format!("forecast needs {p} rows of history, got {rows}")));
    }
    let mut y = coeffs.nu.clone();
    for (l, a) in coeffs.lags.iter().enumerate() {
        let lagged = history.row(rows - 1 - l).transpose();
        y.gemv(1.0, a, &lagged, 1.0);
    }
    Ok(y)
}

/// Equation-by-equation least squares on the full design.
pub fn fit_ols(data: &DMatrix<f64>, p: usize) -> Result<VarCoefficients> {
    let design = build_design(data, p)?;
    let k = data.ncols();
    let rows = (0..k)
        .map(|eq| linalg::least_squares(&design.z, &design.y.column(eq).into_owned()))
        .collect::<Result<Vec<_>>>()?;
    VarCoefficients::from_equation_rows(k, p, &rows)
}
