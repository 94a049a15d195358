use nalgebra::DMatrix;
use sparsevar_core::connectedness::{self, RollingConfig};
use sparsevar_core::dataset::{self, GroupMap, ImputeConfig, Transform};
use sparsevar_core::screening::{self, IsisConfig};
use sparsevar_core::synthetic::{self, SparseVarDesign};
use sparsevar_core::varcore;

fn design(k: usize, p: usize) -> SparseVarDesign {
    SparseVarDesign {
        k,
        p,
        density: 0.2,
        scale: 0.4,
        noise_sd: 1.0,
    }
}

#[test]
fn csv_panel_with_gaps_runs_through_to_connectedness() {
    let truth = synthetic::draw_sparse_var(&design(6, 1), 21).unwrap();
    let returns = varcore::simulate(&truth.coeffs, &truth.sigma, 250, 50, 22).unwrap();
    let mut levels = DMatrix::from_element(251, 6, 50.0);
    for t in 0..250 {
        for j in 0..6 {
            levels[(t + 1, j)] = levels[(t, j)] + returns.values()[(t, j)];
        }
    }
    // knock out a scattering of prices
    for (t, j) in [(10, 0), (11, 0), (40, 3), (100, 5), (180, 2), (181, 4)] {
        levels[(t, j)] = f64::NAN;
    }
    let mut dates = vec![returns.dates()[0].pred_opt().unwrap()];
    dates.extend_from_slice(returns.dates());
    let mut buf = Vec::new();
    dataset::write_panel(&dates, returns.symbols(), &levels, &mut buf).unwrap();

    let panel = dataset::load_panel(buf.as_slice()).unwrap();
    assert_eq!(panel.missing_count(), 6);
    let diffed = dataset::difference(&panel, Transform::Diff).unwrap();
    assert!(!diffed.is_complete());
    let (filled, report) = dataset::impute(&diffed, ImputeConfig { seed: 5, ..Default::default() }).unwrap();
    assert!(filled.is_complete());
    assert_eq!(report.imputed_per_column.iter().sum::<usize>(), diffed.missing_mask().iter().filter(|m| **m).count());
    for j in 0..6 {
        let observed: Vec<f64> = (0..diffed.n_obs())
            .filter(|&t| !diffed.missing_mask()[(t, j)])
            .map(|t| diffed.values()[(t, j)])
            .collect();
        let lo = observed.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = observed.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        for t in 0..diffed.n_obs() {
            if diffed.missing_mask()[(t, j)] {
                let v = filled.values()[(t, j)];
                assert!(v >= lo && v <= hi, "imputed {v} outside observed range");
            }
        }
    }

    let fit = screening::fit_sparse_var(filled.values(), 1, &IsisConfig::default()).unwrap();
    assert!(fit.converged());
    let table = connectedness::fevd(&fit.coeffs, &fit.sigma, 10).unwrap();
    let summary = connectedness::summarize(&table);
    assert!(summary.net.iter().sum::<f64>().abs() < 1e-12);
}

#[test]
fn connectedness_is_invariant_to_rescaling_the_data() {
    let truth = synthetic::draw_sparse_var(&design(5, 2), 31).unwrap();
    let data = varcore::simulate_matrix(&truth.coeffs, &truth.sigma, 300, 100, 32).unwrap();
    let a = screening::fit_sparse_var(&data, 2, &IsisConfig::default()).unwrap();
    let b = screening::fit_sparse_var(&(&data * 7.5), 2, &IsisConfig::default()).unwrap();
    assert_eq!(a.coeffs.support(), b.coeffs.support());
    let ta = connectedness::fevd(&a.coeffs, &a.sigma, 10).unwrap();
    let tb = connectedness::fevd(&b.coeffs, &b.sigma, 10).unwrap();
    assert!((ta.theta - tb.theta).amax() < 1e-8);
}

#[test]
fn long_horizons_converge_on_stable_draws() {
    for seed in 0..10 {
        let truth = synthetic::draw_sparse_var(&design(4, 2), 40 + seed).unwrap();
        if truth.spectral_radius >= 0.9 {
            continue;
        }
        let sigma = DMatrix::from_fn(4, 4, |i, j| if i == j { 1.0 } else { 0.3 });
        let t30 = connectedness::fevd(&truth.coeffs, &sigma, 30).unwrap();
        let t40 = connectedness::fevd(&truth.coeffs, &sigma, 40).unwrap();
        assert!((t40.theta - t30.theta).amax() < 1e-6);
    }
}

fn slope_t_stat(y: &[f64]) -> f64 {
    let n = y.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = y.iter().sum::<f64>() / n;
    let sxx: f64 = (0..y.len()).map(|i| (i as f64 - xm).powi(2)).sum();
    let sxy: f64 = y.iter().enumerate().map(|(i, v)| (i as f64 - xm) * (v - ym)).sum();
    let slope = sxy / sxx;
    let resid: f64 = y
        .iter()
        .enumerate()
        .map(|(i, v)| (v - ym - slope * (i as f64 - xm)).powi(2))
        .sum();
    slope / (resid / (n - 2.0) / sxx).sqrt()
}

#[test]
fn rolling_totals_on_stationary_data_have_no_trend() {
    let truth = synthetic::draw_sparse_var(&design(5, 1), 50).unwrap();
    let window = 80;
    let step = window;
    let data = varcore::simulate_matrix(&truth.coeffs, &truth.sigma, window + 19 * step, 100, 51).unwrap();
    let names: Vec<String> = (0..5).map(|i| format!("v{i}")).collect();
    let config = RollingConfig {
        window,
        step,
        p: 1,
        ..Default::default()
    };
    let series = connectedness::rolling_connectedness(&data, &GroupMap::singletons(&names), &config).unwrap();
    assert_eq!(series.windows.len(), 20);
    let totals = series.totals(10).unwrap();
    let t = slope_t_stat(&totals);
    assert!(t.abs() < 2.5, "trend t-statistic {t}");
}
