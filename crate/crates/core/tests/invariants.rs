//! Cross-module properties: catalog consistency, cell-problem identities,
//! likelihood limits and estimator behavior on moderate ensembles.

use multiscale_mle::homogenize::{
    a_infinity, asymptotic_limits, averaged_coefficients, calibrate_e_infinity_sign,
    homogenized_coefficients, solve_cell_problem, CalibrationSettings, SignChoice,
};
use multiscale_mle::likelihood::{
    ergodic_average_diagnostic, loglik_continuous, mle_linear, mle_scan, LikelihoodKind,
};
use multiscale_mle::models::{check_centering, CatalogEntry, CosineSeries, ModelFamily};
use multiscale_mle::simulator::{
    run_replicates, simulate_coarse, stationary_coarse_start, ReplicateSpec,
};
use proptest::prelude::*;

fn bessel_i0(x: f64) -> f64 {
    let (mut term, mut sum) = (1.0, 1.0);
    for k in 1..300 {
        term *= (x / 2.0).powi(2) / (k as f64).powi(2);
        sum += term;
    }
    sum
}

fn entry(family: ModelFamily, p: Option<CosineSeries>) -> CatalogEntry {
    CatalogEntry::build(family, 1.0, 0.1, 1.0, p).unwrap()
}

#[test]
fn coarse_drift_matches_effective_drift_on_grid() {
    let xs: Vec<f64> = (-8..=8).map(|i| 0.25 * i as f64).collect();
    let avg = entry(ModelFamily::AvgOuModulated, None);
    let (f, k) = averaged_coefficients(&avg.multiscale, 1.0, &xs).unwrap();
    for (i, &x) in xs.iter().enumerate() {
        assert!((f[i] - avg.coarse.drift_at(x, 1.0)).abs() < 1e-6);
        assert!((k[i] - avg.coarse_diffusion()).abs() < 1e-6);
    }
    for (family, p) in [
        (ModelFamily::LangevinHighFriction, None),
        (ModelFamily::MultiscalePotential1D, Some(CosineSeries::new(vec![1.0, 0.3]))),
    ] {
        let e = entry(family, p);
        let h = homogenized_coefficients(&e, 1.0, &xs).unwrap();
        for (i, &x) in xs.iter().enumerate() {
            assert!((h.drift[i] - e.coarse.drift_at(x, 1.0)).abs() < 1e-6, "{family}");
        }
        assert!((h.diffusion - e.coarse_diffusion()).abs() < 1e-6);
    }
}

#[test]
fn centering_holds_for_homogenization_entries() {
    let grid = [-2.0, -1.0, 0.0, 1.0, 2.0];
    let lang = entry(ModelFamily::LangevinHighFriction, None);
    assert!(check_centering(&lang.multiscale, &grid, 1e-10).unwrap());
    let msp = entry(ModelFamily::MultiscalePotential1D, Some(CosineSeries::new(vec![0.7, -0.2])));
    assert!(check_centering(&msp.multiscale, &grid, 1e-10).unwrap());
}

#[test]
fn cell_problem_against_bessel_series() {
    for beta in [0.5, 1.0, 2.0, 4.0, 8.0] {
        let cell = solve_cell_problem(&CosineSeries::single(1.0), beta, 1024).unwrap();
        let i0 = bessel_i0(beta);
        assert!((cell.z_p / i0 - 1.0).abs() < 1e-12);
        assert!((cell.k * i0 * i0 - 1.0).abs() < 1e-10);
    }
    // K at β = 4 is 1/I0(4)² = 0.0078288...
    let cell = solve_cell_problem(&CosineSeries::single(1.0), 4.0, 1024).unwrap();
    assert!((cell.k - 0.007_828_8).abs() < 1e-7);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn cauchy_schwarz_and_identities(
        coeffs in prop::collection::vec(-1.5f64..1.5, 1..5),
        beta in 0.2f64..5.0,
    ) {
        let p = CosineSeries::new(coeffs);
        let cell = solve_cell_problem(&p, beta, 1024).unwrap();
        prop_assert!(cell.z_p * cell.z_hat_p >= 1.0 - 1e-14);
        prop_assert!((cell.k_from_corrector * cell.z_p * cell.z_hat_p - 1.0).abs() < 1e-8);
        let coarse = solve_cell_problem(&p, beta, 2048).unwrap();
        prop_assert!((coarse.k - cell.k).abs() < 1e-8);
        prop_assert!((coarse.z_p - cell.z_p).abs() < 1e-8 * cell.z_p.max(1.0));
    }

    #[test]
    fn constant_potential_has_unit_product(c in -3.0f64..3.0, beta in 0.1f64..5.0) {
        // p(y) = c cos(2π·0·y) is not expressible; a zero series shifted is flat.
        let cell = multiscale_mle::homogenize::solve_cell_problem_fn(|_| c, beta, 64).unwrap();
        prop_assert!((cell.z_p * cell.z_hat_p - 1.0).abs() < 1e-12);
    }
}

#[test]
fn limit_functions_are_additive_and_centered() {
    for (family, p) in [
        (ModelFamily::AvgOuModulated, None),
        (ModelFamily::LangevinHighFriction, None),
        (ModelFamily::MultiscalePotential1D, Some(CosineSeries::single(1.0))),
    ] {
        let e = entry(family, p);
        let lim = asymptotic_limits(&e, 1.0, SignChoice::Formula).unwrap();
        for i in 1..20 {
            let theta = 0.2 * i as f64;
            let d = lim.full_limit(theta).unwrap() - lim.coarse_limit(theta) - lim.e_infinity(theta).unwrap();
            assert!(d.abs() < 1e-8);
        }
        assert!((lim.coarse_argmax().argmax - 1.0).abs() < 1e-5, "{family}");
    }
}

#[test]
fn a_infinity_for_multiscale_potential() {
    let e = entry(ModelFamily::MultiscalePotential1D, Some(CosineSeries::single(1.0)));
    let k = bessel_i0(1.0).powi(-2);
    assert!((a_infinity(&e.coarse, 1.0).unwrap() - 0.5 * k).abs() < 1e-8);
}

#[test]
fn coarse_ou_likelihood_rate_and_estimates() {
    let e = entry(ModelFamily::AvgOuModulated, None);
    let spec = ReplicateSpec::new(17, 8);
    let rates = run_replicates(&spec, |seed| {
        let x0 = stationary_coarse_start(&e.coarse, 1.0, seed)?;
        let path = simulate_coarse(&e.coarse, 1.0, 1000.0, 1e-3, x0, seed)?;
        let lin = mle_linear(&path, &e.coarse)?;
        let scan = mle_scan(&path, &e.coarse, LikelihoodKind::Continuous)?;
        assert!((lin.theta_hat - scan.theta_hat).abs() < 1e-4);
        assert!((lin.theta_hat - 1.0).abs() < 0.14);
        Ok(loglik_continuous(&path, &e.coarse, 1.0)? / path.horizon())
    })
    .unwrap();
    let mean = rates.iter().sum::<f64>() / rates.len() as f64;
    assert!((mean - 0.25).abs() < 0.03, "mean rate {mean}");
}

#[test]
fn ergodic_mean_of_x_squared() {
    let e = entry(ModelFamily::AvgOuModulated, None);
    let paths: Vec<_> = (0..16u64)
        .map(|seed| {
            let x0 = stationary_coarse_start(&e.coarse, 1.0, seed).unwrap();
            simulate_coarse(&e.coarse, 1.0, 200.0, 1e-2, x0, seed).unwrap()
        })
        .collect();
    let d = ergodic_average_diagnostic(&paths, |x| x * x).unwrap();
    // Stationary variance K²/(2θ) = 1
    assert!((d.mean - 1.0).abs() < 0.1, "{}", d.mean);
    assert!(d.rows.windows(2).all(|w| w[0].horizon > w[1].horizon));
}

#[test]
fn langevin_bias_calibration_is_negative() {
    let e = CatalogEntry::build(ModelFamily::LangevinHighFriction, 1.0, 0.1, 1.0, None).unwrap();
    let settings = CalibrationSettings {
        t_final: 100.0,
        resolution_factor: 50,
        coarse_dt: 1e-2,
        replicates: ReplicateSpec::new(3, 8),
    };
    let r = calibrate_e_infinity_sign(&e, 1.0, &settings).unwrap();
    assert_eq!(r.sign, Some(-1.0));
    assert_eq!(r.agrees_with_formula(), Some(true));
    assert!((r.ratio - 1.0).abs() < 0.2, "ratio {}", r.ratio);
}
