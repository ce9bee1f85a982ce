use proptest::prelude::*;

use pretest_coverage::mc::Scenario;
use pretest_coverage::pretest::Branch;
use pretest_coverage::study::default_method;
use pretest_coverage::{
    beta_between, beta_within, crn_grid, draw_noise, estimate_cp_bruteforce, estimate_cp_cv, generate_panel,
    min_coverage_over_tau, simulate_map, simulate_records, tau_to_tautilde, tautilde_to_tau, two_stage_ci,
    variance_mle, variance_unbiased, variance_wooldridge, xstats, BaseNoise, Config, Config32, CorrStructure,
    EstimatorKind, GridSpec, Method, Settings,
};

fn structure() -> impl Strategy<Value = CorrStructure> {
    prop_oneof![Just(CorrStructure::CompoundSymmetry), Just(CorrStructure::Ar1)]
}

fn estimator() -> impl Strategy<Value = EstimatorKind> {
    prop_oneof![
        Just(EstimatorKind::KnownVariances),
        Just(EstimatorKind::Unbiased),
        Just(EstimatorKind::Mle),
        Just(EstimatorKind::Wooldridge { dof_correction: 0 }),
        Just(EstimatorKind::Wooldridge { dof_correction: 2 }),
    ]
}

prop_compose! {
    fn config()(
        n in 3usize..30,
        t in 2usize..6,
        s in structure(),
        rho in 0.0f64..0.8,
        tau in -0.6f64..0.6,
        psi in 0.0f64..2.0,
        sigma_eps in 0.2f64..3.0,
        sigma_x in 0.2f64..3.0,
        a in -2.0f64..2.0,
        beta in -2.0f64..2.0,
        est in estimator(),
    ) -> Config {
        Config::builder()
            .n(n).t(t).structure(s).rho(rho).sigma_eps(sigma_eps).sigma_x(sigma_x)
            .a(a).beta(beta).estimator(est).psi(psi).tau(tau)
            .build()
            .unwrap()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn tau_round_trip(s in structure(), rho in 0.0f64..0.9, tau in -0.95f64..0.95, t in 2usize..8) {
        let tt = tau_to_tautilde(tau, rho, t, s).unwrap();
        let back = tautilde_to_tau(tt, rho, t, s).unwrap();
        prop_assert!((back - tau).abs() < 1e-12);
    }

    #[test]
    fn panel_reconstruction(cfg in config(), seed in any::<u64>()) {
        let d = generate_panel(&cfg, &draw_noise(cfg.n(), cfg.t(), seed, 0)).unwrap();
        for i in 0..cfg.n() {
            for s in 0..cfg.t() {
                let want = cfg.intercept() + cfg.slope() * d.x.get(i, s) + d.mu[i] + d.eps.get(i, s);
                prop_assert_eq!(d.y.get(i, s), want);
            }
        }
        let again = generate_panel(&cfg, &draw_noise(cfg.n(), cfg.t(), seed, 0)).unwrap();
        prop_assert_eq!(d, again);
    }

    #[test]
    fn two_stage_invariants(cfg in config(), seed in any::<u64>()) {
        let d = generate_panel(&cfg, &draw_noise(cfg.n(), cfg.t(), seed, 3)).unwrap();
        let r = match two_stage_ci(&d, &cfg) {
            Ok(r) => r,
            Err(pretest_coverage::Error::Degenerate(_)) => return Ok(()),
            Err(e) => return Err(TestCaseError::fail(e.to_string())),
        };
        let v = r.variance_pair;
        prop_assert!(v.sigma_eps_sq > 0.0 && v.sigma_mu_sq >= 0.0);
        prop_assert!((v.psi * v.psi * v.sigma_eps_sq - v.sigma_mu_sq).abs() <= 1e-10 * (1.0 + v.sigma_mu_sq));
        prop_assert!(r.hausman >= 0.0);
        let z2 = pretest_coverage::normal_quantile(1.0 - cfg.alpha_tilde() / 2.0).unwrap().powi(2);
        prop_assert_eq!(r.branch == Branch::RandomEffects, r.hausman <= z2);
        let centre = if r.branch == Branch::RandomEffects { r.beta_gls } else { r.beta_w };
        prop_assert_eq!(r.interval.center, centre);
        prop_assert!(r.interval.half_width >= 0.0);
    }

    #[test]
    fn slope_equivariance(cfg in config(), c in 0.2f64..5.0, shift in -3.0f64..3.0, seed in any::<u64>()) {
        let d = generate_panel(&cfg, &draw_noise(cfg.n(), cfg.t(), seed, 1)).unwrap();
        let y2 = d.y.map(|v| c * v + shift);
        let (Ok(w), Ok(b)) = (beta_within(&d.x, &d.y), beta_between(&d.x, &d.y)) else { return Ok(()) };
        let w2 = beta_within(&d.x, &y2).unwrap();
        let b2 = beta_between(&d.x, &y2).unwrap();
        prop_assert!((w2 - c * w).abs() <= 1e-9 * (1.0 + (c * w).abs()));
        prop_assert!((b2 - c * b).abs() <= 1e-9 * (1.0 + (c * b).abs()));
    }

    #[test]
    fn psi_hat_scale_free(seed in any::<u64>(), c in 0.1f64..10.0) {
        let cfg = Config::builder().n(40).t(3).psi(0.8).build().unwrap();
        let d = generate_panel(&cfg, &draw_noise(40, 3, seed, 0)).unwrap();
        let scaled = d.x.zip_map(&d.y, |x, y| cfg.slope() * x + c * (y - cfg.slope() * x));
        for (a, b) in [
            (variance_unbiased(&d.x, &d.y), variance_unbiased(&d.x, &scaled)),
            (variance_wooldridge(&d.x, &d.y, 0), variance_wooldridge(&d.x, &scaled, 0)),
            (variance_mle(&d.x, &d.y), variance_mle(&d.x, &scaled)),
        ] {
            let (a, b) = (a.unwrap(), b.unwrap());
            prop_assert!((a.psi - b.psi).abs() <= 1e-6 * (1.0 + a.psi), "{} vs {}", a.psi, b.psi);
        }
    }

    #[test]
    fn xstats_scale_free(seed in any::<u64>(), c in 0.01f64..100.0) {
        let cfg = Config::builder().n(20).t(4).build().unwrap();
        let x = generate_panel(&cfg, &draw_noise(20, 4, seed, 0)).unwrap().x;
        let a = xstats(&x, cfg.var_xbar()).unwrap();
        let b = xstats(&x.map(|v| c * v), cfg.var_xbar().map(|v| c * c * v)).unwrap();
        prop_assert!((a.r - b.r).abs() <= 1e-12 * a.r);
        prop_assert!((a.p_squared.unwrap() - b.p_squared.unwrap()).abs() <= 1e-12 * a.p_squared.unwrap());
    }
}

#[test]
fn thread_count_does_not_change_results() {
    let cfg = Config::builder().lambda(3.0).estimator(EstimatorKind::Mle).build().unwrap();
    let one = simulate_records(&cfg, &Settings::new(300, 11).with_threads(1)).unwrap();
    let many = simulate_records(&cfg, &Settings::new(300, 11).with_threads(4)).unwrap();
    let default = simulate_records(&cfg, &Settings::new(300, 11)).unwrap();
    assert_eq!(one, many);
    assert_eq!(one, default);
}

#[test]
fn single_point_grid_matches_direct_estimate() {
    let cfg = Config::builder().build().unwrap();
    let s = Settings::new(500, 12);
    let grid = crn_grid(&cfg, &[2.5, 2.5], &s, Method::ControlVariate).unwrap();
    let direct = estimate_cp_cv(&cfg.with_lambda(2.5).unwrap(), &s).unwrap();
    assert_eq!(grid[0].1, direct);
    assert_eq!(grid[1].1, direct);
}

#[test]
fn control_variate_has_mean_zero() {
    let cfg = Config::builder().lambda(3.0).build().unwrap();
    let batches: Vec<f64> = (0..50u64)
        .map(|b| {
            let recs = simulate_records(&cfg, &Settings::new(400, 1000 + b)).unwrap();
            recs.iter().map(|r| r.covered_known as i32 as f64 - r.exact_cond_cp.unwrap()).sum::<f64>()
                / recs.len() as f64
        })
        .collect();
    let m = batches.len() as f64;
    let mean = batches.iter().sum::<f64>() / m;
    let sd = (batches.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt();
    assert!(mean.abs() <= 3.0 * sd / m.sqrt(), "mean {mean}, se {}", sd / m.sqrt());
}

#[test]
fn conditional_moments_of_within_and_between() {
    // Fixed x, known variances, latent parts redrawn.
    let cfg = Config::builder().build().unwrap();
    let x = generate_panel(&cfg, &draw_noise(100, 3, 21, 0)).unwrap().x;
    let xs = xstats(&x, cfg.var_xbar()).unwrap();
    let m = 20_000;
    let mut w = Vec::with_capacity(m);
    let mut b = Vec::with_capacity(m);
    for run in 0..m {
        let noise = draw_noise::<f64>(100, 3, 22, run);
        let psi = cfg.psi();
        let y = pretest_coverage::Panel::new(
            100,
            3,
            (0..300).map(|k| psi * noise.z_mu_x()[k / 3] + noise.z_eps()[k]).collect(),
        )
        .unwrap();
        w.push(beta_within(&x, &y).unwrap());
        b.push(beta_between(&x, &y).unwrap());
    }
    let mf = m as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / mf;
    let (mw, mb) = (mean(&w), mean(&b));
    let var_w = w.iter().map(|v| (v - mw).powi(2)).sum::<f64>() / (mf - 1.0);
    let cov = w.iter().zip(&b).map(|(a, c)| (a - mw) * (c - mb)).sum::<f64>() / (mf - 1.0);
    let var_b = b.iter().map(|v| (v - mb).powi(2)).sum::<f64>() / (mf - 1.0);
    assert!(mw.abs() <= 4.0 * (var_w / mf).sqrt());
    let want = 1.0 / xs.ssw;
    assert!((var_w / want - 1.0).abs() <= 4.0 * (2.0 / (mf - 1.0)).sqrt());
    assert!(cov.abs() <= 4.0 * (var_w * var_b / mf).sqrt());
}

#[test]
fn half_grid_minimum_matches_full_grid() {
    // The run at -lambda reuses the noise of the run at +lambda with the
    // latent signs flipped, which mirrors the whole dataset.
    let cfg = Config::builder().build().unwrap();
    let m = 2_000;
    let s = Settings::new(m, 31);
    let spec = GridSpec { lambda_max: Some(8.0), coarse_points: 9, refine_points: 0 };
    let half = min_coverage_over_tau(&cfg, &s, &spec, Method::BruteForce).unwrap();
    let full: Vec<f64> = (-8..=8).map(|k| k as f64).collect();
    let scenarios: Vec<Scenario> = full.iter().map(|&l| Scenario::new(&cfg.with_lambda(l).unwrap()).unwrap()).collect();
    let (n, t) = (cfg.n(), cfg.t());
    let hits = simulate_map(n, t, &s, |_, noise: &BaseNoise| {
        let mut zmx = noise.z_mu_x().to_vec();
        for row in zmx.chunks_exact_mut(t + 1) {
            row[0] = -row[0];
        }
        let zeps = noise.z_eps().iter().map(|v| -v).collect();
        let mirrored = BaseNoise::from_parts(n, t, zmx, zeps)?;
        full.iter()
            .zip(&scenarios)
            .map(|(&l, sc)| Ok(sc.run_estimated_only(if l < 0.0 { &mirrored } else { noise })?.covered_estimated))
            .collect::<pretest_coverage::Result<Vec<bool>>>()
    })
    .unwrap();
    let cps: Vec<f64> = (0..full.len()).map(|j| hits.iter().filter(|h| h[j]).count() as f64 / m as f64).collect();
    let lo = cps.iter().copied().fold(f64::INFINITY, f64::min);
    let se = 2.0 * (lo * (1.0 - lo) / m as f64).sqrt();
    assert!((lo - half.min_cp).abs() <= 2.0 * se, "{lo} vs {}", half.min_cp);
    for k in 1..=8 {
        assert_eq!(cps[8 - k], cps[8 + k], "lambda = {k}");
    }
}

#[test]
fn single_precision_path_runs() {
    let cfg = Config32::builder().lambda(2.0).build().unwrap();
    let est = estimate_cp_cv(&cfg, &Settings::new(400, 5)).unwrap();
    let est64 = estimate_cp_cv(&Config::builder().lambda(2.0).build().unwrap(), &Settings::new(400, 5)).unwrap();
    assert!((est.value as f64 - est64.value).abs() < 0.01);
}

#[test]
fn ar1_uses_brute_force() {
    let cfg = Config::builder().structure(CorrStructure::Ar1).rho(0.5).lambda(1.0).build().unwrap();
    assert_eq!(default_method(&cfg), Method::BruteForce);
    assert_eq!(estimate_cp_cv(&cfg, &Settings::new(100, 1)), Err(pretest_coverage::Error::UnsupportedStructure));
    let b = estimate_cp_bruteforce(&cfg, &Settings::new(500, 1)).unwrap();
    assert!(b.value > 0.5 && b.value <= 1.0);
}
