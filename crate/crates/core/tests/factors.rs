use chrono::{Duration, NaiveDate};
use csylattice::factors::*;
use csylattice::market_data::RateCurve;
use csylattice::stats::{mean, sample_variance};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn gjr(alpha0: f64, alpha1: f64, beta1: f64, gamma1: f64) -> ArmaGjrGarchParams {
    ArmaGjrGarchParams {
        mu: 2e-4,
        phi1: 0.1,
        theta1: -0.05,
        alpha0,
        alpha1,
        beta1,
        gamma1,
        innovation: Innovation::Gaussian,
        dof: None,
    }
}

fn dates(n: usize) -> Vec<NaiveDate> {
    let d0 = NaiveDate::from_ymd_opt(2015, 1, 1).unwrap();
    (0..n as i64).map(|i| d0 + Duration::days(i)).collect()
}

fn normals(n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn within_3se(fit: &GarchFit, name: &str, truth: f64) -> bool {
    let est = fit.estimates.iter().find(|e| e.name == name).unwrap();
    let se = est.std_error.expect("standard error");
    (est.value - truth).abs() <= 3.0 * se
}

#[test]
fn gjr_generator_round_trip() {
    let truth = gjr(1e-5, 0.1, 0.8, 0.05);
    let r = simulate_arma_gjr_garch(&truth, 5000, 500, 1).unwrap();
    let fit = fit_arma_gjr_garch(&r, &GarchOptions::default()).unwrap();
    for (name, v) in [("alpha0", 1e-5), ("alpha1", 0.1), ("beta1", 0.8), ("gamma1", 0.05)] {
        assert!(within_3se(&fit, name, v), "{name}: {:?}", fit.estimates);
    }
    // The fit is at least as good as every start.
    assert!(fit.start_log_likelihoods.iter().all(|&l| fit.log_likelihood >= l - 1e-9));
    let eps = garch_residuals(&fit).unwrap();
    assert_eq!(eps.len(), r.len());
    assert!(fit.sigmas.iter().all(|&s| s > 0.0));
    let v = sample_variance(&eps);
    assert!((0.8..=1.2).contains(&v), "{v}");
    // Nesting: the unrestricted maximum is at least the γ1 = 0 maximum.
    let plain = fit_arma_gjr_garch(&r, &GarchOptions { gjr: false, ..Default::default() }).unwrap();
    assert!(fit.log_likelihood >= plain.log_likelihood - 1e-6);
    assert_eq!(plain.params.gamma1, 0.0);
}

#[test]
fn plain_garch_generator_gives_small_gamma() {
    let truth = gjr(1e-5, 0.1, 0.8, 0.0);
    let r = simulate_arma_gjr_garch(&truth, 5000, 500, 2).unwrap();
    let fit = fit_arma_gjr_garch(&r, &GarchOptions::default()).unwrap();
    assert!(within_3se(&fit, "gamma1", 0.0), "{:?}", fit.estimates);
}

#[test]
fn white_noise_residuals_are_the_standardized_input() {
    let x: Vec<f64> = normals(2000, 3).iter().map(|z| 0.01 * z).collect();
    let fit = fit_arma_gjr_garch(&x, &GarchOptions { n_starts: 4, ..Default::default() }).unwrap();
    // φ1 and θ1 are only identified up to cancellation on white noise.
    assert!((fit.params.phi1 + fit.params.theta1).abs() < 0.1, "{:?}", fit.params);
    let eps = garch_residuals(&fit).unwrap();
    let (m, s) = (mean(&x), sample_variance(&x).sqrt());
    let z: Vec<f64> = x.iter().map(|v| (v - m) / s).collect();
    let mz = mean(&z);
    let me = mean(&eps);
    let cov: f64 = z.iter().zip(&eps).map(|(a, b)| (a - mz) * (b - me)).sum::<f64>();
    let corr = cov
        / (z.iter().map(|a| (a - mz).powi(2)).sum::<f64>() * eps.iter().map(|b| (b - me).powi(2)).sum::<f64>()).sqrt();
    assert!(corr > 0.98, "{corr}");
}

#[test]
fn student_t_fit_has_finite_shape() {
    let truth = ArmaGjrGarchParams { innovation: Innovation::StudentT, dof: Some(8.0), ..gjr(1e-5, 0.08, 0.85, 0.04) };
    let r = simulate_arma_gjr_garch(&truth, 3000, 500, 4).unwrap();
    let fit =
        fit_arma_gjr_garch(&r, &GarchOptions { innovation: Innovation::StudentT, n_starts: 4, ..Default::default() })
            .unwrap();
    let dof = fit.params.dof.unwrap();
    assert!((4.0..30.0).contains(&dof), "{dof}");
    assert!(fit.std_error("dof").is_some());
}

#[test]
fn degenerate_inputs() {
    assert!(fit_arma_gjr_garch(&vec![0.01; 300], &GarchOptions::default()).is_err());
    assert!(fit_arma_gjr_garch(&normals(100, 1), &GarchOptions::default()).is_err());
    assert!(gjr(1e-5, 0.2, 0.8, 0.1).validate().is_err());
}

#[test]
fn jensen_examples() {
    let n = 300;
    let d = dates(n);
    let rf = RateCurve::flat(0.02);
    let dt = 1.0 / 252.0;
    let market: Vec<f64> = normals(n, 5).iter().map(|z| 0.01 * z).collect();
    let rfd = 0.02 * dt;
    let exact: Vec<f64> = market.iter().map(|m| rfd + 1.3 * (m - rfd)).collect();
    let a = jensen_alpha_series(&d, &exact, &market, &rf, dt).unwrap();
    assert!(a.alpha.iter().all(|x| x.abs() < 1e-12));
    assert!((a.beta("mkt").unwrap() - 1.3).abs() < 1e-10);

    // Stock excess orthogonal to the demeaned market excess: β = 0.
    let ex_m: Vec<f64> = market.iter().map(|m| m - rfd).collect();
    let mm = mean(&ex_m);
    let raw: Vec<f64> = normals(n, 6).iter().map(|z| 0.004 + 0.01 * z).collect();
    let rm = mean(&raw);
    let proj = raw.iter().zip(&ex_m).map(|(r, m)| (r - rm) * (m - mm)).sum::<f64>()
        / ex_m.iter().map(|m| (m - mm).powi(2)).sum::<f64>();
    let ex_s: Vec<f64> = raw.iter().zip(&ex_m).map(|(r, m)| r - proj * (m - mm)).collect();
    let stock: Vec<f64> = ex_s.iter().map(|e| e + rfd).collect();
    let a = jensen_alpha_series(&d, &stock, &market, &rf, dt).unwrap();
    assert!(a.betas[0].abs() < 1e-12);
    for (al, e) in a.alpha.iter().zip(&ex_s) {
        assert!((al - e).abs() < 1e-13);
    }

    // Noisy β = 1.3 against the closed-form slope cov/var.
    let noisy: Vec<f64> = market.iter().zip(normals(n, 7)).map(|(m, z)| rfd + 1.3 * (m - rfd) + 0.005 * z).collect();
    let a = jensen_alpha_series(&d, &noisy, &market, &rf, dt).unwrap();
    let ex_n: Vec<f64> = noisy.iter().map(|s| s - rfd).collect();
    let mn = mean(&ex_n);
    let slope = ex_n.iter().zip(&ex_m).map(|(s, m)| (s - mn) * (m - mm)).sum::<f64>()
        / ex_m.iter().map(|m| (m - mm).powi(2)).sum::<f64>();
    assert!((a.betas[0] - slope).abs() < 1e-10);
    assert!((mean(&a.alpha) - a.intercept).abs() < 1e-10);

    let flat_market = vec![0.001; n];
    let err = jensen_alpha_series(&d, &noisy, &flat_market, &rf, dt).unwrap_err();
    assert!(err.to_string().contains("zero variance"));
}

fn table(n: usize) -> FactorTable {
    let z = [normals(n, 10), normals(n, 11), normals(n, 12)];
    FactorTable {
        dates: dates(n),
        mkt_excess: z[0].iter().map(|v| 0.01 * v).collect(),
        smb: z[1].iter().map(|v| 0.005 * v).collect(),
        hml: z[2].iter().map(|v| 0.004 * v).collect(),
        rf: vec![8e-5; n],
    }
}

#[test]
fn ff3_examples() {
    let n = 400;
    let t = table(n);
    let stock: Vec<f64> = (0..n).map(|i| t.rf[i] + 1.1 * t.mkt_excess[i] + 0.4 * t.smb[i] - 0.3 * t.hml[i]).collect();
    let a = ff3_alpha_series(&t.dates, &stock, &t).unwrap();
    assert!(a.alpha.iter().all(|x| x.abs() < 1e-10));
    for (name, b) in [("mkt", 1.1), ("smb", 0.4), ("hml", -0.3)] {
        assert!((a.beta(name).unwrap() - b).abs() < 1e-8);
    }

    // With only the market column the three-factor routine is the Jensen case.
    let noisy: Vec<f64> = stock.iter().zip(normals(n, 13)).map(|(s, z)| s + 0.003 * z).collect();
    let ex: Vec<f64> = noisy.iter().zip(&t.rf).map(|(s, r)| s - r).collect();
    let one = factor_alpha_series(&t.dates, &ex, &[("mkt", &t.mkt_excess)]).unwrap();
    let market: Vec<f64> = t.mkt_excess.iter().zip(&t.rf).map(|(m, r)| m + r).collect();
    let jensen = jensen_alpha_series(&t.dates, &noisy, &market, &RateCurve::flat(8e-5), 1.0).unwrap();
    for (a, b) in one.alpha.iter().zip(&jensen.alpha) {
        assert!((a - b).abs() < 1e-12);
    }

    let a = ff3_alpha_series(&t.dates, &noisy, &t).unwrap();
    assert_eq!(a.alpha.len(), n);
    assert!((mean(&a.alpha) - a.intercept).abs() < 1e-10);

    let mut bad = t.clone();
    bad.hml = bad.smb.iter().map(|v| 2.0 * v).collect();
    assert!(ff3_alpha_series(&t.dates, &noisy, &bad).is_err());
}

#[test]
fn factor_table_round_trips() {
    let t = table(20);
    let f = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(f.path(), t.to_csv()).unwrap();
    assert_eq!(load_factor_table(f.path()).unwrap(), t);
    let fixture = load_factor_table(std::path::Path::new("fixtures/factors.csv")).unwrap();
    assert!(fixture.dates.len() > 500);
}
