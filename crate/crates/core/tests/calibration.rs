use chrono::NaiveDate;
use csylattice::bsm::bsm_price;
use csylattice::calibration::*;
use csylattice::csy::{stock_path, CsyParams, CsyPricingConfig, IntensitySeries};
use csylattice::informed::{price_informed, TraderSpec};
use csylattice::lattice::{MarketParams, OneStepMove, OptionSpec};
use csylattice::market_data::{OptionChain, OptionKind, OptionQuote};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const S0: f64 = 100.0;

fn d(y: i32, m: u32, day: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, day).unwrap()
}

fn sp_a() -> CsyParamVector {
    CsyParamVector { nu: 0.0016, sigma: 0.002, gamma: 0.29, sigma_h: 8.8, delta: 0.089, sigma_g: 1800.0 }
}

fn intensity(n: usize, p: f64, seed: u64) -> IntensitySeries {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ups: Vec<bool> = (0..n).map(|_| rng.gen_bool(p)).collect();
    IntensitySeries::from_signs(&ups, p, 1.0).unwrap()
}

fn generated(p: &CsyParamVector, xi: &IntensitySeries, noise: f64, seed: u64) -> Vec<f64> {
    let path = stock_path(&p.to_params().unwrap(), xi, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    path.log_returns
        .iter()
        .map(|r| {
            let z: f64 = StandardNormal.sample(&mut rng);
            r + noise * z
        })
        .collect()
}

fn opts(seed: u64) -> CsyFitOptions {
    CsyFitOptions { r: 2e-5, n_starts: 6, seed, ..Default::default() }
}

#[test]
fn p_from_q_examples() {
    assert_eq!(p_from_q(0.37, 0.0, 0.1).unwrap(), PFromQ { p: 0.37, clamped: false });
    let dt = 1.0 / 252.0;
    let direct = 0.55 + 0.5 * (0.55f64 * 0.45 * dt).sqrt() + (0.5 - 0.55) * 0.25 * dt;
    let got = p_from_q(0.55, 0.5, dt).unwrap();
    assert!((got.p - direct).abs() < 1e-16 && !got.clamped);
    assert!((got.p - 0.565620).abs() < 1e-6, "{}", got.p);
    assert!(p_from_q(0.0, 0.5, dt).is_err());
    assert!(p_from_q(0.999_999, 50.0, 1.0).unwrap().clamped);
}

#[test]
fn p_from_q_inverts_q_approx_to_higher_order() {
    // |p_from_q(q_approx(p)) − p| / Δt^{3/2} stays bounded as Δt shrinks.
    let mut worst: f64 = 0.0;
    for &dt in &[1.0 / 12.0, 1.0 / 52.0, 1.0 / 252.0, 1.0 / 2520.0] {
        for i in 1..10 {
            let p = i as f64 / 10.0;
            for theta in [0.0, 0.25, 0.5, 1.0] {
                let sigma = 0.2;
                let mp = MarketParams::new(0.02 + theta * sigma, sigma, 0.02).unwrap();
                let q = OneStepMove::compute(&mp, p, dt).unwrap().q_approx;
                let res = (p_from_q(q, mp.theta(), dt).unwrap().p - p).abs();
                worst = worst.max(res / dt.powf(1.5));
            }
        }
    }
    assert!(worst < 1.0, "C' = {worst}");
}

#[test]
fn fit_recovers_noisy_data() {
    let xi = intensity(1500, 0.53, 1);
    let y = generated(&sp_a(), &xi, 0.02, 2);
    let fit = fit_csy(&y, &xi, &opts(0)).unwrap();
    assert!((fit.rmse / 0.02 - 1.0).abs() < 0.1, "{}", fit.rmse);
    let rms = (fit.residuals.iter().map(|e| e * e).sum::<f64>() / y.len() as f64).sqrt();
    assert_eq!(rms, fit.rmse);
    let p = fit.params;
    assert!(p.nu > 2e-5 && p.sigma >= 0.0 && p.gamma >= 0.0 && p.delta >= 0.0 && p.sigma_h > 0.0 && p.sigma_g > 0.0);
    assert!(fit.start_rmse.iter().all(|&s| fit.rmse <= s + 1e-15));
    assert!(fit.solutions.iter().all(|s| s.rmse <= 1.01 * fit.rmse));
}

#[test]
fn fit_is_exact_on_noiseless_data() {
    let xi = intensity(600, 0.53, 3);
    let truth = sp_a();
    let y = generated(&truth, &xi, 0.0, 0);
    let fit = fit_csy(&y, &xi, &CsyFitOptions { init: Some(truth), ..opts(1) }).unwrap();
    assert!(fit.rmse < 1e-6, "{}", fit.rmse);
    // ν and σ are identified; the filter terms only up to the bandwidths.
    assert!((fit.params.nu - truth.nu).abs() < 1e-8);
}

#[test]
fn nested_model_never_beats_the_full_fit() {
    let xi = intensity(800, 0.5, 4);
    let truth = CsyParamVector { gamma: 0.0, delta: 0.0, ..sp_a() };
    let y = generated(&truth, &xi, 0.01, 5);
    let full = fit_csy(&y, &xi, &opts(2)).unwrap();
    let reduced = fit_csy_reduced(&y, &xi, 2e-5).unwrap();
    assert!(full.rmse <= reduced.rmse + 1e-8);
    assert!(reduced.params.gamma == 0.0 && reduced.params.delta == 0.0);
}

#[test]
fn fit_is_seed_deterministic() {
    let xi = intensity(400, 0.55, 6);
    let y = generated(&sp_a(), &xi, 0.01, 7);
    let a = fit_csy(&y, &xi, &opts(9)).unwrap().to_json();
    let b = fit_csy(&y, &xi, &opts(9)).unwrap().to_json();
    assert_eq!(a, b);
}

#[test]
fn fit_rejects_bad_inputs() {
    let xi = intensity(100, 0.5, 1);
    assert!(fit_csy(&[0.0; 99], &xi, &opts(0)).is_err());
    assert!(fit_csy(&[0.0; 100], &xi, &CsyFitOptions { r: 0.0, ..opts(0) }).is_err());
    let inverted = CsyFitBounds { sigma_h: (10.0, 1.0), ..Default::default() };
    assert!(fit_csy(&[0.0; 100], &xi, &CsyFitOptions { bounds: inverted, ..opts(0) }).is_err());
}

fn model() -> ConstantQModel {
    ConstantQModel { mu: 6e-4, sigma: 0.015, r: 8e-5 }
}

/// Quotes priced at `q_star` on the same daily constant-q tree.
fn q_chain(q_star: f64) -> OptionChain {
    let quote_date = d(2020, 1, 2);
    let mut quotes = Vec::new();
    for expiry in [d(2020, 1, 9), d(2020, 1, 16), d(2020, 1, 30)] {
        let n = days_between(quote_date, expiry, DayCount::Weekdays);
        for k in [95.0, 100.0, 105.0] {
            let price = constant_q_price(S0, k, OptionKind::Call, n, 1.0, &model(), q_star).unwrap();
            quotes.push(OptionQuote { expiry, strike: k, kind: OptionKind::Call, price });
        }
    }
    OptionChain::new(quote_date, quotes).unwrap()
}

#[test]
fn implied_q_reprices_every_quote() {
    let chain = q_chain(0.53);
    let s = implied_q_surface(&chain, S0, &model(), &SurfaceSettings::default()).unwrap();
    assert_eq!(s.maturity, vec![5.0, 10.0, 20.0]);
    assert_eq!(s.moneyness, vec![0.95, 1.0, 1.05]);
    for (i, t) in s.maturity.iter().enumerate() {
        for (j, m) in s.moneyness.iter().enumerate() {
            assert_eq!(s.status[i][j], CellStatus::Ok);
            let q = s.values[i][j].unwrap();
            let quote = chain
                .quotes
                .iter()
                .find(|x| {
                    x.strike == m * S0 && days_between(chain.quote_date, x.expiry, DayCount::Weekdays) as f64 == *t
                })
                .unwrap();
            let c = constant_q_price(S0, quote.strike, quote.kind, *t as usize, 1.0, &model(), q).unwrap();
            assert!(((c - quote.price) / quote.price).abs() <= 1e-6);
            let roots = implied_q_roots(quote, S0, *t as usize, 1.0, &model());
            assert!(roots.iter().any(|r| (r - 0.53).abs() < 1e-9), "{roots:?}");
            assert!(roots.iter().all(|r| (q - 0.5).abs() <= (r - 0.5).abs()));
        }
    }
}

#[test]
fn implied_q_marks_bound_violations() {
    let mut chain = q_chain(0.5);
    chain.quotes[0].price = 0.0;
    chain.quotes[1].price = 1e6;
    let s = implied_q_surface(&chain, S0, &model(), &SurfaceSettings::default()).unwrap();
    let bad: Vec<_> = s.status.iter().flatten().filter(|st| **st == CellStatus::BoundViolation).collect();
    assert_eq!(bad.len(), 2);
    // No silent NaN: every empty cell carries a failure tag.
    for (vs, ss) in s.values.iter().zip(&s.status) {
        for (v, st) in vs.iter().zip(ss) {
            assert!(v.is_some_and(f64::is_finite) || *st != CellStatus::Ok);
        }
    }
}

#[test]
fn implied_p_follows_from_q() {
    let chain = q_chain(0.53);
    let q = implied_q_surface(&chain, S0, &model(), &SurfaceSettings::default()).unwrap();
    let p = implied_p_surface(&q, &model(), 1.0).unwrap();
    let theta = MarketParams::new(6e-4, 0.015, 8e-5).unwrap().theta();
    for (qr, pr) in q.values.iter().zip(&p.values) {
        for (qv, pv) in qr.iter().zip(pr) {
            assert_eq!(pv.unwrap(), p_from_q(qv.unwrap(), theta, 1.0).unwrap().p);
        }
    }
    let diff = q_minus_p_surface(&q, &p);
    assert!(diff.finite_values().iter().all(|v| *v <= 0.0));
}

#[test]
fn surface_formats() {
    let s = implied_q_surface(&q_chain(0.5), S0, &model(), &SurfaceSettings::default()).unwrap().annotate(0.5, 0.62);
    let csv = s.to_csv();
    assert!(csv.starts_with("moneyness,maturity,value,status\n"));
    assert_eq!(csv.lines().count(), 1 + 9);
    let back: SurfaceGrid = serde_json::from_str(&s.to_json()).unwrap();
    assert_eq!(back, s);
    assert_eq!(s.annotation.as_ref().unwrap().n_finite, 9);
}

#[test]
fn dev_examples() {
    let (k, t, r) = (105.0, 0.5, 0.02);
    let market = bsm_price(S0, k, t, r, 0.2, OptionKind::Call).unwrap();
    assert!(dev_value(market, market, S0, k, t, r, OptionKind::Call).unwrap().abs() < 1e-10);
    let model_price = bsm_price(S0, k, t, r, 0.4, OptionKind::Call).unwrap();
    assert!((dev_value(model_price, market, S0, k, t, r, OptionKind::Call).unwrap() - 0.5).abs() < 1e-8);
    assert!(dev_value(1e6, market, S0, k, t, r, OptionKind::Call).is_err());

    let chain = q_chain(0.5);
    let settings = SurfaceSettings::default();
    let pricer = |q: &OptionQuote, _n: usize| -> csylattice::error::Result<f64> { Ok(q.price) };
    let s = dev_surface(&chain, S0, model().r, &settings, &pricer).unwrap();
    assert!(s.finite_values().iter().all(|v| v.abs() < 1e-8));
}

fn lambda_params() -> CsyParams {
    CsyParams::gaussian(0.0016, 0.01, 0.29, 8.8, 0.089, 1800.0).unwrap()
}

fn lambda_chain(lambda: f64, xi: &IntensitySeries, r: f64) -> OptionChain {
    let quote_date = d(2020, 1, 2);
    let cfg = CsyPricingConfig::default();
    let trader = TraderSpec::new(lambda).unwrap();
    let mut quotes = Vec::new();
    for expiry in [d(2020, 1, 8), d(2020, 1, 14)] {
        let n = days_between(quote_date, expiry, DayCount::Weekdays);
        for k in [98.0, 100.0, 102.0] {
            let opt = OptionSpec::new(OptionKind::Call, k, n as f64).unwrap();
            let price = price_informed(S0, &lambda_params(), xi, &trader, &[r], &opt, &cfg, None).unwrap().f0;
            quotes.push(OptionQuote { expiry, strike: k, kind: OptionKind::Call, price });
        }
    }
    OptionChain::new(quote_date, quotes).unwrap()
}

#[test]
fn implied_lambda_round_trips() {
    let xi = intensity(40, 0.53, 8);
    let r = 8e-5;
    let settings = SurfaceSettings::default();
    let cfg = CsyPricingConfig::default();
    let search = LambdaSearch::default();
    for lambda in [1e-3, 0.0] {
        let chain = lambda_chain(lambda, &xi, r);
        let s = implied_lambda_surface(&chain, S0, &lambda_params(), &xi, r, &settings, &cfg, &search).unwrap();
        for (vs, ss) in s.values.iter().zip(&s.status) {
            for (v, st) in vs.iter().zip(ss) {
                let v = v.unwrap();
                if lambda == 0.0 {
                    assert!(v <= 1e-6, "{v}");
                } else {
                    assert_eq!(*st, CellStatus::Ok);
                    assert!((v / lambda - 1.0).abs() < 0.05, "{v}");
                }
            }
        }
    }
}
