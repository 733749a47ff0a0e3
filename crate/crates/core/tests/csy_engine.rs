use std::f64::consts::PI;

use csylattice::csy::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gauss(b: f64, x: f64) -> f64 {
    (-x * x / (2.0 * b * b)).exp() / (b * (2.0 * PI).sqrt())
}

fn sp_a() -> CsyParams {
    CsyParams::gaussian(0.0016, 0.0020, 0.29, 8.8, 0.089, 1.8e3).unwrap()
}

fn signs(n: usize, p: f64, seed: u64) -> Vec<bool> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| rng.gen_bool(p)).collect()
}

#[test]
fn intensity_values() {
    let xi = IntensitySeries::from_signs(&[true, false], 0.5, 1.0).unwrap();
    assert_eq!(xi.xi, vec![1.0, -1.0]);
    let p: f64 = 0.37;
    let m = p * ((1.0 - p) / p).sqrt() - (1.0 - p) * (p / (1.0 - p)).sqrt();
    assert!(m.abs() < 1e-15);
    assert!((intensity_up_value(0.6) - 0.816497).abs() < 5e-7);
    assert!((intensity_down_value(0.6) + 1.224745).abs() < 5e-7);
    for i in 1..=9 {
        let xi = IntensitySeries::empty(i as f64 / 10.0, 1.0).unwrap();
        let (mean, var) = xi.two_point_moments();
        assert!(mean.abs() < 1e-14 && (var - 1.0).abs() < 1e-14, "p = {}", i as f64 / 10.0);
    }
}

#[test]
fn centralize_examples() {
    let (mu, sigma, dt): (f64, f64, f64) = (0.1, 0.2, 1.0 / 252.0);
    let c = (mu - 0.5 * sigma * sigma) * dt;
    let z = centralize(&[c], mu, sigma, dt).unwrap();
    assert!(z.z[0].abs() < 1e-15);
    let rs = [0.01, -0.004, 0.0, 0.021, -0.013];
    let z = centralize(&rs, mu, sigma, dt).unwrap();
    let shifted: Vec<f64> = rs.iter().map(|r| r + c).collect();
    let z2 = centralize(&shifted, mu, sigma, dt).unwrap();
    for (i, r) in rs.iter().enumerate() {
        assert!((z.z[i] - (r - c) / (sigma * dt.sqrt())).abs() < 1e-12);
        assert!((z2.z[i] - z.z[i] - c / (sigma * dt.sqrt())).abs() < 1e-12);
    }
    assert!(centralize(&rs, mu, 0.0, dt).is_err());
}

#[test]
fn intensity_estimates_p() {
    let z = CentralizedReturnSeries { z: vec![1.0, -0.5, 0.0, 2.0, -1.0] };
    let xi = intensity(&z, None, 1.0).unwrap();
    assert_eq!(xi.p_up, 0.6);
    assert_eq!(xi.xi[2], intensity_up_value(0.6));
    assert!(intensity(&CentralizedReturnSeries { z: vec![1.0, 2.0] }, None, 1.0).is_err());
    let raw = intensity_from_raw_signs(&[0.1, -0.2, 0.0], 1.0).unwrap();
    assert_eq!(raw.xi, vec![1.0, -1.0, 1.0]);
    assert_eq!(raw.up_value(), 1.0);
}

#[test]
fn accumulate_examples() {
    let xi = IntensitySeries::from_signs(&signs(40, 0.55, 1), 0.55, 0.25).unwrap();
    let acc = accumulate(&xi, &FilterSpec::constant(1.0), &FilterSpec::constant(1.0));
    assert_eq!(acc.x, acc.y);
    assert_eq!((acc.x[0], acc.y[0], acc.v[0]), (0.0, 0.0, 0.0));
    let empty = accumulate(&IntensitySeries::empty(0.5, 1.0).unwrap(), &FilterSpec::zero(), &FilterSpec::zero());
    assert_eq!(empty.x, vec![0.0]);

    // ξ = (+1, −1, +1), Δt = 1, h Gaussian with σ_h = 1, g ≡ 1.
    let xi = IntensitySeries::from_signs(&[true, false, true], 0.5, 1.0).unwrap();
    let acc = accumulate(&xi, &FilterSpec::gaussian(1.0).unwrap(), &FilterSpec::constant(1.0));
    assert_eq!(acc.x, vec![0.0, 1.0, 0.0, 1.0]);
    let y3 = gauss(1.0, 0.0) - gauss(1.0, 1.0) + gauss(1.0, 0.0);
    assert!((acc.y[3] - y3).abs() < 1e-15);
    // A_k = Σ_{j≤k} X_{j−1}: 0, 0, 1, 1.
    assert_eq!(acc.arg_g, vec![0.0, 0.0, 1.0, 1.0]);
    assert_eq!(acc.v, acc.x);
}

/// η_k written out step by step: X and A built in separate loops.
fn eta_ledger(p: &CsyParams, xi: &[f64], dt: f64) -> Vec<f64> {
    let n = xi.len();
    let mut x = vec![0.0; n + 1];
    for k in 1..=n {
        x[k] = x[k - 1] + dt.sqrt() * xi[k - 1];
    }
    let a: Vec<f64> = (0..=n).map(|k| x[..k].iter().map(|v| v * dt).sum()).collect();
    let (FilterSpec::Gaussian { bandwidth: bh }, FilterSpec::Gaussian { bandwidth: bg }) = (&p.h, &p.g) else {
        panic!("gaussian filters expected")
    };
    (0..=n).map(|k| p.sigma + p.gamma * gauss(*bh, x[k]) + p.delta * gauss(*bg, a[k])).collect()
}

#[test]
fn eta_matches_ledger() {
    let p = sp_a();
    let xi = IntensitySeries::from_signs(&signs(60, 0.53, 7), 0.53, 1.0).unwrap();
    let got = eta_series(&p, &xi, EtaIndexing::Previsible).unwrap().eta;
    let want = eta_ledger(&p, &xi.xi, 1.0);
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert_eq!(got[0], p.sigma + p.gamma * gauss(8.8, 0.0) + p.delta * gauss(1800.0, 0.0));
    assert!(got.iter().all(|&e| e >= p.sigma));
    assert_eq!(eta(&p, &xi, 5, EtaIndexing::Previsible).unwrap(), got[5]);
    let flat = CsyParams::gaussian(0.01, 0.3, 0.0, 1.0, 0.0, 1.0).unwrap();
    assert!(eta_series(&flat, &xi, EtaIndexing::Previsible).unwrap().eta.iter().all(|&e| e == 0.3));
    let shifted = eta_series(&p, &xi, EtaIndexing::Shifted).unwrap().eta;
    assert_eq!(shifted.len(), 60);
    assert_eq!(shifted[0], p.sigma);
}

#[test]
fn stock_path_examples() {
    let flat = CsyParams::gaussian(0.05, 0.2, 0.0, 1.0, 0.0, 1.0).unwrap();
    let xi = IntensitySeries::from_signs(&signs(30, 0.5, 3), 0.5, 0.1).unwrap();
    let path = stock_path(&flat, &xi, 10.0).unwrap();
    for k in 0..=30 {
        let want = 0.05 * path.t[k] + 0.2 * path.accumulators.x[k];
        assert!(((path.s[k] / 10.0).ln() - want).abs() < 1e-12);
    }
    // ξ ≡ +1, 𝕡 = 1/2, Δt = 1, k = 2: X = (0,1,2), Y = h(0) + h(1), V = g(0) + g(0).
    let p = CsyParams::gaussian(0.01, 0.1, 0.5, 2.0, 0.3, 3.0).unwrap();
    let xi = IntensitySeries::from_signs(&[true, true], 0.5, 1.0).unwrap();
    let path = stock_path(&p, &xi, 1.0).unwrap();
    let want = 0.02 + 0.1 * 2.0 + 0.5 * (gauss(2.0, 0.0) + gauss(2.0, 1.0)) + 0.3 * (gauss(3.0, 0.0) + gauss(3.0, 0.0));
    assert!((path.s[2].ln() - want).abs() < 1e-15);
    assert!(stock_path(&p, &xi, 0.0).is_err());
}

#[test]
fn reduction_chain() {
    let xi = IntensitySeries::from_signs(&signs(50, 0.6, 9), 0.6, 1.0 / 252.0).unwrap();
    let no_g = CsyParams::gaussian(0.07, 0.2, 0.4, 0.05, 0.0, 1.0).unwrap();
    let path = stock_path(&no_g, &xi, 1.0).unwrap();
    let acc = &path.accumulators;
    for k in 0..=50 {
        let want = (0.07 * path.t[k] + 0.2 * acc.x[k] + 0.4 * acc.y[k]).exp();
        assert!((path.s[k] - want).abs() < 1e-12);
    }
}

#[test]
fn telescoping_increments() {
    let p = sp_a();
    for seed in 0..5 {
        let xi = IntensitySeries::from_signs(&signs(500, 0.52, seed), 0.52, 1.0).unwrap();
        let path = stock_path(&p, &xi, 100.0).unwrap();
        let total: f64 = path.log_returns.iter().sum();
        assert!((total - (path.s[500] / 100.0).ln()).abs() < 1e-12);
    }
}

#[test]
fn sde_examples() {
    let flat = CsyParams::gaussian(0.03, 0.25, 0.0, 1.0, 0.0, 1.0).unwrap();
    let c = sde_coefficients(&flat, 0.7, -0.2).unwrap();
    assert!((c.n1 - (0.03 + 0.5 * 0.0625)).abs() < 1e-15 && c.n2 == 0.25);
    let p = sp_a();
    let (b, ib) = (0.8, -35.0);
    let c = sde_coefficients(&p, b, ib).unwrap();
    let (h, g) = (gauss(8.8, b), gauss(1800.0, ib));
    let n2 = 0.002 + 0.29 * h + 0.089 * g;
    assert!((c.n2 - n2).abs() < 1e-16);
    assert!((c.n1 - (0.0016 + 0.5 * n2 * n2)).abs() < 1e-15);
    assert!((c.theta(0.0001) - (c.n1 - 0.0001) / c.n2).abs() < 1e-15);
}

#[test]
fn ito_identity_on_random_fixtures() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let p = CsyParams::gaussian(
            rng.gen_range(-0.1..0.1),
            rng.gen_range(0.0..0.5),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.1..10.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.1..2000.0),
        )
        .unwrap();
        let c = sde_coefficients(&p, rng.gen_range(-3.0..3.0), rng.gen_range(-50.0..50.0)).unwrap();
        assert!((c.n1 - 0.5 * c.n2 * c.n2 - p.nu).abs() < 1e-12);
    }
}

#[test]
fn continuum_reductions() {
    let p = CsyParams { nu: 0.05, sigma: 0.2, gamma: 1.0, delta: 1.0, h: FilterSpec::zero(), g: FilterSpec::zero() };
    let path = simulate_continuum(&p, 1.0, 1.0, 1e-3, 4).unwrap();
    assert!(path.c.iter().all(|&c| c == 0.0) && path.g.iter().all(|&g| g == 0.0));
    for i in 0..path.t.len() {
        assert!((path.s[i] - (0.05 * path.t[i] + 0.2 * path.b[i]).exp()).abs() < 1e-12);
    }
    assert_eq!(path, simulate_continuum(&p, 1.0, 1.0, 1e-3, 4).unwrap());
    assert!(simulate_continuum(&p, 1.0, 1.0, 0.1, 4).is_err());
}

#[test]
fn stochastic_integral_has_zero_mean() {
    let p = CsyParams::gaussian(0.0, 0.2, 0.5, 0.5, 0.5, 0.2).unwrap();
    let paths = simulate_continuum_paths(&p, 1.0, 1.0, 1e-2, 10_000, 17).unwrap();
    for pick in [|q: &ContinuumPath| *q.c.last().unwrap(), |q: &ContinuumPath| *q.g.last().unwrap()] {
        let xs: Vec<f64> = paths.iter().map(pick).collect();
        let m = xs.iter().sum::<f64>() / xs.len() as f64;
        let sd = (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64).sqrt();
        assert!(m.abs() < 4.0 * sd / (xs.len() as f64).sqrt(), "mean {m}, sd {sd}");
    }
}

#[test]
fn refining_the_grid_moves_c_by_euler_order() {
    let p = CsyParams::gaussian(0.0, 0.2, 1.0, 1.0, 0.0, 1.0).unwrap();
    let fine_dt: f64 = 1e-4;
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let fine: Vec<f64> =
        (0..10_000).map(|_| fine_dt.sqrt() * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect();
    let coarse: Vec<f64> = fine.chunks(2).map(|c| c[0] + c[1]).collect();
    let a = continuum_from_increments(&p, 1.0, fine_dt, &fine);
    let b = continuum_from_increments(&p, 1.0, 2.0 * fine_dt, &coarse);
    assert!((a.b.last().unwrap() - b.b.last().unwrap()).abs() < 1e-12);
    let gap = (a.c.last().unwrap() - b.c.last().unwrap()).abs();
    // Left-point sums differ by Σ h'(B)·ΔB₁ΔB₂ terms: O(√dt) with |h'| ≤ 0.25.
    assert!(gap < 0.25 * (2.0 * fine_dt).sqrt() * 3.0, "{gap}");
}

#[test]
fn bandpass_examples() {
    let xi = IntensitySeries::from_signs(&signs(252, 0.5, 2024), 0.5, 1.0).unwrap();
    let traces = bandpass_experiment(&[1e9], &xi).unwrap();
    let acc = accumulate(&xi, &FilterSpec::zero(), &FilterSpec::zero());
    let c = 1.0 / (1e9 * (2.0 * PI).sqrt());
    for (v, x) in traces[0].v.iter().zip(&acc.x) {
        assert!((v - c * x).abs() <= 1e-9 * c * x.abs().max(1.0));
    }
    let list = [1.0, 10.0, 100.0, 1000.0];
    let traces = bandpass_experiment(&list, &xi).unwrap();
    for i in 0..4 {
        for j in i + 1..4 {
            assert_ne!(traces[i].v, traces[j].v);
        }
    }
    // On this fixture the peak amplitude falls as the bandwidth widens; the
    // filter changes the shape of V, not only its scale.
    let m: Vec<f64> = traces.iter().map(|t| t.max_abs_v).collect();
    assert!(m.windows(2).all(|w| w[1] < w[0]), "{m:?}");
    let ratio = |t: &BandpassTrace| -> Vec<f64> {
        t.v.iter().zip(&acc.x).skip(1).filter(|(_, x)| **x != 0.0).map(|(v, x)| v / x).collect()
    };
    let spread = |r: Vec<f64>| r.iter().cloned().fold(f64::MIN, f64::max) - r.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread(ratio(&traces[0])) > 0.1);
    assert!(bandpass_experiment(&[], &xi).is_err());
}

#[test]
fn trace_csv_header() {
    let p = sp_a();
    let xi = IntensitySeries::from_signs(&[true, false], 0.5, 1.0).unwrap();
    let path = stock_path(&p, &xi, 1.0).unwrap();
    let e = eta_series(&p, &xi, EtaIndexing::Previsible).unwrap();
    let csv = path_trace_csv(&path, &e);
    assert!(csv.starts_with("step,X,Y,V,eta,S\n"));
    assert_eq!(csv.lines().count(), 4);
}

proptest! {
    #[test]
    fn moments_hold_for_all_p(p in 0.001f64..0.999) {
        let (m, v) = IntensitySeries::empty(p, 1.0).unwrap().two_point_moments();
        prop_assert!(m.abs() < 1e-12);
        prop_assert!((v - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eta_bounded_below_by_sigma(ups in prop::collection::vec(any::<bool>(), 1..80), gamma in 0.0f64..1.0, delta in 0.0f64..1.0) {
        let p = CsyParams::gaussian(0.001, 0.01, gamma, 3.0, delta, 50.0).unwrap();
        let xi = IntensitySeries::from_signs(&ups, 0.5, 1.0).unwrap();
        let e = eta_series(&p, &xi, EtaIndexing::Previsible).unwrap();
        prop_assert!(e.eta.iter().all(|&v| v >= p.sigma));
    }
}
