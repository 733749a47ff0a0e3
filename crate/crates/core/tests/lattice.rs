use csylattice::bsm::{bsm_price, implied_vol};
use csylattice::lattice::*;
use csylattice::market_data::OptionKind;
use proptest::prelude::*;

fn params(mu: f64, sigma: f64, r: f64) -> MarketParams {
    MarketParams::new(mu, sigma, r).unwrap()
}

#[allow(clippy::too_many_arguments)]
fn price(s0: f64, k: f64, t: f64, n: usize, mp: &MarketParams, p: f64, measure: Measure, kind: OptionKind) -> f64 {
    let grid = TimeGrid::uniform(n, t).unwrap();
    let lat = build_tree(&grid, s0, mp, &UpturnModel::constant(p), measure).unwrap();
    price_backward_induction(&lat, &OptionSpec::new(kind, k, t).unwrap()).unwrap().f0
}

#[test]
fn grid_examples() {
    let g = build_time_grid(&GridSpec::Uniform { n: 4, maturity: 1.0 }).unwrap();
    assert_eq!(g.steps(), vec![0.25; 4]);
    let g = build_time_grid(&GridSpec::Explicit(vec![0.0, 0.1, 0.5, 1.0])).unwrap();
    let want = [0.1, 0.4, 0.5];
    for (a, b) in g.steps().iter().zip(want) {
        assert!((a - b).abs() < 1e-15);
    }
    assert!(!g.is_uniform());
    assert!(build_time_grid(&GridSpec::Explicit(vec![0.0, 0.5, 0.5, 1.0])).is_err());
}

#[test]
fn one_step_move_examples() {
    let mv = one_step_move(&params(0.05, 0.2, 0.05), 0.6, 0.01).unwrap();
    assert_eq!(mv.q_approx, 0.6);
    // θ = 1 with σ = 0.2: μ − r = 0.2.
    let mv = one_step_move(&params(0.25, 0.2, 0.05), 0.5, 0.01).unwrap();
    assert!((mv.q_approx - 0.45).abs() < 1e-15);
    let (mu, sigma, p, dt) = (0.1f64, 0.2f64, 0.6f64, 0.01f64);
    let mv = one_step_move(&params(mu, sigma, 0.02), p, dt).unwrap();
    let ratio = (1.0 - p) / p;
    let want = (mu - ratio * sigma * sigma / 2.0) * dt + sigma * ratio.sqrt() * dt.sqrt();
    assert!((mv.up_log - want).abs() < 1e-15);
    assert!((mv.up_log - 0.0171963).abs() < 5e-7);
    assert!(mv.up_log > mv.down_log);
}

#[test]
fn infeasible_q_is_an_arbitrage_error() {
    let err = one_step_move(&params(3.0, 0.1, 0.0), 0.5, 1.0).unwrap_err();
    match err {
        csylattice::Error::Arbitrage { max_feasible_dt, .. } => {
            let h = max_feasible_dt.expect("a smaller step is feasible");
            assert!(h < 1.0 && one_step_move(&params(3.0, 0.1, 0.0), 0.5, h).is_ok());
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn step_moments() {
    let mp = params(0.09, 0.3, 0.01);
    for p in [0.1, 0.3, 0.5, 0.7, 0.99] {
        for dt in [1.0, 0.1, 0.01, 1.0 / 252.0, 1e-4] {
            let mv = OneStepMove::compute(&mp, p, dt).unwrap();
            let (m, v) = step_moment_check(&mv);
            assert!((m - (mp.mu - 0.5 * mp.sigma * mp.sigma) * dt).abs() < 1e-12);
            // Direct two-point variance.
            let want = p * (mv.up_log - m).powi(2) + (1.0 - p) * (mv.down_log - m).powi(2);
            assert!((v - want).abs() < 1e-12);
            assert!((v - two_point_variance(mp.sigma, p, dt)).abs() < 1e-12);
        }
    }
    let mv = OneStepMove::compute(&mp, 0.5, 0.04).unwrap();
    let (m, v) = step_moment_check(&mv);
    assert!((m - 0.5 * (mv.up_log + mv.down_log)).abs() < 1e-15);
    assert!((v - mp.sigma * mp.sigma * 0.04).abs() < 1e-15);
}

#[test]
fn delta_examples() {
    let mp = params(0.05, 0.2, 0.02);
    assert_eq!(delta_position(3.0, 3.0, 100.0, &mp, 0.5, 0.25, DeltaMode::Exact).unwrap(), 0.0);
    let a = delta_position(10.0, 0.0, 100.0, &mp, 0.9, 0.25, DeltaMode::Approx).unwrap().abs();
    let b = delta_position(10.0, 0.0, 100.0, &mp, 0.999, 0.25, DeltaMode::Approx).unwrap().abs();
    assert!(b < a);
    // Replication: Δ·S(e^U − e^D) = f_u − f_d.
    let mv = one_step_move(&mp, 0.5, 0.25).unwrap();
    let (su, sd) = (100.0 * mv.up_log.exp(), 100.0 * mv.down_log.exp());
    let (fu, fd) = ((su - 100.0f64).max(0.0), (sd - 100.0f64).max(0.0));
    let delta = delta_position(fu, fd, 100.0, &mp, 0.5, 0.25, DeltaMode::Exact).unwrap();
    let bond = (fu - delta * su) * (-0.02f64 * 0.25).exp();
    assert!((delta - (fu - fd) / (su - sd)).abs() < 1e-13);
    assert!((delta * sd + bond * (0.02f64 * 0.25).exp() - fd).abs() < 1e-12);
    let grid = TimeGrid::uniform(1, 0.25).unwrap();
    let lat = build_tree(&grid, 100.0, &mp, &UpturnModel::constant(0.5), Measure::RiskNeutralExact).unwrap();
    let pr = price_backward_induction(&lat, &OptionSpec::call(100.0, 0.25).unwrap()).unwrap();
    assert!((pr.deltas[0][0] - delta).abs() < 1e-13);
    assert!((pr.f0 - (delta * 100.0 + bond)).abs() < 1e-12);
}

#[test]
fn one_step_tree_is_the_hand_formula() {
    let mp = params(0.08, 0.2, 0.02);
    let mv = one_step_move(&mp, 0.5, 1.0).unwrap();
    let (fu, fd) = ((100.0 * mv.up_log.exp() - 95.0f64).max(0.0), (100.0 * mv.down_log.exp() - 95.0f64).max(0.0));
    let want = (-0.02f64).exp() * (mv.q_exact * fu + (1.0 - mv.q_exact) * fd);
    let got = price(100.0, 95.0, 1.0, 1, &mp, 0.5, Measure::RiskNeutralExact, OptionKind::Call);
    assert!((got - want).abs() < 1e-13, "{got} vs {want}");
    let e = mv.q_exact * mv.up_log.exp() + (1.0 - mv.q_exact) * mv.down_log.exp();
    assert!((e - 0.02f64.exp()).abs() < 1e-15);
}

#[test]
fn uniform_constant_p_recombines() {
    let mp = params(0.08, 0.2, 0.02);
    let lat =
        build_tree(&TimeGrid::uniform(30, 1.0).unwrap(), 1.0, &mp, &UpturnModel::constant(0.55), Measure::Natural)
            .unwrap();
    assert!(lat.recombining);
    assert_eq!(lat.levels[30].len(), 31);
    let grid = TimeGrid::new(vec![0.0, 0.1, 0.3, 0.35, 0.7]).unwrap();
    let lat = build_tree(&grid, 1.0, &mp, &UpturnModel::constant(0.55), Measure::Natural).unwrap();
    assert!(!lat.recombining);
    assert_eq!(lat.levels[4].len(), 16);
    assert!(price_backward_induction(&lat, &OptionSpec::call(1.0, 0.7).unwrap()).is_err());
}

#[test]
fn time_varying_upturn_is_validated() {
    let mp = params(0.08, 0.2, 0.02);
    let bad = UpturnModel { p0: 0.5, p1: 2.0, p2: 0.0 };
    assert!(build_tree(&TimeGrid::uniform(4, 1.0).unwrap(), 1.0, &mp, &bad, Measure::Natural).is_err());
}

#[test]
fn constant_payoff_discounts() {
    let mp = params(0.08, 0.2, 0.03);
    let grid = TimeGrid::uniform(40, 2.0).unwrap();
    let lat = build_tree(&grid, 100.0, &mp, &UpturnModel::constant(0.45), Measure::RiskNeutralApprox).unwrap();
    let pr = price_backward_induction(&lat, &OptionSpec::custom(|_| 7.0, 2.0).unwrap()).unwrap();
    assert!((pr.f0 - 7.0 * (-0.06f64).exp()).abs() < 1e-12);
    let terminal = lat.levels[40].iter().map(|&s| (s - 100.0f64).max(0.0)).collect::<Vec<_>>();
    let pr = price_backward_induction(&lat, &OptionSpec::call(100.0, 2.0).unwrap()).unwrap();
    assert_eq!(pr.values[40], terminal);
}

#[test]
fn put_call_parity_at_500_steps() {
    let mp = params(0.08, 0.2, 0.02);
    let c = price(100.0, 105.0, 1.0, 500, &mp, 0.5, Measure::RiskNeutralExact, OptionKind::Call);
    let p = price(100.0, 105.0, 1.0, 500, &mp, 0.5, Measure::RiskNeutralExact, OptionKind::Put);
    let want = 100.0 - 105.0 * (-0.02f64).exp();
    assert!(((c - p) - want).abs() / want.abs() < 1e-3);
}

/// Discounted expectation by enumerating all 2^n paths of a (possibly
/// non-recombining) lattice.
fn enumerate(lat: &Lattice, g: &dyn Fn(f64) -> f64) -> f64 {
    let n = lat.n_steps();
    let mut total = 0.0;
    for path in 0..(1usize << n) {
        let (mut logs, mut prob, mut disc) = (0.0, 1.0, 0.0);
        for (k, st) in lat.steps.iter().enumerate() {
            let up = (path >> k) & 1 == 1;
            logs += if up { st.up_log } else { st.down_log };
            prob *= if up { st.prob } else { 1.0 - st.prob };
            disc += st.rate * st.dt;
        }
        total += prob * (-disc).exp() * g(lat.s0 * logs.exp());
    }
    total
}

#[test]
fn linear_claims_match_path_enumeration() {
    let mp = params(0.11, 0.25, 0.04);
    for n in [1usize, 3, 7, 12] {
        let mut instants = vec![0.0];
        for k in 1..=n {
            instants.push(instants[k - 1] + 0.05 + 0.01 * (k % 3) as f64);
        }
        let grid = TimeGrid::new(instants).unwrap();
        let t = grid.maturity();
        let lat = build_tree(&grid, 50.0, &mp, &UpturnModel { p0: 0.52, p1: 0.1, p2: 0.0 }, Measure::RiskNeutralExact)
            .unwrap();
        let g = |s: f64| 3.0 * s - 20.0;
        let pr = price_backward_induction(&lat, &OptionSpec::custom(g, t).unwrap()).unwrap();
        let want = enumerate(&lat, &g);
        assert!((pr.f0 - want).abs() < 1e-10, "n = {n}");
        // Discounted martingale: value of S is S0.
        let pr = price_backward_induction(&lat, &OptionSpec::custom(|s| s, t).unwrap()).unwrap();
        assert!((pr.f0 - 50.0).abs() < 1e-10);
    }
}

#[test]
fn lattice_json_round_trips() {
    let mp = params(0.08, 0.2, 0.02);
    let lat = build_tree(
        &TimeGrid::uniform(3, 1.0).unwrap(),
        100.0,
        &mp,
        &UpturnModel::constant(0.5),
        Measure::RiskNeutralExact,
    )
    .unwrap();
    let back: Lattice = serde_json::from_str(&lat.to_json()).unwrap();
    assert_eq!(back, lat);
}

#[test]
fn bsm_examples() {
    let c = bsm_price(100.0, 1e-9, 1.0, 0.02, 0.2, OptionKind::Call).unwrap();
    assert!((c - 100.0).abs() < 1e-7);
    let (s0, k, t, r, sigma): (f64, f64, f64, f64, f64) = (100.0, 100.0, 1.0, 0.02, 0.2);
    let c = bsm_price(s0, k, t, r, sigma, OptionKind::Call).unwrap();
    let p = bsm_price(s0, k, t, r, sigma, OptionKind::Put).unwrap();
    assert!((c - p - (s0 - k * (-r * t).exp())).abs() < 1e-12);
    // Composite Simpson rule over the standard normal variable.
    let m = 200_000;
    let (a, b) = (-12.0, 12.0);
    let h = (b - a) / m as f64;
    let integrand = |z: f64| {
        let st = s0 * ((r - 0.5 * sigma * sigma) * t + sigma * t.sqrt() * z).exp();
        (st - k).max(0.0) * (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let mut sum = integrand(a) + integrand(b);
    for i in 1..m {
        sum += integrand(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    let quad = (-r * t).exp() * sum * h / 3.0;
    assert!((c - quad).abs() < 1e-8, "{c} vs {quad}");
}

#[test]
fn implied_vol_examples() {
    let p = bsm_price(100.0, 90.0, 0.5, 0.01, 0.2, OptionKind::Put).unwrap();
    assert!((implied_vol(p, 100.0, 90.0, 0.5, 0.01, OptionKind::Put).unwrap() - 0.2).abs() < 1e-8);
    let intrinsic = 100.0 - 90.0 * (-0.01f64 * 0.5).exp();
    assert!(implied_vol(intrinsic - 1e-3, 100.0, 90.0, 0.5, 0.01, OptionKind::Call).is_err());
    let mut prev = 0.0;
    for i in 1..=10 {
        let price = 2.0 + i as f64;
        let s = implied_vol(price, 100.0, 100.0, 1.0, 0.01, OptionKind::Call).unwrap();
        assert!(s > prev);
        prev = s;
    }
}

#[test]
fn q_rules_agree_to_first_order() {
    // Fitted constant on a 100-point grid, then a margin.
    let mut c: f64 = 0.0;
    let mut cases = Vec::new();
    for p in [0.3, 0.45, 0.5, 0.6, 0.7] {
        for mu in [0.0, 0.05, 0.1, 0.2] {
            for dt in [0.1, 0.01, 1.0 / 252.0, 1e-3, 1e-4] {
                let mv = OneStepMove::compute(&params(mu, 0.25, 0.02), p, dt).unwrap();
                c = c.max((mv.q_exact - mv.q_approx).abs() / dt);
                cases.push((mv, dt));
            }
        }
    }
    assert_eq!(cases.len(), 100);
    assert!(c < 2.0, "fitted constant {c}");
}

proptest! {
    #[test]
    fn moment_mean_identity(p in 0.02f64..0.98, dt in 1e-5f64..1.0, mu in -0.5f64..0.5, sigma in 0.01f64..1.0) {
        let mv = OneStepMove::compute(&MarketParams { mu, sigma, r: 0.0 }, p, dt).unwrap();
        let (m, _) = step_moment_check(&mv);
        prop_assert!((m - (mu - 0.5 * sigma * sigma) * dt).abs() < 1e-12);
        if mv.up_log <= mv.down_log {
            let mp = MarketParams { mu, sigma, r: 0.0 };
            prop_assert!(one_step_move(&mp, p, dt).is_err());
        }
    }

    #[test]
    fn q_approx_decreases_in_theta(p in 0.05f64..0.95, dt in 1e-4f64..0.5, t1 in -2.0f64..2.0, gap in 1e-3f64..1.0) {
        let q = |theta: f64| OneStepMove::compute(&MarketParams { mu: 0.01 + theta * 0.2, sigma: 0.2, r: 0.01 }, p, dt).unwrap().q_approx;
        prop_assert!(q(t1 + gap) < q(t1));
        prop_assert!((q(1e-12) - p).abs() < 1e-10);
    }

    #[test]
    fn calls_monotone_in_strike_and_maturity(k in 80.0f64..120.0, dk in 0.5f64..10.0, n in 5usize..60) {
        let mp = MarketParams { mu: 0.07, sigma: 0.25, r: 0.02 };
        let dt = 0.01;
        let c = |k: f64, n: usize| price(100.0, k, n as f64 * dt, n, &mp, 0.5, Measure::RiskNeutralExact, OptionKind::Call);
        prop_assert!(c(k + dk, n) <= c(k, n) + 1e-12);
        prop_assert!(c(k, n + 5) >= c(k, n) - 1e-12);
    }
}
