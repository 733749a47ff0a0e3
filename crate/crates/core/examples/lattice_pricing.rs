//! European options on the general binomial tree with a natural upturn
//! probability, under the exact and first-order risk-neutral measures.

use std::error::Error;

use csylattice::bsm::bsm_price;
use csylattice::lattice::{
    build_time_grid, build_tree, price_backward_induction, GridSpec, MarketParams, Measure, OneStepMove, OptionSpec,
    UpturnModel,
};
use csylattice::market_data::OptionKind;

fn main() -> Result<(), Box<dyn Error>> {
    let params = MarketParams::new(0.08, 0.2, 0.02)?;
    let (s0, strike, t) = (100.0, 100.0, 1.0);

    let mv = OneStepMove::compute(&params, 0.5, 1.0 / 252.0)?;
    println!(
        "daily step at p = 1/2: U = {:.6}, D = {:.6}, q exact = {:.6}, q approx = {:.6}",
        mv.up_log, mv.down_log, mv.q_exact, mv.q_approx
    );

    let bs = bsm_price(s0, strike, t, params.r, params.sigma, OptionKind::Call)?;
    println!("\nBlack-Scholes call: {bs:.6}");
    println!("   n      p     exact q     approx q");
    for n in [50, 200, 1000] {
        let grid = build_time_grid(&GridSpec::Uniform { n, maturity: t })?;
        for p in [0.3, 0.5, 0.7] {
            let upturn = UpturnModel::constant(p);
            let call = OptionSpec::call(strike, t)?;
            let exact =
                price_backward_induction(&build_tree(&grid, s0, &params, &upturn, Measure::RiskNeutralExact)?, &call)?;
            let approx =
                price_backward_induction(&build_tree(&grid, s0, &params, &upturn, Measure::RiskNeutralApprox)?, &call)?;
            println!("{n:>5}  {p:.1}  {:>10.6}  {:>10.6}", exact.f0, approx.f0);
        }
    }

    // A non-uniform grid: weekly steps for a month, then monthly.
    let mut times: Vec<f64> = (0..=4).map(|w| w as f64 / 52.0).collect();
    times.extend((2..=12).map(|m| m as f64 / 12.0));
    let grid = build_time_grid(&GridSpec::Explicit(times))?;
    let lat = build_tree(&grid, s0, &params, &UpturnModel::constant(0.55), Measure::RiskNeutralExact)?;
    let put = price_backward_induction(&lat, &OptionSpec::put(strike, t)?)?;
    println!("\nput on a {}-step mixed grid: {:.6} (delta at 0: {:.4})", grid.n_steps(), put.f0, put.deltas[0][0]);
    Ok(())
}
