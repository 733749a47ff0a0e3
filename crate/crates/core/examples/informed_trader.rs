//! A trader who knows the next index move with probability (1 + λ√Δt)/2:
//! information ratio, optimal allocation, option prices under the informed
//! measure and the λ implied back out of those prices.

use std::error::Error;

use chrono::NaiveDate;
use csylattice::calibration::{days_between, implied_lambda_surface, DayCount, LambdaSearch, SurfaceSettings};
use csylattice::csy::{price_csy, CsyParams, CsyPricingConfig, IntensitySeries};
use csylattice::informed::{
    information_ratio, informed_step, optimal_allocation, price_informed, StepParams, TraderSpec,
};
use csylattice::lattice::OptionSpec;
use csylattice::market_data::{OptionChain, OptionKind, OptionQuote};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn Error>> {
    // Allocation and market price of risk for a stock with θ = 0.1.
    println!("lambda   IR      N_opt   Theta_opt");
    for lambda in [0.0, 0.05, 0.2, 0.5] {
        let ir = information_ratio(lambda, 0.53)?;
        let (n, obj) = optimal_allocation(lambda, 0.1, 0.53)?;
        println!("{lambda:<6} {ir:>6.4}  {n:>6.3}  {obj:>8.5}");
    }

    let step = StepParams { nu: 0.04, eta: 0.2, r: 0.01, p_up: 0.53, dt: 1.0 / 252.0 };
    let s = informed_step(&step, &TraderSpec::new(0.3)?)?;
    println!(
        "\none informed step: nu_aleph = {:.6}, q_aleph = {:.6}, dividend = {:.6}",
        s.nu_aleph, s.q_aleph, s.dividend
    );

    let params = CsyParams::gaussian(0.0016, 0.01, 0.29, 8.8, 0.089, 1800.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let ups: Vec<bool> = (0..40).map(|_| rng.gen_bool(0.53)).collect();
    let xi = IntensitySeries::from_signs(&ups, 0.53, 1.0)?;
    let cfg = CsyPricingConfig::default();
    let r = 8e-5;
    let call = OptionSpec::new(OptionKind::Call, 100.0, 10.0)?;
    let plain = price_csy(100.0, &params, &xi, &[r], &call, &cfg)?.f0;
    println!("\n10-day call: CSY {plain:.5}");
    for lambda in [1e-3, 5e-3, 2e-2] {
        let f = price_informed(100.0, &params, &xi, &TraderSpec::new(lambda)?, &[r], &call, &cfg, None)?.f0;
        println!("  informed, lambda = {lambda:<6}: {f:.5}");
    }

    // Quotes priced with λ = 2e-3 and the λ that reproduces each one.
    let quote_date = NaiveDate::from_ymd_opt(2020, 1, 2).unwrap();
    let trader = TraderSpec::new(2e-3)?;
    let mut quotes = Vec::new();
    for expiry in [NaiveDate::from_ymd_opt(2020, 1, 8).unwrap(), NaiveDate::from_ymd_opt(2020, 1, 14).unwrap()] {
        let n = days_between(quote_date, expiry, DayCount::Weekdays);
        for strike in [98.0, 100.0, 102.0] {
            let opt = OptionSpec::new(OptionKind::Call, strike, n as f64)?;
            let price = price_informed(100.0, &params, &xi, &trader, &[r], &opt, &cfg, None)?.f0;
            quotes.push(OptionQuote { expiry, strike, kind: OptionKind::Call, price });
        }
    }
    let chain = OptionChain::new(quote_date, quotes)?;
    let surf = implied_lambda_surface(
        &chain,
        100.0,
        &params,
        &xi,
        r,
        &SurfaceSettings::default(),
        &cfg,
        &LambdaSearch::default(),
    )?;
    println!("\nimplied lambda (true 2e-3)");
    print!("{}", surf.to_csv());
    Ok(())
}
