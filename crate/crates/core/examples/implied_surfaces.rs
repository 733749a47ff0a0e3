//! Implied risk-neutral and natural upturn probabilities over the bundled
//! option chain, and the volatility deviation of CSY tree prices.

use std::error::Error;
use std::path::Path;

use csylattice::calibration::{
    csy_dev_surface, implied_p_surface, implied_q_surface, q_minus_p_surface, CellStatus, ConstantQModel, SurfaceGrid,
    SurfaceSettings,
};
use csylattice::csy::{CsyParams, CsyPricingConfig, IntensitySeries};
use csylattice::market_data::load_option_chain;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn show(title: &str, s: &SurfaceGrid) {
    println!("\n{title} (rows: maturity in days, columns: K/S0)");
    print!("{:>6}", "");
    for m in &s.moneyness {
        print!("{m:>8.3}");
    }
    println!();
    for (t, row) in s.maturity.iter().zip(&s.values) {
        print!("{t:>6}");
        for v in row {
            match v {
                Some(v) => print!("{v:>8.3}"),
                None => print!("{:>8}", "-"),
            }
        }
        println!();
    }
}

fn main() -> Result<(), Box<dyn Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let chain = load_option_chain(&root.join("chain.csv"))?;
    let s0 = 326.52;
    let r = 0.0055 / 252.0;
    let model = ConstantQModel { mu: 6.2e-4, sigma: 0.02, r };
    let settings = SurfaceSettings::default();

    let q = implied_q_surface(&chain, s0, &model, &settings)?;
    let p = implied_p_surface(&q, &model, settings.dt)?;
    let diff = q_minus_p_surface(&q, &p);
    show("implied q", &q);
    show("implied p", &p);
    show("q - p", &diff);

    let failed = q.status.iter().flatten().filter(|s| **s != CellStatus::Ok).count();
    println!("\n{failed} of {} q cells did not calibrate", q.status.iter().flatten().count());

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ups: Vec<bool> = (0..40).map(|_| rng.gen_bool(0.53)).collect();
    let xi = IntensitySeries::from_signs(&ups, 0.53, 1.0)?;
    let params = CsyParams::gaussian(0.0016, 0.01, 0.29, 8.8, 0.089, 1800.0)?;
    let dev = csy_dev_surface(&chain, s0, &params, &xi, r, &settings, &CsyPricingConfig::default())?;
    show("DEV of CSY prices", &dev.annotate(-1.0, 1.0));
    Ok(())
}
