//! How many tree steps the natural-world binomial terminal law needs to be
//! within a KS distance of its lognormal limit, as p and μ vary.

use std::error::Error;

use csylattice::convergence::{reports_csv, required_n_vs_mu, required_n_vs_p, simulate_gbm, Criterion, DEFAULT_N_CAP};
use csylattice::lattice::MarketParams;

fn main() -> Result<(), Box<dyn Error>> {
    let params = MarketParams::new(0.08, 0.2, 0.02)?;
    let crit = Criterion::Ks { threshold: 5e-3 };

    let p_grid: Vec<f64> = (1..=9).map(|i| i as f64 / 10.0).collect();
    let by_p = required_n_vs_p(&p_grid, &params, 100.0, 1.0, &crit, DEFAULT_N_CAP)?;
    println!("required n against p ({})", crit.descriptor());
    print!("{}", reports_csv(&by_p));

    let by_mu = required_n_vs_mu(&[0.5, 1.0, 2.0, 5.0, 10.0], 0.2, 0.02, 0.5, 100.0, 1.0, &crit, DEFAULT_N_CAP)?;
    println!("\nrequired n against mu");
    print!("{}", reports_csv(&by_mu));

    let draws = simulate_gbm(&params, 100.0, 1.0, 252, 20_000, 42)?;
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    println!("\nGBM sample mean of S_T: {mean:.3} (exact {:.3})", 100.0 * 0.08f64.exp());
    Ok(())
}
