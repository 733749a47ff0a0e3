//! Path-dependent CSY stock paths driven by index intensities, their
//! volatility ladder, and the continuum limit.

use std::error::Error;

use csylattice::csy::{
    bandpass_experiment, eta_series, sde_coefficients, simulate_continuum, stock_path, CsyParams, EtaIndexing,
    IntensitySeries,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<(), Box<dyn Error>> {
    let params = CsyParams::gaussian(0.0016, 0.002, 0.29, 8.8, 0.089, 1800.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let ups: Vec<bool> = (0..250).map(|_| rng.gen_bool(0.53)).collect();
    let xi = IntensitySeries::from_signs(&ups, 0.53, 1.0)?;

    let path = stock_path(&params, &xi, 100.0)?;
    let eta = eta_series(&params, &xi, EtaIndexing::Previsible)?;
    println!("day    X       S        eta");
    for k in (0..=250).step_by(25) {
        println!("{k:>3}  {:>5.1}  {:>8.3}  {:.5}", path.accumulators.x[k], path.s[k], eta.eta[k]);
    }

    let c = sde_coefficients(&params, 1.0, -20.0)?;
    println!("\nat B = 1, ∫B = -20: drift N1 = {:.6}, diffusion N2 = {:.6}", c.n1, c.n2);

    let cont = simulate_continuum(&params, 100.0, 250.0, 0.01, 9)?;
    println!(
        "continuum path: S_T = {:.3}, C_T = {:.4}, G_T = {:.4}",
        cont.s.last().unwrap(),
        cont.c.last().unwrap(),
        cont.g.last().unwrap()
    );

    for tr in bandpass_experiment(&[1.0, 10.0, 100.0, 1000.0], &xi)? {
        println!("sigma_g = {:>6}: max |V| = {:.3}", tr.sigma_g, tr.max_abs_v);
    }
    Ok(())
}
