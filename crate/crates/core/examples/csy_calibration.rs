//! Fits the six CSY parameters to stock returns generated from a known
//! parameter vector plus noise.

use std::error::Error;

use csylattice::calibration::{fit_csy, fit_csy_reduced, CsyFitOptions, CsyParamVector};
use csylattice::csy::{stock_path, IntensitySeries};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> Result<(), Box<dyn Error>> {
    let truth = CsyParamVector { nu: 0.0016, sigma: 0.002, gamma: 0.29, sigma_h: 8.8, delta: 0.089, sigma_g: 1800.0 };
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let ups: Vec<bool> = (0..1000).map(|_| rng.gen_bool(0.53)).collect();
    let xi = IntensitySeries::from_signs(&ups, 0.53, 1.0)?;

    let clean = stock_path(&truth.to_params()?, &xi, 1.0)?.log_returns;
    let noisy: Vec<f64> = clean
        .iter()
        .map(|r| {
            let z: f64 = StandardNormal.sample(&mut rng);
            r + 0.005 * z
        })
        .collect();

    let opts = CsyFitOptions { r: 2e-5, n_starts: 6, seed: 1, ..Default::default() };
    let fit = fit_csy(&noisy, &xi, &opts)?;
    let p = &fit.params;
    println!("           truth       fitted");
    for (name, t, f) in [
        ("nu", truth.nu, p.nu),
        ("sigma", truth.sigma, p.sigma),
        ("gamma", truth.gamma, p.gamma),
        ("sigma_h", truth.sigma_h, p.sigma_h),
        ("delta", truth.delta, p.delta),
        ("sigma_g", truth.sigma_g, p.sigma_g),
    ] {
        println!("{name:<8} {t:>10.4}  {f:>11.4}");
    }
    println!("rmse {:.5} (noise 0.005), {} distinct solutions", fit.rmse, fit.solutions.len());
    if !fit.boundary_flags.is_empty() {
        println!("at bounds: {}", fit.boundary_flags.join(", "));
    }

    // Without the filter terms the fit can only get worse.
    let reduced = fit_csy_reduced(&noisy, &xi, opts.r)?;
    println!("reduced model rmse {:.5}", reduced.rmse);
    Ok(())
}
