use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::CsyParams;
use crate::error::{Error, Result};
use crate::io::csv_string;

/// Continuum-limit path sampled on a fine grid: Brownian motion `B`,
/// `C = ∫h(B)dB`, `G = ∫g(∫B du)dB` and the price `S`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuumPath {
    pub t: Vec<f64>,
    pub b: Vec<f64>,
    pub c: Vec<f64>,
    pub g: Vec<f64>,
    pub s: Vec<f64>,
}

/// Euler–Maruyama accumulation with left-point integrands from given
/// Brownian increments.
pub fn continuum_from_increments(params: &CsyParams, s0: f64, dt: f64, increments: &[f64]) -> ContinuumPath {
    let n = increments.len();
    let mut p = ContinuumPath {
        t: (0..=n).map(|i| i as f64 * dt).collect(),
        b: vec![0.0; n + 1],
        c: vec![0.0; n + 1],
        g: vec![0.0; n + 1],
        s: vec![s0; n + 1],
    };
    let mut integral_b = 0.0;
    for (i, &db) in increments.iter().enumerate() {
        p.b[i + 1] = p.b[i] + db;
        p.c[i + 1] = p.c[i] + params.h.eval(p.b[i]) * db;
        p.g[i + 1] = p.g[i] + params.g.eval(integral_b) * db;
        integral_b += p.b[i] * dt;
        p.s[i + 1] = s0
            * (params.nu * p.t[i + 1]
                + params.sigma * p.b[i + 1]
                + params.gamma * p.c[i + 1]
                + params.delta * p.g[i + 1])
                .exp();
    }
    p
}

fn increments(n: usize, dt: f64, seed: u64, stream: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let sq = dt.sqrt();
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            sq * z
        })
        .collect()
}

fn check(t: f64, dt_fine: f64) -> Result<usize> {
    if !(dt_fine > 0.0 && dt_fine <= 1e-2) || !(t > 0.0) {
        return Err(Error::invalid(format!("need T > 0 and 0 < dt_fine ≤ 1e-2 (got {dt_fine})")));
    }
    Ok((t / dt_fine).round().max(1.0) as usize)
}

/// One path, drawn from stream 0 of a ChaCha8 generator seeded with `seed`.
pub fn simulate_continuum(params: &CsyParams, s0: f64, t: f64, dt_fine: f64, seed: u64) -> Result<ContinuumPath> {
    let n = check(t, dt_fine)?;
    let dt = t / n as f64;
    Ok(continuum_from_increments(params, s0, dt, &increments(n, dt, seed, 0)))
}

/// `n_paths` paths; path `i` uses stream `i` of the seeded generator.
pub fn simulate_continuum_paths(
    params: &CsyParams,
    s0: f64,
    t: f64,
    dt_fine: f64,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<ContinuumPath>> {
    let n = check(t, dt_fine)?;
    let dt = t / n as f64;
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| continuum_from_increments(params, s0, dt, &increments(n, dt, seed, i as u64)))
        .collect())
}

/// CSV with header `t,B,C,G,S`.
pub fn continuum_csv(path: &ContinuumPath) -> String {
    csv_string(
        &["t", "B", "C", "G", "S"],
        (0..path.t.len()).map(|i| {
            [
                path.t[i].to_string(),
                path.b[i].to_string(),
                path.c[i].to_string(),
                path.g[i].to_string(),
                path.s[i].to_string(),
            ]
        }),
    )
}
