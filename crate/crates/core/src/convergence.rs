//! Convergence of binomial terminal laws to the lognormal limit.
//!
//! Trees are compared with their continuous limit through distribution-level
//! criteria: the Kolmogorov–Smirnov distance between the exact binomial
//! terminal law and the lognormal CDF, or the largest gap between matched
//! quantiles scaled by the initial price.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::csv_string;
use crate::lattice::{Lattice, MarketParams, OneStepMove};
use crate::stats::{binomial_pmf, norm_cdf, norm_quantile};

/// Default cap on the step count searched by the required-n experiments.
pub const DEFAULT_N_CAP: usize = 1_000_000;

/// Terminal prices of `n_paths` geometric Brownian motions, each built from
/// `n_steps` exact log-normal increments.
///
/// Path `i` draws from a ChaCha8 generator seeded with `seed` on stream `i`,
/// so results do not depend on thread scheduling.
pub fn simulate_gbm(
    params: &MarketParams,
    s0: f64,
    t: f64,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if n_steps == 0 || n_paths == 0 || !(t > 0.0) || !(s0 > 0.0) {
        return Err(Error::invalid("simulate_gbm needs positive counts, maturity and spot"));
    }
    let dt = t / n_steps as f64;
    let drift = (params.mu - 0.5 * params.sigma * params.sigma) * dt;
    let vol = params.sigma * dt.sqrt();
    Ok((0..n_paths)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut x = 0.0;
            for _ in 0..n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                x += drift + vol * z;
            }
            s0 * x.exp()
        })
        .collect())
}

/// Exact law of the terminal price of a recombining tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TerminalDistribution {
    /// Ascending support points.
    pub support: Vec<f64>,
    pub probs: Vec<f64>,
}

impl TerminalDistribution {
    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(s, p)| s * p).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.probs.iter().sum()
    }
}

/// Terminal law of `n` identical steps with up probability `prob`.
pub fn binomial_terminal(s0: f64, up_log: f64, down_log: f64, prob: f64, n: usize) -> TerminalDistribution {
    let spread = up_log - down_log;
    let base = n as f64 * down_log;
    TerminalDistribution {
        support: (0..=n).map(|j| s0 * (base + j as f64 * spread).exp()).collect(),
        probs: binomial_pmf(n, prob),
    }
}

pub fn terminal_distribution(lattice: &Lattice) -> Result<TerminalDistribution> {
    if !lattice.recombining {
        return Err(Error::invalid("terminal_distribution needs a recombining lattice"));
    }
    let st = lattice.steps[0];
    if lattice.steps.iter().any(|s| s.prob != st.prob || s.up_log != st.up_log || s.down_log != st.down_log) {
        return Err(Error::invalid("terminal_distribution needs identical steps"));
    }
    let n = lattice.n_steps();
    Ok(TerminalDistribution { support: lattice.levels[n].clone(), probs: binomial_pmf(n, st.prob) })
}

/// Lognormal law of `S_T = s0·exp((drift − σ²/2)T + σ√T·Z)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LognormalLimit {
    pub s0: f64,
    pub drift: f64,
    pub sigma: f64,
    pub t: f64,
}

impl LognormalLimit {
    fn log_mean(&self) -> f64 {
        self.s0.ln() + (self.drift - 0.5 * self.sigma * self.sigma) * self.t
    }

    fn log_sd(&self) -> f64 {
        self.sigma * self.t.sqrt()
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        norm_cdf((x.ln() - self.log_mean()) / self.log_sd())
    }

    pub fn quantile(&self, u: f64) -> f64 {
        (self.log_mean() + self.log_sd() * norm_quantile(u)).exp()
    }
}

/// Supremum distance between the discrete CDF of `dist` and the limit CDF.
/// Both one-sided gaps are checked at every atom.
pub fn ks_distance_to_lognormal(dist: &TerminalDistribution, limit: &LognormalLimit) -> f64 {
    let m = limit.log_mean();
    let s = limit.log_sd();
    let mut below = 0.0;
    let mut worst: f64 = 0.0;
    for (&x, &p) in dist.support.iter().zip(&dist.probs) {
        let f = norm_cdf((x.ln() - m) / s);
        let at = below + p;
        worst = worst.max((below - f).abs()).max((at - f).abs());
        below = at;
    }
    worst
}

/// Largest gap between the discrete and limit quantiles at `levels`,
/// divided by the initial price.
pub fn quantile_coupling_distance(dist: &TerminalDistribution, limit: &LognormalLimit, levels: &[f64]) -> f64 {
    let mut cum = Vec::with_capacity(dist.probs.len());
    let mut c = 0.0;
    for &p in &dist.probs {
        c += p;
        cum.push(c);
    }
    levels
        .iter()
        .map(|&u| {
            let j = cum.partition_point(|&c| c < u).min(dist.support.len() - 1);
            (dist.support[j] - limit.quantile(u)).abs() / limit.s0
        })
        .fold(0.0, f64::max)
}

/// Discrepancy functional used by the required-n searches.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Criterion {
    Ks {
        threshold: f64,
    },
    /// Quantile levels `i/(n_levels + 1)`, `i = 1..=n_levels`.
    QuantileCoupling {
        threshold: f64,
        n_levels: usize,
    },
}

impl Default for Criterion {
    fn default() -> Self {
        Criterion::Ks { threshold: 1e-3 }
    }
}

impl Criterion {
    pub fn threshold(&self) -> f64 {
        match self {
            Criterion::Ks { threshold } | Criterion::QuantileCoupling { threshold, .. } => *threshold,
        }
    }

    pub fn with_threshold(&self, threshold: f64) -> Criterion {
        match self {
            Criterion::Ks { .. } => Criterion::Ks { threshold },
            Criterion::QuantileCoupling { n_levels, .. } => {
                Criterion::QuantileCoupling { threshold, n_levels: *n_levels }
            }
        }
    }

    pub fn descriptor(&self) -> String {
        match self {
            Criterion::Ks { threshold } => format!("ks<={threshold:e}"),
            Criterion::QuantileCoupling { threshold, n_levels } => format!("quantile{n_levels}<={threshold:e}"),
        }
    }

    pub fn evaluate(&self, dist: &TerminalDistribution, limit: &LognormalLimit) -> f64 {
        match self {
            Criterion::Ks { .. } => ks_distance_to_lognormal(dist, limit),
            Criterion::QuantileCoupling { n_levels, .. } => {
                let levels: Vec<f64> = (1..=*n_levels).map(|i| i as f64 / (*n_levels as f64 + 1.0)).collect();
                quantile_coupling_distance(dist, limit, &levels)
            }
        }
    }
}

/// Result of one required-n search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub param: f64,
    pub n_required: usize,
    pub discrepancy: f64,
    pub criterion: String,
    /// True when the cap was reached without meeting the threshold; the
    /// report then carries the cap and the discrepancy there.
    pub cap_hit: bool,
}

/// Smallest `n` with `eval(n) ≤ threshold`, found by doubling from 1 and
/// bisecting the last bracket.
pub fn search_required_n(eval: impl Fn(usize) -> f64, threshold: f64, cap: usize) -> (usize, f64, bool) {
    let mut hi = 1usize;
    let mut prev_fail = 0usize;
    let mut d_hi;
    loop {
        d_hi = eval(hi);
        if d_hi <= threshold {
            break;
        }
        if hi >= cap {
            return (cap, d_hi, true);
        }
        prev_fail = hi;
        hi = (hi * 2).min(cap);
    }
    let mut lo = prev_fail;
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        let d = eval(mid);
        if d <= threshold {
            hi = mid;
            d_hi = d;
        } else {
            lo = mid;
        }
    }
    (hi, d_hi, false)
}

fn report(param: f64, criterion: &Criterion, eval: impl Fn(usize) -> f64, cap: usize) -> ConvergenceReport {
    let (n, d, cap_hit) = search_required_n(eval, criterion.threshold(), cap);
    ConvergenceReport { param, n_required: n, discrepancy: d, criterion: criterion.descriptor(), cap_hit }
}

/// Required step count against the natural upturn probability: the
/// natural-measure tree with constant `p` versus the lognormal law with
/// drift `params.mu`.
pub fn required_n_vs_p(
    p_grid: &[f64],
    params: &MarketParams,
    s0: f64,
    t: f64,
    criterion: &Criterion,
    cap: usize,
) -> Result<Vec<ConvergenceReport>> {
    if let Some(p) = p_grid.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
        return Err(Error::invalid(format!("p = {p} outside (0,1)")));
    }
    let limit = LognormalLimit { s0, drift: params.mu, sigma: params.sigma, t };
    Ok(p_grid
        .par_iter()
        .map(|&p| {
            let eval = |n: usize| {
                let mv = OneStepMove::compute(params, p, t / n as f64).expect("validated p and dt");
                criterion.evaluate(&binomial_terminal(s0, mv.up_log, mv.down_log, p, n), &limit)
            };
            report(p, criterion, eval, cap)
        })
        .collect())
}

/// Required step count against the drift `μ` for the risk-neutral tree
/// built with the exact q, compared with the lognormal law with drift `r`.
/// Step counts at which q is infeasible count as not converged.
#[allow(clippy::too_many_arguments)]
pub fn required_n_vs_mu(
    mu_grid: &[f64],
    sigma: f64,
    r: f64,
    p: f64,
    s0: f64,
    t: f64,
    criterion: &Criterion,
    cap: usize,
) -> Result<Vec<ConvergenceReport>> {
    if !(p > 0.0 && p < 1.0) || !(sigma > 0.0) {
        return Err(Error::invalid("required_n_vs_mu needs p in (0,1) and sigma > 0"));
    }
    let limit = LognormalLimit { s0, drift: r, sigma, t };
    Ok(mu_grid
        .par_iter()
        .map(|&mu| {
            let params = MarketParams { mu, sigma, r };
            let eval = |n: usize| {
                let mv = OneStepMove::compute(&params, p, t / n as f64).expect("validated p and dt");
                if !(mv.q_exact > 0.0 && mv.q_exact < 1.0) {
                    return f64::INFINITY;
                }
                criterion.evaluate(&binomial_terminal(s0, mv.up_log, mv.down_log, mv.q_exact, n), &limit)
            };
            report(mu, criterion, eval, cap)
        })
        .collect())
}

/// Number of steps covering `t` at step size `dt`.
pub fn steps_for(t: f64, dt: f64) -> usize {
    (t / dt).round() as usize
}

/// CSV with header `param,n_required,discrepancy,criterion`. Cap hits are
/// marked by a `;cap_hit` suffix on the criterion.
pub fn reports_csv(reports: &[ConvergenceReport]) -> String {
    csv_string(
        &["param", "n_required", "discrepancy", "criterion"],
        reports.iter().map(|r| {
            let crit = if r.cap_hit { format!("{};cap_hit", r.criterion) } else { r.criterion.clone() };
            [r.param.to_string(), r.n_required.to_string(), r.discrepancy.to_string(), crit]
        }),
    )
}
