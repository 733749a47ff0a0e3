//! Systematic-factor series: ARMA(1,1)-GJR-GARCH(1,1) standardized
//! residuals and Jensen / Fama–French three-factor alpha series.

use std::path::Path;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{csv_string, parse_date, parse_f64, read_columns};
use crate::market_data::RateCurve;
use crate::optim::{nelder_mead_restarted, NmOptions};
use crate::stats::{mean, sample_variance};

/// Innovation law of the GARCH filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Innovation {
    #[default]
    Gaussian,
    /// Student-t rescaled to unit variance; needs `dof > 2`.
    StudentT,
}

/// `R_k = μ + φ(R_{k−1} − μ) + a_k + θa_{k−1}`, `a_k = σ_k ε_k`,
/// `σ_k² = α0 + (α1 + γ1 I_{k−1}) a_{k−1}² + β1 σ_{k−1}²` with
/// `I_{k−1} = 1` when `a_{k−1} < 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArmaGjrGarchParams {
    pub mu: f64,
    pub phi1: f64,
    pub theta1: f64,
    pub alpha0: f64,
    pub alpha1: f64,
    pub beta1: f64,
    pub gamma1: f64,
    pub innovation: Innovation,
    /// Degrees of freedom for Student-t innovations.
    pub dof: Option<f64>,
}

impl ArmaGjrGarchParams {
    /// `α1 + β1 + γ1/2`.
    pub fn persistence(&self) -> f64 {
        self.alpha1 + self.beta1 + 0.5 * self.gamma1
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha0 > 0.0) || !(self.alpha1 >= 0.0) || !(self.beta1 >= 0.0) {
            return Err(Error::invalid("GARCH needs alpha0 > 0, alpha1 ≥ 0, beta1 ≥ 0"));
        }
        if !(self.persistence() < 1.0) || !(self.alpha1 + self.gamma1 >= 0.0) {
            return Err(Error::invalid(format!(
                "GARCH needs alpha1 + beta1 + gamma1/2 < 1 and alpha1 + gamma1 ≥ 0 (persistence {})",
                self.persistence()
            )));
        }
        if self.innovation == Innovation::StudentT && !matches!(self.dof, Some(v) if v > 2.0) {
            return Err(Error::invalid("Student-t innovations need dof > 2"));
        }
        Ok(())
    }

    /// Unconditional variance `α0 / (1 − α1 − β1 − γ1/2)`.
    pub fn unconditional_variance(&self) -> f64 {
        self.alpha0 / (1.0 - self.persistence())
    }
}

/// Simulates `n` returns after discarding `burn_in` draws, starting from
/// the unconditional variance.
pub fn simulate_arma_gjr_garch(params: &ArmaGjrGarchParams, n: usize, burn_in: usize, seed: u64) -> Result<Vec<f64>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t_dist = match params.innovation {
        Innovation::StudentT => {
            Some(StudentT::new(params.dof.unwrap_or(f64::NAN)).map_err(|e| Error::invalid(e.to_string()))?)
        }
        Innovation::Gaussian => None,
    };
    let t_scale = params.dof.map(|v| ((v - 2.0) / v).sqrt()).unwrap_or(1.0);
    let mut out = Vec::with_capacity(n);
    let (mut r_prev, mut a_prev, mut s2_prev) = (params.mu, 0.0, params.unconditional_variance());
    for i in 0..n + burn_in {
        let s2 = params.alpha0
            + (params.alpha1 + if a_prev < 0.0 { params.gamma1 } else { 0.0 }) * a_prev * a_prev
            + params.beta1 * s2_prev;
        let eps: f64 = match &t_dist {
            Some(t) => t.sample(&mut rng) * t_scale,
            None => StandardNormal.sample(&mut rng),
        };
        let a = s2.sqrt() * eps;
        let r = params.mu + params.phi1 * (r_prev - params.mu) + a + params.theta1 * a_prev;
        if i >= burn_in {
            out.push(r);
        }
        r_prev = r;
        a_prev = a;
        s2_prev = s2;
    }
    Ok(out)
}

/// Innovations `a_k` and conditional variances `σ_k²`. The pre-sample
/// return equals `μ`, the pre-sample innovation is 0 and `σ_0² = sigma0_sq`.
pub fn garch_filter(params: &ArmaGjrGarchParams, returns: &[f64], sigma0_sq: f64) -> (Vec<f64>, Vec<f64>) {
    let n = returns.len();
    let mut a = Vec::with_capacity(n);
    let mut s2 = Vec::with_capacity(n);
    for k in 0..n {
        if k == 0 {
            a.push(returns[0] - params.mu);
            s2.push(sigma0_sq);
            continue;
        }
        let ap = a[k - 1];
        let v = params.alpha0
            + (params.alpha1 + if ap < 0.0 { params.gamma1 } else { 0.0 }) * ap * ap
            + params.beta1 * s2[k - 1];
        s2.push(v);
        a.push(returns[k] - params.mu - params.phi1 * (returns[k - 1] - params.mu) - params.theta1 * ap);
    }
    (a, s2)
}

fn loglik_terms_with(params: &ArmaGjrGarchParams, returns: &[f64], sigma0_sq: f64) -> Vec<f64> {
    let (a, s2) = garch_filter(params, returns, sigma0_sq);
    let ln2pi = (2.0 * std::f64::consts::PI).ln();
    match params.innovation {
        Innovation::Gaussian => a.iter().zip(&s2).map(|(a, v)| -0.5 * (ln2pi + v.ln() + a * a / v)).collect(),
        Innovation::StudentT => {
            let nu = params.dof.unwrap_or(f64::NAN);
            let c = libm::lgamma(0.5 * (nu + 1.0))
                - libm::lgamma(0.5 * nu)
                - 0.5 * (std::f64::consts::PI * (nu - 2.0)).ln();
            a.iter()
                .zip(&s2)
                .map(|(a, v)| c - 0.5 * v.ln() - 0.5 * (nu + 1.0) * (1.0 + a * a / (v * (nu - 2.0))).ln())
                .collect()
        }
    }
}

/// Per-observation log-likelihood with `σ_0²` at the sample variance.
pub fn loglik_terms(params: &ArmaGjrGarchParams, returns: &[f64]) -> Vec<f64> {
    loglik_terms_with(params, returns, sample_variance(returns))
}

pub fn log_likelihood(params: &ArmaGjrGarchParams, returns: &[f64]) -> f64 {
    loglik_terms(params, returns).iter().sum()
}

#[derive(Debug, Clone)]
pub struct GarchOptions {
    pub innovation: Innovation,
    /// Estimate `γ1`; when false the fit is a plain GARCH(1,1).
    pub gjr: bool,
    pub n_starts: usize,
    pub seed: u64,
    /// For GJR fits, also start from the optimum of the nested `γ1 = 0` fit.
    pub nested_warm_start: bool,
    pub nm: NmOptions,
}

impl Default for GarchOptions {
    fn default() -> Self {
        GarchOptions {
            innovation: Innovation::Gaussian,
            gjr: true,
            n_starts: 8,
            seed: 0,
            nested_warm_start: true,
            nm: NmOptions { max_evals: 20_000, f_tol: 1e-11, x_tol: 1e-9, initial_step: 0.05 },
        }
    }
}

/// One fitted parameter with its outer-product-of-gradients standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamEstimate {
    pub name: String,
    pub value: f64,
    pub std_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GarchFit {
    pub params: ArmaGjrGarchParams,
    pub log_likelihood: f64,
    pub converged: bool,
    pub n_obs: usize,
    pub estimates: Vec<ParamEstimate>,
    /// Innovations `a_k`.
    pub innovations: Vec<f64>,
    /// Conditional standard deviations `σ_k`.
    pub sigmas: Vec<f64>,
    /// Log-likelihood at each start point, in start order.
    pub start_log_likelihoods: Vec<f64>,
}

impl GarchFit {
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Export<'a> {
            format_version: u32,
            params: &'a ArmaGjrGarchParams,
            log_likelihood: f64,
            converged: bool,
            n_obs: usize,
            estimates: &'a [ParamEstimate],
        }
        serde_json::to_string_pretty(&Export {
            format_version: crate::lattice::FORMAT_VERSION,
            params: &self.params,
            log_likelihood: self.log_likelihood,
            converged: self.converged,
            n_obs: self.n_obs,
            estimates: &self.estimates,
        })
        .expect("fit serializes")
    }

    pub fn std_error(&self, name: &str) -> Option<f64> {
        self.estimates.iter().find(|e| e.name == name).and_then(|e| e.std_error)
    }
}

/// Optimizer coordinates: `[μ/sd, φ1, θ1, ln(α0/var), α1, β1, (γ1), (ln(dof − 2))]`.
struct Coords {
    sd: f64,
    var: f64,
    gjr: bool,
    innovation: Innovation,
}

impl Coords {
    fn bounds(&self) -> (Vec<f64>, Vec<f64>) {
        let mut lo = vec![-2.0, -0.99, -0.99, -30.0, 0.0, 0.0];
        let mut hi = vec![2.0, 0.99, 0.99, 0.0, 1.0, 1.0];
        if self.gjr {
            lo.push(-1.0);
            hi.push(1.0);
        }
        if self.innovation == Innovation::StudentT {
            lo.push(0.05f64.ln());
            hi.push(500f64.ln());
        }
        (lo, hi)
    }

    fn decode(&self, z: &[f64]) -> ArmaGjrGarchParams {
        let mut i = 6;
        let gamma1 = if self.gjr {
            i += 1;
            z[6]
        } else {
            0.0
        };
        let dof = (self.innovation == Innovation::StudentT).then(|| 2.0 + z[i].exp());
        ArmaGjrGarchParams {
            mu: z[0] * self.sd,
            phi1: z[1],
            theta1: z[2],
            alpha0: z[3].exp() * self.var,
            alpha1: z[4],
            beta1: z[5],
            gamma1,
            innovation: self.innovation,
            dof,
        }
    }

    fn encode(&self, p: &ArmaGjrGarchParams) -> Vec<f64> {
        let mut z = vec![p.mu / self.sd, p.phi1, p.theta1, (p.alpha0 / self.var).ln(), p.alpha1, p.beta1];
        if self.gjr {
            z.push(p.gamma1);
        }
        if self.innovation == Innovation::StudentT {
            z.push((p.dof.unwrap_or(8.0) - 2.0).ln());
        }
        z
    }

    fn names(&self) -> Vec<&'static str> {
        let mut v = vec!["mu", "phi1", "theta1", "alpha0", "alpha1", "beta1"];
        if self.gjr {
            v.push("gamma1");
        }
        if self.innovation == Innovation::StudentT {
            v.push("dof");
        }
        v
    }

    /// Natural-coordinate values in the order of [`Coords::names`].
    fn natural(&self, p: &ArmaGjrGarchParams) -> Vec<f64> {
        let mut v = vec![p.mu, p.phi1, p.theta1, p.alpha0, p.alpha1, p.beta1];
        if self.gjr {
            v.push(p.gamma1);
        }
        if let Some(d) = p.dof {
            v.push(d);
        }
        v
    }

    fn to_params(&self, v: &[f64], template: &ArmaGjrGarchParams) -> ArmaGjrGarchParams {
        let mut p = ArmaGjrGarchParams {
            mu: v[0],
            phi1: v[1],
            theta1: v[2],
            alpha0: v[3],
            alpha1: v[4],
            beta1: v[5],
            ..*template
        };
        let mut i = 6;
        if self.gjr {
            p.gamma1 = v[6];
            i += 1;
        }
        if p.dof.is_some() {
            p.dof = Some(v[i]);
        }
        p
    }
}

fn objective(c: &Coords, returns: &[f64], z: &[f64]) -> f64 {
    let p = c.decode(z);
    let excess = (p.persistence() - (1.0 - 1e-6)).max(0.0) + (-(p.alpha1 + p.gamma1)).max(0.0);
    if excess > 0.0 {
        return 1e10 * (1.0 + excess);
    }
    let ll: f64 = loglik_terms_with(&p, returns, c.var).iter().sum();
    -ll / returns.len() as f64
}

fn random_start(c: &Coords, mean_over_sd: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let alpha1: f64 = rng.gen_range(0.01..0.2);
        let beta1: f64 = rng.gen_range(0.5..0.95);
        let gamma1: f64 = if c.gjr { rng.gen_range(-0.05..0.15) } else { 0.0 };
        let pers = alpha1 + beta1 + 0.5 * gamma1;
        if pers >= 0.99 || alpha1 + gamma1 < 0.0 {
            continue;
        }
        let mut z = vec![
            mean_over_sd + 0.05 * rng.sample::<f64, _>(StandardNormal),
            rng.gen_range(-0.5..0.5),
            rng.gen_range(-0.5..0.5),
            (1.0 - pers).ln(),
            alpha1,
            beta1,
        ];
        if c.gjr {
            z.push(gamma1);
        }
        if c.innovation == Innovation::StudentT {
            z.push(rng.gen_range(2.0f64..28.0).ln());
        }
        return z;
    }
}

/// Numerical per-observation scores and the OPG covariance.
fn opg_std_errors(c: &Coords, p: &ArmaGjrGarchParams, returns: &[f64]) -> Option<Vec<f64>> {
    let theta = c.natural(p);
    let floors: Vec<f64> = c
        .names()
        .iter()
        .map(|n| match *n {
            "mu" => c.sd,
            "alpha0" => p.alpha0,
            "dof" => 1.0,
            _ => 0.1,
        })
        .collect();
    let k = theta.len();
    let n = returns.len();
    let mut scores = DMatrix::<f64>::zeros(n, k);
    for i in 0..k {
        let h = 1e-5 * theta[i].abs().max(floors[i]);
        let mut up = theta.clone();
        let mut dn = theta.clone();
        up[i] += h;
        dn[i] -= h;
        let lu = loglik_terms_with(&c.to_params(&up, p), returns, c.var);
        let ld = loglik_terms_with(&c.to_params(&dn, p), returns, c.var);
        for t in 0..n {
            scores[(t, i)] = (lu[t] - ld[t]) / (2.0 * h);
        }
    }
    if !scores.iter().all(|v| v.is_finite()) {
        return None;
    }
    let info = scores.transpose() * &scores;
    let cov = info.try_inverse()?;
    let se: Vec<f64> = (0..k).map(|i| cov[(i, i)].sqrt()).collect();
    se.iter().all(|v| v.is_finite()).then_some(se)
}

/// Quasi-maximum-likelihood fit with `n_starts` seeded starts run in
/// parallel; the best likelihood wins, ties going to the earlier start.
pub fn fit_arma_gjr_garch(returns: &[f64], opts: &GarchOptions) -> Result<GarchFit> {
    if returns.len() < 250 {
        return Err(Error::invalid(format!("GARCH fit needs at least 250 observations, got {}", returns.len())));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("non-finite return in GARCH input"));
    }
    let var = sample_variance(returns);
    let scale = returns.iter().map(|r| r * r).sum::<f64>() / returns.len() as f64;
    if !(var > 1e-12 * scale) {
        return Err(Error::invalid("GARCH input has zero variance"));
    }
    if opts.n_starts == 0 {
        return Err(Error::invalid("GARCH fit needs at least one start"));
    }
    let c = Coords { sd: var.sqrt(), var, gjr: opts.gjr, innovation: opts.innovation };
    let (lo, hi) = c.bounds();
    let m = mean(returns) / c.sd;

    let mut starts = Vec::with_capacity(opts.n_starts + 1);
    let mut default = vec![m, 0.0, 0.0, 0.05f64.ln(), 0.05, 0.9];
    if c.gjr {
        default.push(0.0);
    }
    if c.innovation == Innovation::StudentT {
        default.push(6f64.ln());
    }
    starts.push(default);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 1..opts.n_starts {
        starts.push(random_start(&c, m, &mut rng));
    }
    if opts.gjr && opts.nested_warm_start {
        let nested =
            fit_arma_gjr_garch(returns, &GarchOptions { gjr: false, nested_warm_start: false, ..opts.clone() });
        let nested_params = match nested {
            Ok(f) => Some(f.params),
            Err(Error::NotConverged { .. }) => None,
            Err(e) => return Err(e),
        };
        if let Some(p) = nested_params {
            starts.push(c.encode(&ArmaGjrGarchParams { gamma1: 0.0, ..p }));
        }
    }

    let f = |z: &[f64]| objective(&c, returns, z);
    let results: Vec<_> = starts
        .par_iter()
        .map(|z0| {
            let f0 = f(z0);
            (f0, nelder_mead_restarted(f, z0, &lo, &hi, &opts.nm, 6))
        })
        .collect();
    let nobs = returns.len() as f64;
    let start_log_likelihoods: Vec<f64> = results.iter().map(|(f0, _)| -f0 * nobs).collect();
    let mut best = 0;
    for (i, (_, r)) in results.iter().enumerate() {
        if r.fx < results[best].1.fx {
            best = i;
        }
    }
    let res = &results[best].1;
    let params = c.decode(&res.x);
    if !results.iter().any(|(_, r)| r.converged) {
        return Err(Error::NotConverged {
            message: "no GARCH start converged".into(),
            best_params: c.natural(&params),
            best_value: -res.fx * nobs,
        });
    }
    let (a, s2) = garch_filter(&params, returns, var);
    let se = opg_std_errors(&c, &params, returns);
    let estimates = c
        .names()
        .iter()
        .zip(c.natural(&params))
        .enumerate()
        .map(|(i, (name, value))| ParamEstimate { name: name.to_string(), value, std_error: se.as_ref().map(|s| s[i]) })
        .collect();
    Ok(GarchFit {
        params,
        log_likelihood: loglik_terms_with(&params, returns, var).iter().sum(),
        converged: res.converged,
        n_obs: returns.len(),
        estimates,
        innovations: a,
        sigmas: s2.iter().map(|v| v.sqrt()).collect(),
        start_log_likelihoods,
    })
}

/// Standardized residuals `ε_k = a_k / σ_k`.
pub fn garch_residuals(fit: &GarchFit) -> Result<Vec<f64>> {
    fit.innovations
        .iter()
        .zip(&fit.sigmas)
        .enumerate()
        .map(|(k, (a, s))| {
            if !(*s > 0.0) {
                return Err(Error::numerical(format!("zero conditional sigma at {k}")));
            }
            Ok(a / s)
        })
        .collect()
}

/// Least squares of `y` on an intercept and the given factor columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorRegression {
    pub intercept: f64,
    pub betas: Vec<f64>,
    pub residuals: Vec<f64>,
}

pub fn ols_with_intercept(y: &[f64], factors: &[&[f64]]) -> Result<FactorRegression> {
    let n = y.len();
    let k = factors.len() + 1;
    if factors.iter().any(|f| f.len() != n) {
        return Err(Error::invalid("factor columns and returns differ in length"));
    }
    if n < k {
        return Err(Error::invalid(format!("{n} observations cannot identify {k} coefficients")));
    }
    let x = DMatrix::from_fn(n, k, |i, j| if j == 0 { 1.0 } else { factors[j - 1][i] });
    let qr = x.clone().qr();
    let r = qr.r();
    let scale = (0..k).map(|i| r[(i, i)].abs()).fold(0.0, f64::max);
    if (0..k).any(|i| r[(i, i)].abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) * (n as f64).sqrt()) {
        return Err(Error::invalid("factor matrix is rank deficient"));
    }
    let qty = qr.q().transpose() * DVector::from_column_slice(y);
    let b = r.solve_upper_triangular(&qty).ok_or_else(|| Error::invalid("factor matrix is rank deficient"))?;
    let fitted = &x * &b;
    Ok(FactorRegression {
        intercept: b[0],
        betas: b.iter().skip(1).copied().collect(),
        residuals: (0..n).map(|i| y[i] - fitted[i]).collect(),
    })
}

/// `α_k = excess_k − Σ β_j f_{j,k}`, which keeps the intercept inside `α`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSeries {
    pub dates: Vec<NaiveDate>,
    pub alpha: Vec<f64>,
    pub intercept: f64,
    pub factor_names: Vec<String>,
    pub betas: Vec<f64>,
}

impl AlphaSeries {
    pub fn to_csv(&self) -> String {
        csv_string(&["date", "alpha"], self.dates.iter().zip(&self.alpha).map(|(d, a)| [d.to_string(), a.to_string()]))
    }

    pub fn beta(&self, name: &str) -> Option<f64> {
        self.factor_names.iter().position(|n| n == name).map(|i| self.betas[i])
    }
}

pub fn factor_alpha_series(dates: &[NaiveDate], excess: &[f64], factors: &[(&str, &[f64])]) -> Result<AlphaSeries> {
    if dates.len() != excess.len() {
        return Err(Error::invalid("dates and returns differ in length"));
    }
    let cols: Vec<&[f64]> = factors.iter().map(|(_, c)| *c).collect();
    let reg = ols_with_intercept(excess, &cols)?;
    let alpha = (0..excess.len())
        .map(|i| excess[i] - cols.iter().zip(&reg.betas).map(|(c, b)| b * c[i]).sum::<f64>())
        .collect();
    Ok(AlphaSeries {
        dates: dates.to_vec(),
        alpha,
        intercept: reg.intercept,
        factor_names: factors.iter().map(|(n, _)| n.to_string()).collect(),
        betas: reg.betas,
    })
}

/// Jensen alpha with per-period risk-free return `rate_at(date)·dt`.
pub fn jensen_alpha_series(
    dates: &[NaiveDate],
    stock: &[f64],
    market: &[f64],
    rf: &RateCurve,
    dt: f64,
) -> Result<AlphaSeries> {
    if stock.len() != dates.len() || market.len() != dates.len() {
        return Err(Error::invalid("stock, market and dates must be aligned"));
    }
    let rfs: Vec<f64> = dates.iter().map(|d| rf.rate_at(*d) * dt).collect();
    let ex_s: Vec<f64> = stock.iter().zip(&rfs).map(|(s, r)| s - r).collect();
    let ex_m: Vec<f64> = market.iter().zip(&rfs).map(|(m, r)| m - r).collect();
    factor_alpha_series(dates, &ex_s, &[("mkt", &ex_m)]).map_err(|e| match e {
        Error::InvalidInput(m) if m.contains("rank") => Error::invalid("market excess returns have zero variance"),
        other => other,
    })
}

/// Factor table with per-period decimal returns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorTable {
    pub dates: Vec<NaiveDate>,
    pub mkt_excess: Vec<f64>,
    pub smb: Vec<f64>,
    pub hml: Vec<f64>,
    pub rf: Vec<f64>,
}

impl FactorTable {
    pub fn to_csv(&self) -> String {
        csv_string(
            &["date", "mkt_excess", "smb", "hml", "rf"],
            (0..self.dates.len()).map(|i| {
                [
                    self.dates[i].to_string(),
                    self.mkt_excess[i].to_string(),
                    self.smb[i].to_string(),
                    self.hml[i].to_string(),
                    self.rf[i].to_string(),
                ]
            }),
        )
    }
}

/// Reads `date,mkt_excess,smb,hml,rf`.
pub fn load_factor_table(path: &Path) -> Result<FactorTable> {
    let cols = ["date", "mkt_excess", "smb", "hml", "rf"];
    let (records, idx) = read_columns(path, &cols)?;
    let mut t = FactorTable { dates: vec![], mkt_excess: vec![], smb: vec![], hml: vec![], rf: vec![] };
    for (i, rec) in records.iter().enumerate() {
        let line = i + 2;
        let get = |j: usize| rec.get(idx[j]).unwrap_or("");
        let d = parse_date(path, line, get(0))?;
        if t.dates.last().is_some_and(|p| *p >= d) {
            return Err(Error::parse(path, format!("line {line}: dates must be strictly increasing")));
        }
        t.dates.push(d);
        t.mkt_excess.push(parse_f64(path, line, cols[1], get(1))?);
        t.smb.push(parse_f64(path, line, cols[2], get(2))?);
        t.hml.push(parse_f64(path, line, cols[3], get(3))?);
        t.rf.push(parse_f64(path, line, cols[4], get(4))?);
    }
    if t.dates.is_empty() {
        return Err(Error::parse(path, "factor table has no rows"));
    }
    Ok(t)
}

/// Three-factor alpha; every stock date must appear in the table.
pub fn ff3_alpha_series(dates: &[NaiveDate], stock: &[f64], table: &FactorTable) -> Result<AlphaSeries> {
    if dates.len() != stock.len() {
        return Err(Error::invalid("dates and returns differ in length"));
    }
    let mut rows = Vec::with_capacity(dates.len());
    for d in dates {
        rows.push(table.dates.binary_search(d).map_err(|_| Error::invalid(format!("no factor row for {d}")))?);
    }
    let ex: Vec<f64> = rows.iter().zip(stock).map(|(&i, s)| s - table.rf[i]).collect();
    let m: Vec<f64> = rows.iter().map(|&i| table.mkt_excess[i]).collect();
    let s: Vec<f64> = rows.iter().map(|&i| table.smb[i]).collect();
    let h: Vec<f64> = rows.iter().map(|&i| table.hml[i]).collect();
    factor_alpha_series(dates, &ex, &[("mkt", &m), ("smb", &s), ("hml", &h)])
}
