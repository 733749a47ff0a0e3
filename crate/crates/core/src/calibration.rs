//! Calibration: the CSY return regression and implied surfaces
//! (risk-neutral q, natural p, relative volatility deviation, information
//! intensity λ) over an option chain.

use chrono::{Datelike, NaiveDate, Weekday};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bsm::implied_vol;
use crate::bsm::price_bounds;
use crate::csy::{accumulate, price_csy, CsyParams, CsyPricingConfig, FilterSpec, IntensitySeries};
use crate::error::{Error, Result};
use crate::informed::{price_informed, TraderSpec};
use crate::io::csv_string;
use crate::lattice::{
    build_tree, price_backward_induction, MarketParams, Measure, OptionSpec, TimeGrid, UpturnModel, FORMAT_VERSION,
};
use crate::market_data::{OptionChain, OptionKind, OptionQuote};
use crate::optim::{brent_root, nelder_mead_restarted, scan_then_golden, NmOptions};

/// Natural probability recovered from a risk-neutral one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PFromQ {
    pub p: f64,
    pub clamped: bool,
}

/// `p = q + |θ|√(q(1−q)Δt) + (½ − q)θ²Δt`, clamped to `(0,1)`.
pub fn p_from_q(q: f64, theta: f64, dt: f64) -> Result<PFromQ> {
    if !(q > 0.0 && q < 1.0) || !(dt > 0.0) {
        return Err(Error::invalid(format!("p_from_q needs q in (0,1) and Δt > 0 (q = {q}, Δt = {dt})")));
    }
    let p = q + theta.abs() * (q * (1.0 - q) * dt).sqrt() + (0.5 - q) * theta * theta * dt;
    let eps = 1e-12;
    if p < eps || p > 1.0 - eps {
        return Ok(PFromQ { p: p.clamp(eps, 1.0 - eps), clamped: true });
    }
    Ok(PFromQ { p, clamped: false })
}

// ---------------------------------------------------------------------------
// CSY regression

/// The six CSY parameters with Gaussian filters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsyParamVector {
    pub nu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub sigma_h: f64,
    pub delta: f64,
    pub sigma_g: f64,
}

impl CsyParamVector {
    pub fn to_params(&self) -> Result<CsyParams> {
        CsyParams::gaussian(self.nu, self.sigma, self.gamma, self.sigma_h, self.delta, self.sigma_g)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CsyFitBounds {
    pub sigma_h: (f64, f64),
    pub sigma_g: (f64, f64),
}

impl Default for CsyFitBounds {
    fn default() -> Self {
        CsyFitBounds { sigma_h: (1e-3, 1e7), sigma_g: (1e-3, 1e7) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsyFitOptions {
    /// Risk-free rate per unit of the intensity's time step; `ν > r > 0`.
    pub r: f64,
    pub init: Option<CsyParamVector>,
    pub bounds: CsyFitBounds,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for CsyFitOptions {
    fn default() -> Self {
        CsyFitOptions { r: 0.0203 / 252.0, init: None, bounds: CsyFitBounds::default(), n_starts: 8, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsySolution {
    pub params: CsyParamVector,
    pub rmse: f64,
    pub start_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsyFit {
    pub format_version: u32,
    pub params: CsyParamVector,
    pub rmse: f64,
    pub residuals: Vec<f64>,
    pub start_point: CsyParamVector,
    /// Names of parameters sitting on a constraint: `nu_at_r`, `sigma_zero`,
    /// `gamma_zero`, `delta_zero`, `sigma_h_at_bound`, `sigma_g_at_bound`.
    pub boundary_flags: Vec<String>,
    /// Distinct local solutions within 1% of the best RMSE, best first.
    pub solutions: Vec<CsySolution>,
    /// RMSE at each start, in start order.
    pub start_rmse: Vec<f64>,
}

impl CsyFit {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("fit serializes")
    }
}

struct Design {
    y: Vec<f64>,
    dt: f64,
    sq_xi: Vec<f64>,
    x_prev: Vec<f64>,
    a_prev: Vec<f64>,
    r: f64,
}

impl Design {
    fn new(returns: &[f64], xi: &IntensitySeries, r: f64) -> Result<Design> {
        if returns.len() != xi.len() {
            return Err(Error::invalid(format!(
                "{} returns but {} intensities; the series must be aligned",
                returns.len(),
                xi.len()
            )));
        }
        if returns.len() < 8 {
            return Err(Error::invalid("CSY regression needs at least 8 observations"));
        }
        if !(r > 0.0) {
            return Err(Error::invalid("CSY regression needs r > 0"));
        }
        let acc = accumulate(xi, &FilterSpec::zero(), &FilterSpec::zero());
        let sq = xi.dt.sqrt();
        let n = returns.len();
        Ok(Design {
            y: returns.to_vec(),
            dt: xi.dt,
            sq_xi: xi.xi.iter().map(|v| sq * v).collect(),
            x_prev: acc.x[..n].to_vec(),
            a_prev: acc.arg_g[..n].to_vec(),
            r,
        })
    }

    fn columns(&self, sigma_h: f64, sigma_g: f64) -> [Vec<f64>; 4] {
        let h = FilterSpec::Gaussian { bandwidth: sigma_h };
        let g = FilterSpec::Gaussian { bandwidth: sigma_g };
        let n = self.y.len();
        [
            vec![self.dt; n],
            self.sq_xi.clone(),
            (0..n).map(|k| self.sq_xi[k] * h.eval(self.x_prev[k])).collect(),
            (0..n).map(|k| self.sq_xi[k] * g.eval(self.a_prev[k])).collect(),
        ]
    }

    fn residuals(&self, p: &CsyParamVector) -> Vec<f64> {
        let c = self.columns(p.sigma_h, p.sigma_g);
        (0..self.y.len())
            .map(|k| self.y[k] - p.nu * c[0][k] - p.sigma * c[1][k] - p.gamma * c[2][k] - p.delta * c[3][k])
            .collect()
    }

    /// Bounded least squares over `(ν, σ, γ, δ)` with `ν ≥ r`, the rest
    /// `≥ 0`, by enumerating which coefficients sit on their bound.
    /// `allowed` masks coefficients that may be nonzero (ν always is).
    fn profile(&self, sigma_h: f64, sigma_g: f64, allowed: [bool; 4]) -> (CsyParamVector, f64) {
        let cols = self.columns(sigma_h, sigma_g);
        let n = self.y.len();
        let y0: Vec<f64> = (0..n).map(|k| self.y[k] - self.r * cols[0][k]).collect();
        let mut best: Option<([f64; 4], f64)> = None;
        for mask in 0u32..16 {
            let free: Vec<usize> = (0..4).filter(|&j| mask & (1 << j) != 0).collect();
            if free.iter().any(|&j| !allowed[j]) {
                continue;
            }
            let mut coef = [0.0; 4];
            if !free.is_empty() {
                let x = DMatrix::from_fn(n, free.len(), |i, j| cols[free[j]][i]);
                let gram = x.transpose() * &x;
                let rhs = x.transpose() * DVector::from_column_slice(&y0);
                let Some(ch) = gram.cholesky() else { continue };
                let b = ch.solve(&rhs);
                if b.iter().any(|v| !(*v >= 0.0)) {
                    continue;
                }
                for (j, &f) in free.iter().enumerate() {
                    coef[f] = b[j];
                }
            }
            let sse: f64 = (0..n)
                .map(|k| {
                    let e = y0[k] - (0..4).map(|j| coef[j] * cols[j][k]).sum::<f64>();
                    e * e
                })
                .sum();
            if best.as_ref().is_none_or(|(_, s)| sse < *s) {
                best = Some((coef, sse));
            }
        }
        let (c, sse) = best.expect("the all-at-bound subset is always feasible");
        (
            CsyParamVector { nu: self.r + c[0], sigma: c[1], gamma: c[2], sigma_h, delta: c[3], sigma_g },
            (sse / n as f64).sqrt(),
        )
    }
}

fn rmse_of(res: &[f64]) -> f64 {
    (res.iter().map(|e| e * e).sum::<f64>() / res.len() as f64).sqrt()
}

fn finish_fit(
    design: &Design,
    best: CsyParamVector,
    start_point: CsyParamVector,
    bounds: &CsyFitBounds,
    solutions: Vec<CsySolution>,
    start_rmse: Vec<f64>,
) -> CsyFit {
    let residuals = design.residuals(&best);
    let mut flags = Vec::new();
    let near = |v: f64, b: f64| (v.ln() - b.ln()).abs() < 1e-6;
    if best.nu - design.r <= 1e-12 * design.r.max(1e-300) {
        flags.push("nu_at_r".to_string());
    }
    for (name, v) in [("sigma_zero", best.sigma), ("gamma_zero", best.gamma), ("delta_zero", best.delta)] {
        if v == 0.0 {
            flags.push(name.to_string());
        }
    }
    if near(best.sigma_h, bounds.sigma_h.0) || near(best.sigma_h, bounds.sigma_h.1) {
        flags.push("sigma_h_at_bound".to_string());
    }
    if near(best.sigma_g, bounds.sigma_g.0) || near(best.sigma_g, bounds.sigma_g.1) {
        flags.push("sigma_g_at_bound".to_string());
    }
    CsyFit {
        format_version: FORMAT_VERSION,
        params: best,
        rmse: rmse_of(&residuals),
        residuals,
        start_point,
        boundary_flags: flags,
        solutions,
        start_rmse,
    }
}

/// Least-squares fit of the CSY return regression
/// `R_k = νΔt + √Δt ξ_k (σ + γ h(X_{k−1}) + δ g(A_{k−1})) + ε_k`.
///
/// For fixed bandwidths the model is linear in `(ν, σ, γ, δ)`, so the
/// search runs Nelder–Mead over `(ln σ_h, ln σ_g)` and solves the bounded
/// linear problem exactly at every trial point.
pub fn fit_csy(stock_returns: &[f64], intensity: &IntensitySeries, opts: &CsyFitOptions) -> Result<CsyFit> {
    let design = Design::new(stock_returns, intensity, opts.r)?;
    let b = &opts.bounds;
    if !(b.sigma_h.0 > 0.0 && b.sigma_h.0 < b.sigma_h.1 && b.sigma_g.0 > 0.0 && b.sigma_g.0 < b.sigma_g.1) {
        return Err(Error::invalid("bandwidth bounds must satisfy 0 < lo < hi"));
    }
    if opts.n_starts == 0 {
        return Err(Error::invalid("CSY fit needs at least one start"));
    }
    let lo = [b.sigma_h.0.ln(), b.sigma_g.0.ln()];
    let hi = [b.sigma_h.1.ln(), b.sigma_g.1.ln()];
    let allowed = [true; 4];

    let mut starts: Vec<[f64; 2]> = Vec::with_capacity(opts.n_starts);
    let mut start_rmse = Vec::with_capacity(opts.n_starts);
    let mut start_points = Vec::with_capacity(opts.n_starts);
    if let Some(init) = &opts.init {
        init.to_params()?;
        if !(init.nu > opts.r) {
            return Err(Error::invalid("initial ν must exceed r"));
        }
        let z = [init.sigma_h.ln().clamp(lo[0], hi[0]), init.sigma_g.ln().clamp(lo[1], hi[1])];
        starts.push(z);
        start_rmse.push(rmse_of(&design.residuals(init)));
        start_points.push(*init);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    while starts.len() < opts.n_starts {
        let z = [rng.gen_range(lo[0]..hi[0]), rng.gen_range(lo[1]..hi[1])];
        let (p, rmse) = design.profile(z[0].exp(), z[1].exp(), allowed);
        starts.push(z);
        start_rmse.push(rmse);
        start_points.push(p);
    }

    let nm = NmOptions { max_evals: 4000, f_tol: 1e-15, x_tol: 1e-9, initial_step: 0.05 };
    let f = |z: &[f64]| design.profile(z[0].exp(), z[1].exp(), allowed).1;
    let results: Vec<(CsyParamVector, f64)> = starts
        .par_iter()
        .map(|z0| {
            let r = nelder_mead_restarted(f, z0, &lo, &hi, &nm, 4);
            design.profile(r.x[0].exp(), r.x[1].exp(), allowed)
        })
        .collect();

    let mut order: Vec<usize> = (0..results.len()).collect();
    order.sort_by(|&a, &b| results[a].1.total_cmp(&results[b].1).then(a.cmp(&b)));
    let best_i = order[0];
    let best_rmse = results[best_i].1;
    let mut solutions: Vec<CsySolution> = Vec::new();
    for &i in &order {
        let (p, rmse) = results[i];
        if rmse > 1.01 * best_rmse + 1e-300 {
            continue;
        }
        let dup = solutions.iter().any(|s| {
            (s.params.sigma_h.ln() - p.sigma_h.ln()).abs() < 1e-3
                && (s.params.sigma_g.ln() - p.sigma_g.ln()).abs() < 1e-3
        });
        if !dup {
            solutions.push(CsySolution { params: p, rmse, start_index: i });
        }
    }
    Ok(finish_fit(&design, results[best_i].0, start_points[best_i], b, solutions, start_rmse))
}

/// The nested model with `γ = δ = 0`: only `(ν, σ)` are estimated.
pub fn fit_csy_reduced(stock_returns: &[f64], intensity: &IntensitySeries, r: f64) -> Result<CsyFit> {
    let design = Design::new(stock_returns, intensity, r)?;
    let (p, rmse) = design.profile(1.0, 1.0, [true, true, false, false]);
    let sol = vec![CsySolution { params: p, rmse, start_index: 0 }];
    Ok(finish_fit(&design, p, p, &CsyFitBounds::default(), sol, vec![rmse]))
}

// ---------------------------------------------------------------------------
// Surfaces

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueKind {
    Q,
    P,
    QMinusP,
    Dev,
    Lambda,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    /// Quote outside the static no-arbitrage interval.
    BoundViolation,
    NoQuote,
    /// The best value misses the quote by more than the fit tolerance.
    NotConverged,
    /// The price does not respond to the parameter.
    Unidentified,
    /// Implied volatility could not be inverted.
    InversionFailed,
    /// The model could not price the contract.
    PricingFailed,
    /// The derived value was clamped into its domain.
    Clamped,
}

impl CellStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::BoundViolation => "bound_violation",
            CellStatus::NoQuote => "no_quote",
            CellStatus::NotConverged => "not_converged",
            CellStatus::Unidentified => "unidentified",
            CellStatus::InversionFailed => "inversion_failed",
            CellStatus::PricingFailed => "pricing_failed",
            CellStatus::Clamped => "clamped",
        }
    }
}

/// Summary of finite surface values against a reference interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandAnnotation {
    pub reference_band: (f64, f64),
    pub n_finite: usize,
    pub n_in_band: usize,
    pub observed_min: Option<f64>,
    pub observed_max: Option<f64>,
}

/// Values on a moneyness × maturity grid. `values[i][j]` belongs to
/// `maturity[i]` and `moneyness[j]`; a `None` value always carries a
/// non-`ok` status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceGrid {
    pub format_version: u32,
    pub kind: ValueKind,
    pub maturity_unit: String,
    pub moneyness: Vec<f64>,
    pub maturity: Vec<f64>,
    pub values: Vec<Vec<Option<f64>>>,
    pub status: Vec<Vec<CellStatus>>,
    pub annotation: Option<BandAnnotation>,
}

impl SurfaceGrid {
    /// Long-form CSV `moneyness,maturity,value,status`; failed cells have
    /// an empty value.
    pub fn to_csv(&self) -> String {
        let mut rows = Vec::new();
        for (i, t) in self.maturity.iter().enumerate() {
            for (j, m) in self.moneyness.iter().enumerate() {
                rows.push([
                    m.to_string(),
                    t.to_string(),
                    self.values[i][j].map(|v| v.to_string()).unwrap_or_default(),
                    self.status[i][j].as_str().to_string(),
                ]);
            }
        }
        csv_string(&["moneyness", "maturity", "value", "status"], rows)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("surface serializes")
    }

    /// Finite values in cell order.
    pub fn finite_values(&self) -> Vec<f64> {
        self.values.iter().flatten().filter_map(|v| *v).collect()
    }

    /// Applies `f` to every valued cell, producing a surface of another kind.
    pub fn map(&self, kind: ValueKind, f: impl Fn(f64, f64, f64) -> (Option<f64>, CellStatus)) -> SurfaceGrid {
        let mut out = SurfaceGrid { kind, annotation: None, ..self.clone() };
        for i in 0..self.maturity.len() {
            for j in 0..self.moneyness.len() {
                if let Some(v) = self.values[i][j] {
                    let (nv, st) = f(v, self.moneyness[j], self.maturity[i]);
                    out.values[i][j] = nv;
                    out.status[i][j] =
                        if nv.is_none() && st == CellStatus::Ok { CellStatus::PricingFailed } else { st };
                }
            }
        }
        out
    }

    pub fn annotate(mut self, lo: f64, hi: f64) -> Self {
        let v = self.finite_values();
        self.annotation = Some(BandAnnotation {
            reference_band: (lo, hi),
            n_finite: v.len(),
            n_in_band: v.iter().filter(|x| **x >= lo && **x <= hi).count(),
            observed_min: v.iter().copied().reduce(f64::min),
            observed_max: v.iter().copied().reduce(f64::max),
        });
        self
    }
}

/// How days to expiry become tree steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DayCount {
    Calendar,
    /// Monday–Friday days after the quote date up to and including expiry.
    #[default]
    Weekdays,
}

pub fn days_between(from: NaiveDate, to: NaiveDate, rule: DayCount) -> usize {
    match rule {
        DayCount::Calendar => (to - from).num_days().max(0) as usize,
        DayCount::Weekdays => from
            .iter_days()
            .skip(1)
            .take_while(|d| *d <= to)
            .filter(|d| !matches!(d.weekday(), Weekday::Sat | Weekday::Sun))
            .count(),
    }
}

/// Settings shared by the per-quote calibrations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSettings {
    /// Step size in the units of the model parameters (1 for daily units).
    pub dt: f64,
    pub day_count: DayCount,
    /// Only quotes of this kind are used; `None` keeps all.
    pub kind: Option<OptionKind>,
    /// Relative price error above which a cell is `not_converged`.
    pub fit_tol: f64,
}

impl Default for SurfaceSettings {
    fn default() -> Self {
        SurfaceSettings { dt: 1.0, day_count: DayCount::Weekdays, kind: Some(OptionKind::Call), fit_tol: 1e-6 }
    }
}

fn build_surface(
    kind: ValueKind,
    chain: &OptionChain,
    s0: f64,
    settings: &SurfaceSettings,
    cell: impl Fn(&OptionQuote, usize) -> (Option<f64>, CellStatus) + Sync,
) -> Result<SurfaceGrid> {
    if !(s0 > 0.0) || !(settings.dt > 0.0) {
        return Err(Error::invalid("surfaces need a positive spot and step size"));
    }
    let quotes: Vec<(&OptionQuote, usize)> = chain
        .quotes
        .iter()
        .filter(|q| settings.kind.is_none_or(|k| k == q.kind))
        .map(|q| (q, days_between(chain.quote_date, q.expiry, settings.day_count)))
        .filter(|(_, d)| *d > 0)
        .collect();
    if quotes.is_empty() {
        return Err(Error::invalid("no usable quotes in the chain"));
    }
    let mut mny: Vec<f64> = quotes.iter().map(|(q, _)| q.strike / s0).collect();
    mny.sort_by(f64::total_cmp);
    mny.dedup();
    let mut mat: Vec<f64> = quotes.iter().map(|(_, d)| *d as f64).collect();
    mat.sort_by(f64::total_cmp);
    mat.dedup();
    let mut owner = vec![vec![None; mny.len()]; mat.len()];
    for (idx, (q, d)) in quotes.iter().enumerate() {
        let i = mat.partition_point(|t| *t < *d as f64);
        let j = mny.partition_point(|m| *m < q.strike / s0);
        if owner[i][j].is_none() {
            owner[i][j] = Some(idx);
        }
    }
    let cells: Vec<(usize, usize, usize)> = owner
        .iter()
        .enumerate()
        .flat_map(|(i, row)| row.iter().enumerate().filter_map(move |(j, o)| o.map(|idx| (i, j, idx))))
        .collect();
    let results: Vec<(usize, usize, Option<f64>, CellStatus)> = cells
        .par_iter()
        .map(|&(i, j, idx)| {
            let (q, d) = quotes[idx];
            let (v, st) = cell(q, d);
            (i, j, v.filter(|x| x.is_finite()), st)
        })
        .collect();
    let mut values = vec![vec![None; mny.len()]; mat.len()];
    let mut status = vec![vec![CellStatus::NoQuote; mny.len()]; mat.len()];
    for (i, j, v, st) in results {
        values[i][j] = v;
        status[i][j] = if v.is_none() && st == CellStatus::Ok { CellStatus::PricingFailed } else { st };
    }
    Ok(SurfaceGrid {
        format_version: FORMAT_VERSION,
        kind,
        maturity_unit: match settings.day_count {
            DayCount::Calendar => "calendar_days".into(),
            DayCount::Weekdays => "weekdays".into(),
        },
        moneyness: mny,
        maturity: mat,
        values,
        status,
        annotation: None,
    })
}

fn strictly_inside_bounds(q: &OptionQuote, s0: f64, t: f64, r: f64) -> bool {
    let (lo, hi) = price_bounds(s0, q.strike, t, r, q.kind);
    q.price > lo && q.price < hi
}

/// Lattice inputs for the constant-q pricer: per-step drift, volatility
/// and rate in the units of `SurfaceSettings::dt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantQModel {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
}

/// Price on an `n`-step tree holding the risk-neutral probability at `q`;
/// the moves use the natural probability `p_from_q(q, θ, Δt)`.
pub fn constant_q_price(
    s0: f64,
    strike: f64,
    kind: OptionKind,
    n: usize,
    dt: f64,
    model: &ConstantQModel,
    q: f64,
) -> Result<f64> {
    let params = MarketParams::new(model.mu, model.sigma, model.r)?;
    let p = p_from_q(q, params.theta(), dt)?.p;
    let grid = TimeGrid::uniform(n, n as f64 * dt)?;
    let lat = build_tree(&grid, s0, &params, &UpturnModel::constant(p), Measure::RiskNeutralFixed(q))?;
    let opt = OptionSpec::new(kind, strike, n as f64 * dt)?;
    Ok(price_backward_induction(&lat, &opt)?.f0)
}

fn rel_sq(model: f64, market: f64) -> f64 {
    let e = (model - market) / market;
    e * e
}

/// Roots of `f` bracketed by sign changes on `grid`, refined by Brent.
fn bracketed_roots(f: impl Fn(f64) -> f64, grid: &[f64], x_tol: f64) -> Vec<f64> {
    let vals: Vec<f64> = grid.iter().map(|&x| f(x)).collect();
    let mut roots = Vec::new();
    for i in 0..grid.len() {
        if vals[i] == 0.0 {
            roots.push(grid[i]);
        } else if i + 1 < grid.len()
            && vals[i + 1] != 0.0
            && vals[i].is_finite()
            && vals[i + 1].is_finite()
            && vals[i].signum() != vals[i + 1].signum()
        {
            if let Some(r) = brent_root(&f, grid[i], grid[i + 1], x_tol, 200) {
                roots.push(r);
            }
        }
    }
    roots
}

const Q_ROOT_GRID: usize = 400;

/// Every `q` on the grid `i/400` bracket (refined by Brent) at which the
/// constant-q tree reproduces `quote`, in increasing order.
pub fn implied_q_roots(quote: &OptionQuote, s0: f64, n: usize, dt: f64, model: &ConstantQModel) -> Vec<f64> {
    let grid: Vec<f64> = (1..Q_ROOT_GRID).map(|i| i as f64 / Q_ROOT_GRID as f64).collect();
    let f = |q: f64| {
        constant_q_price(s0, quote.strike, quote.kind, n, dt, model, q).map(|c| c - quote.price).unwrap_or(f64::NAN)
    };
    bracketed_roots(f, &grid, 1e-14)
}

/// Per-quote implied `q`, held constant over the quote's tree.
///
/// On a coarse tree the price oscillates in `q` as nodes cross the strike,
/// so one quote can be matched by several `q`; the root nearest 1/2 is
/// reported. Without any root the squared relative error is minimized
/// instead.
pub fn implied_q_surface(
    chain: &OptionChain,
    s0: f64,
    model: &ConstantQModel,
    settings: &SurfaceSettings,
) -> Result<SurfaceGrid> {
    MarketParams::new(model.mu, model.sigma, model.r)?;
    let grid: Vec<f64> = (1..Q_ROOT_GRID).map(|i| i as f64 / Q_ROOT_GRID as f64).collect();
    build_surface(ValueKind::Q, chain, s0, settings, |quote, n| {
        let t = n as f64 * settings.dt;
        if !strictly_inside_bounds(quote, s0, t, model.r) {
            return (None, CellStatus::BoundViolation);
        }
        let price =
            |q: f64| constant_q_price(s0, quote.strike, quote.kind, n, settings.dt, model, q).unwrap_or(f64::NAN);
        let roots = implied_q_roots(quote, s0, n, settings.dt, model);
        let q = match roots.iter().copied().min_by(|a, b| (a - 0.5).abs().total_cmp(&(b - 0.5).abs())) {
            Some(q) => q,
            None => {
                let obj = |q: f64| {
                    let c = price(q);
                    if c.is_finite() {
                        rel_sq(c, quote.price)
                    } else {
                        f64::INFINITY
                    }
                };
                let (q, fx) = scan_then_golden(obj, &grid, 1e-12);
                if !fx.is_finite() {
                    return (None, CellStatus::PricingFailed);
                }
                q
            }
        };
        let err = ((price(q) - quote.price) / quote.price).abs();
        let st = if err <= settings.fit_tol { CellStatus::Ok } else { CellStatus::NotConverged };
        (Some(q), st)
    })
}

/// Implied natural probability `p_from_q(q̂)` cell by cell.
pub fn implied_p_surface(q_surface: &SurfaceGrid, model: &ConstantQModel, dt: f64) -> Result<SurfaceGrid> {
    let theta = MarketParams::new(model.mu, model.sigma, model.r)?.theta();
    Ok(q_surface.map(ValueKind::P, |q, _, _| match p_from_q(q, theta, dt) {
        Ok(r) => (Some(r.p), if r.clamped { CellStatus::Clamped } else { CellStatus::Ok }),
        Err(_) => (None, CellStatus::PricingFailed),
    }))
}

/// `q̂ − p̂` cell by cell.
pub fn q_minus_p_surface(q_surface: &SurfaceGrid, p_surface: &SurfaceGrid) -> SurfaceGrid {
    let mut out = SurfaceGrid { kind: ValueKind::QMinusP, annotation: None, ..q_surface.clone() };
    for i in 0..out.maturity.len() {
        for j in 0..out.moneyness.len() {
            out.values[i][j] = match (q_surface.values[i][j], p_surface.values[i][j]) {
                (Some(q), Some(p)) => Some(q - p),
                _ => None,
            };
            if out.values[i][j].is_none() && out.status[i][j] == CellStatus::Ok {
                out.status[i][j] = p_surface.status[i][j];
            }
        }
    }
    out
}

/// `(σ_model − σ_market)/σ_model` with both volatilities implied by BSM.
pub fn dev_value(
    model_price: f64,
    market_price: f64,
    s0: f64,
    strike: f64,
    t: f64,
    r: f64,
    kind: OptionKind,
) -> Result<f64> {
    let sm = implied_vol(model_price, s0, strike, t, r, kind)?;
    let sk = implied_vol(market_price, s0, strike, t, r, kind)?;
    Ok((sm - sk) / sm)
}

/// DEV surface for an arbitrary model pricer `model_price(quote, n_steps)`.
pub fn dev_surface(
    chain: &OptionChain,
    s0: f64,
    r: f64,
    settings: &SurfaceSettings,
    model_price: &(dyn Fn(&OptionQuote, usize) -> Result<f64> + Sync),
) -> Result<SurfaceGrid> {
    build_surface(ValueKind::Dev, chain, s0, settings, |quote, n| {
        let t = n as f64 * settings.dt;
        if !strictly_inside_bounds(quote, s0, t, r) {
            return (None, CellStatus::BoundViolation);
        }
        let Ok(mp) = model_price(quote, n) else { return (None, CellStatus::PricingFailed) };
        match dev_value(mp, quote.price, s0, quote.strike, t, r, quote.kind) {
            Ok(v) => (Some(v), CellStatus::Ok),
            Err(_) => (None, CellStatus::InversionFailed),
        }
    })
}

/// DEV surface against CSY tree prices.
pub fn csy_dev_surface(
    chain: &OptionChain,
    s0: f64,
    params: &CsyParams,
    intensity: &IntensitySeries,
    r: f64,
    settings: &SurfaceSettings,
    pricing: &CsyPricingConfig,
) -> Result<SurfaceGrid> {
    if (intensity.dt - settings.dt).abs() > 1e-12 * settings.dt {
        return Err(Error::invalid("intensity step and surface step differ"));
    }
    let pricer = |q: &OptionQuote, n: usize| -> Result<f64> {
        let opt = OptionSpec::new(q.kind, q.strike, n as f64 * settings.dt)?;
        Ok(price_csy(s0, params, intensity, &[r], &opt, pricing)?.f0)
    };
    dev_surface(chain, s0, r, settings, &pricer)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSearch {
    pub lambda_max: f64,
    /// Log-spaced grid points in `(0, lambda_max]`; 0 is always added.
    pub grid_points: usize,
    pub lambda_min_positive: f64,
}

impl Default for LambdaSearch {
    fn default() -> Self {
        LambdaSearch { lambda_max: 0.05, grid_points: 48, lambda_min_positive: 1e-8 }
    }
}

impl LambdaSearch {
    pub fn grid(&self) -> Vec<f64> {
        let (a, b) = (self.lambda_min_positive.ln(), self.lambda_max.ln());
        let m = self.grid_points.max(2);
        std::iter::once(0.0).chain((0..m).map(|i| (a + (b - a) * i as f64 / (m - 1) as f64).exp())).collect()
    }
}

/// Per-quote implied information intensity on the informed CSY tree.
#[allow(clippy::too_many_arguments)]
pub fn implied_lambda_surface(
    chain: &OptionChain,
    s0: f64,
    params: &CsyParams,
    intensity: &IntensitySeries,
    r: f64,
    settings: &SurfaceSettings,
    pricing: &CsyPricingConfig,
    search: &LambdaSearch,
) -> Result<SurfaceGrid> {
    if (intensity.dt - settings.dt).abs() > 1e-12 * settings.dt {
        return Err(Error::invalid("intensity step and surface step differ"));
    }
    if !(search.lambda_max > search.lambda_min_positive && search.lambda_min_positive > 0.0) {
        return Err(Error::invalid("λ search needs 0 < lambda_min_positive < lambda_max"));
    }
    let grid = search.grid();
    build_surface(ValueKind::Lambda, chain, s0, settings, |quote, n| {
        let t = n as f64 * settings.dt;
        if !strictly_inside_bounds(quote, s0, t, r) {
            return (None, CellStatus::BoundViolation);
        }
        let Ok(opt) = OptionSpec::new(quote.kind, quote.strike, t) else { return (None, CellStatus::PricingFailed) };
        let price = |lambda: f64| -> Option<f64> {
            let trader = TraderSpec::new(lambda).ok()?;
            price_informed(s0, params, intensity, &trader, &[r], &opt, pricing, None).ok().map(|p| p.f0)
        };
        let (Some(p0), Some(p1)) = (price(0.0), price(search.lambda_max)) else {
            return (None, CellStatus::PricingFailed);
        };
        if (p1 - p0).abs() <= 1e-12 * p0.abs().max(1e-300) {
            return (None, CellStatus::Unidentified);
        }
        let obj = |l: f64| price(l).map(|c| rel_sq(c, quote.price)).unwrap_or(f64::INFINITY);
        let (l, fx) = scan_then_golden(obj, &grid, 1e-12);
        let (l, fx) = if obj(0.0) <= fx { (0.0, obj(0.0)) } else { (l, fx) };
        let st = if fx.sqrt() <= settings.fit_tol { CellStatus::Ok } else { CellStatus::NotConverged };
        (Some(l), st)
    })
}
