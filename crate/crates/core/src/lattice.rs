//! Binomial trees on variably spaced grids with natural-world upturn
//! probabilities, their risk-neutral counterparts, hedging deltas and
//! backward-induction pricing.
//!
//! Moves follow the exponential parameterization: over a step of length
//! `dt` with upturn probability `p` the log-price moves by
//!
//! ```text
//! up_log   = (μ − ((1−p)/p)·σ²/2)·dt + σ·√((1−p)/p)·√dt
//! down_log = (μ − (p/(1−p))·σ²/2)·dt − σ·√(p/(1−p))·√dt
//! ```
//!
//! A one-step tree on this form agrees with the linear one-period `u`, `d`
//! model up to O(dt).

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market_data::OptionKind;

/// Version tag written into serialized lattices and price results.
pub const FORMAT_VERSION: u32 = 1;

/// Default depth limit for trees that do not recombine.
pub const DEFAULT_MAX_NONRECOMBINING_LEVELS: usize = 26;

/// Trading instants `0 = t_0 < t_1 < … < t_n = T`, in years.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    instants: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridSpec {
    Uniform { n: usize, maturity: f64 },
    Explicit(Vec<f64>),
}

pub fn build_time_grid(spec: &GridSpec) -> Result<TimeGrid> {
    let instants = match spec {
        GridSpec::Uniform { n, maturity } => {
            if *n == 0 || !(*maturity > 0.0) {
                return Err(Error::invalid("uniform grid needs n ≥ 1 and a positive maturity"));
            }
            (0..=*n).map(|k| maturity * k as f64 / *n as f64).collect()
        }
        GridSpec::Explicit(v) => v.clone(),
    };
    TimeGrid::new(instants)
}

impl TimeGrid {
    pub fn new(instants: Vec<f64>) -> Result<Self> {
        if instants.len() < 2 {
            return Err(Error::invalid("a grid needs at least two instants"));
        }
        if instants[0] != 0.0 {
            return Err(Error::invalid(format!("grid must start at 0, got {}", instants[0])));
        }
        if let Some(k) = instants.windows(2).position(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::invalid(format!(
                "grid instants must be strictly increasing: t[{}] = {} then t[{}] = {}",
                k,
                instants[k],
                k + 1,
                instants[k + 1]
            )));
        }
        Ok(TimeGrid { instants })
    }

    pub fn uniform(n: usize, maturity: f64) -> Result<Self> {
        build_time_grid(&GridSpec::Uniform { n, maturity })
    }

    pub fn instants(&self) -> &[f64] {
        &self.instants
    }

    /// Step lengths `Δt_k = t_k − t_{k−1}`. A grid whose steps agree to
    /// 1e-12 relative reports the common length `T/n` for every step.
    pub fn steps(&self) -> Vec<f64> {
        if self.is_uniform() {
            return vec![self.maturity() / self.n_steps() as f64; self.n_steps()];
        }
        self.instants.windows(2).map(|w| w[1] - w[0]).collect()
    }

    pub fn is_uniform(&self) -> bool {
        let h = self.maturity() / self.n_steps() as f64;
        self.instants.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-12 * h)
    }

    pub fn n_steps(&self) -> usize {
        self.instants.len() - 1
    }

    pub fn maturity(&self) -> f64 {
        *self.instants.last().expect("non-empty grid")
    }
}

/// Drift `mu` of the log-price plus half the variance, volatility `sigma`
/// and risk-free rate `r`, all annualized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: f64,
    pub sigma: f64,
    pub r: f64,
}

impl MarketParams {
    pub fn new(mu: f64, sigma: f64, r: f64) -> Result<Self> {
        if !(sigma > 0.0) || !mu.is_finite() || !r.is_finite() {
            return Err(Error::invalid(format!("market params need finite mu, r and sigma > 0 (sigma = {sigma})")));
        }
        Ok(MarketParams { mu, sigma, r })
    }

    /// Market price of risk `(μ − r)/σ`.
    pub fn theta(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }
}

/// `p(Δt) = p0 + p1·√Δt + p2·Δt`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UpturnModel {
    pub p0: f64,
    pub p1: f64,
    pub p2: f64,
}

impl UpturnModel {
    pub fn constant(p: f64) -> Self {
        UpturnModel { p0: p, p1: 0.0, p2: 0.0 }
    }

    pub fn eval(&self, dt: f64) -> f64 {
        self.p0 + self.p1 * dt.sqrt() + self.p2 * dt
    }

    fn is_constant(&self) -> bool {
        self.p1 == 0.0 && self.p2 == 0.0
    }
}

/// One tree step: log moves, the auxiliary exponents `M1`, `M2`, the
/// natural probability and both risk-neutral probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneStepMove {
    pub dt: f64,
    pub p: f64,
    pub up_log: f64,
    pub down_log: f64,
    pub m1: f64,
    pub m2: f64,
    pub q_exact: f64,
    pub q_approx: f64,
}

impl OneStepMove {
    /// Computes the move without checking that the risk-neutral
    /// probabilities are feasible.
    pub fn compute(params: &MarketParams, p: f64, dt: f64) -> Result<Self> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("upturn probability {p} outside (0,1)")));
        }
        if !(dt > 0.0) {
            return Err(Error::invalid(format!("step size {dt} must be positive")));
        }
        let MarketParams { mu, sigma, r } = *params;
        let a = ((1.0 - p) / p).sqrt();
        let b = (p / (1.0 - p)).sqrt();
        let sq = dt.sqrt();
        let half_var = 0.5 * sigma * sigma;
        let up_log = (mu - a * a * half_var) * dt + sigma * a * sq;
        let down_log = (mu - b * b * half_var) * dt - sigma * b * sq;
        let m1 = -a * a * half_var * dt + sigma * a * sq;
        let m2 = -b * b * half_var * dt - sigma * b * sq;
        let q_exact = (((r - mu) * dt).exp_m1() - m2.exp_m1()) / (m1.exp_m1() - m2.exp_m1());
        let q_approx = p - params.theta() * (p * (1.0 - p) * dt).sqrt();
        Ok(OneStepMove { dt, p, up_log, down_log, m1, m2, q_exact, q_approx })
    }
}

/// Which risk-neutral probability a check or tree uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QRule {
    /// Exact one-step martingale condition.
    Exact,
    /// First-order expansion `p − θ·√(p(1−p)Δt)`.
    Approx,
}

fn q_of(mv: &OneStepMove, rule: QRule) -> f64 {
    match rule {
        QRule::Exact => mv.q_exact,
        QRule::Approx => mv.q_approx,
    }
}

fn feasible(q: f64) -> bool {
    q > 0.0 && q < 1.0
}

/// Largest step size `≤ dt` such that the chosen q stays in (0,1) on the
/// whole interval below it, located by bisection.
pub fn max_feasible_dt(params: &MarketParams, p: f64, dt: f64, rule: QRule) -> Option<f64> {
    let ok = |h: f64| OneStepMove::compute(params, p, h).map(|m| feasible(q_of(&m, rule))).unwrap_or(false);
    if ok(dt) {
        return Some(dt);
    }
    let (mut lo, mut hi) = (0.0, dt);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo > 0.0).then_some(lo)
}

/// Builds a step and checks that the up move exceeds the down move and that
/// both risk-neutral probabilities lie in (0,1). The reported feasible step
/// size satisfies both rules.
pub fn one_step_move(params: &MarketParams, p: f64, dt: f64) -> Result<OneStepMove> {
    let mv = OneStepMove::compute(params, p, dt)?;
    if !(mv.up_log > mv.down_log) {
        return Err(Error::invalid(format!(
            "up move {} does not exceed down move {} (p = {p}, dt = {dt})",
            mv.up_log, mv.down_log
        )));
    }
    for rule in [QRule::Exact, QRule::Approx] {
        let q = q_of(&mv, rule);
        if !feasible(q) {
            let both = [QRule::Exact, QRule::Approx]
                .iter()
                .map(|&r| max_feasible_dt(params, p, dt, r))
                .try_fold(dt, |m, h| h.map(|h| m.min(h)));
            return Err(Error::Arbitrage { step: 0, q, max_feasible_dt: both });
        }
    }
    Ok(mv)
}

/// Mean and variance of the log move under the two-point law
/// `{up_log w.p. p, down_log w.p. 1 − p}`.
///
/// The mean equals `(μ − σ²/2)·dt` for every `p`. The variance is
/// `p(1−p)(up_log − down_log)²`, which equals `σ²·dt` exactly at `p = 1/2`
/// and otherwise carries an `O(dt^{3/2})` correction, see
/// [`two_point_variance`].
pub fn step_moment_check(mv: &OneStepMove) -> (f64, f64) {
    let p = mv.p;
    let mean = p * mv.up_log + (1.0 - p) * mv.down_log;
    let spread = mv.up_log - mv.down_log;
    (mean, p * (1.0 - p) * spread * spread)
}

/// Closed form of the two-point variance:
/// `σ²dt + σ³(2p−1)dt^{3/2}/√(p(1−p)) + σ⁴(2p−1)²dt²/(4p(1−p))`.
pub fn two_point_variance(sigma: f64, p: f64, dt: f64) -> f64 {
    let s = (p * (1.0 - p)).sqrt();
    let skew = 2.0 * p - 1.0;
    sigma * sigma * dt + sigma.powi(3) * skew * dt.powf(1.5) / s + sigma.powi(4) * skew * skew * dt * dt / (4.0 * s * s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeltaMode {
    /// Uses the exact auxiliary exponents.
    Exact,
    /// `(f_up − f_down)·√(p(1−p)) / (S·e^{μΔt}·σ·√Δt)`.
    Approx,
}

/// Hedge ratio for a one-step claim paying `f_up` / `f_down`.
pub fn delta_position(
    f_up: f64,
    f_down: f64,
    s: f64,
    params: &MarketParams,
    p: f64,
    dt: f64,
    mode: DeltaMode,
) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::invalid("spot must be positive"));
    }
    let mv = OneStepMove::compute(params, p, dt)?;
    let growth = s * (params.mu * dt).exp();
    match mode {
        DeltaMode::Exact => {
            let denom = mv.m1.exp_m1() - mv.m2.exp_m1();
            if denom == 0.0 || mv.m1 == mv.m2 {
                return Err(Error::numerical("degenerate delta denominator (M1 = M2)"));
            }
            Ok((f_up - f_down) / (growth * denom))
        }
        DeltaMode::Approx => {
            let denom = growth * params.sigma * dt.sqrt();
            if denom == 0.0 {
                return Err(Error::numerical("degenerate delta denominator"));
            }
            Ok((f_up - f_down) * (p * (1.0 - p)).sqrt() / denom)
        }
    }
}

/// Probability measure attached to a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "q")]
pub enum Measure {
    Natural,
    RiskNeutralExact,
    RiskNeutralApprox,
    /// The same user-supplied q on every step.
    RiskNeutralFixed(f64),
    /// Step probabilities supplied by another model (path-dependent or
    /// informed dynamics).
    RiskNeutralCustom,
}

impl Measure {
    pub fn is_risk_neutral(&self) -> bool {
        !matches!(self, Measure::Natural)
    }
}

/// Policy for risk-neutral probabilities outside (0,1).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum QPolicy {
    #[default]
    Strict,
    /// Clamp into `[1e-12, 1 − 1e-12]` and count the clamps.
    Clamp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeOptions {
    pub q_policy: QPolicy,
    pub max_nonrecombining_levels: usize,
}

impl Default for TreeOptions {
    fn default() -> Self {
        TreeOptions { q_policy: QPolicy::Strict, max_nonrecombining_levels: DEFAULT_MAX_NONRECOMBINING_LEVELS }
    }
}

/// Per-step data stored in a lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeStep {
    pub dt: f64,
    /// Natural-world upturn probability, when the step came from a natural model.
    pub p: Option<f64>,
    pub up_log: f64,
    pub down_log: f64,
    /// Probability of the up move under the lattice's measure.
    pub prob: f64,
    /// Continuously compounded risk-free rate applied over the step.
    pub rate: f64,
}

/// Binomial price tree.
///
/// Recombining trees hold `k + 1` nodes at level `k`, ordered by the number
/// of up moves, and children of node `j` are `j` (down) and `j + 1` (up).
/// Other trees hold `2^k` nodes and children of node `i` are `2i` (down)
/// and `2i + 1` (up).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub format_version: u32,
    pub s0: f64,
    pub grid: TimeGrid,
    pub measure: Measure,
    pub recombining: bool,
    pub steps: Vec<LatticeStep>,
    pub levels: Vec<Vec<f64>>,
    /// Number of steps whose q was clamped under [`QPolicy::Clamp`].
    pub clamp_count: usize,
}

impl Lattice {
    /// Assembles a lattice from explicit steps. The tree is recombining when
    /// every step has the same spread `up_log − down_log`.
    pub fn from_steps(
        grid: TimeGrid,
        s0: f64,
        measure: Measure,
        steps: Vec<LatticeStep>,
        max_nonrecombining_levels: usize,
    ) -> Result<Self> {
        if !(s0 > 0.0) {
            return Err(Error::invalid("spot must be positive"));
        }
        if steps.len() != grid.n_steps() {
            return Err(Error::invalid(format!("{} steps for a grid of {} steps", steps.len(), grid.n_steps())));
        }
        for (k, st) in steps.iter().enumerate() {
            if !(st.up_log > st.down_log) {
                return Err(Error::invalid(format!("step {k}: up move must exceed down move")));
            }
            if !(st.prob >= 0.0 && st.prob <= 1.0) {
                return Err(Error::invalid(format!("step {k}: probability {} outside [0,1]", st.prob)));
            }
        }
        let spread0 = steps[0].up_log - steps[0].down_log;
        let recombining = steps.iter().all(|st| st.up_log - st.down_log == spread0);
        let n = steps.len();
        if !recombining && n > max_nonrecombining_levels {
            return Err(Error::invalid(format!(
                "non-recombining tree of {n} levels exceeds the limit of {max_nonrecombining_levels}"
            )));
        }
        let mut levels = Vec::with_capacity(n + 1);
        levels.push(vec![s0]);
        if recombining {
            let mut cum_down = 0.0;
            for st in &steps {
                cum_down += st.down_log;
                let k = levels.len();
                levels.push((0..=k).map(|j| s0 * (cum_down + j as f64 * spread0).exp()).collect());
            }
        } else {
            for st in &steps {
                let prev = levels.last().expect("level 0");
                let (eu, ed) = (st.up_log.exp(), st.down_log.exp());
                let mut next = Vec::with_capacity(prev.len() * 2);
                for &s in prev {
                    next.push(s * ed);
                    next.push(s * eu);
                }
                levels.push(next);
            }
        }
        Ok(Lattice { format_version: FORMAT_VERSION, s0, grid, measure, recombining, steps, levels, clamp_count: 0 })
    }

    pub fn n_steps(&self) -> usize {
        self.steps.len()
    }

    pub fn maturity(&self) -> f64 {
        self.grid.maturity()
    }

    /// Indices of the (down, up) children of `node` at `level`.
    pub fn children(&self, node: usize) -> (usize, usize) {
        if self.recombining {
            (node, node + 1)
        } else {
            (2 * node, 2 * node + 1)
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("lattice serializes")
    }
}

pub fn build_tree(
    grid: &TimeGrid,
    s0: f64,
    params: &MarketParams,
    upturn: &UpturnModel,
    measure: Measure,
) -> Result<Lattice> {
    build_tree_with(grid, s0, params, upturn, measure, &TreeOptions::default())
}

pub fn build_tree_with(
    grid: &TimeGrid,
    s0: f64,
    params: &MarketParams,
    upturn: &UpturnModel,
    measure: Measure,
    opts: &TreeOptions,
) -> Result<Lattice> {
    if matches!(measure, Measure::RiskNeutralCustom) {
        return Err(Error::invalid("custom measures are assembled with Lattice::from_steps"));
    }
    if let Measure::RiskNeutralFixed(q) = measure {
        if !feasible(q) {
            return Err(Error::invalid(format!("fixed q {q} outside (0,1)")));
        }
    }
    let dts = grid.steps();
    let uniform = dts.iter().all(|&d| d == dts[0]);
    let mut steps = Vec::with_capacity(dts.len());
    let mut clamp_count = 0;
    let mut cache: Option<LatticeStep> = None;
    for (k, &dt) in dts.iter().enumerate() {
        if uniform && upturn.is_constant() {
            if let Some(st) = cache {
                steps.push(st);
                continue;
            }
        }
        let p = upturn.eval(dt);
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("step {k}: upturn probability {p} outside (0,1)")));
        }
        let mv = OneStepMove::compute(params, p, dt)?;
        let (prob, rule) = match measure {
            Measure::Natural => (p, None),
            Measure::RiskNeutralExact => (mv.q_exact, Some(QRule::Exact)),
            Measure::RiskNeutralApprox => (mv.q_approx, Some(QRule::Approx)),
            Measure::RiskNeutralFixed(q) => (q, None),
            Measure::RiskNeutralCustom => unreachable!(),
        };
        let prob = match rule {
            Some(rule) if !feasible(prob) => match opts.q_policy {
                QPolicy::Strict => {
                    return Err(Error::Arbitrage {
                        step: k,
                        q: prob,
                        max_feasible_dt: max_feasible_dt(params, p, dt, rule),
                    })
                }
                QPolicy::Clamp => {
                    clamp_count += 1;
                    prob.clamp(1e-12, 1.0 - 1e-12)
                }
            },
            _ => prob,
        };
        let st = LatticeStep { dt, p: Some(p), up_log: mv.up_log, down_log: mv.down_log, prob, rate: params.r };
        cache = Some(st);
        steps.push(st);
    }
    if uniform && upturn.is_constant() {
        clamp_count *= dts.len();
    }
    let mut lat = Lattice::from_steps(grid.clone(), s0, measure, steps, opts.max_nonrecombining_levels)?;
    lat.clamp_count = clamp_count;
    Ok(lat)
}

/// Terminal payoff `G(S_T)`.
#[derive(Clone)]
pub enum Payoff {
    Call,
    Put,
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl fmt::Debug for Payoff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payoff::Call => f.write_str("Call"),
            Payoff::Put => f.write_str("Put"),
            Payoff::Custom(_) => f.write_str("Custom(..)"),
        }
    }
}

/// European claim on the terminal price.
#[derive(Debug, Clone)]
pub struct OptionSpec {
    pub payoff: Payoff,
    pub strike: f64,
    pub maturity: f64,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, strike: f64, maturity: f64) -> Result<Self> {
        let payoff = match kind {
            OptionKind::Call => Payoff::Call,
            OptionKind::Put => Payoff::Put,
        };
        Self::validate(OptionSpec { payoff, strike, maturity })
    }

    pub fn call(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(OptionKind::Call, strike, maturity)
    }

    pub fn put(strike: f64, maturity: f64) -> Result<Self> {
        Self::new(OptionKind::Put, strike, maturity)
    }

    /// A claim paying `g(S_T)`; the strike is kept only as a label.
    pub fn custom(g: impl Fn(f64) -> f64 + Send + Sync + 'static, maturity: f64) -> Result<Self> {
        Self::validate(OptionSpec { payoff: Payoff::Custom(Arc::new(g)), strike: 1.0, maturity })
    }

    fn validate(spec: OptionSpec) -> Result<Self> {
        if !(spec.strike > 0.0) || !(spec.maturity > 0.0) {
            return Err(Error::invalid("option needs a positive strike and maturity"));
        }
        Ok(spec)
    }

    pub fn payoff(&self, s: f64) -> f64 {
        match &self.payoff {
            Payoff::Call => (s - self.strike).max(0.0),
            Payoff::Put => (self.strike - s).max(0.0),
            Payoff::Custom(g) => g(s),
        }
    }
}

/// Option values and hedge ratios on every level of a lattice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceResult {
    pub format_version: u32,
    pub f0: f64,
    /// `values[k][node]`, levels `0..=n`; the last level is the payoff.
    pub values: Vec<Vec<f64>>,
    /// `deltas[k][node]`, levels `0..n`.
    pub deltas: Vec<Vec<f64>>,
}

impl PriceResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("price result serializes")
    }
}

/// Discounted risk-neutral expectation by backward induction.
pub fn price_backward_induction(lattice: &Lattice, option: &OptionSpec) -> Result<PriceResult> {
    if !lattice.measure.is_risk_neutral() {
        return Err(Error::invalid("backward induction needs a risk-neutral lattice, got the natural measure"));
    }
    let t = lattice.maturity();
    if (t - option.maturity).abs() > 1e-9 * t.max(1.0) {
        return Err(Error::invalid(format!("lattice maturity {t} differs from option maturity {}", option.maturity)));
    }
    let n = lattice.n_steps();
    let mut values: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut deltas: Vec<Vec<f64>> = vec![Vec::new(); n];
    values[n] = lattice.levels[n].iter().map(|&s| option.payoff(s)).collect();
    for k in (0..n).rev() {
        let st = &lattice.steps[k];
        let disc = (-st.rate * st.dt).exp();
        let denom = st.up_log.exp_m1() - st.down_log.exp_m1();
        let next = &values[k + 1];
        let prices = &lattice.levels[k];
        let mut v = Vec::with_capacity(prices.len());
        let mut d = Vec::with_capacity(prices.len());
        for (node, &s) in prices.iter().enumerate() {
            let (lo, hi) = lattice.children(node);
            let (fd, fu) = (next[lo], next[hi]);
            v.push(disc * (st.prob * fu + (1.0 - st.prob) * fd));
            d.push((fu - fd) / (s * denom));
        }
        values[k] = v;
        deltas[k] = d;
    }
    Ok(PriceResult { format_version: FORMAT_VERSION, f0: values[0][0], values, deltas })
}
