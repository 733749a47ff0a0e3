//! Option pricing on the conditional CSY tree.
//!
//! Conditional on the information at step `k`, the log-price moves by
//! `νΔt + η_k √Δt·u` or `νΔt + η_k √Δt·d`, where `u`, `d` are the two
//! intensity values. The risk-neutral up probability is either the
//! first-order `𝕡 − ((ν − r)/η_k)√(𝕡(1−𝕡)Δt)` or the exact one-step
//! martingale probability.

use serde::{Deserialize, Serialize};

use super::{accumulate, eta_series, CsyParams, EtaIndexing, IntensitySeries};
use crate::error::{Error, Result};
use crate::lattice::{
    price_backward_induction, Lattice, LatticeStep, Measure, OptionSpec, PriceResult, QRule, TimeGrid,
    DEFAULT_MAX_NONRECOMBINING_LEVELS,
};

/// Where the per-step volatility comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaSource {
    /// One `η_k` per level, read from the supplied intensity series over the
    /// option's life. The tree is a lattice with per-level moves.
    #[default]
    Realized,
    /// `η` evaluated at every node from the hypothetical intensities along
    /// the node's own path, starting from the state left by the supplied
    /// intensity history.
    PathDependent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CsyPricingConfig {
    pub q_rule: QRule,
    pub eta_source: EtaSource,
    pub indexing: EtaIndexing,
    pub max_levels: usize,
}

impl Default for CsyPricingConfig {
    fn default() -> Self {
        CsyPricingConfig {
            q_rule: QRule::Approx,
            eta_source: EtaSource::Realized,
            indexing: EtaIndexing::Previsible,
            max_levels: DEFAULT_MAX_NONRECOMBINING_LEVELS,
        }
    }
}

/// Moves and risk-neutral probability of one conditional step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeStep {
    pub up_log: f64,
    pub down_log: f64,
    pub q: f64,
}

/// Per-level record of a realized-volatility price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsyStepRecord {
    pub step: usize,
    pub eta: f64,
    pub up_log: f64,
    pub down_log: f64,
    pub q: f64,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsyPriceResult {
    pub f0: f64,
    pub delta0: f64,
    /// Empty for path-dependent volatility.
    pub steps: Vec<CsyStepRecord>,
    /// Full value and delta ladders for realized volatility.
    pub ladder: Option<PriceResult>,
}

/// `(νΔt + η√Δt·up_value, νΔt + η√Δt·down_value)`.
pub fn conditional_moves(nu: f64, eta: f64, up_value: f64, down_value: f64, dt: f64) -> (f64, f64) {
    let sq = dt.sqrt();
    (nu * dt + eta * sq * up_value, nu * dt + eta * sq * down_value)
}

/// Risk-neutral up probability of a conditional step.
#[allow(clippy::too_many_arguments)]
pub fn csy_q(rule: QRule, p_up: f64, nu: f64, eta: f64, r: f64, dt: f64, up_log: f64, down_log: f64) -> f64 {
    match rule {
        QRule::Approx => p_up - (nu - r) / eta * (p_up * (1.0 - p_up) * dt).sqrt(),
        QRule::Exact => ((r * dt).exp_m1() - down_log.exp_m1()) / (up_log.exp_m1() - down_log.exp_m1()),
    }
}

pub(crate) fn check_q(step: usize, q: f64) -> Result<()> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Arbitrage { step, q, max_feasible_dt: None });
    }
    Ok(())
}

/// Per-step rates: a single entry is used for every step.
pub(crate) fn expand_rates(rates: &[f64], n: usize) -> Result<Vec<f64>> {
    match rates.len() {
        1 => Ok(vec![rates[0]; n]),
        m if m >= n => Ok(rates[..n].to_vec()),
        m => Err(Error::invalid(format!("{m} rates supplied for {n} steps"))),
    }
}

pub(crate) fn steps_to_maturity(dt: f64, maturity: f64) -> Result<usize> {
    let n = (maturity / dt).round();
    if n < 1.0 || (n * dt - maturity).abs() > 1e-9 * maturity.max(1.0) {
        return Err(Error::invalid(format!("maturity {maturity} is not a whole number of steps of {dt}")));
    }
    Ok(n as usize)
}

/// Volatilities `η_0..η_{n−1}` for realized pricing.
pub(crate) fn realized_etas(
    params: &CsyParams,
    intensity: &IntensitySeries,
    n: usize,
    indexing: EtaIndexing,
) -> Result<Vec<f64>> {
    let need = match indexing {
        EtaIndexing::Previsible => n.saturating_sub(1),
        EtaIndexing::Shifted => n,
    };
    if intensity.len() < need {
        return Err(Error::invalid(format!(
            "realized volatility over {n} steps needs {need} intensities, got {}",
            intensity.len()
        )));
    }
    let etas = eta_series(params, &intensity.prefix(need), indexing)?.eta;
    Ok(etas[..n].to_vec())
}

/// Backward induction over per-level steps produced by `step_fn(k, η_k)`.
pub(crate) fn price_realized(
    s0: f64,
    dt: f64,
    etas: &[f64],
    rates: &[f64],
    option: &OptionSpec,
    max_levels: usize,
    step_fn: impl Fn(usize, f64, f64) -> Result<NodeStep>,
) -> Result<(PriceResult, Vec<NodeStep>)> {
    let n = etas.len();
    let grid = TimeGrid::uniform(n, n as f64 * dt)?;
    let mut nodes = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    for k in 0..n {
        let st = step_fn(k, etas[k], rates[k])?;
        check_q(k, st.q)?;
        nodes.push(st);
        steps.push(LatticeStep { dt, p: None, up_log: st.up_log, down_log: st.down_log, prob: st.q, rate: rates[k] });
    }
    let lattice = Lattice::from_steps(grid, s0, Measure::RiskNeutralCustom, steps, max_levels)?;
    let spec = OptionSpec { maturity: lattice.maturity(), ..option.clone() };
    Ok((price_backward_induction(&lattice, &spec)?, nodes))
}

/// Running state at a node: `X` and the inner argument of `g`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct PathState {
    pub x: f64,
    pub arg_g: f64,
}

impl PathState {
    /// State reached at the end of an intensity history.
    pub fn from_history(params: &CsyParams, history: &IntensitySeries) -> PathState {
        let acc = accumulate(history, &params.h, &params.g);
        PathState { x: *acc.x.last().expect("n + 1 entries"), arg_g: *acc.arg_g.last().expect("n + 1 entries") }
    }
}

/// Backward induction on the full path tree, with `η` computed per node
/// from `state` and `step_fn(k, η, r_k)` giving the node's moves and q.
#[allow(clippy::too_many_arguments)]
pub fn price_path_dependent(
    s0: f64,
    dt: f64,
    n: usize,
    params: &CsyParams,
    start: PathState,
    up_value: f64,
    down_value: f64,
    rates: &[f64],
    option: &OptionSpec,
    max_levels: usize,
    step_fn: &(dyn Fn(usize, f64, f64) -> Result<NodeStep> + Sync),
) -> Result<(f64, f64)> {
    if n > max_levels {
        return Err(Error::invalid(format!("path tree of {n} levels exceeds the limit of {max_levels}")));
    }
    let rates = expand_rates(rates, n)?;
    let sq = dt.sqrt();
    struct Ctx<'a> {
        n: usize,
        dt: f64,
        sq: f64,
        params: &'a CsyParams,
        up_value: f64,
        down_value: f64,
        rates: &'a [f64],
        option: &'a OptionSpec,
        s0: f64,
        step_fn: &'a (dyn Fn(usize, f64, f64) -> Result<NodeStep> + Sync),
    }
    fn node(c: &Ctx, k: usize, log_s: f64, st: PathState) -> Result<(f64, f64)> {
        if k == c.n {
            return Ok((c.option.payoff(c.s0 * log_s.exp()), 0.0));
        }
        let eta = c.params.eta_at(st.x, st.arg_g);
        if !(eta > 0.0) {
            return Err(Error::numerical(format!("non-positive volatility {eta} at step {k}")));
        }
        let ns = (c.step_fn)(k, eta, c.rates[k])?;
        check_q(k, ns.q)?;
        let arg_g = st.arg_g + st.x * c.dt;
        let (fu, _) = node(c, k + 1, log_s + ns.up_log, PathState { x: st.x + c.sq * c.up_value, arg_g })?;
        let (fd, _) = node(c, k + 1, log_s + ns.down_log, PathState { x: st.x + c.sq * c.down_value, arg_g })?;
        let value = (-c.rates[k] * c.dt).exp() * (ns.q * fu + (1.0 - ns.q) * fd);
        let s = c.s0 * log_s.exp();
        let delta = (fu - fd) / (s * (ns.up_log.exp_m1() - ns.down_log.exp_m1()));
        Ok((value, delta))
    }
    let ctx = Ctx { n, dt, sq, params, up_value, down_value, rates: &rates, option, s0, step_fn };
    node(&ctx, 0, 0.0, start)
}

/// Prices a European option on the conditional CSY tree with step size
/// `intensity.dt`.
pub fn price_csy(
    s0: f64,
    params: &CsyParams,
    intensity: &IntensitySeries,
    rates: &[f64],
    option: &OptionSpec,
    config: &CsyPricingConfig,
) -> Result<CsyPriceResult> {
    params.validate()?;
    let dt = intensity.dt;
    let n = steps_to_maturity(dt, option.maturity)?;
    let rates = expand_rates(rates, n)?;
    let (uv, dv, p_up) = (intensity.up_value(), intensity.down_value(), intensity.p_up);
    let rule = config.q_rule;
    let nu = params.nu;
    let step_fn = move |_k: usize, eta: f64, r: f64| -> Result<NodeStep> {
        let (up_log, down_log) = conditional_moves(nu, eta, uv, dv, dt);
        Ok(NodeStep { up_log, down_log, q: csy_q(rule, p_up, nu, eta, r, dt, up_log, down_log) })
    };
    match config.eta_source {
        EtaSource::Realized => {
            let etas = realized_etas(params, intensity, n, config.indexing)?;
            let (ladder, nodes) = price_realized(s0, dt, &etas, &rates, option, config.max_levels, step_fn)?;
            let steps = nodes
                .iter()
                .enumerate()
                .map(|(k, ns)| CsyStepRecord {
                    step: k,
                    eta: etas[k],
                    up_log: ns.up_log,
                    down_log: ns.down_log,
                    q: ns.q,
                    rate: rates[k],
                })
                .collect();
            Ok(CsyPriceResult { f0: ladder.f0, delta0: ladder.deltas[0][0], steps, ladder: Some(ladder) })
        }
        EtaSource::PathDependent => {
            if config.indexing != EtaIndexing::Previsible {
                return Err(Error::invalid("path-dependent volatility is only defined with previsible indexing"));
            }
            let start = PathState::from_history(params, intensity);
            let (f0, delta0) =
                price_path_dependent(s0, dt, n, params, start, uv, dv, &rates, option, config.max_levels, &step_fn)?;
            Ok(CsyPriceResult { f0, delta0, steps: Vec::new(), ladder: None })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat_params(nu: f64, sigma: f64) -> CsyParams {
        CsyParams::gaussian(nu, sigma, 0.0, 1.0, 0.0, 1.0).unwrap()
    }

    #[test]
    fn realized_and_path_dependent_agree_without_filters() {
        let p = flat_params(0.08, 0.25);
        let xi = IntensitySeries::from_signs(&[true; 12], 0.55, 1.0 / 12.0).unwrap();
        let opt = OptionSpec::call(1.0, 1.0).unwrap();
        let mut cfg = CsyPricingConfig::default();
        let a = price_csy(1.0, &p, &xi, &[0.03], &opt, &cfg).unwrap();
        cfg.eta_source = EtaSource::PathDependent;
        let b = price_csy(1.0, &p, &xi, &[0.03], &opt, &cfg).unwrap();
        assert!((a.f0 - b.f0).abs() < 1e-13, "{} {}", a.f0, b.f0);
        assert!((a.delta0 - b.delta0).abs() < 1e-12);
    }

    #[test]
    fn exact_q_is_a_martingale_measure() {
        let (nu, eta, r, dt, p) = (0.05, 0.3, 0.02, 0.01, 0.6);
        let (u, d) = conditional_moves(nu, eta, intensity_up(p), intensity_down(p), dt);
        let q = csy_q(QRule::Exact, p, nu, eta, r, dt, u, d);
        assert!((q * u.exp() + (1.0 - q) * d.exp() - (r * dt).exp()).abs() < 1e-15);
    }

    fn intensity_up(p: f64) -> f64 {
        super::super::intensity_up_value(p)
    }

    fn intensity_down(p: f64) -> f64 {
        super::super::intensity_down_value(p)
    }

    #[test]
    fn path_tree_respects_level_cap() {
        let p = flat_params(0.05, 0.2);
        let xi = IntensitySeries::empty(0.5, 0.01).unwrap();
        let opt = OptionSpec::call(1.0, 0.3).unwrap();
        let cfg = CsyPricingConfig { eta_source: EtaSource::PathDependent, ..Default::default() };
        assert!(price_csy(1.0, &p, &xi, &[0.01], &opt, &cfg).is_err());
    }
}
