//! Informed trader running a one-step forward strategy alongside the stock.
//!
//! A trader with information intensity `λ` guesses the sign of the next
//! index intensity correctly with probability `(1 + λ√Δt)/2`. Holding the
//! optimal number of forwards per share raises the perceived drift by a
//! dividend `D ≥ 0`, and options are priced on the CSY tree with the
//! risk-neutral probability built from the raised drift.

use serde::{Deserialize, Serialize};

use crate::csy::pricing::{check_q, expand_rates, price_realized, realized_etas, steps_to_maturity};
use crate::csy::{
    conditional_moves, csy_q, intensity_down_value, intensity_up_value, price_path_dependent, CsyParams,
    CsyPricingConfig, EtaIndexing, EtaSource, IntensitySeries, NodeStep, PathState,
};
use crate::error::{Error, Result};
use crate::lattice::{OptionSpec, PriceResult, QRule, FORMAT_VERSION};

/// Information intensity of the trader.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraderSpec {
    pub lambda: f64,
}

impl TraderSpec {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda >= 0.0) || !lambda.is_finite() {
            return Err(Error::invalid(format!("information intensity {lambda} must be finite and ≥ 0")));
        }
        Ok(TraderSpec { lambda })
    }

    /// `(1 + λ√Δt)/2`; requires `λ√Δt < 1`.
    pub fn p_success(&self, dt: f64) -> Result<f64> {
        let e = self.lambda * dt.sqrt();
        if !(dt > 0.0) || !(e < 1.0) {
            return Err(Error::invalid(format!("λ√Δt = {e} must lie in [0, 1) (Δt = {dt})")));
        }
        Ok(0.5 * (1.0 + e))
    }
}

/// Inputs of one conditional step: drift, volatility, rate, index upturn
/// probability `𝕡` and step size.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepParams {
    pub nu: f64,
    pub eta: f64,
    pub r: f64,
    pub p_up: f64,
    pub dt: f64,
}

impl StepParams {
    fn validate(&self) -> Result<()> {
        if !(self.p_up > 0.0 && self.p_up < 1.0) || !(self.dt > 0.0) || !(self.eta > 0.0) {
            return Err(Error::invalid("step needs 𝕡 in (0,1), Δt > 0 and η > 0"));
        }
        Ok(())
    }

    /// Log moves `(U, D)` of the conditional tree.
    pub fn moves(&self) -> (f64, f64) {
        conditional_moves(self.nu, self.eta, intensity_up_value(self.p_up), intensity_down_value(self.p_up), self.dt)
    }

    /// `θ = (ν − η²/2 − r)/η`.
    pub fn theta(&self) -> f64 {
        (self.nu - 0.5 * self.eta * self.eta - self.r) / self.eta
    }

    fn spread(&self) -> f64 {
        (self.p_up * (1.0 - self.p_up)).sqrt()
    }
}

/// Payoff per unit of stock value of the forward strategy over one step,
/// as four `(value, probability)` outcomes in the order
/// (up, right), (down, right), (up, wrong), (down, wrong).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForwardStep {
    pub n: f64,
    pub outcomes: [(f64, f64); 4],
}

fn law_mean(outcomes: &[(f64, f64)]) -> f64 {
    outcomes.iter().map(|(v, p)| v * p).sum()
}

fn law_variance(outcomes: &[(f64, f64)]) -> f64 {
    let m = law_mean(outcomes);
    outcomes.iter().map(|(v, p)| p * (v - m) * (v - m)).sum()
}

impl ForwardStep {
    pub fn mean(&self) -> f64 {
        law_mean(&self.outcomes)
    }

    pub fn variance(&self) -> f64 {
        law_variance(&self.outcomes)
    }
}

fn four_probs(p_up: f64, p_al: f64) -> [f64; 4] {
    [p_up * p_al, (1.0 - p_up) * p_al, p_up * (1.0 - p_al), (1.0 - p_up) * (1.0 - p_al)]
}

/// Four-outcome payoff of holding `n` forwards per share for one step.
pub fn forward_step(step: &StepParams, n: f64, trader: &TraderSpec) -> Result<ForwardStep> {
    step.validate()?;
    if !(n >= 0.0) {
        return Err(Error::invalid(format!("forward allocation {n} must be ≥ 0")));
    }
    let p_al = trader.p_success(step.dt)?;
    let (u, d) = step.moves();
    let (su, sd, growth) = (u.exp(), d.exp(), (step.r * step.dt).exp());
    let pr = four_probs(step.p_up, p_al);
    Ok(ForwardStep {
        n,
        outcomes: [
            (n * (su - growth), pr[0]),
            (n * (growth - sd), pr[1]),
            (n * (growth - su), pr[2]),
            (n * (sd - growth), pr[3]),
        ],
    })
}

/// Leading-order forward moments `(2Nλη√(𝕡(1−𝕡))Δt, N²η²Δt)`.
pub fn forward_moments_leading(step: &StepParams, n: f64, trader: &TraderSpec) -> (f64, f64) {
    (2.0 * n * trader.lambda * step.eta * step.spread() * step.dt, n * n * step.eta * step.eta * step.dt)
}

/// `2λ√(𝕡(1−𝕡))`.
pub fn information_ratio(lambda: f64, p_up: f64) -> Result<f64> {
    if !(p_up > 0.0 && p_up < 1.0) {
        return Err(Error::invalid(format!("upturn probability {p_up} outside (0,1)")));
    }
    Ok(2.0 * lambda * (p_up * (1.0 - p_up)).sqrt())
}

/// Market price of risk `(θ + 2Nλ√(𝕡(1−𝕡)))/√(1 + N²)` of the enhanced
/// process holding `n` forwards per share.
pub fn theta_objective(n: f64, theta: f64, lambda: f64, p_up: f64) -> f64 {
    (theta + 2.0 * n * lambda * (p_up * (1.0 - p_up)).sqrt()) / (1.0 + n * n).sqrt()
}

/// `(N_opt, Θ_opt) = ((2λ/θ)√(𝕡(1−𝕡)), √(θ² + 4λ²𝕡(1−𝕡)))`.
pub fn optimal_allocation(lambda: f64, theta: f64, p_up: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0) {
        return Err(Error::invalid(format!("market price of risk {theta} must be positive")));
    }
    let pq = p_up * (1.0 - p_up);
    if lambda == 0.0 {
        return Ok((0.0, theta));
    }
    Ok((2.0 * lambda / theta * pq.sqrt(), (theta * theta + 4.0 * lambda * lambda * pq).sqrt()))
}

/// Dividend `sign(λ)·η(√(θ² + 4λ²𝕡(1−𝕡)) − θ)`; negative `λ` describes a
/// misinformed trader and is not used in pricing.
pub fn signed_dividend(lambda: f64, theta: f64, eta: f64, p_up: f64) -> f64 {
    if lambda == 0.0 {
        return 0.0;
    }
    let d = eta * ((theta * theta + 4.0 * lambda * lambda * p_up * (1.0 - p_up)).sqrt() - theta);
    d * lambda.signum()
}

/// Everything the informed trader derives at one step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InformedStep {
    pub u_log: f64,
    pub d_log: f64,
    pub nu: f64,
    pub eta: f64,
    pub theta: f64,
    pub n_opt: f64,
    pub dividend: f64,
    pub nu_aleph: f64,
    pub q_aleph: f64,
}

/// `ν^ℵ` in closed form: `η√(θ² + 4λ²𝕡(1−𝕡)) + η²/2 + r`.
pub fn informed_drift_closed_form(step: &StepParams, lambda: f64) -> f64 {
    let th = step.theta();
    step.eta * (th * th + 4.0 * lambda * lambda * step.p_up * (1.0 - step.p_up)).sqrt()
        + 0.5 * step.eta * step.eta
        + step.r
}

/// Informed drift and first-order risk-neutral probability for one step.
pub fn informed_step(step: &StepParams, trader: &TraderSpec) -> Result<InformedStep> {
    informed_step_with(step, trader, QRule::Approx)
}

/// As [`informed_step`]; [`QRule::Exact`] uses the one-step martingale
/// probability of the tree whose moves carry the extra drift `D`.
pub fn informed_step_with(step: &StepParams, trader: &TraderSpec, rule: QRule) -> Result<InformedStep> {
    step.validate()?;
    trader.p_success(step.dt)?;
    if !(step.nu - 0.5 * step.eta * step.eta > step.r && step.r > 0.0) {
        return Err(Error::invalid(format!(
            "admissibility ν − η²/2 > r > 0 fails (ν = {}, η = {}, r = {})",
            step.nu, step.eta, step.r
        )));
    }
    let theta = step.theta();
    let (n_opt, _) = optimal_allocation(trader.lambda, theta, step.p_up)?;
    let dividend = signed_dividend(trader.lambda, theta, step.eta, step.p_up);
    let nu_aleph = step.nu + dividend;
    let (u, d) = step.moves();
    let shift = dividend * step.dt;
    let q_aleph = csy_q(rule, step.p_up, nu_aleph, step.eta, step.r, step.dt, u + shift, d + shift);
    Ok(InformedStep { u_log: u, d_log: d, nu: step.nu, eta: step.eta, theta, n_opt, dividend, nu_aleph, q_aleph })
}

/// Next-price law of the enhanced process, per unit of current price.
/// Outcomes with equal value are merged.
pub fn enhanced_step_distribution(step: &StepParams, n: f64, trader: &TraderSpec) -> Result<Vec<(f64, f64)>> {
    let fwd = forward_step(step, n, trader)?;
    let (u, d) = step.moves();
    let base = [u.exp(), d.exp(), u.exp(), d.exp()];
    let mut law: Vec<(f64, f64)> = Vec::with_capacity(4);
    for (i, (pay, prob)) in fwd.outcomes.iter().enumerate() {
        let v = base[i] + pay;
        match law.iter_mut().find(|(w, _)| *w == v) {
            Some(e) => e.1 += prob,
            None => law.push((v, *prob)),
        }
    }
    Ok(law)
}

/// Mean and variance of a discrete law.
pub fn law_moments(law: &[(f64, f64)]) -> (f64, f64) {
    (law_mean(law), law_variance(law))
}

/// Per-step record of an informed price.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformedStepRecord {
    pub step: usize,
    pub lambda: f64,
    pub eta: f64,
    pub n_opt: f64,
    pub dividend: f64,
    pub nu_aleph: f64,
    pub q_aleph: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InformedPriceResult {
    pub format_version: u32,
    pub f0: f64,
    pub delta0: f64,
    pub ladder: Option<PriceResult>,
    /// Empty for path-dependent volatility.
    pub steps: Vec<InformedStepRecord>,
}

impl InformedPriceResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("price results serialize")
    }
}

fn drift_at(params: &CsyParams, nu_ladder: Option<&[f64]>, k: usize) -> Result<f64> {
    match nu_ladder {
        None => Ok(params.nu),
        Some(l) => l
            .get(k)
            .copied()
            .ok_or_else(|| Error::invalid(format!("drift ladder has {} entries, step {k} requested", l.len()))),
    }
}

/// Prices a European option on the CSY tree under the informed trader's
/// risk-neutral probabilities. `nu_ladder` optionally gives a drift per
/// step; otherwise `params.nu` is used throughout.
#[allow(clippy::too_many_arguments)]
pub fn price_informed(
    s0: f64,
    params: &CsyParams,
    intensity: &IntensitySeries,
    trader: &TraderSpec,
    rates: &[f64],
    option: &OptionSpec,
    config: &CsyPricingConfig,
    nu_ladder: Option<&[f64]>,
) -> Result<InformedPriceResult> {
    params.validate()?;
    let dt = intensity.dt;
    let n = steps_to_maturity(dt, option.maturity)?;
    let rates = expand_rates(rates, n)?;
    let p_up = intensity.p_up;
    let (uv, dv) = (intensity.up_value(), intensity.down_value());
    let rule = config.q_rule;
    let lambda = trader.lambda;
    trader.p_success(dt)?;
    let step_of = |k: usize, eta: f64, r: f64| -> Result<InformedStep> {
        let nu = drift_at(params, nu_ladder, k)?;
        let sp = StepParams { nu, eta, r, p_up, dt };
        let mut st = informed_step_with(&sp, trader, rule).map_err(|e| match e {
            Error::InvalidInput(m) => Error::invalid(format!("step {k}: {m}")),
            other => other,
        })?;
        // The tree moves use the intensity values actually observed, which
        // differ from the standardized ones for raw-sign intensities.
        let (u, d) = conditional_moves(nu, eta, uv, dv, dt);
        if (u, d) != (st.u_log, st.d_log) {
            let shift = st.dividend * dt;
            st.u_log = u;
            st.d_log = d;
            st.q_aleph = csy_q(rule, p_up, st.nu_aleph, eta, r, dt, u + shift, d + shift);
        }
        Ok(st)
    };
    let node = |k: usize, eta: f64, r: f64| -> Result<NodeStep> {
        let st = step_of(k, eta, r)?;
        check_q(k, st.q_aleph)?;
        Ok(NodeStep { up_log: st.u_log, down_log: st.d_log, q: st.q_aleph })
    };
    match config.eta_source {
        EtaSource::Realized => {
            let etas = realized_etas(params, intensity, n, config.indexing)?;
            let (ladder, _) = price_realized(s0, dt, &etas, &rates, option, config.max_levels, node)?;
            let steps = (0..n)
                .map(|k| {
                    let st = step_of(k, etas[k], rates[k])?;
                    Ok(InformedStepRecord {
                        step: k,
                        lambda,
                        eta: etas[k],
                        n_opt: st.n_opt,
                        dividend: st.dividend,
                        nu_aleph: st.nu_aleph,
                        q_aleph: st.q_aleph,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(InformedPriceResult {
                format_version: FORMAT_VERSION,
                f0: ladder.f0,
                delta0: ladder.deltas[0][0],
                ladder: Some(ladder),
                steps,
            })
        }
        EtaSource::PathDependent => {
            if config.indexing != EtaIndexing::Previsible {
                return Err(Error::invalid("path-dependent volatility is only defined with previsible indexing"));
            }
            let start = PathState::from_history(params, intensity);
            let (f0, delta0) =
                price_path_dependent(s0, dt, n, params, start, uv, dv, &rates, option, config.max_levels, &node)?;
            Ok(InformedPriceResult { format_version: FORMAT_VERSION, f0, delta0, ladder: None, steps: Vec::new() })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_reference() {
        let (n, th) = optimal_allocation(0.5, 1.0, 0.5).unwrap();
        assert!((n - 0.5).abs() < 1e-15);
        assert!((th - 1.25f64.sqrt()).abs() < 1e-15);
        assert!(optimal_allocation(0.1, 0.0, 0.5).is_err());
    }

    #[test]
    fn zero_lambda_leaves_drift_unchanged() {
        let sp = StepParams { nu: 0.1, eta: 0.2, r: 0.02, p_up: 0.55, dt: 1.0 / 252.0 };
        let st = informed_step(&sp, &TraderSpec::new(0.0).unwrap()).unwrap();
        assert_eq!(st.dividend, 0.0);
        assert_eq!(st.nu_aleph, sp.nu);
        assert_eq!(st.n_opt, 0.0);
    }

    #[test]
    fn merged_law_without_forwards() {
        let sp = StepParams { nu: 0.1, eta: 0.2, r: 0.02, p_up: 0.6, dt: 0.01 };
        let law = enhanced_step_distribution(&sp, 0.0, &TraderSpec::new(0.3).unwrap()).unwrap();
        assert_eq!(law.len(), 2);
        assert!((law[0].1 - 0.6).abs() < 1e-15);
    }
}
