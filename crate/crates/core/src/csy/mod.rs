//! Cherny–Shiryaev–Yor path-dependent dynamics driven by an index.
//!
//! The index return series is centralized and turned into a two-point
//! intensity `ξ`. Running sums of `ξ` feed two filters `h`, `g`:
//!
//! ```text
//! X_k = Σ_{i≤k} √Δt ξ_i
//! Y_k = Σ_{i≤k} √Δt ξ_i h(X_{i−1})
//! V_k = Σ_{i≤k} √Δt ξ_i g(A_{i−1}),   A_k = Σ_{j≤k} X_{j−1} Δt
//! S_k = S_0 exp(ν t_k + σ X_k + γ Y_k + δ V_k)
//! ```
//!
//! so the step `k → k+1` has log-return `νΔt + η_k √Δt ξ_{k+1}` with the
//! previsible volatility `η_k = σ + γ h(X_k) + δ g(A_k)`.

mod continuum;
mod filters;
pub(crate) mod pricing;

pub use continuum::{
    continuum_csv, continuum_from_increments, simulate_continuum, simulate_continuum_paths, ContinuumPath,
};
pub use filters::{FilterSpec, PiecewiseFilter};
pub use pricing::{
    conditional_moves, csy_q, price_csy, price_path_dependent, CsyPriceResult, CsyPricingConfig, CsyStepRecord,
    EtaSource, NodeStep, PathState,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::csv_string;

/// Drift, base volatility and the loadings on the two filtered terms.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsyParams {
    pub nu: f64,
    pub sigma: f64,
    pub gamma: f64,
    pub delta: f64,
    pub h: FilterSpec,
    pub g: FilterSpec,
}

impl CsyParams {
    /// Parameters with Gaussian filters of bandwidths `sigma_h`, `sigma_g`.
    pub fn gaussian(nu: f64, sigma: f64, gamma: f64, sigma_h: f64, delta: f64, sigma_g: f64) -> Result<Self> {
        let p =
            CsyParams { nu, sigma, gamma, delta, h: FilterSpec::gaussian(sigma_h)?, g: FilterSpec::gaussian(sigma_g)? };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.nu.is_finite() || !(self.sigma >= 0.0) || !(self.gamma >= 0.0) || !(self.delta >= 0.0) {
            return Err(Error::invalid("CSY params need finite nu and sigma, gamma, delta ≥ 0"));
        }
        self.h.validate()?;
        self.g.validate()
    }

    /// `σ + γ h(a_h) + δ g(a_g)`.
    pub fn eta_at(&self, arg_h: f64, arg_g: f64) -> f64 {
        self.sigma + self.gamma * self.h.eval(arg_h) + self.delta * self.g.eval(arg_g)
    }
}

/// How the intensity was formed from the index returns.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntensityKind {
    /// Two-point values `√((1−𝕡)/𝕡)` and `−√(𝕡/(1−𝕡))` with mean 0 and variance 1.
    Standardized,
    /// Raw signs `±1`.
    RawSign,
}

/// Index intensity per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensitySeries {
    pub xi: Vec<f64>,
    /// Upturn probability `𝕡`.
    pub p_up: f64,
    pub dt: f64,
    pub kind: IntensityKind,
}

/// Up value `√((1−𝕡)/𝕡)` of the standardized intensity.
pub fn intensity_up_value(p_up: f64) -> f64 {
    ((1.0 - p_up) / p_up).sqrt()
}

/// Down value `−√(𝕡/(1−𝕡))` of the standardized intensity.
pub fn intensity_down_value(p_up: f64) -> f64 {
    -(p_up / (1.0 - p_up)).sqrt()
}

impl IntensitySeries {
    /// Standardized intensity from a sequence of up/down flags.
    pub fn from_signs(ups: &[bool], p_up: f64, dt: f64) -> Result<Self> {
        check_p(p_up)?;
        check_dt(dt)?;
        let (u, d) = (intensity_up_value(p_up), intensity_down_value(p_up));
        Ok(IntensitySeries {
            xi: ups.iter().map(|&up| if up { u } else { d }).collect(),
            p_up,
            dt,
            kind: IntensityKind::Standardized,
        })
    }

    /// An empty series, used as a zero history.
    pub fn empty(p_up: f64, dt: f64) -> Result<Self> {
        Self::from_signs(&[], p_up, dt)
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn up_value(&self) -> f64 {
        match self.kind {
            IntensityKind::Standardized => intensity_up_value(self.p_up),
            IntensityKind::RawSign => 1.0,
        }
    }

    pub fn down_value(&self) -> f64 {
        match self.kind {
            IntensityKind::Standardized => intensity_down_value(self.p_up),
            IntensityKind::RawSign => -1.0,
        }
    }

    /// Exact mean and variance of the two-point law `{up w.p. 𝕡, down w.p. 1 − 𝕡}`.
    pub fn two_point_moments(&self) -> (f64, f64) {
        let (p, u, d) = (self.p_up, self.up_value(), self.down_value());
        let mean = p * u + (1.0 - p) * d;
        (mean, p * (u - mean).powi(2) + (1.0 - p) * (d - mean).powi(2))
    }

    /// The first `n` entries as a new series.
    pub fn prefix(&self, n: usize) -> IntensitySeries {
        IntensitySeries { xi: self.xi[..n.min(self.xi.len())].to_vec(), ..self.clone() }
    }
}

fn check_p(p: f64) -> Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("upturn probability {p} outside (0,1)")));
    }
    Ok(())
}

fn check_dt(dt: f64) -> Result<()> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("step size {dt} must be positive")));
    }
    Ok(())
}

/// `z_k = (R_k − (μ_M − σ_M²/2)Δt) / (σ_M √Δt)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentralizedReturnSeries {
    pub z: Vec<f64>,
}

pub fn centralize(returns: &[f64], mu_m: f64, sigma_m: f64, dt: f64) -> Result<CentralizedReturnSeries> {
    if !(sigma_m > 0.0) {
        return Err(Error::invalid("index volatility must be positive"));
    }
    check_dt(dt)?;
    let centre = (mu_m - 0.5 * sigma_m * sigma_m) * dt;
    let scale = sigma_m * dt.sqrt();
    let z: Vec<f64> = returns.iter().map(|r| (r - centre) / scale).collect();
    if z.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite centralized return"));
    }
    Ok(CentralizedReturnSeries { z })
}

/// Standardized intensity from centralized returns; `z ≥ 0` is an upturn.
/// When `p_up` is `None` it is the frequency of upturns in `z`.
pub fn intensity(z: &CentralizedReturnSeries, p_up: Option<f64>, dt: f64) -> Result<IntensitySeries> {
    let ups: Vec<bool> = z.z.iter().map(|&v| v >= 0.0).collect();
    let p = match p_up {
        Some(p) => p,
        None => {
            if ups.is_empty() {
                return Err(Error::invalid("cannot estimate the upturn probability of an empty series"));
            }
            let f = ups.iter().filter(|&&u| u).count() as f64 / ups.len() as f64;
            if f == 0.0 || f == 1.0 {
                return Err(Error::invalid(
                    "all centralized returns share one sign; upturn probability would be 0 or 1",
                ));
            }
            f
        }
    };
    IntensitySeries::from_signs(&ups, p, dt)
}

/// Raw-sign intensity `ξ = ±1` read directly off the index returns, with
/// `𝕡` set to the empirical upturn frequency.
pub fn intensity_from_raw_signs(returns: &[f64], dt: f64) -> Result<IntensitySeries> {
    check_dt(dt)?;
    let ups = returns.iter().filter(|&&r| r >= 0.0).count();
    if returns.is_empty() || ups == 0 || ups == returns.len() {
        return Err(Error::invalid("raw-sign intensity needs both up and down returns"));
    }
    Ok(IntensitySeries {
        xi: returns.iter().map(|&r| if r >= 0.0 { 1.0 } else { -1.0 }).collect(),
        p_up: ups as f64 / returns.len() as f64,
        dt,
        kind: IntensityKind::RawSign,
    })
}

/// Running sums for `k = 0..=n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAccumulators {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub v: Vec<f64>,
    /// `arg_h[k] = X_k`.
    pub arg_h: Vec<f64>,
    /// `arg_g[k] = Σ_{j≤k} X_{j−1} Δt`.
    pub arg_g: Vec<f64>,
}

pub fn accumulate(xi: &IntensitySeries, h: &FilterSpec, g: &FilterSpec) -> PathAccumulators {
    let n = xi.len();
    let sq = xi.dt.sqrt();
    let mut acc = PathAccumulators {
        x: vec![0.0; n + 1],
        y: vec![0.0; n + 1],
        v: vec![0.0; n + 1],
        arg_h: vec![0.0; n + 1],
        arg_g: vec![0.0; n + 1],
    };
    for i in 1..=n {
        let incr = sq * xi.xi[i - 1];
        acc.x[i] = acc.x[i - 1] + incr;
        acc.y[i] = acc.y[i - 1] + incr * h.eval(acc.x[i - 1]);
        acc.v[i] = acc.v[i - 1] + incr * g.eval(acc.arg_g[i - 1]);
        acc.arg_g[i] = acc.arg_g[i - 1] + acc.x[i - 1] * xi.dt;
        acc.arg_h[i] = acc.x[i];
    }
    acc
}

/// Index alignment of the filter arguments inside `η`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EtaIndexing {
    /// `η_k = σ + γ h(X_k) + δ g(A_k)` for `k = 0..=n`, consistent with the
    /// per-step returns of [`stock_path`].
    #[default]
    Previsible,
    /// `η_0 = σ` and, for `1 ≤ k < n`, `η_k = σ + γ h(Σ_{i=1}^{k} √Δt ξ_{i+1}) + δ g(A_k)`,
    /// which reads the intensity of the step being priced.
    Shifted,
}

/// Volatility per step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolatilityState {
    pub eta: Vec<f64>,
    pub indexing: EtaIndexing,
}

/// `η_k` for one `k`.
pub fn eta(params: &CsyParams, xi: &IntensitySeries, k: usize, indexing: EtaIndexing) -> Result<f64> {
    let series = eta_series(params, xi, indexing)?;
    series
        .eta
        .get(k)
        .copied()
        .ok_or_else(|| Error::invalid(format!("eta index {k} beyond the {} available entries", series.eta.len())))
}

/// The whole `η` series: `n + 1` entries under [`EtaIndexing::Previsible`]
/// and `n` under [`EtaIndexing::Shifted`].
pub fn eta_series(params: &CsyParams, xi: &IntensitySeries, indexing: EtaIndexing) -> Result<VolatilityState> {
    let acc = accumulate(xi, &params.h, &params.g);
    let n = xi.len();
    let eta: Vec<f64> = match indexing {
        EtaIndexing::Previsible => (0..=n).map(|k| params.eta_at(acc.x[k], acc.arg_g[k])).collect(),
        EtaIndexing::Shifted => (0..n)
            .map(|k| if k == 0 { params.sigma } else { params.eta_at(acc.x[k + 1] - acc.x[1], acc.arg_g[k]) })
            .collect(),
    };
    if let Some(k) = eta.iter().position(|e| !(*e > 0.0)) {
        return Err(Error::numerical(format!("non-positive volatility eta_{k} = {}", eta[k])));
    }
    Ok(VolatilityState { eta, indexing })
}

/// Price path driven by an intensity series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsyPath {
    pub t: Vec<f64>,
    pub s: Vec<f64>,
    /// `log_returns[k−1] = νΔt + √Δt ξ_k (σ + γ h(X_{k−1}) + δ g(A_{k−1}))`.
    pub log_returns: Vec<f64>,
    pub accumulators: PathAccumulators,
}

pub fn stock_path(params: &CsyParams, xi: &IntensitySeries, s0: f64) -> Result<CsyPath> {
    if !(s0 > 0.0) {
        return Err(Error::invalid("spot must be positive"));
    }
    let acc = accumulate(xi, &params.h, &params.g);
    let n = xi.len();
    let dt = xi.dt;
    let sq = dt.sqrt();
    let t: Vec<f64> = (0..=n).map(|k| k as f64 * dt).collect();
    let s = (0..=n)
        .map(|k| {
            s0 * (params.nu * t[k] + params.sigma * acc.x[k] + params.gamma * acc.y[k] + params.delta * acc.v[k]).exp()
        })
        .collect();
    let log_returns =
        (1..=n).map(|k| params.nu * dt + sq * xi.xi[k - 1] * params.eta_at(acc.x[k - 1], acc.arg_g[k - 1])).collect();
    Ok(CsyPath { t, s, log_returns, accumulators: acc })
}

/// CSV with header `step,X,Y,V,eta,S`; `eta` is left empty where the chosen
/// indexing does not define it.
pub fn path_trace_csv(path: &CsyPath, eta: &VolatilityState) -> String {
    let acc = &path.accumulators;
    csv_string(
        &["step", "X", "Y", "V", "eta", "S"],
        (0..path.s.len()).map(|k| {
            [
                k.to_string(),
                acc.x[k].to_string(),
                acc.y[k].to_string(),
                acc.v[k].to_string(),
                eta.eta.get(k).map(|e| e.to_string()).unwrap_or_default(),
                path.s[k].to_string(),
            ]
        }),
    )
}

/// Drift and diffusion coefficients of `dS/S` in the continuum limit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SdeCoefficients {
    pub n1: f64,
    pub n2: f64,
}

impl SdeCoefficients {
    /// Market price of risk `(N1 − r)/N2`.
    pub fn theta(&self, r: f64) -> f64 {
        (self.n1 - r) / self.n2
    }
}

/// `N1 = ν + σ²/2 + γ²h²/2 + δ²g²/2 + σγh + σδg + γδhg`, `N2 = σ + γh + δg`
/// with `h = h(B_t)` and `g = g(∫B)`.
pub fn sde_coefficients(params: &CsyParams, b: f64, integrated_b: f64) -> Result<SdeCoefficients> {
    let h = params.h.eval(b);
    let g = params.g.eval(integrated_b);
    let (s, ga, de) = (params.sigma, params.gamma, params.delta);
    let n2 = s + ga * h + de * g;
    if !(n2 > 0.0) {
        return Err(Error::numerical(format!("non-positive diffusion coefficient {n2}")));
    }
    let n1 = params.nu
        + 0.5 * s * s
        + 0.5 * ga * ga * h * h
        + 0.5 * de * de * g * g
        + s * ga * h
        + s * de * g
        + ga * de * h * g;
    Ok(SdeCoefficients { n1, n2 })
}

/// `V` traces for a list of Gaussian `g` bandwidths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandpassTrace {
    pub sigma_g: f64,
    pub v: Vec<f64>,
    pub max_abs_v: f64,
}

pub fn bandpass_experiment(sigma_g_list: &[f64], xi: &IntensitySeries) -> Result<Vec<BandpassTrace>> {
    if sigma_g_list.is_empty() {
        return Err(Error::invalid("bandpass experiment needs at least one bandwidth"));
    }
    sigma_g_list
        .iter()
        .map(|&sg| {
            let g = FilterSpec::gaussian(sg)?;
            let acc = accumulate(xi, &FilterSpec::zero(), &g);
            let max_abs_v = acc.v.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            Ok(BandpassTrace { sigma_g: sg, v: acc.v, max_abs_v })
        })
        .collect()
}

/// Long-form CSV `sigma_g,step,V`.
pub fn bandpass_csv(traces: &[BandpassTrace]) -> String {
    csv_string(
        &["sigma_g", "step", "V"],
        traces.iter().flat_map(|t| {
            t.v.iter().enumerate().map(move |(k, v)| [t.sigma_g.to_string(), k.to_string(), v.to_string()])
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intensity_values() {
        assert!((intensity_up_value(0.6) - 0.816497).abs() < 1e-6);
        assert!((intensity_down_value(0.6) + 1.224745).abs() < 1e-6);
        assert_eq!(intensity_up_value(0.5), 1.0);
        assert_eq!(intensity_down_value(0.5), -1.0);
    }

    #[test]
    fn degenerate_sign_series() {
        let z = CentralizedReturnSeries { z: vec![1.0, 2.0, 0.0] };
        assert!(intensity(&z, None, 1.0).is_err());
        assert!(intensity(&z, Some(0.4), 1.0).is_ok());
    }

    #[test]
    fn constant_h_gives_y_equal_x() {
        let xi = IntensitySeries::from_signs(&[true, false, false, true, true], 0.55, 0.5).unwrap();
        let acc = accumulate(&xi, &FilterSpec::constant(1.0), &FilterSpec::zero());
        for k in 0..=5 {
            assert!((acc.y[k] - acc.x[k]).abs() < 1e-15);
            assert_eq!(acc.v[k], 0.0);
        }
    }

    #[test]
    fn shifted_indexing_starts_at_sigma() {
        let p = CsyParams::gaussian(0.001, 0.01, 0.2, 1.0, 0.1, 2.0).unwrap();
        let xi = IntensitySeries::from_signs(&[true, false, true, true], 0.5, 1.0).unwrap();
        let s = eta_series(&p, &xi, EtaIndexing::Shifted).unwrap();
        assert_eq!(s.eta.len(), 4);
        assert_eq!(s.eta[0], p.sigma);
        let q = eta_series(&p, &xi, EtaIndexing::Previsible).unwrap();
        assert_eq!(q.eta.len(), 5);
        assert!(q.eta.iter().all(|&e| e >= p.sigma));
    }
}
