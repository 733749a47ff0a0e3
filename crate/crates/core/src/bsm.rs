//! Black–Scholes–Merton prices and implied volatility.

use crate::error::{Error, Result};
use crate::market_data::OptionKind;
use crate::optim::brent_root;
use crate::stats::norm_cdf;

pub const IMPLIED_VOL_MIN: f64 = 1e-6;
pub const IMPLIED_VOL_MAX: f64 = 5.0;

pub fn bsm_price(s0: f64, k: f64, t: f64, r: f64, sigma: f64, kind: OptionKind) -> Result<f64> {
    if !(s0 > 0.0 && k > 0.0 && t > 0.0 && sigma > 0.0) {
        return Err(Error::invalid("bsm_price needs positive spot, strike, maturity and volatility"));
    }
    let sd = sigma * t.sqrt();
    let d1 = ((s0 / k).ln() + (r + 0.5 * sigma * sigma) * t) / sd;
    let d2 = d1 - sd;
    let dk = k * (-r * t).exp();
    Ok(match kind {
        OptionKind::Call => s0 * norm_cdf(d1) - dk * norm_cdf(d2),
        OptionKind::Put => dk * norm_cdf(-d2) - s0 * norm_cdf(-d1),
    })
}

/// No-arbitrage price interval `(lower, upper)` for a European option.
pub fn price_bounds(s0: f64, k: f64, t: f64, r: f64, kind: OptionKind) -> (f64, f64) {
    let dk = k * (-r * t).exp();
    match kind {
        OptionKind::Call => ((s0 - dk).max(0.0), s0),
        OptionKind::Put => ((dk - s0).max(0.0), dk),
    }
}

/// Volatility in `[1e-6, 5]` reproducing `price` to within 1e-10.
pub fn implied_vol(price: f64, s0: f64, k: f64, t: f64, r: f64, kind: OptionKind) -> Result<f64> {
    if !(s0 > 0.0 && k > 0.0 && t > 0.0) {
        return Err(Error::invalid("implied_vol needs positive spot, strike and maturity"));
    }
    let (lo, hi) = price_bounds(s0, k, t, r, kind);
    if !(price > lo) || !(price < hi) {
        return Err(Error::invalid(format!("price {price} outside the no-arbitrage interval ({lo}, {hi})")));
    }
    let f = |s: f64| bsm_price(s0, k, t, r, s, kind).expect("valid inputs") - price;
    if f(IMPLIED_VOL_MIN) > 0.0 || f(IMPLIED_VOL_MAX) < 0.0 {
        return Err(Error::invalid(format!(
            "price {price} not attainable for volatility in [{IMPLIED_VOL_MIN}, {IMPLIED_VOL_MAX}]"
        )));
    }
    let sigma = brent_root(f, IMPLIED_VOL_MIN, IMPLIED_VOL_MAX, 1e-15, 500)
        .ok_or_else(|| Error::numerical("implied volatility root not bracketed"))?;
    if f(sigma).abs() >= 1e-10 * price.max(1.0) {
        return Err(Error::numerical(format!("implied volatility did not converge (residual {})", f(sigma))));
    }
    Ok(sigma)
}
