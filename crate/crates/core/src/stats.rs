//! Small probability helpers shared by several modules.

use libm::erfc;
use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal CDF, evaluated through the complementary error function.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal quantile.
pub fn norm_quantile(u: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(u)
}

/// Binomial(n, p) probability mass for k = 0..=n.
///
/// Built by the multiplicative recurrence outward from the mode and then
/// normalized, which keeps large `n` free of overflow. Masses below the
/// smallest normal double are left at zero.
pub fn binomial_pmf(n: usize, p: f64) -> Vec<f64> {
    let mut w = vec![0.0; n + 1];
    if p <= 0.0 {
        w[0] = 1.0;
        return w;
    }
    if p >= 1.0 {
        w[n] = 1.0;
        return w;
    }
    let ratio = p / (1.0 - p);
    let mode = (((n as f64 + 1.0) * p).floor() as usize).min(n);
    w[mode] = 1.0;
    let mut v = 1.0;
    for k in mode..n {
        v *= (n - k) as f64 / (k + 1) as f64 * ratio;
        if v < f64::MIN_POSITIVE {
            break;
        }
        w[k + 1] = v;
    }
    v = 1.0;
    for k in (1..=mode).rev() {
        v *= k as f64 / (n - k + 1) as f64 / ratio;
        if v < f64::MIN_POSITIVE {
            break;
        }
        w[k - 1] = v;
    }
    let total: f64 = w.iter().sum();
    for x in &mut w {
        *x /= total;
    }
    w
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the n − 1 denominator.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pmf_matches_pascal_weights() {
        let w = binomial_pmf(4, 0.5);
        let expect = [1.0, 4.0, 6.0, 4.0, 1.0].map(|c| c / 16.0);
        for (a, b) in w.iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn pmf_survives_large_n() {
        let w = binomial_pmf(1_000_000, 0.05);
        let s: f64 = w.iter().sum();
        assert!((s - 1.0).abs() < 1e-12);
        let m: f64 = w.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        assert!((m - 50_000.0).abs() < 1e-5);
    }

    #[test]
    fn cdf_reference_values() {
        assert!((norm_cdf(0.0) - 0.5).abs() < 1e-16);
        assert!((norm_cdf(1.959963984540054) - 0.975).abs() < 1e-14);
        assert!((norm_cdf(-8.0) - 6.220960574271786e-16).abs() < 1e-28);
        assert!((norm_quantile(0.975) - 1.959963984540054).abs() < 1e-9);
    }
}
