//! Derivative-free minimizers and scalar root finding.
//!
//! The Nelder–Mead variant projects every trial point onto a box, which is
//! enough for the low-dimensional, well-scaled problems in this crate once
//! callers reparameterize their constrained quantities.

/// Options for [`nelder_mead`].
#[derive(Debug, Clone)]
pub struct NmOptions {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this (absolute plus relative).
    pub f_tol: f64,
    /// Stop when every simplex vertex lies within this distance of the best one, per coordinate.
    pub x_tol: f64,
    /// Initial simplex edge as a fraction of each coordinate's box width.
    pub initial_step: f64,
}

impl Default for NmOptions {
    fn default() -> Self {
        NmOptions { max_evals: 20_000, f_tol: 1e-12, x_tol: 1e-10, initial_step: 0.05 }
    }
}

#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lo[i], hi[i]);
    }
}

fn sanitize(v: f64) -> f64 {
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

/// Bounded Nelder–Mead. Non-finite objective values are treated as +∞.
pub fn nelder_mead<F>(f: F, x0: &[f64], lo: &[f64], hi: &[f64], opts: &NmOptions) -> NmResult
where
    F: Fn(&[f64]) -> f64,
{
    let n = x0.len();
    let mut evals = 0usize;
    let eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        sanitize(f(x))
    };

    let mut start = x0.to_vec();
    project(&mut start, lo, hi);
    let mut simplex: Vec<Vec<f64>> = vec![start.clone()];
    for i in 0..n {
        let mut v = start.clone();
        let width = hi[i] - lo[i];
        let mut step = opts.initial_step * if width.is_finite() { width } else { v[i].abs().max(1.0) };
        if step == 0.0 {
            step = 1e-4;
        }
        if v[i] + step > hi[i] {
            step = -step;
        }
        v[i] += step;
        project(&mut v, lo, hi);
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();

    let mut converged = false;
    while evals < opts.max_evals {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();

        let best = values[0];
        let worst = values[n];
        let f_spread = (worst - best).abs();
        let x_spread =
            simplex[1..].iter().flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs())).fold(0.0, f64::max);
        if best.is_finite() && f_spread <= opts.f_tol * (1.0 + best.abs()) && x_spread <= opts.x_tol {
            converged = true;
            break;
        }
        if best.is_finite() && x_spread <= opts.x_tol * 1e-3 {
            converged = true;
            break;
        }

        let mut centroid = vec![0.0; n];
        for v in &simplex[..n] {
            for i in 0..n {
                centroid[i] += v[i] / n as f64;
            }
        }
        let along = |t: f64| {
            let mut p: Vec<f64> = (0..n).map(|i| centroid[i] + t * (simplex[n][i] - centroid[i])).collect();
            project(&mut p, lo, hi);
            p
        };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        let x_best = simplex[0].clone();
        for j in 1..=n {
            let mut p: Vec<f64> = (0..n).map(|i| x_best[i] + 0.5 * (simplex[j][i] - x_best[i])).collect();
            project(&mut p, lo, hi);
            values[j] = eval(&p, &mut evals);
            simplex[j] = p;
        }
    }

    let (ib, _) =
        values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0))).expect("non-empty simplex");
    NmResult { x: simplex[ib].clone(), fx: values[ib], evals, converged }
}

/// Runs [`nelder_mead`] repeatedly from the latest optimum until a restart
/// no longer improves the objective, which shakes the simplex out of
/// premature collapse.
pub fn nelder_mead_restarted<F>(
    f: F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    opts: &NmOptions,
    max_restarts: usize,
) -> NmResult
where
    F: Fn(&[f64]) -> f64,
{
    let mut res = nelder_mead(&f, x0, lo, hi, opts);
    let mut evals = res.evals;
    for _ in 0..max_restarts {
        let next = nelder_mead(&f, &res.x, lo, hi, opts);
        evals += next.evals;
        let improved = next.fx < res.fx - opts.f_tol * (1.0 + res.fx.abs());
        if next.fx <= res.fx {
            res = NmResult { converged: next.converged, ..next };
        }
        if !improved {
            break;
        }
    }
    res.evals = evals;
    res
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_section<F>(f: F, mut a: f64, mut b: f64, tol: f64, max_iter: usize) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = sanitize(f(c));
    let mut fd = sanitize(f(d));
    for _ in 0..max_iter {
        if (b - a).abs() <= tol {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = sanitize(f(c));
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = sanitize(f(d));
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Evaluates `f` on an ascending grid, then refines by golden section
/// between the neighbours of the best grid point. Returns the better of
/// the refined point and the best grid point.
pub fn scan_then_golden<F>(f: F, grid: &[f64], tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> f64,
{
    assert!(!grid.is_empty());
    let values: Vec<f64> = grid.iter().map(|&x| sanitize(f(x))).collect();
    let (i, &best) =
        values.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0))).expect("non-empty grid");
    if grid.len() == 1 || !best.is_finite() {
        return (grid[i], best);
    }
    let a = grid[i.saturating_sub(1)];
    let b = grid[(i + 1).min(grid.len() - 1)];
    let (x, fx) = golden_section(&f, a, b, tol, 200);
    if fx < best {
        (x, fx)
    } else {
        (grid[i], best)
    }
}

/// Brent's method for a root of `f` bracketed by `[a, b]`.
pub fn brent_root<F>(f: F, mut a: f64, mut b: f64, x_tol: f64, max_iter: usize) -> Option<f64>
where
    F: Fn(f64) -> f64,
{
    let mut fa = f(a);
    let mut fb = f(b);
    if fa == 0.0 {
        return Some(a);
    }
    if fb == 0.0 {
        return Some(b);
    }
    if fa.signum() == fb.signum() || !fa.is_finite() || !fb.is_finite() {
        return None;
    }
    if fa.abs() < fb.abs() {
        std::mem::swap(&mut a, &mut b);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut c = a;
    let mut fc = fa;
    let mut mflag = true;
    let mut d = 0.0;
    for _ in 0..max_iter {
        if fb == 0.0 || (b - a).abs() < x_tol {
            return Some(b);
        }
        let mut s = if fa != fc && fb != fc {
            a * fb * fc / ((fa - fb) * (fa - fc))
                + b * fa * fc / ((fb - fa) * (fb - fc))
                + c * fa * fb / ((fc - fa) * (fc - fb))
        } else {
            b - fb * (b - a) / (fb - fa)
        };
        let lo = (3.0 * a + b) / 4.0;
        let between = if lo < b { s > lo && s < b } else { s > b && s < lo };
        if !between
            || (mflag && (s - b).abs() >= (b - c).abs() / 2.0)
            || (!mflag && (s - b).abs() >= (c - d).abs() / 2.0)
            || (mflag && (b - c).abs() < x_tol)
            || (!mflag && (c - d).abs() < x_tol)
        {
            s = (a + b) / 2.0;
            mflag = true;
        } else {
            mflag = false;
        }
        let fs = f(s);
        d = c;
        c = b;
        fc = fb;
        if fa.signum() != fs.signum() {
            b = s;
            fb = fs;
        } else {
            a = s;
            fa = fs;
        }
        if fa.abs() < fb.abs() {
            std::mem::swap(&mut a, &mut b);
            std::mem::swap(&mut fa, &mut fb);
        }
    }
    Some(b)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nm_finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let r = nelder_mead_restarted(f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], &NmOptions::default(), 5);
        assert!((r.x[0] - 1.0).abs() < 1e-5 && (r.x[1] - 1.0).abs() < 1e-5, "{:?}", r);
    }

    #[test]
    fn nm_respects_bounds() {
        let f = |x: &[f64]| (x[0] + 3.0).powi(2) + (x[1] - 0.5).powi(2);
        let r = nelder_mead(f, &[0.5, 0.0], &[0.0, 0.0], &[1.0, 1.0], &NmOptions::default());
        assert!(r.x[0] >= 0.0 && r.x[0] < 1e-8);
        assert!((r.x[1] - 0.5).abs() < 1e-5);
    }

    #[test]
    fn golden_and_scan() {
        let (x, _) = golden_section(|x| (x - 0.3).powi(2), 0.0, 1.0, 1e-12, 200);
        assert!((x - 0.3).abs() < 1e-6);
        let grid: Vec<f64> = (0..=10).map(|i| i as f64 / 10.0).collect();
        let (x, _) = scan_then_golden(|x| (x - 0.537).abs(), &grid, 1e-12);
        assert!((x - 0.537).abs() < 1e-9);
    }

    #[test]
    fn brent_solves_cubic() {
        let r = brent_root(|x| x * x * x - 2.0, 0.0, 2.0, 1e-14, 200).unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-12);
        assert!(brent_root(|x| x * x + 1.0, -1.0, 1.0, 1e-12, 100).is_none());
    }
}
