//! Convergence of the bound radial modes `f_nl` to the zero-energy modes
//! `g_l` as `n → ∞`, measured on radial grids.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{energy, radial_bound, radial_zero_energy, RadialModeIndex};

/// Default number of grid points.
pub const DEFAULT_GRID: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub l: usize,
    pub interval: (f64, f64),
    pub n_values: Vec<usize>,
    pub c0_errors: Vec<f64>,
    pub c1_errors: Vec<f64>,
    /// Least-squares slope of `log c0` against `log n`.
    pub fitted_slope: f64,
}

fn difference(l: usize, n: usize, r: f64) -> f64 {
    let idx = RadialModeIndex::new(n, l).expect("validated index");
    radial_bound(idx, r).expect("r >= 0") - radial_zero_energy(l, r).expect("r >= 0")
}

fn check(l: usize, n: usize, interval: (f64, f64)) -> Result<()> {
    RadialModeIndex::new(n, l)?;
    let (r1, r2) = interval;
    if !(r1 >= 0.0 && r2 > r1 && r2.is_finite()) {
        return Err(Error::InvalidArgument(format!("need 0 <= R1 < R2, got ({r1}, {r2})")));
    }
    Ok(())
}

/// Sup-norm distances between `f_nl` and `g_l` on a uniform grid of `(R1, R2)`.
///
/// Returns `(c0, c1)` where `c0 = max |f - g|` and `c1` also takes the
/// derivative difference into account (5-point central differences with step
/// `(R2 - R1) / (10·grid_count)`). With `R1 = 0` the grid starts at its first
/// interior point.
pub fn sup_error(l: usize, n: usize, interval: (f64, f64), grid_count: usize) -> Result<(f64, f64)> {
    check(l, n, interval)?;
    if grid_count < 100 {
        return Err(Error::InvalidArgument(format!("grid_count must be >= 100, got {grid_count}")));
    }
    let (r1, r2) = interval;
    let width = r2 - r1;
    let h = width / (10.0 * grid_count as f64);
    let first = usize::from(r1 == 0.0);
    let (c0, c1) = (first..=grid_count)
        .map(|i| {
            let r = r1 + width * i as f64 / grid_count as f64;
            let d = difference(l, n, r);
            // one-sided stencils would be needed below 2h; the grid never gets there
            let rr = r.max(2.0 * h);
            let dd = (difference(l, n, rr - 2.0 * h) - 8.0 * difference(l, n, rr - h) + 8.0 * difference(l, n, rr + h)
                - difference(l, n, rr + 2.0 * h))
                / (12.0 * h);
            (d.abs(), d.abs().max(dd.abs()))
        })
        .fold((0.0f64, 0.0f64), |acc, x| (acc.0.max(x.0), acc.1.max(x.1)));
    Ok((c0, c1))
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 || x.iter().chain(y).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidArgument("slope needs matching positive samples".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / k, ly.iter().sum::<f64>() / k);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    Ok(sxy / sxx)
}

/// Measures the decay rate of the sup-norm error over `n_list`.
pub fn rate_fit(l: usize, n_list: &[usize], interval: (f64, f64)) -> Result<RateReport> {
    rate_fit_on_grid(l, n_list, interval, DEFAULT_GRID)
}

pub fn rate_fit_on_grid(l: usize, n_list: &[usize], interval: (f64, f64), grid_count: usize) -> Result<RateReport> {
    if n_list.len() < 5 {
        return Err(Error::InvalidArgument(format!("need at least 5 values of n, got {}", n_list.len())));
    }
    let lo = *n_list.iter().min().unwrap();
    let hi = *n_list.iter().max().unwrap();
    if hi < 4 * lo {
        return Err(Error::InvalidArgument(format!("n values must span a factor of 4, got {lo}..{hi}")));
    }
    for &n in n_list {
        check(l, n, interval)?;
    }
    let errors: Vec<(f64, f64)> =
        n_list.par_iter().map(|&n| sup_error(l, n, interval, grid_count)).collect::<Result<_>>()?;
    let c0_errors: Vec<f64> = errors.iter().map(|e| e.0).collect();
    let c1_errors: Vec<f64> = errors.iter().map(|e| e.1).collect();
    let xs: Vec<f64> = n_list.iter().map(|&n| n as f64).collect();
    let fitted_slope = log_log_slope(&xs, &c0_errors)?;
    Ok(RateReport { l, interval, n_values: n_list.to_vec(), c0_errors, c1_errors, fitted_slope })
}

/// CSV with columns `l,n,R1,R2,c0_error,c1_error`.
pub fn reports_to_csv(reports: &[RateReport]) -> String {
    let mut out = String::from("l,n,R1,R2,c0_error,c1_error\n");
    for rep in reports {
        for (k, n) in rep.n_values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{},{:e},{:e}\n",
                rep.l, n, rep.interval.0, rep.interval.1, rep.c0_errors[k], rep.c1_errors[k]
            ));
        }
    }
    out
}

/// `(D + λ_n)(f_nl - g_l) + λ_n g_l` at `r`, where `D` is the zero-energy
/// radial operator `∂² + (2/r)∂ - l(l+1)/r² + 2/r`. Vanishes identically
/// because `f_nl` solves the radial equation at `λ_n` and `g_l` at zero.
pub fn difference_equation_residual(l: usize, n: usize, r: f64) -> Result<f64> {
    check(l, n, (0.0, r))?;
    let h = 1e-3;
    if r <= 2.0 * h {
        return Err(Error::InvalidArgument(format!("radius {r} too small for the stencil")));
    }
    let d = |x: f64| difference(l, n, x);
    let (m2, m1, c, p1, p2) = (d(r - 2.0 * h), d(r - h), d(r), d(r + h), d(r + 2.0 * h));
    let first = (m2 - 8.0 * m1 + 8.0 * p1 - p2) / (12.0 * h);
    let second = (-m2 + 16.0 * m1 - 30.0 * c + 16.0 * p1 - p2) / (12.0 * h * h);
    let lf = l as f64;
    let lambda = energy(n);
    let op = second + 2.0 / r * first - lf * (lf + 1.0) / (r * r) * c + 2.0 / r * c + lambda * c;
    Ok(op + lambda * radial_zero_energy(l, r)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_shrinks_with_n() {
        let a = sup_error(0, 50, (0.0, 5.0), 1000).unwrap();
        let b = sup_error(0, 100, (0.0, 5.0), 1000).unwrap();
        assert!(b.0 > 0.0 && b.0 < a.0);
        assert_eq!(sup_error(0, 100, (0.0, 5.0), 1000).unwrap(), b);
    }

    #[test]
    fn bad_arguments() {
        assert!(sup_error(0, 10, (1.0, 1.0), 1000).is_err());
        assert!(sup_error(3, 3, (0.0, 5.0), 1000).is_err());
        assert!(sup_error(0, 10, (0.0, 5.0), 99).is_err());
        assert!(rate_fit(0, &[20, 40, 80, 160], (0.0, 5.0)).is_err());
        assert!(rate_fit(0, &[20, 21, 22, 23, 24], (0.0, 5.0)).is_err());
    }

    #[test]
    fn slope_is_scale_invariant() {
        let x = [20.0, 40.0, 80.0, 160.0, 200.0];
        let y = [3.0, 0.8, 0.21, 0.05, 0.033];
        let scaled: Vec<f64> = y.iter().map(|v| v * 17.5).collect();
        let a = log_log_slope(&x, &y).unwrap();
        assert!((a - log_log_slope(&x, &scaled).unwrap()).abs() < 1e-12);
        let exact: Vec<f64> = x.iter().map(|v: &f64| 4.0 * v.powf(-2.0)).collect();
        assert!((log_log_slope(&x, &exact).unwrap() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn csv_layout() {
        let rep = RateReport {
            l: 1,
            interval: (0.0, 5.0),
            n_values: vec![20, 40],
            c0_errors: vec![1e-3, 2.5e-4],
            c1_errors: vec![2e-3, 5e-4],
            fitted_slope: -2.0,
        };
        let csv = reports_to_csv(&[rep]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "l,n,R1,R2,c0_error,c1_error");
        assert_eq!(lines[1], "1,20,0,5,1e-3,2e-3");
        assert_eq!(lines.len(), 3);
    }
}
