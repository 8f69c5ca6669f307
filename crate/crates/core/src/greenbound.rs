//! Dirichlet spectrum of `-Δ - 2/|x|` on balls: the lowest radial eigenvalue
//! by shooting, the radius where it changes sign, and the Hardy and Poincaré
//! estimates behind the positivity radius `√π/4`.

use std::f64::consts::PI;

use ode_solvers::{Dopri5, OutputType, System, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Radius `√π / 4` below which positivity follows from the Hardy/Poincaré chain.
pub fn positivity_radius() -> f64 {
    PI.sqrt() / 4.0
}

/// Start of the shooting integration.
pub const SHOOTING_START: f64 = 1e-6;
/// Absolute resolution of eigenvalues.
pub const EIGENVALUE_TOL: f64 = 1e-8;
/// Residual at which the critical-radius bisection stops.
pub const CRITICAL_TOL: f64 = 1e-6;

const RTOL: f64 = 1e-12;
const ATOL: f64 = 1e-14;

/// `u'' = -(2/r) u' - (2/r) u - λ u` as a first-order system; stops at the first node.
struct Radial {
    lambda: f64,
    stop_at_node: bool,
}

impl System<f64, Vector2<f64>> for Radial {
    fn system(&self, r: f64, y: &Vector2<f64>, dy: &mut Vector2<f64>) {
        dy[0] = y[1];
        dy[1] = -2.0 / r * y[1] - 2.0 / r * y[0] - self.lambda * y[0];
    }

    fn solout(&mut self, _r: f64, y: &Vector2<f64>, _dy: &Vector2<f64>) -> bool {
        self.stop_at_node && y[0] <= 0.0
    }
}

/// Regular Frobenius data `u = 1 - r + (2 - λ) r²/6` at `r = ε`.
fn initial_state(lambda: f64) -> Vector2<f64> {
    let e = SHOOTING_START;
    Vector2::new(1.0 - e + (2.0 - lambda) * e * e / 6.0, -1.0 + (2.0 - lambda) * e / 3.0)
}

fn check_radius(radius: f64) -> Result<()> {
    if !(0.01..=10.0).contains(&radius) {
        return Err(Error::InvalidArgument(format!("radius must lie in [0.01, 10], got {radius}")));
    }
    Ok(())
}

/// Whether the regular solution at `lambda` has a zero in `(0, R]`.
fn has_node(lambda: f64, radius: f64) -> Result<bool> {
    let mut solver =
        Dopri5::new(Radial { lambda, stop_at_node: true }, SHOOTING_START, radius, radius, initial_state(lambda), RTOL, ATOL);
    solver.set_output(OutputType::Sparse);
    solver.integrate().map_err(|e| Error::NoBracket(format!("integration failed at λ = {lambda}: {e:?}")))?;
    Ok(solver.y_out().iter().any(|y| y[0] <= 0.0))
}

/// Lowest Dirichlet eigenvalue of `-u'' - (2/r) u' - (2/r) u = λ u` on `(0, R)`.
///
/// Bisects `λ` on whether the regular solution reaches a node before `R`,
/// inside the bracket `[-1, π²/R² + 1]`.
pub fn lowest_radial_eigenvalue(radius: f64) -> Result<f64> {
    check_radius(radius)?;
    let (mut lo, mut hi) = (-1.0, PI * PI / (radius * radius) + 1.0);
    if has_node(lo, radius)? || !has_node(hi, radius)? {
        return Err(Error::NoBracket(format!("no eigenvalue of the radial problem in [{lo}, {hi}] for R = {radius}")));
    }
    while hi - lo > EIGENVALUE_TOL {
        let mid = 0.5 * (lo + hi);
        if has_node(mid, radius)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Regular solution at `lambda` sampled at `count + 1` evenly spaced radii in `[ε, R]`.
pub fn radial_solution(lambda: f64, radius: f64, count: usize) -> Result<Vec<(f64, f64)>> {
    check_radius(radius)?;
    if count == 0 {
        return Err(Error::InvalidArgument("need at least one interval".into()));
    }
    let dx = (radius - SHOOTING_START) / count as f64;
    let mut solver =
        Dopri5::new(Radial { lambda, stop_at_node: false }, SHOOTING_START, radius, dx, initial_state(lambda), RTOL, ATOL);
    solver.integrate().map_err(|e| Error::NoBracket(format!("integration failed: {e:?}")))?;
    Ok(solver.x_out().iter().zip(solver.y_out()).map(|(r, y)| (*r, y[0])).collect())
}

/// Radius in `[lo, hi]` where the lowest eigenvalue vanishes.
///
/// Fails if `λ` has no sign change on the range or the root does not exceed `√π/4`.
pub fn critical_radius(lo: f64, hi: f64) -> Result<f64> {
    if !(lo < hi) {
        return Err(Error::InvalidArgument(format!("empty range [{lo}, {hi}]")));
    }
    let (mut a, mut b) = (lo, hi);
    let (la, lb) = (lowest_radial_eigenvalue(a)?, lowest_radial_eigenvalue(b)?);
    if !(la > 0.0 && lb < 0.0) {
        return Err(Error::NoBracket(format!("λ({lo}) = {la:e}, λ({hi}) = {lb:e}: no sign change")));
    }
    let mut root = 0.5 * (a + b);
    for _ in 0..200 {
        root = 0.5 * (a + b);
        let l = lowest_radial_eigenvalue(root)?;
        if l.abs() < CRITICAL_TOL || b - a < 1e-12 {
            break;
        }
        if l > 0.0 {
            a = root;
        } else {
            b = root;
        }
    }
    if root <= positivity_radius() {
        return Err(Error::InvalidArgument(format!("critical radius {root} does not exceed √π/4")));
    }
    Ok(root)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralScan {
    pub radii: Vec<f64>,
    pub lowest_eigenvalues: Vec<f64>,
    pub critical_radius: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSummary {
    pub critical_radius: f64,
    pub positivity_radius: f64,
    pub lambda_at_positivity_radius: f64,
    pub positive_at_positivity_radius: bool,
    pub critical_exceeds_positivity_radius: bool,
    pub strictly_decreasing: bool,
}

impl SpectralScan {
    pub fn is_strictly_decreasing(&self) -> bool {
        self.lowest_eigenvalues.windows(2).all(|w| w[1] < w[0])
    }

    /// CSV with columns `R,lambda`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("R,lambda\n");
        for (r, l) in self.radii.iter().zip(&self.lowest_eigenvalues) {
            out.push_str(&format!("{r},{l:e}\n"));
        }
        out
    }

    pub fn summary(&self) -> Result<ScanSummary> {
        let lambda = lowest_radial_eigenvalue(positivity_radius())?;
        Ok(ScanSummary {
            critical_radius: self.critical_radius,
            positivity_radius: positivity_radius(),
            lambda_at_positivity_radius: lambda,
            positive_at_positivity_radius: lambda > 0.0,
            critical_exceeds_positivity_radius: self.critical_radius > positivity_radius(),
            strictly_decreasing: self.is_strictly_decreasing(),
        })
    }
}

/// Lowest eigenvalue at `count` evenly spaced radii of `[lo, hi]` and the critical radius inside it.
pub fn spectral_scan(lo: f64, hi: f64, count: usize) -> Result<SpectralScan> {
    if !(lo < hi) || count < 2 {
        return Err(Error::InvalidArgument(format!("empty scan range [{lo}, {hi}] with {count} points")));
    }
    let radii: Vec<f64> = (0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect();
    let lowest_eigenvalues = radii.par_iter().map(|&r| lowest_radial_eigenvalue(r)).collect::<Result<Vec<_>>>()?;
    let critical_radius = critical_radius(lo, hi)?;
    Ok(SpectralScan { radii, lowest_eigenvalues, critical_radius })
}

/// Radial test profiles for the Hardy inequality on `B_R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    /// `sin(π r / R)`
    Sine,
    /// `R - r`
    Linear,
    /// `(R² - r²)²`
    Quartic,
    /// `r^α (R - r)` with `α > -1/2`
    Power { alpha: f64 },
    /// `0`, rejected by the ratio
    Zero,
}

impl Profile {
    pub fn value(&self, radius: f64, r: f64) -> f64 {
        match *self {
            Profile::Sine => (PI * r / radius).sin(),
            Profile::Linear => radius - r,
            Profile::Quartic => (radius * radius - r * r).powi(2),
            Profile::Power { alpha } => r.powf(alpha) * (radius - r),
            Profile::Zero => 0.0,
        }
    }

    pub fn derivative(&self, radius: f64, r: f64) -> f64 {
        match *self {
            Profile::Sine => PI / radius * (PI * r / radius).cos(),
            Profile::Linear => -1.0,
            Profile::Quartic => -4.0 * r * (radius * radius - r * r),
            Profile::Power { alpha } => alpha * r.powf(alpha - 1.0) * (radius - r) - r.powf(alpha),
            Profile::Zero => 0.0,
        }
    }

    /// Profiles used by [`hardy_check`] by default.
    pub fn standard() -> Vec<Profile> {
        let mut out = vec![Profile::Sine, Profile::Linear, Profile::Quartic];
        out.extend([1.0, 0.5, 0.25, 0.0, -0.25, -0.4].map(|alpha| Profile::Power { alpha }));
        out
    }
}

// 5-point Gauss-Legendre rule on [-1, 1]
const GL_NODES: [f64; 5] = [-0.906_179_845_938_664, -0.538_469_310_105_683, 0.0, 0.538_469_310_105_683, 0.906_179_845_938_664];
const GL_WEIGHTS: [f64; 5] =
    [0.236_926_885_056_189, 0.478_628_670_499_366, 0.568_888_888_888_889, 0.478_628_670_499_366, 0.236_926_885_056_189];

/// `∫_0^R f(r) dr` after `r = R s^8`, which flattens algebraic endpoint singularities at 0.
fn radial_integral(radius: f64, f: impl Fn(f64) -> f64) -> f64 {
    const PANELS: usize = 4000;
    const POWER: i32 = 8;
    let h = 1.0 / PANELS as f64;
    let mut total = 0.0;
    for k in 0..PANELS {
        let mid = (k as f64 + 0.5) * h;
        for (x, w) in GL_NODES.iter().zip(GL_WEIGHTS) {
            let s = mid + 0.5 * h * x;
            let r = radius * s.powi(POWER);
            total += w * 0.5 * h * f(r) * radius * POWER as f64 * s.powi(POWER - 1);
        }
    }
    total
}

/// `∫ φ²/|x|² dx / ∫ |∇φ|² dx` over `B_R` for a radial `φ` vanishing at `R`.
pub fn hardy_ratio(radius: f64, phi: impl Fn(f64) -> f64, dphi: impl Fn(f64) -> f64) -> Result<f64> {
    if !(radius > 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be positive, got {radius}")));
    }
    let scale = (1..=64).map(|k| phi(radius * k as f64 / 64.0).abs()).fold(0.0, f64::max);
    if phi(radius).abs() > 1e-12 * scale.max(f64::MIN_POSITIVE) || phi(radius).is_nan() {
        return Err(Error::InvalidArgument(format!("profile does not vanish at R: φ(R) = {:e}", phi(radius))));
    }
    // the 4π and r² of the volume element cancel against 1/|x|² in the numerator
    let numerator = radial_integral(radius, |r| phi(r).powi(2));
    let denominator = radial_integral(radius, |r| dphi(r).powi(2) * r * r);
    if !(denominator > 0.0) {
        return Err(Error::InvalidArgument("profile has no gradient energy (zero function?)".into()));
    }
    Ok(numerator / denominator)
}

/// Largest Hardy ratio over `profiles`; the inequality asserts it is at most 4.
pub fn hardy_check(radius: f64, profiles: &[Profile]) -> Result<f64> {
    if profiles.is_empty() {
        return Err(Error::InvalidArgument("no test profiles".into()));
    }
    profiles
        .iter()
        .map(|p| hardy_ratio(radius, |r| p.value(radius, r), |r| p.derivative(radius, r)))
        .try_fold(0.0f64, |acc, r| Ok(acc.max(r?)))
}

/// First Dirichlet eigenvalue of the Laplacian on `B_R` used in the positivity estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DirichletConstant {
    /// `π / R²`, which yields the radius `√π/4`.
    PiOverRadiusSquared,
    /// `π² / R²`, the classical value.
    PiSquaredOverRadiusSquared,
}

impl DirichletConstant {
    pub fn eigenvalue(&self, radius: f64) -> f64 {
        match self {
            DirichletConstant::PiOverRadiusSquared => PI / (radius * radius),
            DirichletConstant::PiSquaredOverRadiusSquared => PI * PI / (radius * radius),
        }
    }
}

/// Lower bound `(1 - 4/√λ₁) λ₁` on the lowest eigenvalue of `-Δ - 2/|x|` on `B_R`.
///
/// From `∫ 2φ²/|x| ≤ 2‖φ/|x|‖ ‖φ‖ ≤ 4‖∇φ‖² / √λ₁` (Hardy, then Poincaré);
/// positive exactly when `√λ₁ > 4`.
pub fn hardy_poincare_bound(radius: f64, constant: DirichletConstant) -> f64 {
    let l1 = constant.eigenvalue(radius);
    (1.0 - 4.0 / l1.sqrt()) * l1
}
