//! Complex field expansions `ψ = Σ c_lm R_l(r) Y_lm(θ, φ)` over either the
//! zero-energy radial modes `g_l` or the bound modes `f_nl` of one level.

use std::fmt;

use nalgebra::Vector3;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::specfun::{self, LegendreTable};

pub type Point = Vector3<f64>;

/// Gradients are only evaluated outside this radius.
pub const GRADIENT_EXCLUSION: f64 = 1e-3;
/// Finite-difference Laplacians are only evaluated outside this radius.
pub const LAPLACIAN_EXCLUSION: f64 = 0.05;
const LAPLACIAN_STEP: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Basis {
    /// `g_l(r) Y_lm`, solutions of `(Δ + 2/r) ψ = 0`.
    ZeroEnergy,
    /// `f_nl(r) Y_lm`, eigenfunctions with `λ_n = -1/n^2`.
    Bound(usize),
}

impl Basis {
    /// Spectral parameter in `(Δ + 2/r + λ) ψ = 0`.
    pub fn lambda(&self) -> f64 {
        match *self {
            Basis::ZeroEnergy => 0.0,
            Basis::Bound(n) => specfun::energy(n),
        }
    }

    /// Radial values and derivatives `R_l(r), R_l'(r)` for `l = 0..=lmax`.
    pub fn radial(&self, lmax: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
        match *self {
            Basis::ZeroEnergy => specfun::zero_energy_modes(lmax, r),
            Basis::Bound(n) => specfun::bound_modes(n, lmax, r),
        }
    }
}

impl Basis {
    /// Radial values `R_l(r)` for `l = 0..=lmax`.
    pub fn radial_values(&self, lmax: usize, r: f64) -> Vec<f64> {
        match *self {
            Basis::ZeroEnergy => specfun::zero_energy_modes(lmax, r).0,
            Basis::Bound(n) => specfun::bound_mode_values(n, lmax, r),
        }
    }
}

impl fmt::Display for Basis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Basis::ZeroEnergy => write!(f, "zero-energy"),
            Basis::Bound(n) => write!(f, "bound(n={n})"),
        }
    }
}

/// Value and Cartesian gradient of a complex field at one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample {
    pub value: Complex64,
    /// `∇ψ = ∇Re ψ + i ∇Im ψ`, componentwise.
    pub gradient: Vector3<Complex64>,
}

impl FieldSample {
    pub fn grad_re(&self) -> Vector3<f64> {
        self.gradient.map(|c| c.re)
    }

    pub fn grad_im(&self) -> Vector3<f64> {
        self.gradient.map(|c| c.im)
    }
}

/// Dense coefficient array over the full `(l, m)` triangle, `l <= max_degree`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeExpansion {
    basis: Basis,
    max_degree: usize,
    coeffs: Vec<Complex64>,
}

#[inline]
fn flat(l: usize, m: i64) -> usize {
    ((l * l + l) as i64 + m) as usize
}

/// Number of `(l, m)` pairs with `l <= max_degree`.
pub fn mode_count(max_degree: usize) -> usize {
    (max_degree + 1) * (max_degree + 1)
}

/// Iterates `(l, m)` in dense order.
pub fn modes(max_degree: usize) -> impl Iterator<Item = (usize, i64)> {
    (0..=max_degree).flat_map(|l| (-(l as i64)..=l as i64).map(move |m| (l, m)))
}

fn check_basis(basis: Basis, max_degree: usize) -> Result<()> {
    if let Basis::Bound(n) = basis {
        if n == 0 || max_degree + 1 > n {
            return Err(Error::InvalidArgument(format!(
                "bound basis n={n} cannot carry degree {max_degree} (need l <= n-1)"
            )));
        }
    }
    Ok(())
}

impl ModeExpansion {
    pub fn new(basis: Basis, max_degree: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        check_basis(basis, max_degree)?;
        if coeffs.len() != mode_count(max_degree) {
            return Err(Error::InvalidArgument(format!(
                "expected {} coefficients for N={max_degree}, got {}",
                mode_count(max_degree),
                coeffs.len()
            )));
        }
        Ok(Self { basis, max_degree, coeffs })
    }

    pub fn zeros(basis: Basis, max_degree: usize) -> Result<Self> {
        Self::new(basis, max_degree, vec![Complex64::new(0.0, 0.0); mode_count(max_degree)])
    }

    /// Builds an expansion from sparse `(l, m, c)` terms; unspecified terms are zero.
    pub fn from_terms(basis: Basis, max_degree: usize, terms: &[(usize, i64, Complex64)]) -> Result<Self> {
        let mut e = Self::zeros(basis, max_degree)?;
        for &(l, m, c) in terms {
            e.set(l, m, c)?;
        }
        Ok(e)
    }

    pub fn basis(&self) -> Basis {
        self.basis
    }

    pub fn max_degree(&self) -> usize {
        self.max_degree
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coefficient(&self, l: usize, m: i64) -> Option<Complex64> {
        (l <= self.max_degree && m.unsigned_abs() as usize <= l).then(|| self.coeffs[flat(l, m)])
    }

    pub fn set(&mut self, l: usize, m: i64, c: Complex64) -> Result<()> {
        if l > self.max_degree || m.unsigned_abs() as usize > l {
            return Err(Error::InvalidArgument(format!("(l={l}, m={m}) outside N={}", self.max_degree)));
        }
        self.coeffs[flat(l, m)] = c;
        Ok(())
    }

    pub fn scaled(&self, alpha: Complex64) -> Self {
        Self { coeffs: self.coeffs.iter().map(|c| c * alpha).collect(), ..self.clone() }
    }

    /// Expansion of the complex-conjugate field `conj(ψ)`.
    ///
    /// With complex harmonics this is `c'_lm = (-1)^m conj(c_{l,-m})`, not a
    /// plain conjugation of the coefficient array.
    pub fn conj(&self) -> Self {
        let mut coeffs = self.coeffs.clone();
        for (l, m) in modes(self.max_degree) {
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[flat(l, m)] = self.coeffs[flat(l, -m)].conj() * sign;
        }
        Self { coeffs, ..self.clone() }
    }

    /// `a·self + b·other`; both must share basis and degree.
    pub fn combine(&self, a: Complex64, other: &Self, b: Complex64) -> Result<Self> {
        if self.basis != other.basis || self.max_degree != other.max_degree {
            return Err(Error::InvalidArgument("expansions differ in basis or degree".into()));
        }
        let coeffs = self.coeffs.iter().zip(&other.coeffs).map(|(x, y)| a * x + b * y).collect();
        Ok(Self { coeffs, ..self.clone() })
    }

    /// Value of the superposition at a Cartesian point.
    pub fn eval(&self, point: &Point) -> Complex64 {
        let frame = Frame::new(point);
        let radial = self.basis.radial_values(self.max_degree, frame.r);
        let table = LegendreTable::values_only(self.max_degree, frame.cos_t, frame.sin_t);
        let phases = frame.phases(self.max_degree);
        let mut sum = Complex64::new(0.0, 0.0);
        for l in 0..=self.max_degree {
            let mut angular = self.coeffs[flat(l, 0)] * table.p(l, 0);
            for m in 1..=l {
                let p = table.p(l, m);
                let pos = self.coeffs[flat(l, m as i64)] * phases[m];
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let neg = self.coeffs[flat(l, -(m as i64))] * phases[m].conj() * sign;
                angular += (pos + neg) * p;
            }
            sum += angular * radial[l];
        }
        sum
    }

    /// Value plus analytic Cartesian gradient.
    pub fn eval_with_grad(&self, point: &Point) -> Result<FieldSample> {
        let frame = Frame::new(point);
        if frame.r <= GRADIENT_EXCLUSION {
            return Err(Error::TooCloseToOrigin { radius: frame.r, min: GRADIENT_EXCLUSION });
        }
        let (radial, dradial) = self.basis.radial(self.max_degree, frame.r);
        let table = LegendreTable::new(self.max_degree, frame.cos_t, frame.sin_t);
        let phases = frame.phases(self.max_degree);
        let zero = Complex64::new(0.0, 0.0);
        let (mut value, mut d_r, mut d_theta, mut d_phi) = (zero, zero, zero, zero);
        for l in 0..=self.max_degree {
            // angular sums of Y, dY/dθ and (1/sinθ) dY/dφ weighted by c_lm
            let c0 = self.coeffs[flat(l, 0)];
            let mut y = c0 * table.p(l, 0);
            let mut yt = c0 * table.dp_dtheta(l, 0);
            let mut yp = zero;
            for m in 1..=l {
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                let e_pos = self.coeffs[flat(l, m as i64)] * phases[m];
                let e_neg = self.coeffs[flat(l, -(m as i64))] * phases[m].conj() * sign;
                y += (e_pos + e_neg) * table.p(l, m);
                yt += (e_pos + e_neg) * table.dp_dtheta(l, m);
                yp += (e_pos - e_neg) * Complex64::new(0.0, m as f64) * table.p_over_sin(l, m);
            }
            value += y * radial[l];
            d_r += y * dradial[l];
            d_theta += yt * (radial[l] / frame.r);
            d_phi += yp * (radial[l] / frame.r);
        }
        let gradient = frame.r_hat.map(|x| d_r * x) + frame.theta_hat.map(|x| d_theta * x) + frame.phi_hat.map(|x| d_phi * x);
        Ok(FieldSample { value, gradient })
    }

    /// `|Δψ + (2/r)ψ + λψ|` with a fourth-order finite-difference Laplacian.
    pub fn pde_residual(&self, point: &Point) -> Result<f64> {
        let r = point.norm();
        if r <= LAPLACIAN_EXCLUSION {
            return Err(Error::TooCloseToOrigin { radius: r, min: LAPLACIAN_EXCLUSION });
        }
        let h = LAPLACIAN_STEP;
        let center = self.eval(point);
        let mut lap = Complex64::new(0.0, 0.0);
        for axis in 0..3 {
            let mut e = Vector3::zeros();
            e[axis] = h;
            lap += (self.eval(&(point + e)) + self.eval(&(point - e))) * 16.0
                - self.eval(&(point + 2.0 * e))
                - self.eval(&(point - 2.0 * e))
                - center * 30.0;
        }
        lap /= 12.0 * h * h;
        Ok((lap + center * (2.0 / r + self.basis.lambda())).norm())
    }

    /// Same coefficients over the bound basis of level `n`.
    pub fn promote(&self, n: usize) -> Result<Self> {
        if self.basis != Basis::ZeroEnergy {
            return Err(Error::InvalidArgument(format!("promote expects a zero-energy expansion, got {}", self.basis)));
        }
        if n <= self.max_degree {
            return Err(Error::InvalidArgument(format!(
                "level n={n} must exceed the degree N={} (l <= n-1)",
                self.max_degree
            )));
        }
        Ok(Self { basis: Basis::Bound(n), ..self.clone() })
    }

    pub fn eval_many(&self, points: &[Point]) -> Vec<Complex64> {
        points.par_iter().map(|p| self.eval(p)).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ExpansionFile::from(self)).expect("expansion serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ExpansionFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        Self::try_from(file)
    }
}

/// Values of every basis function `R_l(r) Y_lm` at `point`, in dense order.
pub fn basis_values(basis: Basis, max_degree: usize, point: &Point) -> Vec<Complex64> {
    let frame = Frame::new(point);
    let radial = basis.radial_values(max_degree, frame.r);
    let table = LegendreTable::values_only(max_degree, frame.cos_t, frame.sin_t);
    let phases = frame.phases(max_degree);
    let mut out = vec![Complex64::new(0.0, 0.0); mode_count(max_degree)];
    for l in 0..=max_degree {
        out[flat(l, 0)] = Complex64::new(radial[l] * table.p(l, 0), 0.0);
        for m in 1..=l {
            let v = phases[m] * (radial[l] * table.p(l, m));
            let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
            out[flat(l, m as i64)] = v;
            out[flat(l, -(m as i64))] = v.conj() * sign;
        }
    }
    out
}

struct Frame {
    r: f64,
    cos_t: f64,
    sin_t: f64,
    cos_p: f64,
    sin_p: f64,
    r_hat: Vector3<f64>,
    theta_hat: Vector3<f64>,
    phi_hat: Vector3<f64>,
}

impl Frame {
    fn new(p: &Point) -> Self {
        let r = p.norm();
        let rho = p.x.hypot(p.y);
        let (cos_t, sin_t) = if r > 0.0 { (p.z / r, rho / r) } else { (1.0, 0.0) };
        let (cos_p, sin_p) = if rho > 0.0 { (p.x / rho, p.y / rho) } else { (1.0, 0.0) };
        Self {
            r,
            cos_t,
            sin_t,
            cos_p,
            sin_p,
            r_hat: Vector3::new(sin_t * cos_p, sin_t * sin_p, cos_t),
            theta_hat: Vector3::new(cos_t * cos_p, cos_t * sin_p, -sin_t),
            phi_hat: Vector3::new(-sin_p, cos_p, 0.0),
        }
    }

    fn phases(&self, mmax: usize) -> Vec<Complex64> {
        let e = Complex64::new(self.cos_p, self.sin_p);
        let mut out = Vec::with_capacity(mmax + 1);
        let mut cur = Complex64::new(1.0, 0.0);
        for _ in 0..=mmax {
            out.push(cur);
            cur *= e;
        }
        out
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum BasisRepr {
    Named(String),
    Bound { bound: usize },
}

#[derive(Serialize, Deserialize)]
struct CoefficientRepr {
    l: usize,
    m: i64,
    re: f64,
    im: f64,
}

/// On-disk layout: `{basis, N, coefficients: [{l, m, re, im}]}`.
#[derive(Serialize, Deserialize)]
struct ExpansionFile {
    basis: BasisRepr,
    #[serde(rename = "N")]
    max_degree: usize,
    coefficients: Vec<CoefficientRepr>,
}

impl From<&ModeExpansion> for ExpansionFile {
    fn from(e: &ModeExpansion) -> Self {
        let basis = match e.basis {
            Basis::ZeroEnergy => BasisRepr::Named("zero-energy".into()),
            Basis::Bound(n) => BasisRepr::Bound { bound: n },
        };
        let coefficients = modes(e.max_degree)
            .map(|(l, m)| {
                let c = e.coeffs[flat(l, m)];
                CoefficientRepr { l, m, re: c.re, im: c.im }
            })
            .collect();
        Self { basis, max_degree: e.max_degree, coefficients }
    }
}

impl TryFrom<ExpansionFile> for ModeExpansion {
    type Error = Error;

    fn try_from(file: ExpansionFile) -> Result<Self> {
        let basis = match file.basis {
            BasisRepr::Named(name) if name == "zero-energy" => Basis::ZeroEnergy,
            BasisRepr::Named(name) => return Err(Error::Format(format!("unknown basis {name:?}"))),
            BasisRepr::Bound { bound } => Basis::Bound(bound),
        };
        let n = file.max_degree;
        if file.coefficients.len() != mode_count(n) {
            return Err(Error::Format(format!(
                "N={n} needs {} coefficients, file has {}",
                mode_count(n),
                file.coefficients.len()
            )));
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); mode_count(n)];
        let mut seen = vec![false; mode_count(n)];
        for c in &file.coefficients {
            if c.l > n || c.m.unsigned_abs() as usize > c.l {
                return Err(Error::Format(format!("coefficient (l={}, m={}) outside N={n}", c.l, c.m)));
            }
            let i = flat(c.l, c.m);
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Format(format!("duplicate coefficient (l={}, m={})", c.l, c.m)));
            }
            coeffs[i] = Complex64::new(c.re, c.im);
        }
        ModeExpansion::new(basis, n, coeffs)
    }
}
