//! Special functions behind the Coulomb eigenbasis: associated Laguerre
//! polynomials, integer-order Bessel functions, complex spherical harmonics
//! and the two families of radial modes (bound `f_nl` and zero-energy `g_l`).
//!
//! Spherical harmonics use the orthonormal complex convention with the
//! Condon–Shortley phase, `Y_{l,-m} = (-1)^m conj(Y_{lm})`.

use std::f64::consts::PI;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Principal and angular quantum numbers of a bound radial mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RadialModeIndex {
    n: usize,
    l: usize,
}

impl RadialModeIndex {
    pub fn new(n: usize, l: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("principal number n must be >= 1".into()));
        }
        if l >= n {
            return Err(Error::InvalidArgument(format!("need l <= n-1, got n={n}, l={l}")));
        }
        Ok(Self { n, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn l(&self) -> usize {
        self.l
    }

    /// Coulomb eigenvalue `-1/n^2` of the level.
    pub fn energy(&self) -> f64 {
        energy(self.n)
    }
}

/// Degree and order of a spherical harmonic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HarmonicIndex {
    l: usize,
    m: i64,
}

impl HarmonicIndex {
    pub fn new(l: usize, m: i64) -> Result<Self> {
        if m.unsigned_abs() as usize > l {
            return Err(Error::InvalidArgument(format!("need |m| <= l, got l={l}, m={m}")));
        }
        Ok(Self { l, m })
    }

    pub fn l(&self) -> usize {
        self.l
    }

    pub fn m(&self) -> i64 {
        self.m
    }

    /// Position in the dense `(l, m)` ordering `l^2 + l + m`.
    pub fn flat(&self) -> usize {
        ((self.l * self.l + self.l) as i64 + self.m) as usize
    }
}

/// A point in spherical coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl EvalPoint {
    pub fn new(r: f64, theta: f64, phi: f64) -> Result<Self> {
        if !(r >= 0.0) || !(0.0..=PI).contains(&theta) || !(0.0..2.0 * PI).contains(&phi) {
            return Err(Error::InvalidArgument(format!(
                "spherical point out of range: r={r}, theta={theta}, phi={phi}"
            )));
        }
        Ok(Self { r, theta, phi })
    }
}

/// Coulomb eigenvalue `lambda_n = -1/n^2`.
pub fn energy(n: usize) -> f64 {
    let n = n as f64;
    -1.0 / (n * n)
}

/// `L_k^alpha(x)` by the three-term recurrence in `k`.
pub fn laguerre(k: usize, alpha: usize, x: f64) -> Result<f64> {
    if alpha < 1 {
        return Err(Error::InvalidArgument("Laguerre parameter alpha must be >= 1".into()));
    }
    Ok(laguerre_unchecked(k, alpha as f64, x))
}

fn laguerre_unchecked(k: usize, alpha: f64, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - x;
    for j in 1..k {
        let j = j as f64;
        let next = ((2.0 * j + 1.0 + alpha - x) * cur - (j + alpha) * prev) / (j + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Bessel function of the first kind `J_nu(x)` for integer `nu` and `x >= 0`.
pub fn bessel_j(nu: usize, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("bessel_j needs x >= 0, got {x}")));
    }
    if series_is_safe(nu, x) {
        Ok(bessel_series(nu, x))
    } else {
        Ok(bessel_miller(nu, x)[nu])
    }
}

/// `J_0(x), ..., J_nmax(x)` for `x >= 0`.
pub fn bessel_j_seq(nmax: usize, x: f64) -> Result<Vec<f64>> {
    if !(x >= 0.0) {
        return Err(Error::InvalidArgument(format!("bessel_j needs x >= 0, got {x}")));
    }
    if series_is_safe(0, x) {
        return Ok((0..=nmax).map(|nu| bessel_series(nu, x)).collect());
    }
    let mut seq = bessel_miller(nmax, x);
    for (nu, v) in seq.iter_mut().enumerate() {
        if series_is_safe(nu, x) {
            *v = bessel_series(nu, x);
        }
    }
    Ok(seq)
}

// Terms of the power series shrink from the first one on when (x/2)^2 <= nu + 1,
// so the alternating sum loses at most a couple of digits.
fn series_is_safe(nu: usize, x: f64) -> bool {
    0.25 * x * x <= nu as f64 + 1.0
}

fn bessel_series(nu: usize, x: f64) -> f64 {
    if x == 0.0 {
        return if nu == 0 { 1.0 } else { 0.0 };
    }
    let half = 0.5 * x;
    let mut term = 1.0;
    for j in 1..=nu {
        term *= half / j as f64;
    }
    let q = half * half;
    let mut sum = term;
    for k in 1..200 {
        term *= -q / (k as f64 * (k + nu) as f64);
        sum += term;
        if term.abs() <= 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// Miller's downward recurrence normalised by `J_0 + 2 sum J_2k = 1`.
fn bessel_miller(nmax: usize, x: f64) -> Vec<f64> {
    let top = nmax.max(x.ceil() as usize);
    let mut start = top + 30 + (60.0 * top as f64).sqrt() as usize;
    if start % 2 == 1 {
        start += 1;
    }
    let mut out = vec![0.0; nmax + 1];
    let mut next = 0.0; // J_{k+1}
    let mut cur = 1e-30; // J_k
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let prev = 2.0 * k as f64 / x * cur - next;
        next = cur;
        cur = prev;
        // cur now holds J_{k-1}
        let idx = k - 1;
        if idx <= nmax {
            out[idx] = cur;
        }
        if idx % 2 == 0 && idx > 0 {
            norm += 2.0 * cur;
        }
        if cur.abs() > 1e250 {
            cur *= 1e-250;
            next *= 1e-250;
            norm *= 1e-250;
            for v in out.iter_mut() {
                *v *= 1e-250;
            }
        }
    }
    norm += cur;
    for v in out.iter_mut() {
        *v /= norm;
    }
    out
}

/// Normalised associated Legendre values and the angular pieces needed for
/// gradients, for every `0 <= m <= l <= lmax` at one polar angle.
///
/// `p[l][m]` is `P̄_lm(cos θ)` so that `Y_lm = P̄_lm e^{imφ}` for `m >= 0`;
/// `q[l][m]` is `P̄_lm / sin θ` (zero for `m = 0`) and `dp[l][m]` is
/// `dP̄_lm/dθ`. No division by `sin θ` happens, so poles are safe.
#[derive(Debug, Clone)]
pub struct LegendreTable {
    lmax: usize,
    p: Vec<f64>,
    q: Vec<f64>,
    dp: Vec<f64>,
}

impl LegendreTable {
    pub fn new(lmax: usize, cos_theta: f64, sin_theta: f64) -> Self {
        Self::build(lmax, cos_theta, sin_theta, true)
    }

    /// Only the `P̄_lm` values; the gradient accessors must not be used.
    pub fn values_only(lmax: usize, cos_theta: f64, sin_theta: f64) -> Self {
        Self::build(lmax, cos_theta, sin_theta, false)
    }

    fn build(lmax: usize, cos_theta: f64, sin_theta: f64, with_derivs: bool) -> Self {
        let size = (lmax + 1) * (lmax + 2) / 2;
        let mut p = vec![0.0; size];
        let mut q = vec![0.0; size];
        let at = |l: usize, m: usize| l * (l + 1) / 2 + m;

        let mut pmm = 0.5 / PI.sqrt();
        let mut qmm = 0.0;
        for m in 0..=lmax {
            if m > 0 {
                let f = -((2 * m + 1) as f64 / (2 * m) as f64).sqrt();
                qmm = if m == 1 { f * pmm } else { f * sin_theta * qmm };
                pmm *= f * sin_theta;
            }
            p[at(m, m)] = pmm;
            q[at(m, m)] = qmm;
            if m == lmax {
                break;
            }
            let c = ((2 * m + 3) as f64).sqrt() * cos_theta;
            p[at(m + 1, m)] = c * pmm;
            q[at(m + 1, m)] = c * qmm;
            for l in (m + 2)..=lmax {
                let (lf, mf) = (l as f64, m as f64);
                let a = ((4.0 * lf * lf - 1.0) / (lf * lf - mf * mf)).sqrt();
                let b = (((lf - 1.0) * (lf - 1.0) - mf * mf) / (4.0 * (lf - 1.0) * (lf - 1.0) - 1.0)).sqrt();
                p[at(l, m)] = a * (cos_theta * p[at(l - 1, m)] - b * p[at(l - 2, m)]);
                q[at(l, m)] = a * (cos_theta * q[at(l - 1, m)] - b * q[at(l - 2, m)]);
            }
        }

        let mut dp = vec![0.0; if with_derivs { size } else { 0 }];
        if !with_derivs {
            return Self { lmax, p, q: Vec::new(), dp };
        }
        for l in 1..=lmax {
            let lf = l as f64;
            dp[at(l, 0)] = (lf * (lf + 1.0)).sqrt() * p[at(l, 1)];
            for m in 1..=l {
                let mf = m as f64;
                let up = if m < l { ((lf + mf + 1.0) * (lf - mf)).sqrt() * p[at(l, m + 1)] } else { 0.0 };
                let down = ((lf + mf) * (lf - mf + 1.0)).sqrt() * p[at(l, m - 1)];
                dp[at(l, m)] = 0.5 * (up - down);
            }
        }
        Self { lmax, p, q, dp }
    }

    pub fn lmax(&self) -> usize {
        self.lmax
    }

    #[inline]
    fn at(l: usize, m: usize) -> usize {
        l * (l + 1) / 2 + m
    }

    #[inline]
    pub fn p(&self, l: usize, m: usize) -> f64 {
        self.p[Self::at(l, m)]
    }

    #[inline]
    pub fn p_over_sin(&self, l: usize, m: usize) -> f64 {
        self.q[Self::at(l, m)]
    }

    #[inline]
    pub fn dp_dtheta(&self, l: usize, m: usize) -> f64 {
        self.dp[Self::at(l, m)]
    }
}

/// Orthonormal complex spherical harmonic `Y_lm(θ, φ)`.
pub fn sph_harm(idx: HarmonicIndex, theta: f64, phi: f64) -> Complex64 {
    let table = LegendreTable::new(idx.l, theta.cos(), theta.sin());
    let am = idx.m.unsigned_abs() as usize;
    let sign = if idx.m < 0 && am % 2 == 1 { -1.0 } else { 1.0 };
    Complex64::from_polar(sign * table.p(idx.l, am), idx.m as f64 * phi)
}

fn log_norm_bound(n: usize, l: usize) -> f64 {
    log_norms(n, l)[l]
}

/// Bound radial mode `f_nl(r) = A_nl e^{-r/n} r^l L_{n-l-1}^{2l+1}(2r/n)`.
pub fn radial_bound(idx: RadialModeIndex, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {r}")));
    }
    Ok(bound_value_and_derivative(idx.n, idx.l, r).0)
}

/// `f_nl(r)` together with `f'_nl(r)`.
pub fn radial_bound_with_derivative(idx: RadialModeIndex, r: f64) -> Result<(f64, f64)> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {r}")));
    }
    Ok(bound_value_and_derivative(idx.n, idx.l, r))
}

fn bound_value_and_derivative(n: usize, l: usize, r: f64) -> (f64, f64) {
    bound_with_log_norm(n, l, r, log_norm_bound(n, l), r.ln())
}

fn bound_with_log_norm(n: usize, l: usize, r: f64, ln_a: f64, ln_r: f64) -> (f64, f64) {
    let nf = n as f64;
    let k = n - l - 1;
    let alpha = (2 * l + 1) as f64;
    let x = 2.0 * r / nf;
    let lag = laguerre_unchecked(k, alpha, x);
    let dlag = if k == 0 { 0.0 } else { -laguerre_unchecked(k - 1, alpha + 1.0, x) };
    if r == 0.0 {
        let a = ln_a.exp();
        return match l {
            0 => (a * lag, a * (-lag / nf + 2.0 / nf * dlag)),
            1 => (0.0, a * lag),
            _ => (0.0, 0.0),
        };
    }
    // common = A e^{-r/n} r^{l-1}
    let common = (ln_a - r / nf + (l as f64 - 1.0) * ln_r).exp();
    let value = common * r * lag;
    let deriv = common * ((l as f64 - r / nf) * lag + 2.0 * r / nf * dlag);
    (value, deriv)
}

// ln A_{n,l+1} - ln A_{n,l} = ln 2 - ln(n-l-1) - ln(n+l+1)
fn log_norms(n: usize, lmax: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(lmax + 1);
    let mut ln_a = -std::f64::consts::LN_2 - (n as f64).ln();
    for l in 0..=lmax {
        out.push(ln_a);
        ln_a += std::f64::consts::LN_2 - ((n - l - 1) as f64).ln() - ((n + l + 1) as f64).ln();
    }
    out
}

const SMALL_R: f64 = 1e-6;

/// Zero-energy radial mode `g_l(r) = J_{2l+1}(sqrt(8r)) / sqrt(8r)`.
pub fn radial_zero_energy(l: usize, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {r}")));
    }
    Ok(zero_energy_value_and_derivative(l, r).0)
}

/// `g_l(r)` together with `g'_l(r)`.
pub fn radial_zero_energy_with_derivative(l: usize, r: f64) -> Result<(f64, f64)> {
    if !(r >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {r}")));
    }
    Ok(zero_energy_value_and_derivative(l, r))
}

fn zero_energy_value_and_derivative(l: usize, r: f64) -> (f64, f64) {
    if r < SMALL_R {
        return zero_energy_taylor(l, r);
    }
    let s = (8.0 * r).sqrt();
    let nu = 2 * l + 1;
    let j = bessel_j_seq(nu + 1, s).expect("s >= 0");
    bessel_to_zero_energy(nu, s, &j)
}

fn bessel_to_zero_energy(nu: usize, s: f64, j: &[f64]) -> (f64, f64) {
    let value = j[nu] / s;
    let dj = 0.5 * (j[nu - 1] - j[nu + 1]);
    let deriv = 4.0 / s * (dj / s - j[nu] / (s * s));
    (value, deriv)
}

// g_l(r) = 1/2 sum_k (-1)^k (2r)^{k+l} / (k! (k+2l+1)!)
fn zero_energy_taylor(l: usize, r: f64) -> (f64, f64) {
    let mut coeff = 0.5;
    for j in 1..=(2 * l + 1) {
        coeff /= j as f64;
    }
    let t = 2.0 * r;
    let (mut value, mut deriv) = (0.0, 0.0);
    for k in 0..4usize {
        if k > 0 {
            coeff /= -((k * (k + 2 * l + 1)) as f64);
        }
        let p = k + l;
        value += coeff * t.powi(p as i32);
        if p > 0 {
            deriv += coeff * 2.0 * p as f64 * t.powi(p as i32 - 1);
        }
    }
    (value, deriv)
}

/// Values and radial derivatives of `g_0, ..., g_lmax` at one radius.
pub fn zero_energy_modes(lmax: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
    if r < SMALL_R {
        return (0..=lmax).map(|l| zero_energy_taylor(l, r)).unzip();
    }
    let s = (8.0 * r).sqrt();
    let j = bessel_j_seq(2 * lmax + 2, s).expect("s >= 0");
    (0..=lmax).map(|l| bessel_to_zero_energy(2 * l + 1, s, &j)).unzip()
}

/// Values and radial derivatives of `f_n0, ..., f_n,lmax` at one radius.
pub fn bound_modes(n: usize, lmax: usize, r: f64) -> (Vec<f64>, Vec<f64>) {
    let ln_r = r.ln();
    log_norms(n, lmax).into_iter().enumerate().map(|(l, ln_a)| bound_with_log_norm(n, l, r, ln_a, ln_r)).unzip()
}

/// Values of `f_n0, ..., f_n,lmax` at one radius.
pub fn bound_mode_values(n: usize, lmax: usize, r: f64) -> Vec<f64> {
    let nf = n as f64;
    let x = 2.0 * r / nf;
    let ln_r = r.ln();
    log_norms(n, lmax)
        .into_iter()
        .enumerate()
        .map(|(l, ln_a)| {
            let lag = laguerre_unchecked(n - l - 1, (2 * l + 1) as f64, x);
            if r == 0.0 {
                return if l == 0 { ln_a.exp() * lag } else { 0.0 };
            }
            (ln_a - r / nf + l as f64 * ln_r).exp() * lag
        })
        .collect()
}
