//! Target links, Milnor-polynomial seeds, collocation fits over the
//! zero-energy basis, and the end-to-end build of a bound eigenfunction whose
//! nodal set realizes the link.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{basis_values, mode_count, Basis, FieldSample, ModeExpansion, Point};
use crate::nodaltrace::{self, Field, NodalCurve, SearchBox, TraceConfig, TraceOutcome};
use crate::topology::{self, CertifyOptions, TopologyReport};

/// Radius below which the spectral-positivity bound holds: `√π / 4`.
pub fn critical_ball_radius() -> f64 {
    PI.sqrt() / 4.0
}

/// Default ball radius for link placement.
pub const DEFAULT_BALL_RADIUS: f64 = 0.43;
/// Default link centre: the origin sits inside the link's hull.
pub const DEFAULT_CENTER: [f64; 3] = [0.0, 0.0, 0.0];
/// Default scale of the unit-coordinate link.
pub const DEFAULT_SCALE: f64 = 0.06;
/// Centre of the offset placement.
pub const OFFSET_CENTER: [f64; 3] = [0.0, 0.0, 0.22];
/// Link diameter of the offset placement as a fraction of `√π / 4`.
pub const OFFSET_DIAMETER_FRACTION: f64 = 0.25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum LinkFamily {
    /// Zero set of `u^p - v^q` on the unit-scale stereographic sphere.
    TorusLink { p: u32, q: u32 },
    /// Closed polylines in unit coordinates (before scaling and centring).
    ExplicitCurves { curves: Vec<Vec<[f64; 3]>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkSpec {
    #[serde(flatten)]
    pub family: LinkFamily,
    pub scale: f64,
    pub center: [f64; 3],
    pub ball_radius: f64,
}

fn gcd(a: u32, b: u32) -> u32 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Point of `S^3 ⊂ C^2` mapped back to `R^3` by inverse stereographic projection.
fn from_sphere(u: Complex64, v: Complex64) -> Point {
    let s = (1.0 + u.re) / (1.0 - u.re);
    let half = 0.5 * (s + 1.0);
    Point::new(v.re * half, v.im * half, u.im * half)
}

fn resample_closed(poly: &[Point], count: usize) -> Vec<Point> {
    let n = poly.len();
    let lengths: Vec<f64> = (0..n).map(|i| (poly[(i + 1) % n] - poly[i]).norm()).collect();
    let total: f64 = lengths.iter().sum();
    let mut out = Vec::with_capacity(count);
    let (mut seg, mut start) = (0usize, 0.0);
    for k in 0..count {
        let target = total * k as f64 / count as f64;
        while seg + 1 < n && start + lengths[seg] < target {
            start += lengths[seg];
            seg += 1;
        }
        let t = if lengths[seg] > 0.0 { ((target - start) / lengths[seg]).clamp(0.0, 1.0) } else { 0.0 };
        out.push(poly[seg] + (poly[(seg + 1) % n] - poly[seg]) * t);
    }
    out
}

fn split_count(count: usize, parts: usize) -> Vec<usize> {
    (0..parts).map(|k| count / parts + usize::from(k < count % parts)).collect()
}

impl LinkSpec {
    /// Torus link centred on the origin with scale `0.06` in the ball of radius `0.43`.
    pub fn torus(p: u32, q: u32) -> Result<Self> {
        let spec = Self {
            family: LinkFamily::TorusLink { p, q },
            scale: DEFAULT_SCALE,
            center: DEFAULT_CENTER,
            ball_radius: DEFAULT_BALL_RADIUS,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Torus link centred at `(0, 0, 0.22)` with diameter `0.25·√π/4`, clear of the origin.
    ///
    /// Fits in this placement need strongly cancelling coefficients and are
    /// far less stable under coefficient perturbations than [`LinkSpec::torus`].
    pub fn torus_offset(p: u32, q: u32) -> Result<Self> {
        let mut spec = Self {
            family: LinkFamily::TorusLink { p, q },
            scale: 1.0,
            center: OFFSET_CENTER,
            ball_radius: DEFAULT_BALL_RADIUS,
        };
        spec.scale = OFFSET_DIAMETER_FRACTION * critical_ball_radius() / spec.unit_diameter()?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn center(&self) -> Point {
        Point::from(self.center)
    }

    pub fn component_count(&self) -> usize {
        match &self.family {
            LinkFamily::TorusLink { p: 1, .. } => 1,
            LinkFamily::TorusLink { p, q } => gcd(*p, *q) as usize,
            LinkFamily::ExplicitCurves { curves } => curves.len(),
        }
    }

    fn check_family(&self) -> Result<()> {
        match &self.family {
            LinkFamily::TorusLink { p, q } if *p == 0 || *q == 0 => {
                Err(Error::InvalidArgument(format!("torus link needs p, q >= 1, got ({p}, {q})")))
            }
            LinkFamily::ExplicitCurves { curves } if curves.is_empty() || curves.iter().any(|c| c.len() < 3) => {
                Err(Error::InvalidArgument("explicit curves need at least 3 vertices each".into()))
            }
            _ => Ok(()),
        }
    }

    /// Components in unit coordinates `x' = (x - center) / scale`.
    pub fn unit_components(&self, per_component: &[usize]) -> Result<Vec<Vec<Point>>> {
        self.check_family()?;
        match &self.family {
            LinkFamily::TorusLink { p: 1, .. } => {
                Ok(vec![(0..per_component[0])
                    .map(|i| {
                        let t = 2.0 * PI * i as f64 / per_component[0] as f64;
                        Point::new(t.cos(), t.sin(), 0.0)
                    })
                    .collect()])
            }
            LinkFamily::TorusLink { p, q } => {
                let (p, q) = (*p, *q);
                let d = gcd(p, q);
                let (pr, qr) = ((p / d) as f64, (q / d) as f64);
                // |u| = a, |v| = b with a^p = b^q on the unit sphere
                let (mut lo, mut hi) = (0.0f64, 1.0f64);
                for _ in 0..200 {
                    let a = 0.5 * (lo + hi);
                    let b = (1.0 - a * a).sqrt();
                    if p as f64 * a.ln() < q as f64 * b.ln() {
                        lo = a;
                    } else {
                        hi = a;
                    }
                }
                let a = 0.5 * (lo + hi);
                let b = (1.0 - a * a).sqrt();
                Ok((0..d as usize)
                    .map(|k| {
                        let count = per_component[k];
                        (0..count)
                            .map(|i| {
                                let t = 2.0 * PI * i as f64 / count as f64;
                                let alpha = qr * t;
                                let beta = pr * t + 2.0 * PI * k as f64 / q as f64;
                                from_sphere(Complex64::from_polar(a, alpha), Complex64::from_polar(b, beta))
                            })
                            .collect()
                    })
                    .collect())
            }
            LinkFamily::ExplicitCurves { curves } => Ok(curves
                .iter()
                .zip(per_component)
                .map(|(c, &count)| {
                    let poly: Vec<Point> = c.iter().map(|p| Point::from(*p)).collect();
                    resample_closed(&poly, count)
                })
                .collect()),
        }
    }

    /// Largest distance between two points of the unit-coordinate link.
    pub fn unit_diameter(&self) -> Result<f64> {
        let per = split_count(512, self.component_count());
        let pts: Vec<Point> = self.unit_components(&per)?.into_iter().flatten().collect();
        let mut best = 0.0f64;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                best = best.max((a - b).norm());
            }
        }
        Ok(best)
    }

    /// Link components placed in the ball, `count` points in total split
    /// evenly between components.
    pub fn components(&self, count: usize) -> Result<Vec<Vec<Point>>> {
        let per = split_count(count, self.component_count());
        let center = self.center();
        Ok(self
            .unit_components(&per)?
            .into_iter()
            .map(|c| c.into_iter().map(|p| center + p * self.scale).collect())
            .collect())
    }

    /// Checks `0 < R < √π/4` and `0.05·R < |x| < 0.95·R` on a dense sample.
    pub fn validate(&self) -> Result<()> {
        self.check_family()?;
        let r = self.ball_radius;
        if !(r > 0.0 && r < critical_ball_radius()) {
            return Err(Error::InvalidArgument(format!("ball radius {r} must lie in (0, √π/4)")));
        }
        if !(self.scale > 0.0) || !self.center.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale {} must be positive and centre finite", self.scale)));
        }
        for p in self.components(1024)?.iter().flatten() {
            let d = p.norm();
            if d <= 0.05 * r || d >= 0.95 * r {
                return Err(Error::InvalidArgument(format!(
                    "link point at |x| = {d:.4} outside the punctured ball (0.05·R, 0.95·R) for R = {r}"
                )));
            }
        }
        Ok(())
    }
}

/// Points on the target link, split evenly between components.
pub fn sample_link(spec: &LinkSpec, count: usize) -> Result<Vec<Point>> {
    if count < 64 {
        return Err(Error::InvalidArgument(format!("need at least 64 link samples, got {count}")));
    }
    spec.validate()?;
    Ok(spec.components(count)?.into_iter().flatten().collect())
}

/// `x ↦ u(x')^p - v(x')^q` (or `u(x')` when `p = 1`) for a torus link spec.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MilnorSeed {
    p: u32,
    q: u32,
    center: Point,
    scale: f64,
}

pub fn milnor_seed(spec: &LinkSpec) -> Result<MilnorSeed> {
    match spec.family {
        LinkFamily::TorusLink { p, q } if p >= 1 && q >= 1 => {
            Ok(MilnorSeed { p, q, center: spec.center(), scale: spec.scale })
        }
        LinkFamily::TorusLink { p, q } => Err(Error::InvalidArgument(format!("torus link needs p, q >= 1, got ({p}, {q})"))),
        LinkFamily::ExplicitCurves { .. } => Err(Error::InvalidArgument("Milnor seeds exist only for torus links".into())),
    }
}

impl MilnorSeed {
    fn uv(&self, x: &Point) -> (Complex64, Complex64, Vector3<Complex64>, Vector3<Complex64>) {
        let y = (x - self.center) / self.scale;
        let s = y.norm_squared();
        let den = s + 1.0;
        let i = Complex64::i();
        let num_u = Complex64::new(s - 1.0, 2.0 * y.z);
        let w = Complex64::new(y.x, y.y);
        let u = num_u / den;
        let v = w * 2.0 / den;
        let d_num_u = Vector3::new(Complex64::from(2.0 * y.x), Complex64::from(2.0 * y.y), Complex64::new(2.0 * y.z, 2.0));
        let d_w = Vector3::new(Complex64::from(1.0), i, Complex64::from(0.0));
        let d_den = Vector3::new(2.0 * y.x, 2.0 * y.y, 2.0 * y.z);
        let du = Vector3::from_fn(|k, _| (d_num_u[k] * den - num_u * d_den[k]) / (den * den * self.scale));
        let dv = Vector3::from_fn(|k, _| (d_w[k] * 2.0 * den - w * 2.0 * d_den[k]) / (den * den * self.scale));
        (u, v, du, dv)
    }
}

impl Field for MilnorSeed {
    fn value(&self, x: &Point) -> Complex64 {
        let (u, v, _, _) = self.uv(x);
        if self.p == 1 {
            u
        } else {
            u.powu(self.p) - v.powu(self.q)
        }
    }

    fn sample(&self, x: &Point) -> Result<FieldSample> {
        let (u, v, du, dv) = self.uv(x);
        if self.p == 1 {
            return Ok(FieldSample { value: u, gradient: du });
        }
        let (p, q) = (self.p, self.q);
        let fu = u.powu(p - 1) * p as f64;
        let fv = v.powu(q - 1) * q as f64;
        Ok(FieldSample { value: u.powu(p) - v.powu(q), gradient: du * fu - dv * fv })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub expansion: ModeExpansion,
    pub smallest_singular_value: f64,
    pub link_residual: f64,
    pub n_used: usize,
}

fn collocation_matrix(points: &[Point], max_degree: usize) -> DMatrix<Complex64> {
    let cols = mode_count(max_degree);
    let rows: Vec<Vec<Complex64>> = points.par_iter().map(|p| basis_values(Basis::ZeroEnergy, max_degree, p)).collect();
    DMatrix::from_fn(points.len(), cols, |i, j| rows[i][j])
}

fn median(mut values: Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn residual_ratio(expansion: &ModeExpansion, link_samples: &[Point], shell_samples: &[Point]) -> Result<f64> {
    let on_link = expansion.eval_many(link_samples).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let shell = median(expansion.eval_many(shell_samples).iter().map(|z| z.norm()).collect());
    if !(shell > 1e-300) {
        return Err(Error::DegenerateFit(format!("field vanishes on the shell (median |ψ| = {shell:e})")));
    }
    Ok(on_link / shell)
}

/// Unit coefficient vector minimizing `‖M c‖₂` over the zero-energy basis,
/// where `M` holds the basis functions at the link samples.
pub fn fit_coefficients(link_samples: &[Point], max_degree: usize, shell_samples: &[Point]) -> Result<FitResult> {
    let cols = mode_count(max_degree);
    if max_degree < 2 {
        return Err(Error::InvalidArgument(format!("fit needs N >= 2, got {max_degree}")));
    }
    if link_samples.len() < 2 * cols {
        return Err(Error::DegenerateFit(format!(
            "underdetermined: {} link samples for {cols} coefficients (need {})",
            link_samples.len(),
            2 * cols
        )));
    }
    if shell_samples.is_empty() {
        return Err(Error::InvalidArgument("no shell samples".into()));
    }
    let m = collocation_matrix(link_samples, max_degree);
    let (coeffs, sigma) = smallest_right_singular_vector(m)?;
    let expansion = ModeExpansion::new(Basis::ZeroEnergy, max_degree, coeffs)?;
    let link_residual = residual_ratio(&expansion, link_samples, shell_samples)?;
    Ok(FitResult { expansion, smallest_singular_value: sigma, link_residual, n_used: max_degree })
}

/// Right singular vector of the smallest singular value, with that value.
pub fn smallest_right_singular_vector(m: DMatrix<Complex64>) -> Result<(Vec<Complex64>, f64)> {
    let cols = m.ncols();
    if m.nrows() < cols {
        return Err(Error::DegenerateFit(format!("{} rows for {cols} columns", m.nrows())));
    }
    // QR first keeps the SVD square and small
    let r = m.qr().r();
    let svd = r.svd(false, true);
    let v_t = svd.v_t.ok_or_else(|| Error::DegenerateFit("SVD did not converge".into()))?;
    let (k, sigma) = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, s)| (k, *s))
        .ok_or_else(|| Error::DegenerateFit("empty matrix".into()))?;
    let coeffs: Vec<Complex64> = v_t.row(k).iter().map(|z| z.conj()).collect();
    Ok((coeffs, sigma))
}

/// Options for fitting a zero-energy expansion to a seed field around the link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SeedFitOptions {
    /// Link samples per coefficient.
    pub link_oversampling: f64,
    /// Tube radius as a fraction of the link diameter.
    pub tube_radius: f64,
    /// Points per tube circle.
    pub tube_angles: usize,
    /// Weight of the `ψ = 0` rows on the link relative to the tube rows.
    pub link_weight: f64,
    /// Tikhonov parameter relative to the largest singular value.
    pub regularization: f64,
}

impl Default for SeedFitOptions {
    fn default() -> Self {
        Self { link_oversampling: 2.0, tube_radius: 0.1, tube_angles: 8, link_weight: 3000.0, regularization: 1e-5 }
    }
}

impl SeedFitOptions {
    pub fn validate(&self) -> Result<()> {
        let ok = self.link_oversampling >= 1.0
            && self.tube_radius > 0.0
            && self.tube_angles >= 3
            && self.link_weight > 0.0
            && self.regularization >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid fit options {self:?}")))
        }
    }
}

/// Circles of `angles` points and radius `radius` in the normal planes of a closed polyline.
pub fn tube_points(component: &[Point], radius: f64, angles: usize) -> Vec<Point> {
    let n = component.len();
    let mut out = Vec::with_capacity(n * angles);
    for i in 0..n {
        let t = (component[(i + 1) % n] - component[(i + n - 1) % n]).normalize();
        let axis = if t.x.abs() < 0.6 { Point::x() } else { Point::y() };
        let e1 = t.cross(&axis).normalize();
        let e2 = t.cross(&e1);
        for k in 0..angles {
            let a = 2.0 * PI * (k as f64 + 0.5 * (i % 2) as f64) / angles as f64;
            out.push(component[i] + (e1 * a.cos() + e2 * a.sin()) * radius);
        }
    }
    out
}

/// Least-squares fit of a zero-energy expansion that vanishes on the link and
/// matches the linearization of `seed` on a thin tube around it.
///
/// Tube targets are `∇seed(x)·(y − x)` for a tube point `y` above the link
/// point `x`, so the fit reproduces the seed's transversal structure without
/// chasing its higher-order terms.
///
/// Columns are normalised before a Tikhonov-filtered SVD solve; the returned
/// `smallest_singular_value` refers to the normalised, weighted system.
pub fn fit_to_seed<F: Field + ?Sized>(
    spec: &LinkSpec,
    seed: &F,
    max_degree: usize,
    opts: &SeedFitOptions,
) -> Result<FitResult> {
    spec.validate()?;
    opts.validate()?;
    if max_degree < 2 {
        return Err(Error::InvalidArgument(format!("fit needs N >= 2, got {max_degree}")));
    }
    let cols = mode_count(max_degree);
    let link_count = ((opts.link_oversampling * cols as f64).ceil() as usize).max(64);
    let components = spec.components(link_count)?;
    let link: Vec<Point> = components.iter().flatten().copied().collect();
    let diameter = spec.scale * spec.unit_diameter()?;
    let tube_count = (link_count / 2).max(64);
    let radius = opts.tube_radius * diameter;
    let mut tube = Vec::new();
    let mut seed_values = Vec::new();
    for c in spec.components(tube_count)? {
        let ring = tube_points(&c, radius, opts.tube_angles);
        for (k, p) in ring.into_iter().enumerate() {
            let base = c[k / opts.tube_angles];
            let g = seed.sample(&base)?.gradient;
            let d = p - base;
            let value = g.x * d.x + g.y * d.y + g.z * d.z;
            tube.push(p);
            seed_values.push(value);
        }
    }
    let seed_scale = (seed_values.iter().map(|z| z.norm_sqr()).sum::<f64>() / seed_values.len() as f64).sqrt();
    if !(seed_scale > 0.0) {
        return Err(Error::DegenerateFit("seed vanishes on the tube".into()));
    }

    let mut rows = link.clone();
    rows.extend_from_slice(&tube);
    let mut a = collocation_matrix(&rows, max_degree);
    let mut b = DVector::<Complex64>::zeros(rows.len());
    let w_link = opts.link_weight / (link.len() as f64).sqrt();
    let w_tube = 1.0 / (tube.len() as f64).sqrt();
    for i in 0..rows.len() {
        let w = if i < link.len() { w_link } else { w_tube };
        a.row_mut(i).scale_mut(w);
        if i >= link.len() {
            b[i] = seed_values[i - link.len()] / seed_scale * w;
        }
    }
    let norms: Vec<f64> = (0..cols).map(|j| a.column(j).norm()).collect();
    if norms.iter().any(|n| !(*n > 0.0)) {
        return Err(Error::DegenerateFit("a basis function vanishes on every sample".into()));
    }
    for (j, n) in norms.iter().enumerate() {
        a.column_mut(j).unscale_mut(*n);
    }

    let svd = a.svd(true, true);
    let u = svd.u.as_ref().ok_or_else(|| Error::DegenerateFit("SVD did not converge".into()))?;
    let v_t = svd.v_t.as_ref().ok_or_else(|| Error::DegenerateFit("SVD did not converge".into()))?;
    let sigma = &svd.singular_values;
    let smax = sigma.max();
    let mu = opts.regularization * smax;
    let utb = u.adjoint() * &b;
    let mut x = DVector::<Complex64>::zeros(cols);
    for k in 0..sigma.len() {
        let s = sigma[k];
        let filter = s / (s * s + mu * mu);
        x += v_t.row(k).adjoint() * (utb[k] * filter);
    }
    let coeffs: Vec<Complex64> = x.iter().zip(&norms).map(|(c, n)| c / *n).collect();
    let expansion = ModeExpansion::new(Basis::ZeroEnergy, max_degree, coeffs)?;

    let shell: Vec<Point> = components.iter().flat_map(|c| tube_points(c, opts.tube_radius * diameter, 4)).collect();
    let link_residual = residual_ratio(&expansion, &link, &shell)?;
    Ok(FitResult { expansion, smallest_singular_value: sigma.min(), link_residual, n_used: max_degree })
}

/// Fit, tracing and certification settings for [`build_link_eigenfunction`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Degrees tried in order; empty means `⌈3(p+q)⌉, +2, …` up to `degree_cap`.
    pub degrees: Vec<usize>,
    pub degree_cap: usize,
    /// Principal numbers tried in order for each degree; values `≤ N` are skipped.
    pub n_values: Vec<usize>,
    pub fit: SeedFitOptions,
    pub grid_resolution: usize,
    /// Arc-length step; `None` means `0.002·R`.
    pub step: Option<f64>,
    pub newton_tol: f64,
    pub margin_tol: f64,
    pub max_steps: usize,
    /// Search box padding around the target, as a fraction of `R`.
    pub box_padding: f64,
    /// Matching tolerance as a fraction of `R`.
    pub hausdorff_fraction: f64,
    /// Points per target component used for matching and invariants.
    pub target_samples: usize,
    pub projection_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            degrees: Vec::new(),
            degree_cap: 25,
            n_values: vec![20, 30, 40, 60, 80, 100, 150, 200],
            fit: SeedFitOptions::default(),
            grid_resolution: 64,
            step: None,
            newton_tol: 1e-10,
            margin_tol: 1e-3,
            max_steps: 20_000,
            box_padding: 0.05,
            hausdorff_fraction: 0.05,
            target_samples: 512,
            projection_seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Degrees scanned for `spec`.
    pub fn degree_schedule(&self, spec: &LinkSpec) -> Vec<usize> {
        if !self.degrees.is_empty() {
            return self.degrees.clone();
        }
        let start = match spec.family {
            LinkFamily::TorusLink { p, q } => 3 * (p + q) as usize,
            LinkFamily::ExplicitCurves { .. } => 6,
        };
        (start.min(self.degree_cap)..=self.degree_cap).step_by(2).collect()
    }

    pub fn trace_config(&self, spec: &LinkSpec, target: &[Vec<Point>]) -> TraceConfig {
        let bounds = SearchBox::around(target.iter().flatten(), self.box_padding * spec.ball_radius);
        let mut cfg = TraceConfig::for_ball(bounds, spec.ball_radius);
        cfg.grid_resolution = self.grid_resolution;
        if let Some(step) = self.step {
            cfg.step = step;
        }
        cfg.newton_tol = self.newton_tol;
        cfg.margin_tol = self.margin_tol;
        cfg.max_steps = self.max_steps;
        cfg
    }

    pub fn certify_options(&self, spec: &LinkSpec, step: f64) -> CertifyOptions {
        let mut opts = CertifyOptions::for_ball(spec.ball_radius, step);
        opts.margin_tol = self.margin_tol;
        opts.hausdorff_tol = self.hausdorff_fraction * spec.ball_radius;
        opts.projection_seed = self.projection_seed;
        opts
    }

    pub fn validate(&self) -> Result<()> {
        self.fit.validate()?;
        if self.n_values.is_empty() || self.degree_cap < 2 || self.degrees.iter().any(|&d| d < 2) {
            return Err(Error::InvalidArgument("need at least one n and degrees >= 2".into()));
        }
        if !(self.box_padding > 0.0 && self.hausdorff_fraction > 0.0) || self.target_samples < 64 {
            return Err(Error::InvalidArgument("padding and Hausdorff fraction must be positive, target_samples >= 64".into()));
        }
        Ok(())
    }
}

/// One `(N, n)` attempt of the scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Attempt {
    pub max_degree: usize,
    pub n: usize,
    pub link_residual: f64,
    pub curve_count: usize,
    pub certified: bool,
    pub diagnostics: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct BuildOutcome {
    pub fit: FitResult,
    pub eigenfunction: ModeExpansion,
    pub n: usize,
    pub curves: Vec<NodalCurve>,
    pub report: TopologyReport,
    pub attempts: Vec<Attempt>,
}

impl BuildOutcome {
    pub fn certified(&self) -> bool {
        self.report.certified
    }
}

/// Fit for a given degree: seed fit for torus links, null vector for explicit curves.
pub fn fit_link(spec: &LinkSpec, max_degree: usize, opts: &SeedFitOptions) -> Result<FitResult> {
    match spec.family {
        LinkFamily::TorusLink { .. } => fit_to_seed(spec, &milnor_seed(spec)?, max_degree, opts),
        LinkFamily::ExplicitCurves { .. } => {
            spec.validate()?;
            let cols = mode_count(max_degree);
            let count = ((opts.link_oversampling * cols as f64).ceil() as usize).max(2 * cols);
            let components = spec.components(count)?;
            let link: Vec<Point> = components.iter().flatten().copied().collect();
            let radius = opts.tube_radius * spec.scale * spec.unit_diameter()?;
            let shell: Vec<Point> = components.iter().flat_map(|c| tube_points(c, radius, 4)).collect();
            fit_coefficients(&link, max_degree, &shell)
        }
    }
}

fn attempt(
    spec: &LinkSpec,
    fit: &FitResult,
    n: usize,
    cfg: &PipelineConfig,
    target: &[Vec<Point>],
) -> Result<(ModeExpansion, TraceOutcome, TopologyReport)> {
    let eigenfunction = fit.expansion.promote(n)?;
    let trace_cfg = cfg.trace_config(spec, target);
    let outcome = nodaltrace::trace_all(&eigenfunction, &trace_cfg)?;
    let report = topology::certify(&eigenfunction, &outcome.curves, target, &cfg.certify_options(spec, trace_cfg.step));
    Ok((eigenfunction, outcome, report))
}

/// Fits at degree `max_degree`, promotes to the bound basis at `n`, traces and certifies.
pub fn build_link_eigenfunction(spec: &LinkSpec, max_degree: usize, n: usize, cfg: &PipelineConfig) -> Result<BuildOutcome> {
    if n <= max_degree {
        return Err(Error::InvalidArgument(format!("need n >= N + 1, got n = {n}, N = {max_degree}")));
    }
    spec.validate()?;
    cfg.validate()?;
    let target = spec.components(cfg.target_samples * spec.component_count())?;
    let fit = fit_link(spec, max_degree, &cfg.fit)?;
    let (eigenfunction, outcome, mut report) = attempt(spec, &fit, n, cfg, &target)?;
    if !report.certified {
        report.diagnostics.push(format!("not certified at N = {max_degree}, n = {n}; try raising N or n"));
    }
    let attempts = vec![Attempt {
        max_degree,
        n,
        link_residual: fit.link_residual,
        curve_count: report.curve_count,
        certified: report.certified,
        diagnostics: report.diagnostics.clone(),
    }];
    Ok(BuildOutcome { fit, eigenfunction, n, curves: outcome.curves, report, attempts })
}

/// Scans degrees and principal numbers until the topology certifies.
///
/// Returns the first certified build, or the last attempt with a diagnostic
/// suggesting larger `N` or `n` when nothing certifies.
pub fn scan_link_eigenfunction(spec: &LinkSpec, cfg: &PipelineConfig) -> Result<BuildOutcome> {
    spec.validate()?;
    cfg.validate()?;
    let target = spec.components(cfg.target_samples * spec.component_count())?;
    let mut attempts = Vec::new();
    let mut last = None;
    for max_degree in cfg.degree_schedule(spec) {
        let fit = fit_link(spec, max_degree, &cfg.fit)?;
        for &n in cfg.n_values.iter().filter(|&&n| n > max_degree) {
            let (eigenfunction, outcome, report) = attempt(spec, &fit, n, cfg, &target)?;
            attempts.push(Attempt {
                max_degree,
                n,
                link_residual: fit.link_residual,
                curve_count: report.curve_count,
                certified: report.certified,
                diagnostics: report.diagnostics.clone(),
            });
            let done = report.certified;
            last = Some(BuildOutcome {
                fit: fit.clone(),
                eigenfunction,
                n,
                curves: outcome.curves,
                report,
                attempts: Vec::new(),
            });
            if done {
                break;
            }
        }
        if last.as_ref().is_some_and(BuildOutcome::certified) {
            break;
        }
    }
    let mut out = last.ok_or_else(|| Error::InvalidArgument("no (N, n) pair with n > N in the scan".into()))?;
    if !out.certified() {
        out.report
            .diagnostics
            .push(format!("not certified for any scanned (N, n); try raising N beyond {} or n beyond {}", out.fit.n_used, out.n));
    }
    out.attempts = attempts;
    Ok(out)
}
