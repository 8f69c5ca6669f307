//! Tracing the nodal curves `{Re ψ = Im ψ = 0}` of a complex field in 3D.
//!
//! Seeds come from grid cells where both real and imaginary parts change
//! sign. Each seed is projected onto the zero set by a minimum-norm
//! Gauss–Newton iteration and then continued along the tangent
//! `∇Re ψ × ∇Im ψ` with a fixed arc-length predictor and the same projection
//! as corrector.

use std::collections::HashMap;

use nalgebra::{Matrix2, Vector2, Vector3};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fields::{FieldSample, ModeExpansion, Point, GRADIENT_EXCLUSION};

/// The search region is the box minus this ball around the origin.
pub const ORIGIN_EXCLUSION: f64 = 0.02;
const MAX_NEWTON_ITERATIONS: usize = 30;
const MAX_HALVINGS: usize = 2;

/// A complex field that can be sampled with its gradient.
pub trait Field: Sync {
    fn value(&self, p: &Point) -> Complex64;
    fn sample(&self, p: &Point) -> Result<FieldSample>;
}

impl Field for ModeExpansion {
    fn value(&self, p: &Point) -> Complex64 {
        self.eval(p)
    }

    fn sample(&self, p: &Point) -> Result<FieldSample> {
        self.eval_with_grad(p)
    }
}

/// `|∇Re ψ × ∇Im ψ| / (|∇Re ψ|² + |∇Im ψ|²)`, in `[0, 1/2]`.
pub fn margin_of(sample: &FieldSample) -> f64 {
    let (a, b) = (sample.grad_re(), sample.grad_im());
    let denom = a.norm_squared() + b.norm_squared();
    if denom == 0.0 {
        return 0.0;
    }
    a.cross(&b).norm() / denom
}

/// Transversality margin of the field at a point away from the origin.
pub fn transversality_margin<F: Field + ?Sized>(field: &F, point: &Point) -> Result<f64> {
    let r = point.norm();
    if r <= GRADIENT_EXCLUSION {
        return Err(Error::TooCloseToOrigin { radius: r, min: GRADIENT_EXCLUSION });
    }
    Ok(margin_of(&field.sample(point)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchBox {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl SearchBox {
    pub fn new(min: Point, max: Point) -> Self {
        Self { min: [min.x, min.y, min.z], max: [max.x, max.y, max.z] }
    }

    /// Axis-aligned bounding box of `points`, padded by `pad` on each side.
    pub fn around<'a>(points: impl IntoIterator<Item = &'a Point>, pad: f64) -> Self {
        let mut lo = Point::repeat(f64::INFINITY);
        let mut hi = Point::repeat(f64::NEG_INFINITY);
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        Self::new(lo.add_scalar(-pad), hi.add_scalar(pad))
    }

    pub fn contains(&self, p: &Point) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    /// Inside the box and outside the origin exclusion ball.
    pub fn admits(&self, p: &Point) -> bool {
        self.contains(p) && p.norm() > ORIGIN_EXCLUSION
    }

    /// Distance from the origin to the nearest point of the box.
    pub fn origin_distance(&self) -> f64 {
        (0..3)
            .map(|i| {
                let d = if self.min[i] > 0.0 {
                    self.min[i]
                } else if self.max[i] < 0.0 {
                    -self.max[i]
                } else {
                    0.0
                };
                d * d
            })
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    #[serde(rename = "box")]
    pub bounds: SearchBox,
    pub grid_resolution: usize,
    pub step: f64,
    pub newton_tol: f64,
    pub margin_tol: f64,
    pub max_steps: usize,
}

impl TraceConfig {
    /// Defaults for a link inside a ball of radius `ball_radius`: step
    /// `0.002·R`, 64 cells per axis, margin tolerance `1e-3`.
    pub fn for_ball(bounds: SearchBox, ball_radius: f64) -> Self {
        Self {
            bounds,
            grid_resolution: 64,
            step: 0.002 * ball_radius,
            newton_tol: 1e-10,
            margin_tol: 1e-3,
            max_steps: 20_000,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = self.grid_resolution > 0
            && self.step > 0.0
            && self.newton_tol > 0.0
            && self.margin_tol > 0.0
            && self.max_steps > 0
            && (0..3).all(|i| self.bounds.max[i] > self.bounds.min[i]);
        if !positive {
            return Err(Error::InvalidArgument(format!("trace configuration must be positive: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodalCurve {
    pub points: Vec<Point>,
    pub closed: bool,
    pub min_margin: f64,
    pub arc_length: f64,
}

impl NodalCurve {
    pub fn new(points: Vec<Point>, closed: bool, min_margin: f64) -> Self {
        let mut arc_length: f64 = points.windows(2).map(|w| (w[1] - w[0]).norm()).sum();
        if closed && points.len() > 1 {
            arc_length += (points[0] - points[points.len() - 1]).norm();
        }
        Self { points, closed, min_margin, arc_length }
    }

    /// Segment vectors, including the closing one for closed curves.
    pub fn segments(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.points.len();
        let count = if self.closed { n } else { n.saturating_sub(1) };
        (0..count).map(move |i| (self.points[i], self.points[(i + 1) % n]))
    }

    pub fn mean_spacing(&self) -> f64 {
        let count = self.segments().count();
        if count == 0 {
            return 0.0;
        }
        self.arc_length / count as f64
    }

    /// Same point set traversed in the opposite direction, starting at the same point.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        if self.closed {
            points[1..].reverse();
        } else {
            points.reverse();
        }
        Self { points, ..self.clone() }
    }

    /// Spacing, closure and self-avoidance checks at resolution `step`.
    pub fn check_invariants(&self, step: f64) -> Result<()> {
        for (i, w) in self.points.windows(2).enumerate() {
            let d = (w[1] - w[0]).norm();
            if d < 0.2 * step || d > 2.0 * step {
                return Err(Error::InvalidArgument(format!("spacing {d:e} at point {i} outside [0.2, 2]·step")));
            }
        }
        if self.closed {
            let gap = (self.points[0] - self.points[self.points.len() - 1]).norm();
            if gap > 1.5 * step {
                return Err(Error::InvalidArgument(format!("closing gap {gap:e} exceeds 1.5·step")));
            }
            let min = self.min_nonadjacent_distance(step);
            if min <= 0.5 * step {
                return Err(Error::InvalidArgument(format!("self-approach {min:e} <= 0.5·step")));
            }
        }
        Ok(())
    }

    /// Smallest distance between points that are more than a few steps apart along the curve.
    pub fn min_nonadjacent_distance(&self, step: f64) -> f64 {
        let n = self.points.len();
        // points within 3 steps of arc length count as neighbours
        let skip = ((3.0 * step / self.mean_spacing().max(1e-300)).ceil() as usize).max(2);
        let mut best = f64::INFINITY;
        for i in 0..n {
            for j in (i + skip)..n {
                let along = if self.closed { (j - i).min(n - (j - i)) } else { j - i };
                if along < skip {
                    continue;
                }
                best = best.min((self.points[i] - self.points[j]).norm());
            }
        }
        best
    }
}

fn tangent(sample: &FieldSample) -> Vector3<f64> {
    sample.grad_re().cross(&sample.grad_im())
}

/// Projects `point` onto the nodal set by minimum-norm Gauss–Newton steps on
/// `(Re ψ, Im ψ)`. Stops when `|ψ| < newton_tol·sqrt(|∇Re ψ|² + |∇Im ψ|²)`.
pub fn refine<F: Field + ?Sized>(field: &F, point: &Point, newton_tol: f64, margin_tol: f64) -> Result<Point> {
    refine_counted(field, point, newton_tol, margin_tol).map(|(p, _)| p)
}

/// As [`refine`], also returning the number of Newton steps taken.
pub fn refine_counted<F: Field + ?Sized>(
    field: &F,
    point: &Point,
    newton_tol: f64,
    margin_tol: f64,
) -> Result<(Point, usize)> {
    let mut p = *point;
    for iteration in 0..=MAX_NEWTON_ITERATIONS {
        let s = field.sample(&p)?;
        let (a, b) = (s.grad_re(), s.grad_im());
        let scale = (a.norm_squared() + b.norm_squared()).sqrt();
        if s.value.norm() <= newton_tol * scale {
            return Ok((p, iteration));
        }
        let margin = margin_of(&s);
        if margin < margin_tol {
            return Err(Error::Divergence(format!("margin {margin:e} below {margin_tol:e} at {p:?}")));
        }
        if iteration == MAX_NEWTON_ITERATIONS {
            break;
        }
        let gram = Matrix2::new(a.dot(&a), a.dot(&b), a.dot(&b), b.dot(&b));
        let y = gram
            .lu()
            .solve(&Vector2::new(s.value.re, s.value.im))
            .ok_or_else(|| Error::Divergence("singular Jacobian".into()))?;
        p -= a * y[0] + b * y[1];
        if !p.iter().all(|v| v.is_finite()) {
            return Err(Error::Divergence("non-finite iterate".into()));
        }
    }
    Err(Error::Divergence(format!("no convergence within {MAX_NEWTON_ITERATIONS} iterations")))
}

/// Cell-centre candidates where both `Re ψ` and `Im ψ` change sign across
/// the cell vertices, deduplicated within `step`, in grid order.
pub fn find_seeds<F: Field + ?Sized>(field: &F, cfg: &TraceConfig) -> Result<Vec<Point>> {
    cfg.validate()?;
    let res = cfg.grid_resolution;
    let lo = Point::from(cfg.bounds.min);
    let hi = Point::from(cfg.bounds.max);
    let h = (hi - lo) / res as f64;
    let vertex = |i: usize, j: usize, k: usize| lo + Vector3::new(i as f64 * h.x, j as f64 * h.y, k as f64 * h.z);
    let nv = res + 1;
    let values: Vec<Complex64> = (0..nv * nv * nv)
        .into_par_iter()
        .map(|idx| {
            let (i, j, k) = (idx / (nv * nv), (idx / nv) % nv, idx % nv);
            field.value(&vertex(i, j, k))
        })
        .collect();
    let at = |i: usize, j: usize, k: usize| values[(i * nv + j) * nv + k];

    let mut seeds: Vec<Point> = Vec::new();
    let mut hash = SpatialHash::new(cfg.step.max(1e-12));
    for i in 0..res {
        for j in 0..res {
            for k in 0..res {
                let (mut re_pos, mut re_neg, mut im_pos, mut im_neg) = (false, false, false, false);
                for c in 0..8 {
                    let v = at(i + (c >> 2), j + ((c >> 1) & 1), k + (c & 1));
                    re_pos |= v.re > 0.0;
                    re_neg |= v.re <= 0.0;
                    im_pos |= v.im > 0.0;
                    im_neg |= v.im <= 0.0;
                }
                let center = vertex(i, j, k) + 0.5 * h;
                if center.norm() <= ORIGIN_EXCLUSION + 0.5 * h.norm() {
                    continue;
                }
                if re_pos && re_neg && im_pos && im_neg {
                    if hash.nearest_within(&center, cfg.step).is_none() {
                        hash.insert(center, seeds.len());
                        seeds.push(center);
                    }
                }
            }
        }
    }
    Ok(seeds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

impl Direction {
    fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Backward => -1.0,
        }
    }
}

struct PartialTrace {
    points: Vec<Point>,
    min_margin: f64,
    closed: bool,
    failure: Option<Error>,
}

fn march<F: Field + ?Sized>(field: &F, start: Point, cfg: &TraceConfig, dir: Direction, min_margin: f64) -> PartialTrace {
    let mut points = vec![start];
    let mut min_margin = min_margin;
    let step = cfg.step;
    let mut current = start;
    let mut current_tangent = match field.sample(&current) {
        Ok(s) => tangent(&s).normalize() * dir.sign(),
        Err(e) => return PartialTrace { points, min_margin, closed: false, failure: Some(e) },
    };
    for _ in 0..cfg.max_steps {
        let mut h = step;
        let mut accepted = None;
        let mut last_err = None;
        for _ in 0..=MAX_HALVINGS {
            let guess = current + current_tangent * h;
            match refine(field, &guess, cfg.newton_tol, cfg.margin_tol) {
                Ok(q) => {
                    let d = (q - current).norm();
                    let s = match field.sample(&q) {
                        Ok(s) => s,
                        Err(e) => {
                            last_err = Some(e);
                            h *= 0.5;
                            continue;
                        }
                    };
                    let t = tangent(&s).normalize() * dir.sign();
                    if d >= 0.2 * step && d <= 2.0 * step && t.dot(&current_tangent) > 0.5 {
                        accepted = Some((q, t, margin_of(&s)));
                        break;
                    }
                    last_err = Some(Error::Divergence(format!("corrector moved {d:e} for step {h:e}")));
                }
                Err(e) => last_err = Some(e),
            }
            h *= 0.5;
        }
        let Some((q, t, margin)) = accepted else {
            let failure = match last_err {
                Some(Error::Divergence(msg)) if msg.starts_with("margin") => {
                    Error::MarginCollapse { margin: min_margin.min(cfg.margin_tol * 0.999), tol: cfg.margin_tol }
                }
                Some(e) => e,
                None => Error::Divergence("corrector failed".into()),
            };
            return PartialTrace { points, min_margin, closed: false, failure: Some(failure) };
        };
        if margin < cfg.margin_tol {
            return PartialTrace {
                points,
                min_margin: min_margin.min(margin),
                closed: false,
                failure: Some(Error::MarginCollapse { margin, tol: cfg.margin_tol }),
            };
        }
        if !cfg.bounds.admits(&q) {
            return PartialTrace { points, min_margin, closed: false, failure: None };
        }
        min_margin = min_margin.min(margin);
        points.push(q);
        if points.len() > 5 && (q - start).norm() < 1.5 * step {
            return PartialTrace { points, min_margin, closed: true, failure: None };
        }
        current = q;
        current_tangent = t;
    }
    PartialTrace { points, min_margin, closed: false, failure: None }
}

/// Traces the nodal curve through `seed`, which is refined first.
///
/// Closed curves are returned as traced from the seed. Open curves (leaving
/// the box or exhausting `max_steps`) are continued backwards from the seed so
/// the whole in-box arc is returned.
pub fn trace<F: Field + ?Sized>(field: &F, seed: &Point, cfg: &TraceConfig, dir: Direction) -> Result<NodalCurve> {
    let (curve, failure) = trace_partial(field, seed, cfg, dir)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(curve),
    }
}

fn trace_partial<F: Field + ?Sized>(
    field: &F,
    seed: &Point,
    cfg: &TraceConfig,
    dir: Direction,
) -> Result<(NodalCurve, Option<Error>)> {
    cfg.validate()?;
    let start = refine(field, seed, cfg.newton_tol, cfg.margin_tol)?;
    let margin = transversality_margin(field, &start)?;
    if margin <= cfg.margin_tol {
        return Err(Error::MarginCollapse { margin, tol: cfg.margin_tol });
    }
    let forward = march(field, start, cfg, dir, margin);
    if forward.closed || forward.failure.is_some() {
        let curve = NodalCurve::new(forward.points, forward.closed, forward.min_margin);
        return Ok((curve, forward.failure));
    }
    let other = match dir {
        Direction::Forward => Direction::Backward,
        Direction::Backward => Direction::Forward,
    };
    let backward = march(field, start, cfg, other, forward.min_margin);
    let mut points: Vec<Point> = backward.points.into_iter().skip(1).rev().collect();
    points.extend(forward.points);
    let curve = NodalCurve::new(points, false, backward.min_margin);
    Ok((curve, backward.failure))
}

/// A seed that could not be turned into a certified curve.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedTrace {
    pub seed: Point,
    pub reason: Error,
    /// Points reached before the failure (possibly just the refined seed).
    pub partial: Vec<Point>,
}

#[derive(Debug, Clone, Default)]
pub struct TraceOutcome {
    pub curves: Vec<NodalCurve>,
    pub rejected: Vec<RejectedTrace>,
}

/// Finds seeds and traces every distinct nodal curve in the box.
///
/// Seeds whose refined point lies within `3·step` of an already traced (or
/// rejected) curve are skipped, so each curve is traced once, in seed order.
pub fn trace_all<F: Field + ?Sized>(field: &F, cfg: &TraceConfig) -> Result<TraceOutcome> {
    let seeds = find_seeds(field, cfg)?;
    // Projection is independent per seed; do it up front in parallel.
    let refined: Vec<Result<Point>> =
        seeds.par_iter().map(|s| refine(field, s, cfg.newton_tol, cfg.margin_tol)).collect();
    let radius = 3.0 * cfg.step;
    let mut covered = SpatialHash::new(radius);
    let mut outcome = TraceOutcome::default();
    for (seed, start) in seeds.iter().zip(refined) {
        let start = match start {
            Ok(p) => p,
            Err(_) => continue,
        };
        if !cfg.bounds.admits(&start) || covered.nearest_within(&start, radius).is_some() {
            continue;
        }
        match trace_partial(field, &start, cfg, Direction::Forward) {
            Ok((curve, None)) => {
                for p in &curve.points {
                    covered.insert(*p, 0);
                }
                outcome.curves.push(curve);
            }
            Ok((curve, Some(reason))) => {
                for p in &curve.points {
                    covered.insert(*p, 0);
                }
                outcome.rejected.push(RejectedTrace { seed: *seed, reason, partial: curve.points });
            }
            Err(reason) => {
                covered.insert(start, 0);
                outcome.rejected.push(RejectedTrace { seed: *seed, reason, partial: vec![start] });
            }
        }
    }
    Ok(outcome)
}

/// Uniform-grid bucket index for nearest-neighbour queries within one cell size.
struct SpatialHash {
    cell: f64,
    buckets: HashMap<(i64, i64, i64), Vec<(Point, usize)>>,
}

impl SpatialHash {
    fn new(cell: f64) -> Self {
        Self { cell, buckets: HashMap::new() }
    }

    fn key(&self, p: &Point) -> (i64, i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64, (p.z / self.cell).floor() as i64)
    }

    fn insert(&mut self, p: Point, tag: usize) {
        let key = self.key(&p);
        self.buckets.entry(key).or_default().push((p, tag));
    }

    fn nearest_within(&self, p: &Point, radius: f64) -> Option<usize> {
        let (i, j, k) = self.key(p);
        let reach = (radius / self.cell).ceil() as i64;
        for di in -reach..=reach {
            for dj in -reach..=reach {
                for dk in -reach..=reach {
                    if let Some(bucket) = self.buckets.get(&(i + di, j + dj, k + dk)) {
                        if let Some((_, tag)) = bucket.iter().find(|(q, _)| (q - p).norm() < radius) {
                            return Some(*tag);
                        }
                    }
                }
            }
        }
        None
    }
}

/// Curve file layout: `{curves: [{closed, min_margin, arc_length, points}]}`.
#[derive(Serialize, Deserialize)]
struct CurveFile {
    curves: Vec<CurveRecord>,
}

#[derive(Serialize, Deserialize)]
struct CurveRecord {
    closed: bool,
    min_margin: f64,
    arc_length: f64,
    points: Vec<[f64; 3]>,
}

pub fn curves_to_json(curves: &[NodalCurve]) -> String {
    let file = CurveFile {
        curves: curves
            .iter()
            .map(|c| CurveRecord {
                closed: c.closed,
                min_margin: c.min_margin,
                arc_length: c.arc_length,
                points: c.points.iter().map(|p| [p.x, p.y, p.z]).collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("curves serialise")
}

pub fn curves_from_json(text: &str) -> Result<Vec<NodalCurve>> {
    let file: CurveFile = serde_json::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
    Ok(file
        .curves
        .into_iter()
        .map(|c| NodalCurve {
            points: c.points.into_iter().map(Point::from).collect(),
            closed: c.closed,
            min_margin: c.min_margin,
            arc_length: c.arc_length,
        })
        .collect())
}

/// One vertex per line, a blank line between curves; closed curves repeat
/// their first vertex at the end.
pub fn curves_to_polyline_text(curves: &[NodalCurve]) -> String {
    let mut out = String::new();
    for (i, c) in curves.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let closing = c.closed.then(|| c.points.first()).flatten();
        for p in c.points.iter().chain(closing) {
            out.push_str(&format!("{} {} {}\n", p.x, p.y, p.z));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    /// ψ = (x - x0) + i (y - y0): the nodal set is a vertical line.
    struct Linear {
        x0: f64,
        y0: f64,
        im_scale: f64,
    }

    impl Field for Linear {
        fn value(&self, p: &Point) -> Complex64 {
            Complex64::new(p.x - self.x0, self.im_scale * (p.y - self.y0))
        }

        fn sample(&self, p: &Point) -> Result<FieldSample> {
            let one = Complex64::new(1.0, 0.0);
            let i = Complex64::new(0.0, self.im_scale);
            Ok(FieldSample { value: self.value(p), gradient: Vector3::new(one, i, Complex64::new(0.0, 0.0)) })
        }
    }

    /// A circle of radius rho in the plane z = z0:
    /// ψ = (x² + y² - rho²) + i (z - z0).
    struct Ring {
        rho: f64,
        z0: f64,
    }

    impl Field for Ring {
        fn value(&self, p: &Point) -> Complex64 {
            Complex64::new(p.x * p.x + p.y * p.y - self.rho * self.rho, p.z - self.z0)
        }

        fn sample(&self, p: &Point) -> Result<FieldSample> {
            let c = |re: f64, im: f64| Complex64::new(re, im);
            Ok(FieldSample { value: self.value(p), gradient: Vector3::new(c(2.0 * p.x, 0.0), c(2.0 * p.y, 0.0), c(0.0, 1.0)) })
        }
    }

    fn ring_config() -> TraceConfig {
        let bounds = SearchBox::new(Point::new(-0.1, -0.1, 0.15), Point::new(0.1, 0.1, 0.25));
        TraceConfig { grid_resolution: 24, ..TraceConfig::for_ball(bounds, 0.43) }
    }

    #[test]
    fn margin_limits() {
        let orthogonal = Linear { x0: 0.0, y0: 0.0, im_scale: 1.0 };
        let m = transversality_margin(&orthogonal, &Point::new(0.3, 0.2, 0.1)).unwrap();
        assert!((m - 0.5).abs() < 1e-15);
        let g = Vector3::new(Complex64::new(1.0, 2.0), Complex64::new(0.5, 1.0), Complex64::new(0.0, 0.0));
        assert_eq!(margin_of(&FieldSample { value: Complex64::new(0.0, 0.0), gradient: g }), 0.0);
    }

    #[test]
    fn refine_fixed_point_and_linear_convergence() {
        let f = Linear { x0: 0.1, y0: -0.05, im_scale: 3.0 };
        let on = Point::new(0.1, -0.05, 0.3);
        let (p, iters) = refine_counted(&f, &on, 1e-12, 1e-3).unwrap();
        assert_eq!(iters, 0);
        assert!((p - on).norm() < 1e-14);
        let off = Point::new(0.1007, -0.0493, 0.3);
        let (p, iters) = refine_counted(&f, &off, 1e-12, 1e-3).unwrap();
        assert!(iters <= 2 && f.value(&p).norm() < 1e-12);
        // minimum-norm step does not move along the line
        assert!((p.z - 0.3).abs() < 1e-15);
    }

    #[test]
    fn refine_rejects_parallel_gradients() {
        struct Parallel;
        impl Field for Parallel {
            fn value(&self, p: &Point) -> Complex64 {
                Complex64::new(p.x - 0.2, 2.0 * (p.x - 0.2) + 0.01)
            }
            fn sample(&self, p: &Point) -> Result<FieldSample> {
                let z = Complex64::new(0.0, 0.0);
                Ok(FieldSample { value: self.value(p), gradient: Vector3::new(Complex64::new(1.0, 2.0), z, z) })
            }
        }
        assert!(matches!(refine(&Parallel, &Point::new(0.3, 0.1, 0.1), 1e-12, 1e-3), Err(Error::Divergence(_))));
    }

    #[test]
    fn ring_traces_closed() {
        let f = Ring { rho: 0.06, z0: 0.2 };
        let cfg = ring_config();
        let out = trace_all(&f, &cfg).unwrap();
        assert_eq!(out.curves.len(), 1, "{:?}", out.rejected);
        let c = &out.curves[0];
        assert!(c.closed);
        assert!((c.arc_length - 2.0 * std::f64::consts::PI * 0.06).abs() < 0.01 * 0.06);
        c.check_invariants(cfg.step).unwrap();
        for p in &c.points {
            assert!(f.value(p).norm() < 1e-9);
        }
    }

    #[test]
    fn open_line_is_traced_both_ways() {
        let f = Linear { x0: 0.01, y0: 0.02, im_scale: 1.0 };
        let bounds = SearchBox::new(Point::new(-0.05, -0.05, 0.1), Point::new(0.05, 0.05, 0.2));
        let cfg = TraceConfig { grid_resolution: 10, ..TraceConfig::for_ball(bounds, 0.43) };
        let c = trace(&f, &Point::new(0.011, 0.02, 0.15), &cfg, Direction::Forward).unwrap();
        assert!(!c.closed);
        let zs: Vec<f64> = c.points.iter().map(|p| p.z).collect();
        assert!(zs.first().unwrap() - 0.1 < cfg.step && 0.2 - zs.last().unwrap() < cfg.step);
    }

    #[test]
    fn origin_ball_is_excluded() {
        let bounds = SearchBox::new(Point::new(-0.1, -0.1, -0.1), Point::new(0.1, 0.1, 0.1));
        assert!(bounds.admits(&Point::new(0.05, 0.0, 0.0)));
        assert!(!bounds.admits(&Point::new(0.01, 0.0, 0.0)));
        // a ring through the exclusion ball is cut open there
        let f = Ring { rho: 0.015, z0: 0.0 };
        let cfg = TraceConfig { grid_resolution: 40, ..TraceConfig::for_ball(bounds, 0.43) };
        assert!(find_seeds(&f, &cfg).unwrap().is_empty());
        let f = Ring { rho: 0.03, z0: 0.0 };
        let out = trace_all(&f, &cfg).unwrap();
        assert_eq!(out.curves.len(), 1);
        assert!(out.curves[0].closed);
    }

    #[test]
    fn empty_nodal_set_gives_no_seeds() {
        struct Constant;
        impl Field for Constant {
            fn value(&self, _: &Point) -> Complex64 {
                Complex64::new(1.0, 0.5)
            }
            fn sample(&self, p: &Point) -> Result<FieldSample> {
                let z = Complex64::new(0.0, 0.0);
                Ok(FieldSample { value: self.value(p), gradient: Vector3::new(z, z, z) })
            }
        }
        assert!(find_seeds(&Constant, &ring_config()).unwrap().is_empty());
    }

    #[test]
    fn polyline_text_layout() {
        let c = NodalCurve::new(vec![Point::new(0.0, 0.0, 1.0), Point::new(1.0, 0.0, 1.0), Point::new(0.0, 1.0, 1.0)], true, 0.4);
        let text = curves_to_polyline_text(&[c.clone(), c]);
        let blocks: Vec<&str> = text.split("\n\n").collect();
        assert_eq!(blocks.len(), 2);
        assert_eq!(blocks[0].lines().count(), 4);
    }

    #[test]
    fn curve_json_round_trip() {
        let c = NodalCurve::new(vec![Point::new(0.1, 0.2, 0.3), Point::new(0.4, 0.5, 0.6)], false, 0.25);
        let back = curves_from_json(&curves_to_json(&[c.clone()])).unwrap();
        assert_eq!(back, vec![c]);
    }
}
