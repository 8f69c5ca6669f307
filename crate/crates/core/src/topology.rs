//! Topological invariants of traced nodal curves and certification against
//! a target link.

use std::f64::consts::PI;

use nalgebra::Vector2;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::Point;
use crate::nodaltrace::{Field, NodalCurve};

/// Linking values farther than this from an integer are rejected.
pub const LINKING_INTEGER_TOL: f64 = 0.1;
pub const WINDING_SAMPLES: usize = 64;
pub const WINDING_LOCATIONS: usize = 16;
const PROJECTION_ATTEMPTS: usize = 50;

/// Raw Gauss double sum over two closed polylines, midpoint rule.
pub fn linking_integral(a: &[Point], b: &[Point]) -> f64 {
    let segs = |c: &[Point]| -> Vec<(Point, Point)> {
        let n = c.len();
        (0..n).map(|i| ((c[i] + c[(i + 1) % n]) * 0.5, c[(i + 1) % n] - c[i])).collect()
    };
    let (sa, sb) = (segs(a), segs(b));
    let mut total = 0.0;
    for (ma, da) in &sa {
        for (mb, db) in &sb {
            let r = ma - mb;
            let d = r.norm();
            total += r.dot(&da.cross(db)) / (d * d * d);
        }
    }
    total / (4.0 * PI)
}

fn min_distance(a: &[Point], b: &[Point]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min((p - q).norm_squared());
        }
    }
    best.sqrt()
}

/// Integer linking number of two closed curves.
///
/// Requires the curves to stay more than three sample spacings apart, since
/// the midpoint rule is only reliable well away from near-collisions.
pub fn linking_number(a: &NodalCurve, b: &NodalCurve) -> Result<i64> {
    if !a.closed || !b.closed {
        return Err(Error::OpenCurve);
    }
    let spacing = a.mean_spacing().max(b.mean_spacing());
    let distance = min_distance(&a.points, &b.points);
    if distance <= 3.0 * spacing {
        return Err(Error::CurvesTooClose { distance });
    }
    let value = linking_integral(&a.points, &b.points);
    let rounded = value.round();
    if (value - rounded).abs() > LINKING_INTEGER_TOL {
        return Err(Error::NonIntegerLinking { value });
    }
    Ok(rounded as i64)
}

/// Phase winding of `field` around small circles linking `curve`.
///
/// Circles of radius `circuit_radius` are placed in the normal plane at
/// [`WINDING_LOCATIONS`] evenly spaced vertices and sampled at [`WINDING_SAMPLES`]
/// angles (bisected where the phase moves fast), oriented so that the winding
/// is positive when the curve runs along `∇Re ψ × ∇Im ψ`. Returns one value
/// per location; they must all agree.
pub fn phase_winding<F: Field + ?Sized>(field: &F, curve: &NodalCurve, circuit_radius: f64) -> Result<Vec<i64>> {
    if !curve.closed {
        return Err(Error::OpenCurve);
    }
    let step = curve.mean_spacing();
    if !(circuit_radius > 0.0 && circuit_radius < 5.0 * step) {
        return Err(Error::InvalidArgument(format!(
            "circuit radius {circuit_radius:e} must be in (0, 5·spacing = {:e})",
            5.0 * step
        )));
    }
    let n = curve.points.len();
    let locations = WINDING_LOCATIONS.min(n);
    let mut windings = Vec::with_capacity(locations);
    for k in 0..locations {
        let i = k * n / locations;
        let p = curve.points[i];
        let t = (curve.points[(i + 1) % n] - curve.points[(i + n - 1) % n]).normalize();
        let axis = if t.x.abs() < 0.6 { Point::x() } else { Point::y() };
        let u = t.cross(&axis).normalize();
        let v = t.cross(&u);
        let at = |angle: f64| field.value(&(p + (u * angle.cos() + v * angle.sin()) * circuit_radius));
        let mut total = 0.0;
        let mut previous = at(0.0);
        for s in 1..=WINDING_SAMPLES {
            let (a0, a1) = (2.0 * PI * (s - 1) as f64 / WINDING_SAMPLES as f64, 2.0 * PI * s as f64 / WINDING_SAMPLES as f64);
            let next = at(a1);
            total += arc_phase(&at, (a0, previous), (a1, next), 0).map_err(|jump| {
                Error::Winding(format!("phase jump {jump:.3} at location {k} after subdivision; circuit too coarse"))
            })?;
            previous = next;
        }
        windings.push((total / (2.0 * PI)).round() as i64);
    }
    if windings.iter().any(|w| *w != windings[0]) {
        return Err(Error::Winding(format!("windings disagree along the curve: {windings:?}")));
    }
    Ok(windings)
}

const MAX_SUBDIVISION: usize = 10;

fn wrapped(a: f64) -> f64 {
    a - 2.0 * PI * (a / (2.0 * PI)).round()
}

/// Phase increment along one circuit arc, bisecting while adjacent samples
/// differ by more than π/4. Fails with the offending jump if it stays above π/2.
fn arc_phase(
    at: &impl Fn(f64) -> num_complex::Complex64,
    start: (f64, num_complex::Complex64),
    end: (f64, num_complex::Complex64),
    depth: usize,
) -> std::result::Result<f64, f64> {
    let jump = wrapped(end.1.arg() - start.1.arg());
    if jump.abs() <= PI / 4.0 {
        return Ok(jump);
    }
    if depth == MAX_SUBDIVISION {
        return if jump.abs() <= PI / 2.0 { Ok(jump) } else { Err(jump) };
    }
    let mid_angle = 0.5 * (start.0 + end.0);
    let mid = (mid_angle, at(mid_angle));
    Ok(arc_phase(at, start, mid, depth + 1)? + arc_phase(at, mid, end, depth + 1)?)
}

/// Symmetric Hausdorff distance between two point sets.
pub fn hausdorff(a: &[Point], b: &[Point]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    let directed = |x: &[Point], y: &[Point]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).norm_squared()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
            .sqrt()
    };
    directed(a, b).max(directed(b, a))
}

/// Crossing of a knot diagram in terms of arc labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DiagramCrossing {
    pub over: usize,
    pub incoming: usize,
    pub outgoing: usize,
}

/// `|det|` of the colouring matrix with one row and column removed.
pub fn determinant_from_crossings(arcs: usize, crossings: &[DiagramCrossing]) -> u64 {
    if arcs <= 1 {
        return 1;
    }
    let m = arcs - 1;
    let mut a = vec![vec![0i128; m]; m];
    for (row, c) in crossings.iter().take(m).enumerate() {
        for (col, weight) in [(c.over, 2), (c.incoming, -1), (c.outgoing, -1)] {
            if col < m {
                a[row][col] += weight;
            }
        }
    }
    bareiss_determinant(a).unsigned_abs() as u64
}

/// Fraction-free Gaussian elimination.
fn bareiss_determinant(mut a: Vec<Vec<i128>>) -> i128 {
    let n = a.len();
    let mut sign = 1;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&r| a[r][k] != 0) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    if n == 0 {
        1
    } else {
        sign * a[n - 1][n - 1]
    }
}

/// Arc labelling of a diagram given as `(under position, over position)`
/// pairs along one traversal.
fn diagram_from_positions(mut crossings: Vec<(f64, f64)>) -> (usize, Vec<DiagramCrossing>) {
    crossings.sort_by(|x, y| x.0.total_cmp(&y.0));
    let c = crossings.len();
    let unders: Vec<f64> = crossings.iter().map(|x| x.0).collect();
    let arc_of = |pos: f64| -> usize {
        let count = unders.partition_point(|u| *u <= pos);
        (count + c - 1) % c
    };
    let labelled = crossings
        .iter()
        .enumerate()
        .map(|(k, &(_, over))| DiagramCrossing { over: arc_of(over), incoming: (k + c - 1) % c, outgoing: k })
        .collect();
    (c, labelled)
}

/// Knot determinant from a Gauss code: `+k` passes over crossing `k`, `-k` under it.
pub fn determinant_from_gauss_code(code: &[i32]) -> Result<u64> {
    let mut pairs = std::collections::BTreeMap::<i32, (Option<f64>, Option<f64>)>::new();
    for (pos, &entry) in code.iter().enumerate() {
        let slot = pairs.entry(entry.abs()).or_default();
        let target = if entry > 0 { &mut slot.1 } else { &mut slot.0 };
        if target.replace(pos as f64).is_some() {
            return Err(Error::InvalidArgument(format!("crossing {} repeated in Gauss code", entry.abs())));
        }
    }
    let crossings = pairs
        .into_iter()
        .map(|(k, slot)| match slot {
            (Some(u), Some(o)) => Ok((u, o)),
            _ => Err(Error::InvalidArgument(format!("crossing {k} must appear once over and once under"))),
        })
        .collect::<Result<Vec<_>>>()?;
    let (arcs, labelled) = diagram_from_positions(crossings);
    Ok(determinant_from_crossings(arcs, &labelled))
}

fn random_direction(rng: &mut impl Rng) -> Point {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi: f64 = rng.gen_range(0.0..2.0 * PI);
    let s = (1.0 - z * z).sqrt();
    Point::new(s * phi.cos(), s * phi.sin(), z)
}

enum Projection {
    Generic(Vec<(f64, f64)>),
    Degenerate,
    Ambiguous { separation: f64, tol: f64 },
}

fn project_crossings(points: &[Point], view: &Point) -> Projection {
    let axis = if view.x.abs() < 0.6 { Point::x() } else { Point::y() };
    let e1 = view.cross(&axis).normalize();
    let e2 = view.cross(&e1);
    let n = points.len();
    let flat: Vec<Vector2<f64>> = points.iter().map(|p| Vector2::new(p.dot(&e1), p.dot(&e2))).collect();
    let depth: Vec<f64> = points.iter().map(|p| p.dot(view)).collect();
    let spacing = (0..n).map(|i| (points[(i + 1) % n] - points[i]).norm()).sum::<f64>() / n as f64;
    let depth_tol = 0.1 * spacing;
    let cross2 = |a: Vector2<f64>, b: Vector2<f64>| a.x * b.y - a.y * b.x;
    let mut crossings = Vec::new();
    for i in 0..n {
        let (p, dp) = (flat[i], flat[(i + 1) % n] - flat[i]);
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            let (q, dq) = (flat[j], flat[(j + 1) % n] - flat[j]);
            let denom = cross2(dp, dq);
            let scale = dp.norm() * dq.norm();
            let w = q - p;
            if denom.abs() <= 1e-12 * scale {
                // parallel; only a problem if the segments overlap
                if cross2(w, dp).abs() <= 1e-9 * scale {
                    return Projection::Degenerate;
                }
                continue;
            }
            let s = cross2(w, dq) / denom;
            let t = cross2(w, dp) / denom;
            if !(0.0..1.0).contains(&s) || !(0.0..1.0).contains(&t) {
                continue;
            }
            let near_vertex = |x: f64| !(1e-6..=1.0 - 1e-6).contains(&x);
            if near_vertex(s) || near_vertex(t) || denom.abs() < 0.02 * scale {
                return Projection::Degenerate;
            }
            let zi = depth[i] + s * (depth[(i + 1) % n] - depth[i]);
            let zj = depth[j] + t * (depth[(j + 1) % n] - depth[j]);
            let separation = (zi - zj).abs();
            if separation < depth_tol {
                return Projection::Ambiguous { separation, tol: depth_tol };
            }
            let (pi, pj) = (i as f64 + s, j as f64 + t);
            crossings.push(if zi > zj { (pj, pi) } else { (pi, pj) });
        }
    }
    Projection::Generic(crossings)
}

/// Knot determinant `|Δ(-1)|` of a closed curve from a generic random projection.
pub fn knot_determinant(curve: &NodalCurve, rng: &mut impl Rng) -> Result<u64> {
    if !curve.closed {
        return Err(Error::OpenCurve);
    }
    let mut last_ambiguity = None;
    for _ in 0..PROJECTION_ATTEMPTS {
        let view = random_direction(rng);
        match project_crossings(&curve.points, &view) {
            Projection::Generic(crossings) => {
                if crossings.is_empty() {
                    return Ok(1);
                }
                let (arcs, labelled) = diagram_from_positions(crossings);
                return Ok(determinant_from_crossings(arcs, &labelled));
            }
            Projection::Ambiguous { separation, tol } => last_ambiguity = Some((separation, tol)),
            Projection::Degenerate => {}
        }
    }
    match last_ambiguity {
        Some((separation, tol)) => Err(Error::AmbiguousCrossing { separation, tol }),
        None => Err(Error::NoGenericProjection { attempts: PROJECTION_ATTEMPTS }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyOptions {
    pub ball_radius: f64,
    pub margin_tol: f64,
    /// Largest allowed Hausdorff distance between a traced curve and its target component.
    pub hausdorff_tol: f64,
    /// Winding circuit radius, shrunk to half the distance to the nearest other traced curve.
    pub circuit_radius: f64,
    pub projection_seed: u64,
}

impl CertifyOptions {
    /// Tolerances for a link in a ball of radius `ball_radius` traced at `step`.
    pub fn for_ball(ball_radius: f64, step: f64) -> Self {
        Self { ball_radius, margin_tol: 1e-3, hausdorff_tol: 0.05 * ball_radius, circuit_radius: 2.0 * step, projection_seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopologyReport {
    pub certified: bool,
    pub curve_count: usize,
    pub closed_count: usize,
    /// Index of the traced curve matched to each target component.
    pub matched: Vec<Option<usize>>,
    pub linking_matrix: Vec<Vec<i64>>,
    pub target_linking_matrix: Vec<Vec<i64>>,
    pub windings: Vec<i64>,
    pub determinants: Vec<u64>,
    pub target_determinants: Vec<u64>,
    pub min_margin: f64,
    pub hausdorff_to_target: f64,
    pub extra_curves: Vec<usize>,
    pub diagnostics: Vec<String>,
}

impl TopologyReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("certified          {}\n", self.certified));
        out.push_str(&format!("curves (closed)    {} ({})\n", self.curve_count, self.closed_count));
        out.push_str(&format!("min margin         {:.3e}\n", self.min_margin));
        out.push_str(&format!("hausdorff          {:.3e}\n", self.hausdorff_to_target));
        out.push_str("component  curve  winding  det  target_det\n");
        for (k, m) in self.matched.iter().enumerate() {
            let curve = m.map_or("-".to_string(), |i| i.to_string());
            let winding = self.windings.get(k).map_or("-".to_string(), |w| w.to_string());
            let det = self.determinants.get(k).map_or("-".to_string(), |d| d.to_string());
            out.push_str(&format!("{k:>9}  {curve:>5}  {winding:>7}  {det:>3}  {:>10}\n", self.target_determinants[k]));
        }
        out.push_str(&format!("linking            {:?}\n", self.linking_matrix));
        out.push_str(&format!("target linking     {:?}\n", self.target_linking_matrix));
        for d in &self.diagnostics {
            out.push_str(&format!("note: {d}\n"));
        }
        out
    }
}

/// Whether `found` equals `target` after flipping the orientation of some components.
fn linking_matches(found: &[Vec<i64>], target: &[Vec<i64>]) -> bool {
    let m = target.len();
    if m > 20 {
        return false;
    }
    (0..1u32 << m).any(|mask| {
        let sign = |i: usize| if mask >> i & 1 == 1 { -1 } else { 1 };
        (0..m).all(|i| (0..m).all(|j| i == j || sign(i) * sign(j) * found[i][j] == target[i][j]))
    })
}

/// Compares the traced nodal curves of `field` with the target link components.
///
/// Each target component is matched to the closed curve nearest in Hausdorff
/// distance. The matched curves must be transversal, link as the target does
/// up to orientations, carry unit phase winding, and have the target knot
/// determinants. Unmatched curves are listed as extras.
pub fn certify<F: Field + ?Sized>(
    field: &F,
    curves: &[NodalCurve],
    target: &[Vec<Point>],
    opts: &CertifyOptions,
) -> TopologyReport {
    let mut diagnostics = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(opts.projection_seed);
    let target_curves: Vec<NodalCurve> = target.iter().map(|c| NodalCurve::new(c.clone(), true, f64::INFINITY)).collect();
    let m = target.len();

    let pairwise = |cs: &[&NodalCurve], diagnostics: &mut Vec<String>, label: &str| -> Vec<Vec<i64>> {
        let mut lk = vec![vec![0i64; cs.len()]; cs.len()];
        for i in 0..cs.len() {
            for j in i + 1..cs.len() {
                match linking_number(cs[i], cs[j]) {
                    Ok(v) => {
                        lk[i][j] = v;
                        lk[j][i] = v;
                    }
                    Err(e) => diagnostics.push(format!("{label} linking ({i},{j}): {e}")),
                }
            }
        }
        lk
    };
    let target_refs: Vec<&NodalCurve> = target_curves.iter().collect();
    let target_linking_matrix = pairwise(&target_refs, &mut diagnostics, "target");
    let target_determinants: Vec<u64> = target_curves
        .iter()
        .map(|c| knot_determinant(c, &mut rng).unwrap_or_else(|e| {
            diagnostics.push(format!("target determinant: {e}"));
            0
        }))
        .collect();

    // greedy matching by ascending Hausdorff distance
    let closed: Vec<usize> = (0..curves.len()).filter(|&i| curves[i].closed).collect();
    let mut costs = Vec::new();
    for (k, t) in target.iter().enumerate() {
        for &i in &closed {
            costs.push((hausdorff(&curves[i].points, t), k, i));
        }
    }
    costs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut matched = vec![None; m];
    let mut used = vec![false; curves.len()];
    let mut worst = 0.0f64;
    for (cost, k, i) in costs {
        if matched[k].is_none() && !used[i] && cost <= opts.hausdorff_tol {
            matched[k] = Some(i);
            used[i] = true;
            worst = worst.max(cost);
        }
    }
    for (k, slot) in matched.iter().enumerate() {
        if slot.is_none() {
            diagnostics.push(format!("target component {k} has no closed curve within {:.3e}", opts.hausdorff_tol));
        }
    }
    let extra_curves: Vec<usize> = (0..curves.len()).filter(|&i| !used[i]).collect();
    if !extra_curves.is_empty() {
        diagnostics.push(format!("{} extra nodal curve(s) not matched to the target", extra_curves.len()));
    }

    let all_matched = matched.iter().all(Option::is_some);
    let mut linking_matrix = Vec::new();
    let mut windings = Vec::new();
    let mut determinants = Vec::new();
    let mut min_margin = f64::INFINITY;
    let mut hausdorff_to_target = f64::INFINITY;
    let mut ok = all_matched;
    if all_matched {
        let chosen: Vec<&NodalCurve> = matched.iter().map(|i| &curves[i.unwrap()]).collect();
        let before = diagnostics.len();
        linking_matrix = pairwise(&chosen, &mut diagnostics, "traced");
        ok &= diagnostics.len() == before;
        if !linking_matches(&linking_matrix, &target_linking_matrix) {
            diagnostics.push("linking matrix differs from target".into());
            ok = false;
        }
        for (k, c) in chosen.iter().enumerate() {
            min_margin = min_margin.min(c.min_margin);
            // circuits must not enclose a neighbouring nodal line
            let own = matched[k].unwrap();
            let clearance = (0..curves.len())
                .filter(|&i| i != own)
                .map(|i| min_distance(&c.points, &curves[i].points))
                .fold(f64::INFINITY, f64::min);
            let radius = opts.circuit_radius.min(0.5 * clearance);
            match phase_winding(field, c, radius) {
                Ok(w) if w[0].abs() == 1 => windings.push(w[0]),
                Ok(w) => {
                    diagnostics.push(format!("component {k} winding {}", w[0]));
                    windings.push(w[0]);
                    ok = false;
                }
                Err(e) => {
                    diagnostics.push(format!("component {k} winding: {e}"));
                    ok = false;
                }
            }
            match knot_determinant(c, &mut rng) {
                Ok(d) => {
                    if d != target_determinants[k] {
                        diagnostics.push(format!("component {k} determinant {d} != {}", target_determinants[k]));
                        ok = false;
                    }
                    determinants.push(d);
                }
                Err(e) => {
                    diagnostics.push(format!("component {k} determinant: {e}"));
                    ok = false;
                }
            }
            let outside = c.points.iter().any(|p| p.norm() >= opts.ball_radius);
            if outside {
                diagnostics.push(format!("component {k} leaves the ball of radius {}", opts.ball_radius));
                ok = false;
            }
        }
        if min_margin <= opts.margin_tol {
            diagnostics.push(format!("min margin {min_margin:.3e} <= {:.1e}", opts.margin_tol));
            ok = false;
        }
        let traced: Vec<Point> = chosen.iter().flat_map(|c| c.points.iter().copied()).collect();
        let wanted: Vec<Point> = target.iter().flatten().copied().collect();
        hausdorff_to_target = hausdorff(&traced, &wanted);
    }

    TopologyReport {
        certified: ok,
        curve_count: curves.len(),
        closed_count: closed.len(),
        matched,
        linking_matrix,
        target_linking_matrix,
        windings,
        determinants,
        target_determinants,
        min_margin,
        hausdorff_to_target,
        extra_curves,
        diagnostics,
    }
}
