//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::f64::consts::{PI, TAU};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use coulomb_links::asymptotics::{rate_fit, sup_error};
use coulomb_links::fields::{mode_count, Basis, ModeExpansion, Point};
use coulomb_links::greenbound::{critical_radius, hardy_check, lowest_radial_eigenvalue, Profile};
use coulomb_links::linkforge::{scan_link_eigenfunction, BuildOutcome, LinkSpec, PipelineConfig};
use coulomb_links::nodaltrace::{trace_all, NodalCurve};
use coulomb_links::specfun::{radial_bound, sph_harm, HarmonicIndex, RadialModeIndex};
use coulomb_links::topology::{certify, knot_determinant, linking_number, phase_winding};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_expansion(rng: &mut ChaCha8Rng, basis: Basis, n: usize) -> ModeExpansion {
    let coeffs = (0..mode_count(n)).map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    ModeExpansion::new(basis, n, coeffs).unwrap()
}

fn random_direction(rng: &mut ChaCha8Rng) -> Point {
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi = rng.gen_range(0.0..TAU);
    let s = (1.0 - z * z).sqrt();
    Point::new(s * phi.cos(), s * phi.sin(), z)
}

fn random_point(rng: &mut ChaCha8Rng, rmin: f64, rmax: f64) -> Point {
    random_direction(rng) * rng.gen_range(rmin..rmax)
}

fn min_distance(a: &[Point], b: &[Point]) -> f64 {
    a.iter().flat_map(|p| b.iter().map(move |q| (p - q).norm())).fold(f64::INFINITY, f64::min)
}

/// Windings at every sampled circuit of each matched curve, with the circuit
/// radius capped at half the distance to any other traced curve.
fn matched_windings(out: &BuildOutcome, radius_factor: f64, cfg: &PipelineConfig, spec: &LinkSpec) -> Vec<Vec<i64>> {
    let target = spec.components(cfg.target_samples * spec.component_count()).unwrap();
    let step = cfg.trace_config(spec, &target).step;
    let base = cfg.certify_options(spec, step).circuit_radius;
    out.report
        .matched
        .iter()
        .map(|m| {
            let own = m.unwrap();
            let clearance = (0..out.curves.len())
                .filter(|&i| i != own)
                .map(|i| min_distance(&out.curves[own].points, &out.curves[i].points))
                .fold(f64::INFINITY, f64::min);
            let radius = radius_factor * base.min(0.5 * clearance);
            phase_winding(&out.eigenfunction, &out.curves[own], radius).unwrap()
        })
        .collect()
}

fn criterion_1() -> Check {
    let worst = (1..=50)
        .map(|n| (radial_bound(RadialModeIndex::new(n, 0).unwrap(), 0.0).unwrap() - 0.5).abs())
        .fold(0.0, f64::max);
    ensure(worst < 1e-12, format!("max |f_n0(0) - 1/2| = {worst:.2e}"))
}

fn criterion_2() -> Check {
    let n_list = [20, 30, 40, 60, 80, 100, 120, 150, 200];
    let mut slopes = Vec::new();
    for l in 0..=3 {
        slopes.push(rate_fit(l, &n_list, (0.0, 5.0)).map_err(|e| e.to_string())?.fitted_slope);
    }
    let ok = slopes.iter().all(|s| (-2.3..=-1.7).contains(s));
    ensure(ok, format!("slopes l=0..3: {}", slopes.iter().map(|s| format!("{s:.3}")).collect::<Vec<_>>().join(", ")))
}

fn criterion_3() -> Check {
    let mut worst_ratio = f64::INFINITY;
    for l in 0..=3 {
        let errs: Vec<f64> = [25, 50, 100, 200].iter().map(|&n| sup_error(l, n, (0.5, 5.0), 1000).unwrap().1).collect();
        for w in errs.windows(2) {
            worst_ratio = worst_ratio.min(w[0] / w[1]);
        }
    }
    ensure(worst_ratio >= 1.4, format!("smallest C1 reduction per doubling = {worst_ratio:.3}"))
}

fn criterion_4() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst = 0.0f64;
    for kind in 0..2 {
        for _ in 0..20 {
            let degree = rng.gen_range(1..=6);
            let basis = if kind == 0 { Basis::ZeroEnergy } else { Basis::Bound(rng.gen_range(degree + 1..40)) };
            let e = random_expansion(&mut rng, basis, degree);
            for _ in 0..10 {
                let p = random_point(&mut rng, 0.1, 2.0);
                let r = p.norm();
                let scale = (0..256).map(|_| e.eval(&(random_direction(&mut rng) * r)).norm()).fold(0.0, f64::max);
                worst = worst.max(e.pde_residual(&p).map_err(|e| e.to_string())? / scale);
            }
        }
    }
    ensure(worst < 1e-4, format!("max relative residual = {worst:.2e}"))
}

fn bessel_j1(x: f64) -> f64 {
    let mut term = x / 2.0;
    let mut sum = term;
    for k in 1..60 {
        term *= -(x * x / 4.0) / (k as f64 * (k + 1) as f64);
        sum += term;
    }
    sum
}

fn criterion_5() -> Check {
    let (mut a, mut b) = (3.0, 4.5);
    for _ in 0..100 {
        let m = 0.5 * (a + b);
        if bessel_j1(a) * bessel_j1(m) <= 0.0 {
            b = m;
        } else {
            a = m;
        }
    }
    let oracle = (0.5 * (a + b)).powi(2) / 8.0;
    let lambda0 = lowest_radial_eigenvalue(0.44311346).map_err(|e| e.to_string())?;
    let rc = critical_radius(1.5, 2.5).map_err(|e| e.to_string())?;
    let hardy = hardy_check(1.0, &Profile::standard()).map_err(|e| e.to_string())?;
    let ok = lambda0 > 0.0 && (rc - 1.8352).abs() <= 1e-3 && (rc - oracle).abs() <= 1e-3 && hardy <= 4.0;
    ensure(ok, format!("lambda(R0) = {lambda0:.4}, critical radius = {rc:.6}, j11^2/8 = {oracle:.6}, max Hardy ratio = {hardy:.4}"))
}

fn criterion_6(out: &BuildOutcome, spec: &LinkSpec, cfg: &PipelineConfig) -> Check {
    let r = &out.report;
    let lk = &r.linking_matrix;
    let windings = matched_windings(out, 1.0, cfg, spec);
    let ok = out.certified()
        && out.fit.n_used <= 15
        && out.n <= 200
        && r.closed_count == 2
        && lk.len() == 2
        && lk[0][0] == 0
        && lk[1][1] == 0
        && lk[0][1].abs() == 1
        && lk[0][1] == lk[1][0]
        && windings.iter().flatten().all(|w| w.abs() == 1)
        && r.min_margin > 1e-3
        && r.hausdorff_to_target < 0.05 * spec.ball_radius;
    ensure(
        ok,
        format!(
            "N = {}, n = {}, closed curves = {}, linking = {:?}, windings = {:?}, margin = {:.3e}, Hausdorff = {:.3e}",
            out.fit.n_used, out.n, r.closed_count, lk, windings, r.min_margin, r.hausdorff_to_target
        ),
    )
}

fn single_component(out: &BuildOutcome, det: u64, spec: &LinkSpec, cfg: &PipelineConfig) -> Check {
    let r = &out.report;
    let windings = matched_windings(out, 1.0, cfg, spec);
    let ok = out.certified()
        && r.matched.len() == 1
        && out.curves[r.matched[0].unwrap()].closed
        && r.determinants == vec![det]
        && windings[0].iter().all(|w| w.abs() == 1);
    ensure(
        ok,
        format!(
            "smallest certifying N = {}, n = {}, determinant = {:?}, windings = {:?}, curves (closed) = {} ({})",
            out.fit.n_used, out.n, r.determinants, windings, r.curve_count, r.closed_count
        ),
    )
}

fn criterion_9(builds: &[(&str, &LinkSpec, &BuildOutcome)], cfg: &PipelineConfig) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut failures = Vec::new();
    for (name, spec, out) in builds {
        let target = spec.components(cfg.target_samples * spec.component_count()).unwrap();
        let trace_cfg = cfg.trace_config(spec, &target);
        for trial in 0..10 {
            let coeffs = out
                .eigenfunction
                .coefficients()
                .iter()
                .map(|c| c * (1.0 + Complex64::from_polar(1e-3, rng.gen_range(0.0..TAU))))
                .collect();
            let field = ModeExpansion::new(out.eigenfunction.basis(), out.eigenfunction.max_degree(), coeffs).unwrap();
            let curves = trace_all(&field, &trace_cfg).map_err(|e| e.to_string())?.curves;
            let r = certify(&field, &curves, &target, &cfg.certify_options(spec, trace_cfg.step));
            let same = r.certified
                && r.curve_count == out.report.curve_count
                && r.linking_matrix == out.report.linking_matrix
                && r.determinants == out.report.determinants;
            if !same {
                failures.push(format!("{name} trial {trial}"));
            }
        }
    }
    ensure(failures.is_empty(), format!("{} links x 10 perturbations, failures: {failures:?}", builds.len()))
}

fn five_point_gradient(e: &ModeExpansion, p: &Point, h: f64) -> [Complex64; 3] {
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mut d = Point::zeros();
        d[axis] = h;
        *slot = (e.eval(&(p - 2.0 * d)) - 8.0 * e.eval(&(p - d)) + 8.0 * e.eval(&(p + d)) - e.eval(&(p + 2.0 * d))) / (12.0 * h);
    }
    out
}

fn criterion_10() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut worst = 0.0f64;
    for case in 0..100 {
        let degree = rng.gen_range(1..=8);
        let basis = if case % 2 == 0 { Basis::ZeroEnergy } else { Basis::Bound(rng.gen_range(degree + 1..60)) };
        let e = random_expansion(&mut rng, basis, degree);
        let p = random_point(&mut rng, 0.1, 2.0);
        let g = e.eval_with_grad(&p).map_err(|e| e.to_string())?;
        let fd = five_point_gradient(&e, &p, 1e-5);
        let norm = g.gradient.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let err = (0..3).map(|i| (g.gradient[i] - fd[i]).norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(err / norm);
    }
    ensure(worst < 1e-6, format!("max relative gradient error = {worst:.2e}"))
}

/// Gauss-Legendre nodes and weights on [-1, 1] by Newton iteration.
fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| {
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, x);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            (x, 2.0 / ((1.0 - x * x) * dp * dp))
        })
        .collect()
}

fn gram_deviation(lmax: usize) -> f64 {
    let nodes = gauss_legendre(lmax + 2);
    let nphi = 2 * lmax + 3;
    let index: Vec<HarmonicIndex> =
        (0..=lmax).flat_map(|l| (-(l as i64)..=l as i64).map(move |m| HarmonicIndex::new(l, m).unwrap())).collect();
    let k = index.len();
    let mut gram = vec![Complex64::new(0.0, 0.0); k * k];
    for &(x, w) in &nodes {
        let theta = x.acos();
        for j in 0..nphi {
            let phi = TAU * j as f64 / nphi as f64;
            let vals: Vec<Complex64> = index.iter().map(|&h| sph_harm(h, theta, phi)).collect();
            let weight = w * TAU / nphi as f64;
            for a in 0..k {
                for b in 0..k {
                    gram[a * k + b] += vals[a].conj() * vals[b] * weight;
                }
            }
        }
    }
    (0..k * k)
        .map(|i| (gram[i] - if i / k == i % k { Complex64::new(1.0, 0.0) } else { Complex64::new(0.0, 0.0) }).norm())
        .fold(0.0, f64::max)
}

fn closed(f: impl Fn(f64) -> Point, n: usize) -> NodalCurve {
    NodalCurve::new((0..n).map(|i| f(TAU * i as f64 / n as f64)).collect(), true, 0.5)
}

fn criterion_11(hopf: (&LinkSpec, &BuildOutcome), trefoil: &BuildOutcome, cfg: &PipelineConfig) -> Check {
    let gram = gram_deviation(10);

    let mut linking_ok = true;
    for k in 1..4 {
        let kf = k as f64;
        let a = closed(|t| Point::new(2.0 * t.cos(), 2.0 * t.sin(), 0.0), 600);
        let b = closed(
            move |t| {
                let r = 2.0 + 0.7 * (kf * t).cos();
                Point::new(r * t.cos(), r * t.sin(), 0.7 * (kf * t).sin())
            },
            600,
        );
        let ab = linking_number(&a, &b).map_err(|e| e.to_string())?;
        linking_ok &= ab.abs() == k
            && ab == linking_number(&b, &a).unwrap()
            && linking_number(&a.reversed(), &b).unwrap() == -ab
            && linking_number(&a, &b.reversed()).unwrap() == -ab;
    }

    let (spec, out) = hopf;
    let w_full = matched_windings(out, 1.0, cfg, spec);
    let w_half = matched_windings(out, 0.5, cfg, spec);
    let w_quarter = matched_windings(out, 0.25, cfg, spec);
    let winding_ok = w_full == w_half && w_half == w_quarter && w_full.iter().flatten().all(|w| w.abs() == 1);

    let knot = &trefoil.curves[trefoil.report.matched[0].unwrap()];
    let synthetic = closed(
        |t| Point::new((2.0 + (3.0 * t).cos()) * (2.0 * t).cos(), (2.0 + (3.0 * t).cos()) * (2.0 * t).sin(), (3.0 * t).sin()),
        900,
    );
    let mut dets = Vec::new();
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(1100 + seed);
        dets.push((knot_determinant(knot, &mut rng).map_err(|e| e.to_string())?, knot_determinant(&synthetic, &mut rng).map_err(|e| e.to_string())?));
    }
    let det_ok = dets.iter().all(|&d| d == (3, 3));

    ensure(
        gram < 1e-10 && linking_ok && winding_ok && det_ok,
        format!(
            "Gram deviation = {gram:.2e}, linking symmetry/antisymmetry = {linking_ok}, winding radius independence = {winding_ok}, determinants over 10 projections = {det_ok}"
        ),
    )
}

fn run(label: &str, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = start.elapsed().as_secs_f64();
    match result {
        Ok(detail) => {
            println!("PASS  {label}: {detail} [{secs:.1}s]");
            true
        }
        Err(detail) => {
            println!("FAIL  {label}: {detail} [{secs:.1}s]");
            false
        }
    }
}

fn build(spec: &LinkSpec, cfg: &PipelineConfig) -> Option<BuildOutcome> {
    match scan_link_eigenfunction(spec, cfg) {
        Ok(out) => Some(out),
        Err(e) => {
            println!("build of {spec:?} failed: {e}");
            None
        }
    }
}

fn main() {
    let cfg = PipelineConfig::default();
    let hopf_spec = LinkSpec::torus(2, 2).unwrap();
    let trefoil_spec = LinkSpec::torus(2, 3).unwrap();
    let unknot_spec = LinkSpec::torus(1, 2).unwrap();

    let mut passed = Vec::new();
    passed.push(run("1 normalization f_n0(0) = 1/2", criterion_1));
    passed.push(run("2 asymptotic rate slope in [-2.3, -1.7]", criterion_2));
    passed.push(run("3 C1 convergence factor >= 1.4 per doubling", criterion_3));
    passed.push(run("4 PDE residuals < 1e-4 relative", criterion_4));
    passed.push(run("5 spectral bound and critical radius", criterion_5));

    let start = Instant::now();
    let hopf = build(&hopf_spec, &cfg);
    let trefoil = build(&trefoil_spec, &cfg);
    let unknot = build(&unknot_spec, &cfg);
    println!("      link builds took {:.1}s", start.elapsed().as_secs_f64());
    let missing = || Err::<String, String>("build failed".into());

    passed.push(run("6 Hopf link realization", || hopf.as_ref().map_or_else(missing, |o| criterion_6(o, &hopf_spec, &cfg))));
    passed.push(run("7 trefoil realization", || {
        trefoil.as_ref().map_or_else(missing, |o| single_component(o, 3, &trefoil_spec, &cfg))
    }));
    passed.push(run("8 unknot realization", || unknot.as_ref().map_or_else(missing, |o| single_component(o, 1, &unknot_spec, &cfg))));
    passed.push(run("9 structural stability under 1e-3 perturbations", || match (&hopf, &trefoil, &unknot) {
        (Some(h), Some(t), Some(u)) => {
            criterion_9(&[("Hopf", &hopf_spec, h), ("trefoil", &trefoil_spec, t), ("unknot", &unknot_spec, u)], &cfg)
        }
        _ => missing(),
    }));
    passed.push(run("10 gradient correctness", criterion_10));
    passed.push(run("11 invariant suite", || match (&hopf, &trefoil) {
        (Some(h), Some(t)) => criterion_11((&hopf_spec, h), t, &cfg),
        _ => missing(),
    }));

    let count = passed.iter().filter(|p| **p).count();
    println!("acceptance: {count}/{} criteria passed", passed.len());
    if count != passed.len() {
        std::process::exit(1);
    }
}
