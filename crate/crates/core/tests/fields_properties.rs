use coulomb_links::fields::{mode_count, Basis, ModeExpansion, Point};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_expansion(rng: &mut ChaCha8Rng, basis: Basis, n: usize) -> ModeExpansion {
    let coeffs = (0..mode_count(n))
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    ModeExpansion::new(basis, n, coeffs).unwrap()
}

fn random_point(rng: &mut ChaCha8Rng, rmin: f64, rmax: f64) -> Point {
    let r = rng.gen_range(rmin..rmax);
    let z: f64 = rng.gen_range(-1.0..1.0);
    let phi = rng.gen_range(0.0..std::f64::consts::TAU);
    let s = (1.0 - z * z).sqrt();
    Point::new(r * s * phi.cos(), r * s * phi.sin(), r * z)
}

fn five_point_gradient(e: &ModeExpansion, p: &Point, h: f64) -> [Complex64; 3] {
    let mut out = [Complex64::new(0.0, 0.0); 3];
    for (axis, slot) in out.iter_mut().enumerate() {
        let mut d = Point::zeros();
        d[axis] = h;
        *slot = (e.eval(&(p - 2.0 * d)) - 8.0 * e.eval(&(p - d)) + 8.0 * e.eval(&(p + d)) - e.eval(&(p + 2.0 * d)))
            / (12.0 * h);
    }
    out
}

#[test]
fn analytic_gradient_matches_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..100 {
        let degree = rng.gen_range(1..=8);
        let basis = if case % 2 == 0 { Basis::ZeroEnergy } else { Basis::Bound(rng.gen_range(degree + 1..60)) };
        let e = random_expansion(&mut rng, basis, degree);
        let p = random_point(&mut rng, 0.1, 2.0);
        let g = e.eval_with_grad(&p).unwrap();
        let fd = five_point_gradient(&e, &p, 1e-5);
        let norm = g.gradient.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        let err = (0..3).map(|i| (g.gradient[i] - fd[i]).norm_sqr()).sum::<f64>().sqrt();
        assert!(err < 1e-6 * norm, "case {case}: basis {basis} N={degree} err={err:e} norm={norm:e}");
        assert!((g.value - e.eval(&p)).norm() <= 1e-14 * g.value.norm().max(1e-300));
    }
}

#[test]
fn conjugation_conjugates_value_and_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let e = random_expansion(&mut rng, Basis::Bound(12), 6);
    let c = e.conj();
    let p = Point::new(0.4, 0.1, -0.3);
    let a = e.eval_with_grad(&p).unwrap();
    let b = c.eval_with_grad(&p).unwrap();
    assert!((a.value.conj() - b.value).norm() < 1e-14);
    for i in 0..3 {
        assert!((a.gradient[i].conj() - b.gradient[i]).norm() < 1e-13);
    }
}

#[test]
fn pde_residuals_are_small_in_both_bases() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for basis_kind in 0..2 {
        for _ in 0..20 {
            let degree = rng.gen_range(1..=6);
            let basis = if basis_kind == 0 { Basis::ZeroEnergy } else { Basis::Bound(rng.gen_range(degree + 1..30)) };
            let e = random_expansion(&mut rng, basis, degree);
            for _ in 0..10 {
                let p = random_point(&mut rng, 0.1, 2.0);
                // field scale: max |ψ| over the sphere through p
                let r = p.norm();
                let mut scale: f64 = 0.0;
                for k in 0..200 {
                    let q = random_point(&mut ChaCha8Rng::seed_from_u64(k), r, r * (1.0 + 1e-12));
                    scale = scale.max(e.eval(&q).norm());
                }
                let res = e.pde_residual(&p).unwrap();
                assert!(res < 1e-4 * scale, "basis {basis}: residual {res:e} scale {scale:e}");
            }
        }
    }
}

#[test]
fn bound_three_anchor_point() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let e = random_expansion(&mut rng, Basis::Bound(3), 2);
    let p = Point::new(1.0, 0.5, -0.2);
    let scale = e.eval(&p).norm().max(e.eval_with_grad(&p).unwrap().gradient.iter().map(|c| c.norm()).fold(0.0, f64::max));
    assert!(e.pde_residual(&p).unwrap() < 1e-4 * scale);
    let z = random_expansion(&mut rng, Basis::ZeroEnergy, 2);
    let scale = z.eval(&p).norm().max(z.eval_with_grad(&p).unwrap().gradient.iter().map(|c| c.norm()).fold(0.0, f64::max));
    assert!(z.pde_residual(&p).unwrap() < 1e-4 * scale);
}

#[test]
fn linearity_at_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let e1 = random_expansion(&mut rng, Basis::ZeroEnergy, 7);
    let e2 = random_expansion(&mut rng, Basis::ZeroEnergy, 7);
    let a = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let b = Complex64::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
    let sum = e1.combine(a, &e2, b).unwrap();
    for _ in 0..100 {
        let p = random_point(&mut rng, 0.0, 3.0);
        let lhs = sum.eval(&p);
        let rhs = a * e1.eval(&p) + b * e2.eval(&p);
        let scale = (a * e1.eval(&p)).norm() + (b * e2.eval(&p)).norm();
        assert!((lhs - rhs).norm() <= 1e-12 * scale.max(1e-300));
    }
}

#[test]
fn promotion_converges_on_the_annulus() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let phi = random_expansion(&mut rng, Basis::ZeroEnergy, 10);
    let points: Vec<Point> = (0..400).map(|_| random_point(&mut rng, 0.1, 0.44)).collect();
    let distance = |n: usize| {
        let psi = phi.promote(n).unwrap();
        points
            .iter()
            .map(|p| {
                let a = psi.eval_with_grad(p).unwrap();
                let b = phi.eval_with_grad(p).unwrap();
                let dg = (0..3).map(|i| (a.gradient[i] - b.gradient[i]).norm_sqr()).sum::<f64>().sqrt();
                (a.value - b.value).norm() + dg
            })
            .fold(0.0, f64::max)
    };
    let d: Vec<f64> = [50, 100, 200].iter().map(|&n| distance(n)).collect();
    assert!(d[0] > d[1] && d[1] > d[2], "{d:?}");
    for w in d.windows(2) {
        assert!(w[0] / w[1] >= 2.0 / 1.4, "{d:?}");
    }
}

proptest! {
    #[test]
    fn scaling_is_linear(re in -3.0f64..3.0, im in -3.0f64..3.0, seed in 0u64..1000, x in -1.0f64..1.0, y in -1.0f64..1.0, z in -1.0f64..1.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = random_expansion(&mut rng, Basis::ZeroEnergy, 4);
        let alpha = Complex64::new(re, im);
        let p = Point::new(x, y, z);
        let lhs = e.scaled(alpha).eval(&p);
        let rhs = alpha * e.eval(&p);
        prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
    }

    #[test]
    fn json_round_trip(seed in 0u64..10_000, degree in 0usize..6, bound in proptest::bool::ANY) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let basis = if bound { Basis::Bound(degree + 1 + (seed % 40) as usize) } else { Basis::ZeroEnergy };
        let e = random_expansion(&mut rng, basis, degree).scaled(Complex64::new(rng.gen_range(-1e6..1e6), rng.gen_range(-1e-6..1e-6)));
        let back = ModeExpansion::from_json(&e.to_json()).unwrap();
        prop_assert_eq!(back, e);
    }
}
