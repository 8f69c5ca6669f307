use coulomb_links::asymptotics::{difference_equation_residual, rate_fit, reports_to_csv, sup_error};

const N_LIST: [usize; 8] = [20, 30, 40, 60, 80, 120, 160, 200];

#[test]
fn sup_error_decays_like_inverse_square() {
    for l in 0..=3 {
        let rep = rate_fit(l, &N_LIST, (0.0, 5.0)).unwrap();
        println!("l={l} slope={:.4} errors={:?}", rep.fitted_slope, rep.c0_errors);
        assert!((-2.3..=-1.7).contains(&rep.fitted_slope), "l={l} slope {}", rep.fitted_slope);
        for w in rep.c0_errors.windows(2).skip(2) {
            assert!(w[1] < w[0]);
        }
    }
}

#[test]
fn slope_from_doublings() {
    let rep = rate_fit(0, &[20, 40, 80, 160, 200], (0.0, 5.0)).unwrap();
    assert!((rep.fitted_slope + 2.0).abs() < 0.3, "{}", rep.fitted_slope);
    let csv = reports_to_csv(&[rep]);
    assert_eq!(csv.lines().count(), 6);
}

#[test]
fn c1_error_halves_per_doubling() {
    for l in 0..=3 {
        let errs: Vec<f64> = [25, 50, 100, 200].iter().map(|&n| sup_error(l, n, (0.5, 5.0), 1000).unwrap().1).collect();
        println!("l={l} c1={errs:?}");
        for w in errs.windows(2) {
            assert!(w[1] <= w[0] / 2.0 * 1.3, "l={l} {errs:?}");
        }
    }
}

#[test]
fn difference_obeys_the_inhomogeneous_equation() {
    for l in 0..=3 {
        for n in [25, 50, 100, 200] {
            for k in 0..=45 {
                let r = 0.5 + 0.1 * k as f64;
                let res = difference_equation_residual(l, n, r).unwrap();
                assert!(res.abs() < 1e-6, "l={l} n={n} r={r} residual {res:e}");
            }
        }
    }
}
