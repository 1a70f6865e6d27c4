//! Manufactured-solution convergence and algebraic properties of the
//! finite-difference operators.

use std::f64::consts::PI;
use std::sync::Arc;

use pmc_core::grid::{gradient, hessian, Domain, DomainSpec, GridField};
use proptest::prelude::*;

fn square(n: usize) -> Arc<Domain> {
    Domain::build(DomainSpec::unit_square(n)).unwrap()
}

fn max_err(field: &GridField, exact: impl Fn(&[f64]) -> f64) -> f64 {
    let d = field.domain();
    (0..d.node_count()).map(|id| (field.values()[id] - exact(d.pos(id))).abs()).fold(0.0, f64::max)
}

#[test]
fn gradient_of_sine_converges_at_second_order() {
    let errs: Vec<f64> = [33, 65, 129]
        .iter()
        .map(|&n| {
            let d = square(n);
            let u = GridField::from_fn(&d, "u", |x| (PI * x[0]).sin()).unwrap();
            max_err(&gradient(&u).unwrap()[0], |x| PI * (PI * x[0]).cos())
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.5..=4.5).contains(&ratio), "ratio {ratio} from {errs:?}");
    }
}

#[test]
fn mixed_derivative_converges_at_second_order() {
    let errs: Vec<f64> = [33, 65, 129]
        .iter()
        .map(|&n| {
            let d = square(n);
            let u = GridField::from_fn(&d, "u", |x| (PI * x[0]).sin() * (PI * x[1]).sin()).unwrap();
            let h = hessian(&u).unwrap();
            max_err(h.get(0, 1), |x| PI * PI * (PI * x[0]).cos() * (PI * x[1]).cos())
        })
        .collect();
    for w in errs.windows(2) {
        let ratio = w[0] / w[1];
        assert!((3.3..=4.7).contains(&ratio), "ratio {ratio} from {errs:?}");
    }
}

#[test]
fn exact_on_low_degree_polynomials() {
    let d = Domain::build(DomainSpec::Rectangle { x: [-0.5, 1.5], y: [0.25, 1.0], nx: 17, ny: 11 }).unwrap();
    let u = GridField::from_fn(&d, "u", |x| x[0] * x[1]).unwrap();
    let h = hessian(&u).unwrap();
    assert!(max_err(h.get(0, 1), |_| 1.0) < 1e-12);
    let u = GridField::from_fn(&d, "u", |x| x[0] * x[0] + 3.0 * x[1] * x[1]).unwrap();
    let h = hessian(&u).unwrap();
    assert!(max_err(h.get(0, 0), |_| 2.0) < 1e-11);
    assert!(max_err(h.get(1, 1), |_| 6.0) < 1e-11);
    assert!(max_err(h.get(0, 1), |_| 0.0) < 1e-11);
    assert!(std::ptr::eq(h.get(0, 1), h.get(1, 0)));
    let g = gradient(&u).unwrap();
    assert!(max_err(&g[0], |x| 2.0 * x[0]) < 1e-12);
    assert!(max_err(&g[1], |x| 6.0 * x[1]) < 1e-12);
}

#[test]
fn interval_second_derivative() {
    let d = Domain::build(DomainSpec::Interval { a: -1.0, b: 2.0, nodes: 31 }).unwrap();
    let u = GridField::from_fn(&d, "u", |x| 2.0 * x[0] * x[0] - x[0]).unwrap();
    let h = hessian(&u).unwrap();
    assert!(max_err(h.get(0, 0), |_| 4.0) < 1e-10);
}

#[test]
fn disc_boundary_fractions_in_range() {
    let spec = DomainSpec::disc_with_spacing([0.2, -0.1], 1.0, 0.1).unwrap();
    let d = Domain::build(spec).unwrap();
    for &id in d.interior() {
        for axis in 0..2 {
            for side in 0..2 {
                let f = d.boundary_frac(id, axis, side).expect("interior node without neighbor");
                assert!(f > 0.0 && f <= 1.0 + 1e-12, "{f}");
            }
        }
    }
}

fn trig_field(d: &Arc<Domain>, c: [f64; 4]) -> GridField {
    GridField::from_fn(d, "r", move |x| c[0] * (c[1] * x[0] + x[1]).sin() + c[2] * x[0] * x[1] * x[1] + c[3]).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn differentiation_is_linear(
        a in -3.0..3.0f64, b in -3.0..3.0f64,
        c1 in prop::array::uniform4(-2.0..2.0f64), c2 in prop::array::uniform4(-2.0..2.0f64),
    ) {
        let d = square(13);
        let (u, v) = (trig_field(&d, c1), trig_field(&d, c2));
        let comb = u.lincomb(a, &v, b).unwrap();
        let (gu, gv, gc) = (gradient(&u).unwrap(), gradient(&v).unwrap(), gradient(&comb).unwrap());
        let (hu, hv, hc) = (hessian(&u).unwrap(), hessian(&v).unwrap(), hessian(&comb).unwrap());
        for id in 0..d.node_count() {
            for k in 0..2 {
                let e = a * gu[k].values()[id] + b * gv[k].values()[id];
                prop_assert!((gc[k].values()[id] - e).abs() <= 1e-13 * (1.0 + e.abs()) * 100.0);
            }
            for (i, j) in [(0, 0), (0, 1), (1, 1)] {
                let e = a * hu.at(id, i, j) + b * hv.at(id, i, j);
                prop_assert!((hc.at(id, i, j) - e).abs() <= 1e-13 * (1.0 + e.abs()) * 1e3);
            }
        }
    }

    #[test]
    fn csv_round_trip(c in prop::array::uniform4(-5.0..5.0f64), disc in any::<bool>()) {
        let spec = if disc {
            DomainSpec::disc_with_spacing([0.1, 0.3], 0.7, 0.07).unwrap()
        } else {
            DomainSpec::Rectangle { x: [0.0, 2.0], y: [-1.0, 0.0], nx: 21, ny: 11 }
        };
        let d = Domain::build(spec).unwrap();
        let u = trig_field(&d, c);
        let mut buf = Vec::new();
        u.write_csv(&mut buf).unwrap();
        let back = GridField::read_csv(buf.as_slice()).unwrap();
        prop_assert_eq!(back.values(), u.values());
        prop_assert_eq!(back.domain().node_count(), d.node_count());
    }
}
