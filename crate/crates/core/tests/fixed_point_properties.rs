use std::sync::Arc;

use pmc_core::fixed_point::{apply_t, continuation_sweep, solve_pmc, solve_pmc_from, IterationConfig, Status};
use pmc_core::grid::{Domain, DomainSpec, GridField};
use pmc_core::norms::derive_q;
use pmc_core::prescription::Prescription;

fn cfg(tol: f64) -> IterationConfig {
    let mut c = IterationConfig::new(derive_q(2, 2.0).unwrap());
    c.tol = tol;
    c.trust_radius = 10.0;
    c
}

fn cap_disc(nodes: usize) -> (Arc<Domain>, GridField) {
    let d = Domain::build(DomainSpec::Disc { center: [0.0, 0.0], radius: 0.5, nodes }).unwrap();
    let exact = GridField::from_fn(&d, "cap", |x| -(4.0 - x[0] * x[0] - x[1] * x[1]).sqrt()).unwrap();
    (d, exact)
}

fn scherk(x: &[f64]) -> f64 {
    (x[0].cos() / x[1].cos()).ln()
}

#[test]
fn cap_converges_at_second_order_and_is_a_fixed_point() {
    let mut errs = Vec::new();
    for n in [17, 33] {
        let (_, exact) = cap_disc(n);
        let c = cfg(1e-10);
        let p = Prescription::constant(2, 1.0);
        let (u, rep) = solve_pmc(None, &p, &exact, &c).unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert!(rep.boundary_error <= 1e-12);
        errs.push(u.sub(&exact).unwrap().max_abs());
        let (tu, _) = apply_t(&u, None, &p, &exact).unwrap();
        assert!(tu.sub(&u).unwrap().max_abs() < 10.0 * c.tol);
    }
    let r = errs[0] / errs[1];
    assert!((3.3..=4.7).contains(&r), "ratio {r} from {errs:?}");
}

#[test]
fn constant_curvature_sign_flip_mirrors_solution() {
    let (_, exact) = cap_disc(17);
    let c = cfg(1e-10);
    let (u, _) = solve_pmc(None, &Prescription::constant(2, 1.0), &exact, &c).unwrap();
    let (m, _) = solve_pmc(None, &Prescription::constant(2, -1.0), &exact.scale(-1.0).unwrap(), &c).unwrap();
    assert!(u.add(&m).unwrap().max_abs() < 1e-9);
}

#[test]
fn damping_does_not_move_the_fixed_point() {
    let d = Domain::build(DomainSpec::unit_square(17)).unwrap();
    let phi = GridField::from_fn(&d, "phi", |x| 0.2 * x[0] * x[1]).unwrap();
    let p = Prescription::vertical_gaussian(2, 0.8);
    let mut a = cfg(1e-9);
    a.damping = 0.8;
    let mut b = a.clone();
    b.damping = 0.4;
    let (ua, ra) = solve_pmc(None, &p, &phi, &a).unwrap();
    let (ub, rb) = solve_pmc(None, &p, &phi, &b).unwrap();
    assert_eq!(ra.status, Status::Converged);
    assert_eq!(rb.status, Status::Converged);
    assert!(rb.iterations.len() > ra.iterations.len());
    assert!(ua.sub(&ub).unwrap().max_abs() < 10.0 * a.tol);
}

#[test]
fn monotone_prescription_has_unique_fixed_point() {
    let d = Domain::build(DomainSpec::unit_square(17)).unwrap();
    let phi = GridField::from_fn(&d, "phi", |x| x[0] - 0.5 * x[1]).unwrap();
    let p = Prescription::monotone_tanh(2, 1.0);
    assert!(p.monotone);
    let c = cfg(1e-9);
    let bump = GridField::from_fn(&d, "b", |x| 0.1 * (3.0 * x[0]).sin() * (5.0 * x[1]).cos()).unwrap();
    let (a, ra) = solve_pmc(None, &p, &phi, &c).unwrap();
    let (b, rb) = solve_pmc_from(None, &p, &phi, &c, &phi.add(&bump).unwrap(), None).unwrap();
    assert!(ra.status.reached_fixed_point() && rb.status.reached_fixed_point());
    assert!(a.sub(&b).unwrap().max_abs() < 10.0 * c.tol);
}

#[test]
fn minimal_base_is_its_own_solution() {
    let d = Domain::build(DomainSpec::square(1.2, 33)).unwrap();
    let h = GridField::from_fn(&d, "h", scherk).unwrap();
    let zero = GridField::zeros(&d, "phi");
    let (t0, _) = apply_t(&zero, Some(&h), &Prescription::zero(2), &zero).unwrap();
    assert!(t0.max_abs() < 1e-12);
    let (u, rep) = solve_pmc(Some(&h), &Prescription::zero(2), &zero, &cfg(1e-9)).unwrap();
    assert_eq!(rep.status, Status::Converged);
    assert!(u.sub(&h).unwrap().max_abs() < 1e-12);
    assert!(rep.boundary_error <= 1e-12);
}

#[test]
fn small_gaussian_data_gives_small_monotone_response() {
    let d = Domain::build(DomainSpec::square(1.0, 17)).unwrap();
    let h = GridField::from_fn(&d, "h", scherk).unwrap();
    let zero = GridField::zeros(&d, "phi");
    let mut last = 0.0;
    for s in [0.01, 0.02, 0.04] {
        let (u, rep) = solve_pmc(Some(&h), &Prescription::vertical_gaussian(2, s), &zero, &cfg(1e-9)).unwrap();
        assert_eq!(rep.status, Status::Converged);
        let size = u.sub(&h).unwrap().max_abs();
        assert!(size > last, "{size} after {last}");
        assert!(size < 0.1);
        last = size;
    }
}

#[test]
fn continuation_properties() {
    let d = Domain::build(DomainSpec::square(1.0, 17)).unwrap();
    let h = GridField::from_fn(&d, "h", scherk).unwrap();
    let zero = GridField::zeros(&d, "phi");
    let fam = |s: f64| Ok(Prescription::vertical_gaussian(2, s));
    let s_values = [0.0, 0.1, 0.3, 0.6, 1.2, 2.4];
    let mut c = cfg(1e-8);
    c.max_iters = 60;

    let (warm, _) = continuation_sweep(Some(&h), &fam, &zero, &c, &s_values, true).unwrap();
    let (cold, _) = continuation_sweep(Some(&h), &fam, &zero, &c, &s_values, false).unwrap();
    assert_eq!(warm.entries[0].status, Some(Status::Converged));
    assert_eq!(warm.entries[0].iterations, 1);
    for (w, k) in warm.entries.iter().zip(&cold.entries) {
        if k.status == Some(Status::Converged) {
            assert_eq!(w.status, Some(Status::Converged), "s = {}", w.s);
        }
    }

    let mut tight = c.clone();
    tight.trust_radius = 1.0;
    let (small, _) = continuation_sweep(Some(&h), &fam, &zero, &tight, &s_values, true).unwrap();
    let big = warm.max_converged_s.unwrap();
    assert!(small.max_converged_s.unwrap_or(0.0) <= big);
}
