use std::f64::consts::PI;
use std::sync::Arc;

use pmc_core::elliptic::{assemble, solve, solve_with, SolveOptions, SolverChoice};
use pmc_core::grid::{Domain, DomainSpec, GridField};
use pmc_core::norms::{holder_c1beta, random_lipschitz_field};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn square(n: usize) -> Arc<Domain> {
    Domain::build(DomainSpec::unit_square(n)).unwrap()
}

/// Random coefficient field with `‖v‖_{C^{1,1/2}} ≤ 1`.
fn coefficient_field(d: &Arc<Domain>, rng: &mut ChaCha8Rng) -> GridField {
    let v = random_lipschitz_field(d, 1.0, rng).unwrap();
    let n = holder_c1beta(&v, 0.5).unwrap();
    v.scale(rng.gen_range(0.2..0.95) / n).unwrap()
}

#[test]
fn poisson_manufactured_solution() {
    let errs: Vec<f64> = [17, 33, 65]
        .iter()
        .map(|&n| {
            let d = square(n);
            let z = GridField::zeros(&d, "0");
            let f = GridField::from_fn(&d, "f", |x| -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin()).unwrap();
            let exact = GridField::from_fn(&d, "w", |x| (PI * x[0]).sin() * (PI * x[1]).sin()).unwrap();
            let (w, _) = solve(&assemble(&z, None, &f, &z).unwrap(), 1e-12).unwrap();
            w.sub(&exact).unwrap().max_abs()
        })
        .collect();
    for w in errs.windows(2) {
        let r = w[0] / w[1];
        assert!((3.5..=4.5).contains(&r), "ratio {r} from {errs:?}");
    }
}

#[test]
fn maximum_principle_on_sign_clean_systems() {
    // With L elliptic, Lw = f ≥ 0 puts the maximum of w on the boundary and
    // f ≤ 0 the minimum.
    let d = square(21);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut clean = 0;
    for _ in 0..12 {
        let v = coefficient_field(&d, &mut rng);
        let (a, b) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..6.0));
        let f = GridField::from_fn(&d, "f", |x| a + (b * x[0] * x[1]).sin().powi(2)).unwrap();
        let phi = GridField::from_fn(&d, "phi", |x| (x[0] - x[1]).cos()).unwrap();
        let sys = assemble(&v, None, &f, &phi).unwrap();
        if !sys.meta.m_matrix() {
            continue;
        }
        clean += 1;
        let (w, _) = solve(&sys, 1e-12).unwrap();
        let bmax = d.boundary().iter().map(|&id| w.values()[id]).fold(f64::MIN, f64::max);
        let imax = d.interior().iter().map(|&id| w.values()[id]).fold(f64::MIN, f64::max);
        assert!(imax <= bmax + 1e-10, "{imax} > {bmax}");

        let neg = f.scale(-1.0).unwrap();
        let (w, _) = solve(&assemble(&v, None, &neg, &phi).unwrap(), 1e-12).unwrap();
        let bmin = d.boundary().iter().map(|&id| w.values()[id]).fold(f64::MAX, f64::min);
        let imin = d.interior().iter().map(|&id| w.values()[id]).fold(f64::MAX, f64::min);
        assert!(imin >= bmin - 1e-10, "{imin} < {bmin}");
    }
    assert!(clean >= 6, "only {clean} sign-clean systems");
}

#[test]
fn solution_independent_of_initial_guess() {
    let d = square(25);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let v = coefficient_field(&d, &mut rng);
    let f = GridField::from_fn(&d, "f", |x| x[0] - x[1] * x[1]).unwrap();
    let phi = GridField::from_fn(&d, "phi", |x| x[0] * x[1]).unwrap();
    let sys = assemble(&v, None, &f, &phi).unwrap();
    let guess = GridField::from_fn(&d, "g", |x| 10.0 * (7.0 * x[0]).sin()).unwrap();
    let opts = |g: Option<GridField>| SolveOptions {
        method: SolverChoice::Iterative,
        tol: 1e-12,
        initial_guess: g,
        ..Default::default()
    };
    let (a, _) = solve_with(&sys, &opts(None)).unwrap();
    let (b, _) = solve_with(&sys, &opts(Some(guess))).unwrap();
    assert!(a.sub(&b).unwrap().max_abs() < 1e-8);
}

#[test]
fn estimate_ratio_stable_under_refinement() {
    let mut worst = Vec::new();
    for n in [17, 33] {
        let d = square(n);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let mut m: f64 = 0.0;
        for _ in 0..6 {
            let (a, b, c) = (rng.gen_range(-0.6..0.6), rng.gen_range(-0.6..0.6), rng.gen_range(1.0..4.0));
            let v = GridField::from_fn(&d, "v", move |x| a * x[0] * x[1] + b * (x[0] - 0.5).powi(2)).unwrap();
            let f = GridField::from_fn(&d, "f", move |x| (c * x[0]).sin() + x[1]).unwrap();
            let phi = GridField::from_fn(&d, "phi", move |x| a * x[0] + (b * x[1]).exp()).unwrap();
            let (_, rep) = solve(&assemble(&v, None, &f, &phi).unwrap(), 1e-10).unwrap();
            assert!(rep.estimate_ratio.is_finite());
            m = m.max(rep.estimate_ratio);
        }
        worst.push(m);
    }
    assert!((worst[1] / worst[0] - 1.0).abs() < 0.2, "{worst:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn affine_data_reproduced(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -1.0..1.0f64, seed in 0u64..1000) {
        let d = square(13);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = coefficient_field(&d, &mut rng);
        let zero = GridField::zeros(&d, "f");
        let phi = GridField::from_fn(&d, "phi", |x| a * x[0] + b * x[1] + c).unwrap();
        let (w, _) = solve(&assemble(&v, None, &zero, &phi).unwrap(), 1e-12).unwrap();
        prop_assert!(w.sub(&phi).unwrap().max_abs() < 1e-10);
    }
}
