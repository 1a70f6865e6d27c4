//! Property suites behind `pmc verify`, and the measurement routines they
//! share with the acceptance tests.

use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use pmc_core::elliptic::{assemble, solve, solve_with, SolveOptions, SolverChoice};
use pmc_core::fixed_point::{apply_t, solve_pmc, solve_pmc_from, IterationConfig, Status};
use pmc_core::geometry::{b_term, coeff_matrix, frozen_operator, mean_curvature_div, mean_curvature_nondiv, unit_normal};
use pmc_core::grid::{gradient, Domain, DomainSpec, GridField};
use pmc_core::norms::{
    derive_q, graph_density, holder_c1beta, linf_norm, lq_norm, random_lipschitz_field, slab_w1p_norm,
    trace_lq_norm, unit_ball_volume, w1p_norm, w2q_norm, SlabFunction,
};
use pmc_core::prescription::Prescription;
use pmc_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SUITES: [&str; 5] = ["geometry", "norms", "linear", "trace", "fixedpoint"];

#[derive(Clone, Debug)]
pub struct Check {
    pub suite: &'static str,
    pub name: String,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

struct Collector {
    suite: &'static str,
    checks: Vec<Check>,
}

impl Collector {
    /// Runs `f`, recording a failed check if it errors.
    fn run(&mut self, name: &str, f: impl FnOnce() -> Result<(bool, String)>) {
        let start = Instant::now();
        let (passed, detail) = f().unwrap_or_else(|e| (false, format!("error: {e}")));
        self.checks.push(Check {
            suite: self.suite,
            name: name.to_string(),
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        });
    }
}

/// Runs a named suite (or `all`) on grids derived from `grid`; `None` for an
/// unknown suite name.
pub fn run_suite(name: &str, grid: usize, seed: u64) -> Option<Vec<Check>> {
    let names: Vec<&'static str> = match name {
        "all" => SUITES.to_vec(),
        other => vec![*SUITES.iter().find(|s| **s == other)?],
    };
    let mut out = Vec::new();
    for suite in names {
        let mut c = Collector { suite, checks: Vec::new() };
        match suite {
            "geometry" => geometry_suite(&mut c, grid, seed),
            "norms" => norms_suite(&mut c, grid, seed),
            "linear" => linear_suite_checks(&mut c, grid, seed),
            "trace" => trace_suite_checks(&mut c, grid, seed),
            _ => fixedpoint_suite(&mut c, grid),
        }
        out.extend(c.checks);
    }
    Some(out)
}

pub fn format_table(checks: &[Check]) -> String {
    let w = checks.iter().map(|c| c.suite.len() + c.name.len() + 1).max().unwrap_or(0);
    let mut s = String::new();
    for c in checks {
        let label = format!("{}/{}", c.suite, c.name);
        s.push_str(&format!(
            "{}  {label:<w$}  {:>7.2}s  {}\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.seconds,
            c.detail
        ));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    s.push_str(&format!("{} checks, {} failed\n", checks.len(), failed));
    s
}

/// Doubling refinement: `n, 2n−1, 4n−3, …` keeps the coarse nodes.
pub fn refine(n: usize, levels: usize) -> Vec<usize> {
    let mut v = vec![n];
    for _ in 1..levels {
        let last = *v.last().unwrap();
        v.push(2 * last - 1);
    }
    v
}

fn ratios(errs: &[f64]) -> Vec<f64> {
    errs.windows(2).map(|w| w[0] / w[1]).collect()
}

pub fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn in_range(r: &[f64], lo: f64, hi: f64) -> bool {
    r.iter().all(|x| (lo..=hi).contains(x))
}

// ------------------------------------------------------------------ geometry

#[derive(Clone, Copy, Debug)]
pub struct EllipticityResult {
    pub samples: usize,
    /// `max (λ|ξ|² − ξᵀAξ)` with `λ = (1+|z|²)^{-3/2}`.
    pub max_violation: f64,
    /// `max (ξᵀAξ − (1+|z|²)^{-1/2}|ξ|²)`, the upper eigenvalue bound.
    pub max_upper_violation: f64,
}

/// Samples `z` uniformly in the disc `|z| ≤ z_max` and `ξ ∈ [−1,1]²`.
pub fn ellipticity_check(samples: usize, z_max: f64, seed: u64) -> Result<EllipticityResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut low, mut high) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..samples {
        let r = z_max * rng.gen_range(0.0f64..=1.0).sqrt();
        let th = rng.gen_range(0.0..std::f64::consts::TAU);
        let z = [r * th.cos(), r * th.sin()];
        let xi = [rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0)];
        let a = coeff_matrix(&z)?;
        let q = 1.0 + r * r;
        let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
        let form = a.quadratic_form(&xi);
        low = low.max(q.powf(-1.5) * xi2 - form);
        high = high.max(form - q.powf(-0.5) * xi2);
    }
    Ok(EllipticityResult { samples, max_violation: low, max_upper_violation: high })
}

pub fn scherk(x: &[f64]) -> f64 {
    (x[0].cos() / x[1].cos()).ln()
}

/// Interior max of the divergence-form curvature of Scherk's surface on
/// `[−1.2, 1.2]²`, per grid.
pub fn scherk_residuals(grids: &[usize]) -> Result<Vec<f64>> {
    grids
        .iter()
        .map(|&n| {
            let d = Domain::build(DomainSpec::square(1.2, n))?;
            let u = GridField::from_fn(&d, "scherk", scherk)?;
            Ok(mean_curvature_div(&u)?.max_abs_on(d.interior()))
        })
        .collect()
}

fn geometry_suite(c: &mut Collector, grid: usize, seed: u64) {
    c.run("ellipticity", || {
        let r = ellipticity_check(10_000, 10.0, seed)?;
        let ok = r.max_violation <= 1e-12 && r.max_upper_violation <= 1e-12;
        Ok((ok, format!("{} samples, |z| ≤ 10, lower violation {:.2e}, upper {:.2e}", r.samples, r.max_violation, r.max_upper_violation)))
    });
    c.run("normal", || {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let mut worst: f64 = 0.0;
        let mut downward = true;
        for _ in 0..1000 {
            let z = [rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0)];
            let nu = unit_normal(&z);
            worst = worst.max((nu.iter().map(|x| x * x).sum::<f64>().sqrt() - 1.0).abs());
            downward &= nu[2] < 0.0;
        }
        Ok((worst < 1e-14 && downward, format!("max | |ν| − 1 | {worst:.1e}")))
    });
    c.run("scherk_order", || {
        let grids = refine(2 * grid - 1, 2);
        let res = scherk_residuals(&grids)?;
        let r = ratios(&res);
        Ok((in_range(&r, 3.3, 4.7), format!("grids {grids:?} residuals {} ratio {r:.3?}", sci(&res))))
    });
    c.run("div_nondiv_agreement", || {
        let grids = refine(grid, 2);
        let gaps = grids
            .iter()
            .map(|&n| {
                let d = Domain::build(DomainSpec::unit_square(n))?;
                let u = GridField::from_fn(&d, "u", |x| x[0].sin() * x[1].cos())?;
                Ok(mean_curvature_div(&u)?.sub(&mean_curvature_nondiv(&u)?)?.max_abs_on(d.interior()))
            })
            .collect::<Result<Vec<f64>>>()?;
        let r = ratios(&gaps);
        Ok((in_range(&r, 3.0, 5.0), format!("grids {grids:?} gaps {} ratio {r:.3?}", sci(&gaps))))
    });
    c.run("b_term_identity", || {
        // A(∇v+∇h)u_ij around Scherk equals the frozen operator plus the B term
        // plus the rescaled minimal-surface operator of h.
        let d = Domain::build(DomainSpec::square(1.0, grid))?;
        let h = GridField::from_fn(&d, "h", scherk)?;
        let v = GridField::from_fn(&d, "v", |x| 0.3 * (2.0 * x[0]).sin() * x[1] + 0.1 * x[0] * x[0])?;
        let u = v.add(&h)?;
        let lhs = mean_curvature_nondiv(&u)?;
        let av = frozen_operator(&v, Some(&h), &v)?;
        let b = b_term(&v, &h, &v)?;
        let mh = mean_curvature_nondiv(&h)?;
        let q = |f: &GridField| -> Result<Vec<f64>> {
            let g = gradient(f)?;
            Ok((0..d.node_count()).map(|id| 1.0 + g.iter().map(|c| c.values()[id].powi(2)).sum::<f64>()).collect())
        };
        let (qh, qu) = (q(&h)?, q(&u)?);
        let mut worst: f64 = 0.0;
        for &id in d.interior() {
            let rhs = av.values()[id] + b.values()[id] + (qh[id] / qu[id]).powf(1.5) * mh.values()[id];
            let scale = 1.0 + lhs.values()[id].abs() + av.values()[id].abs();
            worst = worst.max((lhs.values()[id] - rhs).abs() / scale);
        }
        Ok((worst < 1e-10, format!("max relative gap {worst:.2e}")))
    });
}

// --------------------------------------------------------------------- norms

fn norms_suite(c: &mut Collector, grid: usize, seed: u64) {
    c.run("derive_q", || {
        let s = derive_q(2, 2.0)?;
        let rejects = derive_q(2, 3.5).is_err() && derive_q(2, 1.5).is_err() && derive_q(1, 2.0).is_err();
        Ok((s.q == 4.0 && s.beta == 0.25 && rejects, format!("n=2 p=2 → q={} β={}; endpoints rejected: {rejects}", s.q, s.beta)))
    });
    c.run("homogeneity_triangle", || {
        let d = Domain::build(DomainSpec::unit_square(grid))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..10 {
            let u = random_lipschitz_field(&d, 2.0, &mut rng)?;
            let v = random_lipschitz_field(&d, 2.0, &mut rng)?;
            let k = rng.gen_range(-3.0..3.0);
            let norms: [&dyn Fn(&GridField) -> Result<f64>; 4] = [
                &|f| lq_norm(f, 4.0),
                &|f| Ok(linf_norm(f)),
                &|f| w1p_norm(f, 2.0),
                &|f| w2q_norm(f, 4.0),
            ];
            for n in norms {
                let (nu, nv) = (n(&u)?, n(&v)?);
                worst = worst.max(n(&u.add(&v)?)? - nu - nv);
                worst = worst.max((n(&u.scale(k)?)? - k.abs() * nu).abs() / (1.0 + nu));
            }
        }
        Ok((worst <= 1e-10, format!("worst defect {worst:.2e}")))
    });
    c.run("slab_gaussian", || {
        // ∫e^{-2t²} = ∫4t²e^{-2t²} = √(π/2) on every fibre.
        let d = Domain::build(DomainSpec::unit_square(grid))?;
        let params = derive_q(2, 2.0)?;
        let got = slab_w1p_norm(&gaussian_envelope(1.0), &d, &params)?;
        let exact = (2.0 * (0.5 * PI).sqrt()).sqrt();
        let rel = (got / exact - 1.0).abs();
        Ok((rel < 1e-3, format!("{got:.6} vs {exact:.6}, rel {rel:.1e}")))
    });
    c.run("holder_affine", || {
        let d = Domain::build(DomainSpec::unit_square(grid))?;
        let u = GridField::from_fn(&d, "u", |x| 0.3 * x[0] - 0.4 * x[1] + 0.1)?;
        let got = holder_c1beta(&u, 0.25)?;
        // sup |u| + sup |∇u|, no Hölder part.
        let exact = 0.4 + 0.5;
        Ok(((got - exact).abs() < 1e-10, format!("{got:.12} vs {exact}")))
    });
    c.run("unit_ball", || {
        let ok = (unit_ball_volume(2) - PI).abs() < 1e-15 && unit_ball_volume(1) == 2.0;
        Ok((ok, format!("ω₁={} ω₂={:.15}", unit_ball_volume(1), unit_ball_volume(2))))
    });
}

pub fn gaussian_envelope(lipschitz: f64) -> SlabFunction {
    SlabFunction::new(|_, t| (-t * t).exp(), |_, t, g| {
        g.fill(0.0);
        g[g.len() - 1] = -2.0 * t * (-t * t).exp();
    })
    .with_lipschitz(lipschitz)
}

// -------------------------------------------------------------------- linear

#[derive(Clone, Debug, Default)]
pub struct LinearSuiteResult {
    pub grids: [usize; 2],
    pub systems: usize,
    /// Largest `‖v‖_{C^{1,1/2}}` over the coefficient fields, per grid.
    pub max_coefficient_norm: f64,
    /// Largest `‖w₀ − w₁‖_∞` between solves from different initial guesses.
    pub max_guess_gap: f64,
    /// Systems whose matrix has nonpositive off-diagonals, per grid.
    pub clean_systems: [usize; 2],
    pub max_principle_failures: usize,
    /// Largest estimate ratio per grid.
    pub max_ratio: [f64; 2],
    pub all_finite: bool,
}

impl LinearSuiteResult {
    pub fn ratio_drift(&self) -> f64 {
        (self.max_ratio[1] / self.max_ratio[0] - 1.0).abs()
    }
}

/// Random problems `A(∇v):D²w = f`, `w = φ` on `∂Ω`, posed by the same
/// continuous data on two grids. Each coefficient field is scaled once, on
/// the coarse grid, to `‖v‖_{C^{1,1/2}} ≤ 0.95`.
pub fn linear_suite(grids: [usize; 2], systems: usize, seed: u64) -> Result<LinearSuiteResult> {
    let domains = [Domain::build(DomainSpec::unit_square(grids[0]))?, Domain::build(DomainSpec::unit_square(grids[1]))?];
    let mut out = LinearSuiteResult { grids, systems, all_finite: true, ..Default::default() };
    for i in 0..systems {
        let sys_seed = seed.wrapping_mul(1_000_003).wrapping_add(i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(sys_seed);
        let target = rng.gen_range(0.2..0.95);
        let (a, b, c) = (rng.gen_range(0.0..2.0), rng.gen_range(1.0..6.0), rng.gen_range(-1.0..1.0));
        let phase = rng.gen_range(0.0..std::f64::consts::TAU);
        let mut scale = None;
        for (level, d) in domains.iter().enumerate() {
            let raw = random_lipschitz_field(d, 1.0, &mut ChaCha8Rng::seed_from_u64(sys_seed ^ 0xc0ef))?;
            let k = *scale.get_or_insert(target / holder_c1beta(&raw, 0.5)?);
            let v = raw.scale(k)?;
            out.max_coefficient_norm = out.max_coefficient_norm.max(holder_c1beta(&v, 0.5)?);

            let f = GridField::from_fn(d, "f", move |x| c + (b * x[0] * x[1] + phase).sin())?;
            let phi = GridField::from_fn(d, "phi", move |x| (x[0] - a * x[1]).cos() + a * x[0] * x[1])?;
            let sys = assemble(&v, None, &f, &phi)?;
            let (w, rep) = solve(&sys, 1e-12)?;
            out.all_finite &= rep.estimate_ratio.is_finite();
            out.max_ratio[level] = out.max_ratio[level].max(rep.estimate_ratio);

            let guess = GridField::from_fn(d, "g", move |x| 10.0 * (7.0 * x[0] + phase).sin() * x[1])?;
            let opts = SolveOptions {
                method: SolverChoice::Iterative,
                tol: 1e-12,
                initial_guess: Some(guess),
                ..Default::default()
            };
            let (w2, _) = solve_with(&sys, &opts)?;
            out.max_guess_gap = out.max_guess_gap.max(w.sub(&w2)?.max_abs());

            if sys.meta.m_matrix() {
                out.clean_systems[level] += 1;
                // Lw = f ≥ 0 keeps the maximum on the boundary, f ≤ 0 the minimum.
                let pos = GridField::from_fn(d, "f", move |x| a + (b * x[0] * x[1] + phase).sin().powi(2))?;
                for sign in [1.0, -1.0] {
                    let (w, _) = solve(&assemble(&v, None, &pos.scale(sign)?, &phi)?, 1e-12)?;
                    let vals = w.values();
                    let pick = |ids: &[usize]| ids.iter().map(|&id| sign * vals[id]).fold(f64::MIN, f64::max);
                    if pick(d.interior()) > pick(d.boundary()) + 1e-10 {
                        out.max_principle_failures += 1;
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Pinned bound on the `W^{2,q}` estimate ratio for the random suite.
pub const ESTIMATE_RATIO_BOUND: f64 = 10.0;

impl LinearSuiteResult {
    pub fn passed(&self) -> bool {
        self.max_guess_gap < 1e-8
            && self.max_principle_failures == 0
            && self.clean_systems.iter().all(|&n| n > 0)
            && self.all_finite
            && self.max_ratio.iter().all(|&r| r <= ESTIMATE_RATIO_BOUND)
            && self.ratio_drift() < 0.2
    }

    pub fn summary(&self) -> String {
        format!(
            "{} systems on {:?}, ‖v‖ ≤ {:.3}, guess gap {:.2e}, clean {:?}, max-principle failures {}, ratio {:.4?} (drift {:.1}%)",
            self.systems,
            self.grids,
            self.max_coefficient_norm,
            self.max_guess_gap,
            self.clean_systems,
            self.max_principle_failures,
            self.max_ratio,
            100.0 * self.ratio_drift()
        )
    }
}

fn linear_suite_checks(c: &mut Collector, grid: usize, seed: u64) {
    c.run("poisson_order", || {
        let grids = refine(grid, 3);
        let errs = grids
            .iter()
            .map(|&n| {
                let d = Domain::build(DomainSpec::unit_square(n))?;
                let z = GridField::zeros(&d, "0");
                let f = GridField::from_fn(&d, "f", |x| -2.0 * PI * PI * (PI * x[0]).sin() * (PI * x[1]).sin())?;
                let exact = GridField::from_fn(&d, "w", |x| (PI * x[0]).sin() * (PI * x[1]).sin())?;
                let (w, _) = solve(&assemble(&z, None, &f, &z)?, 1e-12)?;
                Ok(w.sub(&exact)?.max_abs())
            })
            .collect::<Result<Vec<f64>>>()?;
        let r = ratios(&errs);
        Ok((in_range(&r, 3.5, 4.5), format!("grids {grids:?} errors {} ratio {r:.3?}", sci(&errs))))
    });
    c.run("random_systems", || {
        let r = linear_suite([grid, 2 * grid - 1], 20, seed)?;
        Ok((r.passed(), r.summary()))
    });
    c.run("affine_reproduction", || {
        let d = Domain::build(DomainSpec::unit_square(grid))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = random_lipschitz_field(&d, 1.0, &mut rng)?;
        let v = v.scale(0.9 / holder_c1beta(&v, 0.5)?)?;
        let phi = GridField::from_fn(&d, "phi", |x| 1.5 * x[0] - 0.7 * x[1] + 0.2)?;
        let (w, _) = solve(&assemble(&v, None, &GridField::zeros(&d, "f"), &phi)?, 1e-12)?;
        let gap = w.sub(&phi)?.max_abs();
        Ok((gap < 1e-10, format!("‖w − φ‖ = {gap:.2e}")))
    });
}

// --------------------------------------------------------------------- trace

#[derive(Clone, Debug)]
pub struct TraceSuiteResult {
    pub samples: usize,
    pub lipschitz: f64,
    /// Slab norm of the unnormalized envelope; the normalized one has norm 1.
    pub raw_slab_norm: f64,
    /// Recorded constant: the largest `‖G(·,v)‖_{L^q}` over the sweep.
    pub trace_constant: f64,
    /// `|Ω|^{1/q}·sup G`, the elementary bound every trace obeys.
    pub sup_bound: f64,
    pub all_finite: bool,
    pub max_density: f64,
    pub density_bound: f64,
}

impl TraceSuiteResult {
    pub fn passed(&self) -> bool {
        self.all_finite && self.trace_constant <= self.sup_bound && self.max_density <= self.density_bound
    }

    pub fn summary(&self) -> String {
        format!(
            "{} graphs, V={}: trace constant {:.5} (≤ {:.5}), max density {:.5} (bound (1+V)π+0.01 = {:.5})",
            self.samples, self.lipschitz, self.trace_constant, self.sup_bound, self.max_density, self.density_bound
        )
    }
}

/// `G(x,t) = e^{−t²}` normalized to unit `W^{1,p}(Ω×ℝ)` norm, traced along
/// random graphs with `‖v‖_{W^{1,∞}} ≤ V`, n = 2, p = 2, q = 4.
pub fn trace_suite(grid: usize, samples: usize, lipschitz: f64, seed: u64) -> Result<TraceSuiteResult> {
    let d: Arc<Domain> = Domain::build(DomainSpec::unit_square(grid))?;
    let params = derive_q(2, 2.0)?;
    let raw = gaussian_envelope(lipschitz);
    let raw_slab = slab_w1p_norm(&raw, &d, &params)?;
    let g = raw.scaled(1.0 / raw_slab);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut constant, mut all_finite, mut max_density) = (0.0f64, true, 0.0f64);
    for k in 0..samples {
        let v = random_lipschitz_field(&d, lipschitz, &mut rng)?;
        let t = trace_lq_norm(&g, &v, params.q)?;
        all_finite &= t.is_finite();
        constant = constant.max(t);
        let dens = graph_density(&v, 60, seed.wrapping_add(k as u64))?;
        max_density = max_density.max(dens.value);
    }
    Ok(TraceSuiteResult {
        samples,
        lipschitz,
        raw_slab_norm: raw_slab,
        trace_constant: constant,
        sup_bound: d.measure().powf(1.0 / params.q) / raw_slab,
        all_finite,
        max_density,
        density_bound: (1.0 + lipschitz) * unit_ball_volume(2) + 1e-2,
    })
}

fn trace_suite_checks(c: &mut Collector, grid: usize, seed: u64) {
    c.run("ratio_and_density", || {
        let r = trace_suite(grid, 20, 1.0, seed)?;
        Ok((r.passed(), r.summary()))
    });
}

// ---------------------------------------------------------------- fixedpoint

#[derive(Clone, Debug)]
pub struct CapRun {
    pub nodes: usize,
    pub status: Status,
    pub iterations: usize,
    pub max_error: f64,
    pub boundary_error: f64,
    /// `‖T(u) − u‖_∞` at the returned field.
    pub fixed_point_gap: f64,
}

/// `H ≡ 1` on the disc of radius 0.5 with data from `u* = −√(4 − |x|²)`.
pub fn cap_study(grids: &[usize], tol: f64) -> Result<Vec<CapRun>> {
    grids
        .iter()
        .map(|&nodes| {
            let d = Domain::build(DomainSpec::Disc { center: [0.0, 0.0], radius: 0.5, nodes })?;
            let exact = GridField::from_fn(&d, "cap", |x| -(4.0 - x[0] * x[0] - x[1] * x[1]).sqrt())?;
            let mut cfg = IterationConfig::new(derive_q(2, 2.0)?);
            cfg.tol = tol;
            cfg.trust_radius = 10.0;
            let p = Prescription::constant(2, 1.0);
            let (u, rep) = solve_pmc(None, &p, &exact, &cfg).map_err(|a| a.error)?;
            let (tu, _) = apply_t(&u, None, &p, &exact)?;
            Ok(CapRun {
                nodes,
                status: rep.status,
                iterations: rep.iterations.len(),
                max_error: u.sub(&exact)?.max_abs(),
                boundary_error: rep.boundary_error,
                fixed_point_gap: tu.sub(&u)?.max_abs(),
            })
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct SmallDataRun {
    pub s: f64,
    pub status: Status,
    pub iterations: usize,
    pub boundary_error: f64,
    pub residual_div_form: f64,
    pub residual_nondiv_form: f64,
    pub w2q_distance: f64,
    pub trust_norm: f64,
}

/// `f = (0, 0, s·e^{−t²})` around Scherk on `[−extent, extent]²` with `φ = 0`,
/// each `s` solved cold.
pub fn small_data_runs(grid: usize, extent: f64, s_values: &[f64], cfg: &IterationConfig) -> Result<Vec<SmallDataRun>> {
    let d = Domain::build(DomainSpec::square(extent, grid))?;
    let h = GridField::from_fn(&d, "h", scherk)?;
    let zero = GridField::zeros(&d, "phi");
    s_values
        .iter()
        .map(|&s| {
            let p = Prescription::vertical_gaussian(2, s);
            let (_, rep) = solve_pmc(Some(&h), &p, &zero, cfg).map_err(|a| a.error)?;
            Ok(SmallDataRun {
                s,
                status: rep.status,
                iterations: rep.iterations.len(),
                boundary_error: rep.boundary_error,
                residual_div_form: rep.residual_div_form,
                residual_nondiv_form: rep.residual_nondiv_form,
                w2q_distance: rep.w2q_distance,
                trust_norm: rep.iterations.last().map_or(f64::NAN, |r| r.trust_norm),
            })
        })
        .collect()
}

/// Largest gap between fixed points reached from `v₀ = φ` and from
/// `v₀ = φ + 0.1·bump`, for `H = s·tanh(t)` on the unit square.
pub fn uniqueness_gap(grid: usize, s: f64, cfg: &IterationConfig) -> Result<(f64, [Status; 2])> {
    let d = Domain::build(DomainSpec::unit_square(grid))?;
    let phi = GridField::from_fn(&d, "phi", |x| x[0] - 0.5 * x[1])?;
    let bump = GridField::from_fn(&d, "bump", |x| 0.1 * (3.0 * x[0]).sin() * (5.0 * x[1]).cos())?;
    let p = Prescription::monotone_tanh(2, s);
    let (a, ra) = solve_pmc(None, &p, &phi, cfg).map_err(|a| a.error)?;
    let (b, rb) = solve_pmc_from(None, &p, &phi, cfg, &phi.add(&bump)?, None).map_err(|a| a.error)?;
    Ok((a.sub(&b)?.max_abs(), [ra.status, rb.status]))
}

fn fixedpoint_suite(c: &mut Collector, grid: usize) {
    let params = derive_q(2, 2.0).expect("valid exponents");
    let base_cfg = {
        let mut cfg = IterationConfig::new(params);
        cfg.trust_radius = 10.0;
        cfg.tol = 1e-9;
        cfg
    };
    c.run("cap_order", || {
        let runs = cap_study(&refine(grid, 2), 1e-10)?;
        let errs: Vec<f64> = runs.iter().map(|r| r.max_error).collect();
        let r = ratios(&errs);
        let ok = runs.iter().all(|r| r.status == Status::Converged && r.boundary_error <= 1e-12 && r.fixed_point_gap < 1e-9)
            && in_range(&r, 3.3, 4.7);
        Ok((ok, format!("errors {} ratio {r:.3?}", sci(&errs))))
    });
    c.run("damping_consistency", || {
        let d = Domain::build(DomainSpec::unit_square(grid))?;
        let phi = GridField::from_fn(&d, "phi", |x| 0.2 * x[0] * x[1])?;
        let p = Prescription::vertical_gaussian(2, 0.8);
        let mut a = base_cfg.clone();
        a.damping = 0.8;
        let mut b = a.clone();
        b.damping = 0.4;
        let (ua, ra) = solve_pmc(None, &p, &phi, &a).map_err(|e| e.error)?;
        let (ub, rb) = solve_pmc(None, &p, &phi, &b).map_err(|e| e.error)?;
        let gap = ua.sub(&ub)?.max_abs();
        let ok = ra.status == Status::Converged && rb.status == Status::Converged && gap < 10.0 * a.tol;
        Ok((ok, format!("θ = 0.8 vs 0.4: gap {gap:.2e}, {} vs {} iterations", ra.iterations.len(), rb.iterations.len())))
    });
    c.run("uniqueness", || {
        let (gap, st) = uniqueness_gap(grid, 1.0, &base_cfg)?;
        let ok = st.iter().all(|s| s.reached_fixed_point()) && gap < 10.0 * base_cfg.tol;
        Ok((ok, format!("gap {gap:.2e}, status {} / {}", st[0], st[1])))
    });
    c.run("minimal_base", || {
        let d = Domain::build(DomainSpec::square(1.2, grid))?;
        let h = GridField::from_fn(&d, "h", scherk)?;
        let zero = GridField::zeros(&d, "phi");
        let (u, rep) = solve_pmc(Some(&h), &Prescription::zero(2), &zero, &base_cfg).map_err(|e| e.error)?;
        let gap = u.sub(&h)?.max_abs();
        Ok((rep.status == Status::Converged && gap < 1e-12, format!("‖u − h‖ = {gap:.2e}")))
    });
    c.run("small_data", || {
        let runs = small_data_runs(grid, 1.2, &[0.05], &base_cfg)?;
        let r = &runs[0];
        let ok = r.status == Status::Converged && r.boundary_error <= 1e-12;
        Ok((ok, format!("s = {}: {} in {} iterations, ‖u − h‖_W2q {:.3e}", r.s, r.status, r.iterations, r.w2q_distance)))
    });
}
