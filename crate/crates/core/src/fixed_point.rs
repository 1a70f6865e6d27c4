//! Damped Picard iteration of the map `T(v) = w`, where `w` solves the linear
//! Dirichlet problem with coefficients and right-hand side frozen at `v`.
//!
//! Without a base graph the unknown is `u` itself. With a minimal base `h`
//! the unknown is the perturbation `ũ = u − h`, the linear problem carries the
//! first-order `B` term, and the returned field is `ũ + h`.

use std::fmt;

use serde::Serialize;

use crate::elliptic::{assemble_with, solve_with, AssemblyOptions, LinearSolveReport, SolveOptions, SolverChoice};
use crate::error::{PmcError, Result};
use crate::geometry::{mean_curvature_div, BaseGraph};
use crate::grid::{gradient, GridField};
use crate::norms::{holder_c1beta_with, slab_w1p_norm, w2q_norm, PairSampling, SobolevParams};
use crate::prescription::Prescription;

#[derive(Clone, Debug, Serialize)]
pub struct IterationConfig {
    /// `θ ∈ (0, 1]` in `v_{k+1} = (1−θ)v_k + θ·T(v_k)`.
    pub damping: f64,
    pub max_iters: usize,
    /// Stopping threshold on the C¹ update norm.
    pub tol: f64,
    /// Radius `ε` of the admissible set, checked against `‖v_k‖_{C^{1,β}}`.
    pub trust_radius: f64,
    pub params: SobolevParams,
    /// Divergence is declared when the update exceeds this multiple of its
    /// running minimum for [`Self::divergence_window`] consecutive steps.
    pub divergence_factor: f64,
    pub divergence_window: usize,
    pub linear_tol: f64,
    pub solver: SolverChoice,
    pub upwind: bool,
    /// Seed for the pair sampler of the trust-norm estimate.
    pub seed: u64,
}

impl IterationConfig {
    pub fn new(params: SobolevParams) -> Self {
        IterationConfig {
            damping: 1.0,
            max_iters: 200,
            tol: 1e-8,
            trust_radius: 1.0,
            params,
            divergence_factor: 10.0,
            divergence_window: 5,
            linear_tol: 1e-10,
            solver: SolverChoice::Auto,
            upwind: false,
            seed: PairSampling::default().seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(PmcError::InvalidArgument { name, reason });
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad("damping", format!("{} not in (0,1]", self.damping));
        }
        if !(self.tol > 0.0) {
            return bad("tol", format!("{} not positive", self.tol));
        }
        if !(self.trust_radius > 0.0) {
            return bad("trust_radius", format!("{} not positive", self.trust_radius));
        }
        if !(self.divergence_factor > 1.0) {
            return bad("divergence_factor", format!("{} not above 1", self.divergence_factor));
        }
        if self.max_iters == 0 || self.divergence_window == 0 {
            return bad("max_iters", "iteration counts must be positive".into());
        }
        if !(self.linear_tol > 0.0) {
            return bad("linear_tol", format!("{} not positive", self.linear_tol));
        }
        Ok(())
    }

    fn solve_options(&self) -> SolveOptions {
        SolveOptions { tol: self.linear_tol, method: self.solver, q: Some(self.params.q), ..Default::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Converged,
    Diverged,
    MaxIters,
    TrustViolation,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::Diverged => "diverged",
            Status::MaxIters => "max_iters",
            Status::TrustViolation => "trust_violation",
        }
    }

    /// Converged to a fixed point, whether or not it left the trust region.
    pub fn reached_fixed_point(&self) -> bool {
        matches!(self, Status::Converged | Status::TrustViolation)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    /// `max(‖δ‖_∞/diam Ω, ‖∇δ‖_∞)` for `δ = T(v_k) − v_k`.
    pub update_norm: f64,
    /// Scaled divergence-form residual of `v_k [+h]`, see [`scaled_residual`].
    pub residual_div_form: f64,
    /// Scaled residual of the discrete system frozen at `v_k`, evaluated at `v_k`.
    pub residual_nondiv_form: f64,
    /// `‖v_k‖_{C^{1,β}}`.
    pub trust_norm: f64,
    /// `‖v_k‖_{W^{2,q}}`, the distance to the base.
    pub w2q_distance: f64,
    pub linear_iterations: usize,
    pub linear_residual: f64,
    pub m_matrix: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct Smallness {
    /// `‖G‖_{W^{1,p}(Ω×ℝ)}`; `None` when the slab norm is infinite.
    pub envelope_norm: Option<f64>,
    pub phi_w2q: f64,
    pub total: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SolveReport {
    pub prescription: String,
    pub has_base: bool,
    pub status: Status,
    pub iterations: Vec<IterationRecord>,
    pub smallness: Smallness,
    /// Residuals of the returned field.
    pub residual_div_form: f64,
    pub residual_nondiv_form: f64,
    /// `‖H(·, u, ∇u)‖_∞` over interior nodes.
    pub h_scale: f64,
    /// `max |u − h − φ|` over boundary nodes.
    pub boundary_error: f64,
    pub final_update: f64,
    pub w2q_distance: f64,
    pub trust_exceeded: bool,
    pub warnings: Vec<String>,
    pub diagnostics: Option<String>,
}

/// A linear solve failed mid-iteration. Carries the iterations completed so far.
#[derive(Debug)]
pub struct Aborted {
    pub error: PmcError,
    pub report: SolveReport,
}

impl fmt::Display for Aborted {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "iteration aborted after {} steps: {}", self.report.iterations.len(), self.error)
    }
}

impl std::error::Error for Aborted {}

impl From<PmcError> for Aborted {
    fn from(error: PmcError) -> Self {
        Aborted { error, report: SolveReport::empty("", false) }
    }
}

impl SolveReport {
    fn empty(prescription: &str, has_base: bool) -> Self {
        SolveReport {
            prescription: prescription.to_string(),
            has_base,
            status: Status::MaxIters,
            iterations: Vec::new(),
            smallness: Smallness { envelope_norm: None, phi_w2q: 0.0, total: None },
            residual_div_form: f64::NAN,
            residual_nondiv_form: f64::NAN,
            h_scale: f64::NAN,
            boundary_error: f64::NAN,
            final_update: f64::NAN,
            w2q_distance: f64::NAN,
            trust_exceeded: false,
            warnings: Vec::new(),
            diagnostics: None,
        }
    }
}

/// Residual in the scale of the assembled rows: `Δx² ‖r‖_∞ / (1 + ‖H‖_∞)`.
pub fn scaled_residual(r: &[f64], dx: f64, h_scale: f64) -> f64 {
    dx * dx * r.iter().fold(0.0f64, |m, v| m.max(v.abs())) / (1.0 + h_scale)
}

/// `H(x, v+h, ∇v+∇h)` at every node.
fn rhs_field(v: &GridField, base: Option<&BaseGraph>, p: &Prescription) -> Result<GridField> {
    let d = v.domain();
    let dim = d.dim();
    let gv = gradient(v)?;
    let mut vals = Vec::with_capacity(d.node_count());
    for id in 0..d.node_count() {
        let mut z = [0.0; 2];
        for k in 0..dim {
            z[k] = gv[k].values()[id];
        }
        let mut t = v.values()[id];
        if let Some(b) = base {
            let zh = b.grad_at(id);
            for k in 0..dim {
                z[k] += zh[k];
            }
            t += b.field.values()[id];
        }
        let val = p.eval(d.pos(id), t, &z[..dim]);
        if !val.is_finite() {
            return Err(PmcError::NonFinite { field: "H".into(), node: id });
        }
        vals.push(val);
    }
    GridField::from_values(d, "H", vals)
}

struct Step {
    w: GridField,
    linear: LinearSolveReport,
    /// Unscaled residual of the frozen system at `v`.
    residual_nondiv: Vec<f64>,
    h_scale: f64,
    m_matrix: bool,
}

fn step(v: &GridField, base: Option<&BaseGraph>, p: &Prescription, phi: &GridField, cfg: &IterationConfig) -> Result<Step> {
    let f = rhs_field(v, base, p)?;
    let sys = assemble_with(v, base, &f, phi, AssemblyOptions { upwind: cfg.upwind })?;
    let residual_nondiv = sys.residual(&sys.restrict(v));
    let (w, linear) = solve_with(&sys, &cfg.solve_options())?;
    let h_scale = f.max_abs_on(v.domain().interior());
    Ok(Step { w, linear, residual_nondiv, h_scale, m_matrix: sys.meta.m_matrix() })
}

/// One application of `T`.
pub fn apply_t(
    v: &GridField,
    h: Option<&GridField>,
    p: &Prescription,
    phi: &GridField,
) -> Result<(GridField, LinearSolveReport)> {
    v.ensure_same_domain(phi)?;
    let base = h.map(BaseGraph::new).transpose()?;
    let cfg = IterationConfig::new(crate::norms::derive_q(v.domain().dim(), 0.75 * (v.domain().dim() as f64 + 1.0))?);
    let s = step(v, base.as_ref(), p, phi, &cfg)?;
    Ok((s.w, s.linear))
}

/// `max(‖δ‖_∞/diam Ω, ‖∇δ‖_∞)`.
pub fn c1_update_norm(delta: &GridField) -> Result<f64> {
    let d = delta.domain();
    let g = gradient(delta)?;
    let mut m = delta.max_abs() / d.diameter();
    for id in 0..d.node_count() {
        let s: f64 = g.iter().map(|c| c.values()[id].powi(2)).sum();
        m = m.max(s.sqrt());
    }
    Ok(m)
}

/// Divergence-form residual `div(∇u/√(1+|∇u|²)) − H(x, u, ∇u)` on interior nodes.
pub fn residual_div(u: &GridField, p: &Prescription) -> Result<Vec<f64>> {
    let mc = mean_curvature_div(u)?;
    let hv = rhs_field(u, None, p)?;
    Ok(u.domain().interior().iter().map(|&id| mc.values()[id] - hv.values()[id]).collect())
}

pub type Observer<'a> = &'a mut dyn FnMut(&IterationRecord, &GridField);

/// Iterates from `v₀ = φ` without a base, `v₀ = 0` with one.
pub fn solve_pmc(
    h: Option<&GridField>,
    p: &Prescription,
    phi: &GridField,
    cfg: &IterationConfig,
) -> std::result::Result<(GridField, SolveReport), Aborted> {
    let v0 = if h.is_some() { GridField::zeros(phi.domain(), "v") } else { phi.clone() };
    solve_pmc_from(h, p, phi, cfg, &v0, None)
}

/// [`solve_pmc`] from a given starting iterate (in the perturbation variable
/// when `h` is present), with an optional per-iteration observer.
pub fn solve_pmc_from(
    h: Option<&GridField>,
    p: &Prescription,
    phi: &GridField,
    cfg: &IterationConfig,
    v0: &GridField,
    mut observer: Option<Observer<'_>>,
) -> std::result::Result<(GridField, SolveReport), Aborted> {
    cfg.validate()?;
    phi.ensure_same_domain(v0)?;
    if let Some(h) = h {
        phi.ensure_same_domain(h)?;
    }
    let d = phi.domain().clone();
    let dim = d.dim();
    if p.dim != dim {
        return Err(PmcError::InvalidArgument {
            name: "prescription",
            reason: format!("built for dimension {}, domain has {dim}", p.dim),
        }
        .into());
    }
    let base = h.map(BaseGraph::new).transpose()?;
    let mut report = SolveReport::empty(&p.name, base.is_some());
    report.warnings.extend(p.warnings.iter().cloned());
    let phi_w2q = w2q_norm(phi, cfg.params.q)?;
    let envelope_norm = slab_w1p_norm(&p.envelope, &d, &cfg.params).ok();
    if envelope_norm.is_none() {
        report.warnings.push("envelope slab norm is infinite".into());
    }
    report.smallness = Smallness { envelope_norm, phi_w2q, total: envelope_norm.map(|g| g + phi_w2q) };

    let dx = d.min_spacing();
    let beta = cfg.params.beta;
    let sampling = PairSampling { seed: cfg.seed, ..Default::default() };
    let mut v = v0.clone().with_name("v");
    v.set_boundary_from(phi)?;
    let mut running_min = f64::INFINITY;
    let mut above = 0;
    let mut status = Status::MaxIters;

    let field_of = |v: &GridField| -> Result<GridField> {
        match &base {
            Some(b) => v.add(&b.field),
            None => Ok(v.clone()),
        }
    };

    for k in 0..cfg.max_iters {
        let s = match step(&v, base.as_ref(), p, phi, cfg) {
            Ok(s) => s,
            // Coefficients that overflow or turn non-finite are how a blowing-up
            // iterate shows itself.
            Err(PmcError::Degenerate(msg)) | Err(PmcError::NonFinite { field: msg, .. }) => {
                report.diagnostics = Some(format!("step {k}: {msg}"));
                status = Status::Diverged;
                break;
            }
            Err(error) => {
                report.status = Status::Diverged;
                report.diagnostics = Some(error.to_string());
                return Err(Aborted { error, report });
            }
        };
        let delta = s.w.sub(&v)?;
        let update = c1_update_norm(&delta)?;
        let u = field_of(&v)?;
        let rdiv = residual_div(&u, p)?;
        let record = IterationRecord {
            k,
            update_norm: update,
            residual_div_form: scaled_residual(&rdiv, dx, s.h_scale),
            residual_nondiv_form: scaled_residual(&s.residual_nondiv, dx, s.h_scale),
            trust_norm: holder_c1beta_with(&v, beta, &sampling)?,
            w2q_distance: w2q_norm(&v, cfg.params.q)?,
            linear_iterations: s.linear.iterations,
            linear_residual: s.linear.residual,
            m_matrix: s.m_matrix,
        };
        report.trust_exceeded |= record.trust_norm > cfg.trust_radius;
        if let Some(obs) = observer.as_mut() {
            obs(&record, &v);
        }
        report.iterations.push(record);

        if !update.is_finite() {
            status = Status::Diverged;
            break;
        }
        v = v.lincomb(1.0 - cfg.damping, &s.w, cfg.damping)?;
        v.set_boundary_from(phi)?;
        if update <= cfg.tol {
            status = Status::Converged;
            break;
        }
        if update > cfg.divergence_factor * running_min {
            above += 1;
            if above >= cfg.divergence_window {
                status = Status::Diverged;
                break;
            }
        } else {
            above = 0;
        }
        running_min = running_min.min(update);
    }

    let u = field_of(&v)?;
    report.final_update = report.iterations.last().map_or(f64::NAN, |r| r.update_norm);
    if status == Status::Converged {
        let trust = holder_c1beta_with(&v, beta, &sampling)?;
        report.trust_exceeded |= trust > cfg.trust_radius;
        if report.trust_exceeded {
            status = Status::TrustViolation;
        }
    }
    report.status = status;
    if u.values().iter().all(|x| x.is_finite()) {
        let hv = rhs_field(&v, base.as_ref(), p);
        if let Ok(hv) = hv {
            report.h_scale = hv.max_abs_on(d.interior());
            if let Ok(rdiv) = residual_div(&u, p) {
                report.residual_div_form = scaled_residual(&rdiv, dx, report.h_scale);
            }
            if let Ok(sys) = assemble_with(&v, base.as_ref(), &hv, phi, AssemblyOptions { upwind: cfg.upwind }) {
                report.residual_nondiv_form = scaled_residual(&sys.residual(&sys.restrict(&v)), dx, report.h_scale);
            }
        }
        report.w2q_distance = w2q_norm(&v, cfg.params.q)?;
    }
    let mut bmax: f64 = 0.0;
    for &id in d.boundary() {
        let hb = base.as_ref().map_or(0.0, |b| b.field.values()[id]);
        bmax = bmax.max((u.values()[id] - hb - phi.values()[id]).abs());
    }
    report.boundary_error = bmax;
    Ok((u.with_name("u"), report))
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepEntry {
    pub s: f64,
    pub status: Option<Status>,
    pub iterations: usize,
    pub w2q_distance: f64,
    pub error: Option<String>,
    pub report: Option<SolveReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Largest `s` whose run converged (trust region respected).
    pub max_converged_s: Option<f64>,
    pub warm_start: bool,
}

/// Runs [`solve_pmc_from`] along increasing `s`, each run warm-started from
/// the last run that reached a fixed point. Returns converged fields by index.
pub fn continuation_sweep(
    h: Option<&GridField>,
    family: &dyn Fn(f64) -> Result<Prescription>,
    phi: &GridField,
    cfg: &IterationConfig,
    s_values: &[f64],
    warm_start: bool,
) -> Result<(SweepReport, Vec<Option<GridField>>)> {
    if s_values.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(PmcError::InvalidArgument { name: "s_values", reason: "must be strictly increasing".into() });
    }
    let cold = if h.is_some() { GridField::zeros(phi.domain(), "v") } else { phi.clone() };
    let mut start = cold.clone();
    let mut entries = Vec::with_capacity(s_values.len());
    let mut fields = Vec::with_capacity(s_values.len());
    let mut max_converged = None;
    for &s in s_values {
        let p = match family(s) {
            Ok(p) => p,
            Err(e) => {
                entries.push(SweepEntry { s, status: None, iterations: 0, w2q_distance: f64::NAN, error: Some(e.to_string()), report: None });
                fields.push(None);
                continue;
            }
        };
        let v0 = if warm_start { &start } else { &cold };
        match solve_pmc_from(h, &p, phi, cfg, v0, None) {
            Ok((u, rep)) => {
                if rep.status == Status::Converged {
                    max_converged = Some(s);
                }
                let keep = rep.status.reached_fixed_point();
                if keep {
                    start = match h {
                        Some(h) => u.sub(h)?,
                        None => u.clone(),
                    };
                }
                entries.push(SweepEntry {
                    s,
                    status: Some(rep.status),
                    iterations: rep.iterations.len(),
                    w2q_distance: rep.w2q_distance,
                    error: None,
                    report: Some(rep),
                });
                fields.push(keep.then_some(u));
            }
            Err(a) => {
                entries.push(SweepEntry {
                    s,
                    status: Some(a.report.status),
                    iterations: a.report.iterations.len(),
                    w2q_distance: f64::NAN,
                    error: Some(a.error.to_string()),
                    report: Some(a.report),
                });
                fields.push(None);
            }
        }
    }
    Ok((SweepReport { entries, max_converged_s: max_converged, warm_start }, fields))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, DomainSpec};
    use crate::norms::derive_q;
    use std::sync::Arc;

    fn square(n: usize) -> Arc<Domain> {
        Domain::build(DomainSpec::unit_square(n)).unwrap()
    }

    fn cfg() -> IterationConfig {
        IterationConfig::new(derive_q(2, 2.0).unwrap())
    }

    #[test]
    fn zero_data_converges_in_one_step() {
        let d = square(9);
        let z = GridField::zeros(&d, "phi");
        let (u, rep) = solve_pmc(None, &Prescription::zero(2), &z, &cfg()).unwrap();
        assert_eq!(rep.status, Status::Converged);
        assert_eq!(rep.iterations.len(), 1);
        assert_eq!(u.max_abs(), 0.0);
    }

    #[test]
    fn affine_kernel_of_t() {
        let d = square(13);
        let phi = GridField::from_fn(&d, "phi", |x| 0.3 * x[0] - x[1]).unwrap();
        let v = GridField::from_fn(&d, "v", |x| (2.0 * x[0]).sin() * x[1]).unwrap();
        let (w, _) = apply_t(&v, None, &Prescription::zero(2), &phi).unwrap();
        assert!(w.sub(&phi).unwrap().max_abs() < 1e-10);
    }

    #[test]
    fn invalid_configs_rejected() {
        let mut c = cfg();
        c.damping = 0.0;
        assert!(c.validate().is_err());
        c.damping = 1.5;
        assert!(c.validate().is_err());
        let mut c = cfg();
        c.divergence_factor = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn boundary_exact_and_residuals_on_smooth_problem() {
        // A disc has no corners, so the solution is smooth and the
        // divergence-form residual is pure truncation error. Differencing the
        // flux over short Shortley-Weller arms costs one order next to the
        // circle.
        let mut c = cfg();
        c.tol = 1e-9;
        let mut div = Vec::new();
        for dx in [0.05, 0.025] {
            let d = Domain::build(DomainSpec::disc_with_spacing([0.0, 0.0], 0.5, dx).unwrap()).unwrap();
            let phi = GridField::from_fn(&d, "phi", |x| 0.1 * x[0]).unwrap();
            let (u, rep) = solve_pmc(None, &Prescription::vertical_gaussian(2, 0.5), &phi, &c).unwrap();
            assert_eq!(rep.status, Status::Converged, "{rep:?}");
            assert!(rep.boundary_error <= 1e-12);
            assert!(rep.residual_nondiv_form <= 10.0 * c.tol, "{}", rep.residual_nondiv_form);
            assert!(u.values().iter().all(|x| x.is_finite()));
            div.push(rep.residual_div_form / (dx * dx));
        }
        assert!(div[0] / div[1] > 1.6, "{div:?}");
    }

    #[test]
    fn sweep_rejects_unsorted_values() {
        let d = square(9);
        let z = GridField::zeros(&d, "phi");
        let fam = |s: f64| Ok(Prescription::vertical_gaussian(2, s));
        assert!(continuation_sweep(None, &fam, &z, &cfg(), &[0.0, 1.0, 0.5], true).is_err());
    }
}
