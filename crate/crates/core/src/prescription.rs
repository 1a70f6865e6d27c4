//! Right-hand sides `H(x, t, z)` together with an envelope `G(x, t)` that
//! bounds them uniformly in `z`.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{PmcError, Result};
use crate::geometry::unit_normal;
use crate::grid::Domain;
use crate::norms::{slab_w1p_norm, SlabFunction, SobolevParams};

pub type HFn = dyn Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync;
/// Writes the `n+1` components `f_i(x, t)`.
pub type FieldFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;
/// Writes the row-major `(n+1)×(n+1)` Jacobian `∂f_i/∂(x_1, …, x_n, t)`.
pub type JacobianFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// A vector field `f: Ω × ℝ → ℝ^{n+1}` with its Jacobian.
#[derive(Clone)]
pub struct VectorField {
    pub dim: usize,
    pub value: Arc<FieldFn>,
    pub jacobian: Arc<JacobianFn>,
}

impl VectorField {
    pub fn new(
        dim: usize,
        value: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
        jacobian: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        VectorField { dim, value: Arc::new(value), jacobian: Arc::new(jacobian) }
    }

    pub fn zero(dim: usize) -> Self {
        Self::new(dim, |_, _, f| f.fill(0.0), |_, _, j| j.fill(0.0))
    }

    /// `(0, …, 0, g(x, t))` from a scalar with gradient `(∂_x g, ∂_t g)`.
    pub fn vertical(
        dim: usize,
        g: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        let m = dim + 1;
        Self::new(
            dim,
            move |x, t, f| {
                f.fill(0.0);
                f[m - 1] = g(x, t);
            },
            move |x, t, j| {
                j.fill(0.0);
                grad(x, t, &mut j[(m - 1) * m..]);
            },
        )
    }

    pub fn eval(&self, x: &[f64], t: f64) -> Vec<f64> {
        let mut f = vec![0.0; self.dim + 1];
        (self.value)(x, t, &mut f);
        f
    }

    /// Component `i` as a slab function.
    pub fn component(&self, i: usize) -> SlabFunction {
        let m = self.dim + 1;
        let (val, jac) = (Arc::clone(&self.value), Arc::clone(&self.jacobian));
        SlabFunction::new(
            move |x, t| {
                let mut f = [0.0; 3];
                val(x, t, &mut f[..m]);
                f[i]
            },
            move |x, t, g| {
                let mut j = [0.0; 9];
                jac(x, t, &mut j[..m * m]);
                g.copy_from_slice(&j[i * m..(i + 1) * m]);
            },
        )
    }
}

/// Which family a prescription came from, with its parameters. Used by the
/// configuration layer and by continuation sweeps, which rescale `s`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PrescriptionSpec {
    Zero,
    Constant { c: f64 },
    /// `f = (0, …, 0, s·e^{−t²})`.
    VerticalGaussian { s: f64 },
    /// `f = (0, …, 0, s·ρ^{−γ}e^{−ρ²})` with `ρ = |(x − x₀, t − t₀)|`.
    Singular { s: f64, gamma: f64, center: Vec<f64> },
    /// `H = s·tanh(t)`, nondecreasing in `t` for `s ≥ 0`.
    MonotoneTanh { s: f64 },
}

impl PrescriptionSpec {
    pub fn name(&self) -> &'static str {
        match self {
            PrescriptionSpec::Zero => "zero",
            PrescriptionSpec::Constant { .. } => "constant",
            PrescriptionSpec::VerticalGaussian { .. } => "vertical_gaussian",
            PrescriptionSpec::Singular { .. } => "singular",
            PrescriptionSpec::MonotoneTanh { .. } => "monotone_tanh",
        }
    }

    /// The scale parameter swept by continuation runs.
    pub fn scale(&self) -> f64 {
        match self {
            PrescriptionSpec::Zero => 0.0,
            PrescriptionSpec::Constant { c } => *c,
            PrescriptionSpec::VerticalGaussian { s }
            | PrescriptionSpec::Singular { s, .. }
            | PrescriptionSpec::MonotoneTanh { s } => *s,
        }
    }

    pub fn with_scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            PrescriptionSpec::Zero => {}
            PrescriptionSpec::Constant { c } => *c = s,
            PrescriptionSpec::VerticalGaussian { s: v }
            | PrescriptionSpec::Singular { s: v, .. }
            | PrescriptionSpec::MonotoneTanh { s: v } => *v = s,
        }
        out
    }

    pub fn build(&self, dim: usize) -> Result<Prescription> {
        match self {
            PrescriptionSpec::Zero => Ok(Prescription::zero(dim)),
            PrescriptionSpec::Constant { c } => Ok(Prescription::constant(dim, *c)),
            PrescriptionSpec::VerticalGaussian { s } => Ok(Prescription::vertical_gaussian(dim, *s)),
            PrescriptionSpec::Singular { s, gamma, center } => Prescription::singular(dim, *s, *gamma, center),
            PrescriptionSpec::MonotoneTanh { s } => Ok(Prescription::monotone_tanh(dim, *s)),
        }
        .map(|mut p| {
            p.spec = Some(self.clone());
            p
        })
    }
}

pub const OUTSIDE_HYPOTHESES: &str = "outside the existence hypotheses: envelope has infinite slab norm";

#[derive(Clone)]
pub struct Prescription {
    pub name: String,
    pub dim: usize,
    pub h: Arc<HFn>,
    pub envelope: SlabFunction,
    pub field: Option<VectorField>,
    /// `H` is nondecreasing in `t`, the sign under which the comparison
    /// principle gives uniqueness.
    pub monotone: bool,
    pub warnings: Vec<String>,
    pub spec: Option<PrescriptionSpec>,
}

impl fmt::Debug for Prescription {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Prescription")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("monotone", &self.monotone)
            .field("warnings", &self.warnings)
            .finish_non_exhaustive()
    }
}

impl Prescription {
    pub fn eval(&self, x: &[f64], t: f64, z: &[f64]) -> f64 {
        (self.h)(x, t, z)
    }

    pub fn envelope_at(&self, x: &[f64], t: f64) -> f64 {
        self.envelope.eval(x, t)
    }

    pub fn outside_hypotheses(&self) -> bool {
        self.warnings.iter().any(|w| w == OUTSIDE_HYPOTHESES)
    }

    pub fn zero(dim: usize) -> Self {
        let mut p = Self::normal_projection(VectorField::zero(dim));
        p.name = "zero".into();
        p.monotone = true;
        p
    }

    /// `H ≡ c`; constant mean curvature, with spherical caps as exact
    /// solutions. The envelope `|c|` does not decay in `t`.
    pub fn constant(dim: usize, c: f64) -> Self {
        let a = c.abs();
        Prescription {
            name: format!("constant({c})"),
            dim,
            h: Arc::new(move |_, _, _| c),
            envelope: SlabFunction::new(move |_, _| a, |_, _, g| g.fill(0.0)),
            field: None,
            monotone: true,
            warnings: if c == 0.0 { Vec::new() } else { vec![OUTSIDE_HYPOTHESES.to_string()] },
            spec: None,
        }
    }

    /// `H = ν(z)·f(x, t)` with envelope `G = Σ|f_i|`, without checking that
    /// the components have finite slab norm.
    pub fn normal_projection(f: VectorField) -> Self {
        let dim = f.dim;
        let m = dim + 1;
        let fv = Arc::clone(&f.value);
        let h = move |x: &[f64], t: f64, z: &[f64]| {
            let mut v = [0.0; 3];
            fv(x, t, &mut v[..m]);
            unit_normal(z).iter().zip(&v[..m]).map(|(a, b)| a * b).sum()
        };
        let (gv, gj) = (Arc::clone(&f.value), Arc::clone(&f.jacobian));
        let gv2 = Arc::clone(&f.value);
        // Weak gradient of Σ|f_i| is Σ sign(f_i)∇f_i.
        let envelope = SlabFunction::new(
            move |x, t| {
                let mut v = [0.0; 3];
                gv(x, t, &mut v[..m]);
                v[..m].iter().map(|c| c.abs()).sum()
            },
            move |x, t, g| {
                let mut v = [0.0; 3];
                let mut j = [0.0; 9];
                gv2(x, t, &mut v[..m]);
                gj(x, t, &mut j[..m * m]);
                g.fill(0.0);
                for i in 0..m {
                    let s = if v[i] > 0.0 {
                        1.0
                    } else if v[i] < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    for k in 0..m {
                        g[k] += s * j[i * m + k];
                    }
                }
            },
        );
        Prescription {
            name: "normal_projection".into(),
            dim,
            h: Arc::new(h),
            envelope,
            field: Some(f),
            monotone: false,
            warnings: Vec::new(),
            spec: None,
        }
    }

    /// [`Self::normal_projection`] after checking every component of `f` has
    /// a finite `W^{1,p}(Ω×ℝ)` norm.
    pub fn from_vector_field(f: VectorField, domain: &Domain, params: &SobolevParams) -> Result<Self> {
        if f.dim != domain.dim() {
            return Err(PmcError::InvalidArgument {
                name: "f",
                reason: format!("field dimension {} on a {}-dimensional domain", f.dim, domain.dim()),
            });
        }
        for i in 0..=f.dim {
            slab_w1p_norm(&f.component(i), domain, params).map_err(|e| match e {
                PmcError::SlabTail(msg) => PmcError::SlabTail(format!("component {i}: {msg}")),
                other => other,
            })?;
        }
        Ok(Self::normal_projection(f))
    }

    pub fn vertical_gaussian(dim: usize, s: f64) -> Self {
        let f = VectorField::vertical(dim, move |_, t| s * (-t * t).exp(), move |_, t, g| {
            g.fill(0.0);
            g[g.len() - 1] = -2.0 * s * t * (-t * t).exp();
        });
        let mut p = Self::normal_projection(f);
        p.name = format!("vertical_gaussian({s})");
        p
    }

    /// Vertical field with a point singularity at `center ∈ ℝ^{n+1}`, in
    /// `W^{1,p}` but unbounded. Requires `0 < γ` and `p(γ+1) < n+1` for the
    /// `p` the caller intends to use; the caller checks the latter via
    /// [`singular_gamma_bound`].
    pub fn singular(dim: usize, s: f64, gamma: f64, center: &[f64]) -> Result<Self> {
        if center.len() != dim + 1 {
            return Err(PmcError::InvalidArgument {
                name: "center",
                reason: format!("expected {} coordinates, got {}", dim + 1, center.len()),
            });
        }
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(PmcError::InvalidArgument { name: "gamma", reason: format!("{gamma} not in (0,1)") });
        }
        let c: Vec<f64> = center.to_vec();
        let c2 = c.clone();
        let rho = move |c: &[f64], x: &[f64], t: f64, y: &mut [f64; 3]| -> f64 {
            for k in 0..dim {
                y[k] = x[k] - c[k];
            }
            y[dim] = t - c[dim];
            y[..=dim].iter().map(|v| v * v).sum::<f64>().sqrt()
        };
        let f = VectorField::vertical(
            dim,
            move |x, t| {
                let mut y = [0.0; 3];
                let r = rho(&c, x, t, &mut y);
                s * r.powf(-gamma) * (-r * r).exp()
            },
            move |x, t, g| {
                let mut y = [0.0; 3];
                let r = rho(&c2, x, t, &mut y);
                let d = s * (-gamma / r - 2.0 * r) * r.powf(-gamma) * (-r * r).exp();
                for k in 0..=dim {
                    g[k] = d * y[k] / r;
                }
            },
        );
        let mut p = Self::normal_projection(f);
        p.name = format!("singular({s}, γ={gamma})");
        Ok(p)
    }

    /// `H = s·tanh(t)` with envelope `|s|`.
    pub fn monotone_tanh(dim: usize, s: f64) -> Self {
        let a = s.abs();
        Prescription {
            name: format!("monotone_tanh({s})"),
            dim,
            h: Arc::new(move |_, t, _| s * t.tanh()),
            envelope: SlabFunction::new(move |_, _| a, |_, _, g| g.fill(0.0)),
            field: None,
            monotone: s >= 0.0,
            warnings: if s == 0.0 { Vec::new() } else { vec![OUTSIDE_HYPOTHESES.to_string()] },
            spec: None,
        }
    }

    /// Replace `H`, keeping the envelope. Used to plant faults in tests.
    pub fn with_h(mut self, h: impl Fn(&[f64], f64, &[f64]) -> f64 + Send + Sync + 'static) -> Self {
        self.h = Arc::new(h);
        self.field = None;
        self
    }
}

/// Largest `γ` with `ρ^{−γ}` locally in `W^{1,p}(ℝ^{n+1})`.
pub fn singular_gamma_bound(params: &SobolevParams) -> f64 {
    (params.n as f64 + 1.0) / params.p - 1.0
}

fn sample_point(domain: &Domain, rng: &mut ChaCha8Rng) -> [f64; 2] {
    let dim = domain.dim();
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for n in domain.nodes() {
        for k in 0..dim {
            lo[k] = lo[k].min(n.pos[k]);
            hi[k] = hi[k].max(n.pos[k]);
        }
    }
    loop {
        let mut x = [0.0; 2];
        for k in 0..dim {
            x[k] = rng.gen_range(lo[k]..=hi[k]);
        }
        if domain.contains(&x[..dim]) {
            return x;
        }
    }
}

/// Gradient sample: zero, moderate, and up to `|z| = 10³`.
fn sample_z(dim: usize, rng: &mut ChaCha8Rng, k: usize) -> [f64; 2] {
    let mag = match k % 4 {
        0 => 0.0,
        1 => rng.gen_range(0.0..2.0),
        _ => 10f64.powf(rng.gen_range(-1.0..3.0)),
    };
    let mut z = [0.0; 2];
    if dim == 1 {
        z[0] = if rng.gen_bool(0.5) { mag } else { -mag };
    } else {
        let a = rng.gen_range(0.0..std::f64::consts::TAU);
        z = [mag * a.cos(), mag * a.sin()];
    }
    z
}

#[derive(Clone, Debug, Serialize)]
pub struct EnvelopeReport {
    pub samples: usize,
    /// `max(|H| − |G|, 0)` over the samples.
    pub max_violation: f64,
    pub worst: Option<(Vec<f64>, f64, Vec<f64>)>,
    pub max_z: f64,
}

/// Samples `(x, t, z)` and records the largest excess of `|H|` over `|G|`.
pub fn envelope_check(p: &Prescription, domain: &Domain, samples: usize, seed: u64) -> EnvelopeReport {
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = EnvelopeReport { samples, max_violation: 0.0, worst: None, max_z: 0.0 };
    for k in 0..samples {
        let x = sample_point(domain, &mut rng);
        let t = rng.gen_range(-5.0..5.0);
        let z = sample_z(dim, &mut rng, k);
        rep.max_z = rep.max_z.max((z[0] * z[0] + z[1] * z[1]).sqrt());
        let excess = p.eval(&x[..dim], t, &z[..dim]).abs() - p.envelope_at(&x[..dim], t).abs();
        if excess > rep.max_violation {
            rep.max_violation = excess;
            rep.worst = Some((x[..dim].to_vec(), t, z[..dim].to_vec()));
        }
    }
    rep
}

/// Smallest sampled difference quotient `ΔH/Δt`; nonnegative up to rounding
/// for prescriptions flagged monotone.
pub fn monotonicity_check(p: &Prescription, domain: &Domain, samples: usize, seed: u64) -> f64 {
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::INFINITY;
    for k in 0..samples {
        let x = sample_point(domain, &mut rng);
        let t = rng.gen_range(-5.0..5.0);
        let dt = 10f64.powf(rng.gen_range(-4.0..0.0));
        let z = sample_z(dim, &mut rng, k);
        let q = (p.eval(&x[..dim], t + dt, &z[..dim]) - p.eval(&x[..dim], t, &z[..dim])) / dt;
        worst = worst.min(q);
    }
    worst
}

/// Largest change of `H` under a perturbation of size `delta` in `(t, z)`
/// at sampled points: a sampled modulus of continuity.
pub fn continuity_check(p: &Prescription, domain: &Domain, delta: f64, samples: usize, seed: u64) -> f64 {
    let dim = domain.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for k in 0..samples {
        let x = sample_point(domain, &mut rng);
        let t = rng.gen_range(-5.0..5.0);
        let z = sample_z(dim, &mut rng, k);
        let mut z2 = z;
        for c in z2.iter_mut().take(dim) {
            *c += rng.gen_range(-delta..delta);
        }
        let t2 = t + rng.gen_range(-delta..delta);
        let jump = (p.eval(&x[..dim], t2, &z2[..dim]) - p.eval(&x[..dim], t, &z[..dim])).abs();
        worst = worst.max(jump);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use crate::norms::{derive_q, slab_w1p_norm};
    use approx::assert_relative_eq;

    fn square() -> Arc<Domain> {
        Domain::build(DomainSpec::unit_square(9)).unwrap()
    }

    #[test]
    fn zero_field_gives_zero_h_and_envelope() {
        let p = Prescription::zero(2);
        assert_eq!(p.eval(&[0.3, 0.1], 2.0, &[5.0, -1.0]), 0.0);
        assert_eq!(p.envelope_at(&[0.3, 0.1], 2.0), 0.0);
    }

    #[test]
    fn constant_vertical_field() {
        let c = 2.5;
        let f = VectorField::vertical(2, move |_, _| c, |_, _, g| g.fill(0.0));
        let p = Prescription::normal_projection(f);
        assert_eq!(p.eval(&[0.0, 0.0], 0.0, &[0.0, 0.0]), -c);
        let z = [3.0, 4.0];
        assert_relative_eq!(p.eval(&[0.0, 0.0], 1.0, &z), -c / 26f64.sqrt(), epsilon = 1e-15);
        assert_eq!(p.envelope_at(&[0.5, 0.5], 7.0), c);
        // A constant component has no finite slab norm.
        let d = square();
        let params = derive_q(2, 2.0).unwrap();
        let f = VectorField::vertical(2, move |_, _| c, |_, _, g| g.fill(0.0));
        assert!(matches!(Prescription::from_vector_field(f, &d, &params), Err(PmcError::SlabTail(_))));
    }

    #[test]
    fn gaussian_envelope_norm_is_linear_in_scale() {
        let d = square();
        let params = derive_q(2, 2.0).unwrap();
        let a = slab_w1p_norm(&Prescription::vertical_gaussian(2, 0.5).envelope, &d, &params).unwrap();
        let b = slab_w1p_norm(&Prescription::vertical_gaussian(2, 1.5).envelope, &d, &params).unwrap();
        assert_relative_eq!(b, 3.0 * a, epsilon = 1e-12);
    }

    #[test]
    fn envelope_holds_for_catalog_and_catches_planted_fault() {
        let d = square();
        let catalog = [
            Prescription::zero(2),
            Prescription::constant(2, -1.0),
            Prescription::vertical_gaussian(2, 3.0),
            Prescription::singular(2, 1.0, 0.4, &[0.31, 0.47, 0.13]).unwrap(),
            Prescription::monotone_tanh(2, 2.0),
        ];
        for p in &catalog {
            let rep = envelope_check(p, &d, 2000, 1);
            assert!(rep.max_violation <= 1e-12, "{}: {}", p.name, rep.max_violation);
            assert!(rep.max_z > 500.0);
        }
        let bad = Prescription::vertical_gaussian(2, 1.0).with_h(|_, t, _| 2.0 * (-t * t).exp());
        assert!(envelope_check(&bad, &d, 200, 1).max_violation > 1e-3);
    }

    #[test]
    fn large_slope_limit_keeps_horizontal_part() {
        let f = VectorField::new(
            2,
            |_, _, f| {
                f[0] = 1.0;
                f[1] = -2.0;
                f[2] = 0.5;
            },
            |_, _, j| j.fill(0.0),
        );
        let p = Prescription::normal_projection(f);
        let z = [1e8, 0.0];
        assert_relative_eq!(p.eval(&[0.0, 0.0], 0.0, &z), 1.0, epsilon = 1e-7);
        assert!(p.eval(&[0.0, 0.0], 0.0, &z).abs() <= p.envelope_at(&[0.0, 0.0], 0.0));
    }

    #[test]
    fn monotone_flag_matches_sampled_quotients() {
        let d = square();
        let p = Prescription::monotone_tanh(2, 1.0);
        assert!(p.monotone);
        assert!(monotonicity_check(&p, &d, 1000, 4) >= -1e-12);
        let q = Prescription::monotone_tanh(2, -1.0);
        assert!(!q.monotone);
        assert!(monotonicity_check(&q, &d, 1000, 4) < 0.0);
    }

    #[test]
    fn catalog_is_continuous_in_t_and_z() {
        let d = square();
        for p in [Prescription::vertical_gaussian(2, 1.0), Prescription::monotone_tanh(2, 1.0)] {
            assert!(continuity_check(&p, &d, 1e-9, 500, 2) < 1e-7);
        }
    }

    #[test]
    fn singular_field_is_unbounded_but_in_slab_space() {
        let d = Domain::build(DomainSpec::unit_square(17)).unwrap();
        let params = derive_q(2, 2.0).unwrap();
        let gamma = 0.4;
        assert!(gamma < singular_gamma_bound(&params));
        let p = Prescription::singular(2, 1.0, gamma, &[0.503, 0.497, 0.01]).unwrap();
        let near = p.envelope_at(&[0.503 + 1e-8, 0.497], 0.01);
        assert!(near > 1e3);
        let f = p.field.clone().unwrap();
        assert!(Prescription::from_vector_field(f, &d, &params).is_ok());
    }

    #[test]
    fn spec_round_trip_and_rescale() {
        let s = PrescriptionSpec::Singular { s: 1.0, gamma: 0.3, center: vec![0.1, 0.2, 0.0] };
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(serde_json::from_str::<PrescriptionSpec>(&json).unwrap(), s);
        assert_eq!(s.with_scale(4.0).scale(), 4.0);
        let p = PrescriptionSpec::Constant { c: 1.0 }.build(2).unwrap();
        assert!(p.outside_hypotheses());
    }
}
