//! Discrete norms and the sampled functionals used as a-priori diagnostics.
//!
//! Sobolev norms follow the sum-of-powers convention
//! `‖u‖_{W^{k,p}}^p = Σ_{|α|≤k} ‖∂^α u‖_{L^p}^p`, summing once per multi-index.
//! Integrals use the cell-midpoint rule: the midpoint value of a grid cell is
//! the mean of its corner values, and cells cut by a disc boundary carry their
//! inside area as weight.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{PmcError, Result};
use crate::grid::{gradient, hessian, Domain, GridField};

/// Exponents tied together by the trace inequality: `q = np/(n+1−p)` and
/// the Hölder exponent `β = ½ − n/(2q)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SobolevParams {
    pub n: usize,
    pub p: f64,
    pub q: f64,
    pub beta: f64,
}

pub fn derive_q(n: usize, p: f64) -> Result<SobolevParams> {
    if n == 0 {
        return Err(PmcError::InvalidArgument { name: "n", reason: "dimension must be positive".into() });
    }
    let nf = n as f64;
    let lo = (nf + 1.0) / 2.0;
    let hi = nf + 1.0;
    if !(p > lo) {
        return Err(PmcError::ExponentRange { n, p, bound: format!("p > (n+1)/2 = {lo}") });
    }
    if !(p < hi) {
        return Err(PmcError::ExponentRange { n, p, bound: format!("p < n+1 = {hi}") });
    }
    let q = nf * p / (nf + 1.0 - p);
    let beta = 0.5 - nf / (2.0 * q);
    Ok(SobolevParams { n, p, q, beta })
}

fn check_exponent(q: f64) -> Result<()> {
    if !(q >= 1.0) {
        return Err(PmcError::InvalidArgument { name: "q", reason: format!("exponent {q} below 1") });
    }
    Ok(())
}

/// `Σ_cells w·|mean of corners|^q`.
fn power_sum(domain: &Domain, values: &[f64], q: f64) -> f64 {
    domain
        .cells()
        .iter()
        .map(|c| {
            let m = c.corners.iter().map(|&k| values[k]).sum::<f64>() / c.corners.len() as f64;
            c.weight * m.abs().powf(q)
        })
        .sum()
}

pub fn lq_norm(u: &GridField, q: f64) -> Result<f64> {
    if q.is_infinite() && q > 0.0 {
        return Ok(linf_norm(u));
    }
    check_exponent(q)?;
    Ok(power_sum(u.domain(), u.values(), q).powf(1.0 / q))
}

pub fn linf_norm(u: &GridField) -> f64 {
    u.max_abs()
}

/// `max(‖u‖_∞, ‖|∇u|‖_∞)`.
pub fn w1inf_norm(u: &GridField) -> Result<f64> {
    let g = gradient(u)?;
    let mut m = u.max_abs();
    for id in 0..u.domain().node_count() {
        let s: f64 = g.iter().map(|c| c.values()[id].powi(2)).sum();
        m = m.max(s.sqrt());
    }
    Ok(m)
}

pub fn w1p_norm(u: &GridField, p: f64) -> Result<f64> {
    check_exponent(p)?;
    let d = u.domain();
    let mut s = power_sum(d, u.values(), p);
    for g in gradient(u)? {
        s += power_sum(d, g.values(), p);
    }
    Ok(s.powf(1.0 / p))
}

pub fn w2q_norm(u: &GridField, q: f64) -> Result<f64> {
    check_exponent(q)?;
    let d = u.domain();
    let mut s = power_sum(d, u.values(), q);
    for g in gradient(u)? {
        s += power_sum(d, g.values(), q);
    }
    let h = hessian(u)?;
    for i in 0..d.dim() {
        for j in i..d.dim() {
            s += power_sum(d, h.get(i, j).values(), q);
        }
    }
    Ok(s.powf(1.0 / q))
}

/// How the Hölder seminorm estimator picks node pairs.
#[derive(Clone, Copy, Debug)]
pub struct PairSampling {
    /// Chebyshev radius, in grid steps, of the exhaustive local pair set.
    pub stencil_radius: usize,
    pub random_pairs: usize,
    pub seed: u64,
}

impl Default for PairSampling {
    fn default() -> Self {
        PairSampling { stencil_radius: 5, random_pairs: 10_000, seed: 0x5eed }
    }
}

/// `‖u‖_∞ + ‖∇u‖_∞ + [∇u]_β` with the seminorm taken as a maximum over
/// sampled node pairs, hence a lower bound of the discrete seminorm.
pub fn holder_c1beta(u: &GridField, beta: f64) -> Result<f64> {
    holder_c1beta_with(u, beta, &PairSampling::default())
}

pub fn holder_c1beta_with(u: &GridField, beta: f64, sampling: &PairSampling) -> Result<f64> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(PmcError::InvalidArgument { name: "beta", reason: format!("{beta} not in (0,1)") });
    }
    let d = u.domain();
    let dim = d.dim();
    let g = gradient(u)?;
    let n = d.node_count();
    let grad_at = |id: usize| -> [f64; 2] {
        let mut z = [0.0; 2];
        for k in 0..dim {
            z[k] = g[k].values()[id];
        }
        z
    };
    let grads: Vec<[f64; 2]> = (0..n).map(grad_at).collect();
    let grad_sup = grads.iter().map(|z| (z[0] * z[0] + z[1] * z[1]).sqrt()).fold(0.0, f64::max);
    let ratio = |a: usize, b: usize| -> f64 {
        let (pa, pb) = (d.pos(a), d.pos(b));
        let dist: f64 = (0..dim).map(|k| (pa[k] - pb[k]).powi(2)).sum::<f64>().sqrt();
        if dist == 0.0 {
            return 0.0;
        }
        let (za, zb) = (grads[a], grads[b]);
        let dz = ((za[0] - zb[0]).powi(2) + (za[1] - zb[1]).powi(2)).sqrt();
        dz / dist.powf(beta)
    };

    let mut semi: f64 = 0.0;
    let [nx, ny] = d.counts();
    let h = d.spacing();
    let r = sampling.stencil_radius as i64;
    let rj = if dim == 2 { r } else { 0 };
    let origin = grid_origin(d);
    for a in 0..n {
        let p = d.pos(a);
        let ci = ((p[0] - origin[0]) / h[0]).round() as i64;
        let cj = if dim == 2 { ((p[1] - origin[1]) / h[1]).round() as i64 } else { 0 };
        for dj in -rj..=rj {
            for di in -r..=r {
                let (i, j) = (ci + di, cj + dj);
                if i < 0 || j < 0 || i >= nx as i64 || j >= ny as i64 {
                    continue;
                }
                if let Some(b) = d.slot_node(i as usize, j as usize) {
                    if b != a {
                        semi = semi.max(ratio(a, b));
                    }
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(sampling.seed);
    for _ in 0..sampling.random_pairs {
        let a = rng.gen_range(0..n);
        let b = rng.gen_range(0..n);
        semi = semi.max(ratio(a, b));
    }
    Ok(u.max_abs() + grad_sup + semi)
}

fn grid_origin(d: &Domain) -> [f64; 2] {
    // Slot (0,0) may be exterior on a disc, so recover the origin from any
    // grid node.
    let h = d.spacing();
    for node in d.nodes() {
        if let Some([i, j]) = node.slot {
            return [node.pos[0] - i as f64 * h[0], node.pos[1] - j as f64 * h[1]];
        }
    }
    [0.0, 0.0]
}

// ---------------------------------------------------------------- slab norms

pub type SlabValueFn = dyn Fn(&[f64], f64) -> f64 + Send + Sync;
/// Writes `(∂_{x_1}G, …, ∂_{x_n}G, ∂_t G)` into the output slice.
pub type SlabGradFn = dyn Fn(&[f64], f64, &mut [f64]) + Send + Sync;

/// A function `G(x,t)` on `Ω × ℝ` with its weak gradient.
#[derive(Clone)]
pub struct SlabFunction {
    pub value: Arc<SlabValueFn>,
    pub grad: Arc<SlabGradFn>,
    /// Lipschitz bound `V` of the graphs the function is composed with.
    pub lipschitz: f64,
    /// Initial half-height `T` of the integration slab; `None` starts at
    /// `max(2V, 1)`.
    pub half_height: Option<f64>,
}

impl std::fmt::Debug for SlabFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SlabFunction")
            .field("lipschitz", &self.lipschitz)
            .field("half_height", &self.half_height)
            .finish_non_exhaustive()
    }
}

impl SlabFunction {
    pub fn new(
        value: impl Fn(&[f64], f64) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64], f64, &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        SlabFunction { value: Arc::new(value), grad: Arc::new(grad), lipschitz: 0.0, half_height: None }
    }

    pub fn zero() -> Self {
        Self::new(|_, _| 0.0, |_, _, g| g.fill(0.0))
    }

    pub fn with_lipschitz(mut self, v: f64) -> Self {
        self.lipschitz = v;
        self
    }

    pub fn with_half_height(mut self, t: f64) -> Self {
        self.half_height = Some(t);
        self
    }

    /// `c·G`.
    pub fn scaled(&self, c: f64) -> Self {
        let (v, g) = (Arc::clone(&self.value), Arc::clone(&self.grad));
        SlabFunction {
            value: Arc::new(move |x, t| c * v(x, t)),
            grad: Arc::new(move |x, t, out| {
                g(x, t, out);
                out.iter_mut().for_each(|o| *o *= c);
            }),
            lipschitz: self.lipschitz,
            half_height: self.half_height,
        }
    }

    pub fn eval(&self, x: &[f64], t: f64) -> f64 {
        (self.value)(x, t)
    }

    fn initial_half_height(&self) -> f64 {
        self.half_height.unwrap_or_else(|| (2.0 * self.lipschitz).max(1.0)).max(2.0 * self.lipschitz)
    }
}

/// Resolution of the `t` direction in slab quadrature.
pub const SLAB_CELLS_PER_UNIT: f64 = 64.0;
/// Relative tail mass below which the slab is considered wide enough.
pub const SLAB_TAIL: f64 = 1e-10;
const MAX_DOUBLINGS: usize = 40;

fn slab_mass(g: &SlabFunction, domain: &Domain, p: f64, t0: f64, t1: f64, buf: &mut [f64]) -> f64 {
    let cells = ((t1 - t0) * SLAB_CELLS_PER_UNIT).ceil().max(1.0) as usize;
    let dt = (t1 - t0) / cells as f64;
    let dim = domain.dim();
    let mut sum = 0.0;
    for c in domain.cells() {
        let x = &c.center[..dim];
        let mut col = 0.0;
        for k in 0..cells {
            let t = t0 + (k as f64 + 0.5) * dt;
            let v = g.eval(x, t);
            (g.grad)(x, t, buf);
            col += v.abs().powf(p) + buf.iter().map(|d| d.abs().powf(p)).sum::<f64>();
        }
        sum += c.weight * col * dt;
    }
    sum
}

/// Result of a slab quadrature: the norm and the half-height it settled on.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct SlabNorm {
    pub norm: f64,
    pub half_height: f64,
}

/// `‖G‖_{W^{1,p}(Ω×ℝ)}` by midpoint quadrature over `Ω × [−T, T]`, doubling `T`
/// until the added mass falls below [`SLAB_TAIL`] of the total.
pub fn slab_w1p_norm(g: &SlabFunction, domain: &Domain, params: &SobolevParams) -> Result<f64> {
    slab_w1p_norm_detailed(g, domain, params.p).map(|s| s.norm)
}

pub fn slab_w1p_norm_detailed(g: &SlabFunction, domain: &Domain, p: f64) -> Result<SlabNorm> {
    check_exponent(p)?;
    let mut buf = vec![0.0; domain.dim() + 1];
    let mut t = g.initial_half_height();
    let mut mass = slab_mass(g, domain, p, -t, t, &mut buf);
    let mut last_tail = f64::INFINITY;
    let mut growing = 0;
    for _ in 0..MAX_DOUBLINGS {
        if !mass.is_finite() {
            return Err(PmcError::SlabTail(format!("non-finite mass at T = {t}")));
        }
        let tail = slab_mass(g, domain, p, -2.0 * t, -t, &mut buf) + slab_mass(g, domain, p, t, 2.0 * t, &mut buf);
        if mass == 0.0 && tail == 0.0 {
            return Ok(SlabNorm { norm: 0.0, half_height: t });
        }
        mass += tail;
        t *= 2.0;
        if tail <= SLAB_TAIL * mass {
            return Ok(SlabNorm { norm: mass.powf(1.0 / p), half_height: t });
        }
        if tail >= last_tail {
            growing += 1;
            if growing >= 3 {
                return Err(PmcError::SlabTail(format!("tail mass not decreasing under doubling (T = {t})")));
            }
        } else {
            growing = 0;
        }
        last_tail = tail;
    }
    Err(PmcError::SlabTail(format!("no convergence after {MAX_DOUBLINGS} doublings")))
}

/// `‖G(·, v(·))‖_{L^q(Ω)}` for a graph respecting the slab's Lipschitz bound.
pub fn trace_lq_norm(g: &SlabFunction, v: &GridField, q: f64) -> Result<f64> {
    let norm = w1inf_norm(v)?;
    if norm > g.lipschitz * (1.0 + 1e-12) {
        return Err(PmcError::LipschitzBound { norm, bound: g.lipschitz });
    }
    let d = v.domain();
    let vals = (0..d.node_count()).map(|id| g.eval(d.pos(id), v.values()[id])).collect();
    let composed = GridField::from_values(d, "trace", vals)?;
    lq_norm(&composed, q)
}

/// Volume of the unit ball in ℝⁿ.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 / 3.0 * std::f64::consts::PI,
        _ => {
            // ω_n = π^{n/2}/Γ(n/2+1) via the recursion ω_n = 2π/n · ω_{n-2}.
            2.0 * std::f64::consts::PI / n as f64 * unit_ball_volume(n - 2)
        }
    }
}

/// Largest sampled value of `r^{-n}·ℋⁿ(Γ ∩ B_r)` for the graph `Γ` of `v`.
#[derive(Clone, Debug, Serialize)]
pub struct DensityEstimate {
    pub value: f64,
    pub center: Vec<f64>,
    pub radius: f64,
    pub balls: usize,
}

/// Sub-samples per ball radius along each axis in the area quadrature.
const DENSITY_SUBSAMPLES: i64 = 32;

fn ball_area(d: &Domain, v: &[f64], grads: &[Vec<f64>], center: &[f64], r: f64) -> f64 {
    let dim = d.dim();
    let step = r / DENSITY_SUBSAMPLES as f64;
    let cell = step.powi(dim as i32);
    let mut area = 0.0;
    let range = -DENSITY_SUBSAMPLES..DENSITY_SUBSAMPLES;
    let jr = if dim == 2 { range.clone() } else { 0..1 };
    let mut x = [0.0; 2];
    for b in jr {
        for a in range.clone() {
            x[0] = center[0] + (a as f64 + 0.5) * step;
            if dim == 2 {
                x[1] = center[1] + (b as f64 + 0.5) * step;
            }
            let dx2: f64 = (0..dim).map(|k| (x[k] - center[k]).powi(2)).sum();
            if dx2 >= r * r || !d.contains(&x[..dim]) {
                continue;
            }
            let Some(val) = d.interpolate(v, &x[..dim]) else { continue };
            let dt = val - center[dim];
            if dx2 + dt * dt >= r * r {
                continue;
            }
            let mut s = 1.0;
            for g in grads {
                if let Some(gk) = d.interpolate(g, &x[..dim]) {
                    s += gk * gk;
                }
            }
            area += s.sqrt() * cell;
        }
    }
    area
}

/// Monte-Carlo plus stratified search for the graph measure density.
/// A third of the balls sit on the graph at the smallest radius.
pub fn graph_density(v: &GridField, samples: usize, seed: u64) -> Result<DensityEstimate> {
    let d = v.domain();
    let dim = d.dim();
    let grads: Vec<Vec<f64>> = gradient(v)?.into_iter().map(|g| g.into_values()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r_min = 4.0 * d.min_spacing();
    let r_max = (0.5 * d.diameter()).max(r_min);
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for n in d.nodes() {
        for k in 0..dim {
            lo[k] = lo[k].min(n.pos[k]);
            hi[k] = hi[k].max(n.pos[k]);
        }
    }
    let mut best = DensityEstimate { value: 0.0, center: vec![0.0; dim + 1], radius: r_min, balls: samples };
    let small = samples / 3;
    for k in 0..samples {
        let mut x = [0.0; 2];
        let val = loop {
            for a in 0..dim {
                x[a] = rng.gen_range(lo[a]..=hi[a]);
            }
            if !d.contains(&x[..dim]) {
                continue;
            }
            if let Some(val) = d.interpolate(v.values(), &x[..dim]) {
                break val;
            }
        };
        let r = if k < small { r_min } else { r_min * (r_max / r_min).powf(rng.gen_range(0.0..1.0)) };
        let offset = if k < small || rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(-0.5..0.5) * r };
        let mut center = x[..dim].to_vec();
        center.push(val + offset);
        let dens = ball_area(d, v.values(), &grads, &center, r) / r.powi(dim as i32);
        if dens > best.value {
            best = DensityEstimate { value: dens, center, radius: r, balls: samples };
        }
    }
    Ok(best)
}

// ------------------------------------------------------------- ratio sweeps

/// Random Lipschitz graph with `‖v‖_{W^{1,∞}} ≤ bound`: a random trigonometric
/// sum plus a cone, rescaled to a random fraction of the bound.
pub fn random_lipschitz_field(domain: &Arc<Domain>, bound: f64, rng: &mut ChaCha8Rng) -> Result<GridField> {
    let dim = domain.dim();
    let modes: Vec<([f64; 2], f64, f64)> = (0..4)
        .map(|_| {
            let k = [rng.gen_range(-4.0..4.0), if dim == 2 { rng.gen_range(-4.0..4.0) } else { 0.0 }];
            (k, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0))
        })
        .collect();
    let apex = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
    let cone = rng.gen_range(-1.0..1.0);
    let raw = GridField::from_fn(domain, "v", |x| {
        let y = if dim == 2 { x[1] } else { 0.0 };
        let mut s = 0.0;
        for (k, ph, a) in &modes {
            s += a * (k[0] * x[0] + k[1] * y + ph).sin();
        }
        let r = ((x[0] - apex[0]).powi(2) + (y - apex[1]).powi(2)).sqrt();
        s + cone * r
    })?;
    let norm = w1inf_norm(&raw)?;
    let target = bound * rng.gen_range(0.2..0.999);
    if norm == 0.0 {
        return Ok(raw);
    }
    raw.scale(target / norm)
}

#[derive(Clone, Debug, Serialize)]
pub struct RatioSweepReport {
    pub params: SobolevParams,
    pub samples: usize,
    pub lipschitz: f64,
    pub slab_norm: f64,
    pub max_ratio: f64,
    pub argmax_witness: usize,
    pub ratios: Vec<f64>,
}

/// Ratio `‖G(·,v)‖_{L^q}/‖G‖_{W^{1,p}(Ω×ℝ)}` over random graphs with
/// `‖v‖_{W^{1,∞}} ≤ V`. Records the largest ratio; asserts nothing.
pub fn trace_ratio_sweep(
    g: &SlabFunction,
    domain: &Arc<Domain>,
    params: &SobolevParams,
    samples: usize,
    seed: u64,
) -> Result<RatioSweepReport> {
    let slab = slab_w1p_norm(g, domain, params)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ratios = Vec::with_capacity(samples);
    for _ in 0..samples {
        let v = random_lipschitz_field(domain, g.lipschitz, &mut rng)?;
        let t = trace_lq_norm(g, &v, params.q)?;
        ratios.push(if slab > 0.0 { t / slab } else { 0.0 });
    }
    let (argmax, max_ratio) = ratios
        .iter()
        .copied()
        .enumerate()
        .fold((0, 0.0), |acc, (i, r)| if r > acc.1 { (i, r) } else { acc });
    Ok(RatioSweepReport {
        params: *params,
        samples,
        lipschitz: g.lipschitz,
        slab_norm: slab,
        max_ratio,
        argmax_witness: argmax,
        ratios,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::DomainSpec;
    use approx::assert_relative_eq;

    #[test]
    fn derive_q_values_and_endpoint_rejection() {
        let s = derive_q(2, 2.0).unwrap();
        assert_eq!(s.q, 4.0);
        assert_eq!(s.beta, 0.25);
        let s = derive_q(1, 1.5).unwrap();
        assert_relative_eq!(s.q, 3.0, epsilon = 1e-15);
        assert_relative_eq!(s.beta, 0.5 - 1.0 / 6.0, epsilon = 1e-15);
        assert!(matches!(derive_q(2, 1.5), Err(PmcError::ExponentRange { .. })));
        assert!(matches!(derive_q(2, 3.0), Err(PmcError::ExponentRange { .. })));
        let err = derive_q(2, 3.5).unwrap_err().to_string();
        assert!(err.contains("p < n+1"), "{err}");
    }

    #[test]
    fn constant_and_linear_lq_norms() {
        let d = Domain::build(DomainSpec::unit_square(65)).unwrap();
        let one = GridField::from_fn(&d, "1", |_| 1.0).unwrap();
        for q in [1.0, 2.0, 3.5, 7.0] {
            assert_relative_eq!(lq_norm(&one, q).unwrap(), 1.0, epsilon = 1e-12);
        }
        let x = GridField::from_fn(&d, "x", |x| x[0]).unwrap();
        let h2 = (1.0f64 / 64.0).powi(2);
        assert!((lq_norm(&x, 2.0).unwrap() - (1.0f64 / 3.0).sqrt()).abs() < h2);
        assert!((w1p_norm(&x, 2.0).unwrap() - (4.0f64 / 3.0).sqrt()).abs() < h2);
        assert!(lq_norm(&x, 0.5).is_err());
    }

    #[test]
    fn second_derivative_part_of_w2q() {
        let d = Domain::build(DomainSpec::unit_square(33)).unwrap();
        let u = GridField::from_fn(&d, "u", |x| x[0] * x[0]).unwrap();
        let full = w2q_norm(&u, 2.0).unwrap().powi(2);
        let lower = w1p_norm(&u, 2.0).unwrap().powi(2);
        assert_relative_eq!((full - lower).sqrt(), 2.0, epsilon = 1e-9);
    }

    #[test]
    fn holder_of_affine_is_sup_plus_slope() {
        let d = Domain::build(DomainSpec::unit_square(17)).unwrap();
        let u = GridField::from_fn(&d, "u", |x| 0.5 + 3.0 * x[0] + 4.0 * x[1]).unwrap();
        let v = holder_c1beta(&u, 0.25).unwrap();
        assert_relative_eq!(v, 7.5 + 5.0, epsilon = 1e-10);
        let v2 = holder_c1beta(&u.scale(2.0).unwrap(), 0.25).unwrap();
        assert_relative_eq!(v2, 2.0 * v, epsilon = 1e-12);
    }

    #[test]
    fn gaussian_slab_norm() {
        let d = Domain::build(DomainSpec::unit_square(9)).unwrap();
        let g = SlabFunction::new(|_, t| (-t * t).exp(), |_, t, out| {
            out[0] = 0.0;
            out[1] = 0.0;
            out[2] = -2.0 * t * (-t * t).exp();
        });
        let params = derive_q(2, 2.0).unwrap();
        let n = slab_w1p_norm(&g, &d, &params).unwrap();
        assert_relative_eq!(n * n, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-8);
        let n3 = slab_w1p_norm(&g.scaled(-3.0), &d, &params).unwrap();
        assert_relative_eq!(n3, 3.0 * n, epsilon = 1e-12);
        assert_eq!(slab_w1p_norm(&SlabFunction::zero(), &d, &params).unwrap(), 0.0);
    }

    #[test]
    fn slab_rejects_non_decaying_functions() {
        let d = Domain::build(DomainSpec::unit_square(9)).unwrap();
        let g = SlabFunction::new(|_, _| 1.0, |_, _, out| out.fill(0.0));
        assert!(matches!(slab_w1p_norm_detailed(&g, &d, 2.0), Err(PmcError::SlabTail(_))));
    }

    #[test]
    fn trace_of_flat_graph_and_lipschitz_gate() {
        let d = Domain::build(DomainSpec::unit_square(17)).unwrap();
        let g = SlabFunction::new(|_, t| (-t * t).exp(), |_, t, out| {
            out.fill(0.0);
            out[2] = -2.0 * t * (-t * t).exp();
        })
        .with_lipschitz(1.0);
        let zero = GridField::zeros(&d, "v");
        assert_relative_eq!(trace_lq_norm(&g, &zero, 4.0).unwrap(), 1.0, epsilon = 1e-12);
        let steep = GridField::from_fn(&d, "v", |x| 3.0 * x[0]).unwrap();
        assert!(matches!(trace_lq_norm(&g, &steep, 4.0), Err(PmcError::LipschitzBound { .. })));
    }

    #[test]
    fn flat_graph_density_is_pi() {
        let d = Domain::build(DomainSpec::unit_square(33)).unwrap();
        let zero = GridField::zeros(&d, "v");
        let est = graph_density(&zero, 60, 3).unwrap();
        assert!((est.value - std::f64::consts::PI).abs() < 0.02 * std::f64::consts::PI, "{}", est.value);
    }

    #[test]
    fn unit_ball_volumes() {
        assert_relative_eq!(unit_ball_volume(3), 4.0 / 3.0 * std::f64::consts::PI);
        assert_relative_eq!(unit_ball_volume(4), std::f64::consts::PI.powi(2) / 2.0, epsilon = 1e-14);
    }
}
