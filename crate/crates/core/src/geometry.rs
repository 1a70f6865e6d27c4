//! Pointwise geometry of graphs: the coefficient matrix of the linearized
//! mean-curvature operator, the unit normal, the mean curvature in divergence
//! and non-divergence form, and the first-order term that appears when the
//! equation is rewritten around a minimal base graph.

use crate::error::{PmcError, Result};
use crate::grid::{gradient, hessian, GridField, Hessian};

/// `A(z) = (1+|z|²)^{-1/2}(I − z zᵀ/(1+|z|²))` for `n ≤ 2`, with its ellipticity
/// constant `λ = (1+|z|²)^{-3/2}` and the entry bound `Λ = max |A_ij|`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoeffMatrix {
    pub dim: usize,
    pub entries: [[f64; 2]; 2],
    pub lambda: f64,
    pub upper: f64,
}

impl CoeffMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i][j]
    }

    /// `ξᵀ A ξ`.
    pub fn quadratic_form(&self, xi: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.entries[i][j] * xi[i] * xi[j];
            }
        }
        s
    }

    /// Smallest eigenvalue, from the closed form for symmetric 2×2 matrices.
    pub fn min_eigenvalue(&self) -> f64 {
        if self.dim == 1 {
            return self.entries[0][0];
        }
        let [[a, b], [_, d]] = self.entries;
        let mean = 0.5 * (a + d);
        let rad = (0.25 * (a - d) * (a - d) + b * b).sqrt();
        mean - rad
    }
}

fn check_z(z: &[f64]) -> Result<()> {
    if z.is_empty() || z.len() > 2 {
        return Err(PmcError::InvalidArgument { name: "z", reason: format!("dimension {} not in 1..=2", z.len()) });
    }
    if z.iter().any(|v| !v.is_finite()) {
        return Err(PmcError::InvalidArgument { name: "z", reason: "non-finite gradient".into() });
    }
    Ok(())
}

pub fn coeff_matrix(z: &[f64]) -> Result<CoeffMatrix> {
    check_z(z)?;
    Ok(coeff_matrix_unchecked(z))
}

pub(crate) fn coeff_matrix_unchecked(z: &[f64]) -> CoeffMatrix {
    let dim = z.len();
    let q = 1.0 + z.iter().map(|v| v * v).sum::<f64>();
    let s = 1.0 / q.sqrt();
    let mut entries = [[0.0; 2]; 2];
    let mut upper: f64 = 0.0;
    for i in 0..dim {
        for j in 0..dim {
            let delta = if i == j { 1.0 } else { 0.0 };
            entries[i][j] = s * (delta - z[i] * z[j] / q);
            upper = upper.max(entries[i][j].abs());
        }
    }
    CoeffMatrix { dim, entries, lambda: s / q, upper }
}

/// `ν(z) = (z, −1)/√(1+|z|²)`.
pub fn unit_normal(z: &[f64]) -> Vec<f64> {
    let s = 1.0 / (1.0 + z.iter().map(|v| v * v).sum::<f64>()).sqrt();
    z.iter().map(|v| v * s).chain(std::iter::once(-s)).collect()
}

/// `div(∇u/√(1+|∇u|²))` in conservative form. At interior nodes the flux is
/// evaluated on the two faces along each axis, halfway to the linked
/// neighbor: the normal derivative is the one-sided difference across the
/// face and the tangential one the mean of the nodal values. Boundary nodes
/// differentiate the nodal flux instead.
pub fn mean_curvature_div(u: &GridField) -> Result<GridField> {
    let d = u.domain().clone();
    let dim = d.dim();
    let grad = gradient(u)?;
    let n = d.node_count();
    let uv = u.values();
    let flux: Vec<GridField> = (0..dim)
        .map(|k| {
            let vals = (0..n)
                .map(|id| {
                    let q: f64 = 1.0 + grad.iter().map(|g| g.values()[id].powi(2)).sum::<f64>();
                    grad[k].values()[id] / q.sqrt()
                })
                .collect();
            GridField::from_values(&d, format!("flux{k}"), vals)
        })
        .collect::<Result<_>>()?;
    let face_flux = |id: usize, k: usize, side: usize| -> Option<(f64, f64)> {
        let l = d.link(id, k, side)?;
        let sign = if side == 1 { 1.0 } else { -1.0 };
        let mut z = [0.0; 2];
        for (m, g) in grad.iter().enumerate() {
            z[m] = 0.5 * (g.values()[id] + g.values()[l.node]);
        }
        z[k] = sign * (uv[l.node] - uv[id]) / l.arm;
        let q = 1.0 + z[0] * z[0] + z[1] * z[1];
        Some((z[k] / q.sqrt(), l.arm))
    };
    let vals = (0..n)
        .map(|id| {
            (0..dim)
                .map(|k| match (face_flux(id, k, 0), face_flux(id, k, 1)) {
                    (Some((fm, am)), Some((fp, ap))) if d.unknown_index(id).is_some() => (fp - fm) / (0.5 * (am + ap)),
                    _ => flux[k].apply(d.d1(id, k)),
                })
                .sum()
        })
        .collect();
    GridField::from_values(&d, format!("Hdiv_{}", u.name()), vals)
}

fn contract(a: &CoeffMatrix, hess: &Hessian, id: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..a.dim {
        for j in 0..a.dim {
            s += a.entries[i][j] * hess.at(id, i, j);
        }
    }
    s
}

fn node_grad(grad: &[GridField], id: usize) -> [f64; 2] {
    let mut z = [0.0; 2];
    for (k, g) in grad.iter().enumerate() {
        z[k] = g.values()[id];
    }
    z
}

/// `A_ij(∇u) ∂ᵢⱼu` at every node.
pub fn mean_curvature_nondiv(u: &GridField) -> Result<GridField> {
    let d = u.domain().clone();
    let grad = gradient(u)?;
    let hess = hessian(u)?;
    let dim = d.dim();
    let vals = (0..d.node_count())
        .map(|id| {
            let z = node_grad(&grad, id);
            contract(&coeff_matrix_unchecked(&z[..dim]), &hess, id)
        })
        .collect();
    GridField::from_values(&d, format!("Hnondiv_{}", u.name()), vals)
}

/// Coefficients `B_k` with `B(∇v)·∇w = Σ_k B_k ∂_k w` for the first-order term
/// around a minimal base `h`:
///
/// ```text
/// B(∇v)·∇w = h_ij (1+|∇v+∇h|²)^{-3/2} [(∇v·∇w + 2∇w·∇h)δ_ij − v_i w_j − w_i h_j − w_j h_i]
/// ```
///
/// At `w = v` this equals `A_ij(∇v+∇h)h_ij` minus the minimal-surface residual
/// of `h` (scaled by `((1+|∇h|²)/(1+|∇v+∇h|²))^{3/2}`).
pub fn b_coefficients(grad_v: &[f64], grad_h: &[f64], hess_h: [[f64; 2]; 2]) -> [f64; 2] {
    let dim = grad_v.len();
    let mut q = 1.0;
    for k in 0..dim {
        q += (grad_v[k] + grad_h[k]).powi(2);
    }
    let scale = q.powf(-1.5);
    let lap: f64 = (0..dim).map(|k| hess_h[k][k]).sum();
    let mut b = [0.0; 2];
    for k in 0..dim {
        let mut hv = 0.0;
        let mut hh = 0.0;
        for i in 0..dim {
            hv += hess_h[i][k] * grad_v[i];
            hh += hess_h[k][i] * grad_h[i];
        }
        b[k] = scale * (lap * (grad_v[k] + 2.0 * grad_h[k]) - hv - 2.0 * hh);
    }
    b
}

/// Base graph with its derivatives evaluated once.
#[derive(Clone, Debug)]
pub struct BaseGraph {
    pub field: GridField,
    pub grad: Vec<GridField>,
    pub hess: Hessian,
}

impl BaseGraph {
    pub fn new(h: &GridField) -> Result<Self> {
        Ok(BaseGraph { field: h.clone(), grad: gradient(h)?, hess: hessian(h)? })
    }

    pub fn grad_at(&self, id: usize) -> [f64; 2] {
        node_grad(&self.grad, id)
    }

    pub fn hess_at(&self, id: usize) -> [[f64; 2]; 2] {
        let dim = self.hess.dim();
        let mut m = [[0.0; 2]; 2];
        for i in 0..dim {
            for j in 0..dim {
                m[i][j] = self.hess.at(id, i, j);
            }
        }
        m
    }
}

/// Scalar field `B(∇v)·∇w` for the base `h`.
pub fn b_term(v: &GridField, h: &GridField, w: &GridField) -> Result<GridField> {
    v.ensure_same_domain(h)?;
    v.ensure_same_domain(w)?;
    let base = BaseGraph::new(h)?;
    b_term_with(v, &base, w)
}

pub fn b_term_with(v: &GridField, base: &BaseGraph, w: &GridField) -> Result<GridField> {
    let d = v.domain().clone();
    let dim = d.dim();
    let gv = gradient(v)?;
    let gw = gradient(w)?;
    let vals = (0..d.node_count())
        .map(|id| {
            let b = b_coefficients(&node_grad(&gv, id)[..dim], &base.grad_at(id)[..dim], base.hess_at(id));
            let zw = node_grad(&gw, id);
            (0..dim).map(|k| b[k] * zw[k]).sum()
        })
        .collect();
    GridField::from_values(&d, "b_term", vals)
}

/// `A_ij(∇v + ∇h) ∂ᵢⱼw`, the frozen-coefficient operator applied to `w`.
pub fn frozen_operator(v: &GridField, h: Option<&GridField>, w: &GridField) -> Result<GridField> {
    let d = v.domain().clone();
    let dim = d.dim();
    let coeff_field = match h {
        Some(h) => v.add(h)?,
        None => v.clone(),
    };
    let gz = gradient(&coeff_field)?;
    let hw = hessian(w)?;
    let vals = (0..d.node_count())
        .map(|id| contract(&coeff_matrix_unchecked(&node_grad(&gz, id)[..dim]), &hw, id))
        .collect();
    GridField::from_values(&d, "frozen_operator", vals)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Domain, DomainSpec};
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_at_zero_slope() {
        let a = coeff_matrix(&[0.0, 0.0]).unwrap();
        assert_eq!(a.entries, [[1.0, 0.0], [0.0, 1.0]]);
        assert_eq!(a.lambda, 1.0);
    }

    #[test]
    fn unit_slope_entries_and_eigenvalue() {
        let a = coeff_matrix(&[1.0, 0.0]).unwrap();
        assert_relative_eq!(a.get(0, 0), 0.353_553_390_593_273_7, epsilon = 1e-15);
        assert_eq!(a.get(0, 1), 0.0);
        assert_relative_eq!(a.get(1, 1), 0.707_106_781_186_547_5, epsilon = 1e-15);
        assert_relative_eq!(a.min_eigenvalue(), 2f64.powf(-1.5), epsilon = 1e-15);
        assert_relative_eq!(a.lambda, 2f64.powf(-1.5), epsilon = 1e-15);
    }

    #[test]
    fn rejects_non_finite_slope() {
        assert!(coeff_matrix(&[f64::NAN, 0.0]).is_err());
        assert!(coeff_matrix(&[f64::INFINITY]).is_err());
    }

    #[test]
    fn normal_closed_forms() {
        assert_eq!(unit_normal(&[0.0, 0.0]), vec![0.0, 0.0, -1.0]);
        let nu = unit_normal(&[1.0, 0.0]);
        assert_relative_eq!(nu[0], std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
        assert_eq!(nu[1], 0.0);
        assert_relative_eq!(nu[2], -std::f64::consts::FRAC_1_SQRT_2, epsilon = 1e-15);
    }

    #[test]
    fn sampled_ellipticity_and_entry_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..10_000 {
            let r = rng.gen_range(0.0..10.0);
            let ang: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let z = [r * ang.cos(), r * ang.sin()];
            let xi = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            let a = coeff_matrix(&z).unwrap();
            let xi2 = xi[0] * xi[0] + xi[1] * xi[1];
            let bound = (1.0 + r * r).powf(-1.5) * xi2;
            assert!(a.quadratic_form(&xi) >= bound - 1e-12 * bound.max(1e-300));
            assert!(a.upper <= 1.0);
            let nu = unit_normal(&z);
            let len: f64 = nu.iter().map(|v| v * v).sum::<f64>().sqrt();
            assert!((len - 1.0).abs() <= 1e-14);
            assert!(nu[2] < 0.0);
        }
    }

    #[test]
    fn affine_graph_is_flat() {
        let d = Domain::build(DomainSpec::unit_square(17)).unwrap();
        let u = GridField::from_fn(&d, "u", |x| 0.4 + 3.0 * x[0] - 2.0 * x[1]).unwrap();
        assert!(mean_curvature_div(&u).unwrap().max_abs() < 1e-12);
        assert!(mean_curvature_nondiv(&u).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn b_term_vanishes_for_affine_base_or_zero_w() {
        let d = Domain::build(DomainSpec::unit_square(13)).unwrap();
        let v = GridField::from_fn(&d, "v", |x| (2.0 * x[0]).sin() * x[1]).unwrap();
        let w = GridField::from_fn(&d, "w", |x| x[0] * x[0] - x[1]).unwrap();
        let h_affine = GridField::from_fn(&d, "h", |x| 1.0 + 0.5 * x[0] + 2.0 * x[1]).unwrap();
        assert!(b_term(&v, &h_affine, &w).unwrap().max_abs() < 1e-10);
        let h = GridField::from_fn(&d, "h", |x| (x[0].cos() / x[1].cos()).ln()).unwrap();
        let zero = GridField::zeros(&d, "0");
        assert_eq!(b_term(&v, &h, &zero).unwrap().max_abs(), 0.0);
    }
}
