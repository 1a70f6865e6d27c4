//! The linearized Dirichlet problem `A_ij(∇v [+∇h]) ∂ᵢⱼw [+ B·∇w] = f`,
//! `w = φ` on the boundary, in non-divergence form.
//!
//! Rows are indexed by interior nodes. Boundary values are folded into the
//! right-hand side. The assembled coefficients are frozen at `v`, so the
//! operator is linear in `w`.

use std::io::Write;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{PmcError, Result};
use crate::geometry::{b_coefficients, coeff_matrix_unchecked, BaseGraph};
use crate::grid::{gradient, Domain, GridField, Stencil};
use crate::norms::{derive_q, lq_norm, w2q_norm};
use crate::sparse::{bicgstab, BandedLu, CsrMatrix, Ilu0};

/// Smallest admissible ellipticity constant.
pub const LAMBDA_FLOOR: f64 = 1e-12;
/// Largest bandwidth handled by the banded direct solver.
pub const DIRECT_BANDWIDTH: usize = 10_000;
pub const DEFAULT_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, Default)]
pub struct AssemblyOptions {
    /// Switch first-order terms to one-sided differences at nodes where
    /// `|B_k|Δx/(2λ) > 1`.
    pub upwind: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct AssemblyMeta {
    pub lambda_min: f64,
    pub lambda_max: f64,
    /// Rows whose sign pattern is not that of an M-matrix (negative diagonal,
    /// nonnegative off-diagonal entries including eliminated boundary columns).
    pub sign_violations: usize,
    pub upwinded_rows: usize,
    pub has_b_term: bool,
}

impl AssemblyMeta {
    /// True when every row has the M-matrix sign pattern, in which case the
    /// discrete maximum principle holds.
    pub fn m_matrix(&self) -> bool {
        self.sign_violations == 0
    }
}

#[derive(Clone, Debug)]
pub struct LinearSystem {
    pub matrix: CsrMatrix,
    pub rhs: Vec<f64>,
    /// Dirichlet data; its boundary values are already eliminated into `rhs`.
    pub dirichlet: GridField,
    pub source: GridField,
    pub meta: AssemblyMeta,
}

impl LinearSystem {
    pub fn domain(&self) -> &Arc<Domain> {
        self.dirichlet.domain()
    }

    pub fn write_matrix<W: Write>(&self, out: W) -> std::io::Result<()> {
        self.matrix.write_coo(out)
    }

    /// `A·x − rhs` for interior values `x`.
    pub fn residual(&self, x: &[f64]) -> Vec<f64> {
        let mut r = vec![0.0; x.len()];
        self.matrix.matvec(x, &mut r);
        r.iter_mut().zip(&self.rhs).for_each(|(a, b)| *a -= b);
        r
    }

    /// Interior values of a full field, in row order.
    pub fn restrict(&self, u: &GridField) -> Vec<f64> {
        self.domain().interior().iter().map(|&id| u.values()[id]).collect()
    }
}

pub fn assemble(v: &GridField, h: Option<&GridField>, f: &GridField, phi: &GridField) -> Result<LinearSystem> {
    let base = h.map(BaseGraph::new).transpose()?;
    assemble_with(v, base.as_ref(), f, phi, AssemblyOptions::default())
}

pub fn assemble_with(
    v: &GridField,
    base: Option<&BaseGraph>,
    f: &GridField,
    phi: &GridField,
    opts: AssemblyOptions,
) -> Result<LinearSystem> {
    v.ensure_same_domain(f)?;
    v.ensure_same_domain(phi)?;
    if let Some(b) = base {
        v.ensure_same_domain(&b.field)?;
    }
    let d = v.domain();
    let dim = d.dim();
    let gv = gradient(v)?;
    let n = d.interior().len();
    let mut trip = Vec::with_capacity(n * 9);
    let mut rhs = vec![0.0; n];
    let mut meta = AssemblyMeta {
        lambda_min: f64::INFINITY,
        lambda_max: 0.0,
        has_b_term: base.is_some(),
        ..Default::default()
    };
    let h = d.spacing();
    let mut row: Vec<(usize, f64)> = Vec::with_capacity(16);

    for (r, &id) in d.interior().iter().enumerate() {
        let mut zv = [0.0; 2];
        for k in 0..dim {
            zv[k] = gv[k].values()[id];
        }
        let mut z = zv;
        if let Some(b) = base {
            let zh = b.grad_at(id);
            for k in 0..dim {
                z[k] += zh[k];
            }
        }
        let a = coeff_matrix_unchecked(&z[..dim]);
        if !a.lambda.is_finite() || a.entries.iter().flatten().any(|e| !e.is_finite()) {
            return Err(PmcError::NonFinite { field: "coefficients".into(), node: id });
        }
        if a.lambda < LAMBDA_FLOOR {
            return Err(PmcError::Degenerate(format!(
                "ellipticity {:.3e} below {LAMBDA_FLOOR:e} at node {id} (|∇| = {:.3e})",
                a.lambda,
                (z[0] * z[0] + z[1] * z[1]).sqrt()
            )));
        }
        meta.lambda_min = meta.lambda_min.min(a.lambda);
        meta.lambda_max = meta.lambda_max.max(a.upper);

        row.clear();
        for k in 0..dim {
            push(&mut row, d.d2(id, k), a.get(k, k));
        }
        if dim == 2 && a.get(0, 1) != 0.0 {
            let a12 = a.get(0, 1);
            push(&mut row, &d.mixed_signed(id, a12), 2.0 * a12);
        }
        if let Some(b) = base {
            let coef = b_coefficients(&zv[..dim], &b.grad_at(id)[..dim], b.hess_at(id));
            let mut upwinded = false;
            for k in 0..dim {
                if coef[k] == 0.0 {
                    continue;
                }
                if !coef[k].is_finite() {
                    return Err(PmcError::NonFinite { field: "first-order coefficients".into(), node: id });
                }
                if opts.upwind && coef[k].abs() * h[k] / (2.0 * a.lambda) > 1.0 {
                    let side = usize::from(coef[k] > 0.0);
                    if let Some(l) = d.link(id, k, side) {
                        let s = if side == 1 { 1.0 } else { -1.0 } / l.arm;
                        push(&mut row, &vec![(l.node, s), (id, -s)], coef[k]);
                        upwinded = true;
                        continue;
                    }
                }
                push(&mut row, d.d1(id, k), coef[k]);
            }
            meta.upwinded_rows += usize::from(upwinded);
        }

        row.sort_by_key(|e| e.0);
        let mut b_r = f.values()[id];
        let mut violates = false;
        let mut i = 0;
        while i < row.len() {
            let node = row[i].0;
            let mut w = 0.0;
            while i < row.len() && row[i].0 == node {
                w += row[i].1;
                i += 1;
            }
            if node == id {
                violates |= !(w < 0.0);
            } else {
                // Round-off in combined stencils should not count as a sign
                // violation.
                violates |= w < -1e-12 * (a.upper / (h[0] * h[0]));
            }
            match d.unknown_index(node) {
                Some(c) => trip.push((r, c, w)),
                None => b_r -= w * phi.values()[node],
            }
        }
        meta.sign_violations += usize::from(violates);
        rhs[r] = b_r;
    }
    if n == 0 {
        meta.lambda_min = 1.0;
    }
    Ok(LinearSystem {
        matrix: CsrMatrix::from_triplets(n, trip),
        rhs,
        dirichlet: phi.clone(),
        source: f.clone(),
        meta,
    })
}

fn push(row: &mut Vec<(usize, f64)>, stencil: &Stencil, c: f64) {
    row.extend(stencil.iter().map(|&(n, w)| (n, c * w)));
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SolverChoice {
    #[default]
    Auto,
    Direct,
    Iterative,
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub tol: f64,
    pub method: SolverChoice,
    pub max_iter: usize,
    /// Starting iterate for the iterative solver (ignored by the direct one).
    pub initial_guess: Option<GridField>,
    /// Exponent of the `W^{2,q}` norm in the estimate ratio; defaults to the
    /// `q` paired with the middle of the admissible `p` range.
    pub q: Option<f64>,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions { tol: DEFAULT_TOL, method: SolverChoice::Auto, max_iter: 20_000, initial_guess: None, q: None }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LinearSolveReport {
    pub method: &'static str,
    pub iterations: usize,
    /// `‖A·x − rhs‖₂ / ‖rhs‖₂`, or the absolute norm when `rhs = 0`.
    pub residual: f64,
    /// `‖w‖_∞`.
    pub aleksandrov_lhs: f64,
    /// `sup_∂Ω |φ|`.
    pub aleksandrov_boundary: f64,
    /// `‖f‖_{L^n}`.
    pub source_ln: f64,
    /// Smallest `C` with `‖w‖_∞ ≤ sup_∂Ω|φ| + C‖f‖_{L^n}`; zero when the
    /// boundary term alone suffices.
    pub aleksandrov_constant: f64,
    pub q: f64,
    /// `‖w‖_{W^{2,q}} / (‖f‖_{L^q} + ‖φ‖_{W^{2,q}})`.
    pub estimate_ratio: f64,
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub m_matrix: bool,
}

pub fn solve(sys: &LinearSystem, tol: f64) -> Result<(GridField, LinearSolveReport)> {
    solve_with(sys, &SolveOptions { tol, ..Default::default() })
}

pub fn solve_with(sys: &LinearSystem, opts: &SolveOptions) -> Result<(GridField, LinearSolveReport)> {
    if !(sys.meta.lambda_min > 0.0) {
        return Err(PmcError::Degenerate(format!("system with ellipticity {}", sys.meta.lambda_min)));
    }
    let d = sys.domain();
    let n = sys.rhs.len();
    let bnorm = norm2(&sys.rhs);
    let scale = if bnorm > 0.0 { bnorm } else { 1.0 };
    let rel_residual = |x: &[f64]| norm2(&sys.residual(x)) / scale;

    let direct = match opts.method {
        SolverChoice::Direct => true,
        SolverChoice::Iterative => false,
        SolverChoice::Auto => {
            let (kl, ku) = sys.matrix.bandwidths();
            kl.max(ku) <= DIRECT_BANDWIDTH
        }
    };
    let (x, method, iterations) = if n == 0 {
        (Vec::new(), "direct", 0)
    } else if direct {
        let lu = BandedLu::factor(&sys.matrix)?;
        let mut x = sys.rhs.clone();
        lu.solve(&mut x);
        // A few steps of iterative refinement recover digits lost to
        // pivot growth on strongly anisotropic rows.
        let mut steps = 0;
        while rel_residual(&x) > opts.tol && steps < 3 {
            let mut r = sys.residual(&x);
            lu.solve(&mut r);
            x.iter_mut().zip(&r).for_each(|(a, b)| *a -= b);
            steps += 1;
        }
        (x, "banded-lu", steps)
    } else {
        let pre = Ilu0::new(&sys.matrix)?;
        let mut x = match &opts.initial_guess {
            Some(g) => {
                g.ensure_same_domain(&sys.dirichlet)?;
                sys.restrict(g)
            }
            None => vec![0.0; n],
        };
        let out = bicgstab(&sys.matrix, &pre, &sys.rhs, &mut x, opts.tol, opts.max_iter)?;
        (x, "bicgstab-ilu0", out.iterations)
    };
    let residual = if n == 0 { 0.0 } else { rel_residual(&x) };
    if !(residual <= opts.tol) {
        return Err(PmcError::LinearSolve(format!("{method}: residual {residual:.3e} above tolerance {:.1e}", opts.tol)));
    }

    let mut vals = sys.dirichlet.values().to_vec();
    for (r, &id) in d.interior().iter().enumerate() {
        vals[id] = x[r];
    }
    let w = GridField::from_values(d, "w", vals)?;

    let dim = d.dim();
    let q = match opts.q {
        Some(q) => q,
        None => derive_q(dim, 0.75 * (dim as f64 + 1.0))?.q,
    };
    let lhs = w.max_abs();
    let boundary = sys.dirichlet.max_abs_on(d.boundary());
    let source_ln = lq_norm(&sys.source, dim as f64)?;
    let excess = (lhs - boundary).max(0.0);
    let aleksandrov_constant = if excess <= 1e-10 * (1.0 + boundary) {
        0.0
    } else if source_ln > 0.0 {
        excess / source_ln
    } else {
        f64::INFINITY
    };
    let denom = lq_norm(&sys.source, q)? + w2q_norm(&sys.dirichlet, q)?;
    let wq = w2q_norm(&w, q)?;
    let estimate_ratio = if denom > 0.0 { wq / denom } else if wq == 0.0 { 0.0 } else { f64::INFINITY };
    let report = LinearSolveReport {
        method,
        iterations,
        residual,
        aleksandrov_lhs: lhs,
        aleksandrov_boundary: boundary,
        source_ln,
        aleksandrov_constant,
        q,
        estimate_ratio,
        lambda_min: sys.meta.lambda_min,
        lambda_max: sys.meta.lambda_max,
        m_matrix: sys.meta.m_matrix(),
    };
    Ok((w, report))
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}
