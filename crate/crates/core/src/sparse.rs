//! Compressed sparse rows, banded LU and preconditioned BiCGStab.

use std::io::Write;

use crate::error::{PmcError, Result};

#[derive(Clone, Debug)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Square matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n: usize, mut trip: Vec<(usize, usize, f64)>) -> Self {
        trip.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        let mut row_ptr = vec![0; n + 1];
        let mut cols = Vec::with_capacity(trip.len());
        let mut vals: Vec<f64> = Vec::with_capacity(trip.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in trip {
            assert!(r < n && c < n, "triplet ({r},{c}) outside {n}x{n}");
            if last == Some((r, c)) {
                *vals.last_mut().unwrap() += v;
                continue;
            }
            cols.push(c);
            vals.push(v);
            row_ptr[r + 1] += 1;
            last = Some((r, c));
        }
        for r in 0..n {
            row_ptr[r + 1] += row_ptr[r];
        }
        CsrMatrix { n, row_ptr, cols, vals }
    }

    pub fn nrows(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[r]..self.row_ptr[r + 1];
        self.cols[span.clone()].iter().copied().zip(self.vals[span].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.row(r).find(|&(k, _)| k == c).map_or(0.0, |(_, v)| v)
    }

    pub fn diag(&self, r: usize) -> f64 {
        self.get(r, r)
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for r in 0..self.n {
            y[r] = self.row(r).map(|(c, v)| v * x[c]).sum();
        }
    }

    /// Lower and upper bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let (mut kl, mut ku) = (0, 0);
        for r in 0..self.n {
            for (c, _) in self.row(r) {
                if c < r {
                    kl = kl.max(r - c);
                } else {
                    ku = ku.max(c - r);
                }
            }
        }
        (kl, ku)
    }

    /// Coordinate dump, one `row col value` triple per line.
    pub fn write_coo<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "# rows={} nnz={}", self.n, self.nnz())?;
        for r in 0..self.n {
            for (c, v) in self.row(r) {
                writeln!(out, "{r} {c} {v:e}")?;
            }
        }
        Ok(())
    }
}

fn norm2(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// LU factors of a banded matrix with partial pivoting, stored column-major
/// with `2·kl + ku + 1` rows per column to leave room for pivoting fill.
#[derive(Debug)]
pub struct BandedLu {
    n: usize,
    kl: usize,
    kv: usize,
    ld: usize,
    ab: Vec<f64>,
    piv: Vec<usize>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.nrows();
        let (kl, ku) = a.bandwidths();
        let kv = kl + ku;
        let ld = 2 * kl + ku + 1;
        let mut ab = vec![0.0; n * ld];
        for r in 0..n {
            for (c, v) in a.row(r) {
                ab[c * ld + kv + r - c] += v;
            }
        }
        let mut piv = vec![0; n];
        let mut ju = 0;
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ld + kv;
            let mut jp = 0;
            let mut best = ab[col].abs();
            for r in 1..=km {
                if ab[col + r].abs() > best {
                    best = ab[col + r].abs();
                    jp = r;
                }
            }
            piv[j] = j + jp;
            if best == 0.0 || !best.is_finite() {
                return Err(PmcError::LinearSolve(format!("singular or non-finite pivot in column {j}")));
            }
            ju = ju.max((j + ku + jp).min(n - 1));
            if jp != 0 {
                for c in j..=ju {
                    let base = c * ld + kv - c;
                    ab.swap(base + j, base + j + jp);
                }
            }
            if km > 0 {
                let inv = 1.0 / ab[col];
                for r in 1..=km {
                    ab[col + r] *= inv;
                }
                for c in j + 1..=ju {
                    let base = c * ld + kv - c;
                    let u = ab[base + j];
                    if u != 0.0 {
                        for r in 1..=km {
                            ab[base + j + r] -= ab[col + r] * u;
                        }
                    }
                }
            }
        }
        Ok(BandedLu { n, kl, kv, ld, ab, piv })
    }

    pub fn solve(&self, b: &mut [f64]) {
        let (n, ld, kv) = (self.n, self.ld, self.kv);
        for j in 0..n {
            b.swap(j, self.piv[j]);
            let km = self.kl.min(n - 1 - j);
            let bj = b[j];
            if bj != 0.0 {
                for r in 1..=km {
                    b[j + r] -= self.ab[j * ld + kv + r] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            b[j] /= self.ab[j * ld + kv];
            let bj = b[j];
            for i in j.saturating_sub(kv)..j {
                b[i] -= self.ab[j * ld + kv + i - j] * bj;
            }
        }
    }
}

/// Incomplete LU with the sparsity pattern of the matrix itself.
#[derive(Debug)]
pub struct Ilu0 {
    lu: CsrMatrix,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    pub fn new(a: &CsrMatrix) -> Result<Self> {
        let mut lu = a.clone();
        let n = lu.n;
        let mut diag_pos = vec![usize::MAX; n];
        for r in 0..n {
            for k in lu.row_ptr[r]..lu.row_ptr[r + 1] {
                if lu.cols[k] == r {
                    diag_pos[r] = k;
                }
            }
            if diag_pos[r] == usize::MAX {
                return Err(PmcError::LinearSolve(format!("row {r} has no diagonal entry")));
            }
        }
        let mut pos = vec![usize::MAX; n];
        for r in 0..n {
            let span = lu.row_ptr[r]..lu.row_ptr[r + 1];
            for k in span.clone() {
                pos[lu.cols[k]] = k;
            }
            for k in span.clone() {
                let c = lu.cols[k];
                if c >= r {
                    break;
                }
                let piv = lu.vals[diag_pos[c]];
                if piv == 0.0 {
                    return Err(PmcError::LinearSolve(format!("zero pivot in incomplete factorization at row {c}")));
                }
                let l = lu.vals[k] / piv;
                lu.vals[k] = l;
                for m in diag_pos[c] + 1..lu.row_ptr[c + 1] {
                    let p = pos[lu.cols[m]];
                    if p != usize::MAX {
                        lu.vals[p] -= l * lu.vals[m];
                    }
                }
            }
            for k in span {
                pos[lu.cols[k]] = usize::MAX;
            }
        }
        Ok(Ilu0 { lu, diag_pos })
    }

    pub fn apply(&self, x: &mut [f64]) {
        let lu = &self.lu;
        for r in 0..lu.n {
            let mut s = x[r];
            for k in lu.row_ptr[r]..self.diag_pos[r] {
                s -= lu.vals[k] * x[lu.cols[k]];
            }
            x[r] = s;
        }
        for r in (0..lu.n).rev() {
            let mut s = x[r];
            for k in self.diag_pos[r] + 1..lu.row_ptr[r + 1] {
                s -= lu.vals[k] * x[lu.cols[k]];
            }
            x[r] = s / lu.vals[self.diag_pos[r]];
        }
    }
}

/// Window over which the iterative solver must gain a factor of ten.
pub const STAGNATION_WINDOW: usize = 200;

#[derive(Clone, Copy, Debug)]
pub struct IterativeOutcome {
    pub iterations: usize,
    pub residual: f64,
}

/// Right-preconditioned BiCGStab from the initial guess in `x`. Stops at
/// relative residual `tol`; fails when a [`STAGNATION_WINDOW`] of iterations
/// reduces the residual by less than a factor of ten.
pub fn bicgstab(a: &CsrMatrix, pre: &Ilu0, b: &[f64], x: &mut [f64], tol: f64, max_iter: usize) -> Result<IterativeOutcome> {
    let n = a.nrows();
    let bnorm = norm2(b).max(f64::MIN_POSITIVE);
    let mut r = vec![0.0; n];
    a.matvec(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let mut rel = norm2(&r) / bnorm;
    if rel <= tol {
        return Ok(IterativeOutcome { iterations: 0, residual: rel });
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0, 1.0, 1.0);
    let mut v = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut y = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut s = vec![0.0; n];
    let mut t = vec![0.0; n];
    let mut window_start = rel;
    for it in 1..=max_iter {
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 || omega == 0.0 {
            return Err(PmcError::LinearSolve(format!("BiCGStab breakdown at iteration {it}, residual {rel:.3e}")));
        }
        let beta = rho_new / rho * alpha / omega;
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
        }
        y.copy_from_slice(&p);
        pre.apply(&mut y);
        a.matvec(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        if norm2(&s) / bnorm <= tol {
            for i in 0..n {
                x[i] += alpha * y[i];
            }
            return Ok(IterativeOutcome { iterations: it, residual: norm2(&s) / bnorm });
        }
        z.copy_from_slice(&s);
        pre.apply(&mut z);
        a.matvec(&z, &mut t);
        omega = dot(&t, &s) / dot(&t, &t);
        for i in 0..n {
            x[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        rel = norm2(&r) / bnorm;
        if !rel.is_finite() {
            return Err(PmcError::LinearSolve(format!("non-finite residual at iteration {it}")));
        }
        if rel <= tol {
            return Ok(IterativeOutcome { iterations: it, residual: rel });
        }
        if it % STAGNATION_WINDOW == 0 {
            if rel > window_start / 10.0 {
                return Err(PmcError::LinearSolve(format!(
                    "stagnation: residual {rel:.3e} after {it} iterations, {window_start:.3e} at the start of the window"
                )));
            }
            window_start = rel;
        }
    }
    Err(PmcError::LinearSolve(format!("no convergence in {max_iter} iterations, residual {rel:.3e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplace_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, -2.0));
            if i > 0 {
                t.push((i, i - 1, 1.0));
            }
            if i + 1 < n {
                t.push((i, i + 1, 1.0));
            }
        }
        CsrMatrix::from_triplets(n, t)
    }

    fn residual(a: &CsrMatrix, x: &[f64], b: &[f64]) -> f64 {
        let mut y = vec![0.0; x.len()];
        a.matvec(x, &mut y);
        y.iter().zip(b).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn duplicates_are_summed() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn banded_lu_needs_pivoting() {
        // Zero leading diagonal forces a row swap.
        let a = CsrMatrix::from_triplets(
            4,
            vec![(0, 1, 1.0), (1, 0, 2.0), (1, 1, 1.0), (1, 2, -1.0), (2, 1, 3.0), (2, 3, 1.0), (3, 2, 1.0), (3, 3, 5.0)],
        );
        let x = [1.0, -2.0, 0.5, 3.0];
        let mut b = vec![0.0; 4];
        a.matvec(&x, &mut b);
        let lu = BandedLu::factor(&a).unwrap();
        let mut sol = b.clone();
        lu.solve(&mut sol);
        for (s, e) in sol.iter().zip(x) {
            assert!((s - e).abs() < 1e-14);
        }
    }

    #[test]
    fn direct_and_iterative_agree() {
        let n = 200;
        let a = laplace_1d(n);
        let b: Vec<f64> = (0..n).map(|i| ((i * 7) % 11) as f64 - 5.0).collect();
        let mut x1 = b.clone();
        BandedLu::factor(&a).unwrap().solve(&mut x1);
        assert!(residual(&a, &x1, &b) < 1e-9);
        let mut x2 = vec![0.0; n];
        let out = bicgstab(&a, &Ilu0::new(&a).unwrap(), &b, &mut x2, 1e-13, 2000).unwrap();
        // ILU(0) of a tridiagonal matrix is exact.
        assert!(out.iterations <= 2, "{}", out.iterations);
        for (p, q) in x1.iter().zip(&x2) {
            assert!((p - q).abs() < 1e-8);
        }
    }

    #[test]
    fn singular_matrix_is_reported() {
        let a = CsrMatrix::from_triplets(2, vec![(0, 0, 1.0), (0, 1, 1.0), (1, 0, 1.0), (1, 1, 1.0)]);
        assert!(matches!(BandedLu::factor(&a), Err(PmcError::LinearSolve(_))));
    }

    #[test]
    fn coo_dump_lists_every_entry() {
        let a = laplace_1d(3);
        let mut buf = Vec::new();
        a.write_coo(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 7);
        assert!(text.contains("1 0 1e0"));
    }
}
