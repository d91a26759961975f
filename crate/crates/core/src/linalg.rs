//! Small dense/iterative kernels used by the solvers: Thomas algorithm,
//! conjugate gradients, restarted GMRES with a caller-supplied inner
//! product, and a symmetric eigensolver for small Rayleigh-Ritz matrices.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x.iter_mut() {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Solves a tridiagonal system. `lower[i]` couples row `i` to `i-1`
/// (`lower[0]` unused), `upper[i]` couples row `i` to `i+1`.
pub fn solve_tridiagonal(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    let mut beta = diag[0];
    if beta == 0.0 {
        return Err(Error::Solver { iterations: 0, residual: f64::INFINITY });
    }
    c[0] = upper[0] / beta;
    d[0] = rhs[0] / beta;
    for i in 1..n {
        beta = diag[i] - lower[i] * c[i - 1];
        if beta == 0.0 || !beta.is_finite() {
            return Err(Error::Solver { iterations: i, residual: f64::INFINITY });
        }
        c[i] = if i + 1 < n { upper[i] / beta } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / beta;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    Ok(x)
}

pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

/// Conjugate gradients for a symmetric positive definite operator.
/// Convergence is declared when `|r| <= tol * |b|`.
pub fn conjugate_gradient<F>(apply: F, b: &[f64], tol: f64, max_iter: usize) -> Result<CgOutcome>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, residual: 0.0 });
    }
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for it in 0..max_iter {
        if rr.sqrt() <= tol * bnorm {
            return Ok(CgOutcome { x, iterations: it, residual: rr.sqrt() / bnorm });
        }
        apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            return Err(Error::Solver { iterations: it, residual: rr.sqrt() / bnorm });
        }
        let alpha = rr / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        rr = rr_new;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    let residual = rr.sqrt() / bnorm;
    if residual <= tol {
        Ok(CgOutcome { x, iterations: max_iter, residual })
    } else {
        Err(Error::Solver { iterations: max_iter, residual })
    }
}

pub struct GmresOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
}

/// Restarted GMRES with a caller-supplied inner product. Stops when the
/// residual norm (in that inner product) drops below `tol * |b|`.
pub fn gmres<A, I>(apply: A, inner: I, b: &[f64], tol: f64, restart: usize, max_iter: usize) -> Result<GmresOutcome>
where
    A: Fn(&[f64]) -> Result<Vec<f64>>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    let bnorm = inner(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(GmresOutcome { x, iterations: 0, residual: 0.0, converged: true });
    }
    let mut total = 0;
    let mut r = b.to_vec();
    let mut rnorm = bnorm;
    while total < max_iter {
        let m = restart.min(max_iter - total).max(1);
        let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
        let mut v0 = r.clone();
        scale(1.0 / rnorm, &mut v0);
        basis.push(v0);
        let mut h = vec![vec![0.0; m]; m + 1];
        let mut cs = vec![0.0; m];
        let mut sn = vec![0.0; m];
        let mut g = vec![0.0; m + 1];
        g[0] = rnorm;
        let mut used = 0;
        for j in 0..m {
            let mut w = apply(&basis[j])?;
            for (i, vi) in basis.iter().enumerate() {
                h[i][j] = inner(&w, vi);
                axpy(-h[i][j], vi, &mut w);
            }
            // second pass keeps the basis orthogonal to working precision
            for (i, vi) in basis.iter().enumerate() {
                let c = inner(&w, vi);
                h[i][j] += c;
                axpy(-c, vi, &mut w);
            }
            let wn = inner(&w, &w).sqrt();
            h[j + 1][j] = wn;
            for i in 0..j {
                let t = cs[i] * h[i][j] + sn[i] * h[i + 1][j];
                h[i + 1][j] = -sn[i] * h[i][j] + cs[i] * h[i + 1][j];
                h[i][j] = t;
            }
            let denom = (h[j][j] * h[j][j] + h[j + 1][j] * h[j + 1][j]).sqrt();
            if denom == 0.0 {
                cs[j] = 1.0;
                sn[j] = 0.0;
            } else {
                cs[j] = h[j][j] / denom;
                sn[j] = h[j + 1][j] / denom;
            }
            h[j][j] = cs[j] * h[j][j] + sn[j] * h[j + 1][j];
            h[j + 1][j] = 0.0;
            g[j + 1] = -sn[j] * g[j];
            g[j] *= cs[j];
            used = j + 1;
            total += 1;
            if g[j + 1].abs() <= tol * bnorm || wn == 0.0 {
                break;
            }
            scale(1.0 / wn, &mut w);
            basis.push(w);
        }
        let mut y = vec![0.0; used];
        for i in (0..used).rev() {
            let mut s = g[i];
            for k in i + 1..used {
                s -= h[i][k] * y[k];
            }
            y[i] = s / h[i][i];
        }
        for (k, yk) in y.iter().enumerate() {
            axpy(*yk, &basis[k], &mut x);
        }
        let ax = apply(&x)?;
        r = sub(b, &ax);
        rnorm = inner(&r, &r).sqrt();
        if rnorm <= tol * bnorm {
            return Ok(GmresOutcome { x, iterations: total, residual: rnorm / bnorm, converged: true });
        }
    }
    Ok(GmresOutcome { x, iterations: total, residual: rnorm / bnorm, converged: false })
}

/// Eigen-decomposition of a small symmetric matrix, eigenvalues sorted in
/// decreasing order with matching eigenvector columns.
pub fn symmetric_eigen(matrix: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = matrix.len();
    let m = DMatrix::from_fn(n, n, |i, j| 0.5 * (matrix[i][j] + matrix[j][i]));
    let eig = m.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = order.iter().map(|&i| (0..n).map(|r| eig.eigenvectors[(r, i)]).collect()).collect();
    (values, vectors)
}

/// Solves a small dense system by LU with partial pivoting.
pub fn solve_dense(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let m = DMatrix::from_fn(n, n, |i, j| a[i][j]);
    let rhs = nalgebra::DVector::from_column_slice(b);
    m.lu().solve(&rhs).map(|v| v.iter().copied().collect())
}
