//! Small dense LU factorisation and a restarted, right-preconditioned GMRES.
//!
//! Both are generic over [`Real`]; the systems here are either tiny (one
//! vertical line, `nz × nz`) or matrix-free, so nothing heavier is needed.

use crate::error::{Error, Result};
use crate::scalar::{to_f64, Real};

/// LU factorisation with partial pivoting of a row-major square matrix.
#[derive(Clone, Debug)]
pub struct DenseLu<T> {
    n: usize,
    lu: Vec<T>,
    piv: Vec<usize>,
}

impl<T: Real> DenseLu<T> {
    pub fn new(mut a: Vec<T>, n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::ShapeMismatch(format!("matrix of length {} is not {n}x{n}", a.len())));
        }
        let mut piv: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let (mut p, mut best) = (k, a[k * n + k].abs());
            for i in k + 1..n {
                let v = a[i * n + k].abs();
                if v > best {
                    p = i;
                    best = v;
                }
            }
            if best == T::zero() || !best.is_finite() {
                return Err(Error::InvalidArgument("singular matrix in LU factorisation".into()));
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
                piv.swap(k, p);
            }
            let d = a[k * n + k];
            for i in k + 1..n {
                let l = a[i * n + k] / d;
                a[i * n + k] = l;
                if l != T::zero() {
                    for j in k + 1..n {
                        a[i * n + j] = a[i * n + j] - l * a[k * n + j];
                    }
                }
            }
        }
        Ok(DenseLu { n, lu: a, piv })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b`, overwriting `b` with `x`.
    pub fn solve_in_place(&self, b: &mut [T]) {
        let n = self.n;
        let mut x: Vec<T> = self.piv.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s = s - self.lu[i * n + j] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s = s - self.lu[i * n + j] * x[j];
            }
            x[i] = s / self.lu[i * n + i];
        }
        b.copy_from_slice(&x);
    }
}

/// Outcome of an iterative solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Final `‖b − A x‖ / ‖b‖`.
    pub relative_residual: f64,
}

fn norm<T: Real>(x: &[T]) -> T {
    x.iter().map(|&v| v * v).sum::<T>().sqrt()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Restarted GMRES with right preconditioning, `A M⁻¹ y = b`, `x = M⁻¹ y`.
///
/// `apply` evaluates `A x` and `precond` evaluates `M⁻¹ r`. Convergence is
/// declared when the true relative residual drops below `tol`.
pub fn gmres<T: Real>(
    mut apply: impl FnMut(&[T]) -> Vec<T>,
    mut precond: impl FnMut(&[T]) -> Vec<T>,
    b: &[T],
    x0: Option<&[T]>,
    tol: T,
    max_iter: usize,
    restart: usize,
) -> Result<(Vec<T>, SolveReport)> {
    let n = b.len();
    let bnorm = norm(b);
    if bnorm == T::zero() {
        return Ok((vec![T::zero(); n], SolveReport { iterations: 0, relative_residual: 0.0 }));
    }
    let mut x = x0.map(|v| v.to_vec()).unwrap_or_else(|| vec![T::zero(); n]);
    let mut total = 0usize;
    let restart = restart.max(1);
    loop {
        let ax = apply(&x);
        let r: Vec<T> = b.iter().zip(&ax).map(|(&bi, &ai)| bi - ai).collect();
        let beta = norm(&r);
        let rel = beta / bnorm;
        if !rel.is_finite() {
            return Err(Error::NonConvergence { iterations: total, residual: to_f64(rel) });
        }
        if rel <= tol {
            return Ok((x, SolveReport { iterations: total, relative_residual: to_f64(rel) }));
        }
        if total >= max_iter {
            return Err(Error::NonConvergence { iterations: total, residual: to_f64(rel) });
        }

        let m = restart.min(max_iter - total);
        let mut basis: Vec<Vec<T>> = Vec::with_capacity(m + 1);
        basis.push(r.iter().map(|&v| v / beta).collect());
        let mut h = vec![vec![T::zero(); m]; m + 1];
        let (mut cs, mut sn) = (vec![T::zero(); m], vec![T::zero(); m]);
        let mut g = vec![T::zero(); m + 1];
        g[0] = beta;
        let mut k_used = 0;
        for k in 0..m {
            let mut w = apply(&precond(&basis[k]));
            // modified Gram–Schmidt, twice for robustness
            for _ in 0..2 {
                for (i, vi) in basis.iter().enumerate() {
                    let c = dot(&w, vi);
                    h[i][k] = h[i][k] + c;
                    for (wj, &vj) in w.iter_mut().zip(vi) {
                        *wj = *wj - c * vj;
                    }
                }
            }
            let wn = norm(&w);
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let den = (h[k][k] * h[k][k] + h[k + 1][k] * h[k + 1][k]).sqrt();
            if den == T::zero() {
                cs[k] = T::one();
                sn[k] = T::zero();
            } else {
                cs[k] = h[k][k] / den;
                sn[k] = h[k + 1][k] / den;
            }
            h[k][k] = cs[k] * h[k][k] + sn[k] * h[k + 1][k];
            h[k + 1][k] = T::zero();
            g[k + 1] = -sn[k] * g[k];
            g[k] = cs[k] * g[k];
            k_used = k + 1;
            total += 1;
            // The Arnoldi estimate is slightly optimistic; stop a little early
            // and let the outer loop confirm with the true residual.
            if g[k + 1].abs() / bnorm <= tol * T::from_f64(0.5).unwrap() || wn == T::zero() {
                break;
            }
            basis.push(w.iter().map(|&v| v / wn).collect());
        }
        let mut y = vec![T::zero(); k_used];
        for i in (0..k_used).rev() {
            let mut s = g[i];
            for j in i + 1..k_used {
                s = s - h[i][j] * y[j];
            }
            y[i] = s / h[i][i];
        }
        let mut z = vec![T::zero(); n];
        for (yi, vi) in y.iter().zip(&basis) {
            for (zj, &vj) in z.iter_mut().zip(vi) {
                *zj = *zj + *yi * vj;
            }
        }
        let dx = precond(&z);
        for (xi, di) in x.iter_mut().zip(dx) {
            *xi = *xi + di;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lu_solves_small_system() {
        let a = vec![0.0, 2.0, 1.0, 1.0, 1.0, 0.0, 3.0, 0.0, 1.0];
        let lu = DenseLu::new(a.clone(), 3).unwrap();
        let x = [1.0, -2.0, 0.5];
        let mut b: Vec<f64> = (0..3).map(|i| (0..3).map(|j| a[i * 3 + j] * x[j]).sum()).collect();
        lu.solve_in_place(&mut b);
        for (u, v) in b.iter().zip(&x) {
            assert!((u - v).abs() < 1e-14);
        }
    }

    #[test]
    fn lu_rejects_singular() {
        assert!(DenseLu::new(vec![1.0, 2.0, 2.0, 4.0], 2).is_err());
    }

    #[test]
    fn gmres_converges_on_nonsymmetric_system() {
        let n = 40;
        let a = |x: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|i| {
                    let mut s = 4.0 * x[i];
                    if i > 0 {
                        s -= 1.5 * x[i - 1];
                    }
                    if i + 1 < n {
                        s -= 0.5 * x[i + 1];
                    }
                    s
                })
                .collect()
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let (x, rep) = gmres(a, |r| r.iter().map(|v| v / 4.0).collect(), &b, None, 1e-12, 200, 10).unwrap();
        let ax = a(&x);
        let res: f64 = ax.iter().zip(&b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        assert!(res <= 1e-11 * norm(&b), "{rep:?}");
    }

    #[test]
    fn gmres_zero_rhs_returns_zero() {
        let (x, rep) = gmres(|x: &[f64]| x.to_vec(), |r| r.to_vec(), &[0.0; 5], None, 1e-10, 10, 5).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
        assert_eq!(rep.iterations, 0);
    }

    #[test]
    fn gmres_reports_nonconvergence() {
        let a = |x: &[f64]| -> Vec<f64> { x.iter().enumerate().map(|(i, v)| v * (1.0 + i as f64 * 100.0)).collect() };
        let b = vec![1.0; 50];
        let err = gmres(a, |r| r.to_vec(), &b, None, 1e-14, 3, 3).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { iterations: 3, .. }));
    }
}
