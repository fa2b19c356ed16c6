use std::fmt;

use super::precond::Preconditioner;
use super::vector::{axpy, dot, norm2};
use crate::assembly::SparseMatrix;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverReport {
    pub iterations: usize,
    /// `‖b − A x‖ / ‖b‖` of the returned iterate.
    pub relative_residual: f64,
    pub converged: bool,
    pub breakdown: bool,
    /// Residual norm the method minimizes, one entry per iteration (the
    /// preconditioned norm for MINRES, the Euclidean norm for CG and GMRES),
    /// relative to the initial residual.
    pub history: Vec<f64>,
}

impl fmt::Display for SolverReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} after {} iterations, relative residual {:.3e}{}",
            if self.converged { "converged" } else { "not converged" },
            self.iterations,
            self.relative_residual,
            if self.breakdown { " (breakdown)" } else { "" }
        )
    }
}

fn true_residual(a: &SparseMatrix, b: &[f64], x: &[f64], bnorm: f64) -> f64 {
    let mut r = a.mul_vec(x);
    r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
    norm2(&r) / bnorm
}

/// Restarts an inner iteration from the current iterate until the true
/// relative residual meets `tol` or the iteration budget is spent.
fn drive<F>(a: &SparseMatrix, b: &[f64], x: &mut [f64], tol: f64, maxit: usize, mut inner: F) -> SolverReport
where
    F: FnMut(&mut [f64], usize, f64, &mut SolverReport) -> bool,
{
    let bnorm = norm2(b);
    let mut report = SolverReport::default();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        report.converged = true;
        return report;
    }
    let mut rel = true_residual(a, b, x, bnorm);
    while rel > tol && report.iterations < maxit {
        // aim a bit below tol so the recomputed residual lands under it
        let target = 0.5 * tol * bnorm / (rel * bnorm).max(f64::MIN_POSITIVE);
        let budget = maxit - report.iterations;
        let broke = inner(x, budget, target.min(1.0), &mut report);
        let new_rel = true_residual(a, b, x, bnorm);
        let stalled = new_rel >= rel * 0.999;
        rel = new_rel;
        if broke {
            report.breakdown = rel > tol;
            break;
        }
        if stalled && rel > tol {
            break;
        }
    }
    report.relative_residual = rel;
    report.converged = rel <= tol;
    report
}

/// Preconditioned conjugate gradients, zero initial guess.
pub fn cg(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    maxit: usize,
    precond: &dyn Preconditioner,
) -> (Vec<f64>, SolverReport) {
    let mut x = vec![0.0; b.len()];
    let report = cg_with_guess(a, b, &mut x, tol, maxit, precond);
    (x, report)
}

/// Conjugate gradients starting from the contents of `x`.
pub fn cg_with_guess(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    maxit: usize,
    precond: &dyn Preconditioner,
) -> SolverReport {
    drive(a, b, x, tol, maxit, |x, budget, rtol, report| {
        let n = b.len();
        let mut r = a.mul_vec(x);
        r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let r0 = norm2(&r);
        let mut z = vec![0.0; n];
        precond.apply(&r, &mut z);
        let mut p = z.clone();
        let mut rz = dot(&r, &z);
        let mut ap = vec![0.0; n];
        for _ in 0..budget {
            a.matvec(&p, &mut ap);
            let pap = dot(&p, &ap);
            if pap <= 0.0 || !pap.is_finite() {
                return true;
            }
            let alpha = rz / pap;
            axpy(alpha, &p, x);
            axpy(-alpha, &ap, &mut r);
            report.iterations += 1;
            let rn = norm2(&r) / r0;
            report.history.push(rn);
            if rn <= rtol {
                return false;
            }
            precond.apply(&r, &mut z);
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for (pi, zi) in p.iter_mut().zip(&z) {
                *pi = zi + beta * *pi;
            }
        }
        false
    })
}

/// Preconditioned MINRES for symmetric (possibly indefinite) systems with an
/// SPD preconditioner, zero initial guess.
pub fn minres(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    maxit: usize,
    precond: &dyn Preconditioner,
) -> (Vec<f64>, SolverReport) {
    let mut x = vec![0.0; b.len()];
    let report = minres_with_guess(a, b, &mut x, tol, maxit, precond);
    (x, report)
}

pub fn minres_with_guess(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    maxit: usize,
    precond: &dyn Preconditioner,
) -> SolverReport {
    let mut scale0: Option<f64> = None;
    drive(a, b, x, tol, maxit, |x, budget, rtol, report| {
        let n = b.len();
        let mut r1 = a.mul_vec(x);
        r1.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
        let mut y = vec![0.0; n];
        precond.apply(&r1, &mut y);
        let b1sq = dot(&r1, &y);
        if b1sq < 0.0 {
            return true;
        }
        let beta1 = b1sq.sqrt();
        if beta1 == 0.0 {
            return false;
        }
        let scale = *scale0.get_or_insert(beta1);

        let mut r2 = r1.clone();
        let (mut oldb, mut beta) = (0.0, beta1);
        let (mut dbar, mut epsln) = (0.0, 0.0);
        let mut phibar = beta1;
        let (mut cs, mut sn) = (-1.0f64, 0.0f64);
        let mut w = vec![0.0; n];
        let mut w2 = vec![0.0; n];
        let mut v = vec![0.0; n];

        for _ in 0..budget {
            let s = 1.0 / beta;
            v.iter_mut().zip(&y).for_each(|(vi, yi)| *vi = s * yi);
            a.matvec(&v, &mut y);
            if oldb != 0.0 {
                axpy(-beta / oldb, &r1, &mut y);
            }
            let alfa = dot(&v, &y);
            axpy(-alfa / beta, &r2, &mut y);
            std::mem::swap(&mut r1, &mut r2);
            r2.copy_from_slice(&y);
            precond.apply(&r2, &mut y);
            oldb = beta;
            let bsq = dot(&r2, &y);
            if bsq < 0.0 {
                return true;
            }
            beta = bsq.sqrt();

            let oldeps = epsln;
            let delta = cs * dbar + sn * alfa;
            let gbar = sn * dbar - cs * alfa;
            epsln = sn * beta;
            dbar = -cs * beta;
            let gamma = gbar.hypot(beta).max(f64::EPSILON);
            cs = gbar / gamma;
            sn = beta / gamma;
            let phi = cs * phibar;
            phibar *= sn;

            let denom = 1.0 / gamma;
            // w_new = (v - oldeps*w1 - delta*w2) / gamma, with w1 <- w2 <- w
            for i in 0..n {
                let w1 = w2[i];
                w2[i] = w[i];
                w[i] = (v[i] - oldeps * w1 - delta * w2[i]) * denom;
                x[i] += phi * w[i];
            }
            report.iterations += 1;
            report.history.push(phibar.abs() / scale);
            if phibar.abs() <= rtol * beta1 {
                return false;
            }
            if beta == 0.0 {
                return false;
            }
        }
        false
    })
}

/// Restarted GMRES with right preconditioning, zero initial guess. For
/// consistent singular systems the iterate stays in the preconditioned
/// Krylov space of `b`.
pub fn gmres(
    a: &SparseMatrix,
    b: &[f64],
    tol: f64,
    maxit: usize,
    restart: usize,
    precond: &dyn Preconditioner,
) -> (Vec<f64>, SolverReport) {
    let mut x = vec![0.0; b.len()];
    let report = gmres_with_guess(a, b, &mut x, tol, maxit, restart, precond);
    (x, report)
}

pub fn gmres_with_guess(
    a: &SparseMatrix,
    b: &[f64],
    x: &mut [f64],
    tol: f64,
    maxit: usize,
    restart: usize,
    precond: &dyn Preconditioner,
) -> SolverReport {
    let m = restart.max(1);
    let mut scale0: Option<f64> = None;
    drive(a, b, x, tol, maxit, |x, budget, rtol, report| {
        let n = b.len();
        let mut left = budget;
        loop {
            let mut r = a.mul_vec(x);
            r.iter_mut().zip(b).for_each(|(ri, bi)| *ri = bi - *ri);
            let beta = norm2(&r);
            if beta == 0.0 {
                return false;
            }
            let scale = *scale0.get_or_insert(beta);
            let target = rtol * beta;
            let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
            basis.push(r.iter().map(|v| v / beta).collect());
            let mut hess: Vec<Vec<f64>> = Vec::with_capacity(m);
            let mut g = vec![0.0; m + 1];
            g[0] = beta;
            let mut cs = vec![0.0; m];
            let mut sn = vec![0.0; m];
            let mut z = vec![0.0; n];
            let mut k = 0;
            let mut happy = false;
            while k < m && left > 0 {
                precond.apply(&basis[k], &mut z);
                let mut w = a.mul_vec(&z);
                let mut h = vec![0.0; k + 2];
                for (i, vi) in basis.iter().enumerate() {
                    h[i] = dot(&w, vi);
                    axpy(-h[i], vi, &mut w);
                }
                h[k + 1] = norm2(&w);
                for i in 0..k {
                    let t = cs[i] * h[i] + sn[i] * h[i + 1];
                    h[i + 1] = -sn[i] * h[i] + cs[i] * h[i + 1];
                    h[i] = t;
                }
                let hk1 = h[k + 1];
                let denom = h[k].hypot(hk1);
                if denom == 0.0 {
                    // the Krylov space is exhausted without progress
                    happy = true;
                    break;
                }
                cs[k] = h[k] / denom;
                sn[k] = hk1 / denom;
                h[k] = denom;
                h[k + 1] = 0.0;
                g[k + 1] = -sn[k] * g[k];
                g[k] *= cs[k];
                hess.push(h);
                k += 1;
                left -= 1;
                report.iterations += 1;
                report.history.push(g[k].abs() / scale);
                if g[k].abs() <= target || hk1 <= 1e-14 * beta {
                    happy = hk1 <= 1e-14 * beta;
                    break;
                }
                basis.push(w.iter().map(|v| v / hk1).collect());
            }
            // back substitution for the k x k triangular system
            let mut yk = vec![0.0; k];
            for i in (0..k).rev() {
                let mut s = g[i];
                for j in i + 1..k {
                    s -= hess[j][i] * yk[j];
                }
                yk[i] = s / hess[i][i];
            }
            let mut u = vec![0.0; n];
            for (j, yj) in yk.iter().enumerate() {
                axpy(*yj, &basis[j], &mut u);
            }
            precond.apply(&u, &mut z);
            axpy(1.0, &z, x);
            let reached = k > 0 && g[k].abs() <= target;
            if reached || happy || left == 0 {
                return false;
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::precond::Identity;

    #[test]
    fn cg_two_by_two() {
        let a = SparseMatrix::from_dense(&[vec![4.0, 1.0], vec![1.0, 3.0]]);
        let (x, rep) = cg(&a, &[1.0, 2.0], 1e-14, 10, &Identity);
        assert!(rep.converged);
        assert!((x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn cg_identity_one_iteration() {
        let a = SparseMatrix::identity(5);
        let b = [1.0, -2.0, 3.0, 0.5, 7.0];
        let (x, rep) = cg(&a, &b, 1e-12, 10, &Identity);
        assert_eq!(rep.iterations, 1);
        assert_eq!(x, b.to_vec());
    }

    #[test]
    fn zero_rhs_needs_no_iterations() {
        let a = SparseMatrix::identity(3);
        for (x, rep) in [
            cg(&a, &[0.0; 3], 1e-12, 10, &Identity),
            minres(&a, &[0.0; 3], 1e-12, 10, &Identity),
            gmres(&a, &[0.0; 3], 1e-12, 10, 5, &Identity),
        ] {
            assert_eq!(rep.iterations, 0);
            assert!(rep.converged);
            assert_eq!(x, vec![0.0; 3]);
        }
    }

    #[test]
    fn minres_indefinite_diagonal() {
        let a = SparseMatrix::from_dense(&[vec![1.0, 0.0], vec![0.0, -1.0]]);
        let (x, rep) = minres(&a, &[2.0, 3.0], 1e-14, 10, &Identity);
        assert!(rep.converged);
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] + 3.0).abs() < 1e-14);
    }

    #[test]
    fn gmres_permutation() {
        let a = SparseMatrix::from_dense(&[vec![0.0, 1.0], vec![1.0, 0.0]]);
        let (x, rep) = gmres(&a, &[1.0, 2.0], 1e-14, 10, 5, &Identity);
        assert!(rep.converged, "{rep}");
        assert!((x[0] - 2.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn maxit_exceeded_is_reported() {
        let n = 50;
        let mut rows = vec![vec![0.0; n]; n];
        for i in 0..n {
            rows[i][i] = 2.0;
            if i > 0 {
                rows[i][i - 1] = -1.0;
                rows[i - 1][i] = -1.0;
            }
        }
        let a = SparseMatrix::from_dense(&rows);
        let b = vec![1.0; n];
        let (_, rep) = cg(&a, &b, 1e-12, 3, &Identity);
        assert!(!rep.converged);
        assert_eq!(rep.iterations, 3);
    }
}
