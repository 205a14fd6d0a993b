//! Matrix-free BiCGStab with Jacobi preconditioning.

use crate::scalar::Real;

/// Outcome of a linear solve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinStats {
    pub iterations: usize,
    /// Final residual relative to the right-hand side.
    pub rel_residual: f64,
    pub converged: bool,
}

#[inline]
fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (x, y)| s + *x * *y)
}

/// Solves `A x = b` starting from `x`, with `apply(p, out)` computing `A p`
/// and `diag` the Jacobi preconditioner. Returns early without touching `x`
/// when the initial residual already meets `tol·|b|`.
pub fn bicgstab<T: Real>(
    mut apply: impl FnMut(&[T], &mut [T]),
    diag: &[T],
    b: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> LinStats {
    let n = b.len();
    let mut r = vec![T::zero(); n];
    apply(x, &mut r);
    for i in 0..n {
        r[i] = b[i] - r[i];
    }
    let bnorm = dot(b, b).sqrt();
    let target = tol * bnorm;
    let mut rnorm = dot(&r, &r).sqrt();
    let rel = |rn: T| if bnorm > T::zero() { (rn / bnorm).to64() } else { rn.to64() };
    if rnorm <= target || rnorm == T::zero() {
        return LinStats { iterations: 0, rel_residual: rel(rnorm), converged: true };
    }
    let inv: Vec<T> = diag.iter().map(|d| if *d != T::zero() { T::one() / *d } else { T::one() }).collect();
    let r0 = r.clone();
    let mut p = vec![T::zero(); n];
    let mut v = vec![T::zero(); n];
    let mut ph = vec![T::zero(); n];
    let mut s = vec![T::zero(); n];
    let mut sh = vec![T::zero(); n];
    let mut t = vec![T::zero(); n];
    let (mut rho, mut alpha, mut omega) = (T::one(), T::one(), T::one());
    for it in 1..=max_iter {
        let rho_new = dot(&r0, &r);
        if rho_new == T::zero() || !rho_new.is_finite() {
            return LinStats { iterations: it, rel_residual: rel(rnorm), converged: false };
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for i in 0..n {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            ph[i] = p[i] * inv[i];
        }
        apply(&ph, &mut v);
        let den = dot(&r0, &v);
        if den == T::zero() || !den.is_finite() {
            return LinStats { iterations: it, rel_residual: rel(rnorm), converged: false };
        }
        alpha = rho / den;
        for i in 0..n {
            s[i] = r[i] - alpha * v[i];
        }
        let snorm = dot(&s, &s).sqrt();
        if snorm <= target {
            for i in 0..n {
                x[i] += alpha * ph[i];
            }
            return LinStats { iterations: it, rel_residual: rel(snorm), converged: true };
        }
        for i in 0..n {
            sh[i] = s[i] * inv[i];
        }
        apply(&sh, &mut t);
        let tt = dot(&t, &t);
        if tt == T::zero() || !tt.is_finite() {
            return LinStats { iterations: it, rel_residual: rel(snorm), converged: false };
        }
        omega = dot(&t, &s) / tt;
        for i in 0..n {
            x[i] += alpha * ph[i] + omega * sh[i];
            r[i] = s[i] - omega * t[i];
        }
        rnorm = dot(&r, &r).sqrt();
        if rnorm <= target {
            return LinStats { iterations: it, rel_residual: rel(rnorm), converged: true };
        }
        if omega == T::zero() {
            return LinStats { iterations: it, rel_residual: rel(rnorm), converged: false };
        }
    }
    LinStats { iterations: max_iter, rel_residual: rel(rnorm), converged: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_nonsymmetric_tridiagonal() {
        let n = 200;
        let apply = |x: &[f64], y: &mut [f64]| {
            for i in 0..n {
                let l = if i > 0 { x[i - 1] } else { 0.0 };
                let r = if i + 1 < n { x[i + 1] } else { 0.0 };
                y[i] = 4.0 * x[i] - 1.5 * l - 0.5 * r;
            }
        };
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.1).sin()).collect();
        let mut x = vec![0.0; n];
        let st = bicgstab(apply, &vec![4.0; n], &b, &mut x, 1e-12, 200);
        assert!(st.converged);
        let mut ax = vec![0.0; n];
        apply(&x, &mut ax);
        let err: f64 = ax.iter().zip(&b).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        assert!(err < 1e-10);
    }

    #[test]
    fn zero_rhs_keeps_zero_guess() {
        let mut x = vec![0.0; 5];
        let st = bicgstab(|x: &[f64], y: &mut [f64]| y.copy_from_slice(x), &[1.0; 5], &[0.0; 5], &mut x, 1e-10, 10);
        assert_eq!(st.iterations, 0);
        assert!(x.iter().all(|v| *v == 0.0));
    }
}
