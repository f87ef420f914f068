//! Small dense-vector helpers and a matrix-free conjugate-gradient solver.

use crate::error::{Error, Result};

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[inline]
pub fn norm_inf(a: &[f64]) -> f64 {
    a.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

#[cfg(test)]
pub fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + y).collect()
}

pub fn scaled(alpha: f64, a: &[f64]) -> Vec<f64> {
    a.iter().map(|x| alpha * x).collect()
}

pub(crate) fn remove_mean(v: &mut [f64]) {
    if v.is_empty() {
        return;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Removes the component of `v` along the unit vector `n`.
pub(crate) fn deflate(v: &mut [f64], n: &[f64]) {
    let c = dot(v, n);
    axpy(-c, n, v);
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct CgOptions<'a> {
    /// Stop when `||r|| <= rel_tol * ||rhs||`.
    pub rel_tol: f64,
    pub max_iter: usize,
    /// Unit vector spanning the operator's nullspace; iterates stay
    /// orthogonal to it.
    pub null: Option<&'a [f64]>,
}

pub(crate) struct CgOutcome {
    pub x: Vec<f64>,
}

/// Preconditioned conjugate gradients for a symmetric positive (semi)definite
/// operator given as a closure. `inv_diag` is an optional Jacobi preconditioner.
pub(crate) fn conjugate_gradient<F>(
    mut apply: F,
    rhs: &[f64],
    inv_diag: Option<&[f64]>,
    opts: CgOptions<'_>,
    context: &'static str,
) -> Result<CgOutcome>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = rhs.len();
    let mut r = rhs.to_vec();
    if let Some(n) = opts.null {
        deflate(&mut r, n);
    }
    let rhs_norm = norm2(&r);
    let mut x = vec![0.0; n];
    if rhs_norm == 0.0 {
        return Ok(CgOutcome { x });
    }
    let target = opts.rel_tol * rhs_norm;

    let precondition = |r: &[f64]| -> Vec<f64> {
        match inv_diag {
            Some(d) => r.iter().zip(d).map(|(a, b)| a * b).collect(),
            None => r.to_vec(),
        }
    };

    let mut z = precondition(&r);
    if let Some(n) = opts.null {
        deflate(&mut z, n);
    }
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut res = rhs_norm;

    for _ in 0..opts.max_iter {
        let mut ap = apply(&p)?;
        if let Some(n) = opts.null {
            deflate(&mut ap, n);
        }
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            if res <= target * 1e2 {
                return Ok(CgOutcome { x });
            }
            return Err(Error::SingularSystem(format!(
                "{context}: non-positive curvature {pap:e} in conjugate gradients"
            )));
        }
        let alpha = rz / pap;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        if let Some(n) = opts.null {
            deflate(&mut r, n);
            deflate(&mut x, n);
        }
        res = norm2(&r);
        if res <= target {
            return Ok(CgOutcome { x });
        }
        z = precondition(&r);
        if let Some(n) = opts.null {
            deflate(&mut z, n);
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for (pi, zi) in p.iter_mut().zip(&z) {
            *pi = zi + beta * *pi;
        }
    }
    Err(Error::no_convergence(context, opts.max_iter, res / rhs_norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cg_solves_small_spd_system() {
        // [[4,1],[1,3]] x = [1,2] -> x = [1/11, 7/11]
        let apply = |v: &[f64]| Ok(vec![4.0 * v[0] + v[1], v[0] + 3.0 * v[1]]);
        let out = conjugate_gradient(
            apply,
            &[1.0, 2.0],
            None,
            CgOptions {
                rel_tol: 1e-14,
                max_iter: 10,
                null: None,
            },
            "test",
        )
        .unwrap();
        assert!((out.x[0] - 1.0 / 11.0).abs() < 1e-14);
        assert!((out.x[1] - 7.0 / 11.0).abs() < 1e-14);
    }

    #[test]
    fn cg_reports_indefinite_operator() {
        let apply = |v: &[f64]| Ok(vec![-v[0], v[1]]);
        let err = conjugate_gradient(
            apply,
            &[1.0, 0.0],
            None,
            CgOptions {
                rel_tol: 1e-12,
                max_iter: 10,
                null: None,
            },
            "test",
        );
        assert!(matches!(err, Err(Error::SingularSystem(_))));
    }
}
