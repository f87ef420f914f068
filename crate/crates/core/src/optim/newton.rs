//! Damped Newton iteration on the KKT system
//!
//! ```text
//! [ ∇²L  Bᵀ ] [ d  ]     [ ∇L + Bᵀλ ]
//! [ B    0  ] [ δλ ] = - [ Bθ - b   ]
//! ```
//!
//! The saddle system is solved by projected preconditioned conjugate
//! gradients with a diagonal constraint preconditioner; small systems fall
//! back to a dense LU factorisation when the iterative solve fails.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, CgOptions};

use super::projection::Projector;
use super::{absolute_tolerance, kkt_residual_with_gradient, ConstrainedProblem, KktPoint, OptimizerConfig};

/// Largest `dim + constraints` handled by the dense fallback.
const DENSE_LIMIT: usize = 2000;
const MAX_HALVINGS: usize = 50;

/// Newton's method with fraction-to-boundary damping and a monotone
/// safeguard on the KKT residual.
///
/// Each step is first shortened so barrier variables keep at least
/// `1 - damping` of their distance to the boundary, then halved until the
/// KKT residual decreases.
pub fn newton_kkt<P: ConstrainedProblem + ?Sized>(problem: &P, config: &OptimizerConfig) -> Result<KktPoint> {
    let mut theta = problem.initial_point();
    let mut g = problem.gradient(&theta)?;
    let tol = absolute_tolerance(config, &g);
    let mut lambda = Projector::new(problem, config.linear_tolerance).multipliers(&g)?;
    let mut res = kkt_residual_with_gradient(problem, &theta, &g, &lambda);
    let mut it = 0;
    loop {
        if res <= tol || it == config.max_iterations {
            let point = KktPoint {
                theta,
                multipliers: lambda,
                kkt_residual: res,
                iterations: it,
                r_trace: Vec::new(),
            };
            if res <= tol {
                return Ok(point);
            }
            return Err(Error::NoConvergence {
                context: "Newton-KKT",
                iterations: it,
                residual: res,
                partial: Some(Box::new(point)),
            });
        }
        let (d, lambda_new) = saddle_step(problem, &theta, &g, config.linear_tolerance)?;
        let dl = linalg::sub(&lambda_new, &lambda);
        let boundary = problem.max_step(&theta, &d);
        let mut alpha = if boundary.is_finite() {
            (config.damping * boundary).min(1.0)
        } else {
            1.0
        };
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let mut trial = theta.clone();
            linalg::axpy(alpha, &d, &mut trial);
            match problem.gradient(&trial) {
                Ok(gt) => {
                    let mut lt = lambda.clone();
                    linalg::axpy(alpha, &dl, &mut lt);
                    let rt = kkt_residual_with_gradient(problem, &trial, &gt, &lt);
                    if rt < res {
                        accepted = Some((trial, gt, lt, rt));
                        break;
                    }
                }
                Err(Error::DomainViolation(_)) => {}
                Err(e) => return Err(e),
            }
            alpha *= 0.5;
        }
        it += 1;
        match accepted {
            Some((t, gt, lt, rt)) => {
                theta = t;
                g = gt;
                lambda = lt;
                res = rt;
            }
            None => {
                return Err(Error::NoConvergence {
                    context: "Newton-KKT line search",
                    iterations: it,
                    residual: res,
                    partial: Some(Box::new(KktPoint {
                        theta,
                        multipliers: lambda,
                        kkt_residual: res,
                        iterations: it,
                        r_trace: Vec::new(),
                    })),
                })
            }
        }
    }
}

/// Returns `(d, λ⁺)` with `Hd + Bᵀλ⁺ = -g` and `Bd = b - Bθ`.
fn saddle_step<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    theta: &[f64],
    g: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    match projected_pcg(problem, theta, g, tol) {
        Ok(out) => Ok(out),
        Err(err @ (Error::SingularSystem(_) | Error::NoConvergence { .. })) => {
            if problem.dim() + problem.constraint_count() <= DENSE_LIMIT {
                dense_step(problem, theta, g)
            } else {
                Err(err)
            }
        }
        Err(e) => Err(e),
    }
}

/// Applies `(B D⁻¹ Bᵀ)⁻¹` for a positive diagonal `D`, on the complement
/// of `null(Bᵀ)`.
struct WeightedGram<'a, P: ?Sized> {
    problem: &'a P,
    inv_d: Vec<f64>,
    inv_diag: Vec<f64>,
    null: Option<Vec<f64>>,
    tol: f64,
}

impl<'a, P: ConstrainedProblem + ?Sized> WeightedGram<'a, P> {
    fn new(problem: &'a P, inv_d: Vec<f64>, tol: f64) -> Self {
        let diag = problem.weighted_gram_diagonal(&inv_d);
        let inv_diag = diag.iter().map(|x| 1.0 / x.max(f64::MIN_POSITIVE)).collect();
        Self {
            problem,
            inv_d,
            inv_diag,
            null: problem.constraint_nullspace(),
            tol,
        }
    }

    fn solve(&self, r: &[f64]) -> Result<Vec<f64>> {
        let apply = |y: &[f64]| -> Result<Vec<f64>> {
            let bt = self.problem.apply_constraint_transpose(y);
            let scaled: Vec<f64> = bt.iter().zip(&self.inv_d).map(|(a, w)| a * w).collect();
            Ok(self.problem.apply_constraint(&scaled))
        };
        let m = self.problem.constraint_count();
        let opts = CgOptions {
            rel_tol: self.tol,
            max_iter: (10 * m).max(200),
            null: self.null.as_deref(),
        };
        Ok(linalg::conjugate_gradient(apply, r, Some(&self.inv_diag), opts, "weighted Gram solve")?.x)
    }

    /// `w = (BD⁻¹Bᵀ)⁻¹ B D⁻¹ r`.
    fn multiplier_of(&self, r: &[f64]) -> Result<Vec<f64>> {
        let scaled: Vec<f64> = r.iter().zip(&self.inv_d).map(|(a, w)| a * w).collect();
        self.solve(&self.problem.apply_constraint(&scaled))
    }
}

/// Projected preconditioned CG (constraint preconditioner with diagonal
/// Hessian block). Negative curvature is reported as a singular system.
fn projected_pcg<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    theta: &[f64],
    g: &[f64],
    tol: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.dim();
    let has_rows = problem.constraint_count() > 0;
    let diag = problem.hess_diagonal(theta)?;
    let scale = diag.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    let floor = if scale > 0.0 { 1e-10 * scale } else { 1.0 };
    let inv_d: Vec<f64> = diag.iter().map(|x| 1.0 / x.abs().max(floor)).collect();
    let gram = WeightedGram::new(problem, inv_d.clone(), tol);

    // particular solution of B d = b - Bθ
    let mut d = vec![0.0; n];
    if has_rows {
        let rc = linalg::sub(&problem.constraint_rhs(), &problem.apply_constraint(theta));
        if linalg::norm2(&rc) > 0.0 {
            let y = gram.solve(&rc)?;
            let bt = problem.apply_constraint_transpose(&y);
            d = bt.iter().zip(&inv_d).map(|(a, w)| a * w).collect();
        }
    }

    let project_residual = |r: &mut Vec<f64>| -> Result<Vec<f64>> {
        if has_rows {
            let w = gram.multiplier_of(r)?;
            linalg::axpy(-1.0, &problem.apply_constraint_transpose(&w), r);
        }
        Ok(r.iter().zip(&inv_d).map(|(a, w)| a * w).collect())
    };

    let mut r = problem.hess_vec(theta, &d)?;
    linalg::axpy(1.0, g, &mut r);
    let mut y = project_residual(&mut r)?;
    let mut ry = linalg::dot(&r, &y);
    let ry0 = ry.abs();
    let outer = tol.max(1e-10);
    let target = outer * outer * ry0;
    let mut p = linalg::scaled(-1.0, &y);
    let max_iter = (2 * n).max(100);
    let mut converged = ry <= 0.0;
    for _ in 0..max_iter {
        if ry <= target {
            converged = true;
            break;
        }
        let hp = problem.hess_vec(theta, &p)?;
        let php = linalg::dot(&p, &hp);
        if !(php > 0.0) {
            return Err(Error::SingularSystem(format!(
                "non-positive curvature {php:e} on the constraint nullspace"
            )));
        }
        let alpha = ry / php;
        linalg::axpy(alpha, &p, &mut d);
        linalg::axpy(alpha, &hp, &mut r);
        y = project_residual(&mut r)?;
        let ry_new = linalg::dot(&r, &y);
        let beta = ry_new / ry;
        ry = ry_new;
        for (pi, yi) in p.iter_mut().zip(&y) {
            *pi = -yi + beta * *pi;
        }
    }
    // accept a stagnated solve that is still accurate enough for Newton
    if !converged && ry > 1e-12 * ry0 {
        return Err(Error::no_convergence("projected CG", max_iter, (ry / ry0).sqrt()));
    }

    let lambda = if has_rows {
        let mut full = problem.hess_vec(theta, &d)?;
        linalg::axpy(1.0, g, &mut full);
        linalg::scaled(-1.0, &gram.multiplier_of(&full)?)
    } else {
        Vec::new()
    };
    Ok((d, lambda))
}

/// Assembles the saddle matrix column by column and factorises it.
fn dense_step<P: ConstrainedProblem + ?Sized>(problem: &P, theta: &[f64], g: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = problem.dim();
    let m = problem.constraint_count();
    let mut k = DMatrix::<f64>::zeros(n + m, n + m);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let hcol = problem.hess_vec(theta, &e)?;
        for i in 0..n {
            k[(i, j)] = hcol[i];
        }
        if m > 0 {
            let bcol = problem.apply_constraint(&e);
            for i in 0..m {
                k[(n + i, j)] = bcol[i];
                k[(j, n + i)] = bcol[i];
            }
        }
        e[j] = 0.0;
    }
    // border with n nᵀ: keeps λ ⊥ null(Bᵀ) without perturbing the solution
    if let Some(null) = problem.constraint_nullspace() {
        for i in 0..m {
            for j in 0..m {
                k[(n + i, n + j)] = null[i] * null[j];
            }
        }
    }
    let mut rhs = DVector::<f64>::zeros(n + m);
    for i in 0..n {
        rhs[i] = -g[i];
    }
    if m > 0 {
        let rc = linalg::sub(&problem.constraint_rhs(), &problem.apply_constraint(theta));
        for i in 0..m {
            rhs[n + i] = rc[i];
        }
    }
    let sol = k
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::SingularSystem("dense KKT factorisation is singular".into()))?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem("dense KKT solve produced non-finite values".into()));
    }
    Ok((sol.as_slice()[..n].to_vec(), sol.as_slice()[n..].to_vec()))
}
