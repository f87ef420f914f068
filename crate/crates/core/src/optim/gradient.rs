//! First-order methods: projected gradient descent and AEPG.

use crate::error::{Error, Result};
use crate::linalg;

use super::projection::Projector;
use super::{absolute_tolerance, kkt_residual_with_gradient, ConstrainedProblem, KktPoint, OptimizerConfig};

/// Step halvings allowed when a trial point leaves the energy domain.
const MAX_HALVINGS: usize = 60;

fn stalled(context: &'static str, point: KktPoint) -> Error {
    Error::NoConvergence {
        context,
        iterations: point.iterations,
        residual: point.kkt_residual,
        partial: Some(Box::new(point)),
    }
}

/// `θ_{k+1} = θ_k - η G∇L(θ_k)` from the problem's feasible initial point.
///
/// A trial point outside the energy domain halves the step for that
/// iteration only. Multipliers at exit are `-(BBᵀ)⁻¹B∇L`.
pub fn projected_gradient<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    config: &OptimizerConfig,
) -> Result<KktPoint> {
    let proj = Projector::new(problem, config.linear_tolerance);
    let mut theta = problem.initial_point();
    let mut g = problem.gradient(&theta)?;
    let tol = absolute_tolerance(config, &g);
    let mut it = 0;
    loop {
        let (v, y) = proj.split(&g)?;
        let lambda = linalg::scaled(-1.0, &y);
        let res = kkt_residual_with_gradient(problem, &theta, &g, &lambda);
        let point = |theta: Vec<f64>| KktPoint {
            theta,
            multipliers: lambda.clone(),
            kkt_residual: res,
            iterations: it,
            r_trace: Vec::new(),
        };
        if res <= tol {
            return Ok(point(theta));
        }
        if it == config.max_iterations {
            return Err(stalled("projected gradient", point(theta)));
        }
        let mut step = config.eta;
        let mut halvings = 0;
        let (next, g_next) = loop {
            let mut trial = theta.clone();
            linalg::axpy(-step, &v, &mut trial);
            match problem.gradient(&trial) {
                Ok(gt) => break (trial, gt),
                Err(Error::DomainViolation(msg)) => {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        return Err(Error::DomainViolation(msg));
                    }
                    step *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        theta = next;
        g = g_next;
        it += 1;
    }
}

/// Adaptive energy-based preconditioned gradient descent.
///
/// With `l(θ) = sqrt(L(θ) + c)` and `r_0 = l(θ_0)`:
///
/// ```text
/// v_k     = G ∇l(θ_k)
/// r_{k+1} = r_k / (1 + 2η ‖v_k‖²)
/// θ_{k+1} = θ_k - 2η r_{k+1} v_k
/// ```
///
/// `r` is non-increasing for every `η > 0`. When a trial point leaves the
/// energy domain, `η` is halved for that iteration and `r_{k+1}` recomputed,
/// which keeps the monotonicity.
pub fn aepg<P: ConstrainedProblem + ?Sized>(problem: &P, config: &OptimizerConfig) -> Result<KktPoint> {
    let proj = Projector::new(problem, config.linear_tolerance);
    let mut theta = problem.initial_point();
    let mut value = problem.value(&theta)?;
    let shift = config.aepg_shift.unwrap_or(1.0 + (-value).max(0.0));
    if value + shift <= 0.0 {
        return Err(Error::ShiftViolation(value + shift));
    }
    let mut l = (value + shift).sqrt();
    let mut r = l;
    let mut trace = vec![r];
    let mut g = problem.gradient(&theta)?;
    let tol = absolute_tolerance(config, &g);
    let mut it = 0;
    loop {
        let (pg, y) = proj.split(&g)?;
        let lambda = linalg::scaled(-1.0, &y);
        let res = kkt_residual_with_gradient(problem, &theta, &g, &lambda);
        if res <= tol || it == config.max_iterations {
            let point = KktPoint {
                theta,
                multipliers: lambda,
                kkt_residual: res,
                iterations: it,
                r_trace: trace,
            };
            if res <= tol {
                return Ok(point);
            }
            return Err(stalled("AEPG", point));
        }
        let v = linalg::scaled(0.5 / l, &pg);
        let vv = linalg::dot(&v, &v);
        let mut eta = config.eta;
        let mut halvings = 0;
        let (next, r_next, value_next) = loop {
            let r_trial = r / (1.0 + 2.0 * eta * vv);
            let mut trial = theta.clone();
            linalg::axpy(-2.0 * eta * r_trial, &v, &mut trial);
            match problem.value(&trial) {
                Ok(val) => break (trial, r_trial, val),
                Err(Error::DomainViolation(msg)) => {
                    halvings += 1;
                    if halvings > MAX_HALVINGS {
                        return Err(Error::DomainViolation(msg));
                    }
                    eta *= 0.5;
                }
                Err(e) => return Err(e),
            }
        };
        if value_next + shift <= 0.0 {
            return Err(Error::ShiftViolation(value_next + shift));
        }
        theta = next;
        r = r_next;
        value = value_next;
        l = (value + shift).sqrt();
        trace.push(r);
        g = problem.gradient(&theta)?;
        it += 1;
    }
}
