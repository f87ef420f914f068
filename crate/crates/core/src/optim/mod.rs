//! Solvers for `min L(θ)` subject to `Bθ = b`.
//!
//! Three methods are available: projected gradient descent, the adaptive
//! energy-based preconditioned gradient method (AEPG) and a damped
//! Newton iteration on the KKT system. All of them work on any type
//! implementing [`ConstrainedProblem`]; the time-step assembly in
//! [`crate::step`] is one such type, [`DenseQuadratic`] is another.
//!
//! Convergence is measured by the KKT residual
//! `sqrt(‖∇L + Bᵀλ‖² + ‖Bθ - b‖²)` (see [`kkt_residual`]) against
//! `kkt_tolerance · (1 + ‖∇L(θ₀)‖)`.

mod gradient;
mod newton;
pub(crate) mod projection;

pub use gradient::{aepg, projected_gradient};
pub use newton::newton_kkt;
pub use projection::{apply_projection, least_squares_multipliers};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Default relative KKT tolerance.
pub const DEFAULT_KKT_TOLERANCE: f64 = 1e-9;
/// Default relative tolerance of inner linear solves.
pub const DEFAULT_LINEAR_TOLERANCE: f64 = 1e-12;

/// A smooth objective with affine equality constraints.
///
/// Only matrix-free products are required; everything is in plain `f64`
/// slices. Barrier problems report a [`Error::DomainViolation`] from
/// `value`/`gradient` outside their domain and bound Newton steps through
/// [`ConstrainedProblem::max_step`].
pub trait ConstrainedProblem {
    fn dim(&self) -> usize;
    fn constraint_count(&self) -> usize;
    /// A feasible starting point.
    fn initial_point(&self) -> Vec<f64>;
    fn value(&self, theta: &[f64]) -> Result<f64>;
    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>>;
    fn hess_vec(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>>;
    /// Diagonal of the Hessian (used only for preconditioning).
    fn hess_diagonal(&self, theta: &[f64]) -> Result<Vec<f64>>;
    fn apply_constraint(&self, theta: &[f64]) -> Vec<f64>;
    fn apply_constraint_transpose(&self, lambda: &[f64]) -> Vec<f64>;
    fn constraint_rhs(&self) -> Vec<f64>;

    /// Largest `α` such that `θ + α d` stays inside the domain; infinite
    /// when the domain is unbounded along `d`.
    fn max_step(&self, _theta: &[f64], _direction: &[f64]) -> f64 {
        f64::INFINITY
    }

    /// Diagonal of `BBᵀ`, used to precondition projections.
    fn gram_diagonal(&self) -> Vec<f64> {
        self.weighted_gram_diagonal(&vec![1.0; self.dim()])
    }

    /// Diagonal of `B W Bᵀ` for a diagonal weight `W`.
    fn weighted_gram_diagonal(&self, weights: &[f64]) -> Vec<f64> {
        let m = self.constraint_count();
        (0..m)
            .map(|k| {
                let mut e = vec![0.0; m];
                e[k] = 1.0;
                let col = self.apply_constraint_transpose(&e);
                col.iter().zip(weights).map(|(c, w)| w * c * c).sum()
            })
            .collect()
    }

    /// Unit vector spanning `null(Bᵀ)` when the rows of `B` are dependent.
    /// Gram solves then iterate orthogonally to it.
    fn constraint_nullspace(&self) -> Option<Vec<f64>> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ProjectedGradient,
    Aepg,
    NewtonKkt,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub method: Method,
    /// Step size of the first-order methods.
    pub eta: f64,
    /// AEPG shift `c`; `None` selects `1 + max(0, -L(θ₀))`.
    pub aepg_shift: Option<f64>,
    pub max_iterations: usize,
    /// Relative KKT tolerance, scaled by `1 + ‖∇L(θ₀)‖`.
    pub kkt_tolerance: f64,
    /// Relative tolerance of inner linear solves.
    pub linear_tolerance: f64,
    /// Fraction-to-boundary factor for Newton steps.
    pub damping: f64,
}

impl OptimizerConfig {
    pub const NEWTON_MAX_ITERATIONS: usize = 50;
    pub const FIRST_ORDER_MAX_ITERATIONS: usize = 50_000;

    pub fn new(method: Method) -> Self {
        let max_iterations = match method {
            Method::NewtonKkt => Self::NEWTON_MAX_ITERATIONS,
            _ => Self::FIRST_ORDER_MAX_ITERATIONS,
        };
        Self {
            method,
            eta: 1.0,
            aepg_shift: None,
            max_iterations,
            kkt_tolerance: DEFAULT_KKT_TOLERANCE,
            linear_tolerance: DEFAULT_LINEAR_TOLERANCE,
            damping: 0.95,
        }
    }

    pub fn newton() -> Self {
        Self::new(Method::NewtonKkt)
    }

    pub fn projected_gradient(eta: f64) -> Self {
        Self {
            eta,
            ..Self::new(Method::ProjectedGradient)
        }
    }

    pub fn aepg(eta: f64) -> Self {
        Self {
            eta,
            ..Self::new(Method::Aepg)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            bad.push(format!("eta must be positive, got {}", self.eta));
        }
        if let Some(c) = self.aepg_shift {
            if !c.is_finite() {
                bad.push("aepg_shift must be finite".to_string());
            }
        }
        if self.max_iterations == 0 {
            bad.push("max_iterations must be at least 1".to_string());
        }
        if !(self.kkt_tolerance > 0.0 && self.kkt_tolerance.is_finite()) {
            bad.push(format!("kkt_tolerance must be positive, got {}", self.kkt_tolerance));
        }
        if !(self.linear_tolerance > 0.0 && self.linear_tolerance < 1.0) {
            bad.push(format!(
                "linear_tolerance must lie in (0, 1), got {}",
                self.linear_tolerance
            ));
        }
        if !(self.damping > 0.0 && self.damping < 1.0) {
            bad.push(format!("damping must lie in (0, 1), got {}", self.damping));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::invalid(bad.join("; ")))
        }
    }
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self::newton()
    }
}

/// Result of a constrained solve.
#[derive(Debug, Clone, PartialEq)]
pub struct KktPoint {
    pub theta: Vec<f64>,
    pub multipliers: Vec<f64>,
    pub kkt_residual: f64,
    pub iterations: usize,
    /// AEPG auxiliary variable `r_k`, starting with `r_0`; empty otherwise.
    pub r_trace: Vec<f64>,
}

/// `sqrt(‖∇L(θ) + Bᵀλ‖² + ‖Bθ - b‖²)`.
pub fn kkt_residual<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    theta: &[f64],
    multipliers: &[f64],
) -> Result<f64> {
    let g = problem.gradient(theta)?;
    Ok(kkt_residual_with_gradient(problem, theta, &g, multipliers))
}

pub(crate) fn kkt_residual_with_gradient<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    theta: &[f64],
    gradient: &[f64],
    multipliers: &[f64],
) -> f64 {
    let mut stat = gradient.to_vec();
    if problem.constraint_count() > 0 {
        linalg::axpy(1.0, &problem.apply_constraint_transpose(multipliers), &mut stat);
    }
    let feas = constraint_violation(problem, theta);
    (linalg::dot(&stat, &stat) + feas * feas).sqrt()
}

/// `‖Bθ - b‖`.
pub fn constraint_violation<P: ConstrainedProblem + ?Sized>(problem: &P, theta: &[f64]) -> f64 {
    if problem.constraint_count() == 0 {
        return 0.0;
    }
    linalg::norm2(&linalg::sub(&problem.apply_constraint(theta), &problem.constraint_rhs()))
}

/// Runs the solver selected by `config.method`.
pub fn solve<P: ConstrainedProblem + ?Sized>(problem: &P, config: &OptimizerConfig) -> Result<KktPoint> {
    config.validate()?;
    match config.method {
        Method::ProjectedGradient => projected_gradient(problem, config),
        Method::Aepg => aepg(problem, config),
        Method::NewtonKkt => newton_kkt(problem, config),
    }
}

pub(crate) fn absolute_tolerance(config: &OptimizerConfig, initial_gradient: &[f64]) -> f64 {
    config.kkt_tolerance * (1.0 + linalg::norm2(initial_gradient))
}

/// `L(θ) = ½ θᵀHθ + gᵀθ` subject to `Bθ = b`, stored densely.
///
/// ```
/// use onsager::optim::{newton_kkt, DenseQuadratic, OptimizerConfig};
/// use nalgebra::{DMatrix, DVector};
///
/// // min ½‖θ‖² subject to θ₁ + θ₂ = 1
/// let problem = DenseQuadratic::new(
///     DMatrix::identity(2, 2),
///     DVector::zeros(2),
///     DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
///     DVector::from_vec(vec![1.0]),
///     vec![1.0, 0.0],
/// )
/// .unwrap();
/// let point = newton_kkt(&problem, &OptimizerConfig::newton()).unwrap();
/// assert!((point.theta[0] - 0.5).abs() < 1e-12);
/// assert!((point.theta[1] - 0.5).abs() < 1e-12);
/// ```
#[derive(Debug, Clone)]
pub struct DenseQuadratic {
    hessian: DMatrix<f64>,
    linear: DVector<f64>,
    constraint: DMatrix<f64>,
    rhs: DVector<f64>,
    start: Vec<f64>,
}

impl DenseQuadratic {
    /// `start` must satisfy the constraint.
    pub fn new(
        hessian: DMatrix<f64>,
        linear: DVector<f64>,
        constraint: DMatrix<f64>,
        rhs: DVector<f64>,
        start: Vec<f64>,
    ) -> Result<Self> {
        let n = hessian.nrows();
        if hessian.ncols() != n || linear.len() != n || start.len() != n {
            return Err(Error::invalid("inconsistent quadratic dimensions"));
        }
        if constraint.ncols() != n || constraint.nrows() != rhs.len() {
            return Err(Error::invalid("inconsistent constraint dimensions"));
        }
        let out = Self {
            hessian,
            linear,
            constraint,
            rhs,
            start,
        };
        let viol = constraint_violation(&out, &out.start);
        if viol > 1e-12 * (1.0 + out.rhs.norm()) {
            return Err(Error::invalid(format!("start point violates the constraint by {viol:e}")));
        }
        Ok(out)
    }
}

impl ConstrainedProblem for DenseQuadratic {
    fn dim(&self) -> usize {
        self.hessian.nrows()
    }

    fn constraint_count(&self) -> usize {
        self.constraint.nrows()
    }

    fn initial_point(&self) -> Vec<f64> {
        self.start.clone()
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        let t = DVector::from_column_slice(theta);
        Ok(0.5 * t.dot(&(&self.hessian * &t)) + self.linear.dot(&t))
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        let t = DVector::from_column_slice(theta);
        Ok((&self.hessian * t + &self.linear).as_slice().to_vec())
    }

    fn hess_vec(&self, _theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok((&self.hessian * DVector::from_column_slice(v)).as_slice().to_vec())
    }

    fn hess_diagonal(&self, _theta: &[f64]) -> Result<Vec<f64>> {
        Ok(self.hessian.diagonal().as_slice().to_vec())
    }

    fn apply_constraint(&self, theta: &[f64]) -> Vec<f64> {
        (&self.constraint * DVector::from_column_slice(theta)).as_slice().to_vec()
    }

    fn apply_constraint_transpose(&self, lambda: &[f64]) -> Vec<f64> {
        (self.constraint.transpose() * DVector::from_column_slice(lambda))
            .as_slice()
            .to_vec()
    }

    fn constraint_rhs(&self) -> Vec<f64> {
        self.rhs.as_slice().to_vec()
    }
}
