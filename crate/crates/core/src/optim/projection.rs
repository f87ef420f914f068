//! Euclidean projection onto the nullspace of `B`.

use crate::error::Result;
use crate::linalg::{self, CgOptions};

use super::ConstrainedProblem;

/// Solves systems with `BBᵀ` by Jacobi-preconditioned CG, orthogonally to
/// `null(Bᵀ)` when the rows of `B` are dependent.
pub(crate) struct Projector<'a, P: ?Sized> {
    problem: &'a P,
    inv_diag: Vec<f64>,
    null: Option<Vec<f64>>,
    tol: f64,
}

impl<'a, P: ConstrainedProblem + ?Sized> Projector<'a, P> {
    pub fn new(problem: &'a P, tol: f64) -> Self {
        let inv_diag = problem
            .gram_diagonal()
            .iter()
            .map(|d| 1.0 / d.max(f64::MIN_POSITIVE))
            .collect();
        Self {
            problem,
            inv_diag,
            null: problem.constraint_nullspace(),
            tol,
        }
    }

    /// `(BBᵀ)⁻¹ r`.
    pub fn solve_gram(&self, r: &[f64]) -> Result<Vec<f64>> {
        let m = self.problem.constraint_count();
        if m == 0 {
            return Ok(Vec::new());
        }
        let apply = |y: &[f64]| -> Result<Vec<f64>> {
            Ok(self
                .problem
                .apply_constraint(&self.problem.apply_constraint_transpose(y)))
        };
        let opts = CgOptions {
            rel_tol: self.tol,
            max_iter: (10 * m).max(200),
            null: self.null.as_deref(),
        };
        Ok(linalg::conjugate_gradient(apply, r, Some(&self.inv_diag), opts, "constraint Gram solve")?.x)
    }

    /// `Gv = v - Bᵀ(BBᵀ)⁻¹Bv`.
    pub fn project(&self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.split(v)?.0)
    }

    /// `(Gv, y)` with `v = Gv + Bᵀy`.
    pub fn split(&self, v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.problem.constraint_count() == 0 {
            return Ok((v.to_vec(), Vec::new()));
        }
        let y = self.solve_gram(&self.problem.apply_constraint(v))?;
        let gv = linalg::sub(v, &self.problem.apply_constraint_transpose(&y));
        Ok((gv, y))
    }

    /// Least-squares multipliers `λ = -(BBᵀ)⁻¹B g` for a gradient `g`.
    pub fn multipliers(&self, g: &[f64]) -> Result<Vec<f64>> {
        if self.problem.constraint_count() == 0 {
            return Ok(Vec::new());
        }
        let y = self.solve_gram(&self.problem.apply_constraint(g))?;
        Ok(linalg::scaled(-1.0, &y))
    }

    /// Nearest point to `θ` on `Bθ = b`.
    pub fn restore(&self, theta: &[f64]) -> Result<Vec<f64>> {
        if self.problem.constraint_count() == 0 {
            return Ok(theta.to_vec());
        }
        let r = linalg::sub(&self.problem.apply_constraint(theta), &self.problem.constraint_rhs());
        if linalg::norm2(&r) == 0.0 {
            return Ok(theta.to_vec());
        }
        let y = self.solve_gram(&r)?;
        Ok(linalg::sub(theta, &self.problem.apply_constraint_transpose(&y)))
    }
}

/// Applies `G = I - Bᵀ(BBᵀ)⁻¹B` to `v`; the inner solve runs to relative
/// tolerance `tol`.
///
/// ```
/// use onsager::optim::{apply_projection, DenseQuadratic};
/// use nalgebra::{DMatrix, DVector};
///
/// let p = DenseQuadratic::new(
///     DMatrix::identity(2, 2),
///     DVector::zeros(2),
///     DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
///     DVector::from_vec(vec![1.0]),
///     vec![1.0, 0.0],
/// )
/// .unwrap();
/// let gv = apply_projection(&p, &[1.0, 0.0], 1e-14).unwrap();
/// assert!((gv[0] - 0.5).abs() < 1e-14 && (gv[1] + 0.5).abs() < 1e-14);
/// ```
pub fn apply_projection<P: ConstrainedProblem + ?Sized>(problem: &P, v: &[f64], tol: f64) -> Result<Vec<f64>> {
    Projector::new(problem, tol).project(v)
}

/// `λ = -(BBᵀ)⁻¹B∇L(θ)`, the multipliers minimising `‖∇L + Bᵀλ‖`.
pub fn least_squares_multipliers<P: ConstrainedProblem + ?Sized>(
    problem: &P,
    theta: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let g = problem.gradient(theta)?;
    Projector::new(problem, tol).multipliers(&g)
}
