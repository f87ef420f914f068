//! One time step as a constrained minimisation.
//!
//! For conserved models the unknown is `θ = (u, m)`, all species' cell
//! values first, then all species' face fluxes (x-faces before y-faces
//! within a species). A step solves
//!
//! ```text
//! min  E_h(u) + Φ_h(u^k; m) / τ
//! s.t. w (u_i - u_i^k) + d_h m_i = 0        for every species i
//!      Σ_i d_h m_i = 0                       (Maxwell–Stefan, porous media)
//! ```
//!
//! where `w` is the porosity for porous media and 1 otherwise. Allen–Cahn
//! has no flux: `θ = u` and the objective is `E_h(u) + Φ_h(u - u^k)/τ`
//! without constraints.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::grid::{FaceField, PeriodicGrid};
use crate::linalg;
use crate::models::{self, DissipationMode, Metric, ModelSpec, SystemState};
use crate::optim::{self, ConstrainedProblem, KktPoint, OptimizerConfig};

/// A single assembled time step. Immutable once built.
#[derive(Debug, Clone)]
pub struct StepProblem {
    model: ModelSpec,
    grid: PeriodicGrid,
    previous: SystemState,
    tau: f64,
    species: usize,
    u_prev: Vec<f64>,
    /// `None` for the joint Fokker–Planck mode, whose metric moves with `u`.
    metric: Option<Metric>,
    weights: Option<Vec<f64>>,
    conserved: bool,
    simplex: bool,
    barrier: bool,
}

/// Accepted step `u^k -> u^{k+1}` with its diagnostics.
#[derive(Debug, Clone)]
pub struct StepResult {
    pub state: SystemState,
    /// Fluxes `m = τ j`, one field per component; empty for Allen–Cahn.
    pub flux: Vec<FaceField>,
    pub energy_before: f64,
    pub energy_after: f64,
    pub dissipation_value: f64,
    pub iterations: usize,
    pub constraint_residual: f64,
    pub kkt_residual: f64,
    /// Multipliers of the constraint rows (per-species rows, then the
    /// volume-filling rows).
    pub multipliers: Vec<f64>,
}

/// Assembles the step from `previous` with time step `tau`.
pub fn build_step(model: &ModelSpec, previous: &SystemState, tau: f64, grid: &PeriodicGrid) -> Result<StepProblem> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {tau}")));
    }
    if previous.grid() != grid {
        return Err(Error::invalid("previous state lives on a different grid"));
    }
    models::validate_state(model, previous)?;
    let kernel = model.kernel();
    let u_prev = previous.stacked();
    let joint = matches!(model, ModelSpec::FokkerPlanck(fp) if fp.mode == DissipationMode::Joint);
    let metric = if joint {
        None
    } else {
        Some(kernel.metric(grid, &u_prev)?)
    };
    Ok(StepProblem {
        model: model.clone(),
        grid: *grid,
        previous: previous.clone(),
        tau,
        species: kernel.components(),
        u_prev,
        metric,
        weights: kernel.cell_weights().map(|w| w.to_vec()),
        conserved: kernel.conserved(),
        simplex: kernel.has_simplex(),
        barrier: kernel.needs_positivity(),
    })
}

impl StepProblem {
    pub fn model(&self) -> &ModelSpec {
        &self.model
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn previous(&self) -> &SystemState {
        &self.previous
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    fn cells(&self) -> usize {
        self.grid.cell_count()
    }

    fn faces(&self) -> usize {
        self.grid.face_count()
    }

    fn u_len(&self) -> usize {
        self.species * self.cells()
    }

    fn weight(&self, cell: usize) -> f64 {
        self.weights.as_ref().map_or(1.0, |w| w[cell])
    }

    /// Length of `θ`.
    pub fn dim(&self) -> usize {
        if self.conserved {
            self.u_len() + self.species * self.faces()
        } else {
            self.u_len()
        }
    }

    pub fn constraint_count(&self) -> usize {
        match (self.conserved, self.simplex) {
            (false, _) => 0,
            (true, false) => self.u_len(),
            (true, true) => self.u_len() + self.cells(),
        }
    }

    /// `θ₀ = (u^k, 0)`.
    pub fn initial_point(&self) -> Vec<f64> {
        let mut theta = self.u_prev.clone();
        theta.resize(self.dim(), 0.0);
        theta
    }

    fn check_len(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.dim() {
            return Err(Error::invalid(format!(
                "θ has length {}, step expects {}",
                theta.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    fn split<'a>(&self, theta: &'a [f64]) -> (&'a [f64], &'a [f64]) {
        theta.split_at(self.u_len())
    }

    fn joint_faces(&self, u: &[f64]) -> Result<Vec<f64>> {
        let faces = self.grid.avg(u);
        models::require_positive(&faces, "face density")?;
        Ok(faces)
    }

    /// `L_h(θ) = E_h(u) + Φ_h/τ`.
    pub fn objective_value(&self, theta: &[f64]) -> Result<f64> {
        self.check_len(theta)?;
        let (u, m) = self.split(theta);
        let energy = self.model.kernel().energy(&self.grid, u)?;
        let diss = match &self.metric {
            Some(metric) if self.conserved => metric.value(m),
            Some(metric) => metric.value(&linalg::sub(u, &self.u_prev)),
            None => {
                let uh = self.joint_faces(u)?;
                0.5 * self.grid.cell_volume() * m.iter().zip(&uh).map(|(x, a)| x * x / a).sum::<f64>()
            }
        };
        Ok(energy + diss / self.tau)
    }

    /// Exact gradient of [`StepProblem::objective_value`].
    pub fn objective_gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta)?;
        let (u, m) = self.split(theta);
        let mut out = self.model.kernel().energy_gradient(&self.grid, u)?;
        let inv_tau = 1.0 / self.tau;
        match &self.metric {
            Some(metric) if self.conserved => {
                out.extend(metric.apply(m).into_iter().map(|x| x * inv_tau));
            }
            Some(metric) => {
                let inc = metric.apply(&linalg::sub(u, &self.u_prev));
                linalg::axpy(inv_tau, &inc, &mut out);
            }
            None => {
                let uh = self.joint_faces(u)?;
                let c = self.grid.cell_volume() * inv_tau;
                let du: Vec<f64> = m.iter().zip(&uh).map(|(x, a)| -0.5 * c * x * x / (a * a)).collect();
                self.grid.avg_transpose_add(&du, &mut out);
                out.extend(m.iter().zip(&uh).map(|(x, a)| c * x / a));
            }
        }
        Ok(out)
    }

    fn hess_vec_impl(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta)?;
        let (u, m) = self.split(theta);
        let (vu, vm) = self.split(v);
        let mut out = self.model.kernel().energy_hess_vec(&self.grid, u, vu)?;
        let inv_tau = 1.0 / self.tau;
        match &self.metric {
            Some(metric) if self.conserved => {
                out.extend(metric.apply(vm).into_iter().map(|x| x * inv_tau));
            }
            Some(metric) => linalg::axpy(inv_tau, &metric.apply(vu), &mut out),
            None => {
                let uh = self.joint_faces(u)?;
                let a = self.grid.avg(vu);
                let c = self.grid.cell_volume() * inv_tau;
                let mut du = Vec::with_capacity(uh.len());
                let mut dm = Vec::with_capacity(uh.len());
                for f in 0..uh.len() {
                    let (x, h, af, wm) = (m[f], uh[f], a[f], vm[f]);
                    dm.push(c * (wm / h - x * af / (h * h)));
                    du.push(c * (-x * wm / (h * h) + x * x * af / (h * h * h)));
                }
                self.grid.avg_transpose_add(&du, &mut out);
                out.extend(dm);
            }
        }
        Ok(out)
    }

    fn hess_diag_impl(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.check_len(theta)?;
        let (u, m) = self.split(theta);
        let mut out = self.model.kernel().energy_hess_diag(&self.grid, u)?;
        let inv_tau = 1.0 / self.tau;
        match &self.metric {
            Some(metric) if self.conserved => {
                out.extend(metric.diagonal().into_iter().map(|x| x * inv_tau));
            }
            Some(metric) => linalg::axpy(inv_tau, &metric.diagonal(), &mut out),
            None => {
                let uh = self.joint_faces(u)?;
                let c = self.grid.cell_volume() * inv_tau;
                let w: Vec<f64> = m.iter().zip(&uh).map(|(x, h)| 0.5 * c * x * x / (h * h * h)).collect();
                self.grid.avg_transpose_add(&w, &mut out);
                out.extend(uh.iter().map(|h| c / h));
            }
        }
        Ok(out)
    }

    /// `Bθ`: per-species rows `w u_i + d_h m_i`, then `Σ_i d_h m_i`.
    pub fn constraint_apply(&self, theta: &[f64]) -> Vec<f64> {
        if !self.conserved {
            return Vec::new();
        }
        let (nc, nf) = (self.cells(), self.faces());
        let (u, m) = self.split(theta);
        let mut out = Vec::with_capacity(self.constraint_count());
        let mut total = vec![0.0; nc];
        for i in 0..self.species {
            let div = self.grid.div(&m[i * nf..(i + 1) * nf]);
            for (j, dj) in div.iter().enumerate() {
                out.push(self.weight(j) * u[i * nc + j] + dj);
                total[j] += dj;
            }
        }
        if self.simplex {
            out.extend(total);
        }
        out
    }

    /// `Bᵀλ`, using `d_hᵀ = -D_h`.
    pub fn constraint_apply_transpose(&self, lambda: &[f64]) -> Vec<f64> {
        if !self.conserved {
            return vec![0.0; self.dim()];
        }
        let (nc, nf) = (self.cells(), self.faces());
        let mut out = Vec::with_capacity(self.dim());
        for i in 0..self.species {
            out.extend((0..nc).map(|j| self.weight(j) * lambda[i * nc + j]));
        }
        let pressure = self.simplex.then(|| &lambda[self.u_len()..]);
        let mut buf = vec![0.0; nc];
        for i in 0..self.species {
            buf.copy_from_slice(&lambda[i * nc..(i + 1) * nc]);
            if let Some(p) = pressure {
                linalg::axpy(1.0, p, &mut buf);
            }
            let grad = self.grid.grad(&buf);
            debug_assert_eq!(grad.len(), nf);
            out.extend(grad.into_iter().map(|x| -x));
        }
        out
    }

    /// `b`: `w u_i^k` per species, zero on the volume-filling rows.
    pub fn constraint_rhs(&self) -> Vec<f64> {
        if !self.conserved {
            return Vec::new();
        }
        let nc = self.cells();
        let mut out: Vec<f64> = self
            .u_prev
            .iter()
            .enumerate()
            .map(|(k, x)| self.weight(k % nc) * x)
            .collect();
        if self.simplex {
            out.resize(self.constraint_count(), 0.0);
        }
        out
    }

    /// Splits `θ` into a state and per-component flux fields.
    pub fn unpack(&self, theta: &[f64]) -> Result<(SystemState, Vec<FaceField>)> {
        self.check_len(theta)?;
        let (u, m) = self.split(theta);
        let state = SystemState::from_stacked(self.grid, self.species, u)?;
        let flux = if self.conserved {
            m.chunks(self.faces())
                .map(|c| FaceField::new(self.grid, c.to_vec()))
                .collect::<Result<Vec<_>>>()?
        } else {
            Vec::new()
        };
        Ok((state, flux))
    }

    /// Dissipation part `Φ_h` of the objective at `θ` (not divided by `τ`).
    pub fn dissipation_at(&self, theta: &[f64]) -> Result<f64> {
        let energy = self.model.kernel().energy(&self.grid, self.split(theta).0)?;
        Ok((self.objective_value(theta)? - energy) * self.tau)
    }
}

impl ConstrainedProblem for StepProblem {
    fn dim(&self) -> usize {
        StepProblem::dim(self)
    }

    fn constraint_count(&self) -> usize {
        StepProblem::constraint_count(self)
    }

    fn initial_point(&self) -> Vec<f64> {
        StepProblem::initial_point(self)
    }

    fn value(&self, theta: &[f64]) -> Result<f64> {
        self.objective_value(theta)
    }

    fn gradient(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.objective_gradient(theta)
    }

    fn hess_vec(&self, theta: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        self.hess_vec_impl(theta, v)
    }

    fn hess_diagonal(&self, theta: &[f64]) -> Result<Vec<f64>> {
        self.hess_diag_impl(theta)
    }

    fn apply_constraint(&self, theta: &[f64]) -> Vec<f64> {
        self.constraint_apply(theta)
    }

    fn apply_constraint_transpose(&self, lambda: &[f64]) -> Vec<f64> {
        self.constraint_apply_transpose(lambda)
    }

    fn constraint_rhs(&self) -> Vec<f64> {
        StepProblem::constraint_rhs(self)
    }

    fn max_step(&self, theta: &[f64], direction: &[f64]) -> f64 {
        if !self.barrier {
            return f64::INFINITY;
        }
        let n = self.u_len();
        theta[..n]
            .iter()
            .zip(&direction[..n])
            .filter(|(_, d)| **d < 0.0)
            .map(|(x, d)| -x / d)
            .fold(f64::INFINITY, f64::min)
    }

    fn weighted_gram_diagonal(&self, weights: &[f64]) -> Vec<f64> {
        if !self.conserved {
            return Vec::new();
        }
        let (nc, nf) = (self.cells(), self.faces());
        let dim = self.grid.dim();
        let inv_h2 = 1.0 / (self.grid.spacing() * self.grid.spacing());
        let (wu, wm) = weights.split_at(self.u_len());
        let mut out = Vec::with_capacity(self.constraint_count());
        let mut total = vec![0.0; nc];
        for i in 0..self.species {
            let wmi = &wm[i * nf..(i + 1) * nf];
            for j in 0..nc {
                let mut flux = 0.0;
                for a in 0..dim {
                    flux += wmi[a * nc + j] + wmi[a * nc + self.grid.backward(j, a)];
                }
                flux *= inv_h2;
                let w = self.weight(j);
                out.push(w * w * wu[i * nc + j] + flux);
                total[j] += flux;
            }
        }
        if self.simplex {
            out.extend(total);
        }
        out
    }

    fn constraint_nullspace(&self) -> Option<Vec<f64>> {
        if !self.simplex {
            return None;
        }
        // Bᵀ(0, c) = 0 for constant pressure rows c
        let nc = self.cells();
        let mut v = vec![0.0; self.constraint_count()];
        let c = 1.0 / (nc as f64).sqrt();
        v[self.u_len()..].iter_mut().for_each(|x| *x = c);
        Some(v)
    }
}

/// Solves one step and returns the accepted state.
///
/// After the optimiser converges, the iterate is projected back onto the
/// constraint set and `u_i` is recomputed from the flux as
/// `u_i^k - d_h m_i / w`, so every component's mass is conserved to
/// rounding error.
pub fn advance(problem: &StepProblem, solver: &OptimizerConfig) -> Result<StepResult> {
    solver.validate()?;
    let point = optim::solve(problem, solver)?;
    finish(problem, solver, point)
}

fn finish(problem: &StepProblem, solver: &OptimizerConfig, point: KktPoint) -> Result<StepResult> {
    let mut theta = point.theta;
    if problem.conserved {
        theta = optim::projection::Projector::new(problem, solver.linear_tolerance).restore(&theta)?;
        let (nc, nf, s) = (problem.cells(), problem.faces(), problem.species);
        let u_len = problem.u_len();
        for i in 0..s {
            let div = problem.grid.div(&theta[u_len + i * nf..u_len + (i + 1) * nf]);
            for j in 0..nc {
                theta[i * nc + j] = problem.u_prev[i * nc + j] - div[j] / problem.weight(j);
            }
        }
    }
    let (u, _) = problem.split(&theta);
    if problem.barrier {
        models::require_positive(u, "updated state")?;
    }
    let energy_before = problem.model.kernel().energy(&problem.grid, &problem.u_prev)?;
    let energy_after = problem.model.kernel().energy(&problem.grid, u)?;
    let dissipation_value = problem.dissipation_at(&theta)?;
    let constraint_residual = optim::constraint_violation(problem, &theta);
    let kkt_residual = optim::kkt_residual(problem, &theta, &point.multipliers)?;
    let (mut state, flux) = problem.unpack(&theta)?;
    if let ModelSpec::Pnp(p) = &problem.model {
        let phi = p.potential(&problem.grid, u)?;
        state.potential = Some(crate::grid::CellField::new(problem.grid, phi)?);
    }
    Ok(StepResult {
        state,
        flux,
        energy_before,
        energy_after,
        dissipation_value,
        iterations: point.iterations,
        constraint_residual,
        kkt_residual,
        multipliers: point.multipliers,
    })
}

/// A differentiable potential `U` for [`ode_minimizing_movement`].
pub trait Potential {
    fn value(&self, y: &DVector<f64>) -> f64;
    fn gradient(&self, y: &DVector<f64>) -> DVector<f64>;
    fn hessian(&self, y: &DVector<f64>) -> DMatrix<f64>;
}

/// `U(y) = ½ yᵀHy + gᵀy`.
#[derive(Debug, Clone)]
pub struct QuadraticPotential {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
}

impl Potential for QuadraticPotential {
    fn value(&self, y: &DVector<f64>) -> f64 {
        0.5 * y.dot(&(&self.hessian * y)) + self.linear.dot(y)
    }

    fn gradient(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.hessian * y + &self.linear
    }

    fn hessian(&self, _y: &DVector<f64>) -> DMatrix<f64> {
        self.hessian.clone()
    }
}

/// Gradient-norm target of [`ode_minimizing_movement`].
pub const ODE_GRADIENT_TOL: f64 = 1e-10;

/// Minimising movement step for `A ẏ = -∇U(y)`:
/// `argmin_y U(y) + ‖y - y_k‖²_A / (2τ)`.
///
/// Uses Newton's method with Armijo backtracking, falling back to a
/// metric-preconditioned gradient step where `∇²U + A/τ` is not positive
/// definite.
///
/// ```
/// use nalgebra::{DMatrix, DVector};
/// use onsager::step::{ode_minimizing_movement, QuadraticPotential};
///
/// let u = QuadraticPotential { hessian: DMatrix::identity(1, 1), linear: DVector::zeros(1) };
/// let y = ode_minimizing_movement(&DMatrix::identity(1, 1), &u, &DVector::from_vec(vec![1.0]), 1.0).unwrap();
/// assert!((y[0] - 0.5).abs() < 1e-14);
/// ```
pub fn ode_minimizing_movement<U: Potential + ?Sized>(
    metric: &DMatrix<f64>,
    potential: &U,
    y_k: &DVector<f64>,
    tau: f64,
) -> Result<DVector<f64>> {
    let n = y_k.len();
    if metric.nrows() != n || metric.ncols() != n {
        return Err(Error::invalid("metric dimension does not match the state"));
    }
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("time step must be positive, got {tau}")));
    }
    let asym = (metric - metric.transpose()).amax();
    if asym > 1e-12 * (1.0 + metric.amax()) {
        return Err(Error::invalid("metric is not symmetric"));
    }
    let scaled_metric = metric / tau;
    let metric_chol = scaled_metric
        .clone()
        .cholesky()
        .ok_or_else(|| Error::invalid("metric is not positive definite"))?;

    let objective = |y: &DVector<f64>| {
        let dy = y - y_k;
        potential.value(y) + 0.5 * dy.dot(&(&scaled_metric * &dy))
    };
    let mut y = y_k.clone();
    let mut f = objective(&y);
    const MAX_ITER: usize = 200;
    for _ in 0..MAX_ITER {
        let grad = potential.gradient(&y) + &scaled_metric * (&y - y_k);
        if grad.norm() <= ODE_GRADIENT_TOL {
            return Ok(y);
        }
        let k = potential.hessian(&y) + &scaled_metric;
        let mut dir = match k.cholesky() {
            Some(ch) => ch.solve(&(-&grad)),
            None => metric_chol.solve(&(-&grad)),
        };
        let mut slope = grad.dot(&dir);
        if !(slope < 0.0) {
            dir = metric_chol.solve(&(-&grad));
            slope = grad.dot(&dir);
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &y + alpha * &dir;
            let ft = objective(&trial);
            if ft <= f + 1e-4 * alpha * slope {
                y = trial;
                f = ft;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // rounding-level progress only: accept a full step if it does not
            // increase the gradient norm
            let trial = &y + &dir;
            let gt = potential.gradient(&trial) + &scaled_metric * (&trial - y_k);
            if gt.norm() < grad.norm() {
                f = objective(&trial);
                y = trial;
            } else {
                return Err(Error::no_convergence("minimizing movement line search", 0, grad.norm()));
            }
        }
    }
    let grad = potential.gradient(&y) + &scaled_metric * (&y - y_k);
    Err(Error::no_convergence("minimizing movement", MAX_ITER, grad.norm()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CellField;
    use crate::models::{AllenCahn, BulkPotential, FokkerPlanck, MaxwellStefan};
    use std::f64::consts::PI;

    fn fp_model(g: PeriodicGrid, mode: DissipationMode) -> ModelSpec {
        ModelSpec::FokkerPlanck(FokkerPlanck {
            beta: 1.0,
            potential: CellField::from_fn(g, |x| 0.5 * (2.0 * PI * x[0]).cos()).unwrap(),
            mode,
        })
    }

    fn bump(g: PeriodicGrid) -> SystemState {
        SystemState::scalar(CellField::from_fn(g, |x| 1.0 + 0.4 * (2.0 * PI * x[0]).sin()).unwrap())
    }

    fn fd_check(problem: &StepProblem, theta: &[f64]) {
        let grad = problem.objective_gradient(theta).unwrap();
        let dir: Vec<f64> = (0..theta.len()).map(|k| ((k as f64) * 1.7).sin()).collect();
        let eps = 1e-6;
        let plus = linalg::add(theta, &linalg::scaled(eps, &dir));
        let minus = linalg::sub(theta, &linalg::scaled(eps, &dir));
        let fd = (problem.objective_value(&plus).unwrap() - problem.objective_value(&minus).unwrap()) / (2.0 * eps);
        let exact = linalg::dot(&grad, &dir);
        assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1e-3), "fd {fd} exact {exact}");
        // Hessian action against gradient differences
        let hv = problem.hess_vec_impl(theta, &dir).unwrap();
        let gp = problem.objective_gradient(&plus).unwrap();
        let gm = problem.objective_gradient(&minus).unwrap();
        let fdh = linalg::scaled(0.5 / eps, &linalg::sub(&gp, &gm));
        let err = linalg::norm_inf(&linalg::sub(&hv, &fdh));
        assert!(err <= 1e-5 * linalg::norm_inf(&hv).max(1.0), "hessian mismatch {err}");
    }

    #[test]
    fn initial_point_is_feasible_with_energy_value() {
        let g = PeriodicGrid::unit(1, 8).unwrap();
        let model = fp_model(g, DissipationMode::Frozen);
        let prev = bump(g);
        let p = build_step(&model, &prev, 0.1, &g).unwrap();
        let theta = p.initial_point();
        assert_eq!(p.objective_value(&theta).unwrap(), models::energy(&model, &prev).unwrap());
        assert_eq!(optim::constraint_violation(&p, &theta), 0.0);
        let grad = p.objective_gradient(&theta).unwrap();
        assert!(grad[8..].iter().all(|x| *x == 0.0));
    }

    #[test]
    fn constraint_matrix_small_example() {
        let g = PeriodicGrid::unit(1, 3).unwrap();
        let model = ModelSpec::FokkerPlanck(FokkerPlanck {
            beta: 1.0,
            potential: CellField::constant(g, 0.0),
            mode: DissipationMode::Frozen,
        });
        let p = build_step(&model, &SystemState::scalar(CellField::constant(g, 1.0)), 0.1, &g).unwrap();
        // [I | D] with D the periodic backward difference times 1/h = 3
        let expect = [
            [1.0, 0.0, 0.0, 3.0, 0.0, -3.0],
            [0.0, 1.0, 0.0, -3.0, 3.0, 0.0],
            [0.0, 0.0, 1.0, 0.0, -3.0, 3.0],
        ];
        for c in 0..6 {
            let mut e = vec![0.0; 6];
            e[c] = 1.0;
            let col = p.constraint_apply(&e);
            for r in 0..3 {
                assert!((col[r] - expect[r][c]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn transpose_is_adjoint_with_simplex_rows() {
        let g = PeriodicGrid::unit(2, 3).unwrap();
        let model = ModelSpec::MaxwellStefan(MaxwellStefan::uniform(2, 1.0).unwrap());
        let u1 = CellField::from_fn(g, |x| 0.5 + 0.2 * (2.0 * PI * x[0]).sin()).unwrap();
        let u2 = CellField::new(g, u1.values().iter().map(|v| 1.0 - v).collect()).unwrap();
        let p = build_step(&model, &SystemState::new(vec![u1, u2]).unwrap(), 0.1, &g).unwrap();
        let theta: Vec<f64> = (0..p.dim()).map(|k| (k as f64 * 0.37).cos()).collect();
        let lambda: Vec<f64> = (0..p.constraint_count()).map(|k| (k as f64 * 0.71).sin()).collect();
        let lhs = linalg::dot(&p.constraint_apply(&theta), &lambda);
        let rhs = linalg::dot(&theta, &p.constraint_apply_transpose(&lambda));
        assert!((lhs - rhs).abs() < 1e-13 * lhs.abs().max(1.0));
        let diag = p.gram_diagonal();
        let generic: Vec<f64> = (0..p.constraint_count())
            .map(|k| {
                let mut e = vec![0.0; p.constraint_count()];
                e[k] = 1.0;
                let c = p.constraint_apply_transpose(&e);
                linalg::dot(&c, &c)
            })
            .collect();
        assert!(linalg::norm_inf(&linalg::sub(&diag, &generic)) < 1e-9);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let g = PeriodicGrid::unit(1, 6).unwrap();
        for mode in [DissipationMode::Frozen, DissipationMode::Joint] {
            let p = build_step(&fp_model(g, mode), &bump(g), 0.05, &g).unwrap();
            let mut theta = p.initial_point();
            for (k, x) in theta.iter_mut().enumerate() {
                *x += 0.05 * ((k as f64) * 2.3).sin();
            }
            fd_check(&p, &theta);
        }
        let ac = ModelSpec::AllenCahn(AllenCahn {
            alpha: 0.1,
            xi0: 1.0,
            bulk: BulkPotential::double_well(),
        });
        let p = build_step(&ac, &bump(g), 0.05, &g).unwrap();
        fd_check(&p, &p.initial_point());
    }

    #[test]
    fn uniform_fp_state_is_a_fixed_point() {
        let g = PeriodicGrid::unit(1, 8).unwrap();
        let model = ModelSpec::FokkerPlanck(FokkerPlanck {
            beta: 1.0,
            potential: CellField::constant(g, 0.0),
            mode: DissipationMode::Frozen,
        });
        let prev = SystemState::scalar(CellField::constant(g, 2.0));
        let p = build_step(&model, &prev, 0.1, &g).unwrap();
        let out = advance(&p, &OptimizerConfig::newton()).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(out.state.components[0].values(), prev.components[0].values());
        assert!(out.flux[0].values().iter().all(|x| *x == 0.0));
    }

    #[test]
    fn two_cell_fp_matches_scan() {
        // N = 2: the two faces carry m_0, m_1 and u_0 = 1 - 2(m_0 - m_1), u_1 = 3 + 2(m_0 - m_1)
        let g = PeriodicGrid::unit(1, 2).unwrap();
        let model = ModelSpec::FokkerPlanck(FokkerPlanck {
            beta: 1.0,
            potential: CellField::constant(g, 0.0),
            mode: DissipationMode::Frozen,
        });
        let prev = SystemState::scalar(CellField::new(g, vec![1.0, 3.0]).unwrap());
        let tau = 0.5;
        let p = build_step(&model, &prev, tau, &g).unwrap();
        let out = advance(&p, &OptimizerConfig::newton()).unwrap();
        let m = out.flux[0].values().to_vec();
        // both faces have mobility 2, so the optimum splits the transfer evenly
        let reduced = |a: f64, b: f64| {
            let u0 = 1.0 - 2.0 * (a - b);
            let u1 = 3.0 + 2.0 * (a - b);
            if u0 <= 0.0 || u1 <= 0.0 {
                return f64::INFINITY;
            }
            0.5 * (u0 * u0.ln() + u1 * u1.ln()) + 0.5 * 0.5 * (a * a + b * b) / 2.0 / tau
        };
        let mut best = (f64::INFINITY, 0.0, 0.0);
        let steps = 400;
        for ia in 0..=steps {
            let a = -1.0 + 2.0 * ia as f64 / steps as f64;
            let b = -a;
            let v = reduced(a, b);
            if v < best.0 {
                best = (v, a, b);
            }
        }
        // refine by golden section along the symmetric line
        let (mut lo, mut hi) = (best.1 - 0.01, best.1 + 0.01);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if reduced(m1, -m1) < reduced(m2, -m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        let a = 0.5 * (lo + hi);
        assert!((m[0] - a).abs() < 1e-8 && (m[1] + a).abs() < 1e-8, "{m:?} vs {a}");
    }

    #[test]
    fn ode_examples() {
        let u = QuadraticPotential {
            hessian: DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0])),
            linear: DVector::zeros(2),
        };
        let y = ode_minimizing_movement(&DMatrix::identity(2, 2), &u, &DVector::from_vec(vec![1.0, 1.0]), 0.5).unwrap();
        assert!((y[0] - 2.0 / 3.0).abs() < 1e-14 && (y[1] - 0.5).abs() < 1e-14);
        let stationary = QuadraticPotential {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::from_vec(vec![-1.0, -1.0]),
        };
        let yk = DVector::from_vec(vec![1.0, 1.0]);
        assert_eq!(ode_minimizing_movement(&DMatrix::identity(2, 2), &stationary, &yk, 3.0).unwrap(), yk);
    }

    #[test]
    fn ode_rejects_bad_metric() {
        let u = QuadraticPotential {
            hessian: DMatrix::identity(2, 2),
            linear: DVector::zeros(2),
        };
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(ode_minimizing_movement(&bad, &u, &DVector::zeros(2), 1.0).is_err());
    }
}
