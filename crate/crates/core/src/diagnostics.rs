//! Per-step structure checks and time-series records.

use serde::Serialize;

use crate::grid::integrate_cells;
use crate::models::{self, ModelSpec, SystemState};
use crate::optim::{self, KktPoint};
use crate::step::{StepProblem, StepResult};

/// Every tolerance the library checks against, in one place.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Slack in `E_{k+1} + Φ/τ ≤ E_k + slack·(1 + |E_k|)`.
    pub energy_inequality: f64,
    /// Relative drift allowed in conserved totals.
    pub mass_relative: f64,
    /// Max deviation of `Σ_i u_i` from 1.
    pub simplex: f64,
    /// Mean charge accepted by the electrostatic solve.
    pub neutrality: f64,
    /// Default relative KKT tolerance of the step solvers.
    pub kkt: f64,
    /// Default relative tolerance of inner linear solves.
    pub linear: f64,
}

impl Tolerances {
    pub const DEFAULT: Tolerances = Tolerances {
        energy_inequality: 1e-9,
        mass_relative: 1e-10,
        simplex: models::SIMPLEX_TOL,
        neutrality: models::NEUTRALITY_TOL,
        kkt: optim::DEFAULT_KKT_TOLERANCE,
        linear: optim::DEFAULT_LINEAR_TOLERANCE,
    };
}

impl Default for Tolerances {
    fn default() -> Self {
        Self::DEFAULT
    }
}

/// One line of a trajectory record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub dissipation_over_tau: f64,
    /// Conserved total per component.
    pub mass: Vec<f64>,
    pub min_value: Vec<f64>,
    pub max_value: Vec<f64>,
    pub inner_iterations: usize,
    pub kkt_residual: f64,
    pub constraint_residual: f64,
}

impl DiagnosticsRow {
    /// Row for the initial state: no dissipation, no iterations.
    pub fn initial(model: &ModelSpec, state: &SystemState, time: f64) -> crate::Result<Self> {
        Ok(Self {
            step: 0,
            time,
            energy: models::energy(model, state)?,
            dissipation_over_tau: 0.0,
            mass: model.conserved_totals(state),
            min_value: state.components.iter().map(|c| c.min()).collect(),
            max_value: state.components.iter().map(|c| c.max()).collect(),
            inner_iterations: 0,
            kkt_residual: 0.0,
            constraint_residual: 0.0,
        })
    }

    /// Row for an accepted step.
    pub fn from_step(problem: &StepProblem, result: &StepResult, step: usize, time: f64) -> Self {
        let state = &result.state;
        Self {
            step,
            time,
            energy: result.energy_after,
            dissipation_over_tau: result.dissipation_value / problem.tau(),
            mass: problem.model().conserved_totals(state),
            min_value: state.components.iter().map(|c| c.min()).collect(),
            max_value: state.components.iter().map(|c| c.max()).collect(),
            inner_iterations: result.iterations,
            kkt_residual: result.kkt_residual,
            constraint_residual: result.constraint_residual,
        }
    }
}

/// `∫ u_i` per component.
pub fn mass_totals(state: &SystemState) -> Vec<f64> {
    state.components.iter().map(integrate_cells).collect()
}

/// `E_new + Φ/τ ≤ E_prev + 1e-9·(1 + |E_prev|)`.
pub fn check_dissipation_inequality(prev: &DiagnosticsRow, new: &DiagnosticsRow) -> bool {
    let slack = Tolerances::DEFAULT.energy_inequality * (1.0 + prev.energy.abs());
    new.energy + new.dissipation_over_tau <= prev.energy + slack
}

/// `sqrt(‖∇L + Bᵀλ‖² + ‖Bθ - b‖²)` at `point`; infinite if `θ` leaves the
/// energy domain.
pub fn kkt_residual_report<P: optim::ConstrainedProblem + ?Sized>(problem: &P, point: &KktPoint) -> f64 {
    optim::kkt_residual(problem, &point.theta, &point.multipliers).unwrap_or(f64::INFINITY)
}

/// Max-norm residual of the explicit-implicit Maxwell–Stefan face equations
///
/// ```text
/// Σ_j b_ij û_j^k (v_i - v_j) + D_h log u_i + D_h p = 0,   v_i = m_i / (τ û_i^k)
/// ```
///
/// at an accepted step, with the pressure `p = -π / h^d` read from the
/// volume-filling multipliers `π`.
pub fn maxwell_stefan_residual(problem: &StepProblem, result: &StepResult) -> crate::Result<f64> {
    let ModelSpec::MaxwellStefan(ms) = problem.model() else {
        return Err(crate::Error::InvalidInput("not a Maxwell-Stefan step".into()));
    };
    let g = problem.grid();
    let (s, nc) = (ms.species, g.cell_count());
    if result.multipliers.len() != (s + 1) * nc {
        return Err(crate::Error::InvalidInput("step result carries no volume-filling multipliers".into()));
    }
    let vol = g.cell_volume();
    let pressure: Vec<f64> = result.multipliers[s * nc..].iter().map(|pi| -pi / vol).collect();
    let dp = g.grad(&pressure);
    let faces_prev: Vec<Vec<f64>> = problem.previous().components.iter().map(|c| g.avg(c.values())).collect();
    let velocity: Vec<Vec<f64>> = (0..s)
        .map(|i| {
            result.flux[i]
                .values()
                .iter()
                .zip(&faces_prev[i])
                .map(|(m, a)| m / (problem.tau() * a))
                .collect()
        })
        .collect();
    let mut worst: f64 = 0.0;
    for i in 0..s {
        let logs: Vec<f64> = result.state.components[i].values().iter().map(|x| x.ln()).collect();
        let dlog = g.grad(&logs);
        for f in 0..g.face_count() {
            let mut r = dlog[f] + dp[f];
            for j in 0..s {
                r += ms.friction[i * s + j] * faces_prev[j][f] * (velocity[i][f] - velocity[j][f]);
            }
            worst = worst.max(r.abs());
        }
    }
    Ok(worst)
}
