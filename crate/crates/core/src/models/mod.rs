//! Free energies, dissipation metrics and chemical potentials of the
//! supported gradient-flow systems.
//!
//! Every model is described by a [`ModelSpec`] and evaluated on a
//! [`SystemState`]. Energies are discrete sums over cells weighted by
//! `h^d`; dissipations are quadratic forms in the face fluxes `m = τ j`
//! (or, for Allen–Cahn, in the increment `u - u^k`) with mobilities frozen
//! at a reference state.

mod diffusion;
mod metric;
mod mixtures;
mod phase_field;

pub use diffusion::{DissipationMode, FokkerPlanck, Pnp};
pub use mixtures::{MaxwellStefan, PorousMedia};
pub use phase_field::{AllenCahn, BulkPotential, CahnHilliard};

pub(crate) use metric::Metric;

use crate::error::{Error, Result};
use crate::grid::{CellField, FaceField, PeriodicGrid};
use crate::linalg;

/// Tolerance on `Σ_i u_i = 1` for volume-filling models.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Tolerance on the total charge accepted by [`solve_electrostatic_potential`].
pub const NEUTRALITY_TOL: f64 = 1e-10;

/// Per-model numerics shared by energy evaluation and step assembly.
///
/// States are passed flattened, species-major (`u[i * cells + j]`).
pub(crate) trait Kernel {
    fn components(&self) -> usize;

    fn conserved(&self) -> bool {
        true
    }

    /// Whether the energy has a logarithmic barrier at `u = 0`.
    fn needs_positivity(&self) -> bool;

    /// Whether `Σ_i u_i = 1` holds per cell (extra constraint rows).
    fn has_simplex(&self) -> bool {
        false
    }

    /// Per-cell weight `w` in the continuity constraint `w (u - u^k) + d_h m = 0`.
    fn cell_weights(&self) -> Option<&[f64]> {
        None
    }

    fn energy(&self, g: &PeriodicGrid, u: &[f64]) -> Result<f64>;
    fn energy_gradient(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>>;
    fn energy_hess_vec(&self, g: &PeriodicGrid, u: &[f64], v: &[f64]) -> Result<Vec<f64>>;
    /// Diagonal of the energy Hessian, or a positive surrogate of it.
    fn energy_hess_diag(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>>;
    /// Dissipation metric frozen at `reference`.
    fn metric(&self, g: &PeriodicGrid, reference: &[f64]) -> Result<Metric>;
}

/// `Σ x log x`, failing on non-positive entries.
pub(crate) fn entropy(u: &[f64]) -> Result<f64> {
    require_positive(u, "density")?;
    Ok(u.iter().map(|x| x * x.ln()).sum())
}

pub(crate) fn require_positive(v: &[f64], what: &str) -> Result<()> {
    match v.iter().position(|x| !(*x > 0.0)) {
        None => Ok(()),
        Some(k) => Err(Error::DomainViolation(format!(
            "{what} at index {k} is {} (must be positive)",
            v[k]
        ))),
    }
}

/// One PDE system with its physical parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    AllenCahn(AllenCahn),
    CahnHilliard(CahnHilliard),
    FokkerPlanck(FokkerPlanck),
    Pnp(Pnp),
    MaxwellStefan(MaxwellStefan),
    PorousMedia(PorousMedia),
}

impl ModelSpec {
    pub fn name(&self) -> &'static str {
        match self {
            ModelSpec::AllenCahn(_) => "allen_cahn",
            ModelSpec::CahnHilliard(_) => "cahn_hilliard",
            ModelSpec::FokkerPlanck(_) => "fokker_planck",
            ModelSpec::Pnp(_) => "pnp",
            ModelSpec::MaxwellStefan(_) => "maxwell_stefan",
            ModelSpec::PorousMedia(_) => "porous_media",
        }
    }

    pub(crate) fn kernel(&self) -> &dyn Kernel {
        match self {
            ModelSpec::AllenCahn(m) => m,
            ModelSpec::CahnHilliard(m) => m,
            ModelSpec::FokkerPlanck(m) => m,
            ModelSpec::Pnp(m) => m,
            ModelSpec::MaxwellStefan(m) => m,
            ModelSpec::PorousMedia(m) => m,
        }
    }

    /// Number of species, phases or scalar components.
    pub fn components(&self) -> usize {
        self.kernel().components()
    }

    /// Whether the model evolves by a continuity equation.
    pub fn is_conserved(&self) -> bool {
        self.kernel().conserved()
    }

    pub fn requires_positivity(&self) -> bool {
        self.kernel().needs_positivity()
    }

    pub fn has_simplex_constraint(&self) -> bool {
        self.kernel().has_simplex()
    }

    /// Checks parameter ranges and that every spatial parameter lives on `grid`.
    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        match self {
            ModelSpec::AllenCahn(m) => m.validate(),
            ModelSpec::CahnHilliard(m) => m.validate(),
            ModelSpec::FokkerPlanck(m) => m.validate(grid),
            ModelSpec::Pnp(m) => m.validate(grid),
            ModelSpec::MaxwellStefan(m) => m.validate(),
            ModelSpec::PorousMedia(m) => m.validate(grid),
        }
    }

    /// Integrated amount of each component that the scheme conserves:
    /// `h^d Σ w u_i`, with `w` the porosity for porous media and 1 otherwise.
    pub fn conserved_totals(&self, state: &SystemState) -> Vec<f64> {
        let vol = state.grid().cell_volume();
        let weights = self.kernel().cell_weights();
        state
            .components
            .iter()
            .map(|c| match weights {
                Some(w) => vol * linalg::dot(w, c.values()),
                None => vol * c.values().iter().sum::<f64>(),
            })
            .collect()
    }
}

/// Cell-centred unknowns of a model, one [`CellField`] per component.
///
/// For PNP the electrostatic potential of the state is cached in
/// `potential` once a step has been accepted.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    pub components: Vec<CellField>,
    pub potential: Option<CellField>,
}

impl SystemState {
    pub fn new(components: Vec<CellField>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::invalid("a state needs at least one component"))?;
        if components.iter().any(|c| c.grid() != first.grid()) {
            return Err(Error::invalid("state components live on different grids"));
        }
        Ok(Self {
            components,
            potential: None,
        })
    }

    pub fn scalar(u: CellField) -> Self {
        Self {
            components: vec![u],
            potential: None,
        }
    }

    /// Rebuilds a state from species-major stacked values.
    pub fn from_stacked(grid: PeriodicGrid, components: usize, values: &[f64]) -> Result<Self> {
        let nc = grid.cell_count();
        if values.len() != components * nc {
            return Err(Error::invalid(format!(
                "expected {} stacked values, got {}",
                components * nc,
                values.len()
            )));
        }
        let fields = values
            .chunks(nc)
            .map(|c| CellField::new(grid, c.to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Self::new(fields)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        self.components[0].grid()
    }

    pub fn component(&self, i: usize) -> &CellField {
        &self.components[i]
    }

    /// Species-major concatenation of all component values.
    pub fn stacked(&self) -> Vec<f64> {
        self.components.iter().flat_map(|c| c.values().iter().copied()).collect()
    }
}

fn check_shape(model: &ModelSpec, state: &SystemState) -> Result<()> {
    let s = model.components();
    if state.components.len() != s {
        return Err(Error::invalid(format!(
            "{} expects {s} components, state has {}",
            model.name(),
            state.components.len()
        )));
    }
    Ok(())
}

/// Checks component count, positivity for barrier models and the volume
/// filling constraint for Maxwell–Stefan and porous media.
pub fn validate_state(model: &ModelSpec, state: &SystemState) -> Result<()> {
    check_shape(model, state)?;
    model.validate(state.grid())?;
    let u = state.stacked();
    if model.requires_positivity() {
        require_positive(&u, model.name())?;
    }
    if model.has_simplex_constraint() {
        let dev = simplex_deviation(state);
        if dev > SIMPLEX_TOL {
            return Err(Error::invalid(format!(
                "volume fractions must sum to one per cell; max deviation {dev:e}"
            )));
        }
    }
    Ok(())
}

/// `max_j |Σ_i u_ij - 1|`.
pub fn simplex_deviation(state: &SystemState) -> f64 {
    let nc = state.grid().cell_count();
    (0..nc)
        .map(|j| {
            let sum: f64 = state.components.iter().map(|c| c.values()[j]).sum();
            (sum - 1.0).abs()
        })
        .fold(0.0, f64::max)
}

/// Discrete free energy `E_h(u)`.
pub fn energy(model: &ModelSpec, state: &SystemState) -> Result<f64> {
    check_shape(model, state)?;
    model.kernel().energy(state.grid(), &state.stacked())
}

/// `δE/δu_i`: the algebraic gradient of [`energy`] divided by `h^d`.
pub fn chemical_potential(model: &ModelSpec, state: &SystemState) -> Result<Vec<CellField>> {
    check_shape(model, state)?;
    let g = *state.grid();
    let mut grad = model.kernel().energy_gradient(&g, &state.stacked())?;
    let inv = 1.0 / g.cell_volume();
    for x in grad.iter_mut() {
        *x *= inv;
    }
    Ok(SystemState::from_stacked(g, model.components(), &grad)?.components)
}

/// Dissipation `Φ_h(u^k; m)` of face fluxes, one [`FaceField`] per component,
/// with mobilities frozen at `reference`.
///
/// Allen–Cahn has no flux; use [`increment_dissipation`] instead.
pub fn dissipation(model: &ModelSpec, reference: &SystemState, m: &[FaceField]) -> Result<f64> {
    check_shape(model, reference)?;
    if !model.is_conserved() {
        return Err(Error::invalid(
            "Allen-Cahn dissipation acts on increments; use increment_dissipation",
        ));
    }
    if m.len() != model.components() {
        return Err(Error::invalid(format!(
            "{} flux fields given for {} components",
            m.len(),
            model.components()
        )));
    }
    if m.iter().any(|f| f.grid() != reference.grid()) {
        return Err(Error::invalid("flux lives on a different grid than the reference state"));
    }
    let g = *reference.grid();
    let metric = model.kernel().metric(&g, &reference.stacked())?;
    let flat: Vec<f64> = m.iter().flat_map(|f| f.values().iter().copied()).collect();
    Ok(metric.value(&flat))
}

/// Allen–Cahn dissipation `(ξ₀/2) h^d Σ |δu|²` of an increment `δu = u - u^k`.
pub fn increment_dissipation(model: &ModelSpec, increment: &CellField) -> Result<f64> {
    match model {
        ModelSpec::AllenCahn(ac) => {
            let g = increment.grid();
            let metric = ac_metric(ac, g)?;
            Ok(metric.value(increment.values()))
        }
        _ => Err(Error::invalid(format!(
            "{} is a conserved model; use dissipation with face fluxes",
            model.name()
        ))),
    }
}

fn ac_metric(ac: &AllenCahn, g: &PeriodicGrid) -> Result<Metric> {
    Kernel::metric(ac, g, &[])
}

/// Potential `φ` with `-ε Δ_h φ = f + Σ z_i u_i` and zero mean.
///
/// The total charge must vanish to [`NEUTRALITY_TOL`], otherwise the periodic
/// problem has no solution.
pub fn solve_electrostatic_potential(model: &Pnp, state: &SystemState) -> Result<CellField> {
    if state.components.len() != model.species() {
        return Err(Error::invalid(format!(
            "PNP expects {} species, state has {}",
            model.species(),
            state.components.len()
        )));
    }
    let g = *state.grid();
    model.validate(&g)?;
    let rho = model.charge_density(&state.stacked());
    let mean = rho.iter().sum::<f64>() / rho.len() as f64;
    let total = mean * g.side_length().powi(g.dim() as i32);
    if total.abs() > NEUTRALITY_TOL {
        return Err(Error::NonNeutralSource {
            mean,
            tolerance: NEUTRALITY_TOL,
        });
    }
    CellField::new(g, g.poisson_mean_free(&rho, model.permittivity)?)
}

/// Size of the discrete force driving the flow; zero exactly at steady states.
///
/// * Allen–Cahn: `‖μ/ξ₀‖`.
/// * Cahn–Hilliard, Fokker–Planck, PNP: `‖Σ_i d_h(M̂_i D_h μ_i)‖` per species
///   with the face mobility `M̂_i` of the model at the state itself.
/// * Maxwell–Stefan, porous media: `‖D_h(μ_i - μ̄)‖`, where `μ̄` is the species
///   mean; the common part is balanced by the pressure.
///
/// Norms are `h^d`-weighted discrete L2 norms summed over components.
pub fn stationary_residual(model: &ModelSpec, state: &SystemState) -> Result<f64> {
    check_shape(model, state)?;
    let g = *state.grid();
    let vol = g.cell_volume();
    let mu = chemical_potential(model, state)?;
    let weighted = |v: &[f64]| vol * linalg::dot(v, v);
    let sq = match model {
        ModelSpec::AllenCahn(ac) => weighted(mu[0].values()) / (ac.xi0 * ac.xi0),
        ModelSpec::CahnHilliard(ch) => {
            let flux = linalg::scaled(ch.mobility, &g.grad(mu[0].values()));
            weighted(&g.div(&flux))
        }
        ModelSpec::FokkerPlanck(_) => {
            let mob = g.avg(state.components[0].values());
            let flux: Vec<f64> = mob.iter().zip(g.grad(mu[0].values())).map(|(a, b)| a * b).collect();
            weighted(&g.div(&flux))
        }
        ModelSpec::Pnp(p) => {
            let mut acc = 0.0;
            for (i, d) in p.diffusivities.iter().enumerate() {
                let mob = g.avg(state.components[i].values());
                let flux: Vec<f64> = mob
                    .iter()
                    .zip(g.grad(mu[i].values()))
                    .map(|(a, b)| d * a * b)
                    .collect();
                acc += weighted(&g.div(&flux));
            }
            acc
        }
        ModelSpec::MaxwellStefan(_) | ModelSpec::PorousMedia(_) => {
            let s = mu.len() as f64;
            let nc = g.cell_count();
            let mean: Vec<f64> = (0..nc)
                .map(|j| mu.iter().map(|m| m.values()[j]).sum::<f64>() / s)
                .collect();
            mu.iter()
                .map(|m| weighted(&g.grad(&linalg::sub(m.values(), &mean))))
                .sum()
        }
    };
    Ok(sq.sqrt())
}
