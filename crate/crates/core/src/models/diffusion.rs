//! Fokker–Planck and Poisson–Nernst–Planck models.

use crate::error::{Error, Result};
use crate::grid::{CellField, PeriodicGrid};

use super::metric::Metric;
use super::{entropy, require_positive, Kernel};

/// Where the `|m|²/u` mobility of a Fokker–Planck step is evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DissipationMode {
    /// Mobility frozen at the previous state `u^k`.
    #[default]
    Frozen,
    /// Mobility taken from the unknown `u`; the objective stays jointly
    /// convex in `(u, m)`. One-dimensional grids only.
    Joint,
}

/// `E(u) = h^d Σ (β⁻¹ u log u + u U)`, `Φ = (h^d/2) Σ_faces |m|²/û`.
#[derive(Debug, Clone, PartialEq)]
pub struct FokkerPlanck {
    pub beta: f64,
    pub potential: CellField,
    pub mode: DissipationMode,
}

impl FokkerPlanck {
    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if self.potential.grid() != grid {
            return Err(Error::invalid("external potential lives on a different grid"));
        }
        if self.mode == DissipationMode::Joint && grid.dim() != 1 {
            return Err(Error::invalid("joint dissipation mode is only available in 1D"));
        }
        Ok(())
    }
}

impl Kernel for FokkerPlanck {
    fn components(&self) -> usize {
        1
    }

    fn needs_positivity(&self) -> bool {
        true
    }

    fn energy(&self, g: &PeriodicGrid, u: &[f64]) -> Result<f64> {
        let ent = entropy(u)?;
        let pot: f64 = u.iter().zip(self.potential.values()).map(|(a, b)| a * b).sum();
        Ok(g.cell_volume() * (ent / self.beta + pot))
    }

    fn energy_gradient(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "density")?;
        let vol = g.cell_volume();
        Ok(u.iter()
            .zip(self.potential.values())
            .map(|(&x, &pot)| vol * ((1.0 + x.ln()) / self.beta + pot))
            .collect())
    }

    fn energy_hess_vec(&self, g: &PeriodicGrid, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "density")?;
        let vol = g.cell_volume();
        Ok(u.iter().zip(v).map(|(x, vi)| vol * vi / (self.beta * x)).collect())
    }

    fn energy_hess_diag(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "density")?;
        let vol = g.cell_volume();
        Ok(u.iter().map(|x| vol / (self.beta * x)).collect())
    }

    fn metric(&self, g: &PeriodicGrid, reference: &[f64]) -> Result<Metric> {
        let faces = g.avg(reference);
        require_positive(&faces, "face mobility")?;
        let vol = g.cell_volume();
        Ok(Metric::Diagonal(faces.iter().map(|a| vol / a).collect()))
    }
}

/// Poisson–Nernst–Planck system with `s` ionic species.
///
/// The potential is eliminated: `φ(u)` solves `-ε Δ_h φ = ρ - mean(ρ)` with
/// `ρ = f + Σ z_i u_i`. On charge-neutral states the mean is zero and this is
/// the ordinary periodic Poisson problem; subtracting it keeps the energy
/// smooth on all of `u > 0`, which the optimizers and finite-difference
/// checks need.
#[derive(Debug, Clone, PartialEq)]
pub struct Pnp {
    pub charges: Vec<f64>,
    pub diffusivities: Vec<f64>,
    pub permittivity: f64,
    pub fixed_charge: CellField,
}

impl Pnp {
    pub fn species(&self) -> usize {
        self.charges.len()
    }

    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        let s = self.charges.len();
        if s == 0 {
            return Err(Error::invalid("PNP needs at least one species"));
        }
        if self.diffusivities.len() != s {
            return Err(Error::invalid(format!(
                "{} diffusivities given for {s} species",
                self.diffusivities.len()
            )));
        }
        if let Some(d) = self.diffusivities.iter().find(|d| !(**d > 0.0 && d.is_finite())) {
            return Err(Error::invalid(format!("diffusivities must be positive, got {d}")));
        }
        if self.charges.iter().any(|z| !z.is_finite()) {
            return Err(Error::invalid("charges must be finite"));
        }
        if !(self.permittivity > 0.0 && self.permittivity.is_finite()) {
            return Err(Error::invalid(format!(
                "permittivity must be positive, got {}",
                self.permittivity
            )));
        }
        if self.fixed_charge.grid() != grid {
            return Err(Error::invalid("fixed charge lives on a different grid"));
        }
        Ok(())
    }

    /// `f + Σ z_i u_i` on the cells.
    pub(crate) fn charge_density(&self, u: &[f64]) -> Vec<f64> {
        let nc = self.fixed_charge.values().len();
        let mut rho = self.fixed_charge.values().to_vec();
        for (i, z) in self.charges.iter().enumerate() {
            for (r, x) in rho.iter_mut().zip(&u[i * nc..(i + 1) * nc]) {
                *r += z * x;
            }
        }
        rho
    }

    pub(crate) fn potential(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        g.poisson_mean_free(&self.charge_density(u), self.permittivity)
    }
}

impl Kernel for Pnp {
    fn components(&self) -> usize {
        self.species()
    }

    fn needs_positivity(&self) -> bool {
        true
    }

    fn energy(&self, g: &PeriodicGrid, u: &[f64]) -> Result<f64> {
        let ent = entropy(u)?;
        let phi = self.potential(g, u)?;
        let field: f64 = g.grad(&phi).iter().map(|e| e * e).sum();
        Ok(g.cell_volume() * (ent + 0.5 * self.permittivity * field))
    }

    fn energy_gradient(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "ion density")?;
        let phi = self.potential(g, u)?;
        let nc = g.cell_count();
        let vol = g.cell_volume();
        let mut out = Vec::with_capacity(u.len());
        for (i, z) in self.charges.iter().enumerate() {
            for (x, p) in u[i * nc..(i + 1) * nc].iter().zip(&phi) {
                out.push(vol * (1.0 + x.ln() + z * p));
            }
        }
        Ok(out)
    }

    fn energy_hess_vec(&self, g: &PeriodicGrid, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "ion density")?;
        let nc = g.cell_count();
        let vol = g.cell_volume();
        let mut q = vec![0.0; nc];
        for (i, z) in self.charges.iter().enumerate() {
            for (acc, x) in q.iter_mut().zip(&v[i * nc..(i + 1) * nc]) {
                *acc += z * x;
            }
        }
        let psi = g.poisson_mean_free(&q, self.permittivity)?;
        let mut out = Vec::with_capacity(u.len());
        for (i, z) in self.charges.iter().enumerate() {
            let range = i * nc..(i + 1) * nc;
            for ((x, vi), p) in u[range.clone()].iter().zip(&v[range]).zip(&psi) {
                out.push(vol * (vi / x + z * p));
            }
        }
        Ok(out)
    }

    fn energy_hess_diag(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "ion density")?;
        let vol = g.cell_volume();
        Ok(u.iter().map(|x| vol / x).collect())
    }

    fn metric(&self, g: &PeriodicGrid, reference: &[f64]) -> Result<Metric> {
        let nc = g.cell_count();
        let vol = g.cell_volume();
        let mut w = Vec::with_capacity(self.species() * g.face_count());
        for (i, d) in self.diffusivities.iter().enumerate() {
            let faces = g.avg(&reference[i * nc..(i + 1) * nc]);
            require_positive(&faces, "face mobility")?;
            w.extend(faces.iter().map(|a| vol / (d * a)));
        }
        Ok(Metric::Diagonal(w))
    }
}
