//! Allen–Cahn (nonconserved) and Cahn–Hilliard (conserved) phase-field models.
//!
//! Both share the free energy
//!
//! ```text
//! E(u) = h^d Σ_faces (α/2) |D_h u|² + h^d Σ_cells F(u),
//! F(u) = well_scale (1 - u²)² / 4 + harmonic u² / 2.
//! ```
//!
//! The `harmonic` term replaces the double well by a quadratic potential when
//! `well_scale = 0`, which turns an Allen–Cahn step into a linear backward
//! Euler solve.

use crate::error::{Error, Result};
use crate::grid::PeriodicGrid;

use super::metric::Metric;
use super::Kernel;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BulkPotential {
    pub well_scale: f64,
    pub harmonic: f64,
}

impl BulkPotential {
    pub fn double_well() -> Self {
        Self {
            well_scale: 1.0,
            harmonic: 0.0,
        }
    }

    #[inline]
    pub fn density(&self, u: f64) -> f64 {
        let w = 1.0 - u * u;
        self.well_scale * 0.25 * w * w + 0.5 * self.harmonic * u * u
    }

    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        self.well_scale * (u * u * u - u) + self.harmonic * u
    }

    #[inline]
    pub fn second_derivative(&self, u: f64) -> f64 {
        self.well_scale * (3.0 * u * u - 1.0) + self.harmonic
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AllenCahn {
    pub alpha: f64,
    pub xi0: f64,
    pub bulk: BulkPotential,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CahnHilliard {
    pub alpha: f64,
    pub mobility: f64,
    pub bulk: BulkPotential,
}

fn gradient_energy(g: &PeriodicGrid, alpha: f64, bulk: &BulkPotential, u: &[f64]) -> f64 {
    let vol = g.cell_volume();
    let du = g.grad(u);
    let grad_part: f64 = du.iter().map(|d| d * d).sum();
    let bulk_part: f64 = u.iter().map(|&x| bulk.density(x)).sum();
    vol * (0.5 * alpha * grad_part + bulk_part)
}

fn gradient_energy_gradient(g: &PeriodicGrid, alpha: f64, bulk: &BulkPotential, u: &[f64]) -> Vec<f64> {
    let vol = g.cell_volume();
    let lap = g.laplacian(u);
    u.iter()
        .zip(&lap)
        .map(|(&x, l)| vol * (-alpha * l + bulk.derivative(x)))
        .collect()
}

fn gradient_energy_hess_vec(
    g: &PeriodicGrid,
    alpha: f64,
    bulk: &BulkPotential,
    u: &[f64],
    v: &[f64],
) -> Vec<f64> {
    let vol = g.cell_volume();
    let lap = g.laplacian(v);
    u.iter()
        .zip(v)
        .zip(&lap)
        .map(|((&x, &vi), l)| vol * (-alpha * l + bulk.second_derivative(x) * vi))
        .collect()
}

fn gradient_energy_hess_diag(g: &PeriodicGrid, alpha: f64, bulk: &BulkPotential, u: &[f64]) -> Vec<f64> {
    let vol = g.cell_volume();
    let h = g.spacing();
    let stencil = 2.0 * g.dim() as f64 / (h * h);
    u.iter()
        .map(|&x| vol * (alpha * stencil + bulk.second_derivative(x)))
        .collect()
}

fn check_common(alpha: f64, bulk: &BulkPotential) -> Result<()> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::invalid(format!("alpha must be positive, got {alpha}")));
    }
    if !bulk.well_scale.is_finite() || !bulk.harmonic.is_finite() {
        return Err(Error::invalid("bulk potential coefficients must be finite"));
    }
    Ok(())
}

impl AllenCahn {
    pub fn validate(&self) -> Result<()> {
        check_common(self.alpha, &self.bulk)?;
        if !(self.xi0 > 0.0 && self.xi0.is_finite()) {
            return Err(Error::invalid(format!("xi0 must be positive, got {}", self.xi0)));
        }
        Ok(())
    }
}

impl CahnHilliard {
    pub fn validate(&self) -> Result<()> {
        check_common(self.alpha, &self.bulk)?;
        if !(self.mobility > 0.0 && self.mobility.is_finite()) {
            return Err(Error::invalid(format!(
                "mobility must be positive, got {}",
                self.mobility
            )));
        }
        Ok(())
    }
}

impl Kernel for AllenCahn {
    fn components(&self) -> usize {
        1
    }

    fn conserved(&self) -> bool {
        false
    }

    fn needs_positivity(&self) -> bool {
        false
    }

    fn energy(&self, g: &PeriodicGrid, u: &[f64]) -> Result<f64> {
        Ok(gradient_energy(g, self.alpha, &self.bulk, u))
    }

    fn energy_gradient(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        Ok(gradient_energy_gradient(g, self.alpha, &self.bulk, u))
    }

    fn energy_hess_vec(&self, g: &PeriodicGrid, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(gradient_energy_hess_vec(g, self.alpha, &self.bulk, u, v))
    }

    fn energy_hess_diag(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        Ok(gradient_energy_hess_diag(g, self.alpha, &self.bulk, u))
    }

    /// Metric on the increment `u - u^k`, independent of the reference.
    fn metric(&self, g: &PeriodicGrid, _reference: &[f64]) -> Result<Metric> {
        Ok(Metric::Diagonal(vec![self.xi0 * g.cell_volume(); g.cell_count()]))
    }
}

impl Kernel for CahnHilliard {
    fn components(&self) -> usize {
        1
    }

    fn needs_positivity(&self) -> bool {
        false
    }

    fn energy(&self, g: &PeriodicGrid, u: &[f64]) -> Result<f64> {
        Ok(gradient_energy(g, self.alpha, &self.bulk, u))
    }

    fn energy_gradient(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        Ok(gradient_energy_gradient(g, self.alpha, &self.bulk, u))
    }

    fn energy_hess_vec(&self, g: &PeriodicGrid, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        Ok(gradient_energy_hess_vec(g, self.alpha, &self.bulk, u, v))
    }

    fn energy_hess_diag(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        Ok(gradient_energy_hess_diag(g, self.alpha, &self.bulk, u))
    }

    fn metric(&self, g: &PeriodicGrid, _reference: &[f64]) -> Result<Metric> {
        Ok(Metric::Diagonal(vec![
            g.cell_volume() / self.mobility;
            g.face_count()
        ]))
    }
}
