//! Multicomponent models with a volume-filling constraint `Σ_i u_i = 1`:
//! Maxwell–Stefan diffusion and two-phase (or multiphase) porous-media flow.

use crate::error::{Error, Result};
use crate::grid::{CellField, PeriodicGrid};

use super::metric::{FrictionMetric, Metric};
use super::{entropy, require_positive, Kernel};

const SYMMETRY_TOL: f64 = 1e-14;

fn check_symmetric(name: &str, s: usize, a: &[f64]) -> Result<()> {
    if a.len() != s * s {
        return Err(Error::invalid(format!(
            "{name} must be {s}x{s} ({} entries), got {}",
            s * s,
            a.len()
        )));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid(format!("{name} has non-finite entries")));
    }
    for i in 0..s {
        for j in (i + 1)..s {
            let (x, y) = (a[i * s + j], a[j * s + i]);
            if (x - y).abs() > SYMMETRY_TOL * (1.0 + x.abs().max(y.abs())) {
                return Err(Error::invalid(format!(
                    "{name} is not symmetric: entry ({i},{j}) = {x} but ({j},{i}) = {y}"
                )));
            }
        }
    }
    Ok(())
}

/// Volume fractions driven by relative-velocity friction.
///
/// `E = h^d Σ_i Σ_cells u_i log u_i` and
/// `Φ = (h^d/4) Σ_faces Σ_{i,j} b_ij û_i û_j |m_i/û_i - m_j/û_j|²`.
/// Only off-diagonal friction coefficients enter; they must be
/// non-negative and symmetric.
#[derive(Debug, Clone, PartialEq)]
pub struct MaxwellStefan {
    /// Row-major `s x s` matrix `b_ij`.
    pub friction: Vec<f64>,
    pub species: usize,
}

impl MaxwellStefan {
    pub fn new(species: usize, friction: Vec<f64>) -> Result<Self> {
        let out = Self { friction, species };
        out.validate()?;
        Ok(out)
    }

    /// Uniform friction `b_ij = b` for `i != j`.
    pub fn uniform(species: usize, b: f64) -> Result<Self> {
        let friction = (0..species * species)
            .map(|k| if k / species == k % species { 0.0 } else { b })
            .collect();
        Self::new(species, friction)
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.species;
        if s < 2 {
            return Err(Error::invalid(format!("Maxwell-Stefan needs at least 2 species, got {s}")));
        }
        check_symmetric("friction matrix", s, &self.friction)?;
        for i in 0..s {
            for j in 0..s {
                if i != j && self.friction[i * s + j] < 0.0 {
                    return Err(Error::invalid(format!(
                        "friction coefficient b[{i}][{j}] = {} is negative",
                        self.friction[i * s + j]
                    )));
                }
            }
        }
        let connected = (0..s).all(|i| (0..s).any(|j| j != i && self.friction[i * s + j] > 0.0));
        if !connected {
            return Err(Error::invalid("every species needs a positive friction coefficient"));
        }
        Ok(())
    }
}

impl Kernel for MaxwellStefan {
    fn components(&self) -> usize {
        self.species
    }

    fn needs_positivity(&self) -> bool {
        true
    }

    fn has_simplex(&self) -> bool {
        true
    }

    fn energy(&self, g: &PeriodicGrid, u: &[f64]) -> Result<f64> {
        Ok(g.cell_volume() * entropy(u)?)
    }

    fn energy_gradient(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "volume fraction")?;
        let vol = g.cell_volume();
        Ok(u.iter().map(|x| vol * (1.0 + x.ln())).collect())
    }

    fn energy_hess_vec(&self, g: &PeriodicGrid, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "volume fraction")?;
        let vol = g.cell_volume();
        Ok(u.iter().zip(v).map(|(x, vi)| vol * vi / x).collect())
    }

    fn energy_hess_diag(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "volume fraction")?;
        let vol = g.cell_volume();
        Ok(u.iter().map(|x| vol / x).collect())
    }

    fn metric(&self, g: &PeriodicGrid, reference: &[f64]) -> Result<Metric> {
        let nc = g.cell_count();
        let mut mobility = Vec::with_capacity(self.species * g.face_count());
        for i in 0..self.species {
            mobility.extend(g.avg(&reference[i * nc..(i + 1) * nc]));
        }
        require_positive(&mobility, "face volume fraction")?;
        Ok(Metric::Friction(FrictionMetric {
            species: self.species,
            faces: g.face_count(),
            volume: g.cell_volume(),
            mobility,
            friction: self.friction.clone(),
        }))
    }
}

/// Multiphase Darcy flow of saturations `u_i` in a rock of porosity `φ(x)`.
///
/// ```text
/// E = h^d Σ_cells φ F(u),   F(u) = Σ σ_i u_i (log u_i - 1) + Σ α_ij u_i u_j + Σ b_j u_j
/// Φ = (h^d/2) Σ_faces Σ_i m_i² / K̂_i,   K_i = u_i^p K(x) / η_i
/// ```
///
/// The continuity constraint is porosity-weighted,
/// `φ (u_i - u_i^k) + d_h m_i = 0`, so the conserved quantity is
/// `h^d Σ φ u_i` (pore volume occupied by each phase).
#[derive(Debug, Clone, PartialEq)]
pub struct PorousMedia {
    pub porosity: CellField,
    pub sigma: Vec<f64>,
    /// Row-major `s x s` matrix `α_ij`.
    pub quad: Vec<f64>,
    pub lin: Vec<f64>,
    pub viscosities: Vec<f64>,
    pub rel_perm_exponent: u32,
    pub permeability: CellField,
}

impl PorousMedia {
    pub fn phases(&self) -> usize {
        self.sigma.len()
    }

    pub fn validate(&self, grid: &PeriodicGrid) -> Result<()> {
        let s = self.phases();
        if s < 2 {
            return Err(Error::invalid(format!("porous media needs at least 2 phases, got {s}")));
        }
        for (name, v) in [("lin", &self.lin), ("viscosities", &self.viscosities)] {
            if v.len() != s {
                return Err(Error::invalid(format!("{name} has {} entries for {s} phases", v.len())));
            }
        }
        if let Some(x) = self.sigma.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::invalid(format!("sigma must be positive, got {x}")));
        }
        if let Some(x) = self.viscosities.iter().find(|x| !(**x > 0.0 && x.is_finite())) {
            return Err(Error::invalid(format!("viscosities must be positive, got {x}")));
        }
        if self.lin.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("lin coefficients must be finite"));
        }
        check_symmetric("quad matrix", s, &self.quad)?;
        if self.rel_perm_exponent == 0 {
            return Err(Error::invalid("relative permeability exponent must be at least 1"));
        }
        for (name, f) in [("porosity", &self.porosity), ("permeability", &self.permeability)] {
            if f.grid() != grid {
                return Err(Error::invalid(format!("{name} lives on a different grid")));
            }
        }
        if self.porosity.values().iter().any(|p| !(*p > 0.0 && *p < 1.0)) {
            return Err(Error::invalid("porosity must lie in (0, 1)"));
        }
        if self.permeability.values().iter().any(|k| !(*k > 0.0)) {
            return Err(Error::invalid("permeability must be positive"));
        }
        Ok(())
    }

    fn alpha(&self, i: usize, j: usize) -> f64 {
        self.quad[i * self.phases() + j]
    }

    /// `∂F/∂u_i` per cell, species-major.
    pub(crate) fn bulk_gradient(&self, u: &[f64]) -> Vec<f64> {
        let s = self.phases();
        let nc = u.len() / s;
        let mut out = vec![0.0; u.len()];
        for i in 0..s {
            for c in 0..nc {
                let x = u[i * nc + c];
                let mut acc = self.sigma[i] * x.ln() + self.lin[i];
                for j in 0..s {
                    acc += 2.0 * self.alpha(i, j) * u[j * nc + c];
                }
                out[i * nc + c] = acc;
            }
        }
        out
    }
}

impl Kernel for PorousMedia {
    fn components(&self) -> usize {
        self.phases()
    }

    fn needs_positivity(&self) -> bool {
        true
    }

    fn has_simplex(&self) -> bool {
        true
    }

    fn cell_weights(&self) -> Option<&[f64]> {
        Some(self.porosity.values())
    }

    fn energy(&self, g: &PeriodicGrid, u: &[f64]) -> Result<f64> {
        require_positive(u, "saturation")?;
        let s = self.phases();
        let phi = self.porosity.values();
        let nc = phi.len();
        let mut total = 0.0;
        for c in 0..nc {
            let mut f = 0.0;
            for i in 0..s {
                let x = u[i * nc + c];
                f += self.sigma[i] * x * (x.ln() - 1.0) + self.lin[i] * x;
                for j in 0..s {
                    f += self.alpha(i, j) * x * u[j * nc + c];
                }
            }
            total += phi[c] * f;
        }
        Ok(g.cell_volume() * total)
    }

    fn energy_gradient(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "saturation")?;
        let vol = g.cell_volume();
        let phi = self.porosity.values();
        let nc = phi.len();
        let mut out = self.bulk_gradient(u);
        for (k, x) in out.iter_mut().enumerate() {
            *x *= vol * phi[k % nc];
        }
        Ok(out)
    }

    fn energy_hess_vec(&self, g: &PeriodicGrid, u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "saturation")?;
        let s = self.phases();
        let vol = g.cell_volume();
        let phi = self.porosity.values();
        let nc = phi.len();
        let mut out = vec![0.0; u.len()];
        for i in 0..s {
            for c in 0..nc {
                let k = i * nc + c;
                let mut acc = self.sigma[i] * v[k] / u[k];
                for j in 0..s {
                    acc += 2.0 * self.alpha(i, j) * v[j * nc + c];
                }
                out[k] = vol * phi[c] * acc;
            }
        }
        Ok(out)
    }

    fn energy_hess_diag(&self, g: &PeriodicGrid, u: &[f64]) -> Result<Vec<f64>> {
        require_positive(u, "saturation")?;
        let s = self.phases();
        let vol = g.cell_volume();
        let phi = self.porosity.values();
        let nc = phi.len();
        let mut out = vec![0.0; u.len()];
        for i in 0..s {
            for c in 0..nc {
                let k = i * nc + c;
                out[k] = vol * phi[c] * (self.sigma[i] / u[k] + 2.0 * self.alpha(i, i));
            }
        }
        Ok(out)
    }

    fn metric(&self, g: &PeriodicGrid, reference: &[f64]) -> Result<Metric> {
        let nc = g.cell_count();
        let vol = g.cell_volume();
        let perm = self.permeability.values();
        let mut w = Vec::with_capacity(self.phases() * g.face_count());
        for (i, eta) in self.viscosities.iter().enumerate() {
            let k_cells: Vec<f64> = reference[i * nc..(i + 1) * nc]
                .iter()
                .zip(perm)
                .map(|(x, k)| x.powi(self.rel_perm_exponent as i32) * k / eta)
                .collect();
            let k_faces = g.avg(&k_cells);
            require_positive(&k_faces, "face conductivity")?;
            w.extend(k_faces.iter().map(|k| vol / k));
        }
        Ok(Metric::Diagonal(w))
    }
}
