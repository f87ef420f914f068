//! Uniform periodic staggered mesh in one or two dimensions.
//!
//! Scalars (densities, potentials) live at cell centres `x_j = (j - 1/2) h`,
//! fluxes live on faces `x_{j+1/2} = j h`. Every index wraps modulo `N`.
//!
//! The two difference operators
//!
//! ```text
//! (D_h w)_{j+1/2} = (w_{j+1} - w_j) / h          cells -> faces
//! (d_h m)_j       = (m_{j+1/2} - m_{j-1/2}) / h  faces -> cells
//! ```
//!
//! are negative adjoints of each other under the `h^d`-weighted inner
//! products, which is what makes the constraint `u - u^k + d_h m = 0`
//! conserve `h^d sum_j u_j` exactly.
//!
//! In two dimensions cells are stored row-major with `x` fastest
//! (`index = ix + N * iy`) and a [`FaceField`] holds all x-faces followed by
//! all y-faces; the face with storage slot `(axis, j)` sits between cell `j`
//! and its forward neighbour along `axis`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CgOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid {
    dim: usize,
    cells_per_axis: usize,
    side_length: f64,
}

impl PeriodicGrid {
    pub fn new(dim: usize, cells_per_axis: usize, side_length: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::invalid(format!("grid dimension must be 1 or 2, got {dim}")));
        }
        if cells_per_axis < 2 {
            return Err(Error::invalid(format!(
                "need at least 2 cells per axis, got {cells_per_axis}"
            )));
        }
        if !(side_length.is_finite() && side_length > 0.0) {
            return Err(Error::invalid(format!("side length must be positive, got {side_length}")));
        }
        Ok(Self {
            dim,
            cells_per_axis,
            side_length,
        })
    }

    /// Grid on the unit interval or unit square.
    pub fn unit(dim: usize, cells_per_axis: usize) -> Result<Self> {
        Self::new(dim, cells_per_axis, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells_per_axis(&self) -> usize {
        self.cells_per_axis
    }

    pub fn side_length(&self) -> f64 {
        self.side_length
    }

    /// Mesh width `h = side_length / N`.
    pub fn spacing(&self) -> f64 {
        self.side_length / self.cells_per_axis as f64
    }

    pub fn cell_count(&self) -> usize {
        self.cells_per_axis.pow(self.dim as u32)
    }

    pub fn face_count(&self) -> usize {
        self.dim * self.cell_count()
    }

    /// `h^d`, the quadrature weight of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn axis_indices(&self, cell: usize) -> [usize; 2] {
        let n = self.cells_per_axis;
        if self.dim == 1 {
            [cell, 0]
        } else {
            [cell % n, cell / n]
        }
    }

    pub fn cell_index(&self, ix: usize, iy: usize) -> usize {
        if self.dim == 1 {
            ix
        } else {
            ix + self.cells_per_axis * iy
        }
    }

    /// Coordinates of a cell centre; the second entry is 0 in 1D.
    pub fn cell_center(&self, cell: usize) -> [f64; 2] {
        let h = self.spacing();
        let [ix, iy] = self.axis_indices(cell);
        let y = if self.dim == 2 { (iy as f64 + 0.5) * h } else { 0.0 };
        [(ix as f64 + 0.5) * h, y]
    }

    /// Coordinates of the face stored at `(axis, cell)`.
    pub fn face_center(&self, axis: usize, cell: usize) -> [f64; 2] {
        let mut c = self.cell_center(cell);
        c[axis] += 0.5 * self.spacing();
        c
    }

    #[inline]
    pub(crate) fn forward(&self, cell: usize, axis: usize) -> usize {
        let n = self.cells_per_axis;
        let [ix, iy] = self.axis_indices(cell);
        match axis {
            0 => self.cell_index((ix + 1) % n, iy),
            _ => self.cell_index(ix, (iy + 1) % n),
        }
    }

    #[inline]
    pub(crate) fn backward(&self, cell: usize, axis: usize) -> usize {
        let n = self.cells_per_axis;
        let [ix, iy] = self.axis_indices(cell);
        match axis {
            0 => self.cell_index((ix + n - 1) % n, iy),
            _ => self.cell_index(ix, (iy + n - 1) % n),
        }
    }

    // Raw-slice kernels. Cell slices have `cell_count()` entries and face
    // slices `face_count()` entries.

    pub(crate) fn grad_raw(&self, u: &[f64], out: &mut [f64]) {
        let nc = self.cell_count();
        let inv_h = 1.0 / self.spacing();
        for axis in 0..self.dim {
            for j in 0..nc {
                out[axis * nc + j] = (u[self.forward(j, axis)] - u[j]) * inv_h;
            }
        }
    }

    pub(crate) fn div_raw(&self, m: &[f64], out: &mut [f64]) {
        let nc = self.cell_count();
        let inv_h = 1.0 / self.spacing();
        for (j, o) in out.iter_mut().enumerate().take(nc) {
            let mut acc = 0.0;
            for axis in 0..self.dim {
                acc += m[axis * nc + j] - m[axis * nc + self.backward(j, axis)];
            }
            *o = acc * inv_h;
        }
    }

    pub(crate) fn avg_raw(&self, u: &[f64], out: &mut [f64]) {
        let nc = self.cell_count();
        for axis in 0..self.dim {
            for j in 0..nc {
                out[axis * nc + j] = 0.5 * (u[j] + u[self.forward(j, axis)]);
            }
        }
    }

    /// Transpose of [`Self::avg_raw`] (faces -> cells), accumulated into `out`.
    pub(crate) fn avg_transpose_add(&self, f: &[f64], out: &mut [f64]) {
        let nc = self.cell_count();
        for axis in 0..self.dim {
            for j in 0..nc {
                let v = 0.5 * f[axis * nc + j];
                out[j] += v;
                out[self.forward(j, axis)] += v;
            }
        }
    }

    pub(crate) fn grad(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.face_count()];
        self.grad_raw(u, &mut out);
        out
    }

    pub(crate) fn div(&self, m: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cell_count()];
        self.div_raw(m, &mut out);
        out
    }

    pub(crate) fn avg(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.face_count()];
        self.avg_raw(u, &mut out);
        out
    }

    /// `Δ_h = d_h ∘ D_h`.
    pub(crate) fn laplacian(&self, u: &[f64]) -> Vec<f64> {
        self.div(&self.grad(u))
    }

    /// Solves `-coeff Δ_h φ = rhs - mean(rhs)` for mean-zero `φ`.
    pub(crate) fn poisson_mean_free(&self, rhs: &[f64], coeff: f64) -> Result<Vec<f64>> {
        let constant = vec![1.0 / (self.cell_count() as f64).sqrt(); self.cell_count()];
        let opts = CgOptions {
            rel_tol: 1e-13,
            max_iter: (10 * self.cell_count()).max(50),
            null: Some(&constant),
        };
        let apply = |v: &[f64]| -> Result<Vec<f64>> {
            let mut lap = self.laplacian(v);
            for x in lap.iter_mut() {
                *x *= -coeff;
            }
            Ok(lap)
        };
        let out = linalg::conjugate_gradient(apply, rhs, None, opts, "periodic Poisson solve")?;
        let mut phi = out.x;
        linalg::remove_mean(&mut phi);
        Ok(phi)
    }
}

/// Cell-centred scalar data on a [`PeriodicGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct CellField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl CellField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cell_count() {
            return Err(Error::invalid(format!(
                "cell field has {} values, grid has {} cells",
                values.len(),
                grid.cell_count()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("cell value {bad} is not finite")));
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: PeriodicGrid, value: f64) -> Self {
        Self {
            grid,
            values: vec![value; grid.cell_count()],
        }
    }

    /// Samples `f` at every cell centre.
    pub fn from_fn(grid: PeriodicGrid, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let values = (0..grid.cell_count()).map(|j| f(grid.cell_center(j))).collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Face-centred data: one scalar per face and axis, x-faces first.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceField {
    grid: PeriodicGrid,
    values: Vec<f64>,
}

impl FaceField {
    pub fn new(grid: PeriodicGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.face_count() {
            return Err(Error::invalid(format!(
                "face field has {} values, grid has {} faces",
                values.len(),
                grid.face_count()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("face value {bad} is not finite")));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: PeriodicGrid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.face_count()],
        }
    }

    pub fn grid(&self) -> &PeriodicGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn axis(&self, axis: usize) -> &[f64] {
        let nc = self.grid.cell_count();
        &self.values[axis * nc..(axis + 1) * nc]
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// Forward difference `D_h` from cells to faces, per axis.
pub fn gradient_to_faces(u: &CellField) -> FaceField {
    FaceField {
        grid: u.grid,
        values: u.grid.grad(&u.values),
    }
}

/// Backward difference `d_h` from faces to cells, summed over axes.
pub fn divergence_to_centers(m: &FaceField) -> CellField {
    CellField {
        grid: m.grid,
        values: m.grid.div(&m.values),
    }
}

/// Two-point arithmetic mean of the cells adjacent to each face.
pub fn average_to_faces(u: &CellField) -> FaceField {
    FaceField {
        grid: u.grid,
        values: u.grid.avg(&u.values),
    }
}

/// Midpoint quadrature `h^d Σ_j u_j`.
pub fn integrate_cells(u: &CellField) -> f64 {
    u.grid.cell_volume() * u.values.iter().sum::<f64>()
}

/// `h^d`-weighted inner product of two cell fields.
pub fn cell_inner(a: &CellField, b: &CellField) -> f64 {
    a.grid.cell_volume() * linalg::dot(&a.values, &b.values)
}

/// `h^d`-weighted inner product of two face fields, summed over axes.
pub fn face_inner(a: &FaceField, b: &FaceField) -> f64 {
    a.grid.cell_volume() * linalg::dot(&a.values, &b.values)
}

/// Solves `-coeff Δ_h φ = rhs` on the torus and returns the mean-zero
/// solution.
///
/// The source must have zero mean (to `1e-12 ||rhs||_inf`), otherwise the
/// problem is unsolvable and [`Error::NonNeutralSource`] is returned.
pub fn solve_periodic_poisson(rhs: &CellField, coeff: f64) -> Result<CellField> {
    if !(coeff > 0.0 && coeff.is_finite()) {
        return Err(Error::invalid(format!("Poisson coefficient must be positive, got {coeff}")));
    }
    let scale = linalg::norm_inf(&rhs.values);
    let mean = rhs.mean();
    let tolerance = 1e-12 * scale;
    if mean.abs() > tolerance {
        return Err(Error::NonNeutralSource { mean, tolerance });
    }
    let phi = rhs.grid.poisson_mean_free(&rhs.values, coeff)?;
    Ok(CellField {
        grid: rhs.grid,
        values: phi,
    })
}
