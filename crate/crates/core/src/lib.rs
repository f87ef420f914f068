//! Structure-preserving time stepping for dissipative gradient flows.
//!
//! Each time step is a linearly constrained minimisation of free energy
//! plus scaled dissipation on a periodic staggered grid. Energy decay
//! holds because the previous state is always feasible, and mass
//! conservation holds because the constraint is the discrete continuity
//! equation.
//!
//! ```
//! use onsager::grid::{CellField, PeriodicGrid};
//! use onsager::models::{DissipationMode, FokkerPlanck, ModelSpec, SystemState};
//! use onsager::optim::OptimizerConfig;
//! use onsager::step::{advance, build_step};
//!
//! let grid = PeriodicGrid::unit(1, 16)?;
//! let model = ModelSpec::FokkerPlanck(FokkerPlanck {
//!     beta: 1.0,
//!     potential: CellField::from_fn(grid, |x| (2.0 * std::f64::consts::PI * x[0]).cos())?,
//!     mode: DissipationMode::Frozen,
//! });
//! let u0 = SystemState::scalar(CellField::constant(grid, 1.0));
//! let step = build_step(&model, &u0, 0.01, &grid)?;
//! let out = advance(&step, &OptimizerConfig::newton())?;
//! assert!(out.energy_after < out.energy_before);
//! # Ok::<(), onsager::Error>(())
//! ```

pub mod diagnostics;
mod error;
pub mod grid;
mod linalg;
pub mod models;
pub mod optim;
pub mod step;

pub use error::{Error, Result};

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/introduction.md")]
mod book_introduction {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/grid.md")]
mod book_grid {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/models.md")]
mod book_models {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/stepping.md")]
mod book_stepping {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/optimizers.md")]
mod book_optimizers {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/diagnostics.md")]
mod book_diagnostics {}
#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book_cli {}
