//! Built-in initial states.

use std::f64::consts::PI;

use onsager::grid::{integrate_cells, CellField, PeriodicGrid};
use onsager::models::{self, ModelSpec, SystemState};

use crate::config::InitialConfig;
use crate::output::read_snapshot;
use crate::CliError;

/// Profile names accepted by [`builtin_initial_condition`].
pub const PROFILES: [&str; 5] = [
    "pnp_paper_example1",
    "uniform",
    "gaussian_bump",
    "two_region_saturation",
    "ms_three_species_smoke",
];

/// Samples the named profile with parameters `params` (a JSON object).
pub fn builtin_initial_condition(
    name: &str,
    params: &serde_json::Value,
    model: &ModelSpec,
    grid: PeriodicGrid,
) -> Result<SystemState, CliError> {
    if !PROFILES.contains(&name) {
        return Err(CliError::UnknownProfile(name.to_string()));
    }
    let mut obj = match params {
        serde_json::Value::Object(map) => map.clone(),
        serde_json::Value::Null => serde_json::Map::new(),
        _ => return Err(CliError::Validation(vec!["initial parameters must be an object".into()])),
    };
    obj.insert("profile".into(), serde_json::Value::String(name.into()));
    let spec: InitialConfig = serde_json::from_value(serde_json::Value::Object(obj)).map_err(|e| CliError::Parse {
        path: "initial".into(),
        message: e.to_string(),
    })?;
    initial_state(&spec, model, grid)
}

/// Builds and validates the initial state described by `spec`.
pub fn initial_state(spec: &InitialConfig, model: &ModelSpec, grid: PeriodicGrid) -> Result<SystemState, CliError> {
    let s = model.components();
    let l = grid.side_length();
    let wave = |t: f64| 2.0 * PI * t / l;
    let field = |f: &dyn Fn([f64; 2]) -> f64| CellField::from_fn(grid, f).map_err(CliError::Setup);
    let state = match spec {
        InitialConfig::Uniform { value } => {
            let v = value.unwrap_or(if model.has_simplex_constraint() { 1.0 / s as f64 } else { 1.0 });
            SystemState::new(vec![CellField::constant(grid, v); s]).map_err(CliError::Setup)?
        }
        InitialConfig::GaussianBump {
            center,
            width,
            background,
            normalize,
        } => {
            let c = center.clone().unwrap_or_else(|| vec![0.5 * l; grid.dim()]);
            let w = width.unwrap_or(0.1 * l);
            let bump = field(&|x| {
                let r2: f64 = (0..grid.dim())
                    .map(|a| {
                        let d = (x[a] - c[a]).rem_euclid(l);
                        let d = d.min(l - d);
                        d * d
                    })
                    .sum();
                background + (-r2 / (2.0 * w * w)).exp()
            })?;
            let bump = if *normalize {
                let mass = integrate_cells(&bump);
                CellField::new(grid, bump.values().iter().map(|v| v / mass).collect()).map_err(CliError::Setup)?
            } else {
                bump
            };
            SystemState::new(vec![bump; s]).map_err(CliError::Setup)?
        }
        InitialConfig::PnpPaperExample1 {} => {
            let prof = |t: f64| 1.02 + wave(t).sin() * wave(t).cos();
            SystemState::new(vec![field(&|x| prof(x[0]))?, field(&|x| prof(x[1]))?]).map_err(CliError::Setup)?
        }
        InitialConfig::TwoRegionSaturation {
            inside,
            outside,
            lower,
            upper,
        } => {
            let inside_box = |x: [f64; 2]| (0..grid.dim()).all(|a| x[a] >= lower[a] && x[a] <= upper[a]);
            let s1 = field(&|x| if inside_box(x) { *inside } else { *outside })?;
            let s2 = CellField::new(grid, s1.values().iter().map(|v| 1.0 - v).collect()).map_err(CliError::Setup)?;
            SystemState::new(vec![s1, s2]).map_err(CliError::Setup)?
        }
        InitialConfig::MsThreeSpeciesSmoke {} => {
            let u1 = field(&|x| 0.3 + 0.1 * wave(x[0]).sin())?;
            let u2 = field(&|x| 0.3 - 0.1 * wave(x[0]).cos())?;
            let u3 = CellField::new(
                grid,
                u1.values().iter().zip(u2.values()).map(|(a, b)| 1.0 - a - b).collect(),
            )
            .map_err(CliError::Setup)?;
            SystemState::new(vec![u1, u2, u3]).map_err(CliError::Setup)?
        }
        InitialConfig::Snapshot { path } => read_snapshot(path, grid)?,
    };
    models::validate_state(model, &state).map_err(CliError::Setup)?;
    Ok(state)
}
