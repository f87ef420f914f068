//! Run configuration: strict JSON schema, defaults and validation.

use std::path::PathBuf;

use onsager::grid::{CellField, PeriodicGrid};
use onsager::models::{
    AllenCahn, BulkPotential, CahnHilliard, DissipationMode, FokkerPlanck, MaxwellStefan, ModelSpec, Pnp,
    PorousMedia,
};
use onsager::optim::{Method, OptimizerConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

fn one() -> f64 {
    1.0
}

/// A whole run: model, grid, horizon, solver, initial data and output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub initial: InitialConfig,
    #[serde(default)]
    pub output: OutputConfig,
    /// Free text carried into the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dim: usize,
    pub n: usize,
    #[serde(default = "one")]
    pub side_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    pub tau: f64,
    pub steps: usize,
    /// Snapshot cadence in steps; 0 writes the final state only.
    #[serde(default)]
    pub snapshot_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MethodName {
    #[default]
    NewtonKkt,
    ProjectedGradient,
    Aepg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    #[serde(default)]
    pub method: MethodName,
    #[serde(default = "one")]
    pub eta: f64,
    #[serde(default)]
    pub aepg_shift: Option<f64>,
    /// Filled with the method's default when absent.
    #[serde(default)]
    pub max_iterations: Option<usize>,
    #[serde(default = "default_kkt")]
    pub kkt_tolerance: f64,
    #[serde(default = "default_linear")]
    pub linear_tolerance: f64,
    #[serde(default = "default_damping")]
    pub damping: f64,
}

fn default_kkt() -> f64 {
    onsager::optim::DEFAULT_KKT_TOLERANCE
}

fn default_linear() -> f64 {
    onsager::optim::DEFAULT_LINEAR_TOLERANCE
}

fn default_damping() -> f64 {
    0.95
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            method: MethodName::default(),
            eta: 1.0,
            aepg_shift: None,
            max_iterations: None,
            kkt_tolerance: default_kkt(),
            linear_tolerance: default_linear(),
            damping: default_damping(),
        }
    }
}

impl SolverConfig {
    pub fn optimizer(&self) -> OptimizerConfig {
        let method = match self.method {
            MethodName::NewtonKkt => Method::NewtonKkt,
            MethodName::ProjectedGradient => Method::ProjectedGradient,
            MethodName::Aepg => Method::Aepg,
        };
        let base = OptimizerConfig::new(method);
        OptimizerConfig {
            eta: self.eta,
            aepg_shift: self.aepg_shift,
            max_iterations: self.max_iterations.unwrap_or(base.max_iterations),
            kkt_tolerance: self.kkt_tolerance,
            linear_tolerance: self.linear_tolerance,
            damping: self.damping,
            ..base
        }
    }
}

/// A scalar field sampled at cell centres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Uniform {
        value: f64,
    },
    /// `mean + amplitude cos(2π k x_axis / L)`.
    Cosine {
        #[serde(default)]
        mean: f64,
        amplitude: f64,
        #[serde(default = "one")]
        wavenumber: f64,
        #[serde(default)]
        axis: usize,
    },
    /// `inside` on the box `[lower, upper]`, `outside` elsewhere.
    TwoRegion {
        inside: f64,
        outside: f64,
        lower: [f64; 2],
        upper: [f64; 2],
    },
}

impl FieldSpec {
    pub fn sample(&self, grid: PeriodicGrid) -> onsager::Result<CellField> {
        let l = grid.side_length();
        match *self {
            FieldSpec::Uniform { value } => Ok(CellField::constant(grid, value)),
            FieldSpec::Cosine {
                mean,
                amplitude,
                wavenumber,
                axis,
            } => CellField::from_fn(grid, |x| {
                mean + amplitude * (2.0 * std::f64::consts::PI * wavenumber * x[axis.min(1)] / l).cos()
            }),
            FieldSpec::TwoRegion {
                inside,
                outside,
                lower,
                upper,
            } => CellField::from_fn(grid, |x| {
                let within = (0..grid.dim()).all(|a| x[a] >= lower[a] && x[a] <= upper[a]);
                if within {
                    inside
                } else {
                    outside
                }
            }),
        }
    }

    fn check(&self, name: &str, dim: Option<usize>, problems: &mut Vec<String>) {
        if let (FieldSpec::Cosine { axis, .. }, Some(d)) = (self, dim) {
            if *axis >= d {
                problems.push(format!("{name}.axis must be below the grid dimension {d}, got {axis}"));
            }
        }
    }
}

fn zero_field() -> FieldSpec {
    FieldSpec::Uniform { value: 0.0 }
}

fn default_charges() -> Vec<f64> {
    vec![1.0, -1.0]
}

fn default_diffusivities() -> Vec<f64> {
    vec![1.0, 1.0]
}

fn default_exponent() -> u32 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    #[default]
    Frozen,
    Joint,
}

/// Model block; `type` selects the variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    AllenCahn {
        alpha: f64,
        #[serde(default = "one")]
        xi0: f64,
        #[serde(default = "one")]
        well_scale: f64,
        #[serde(default)]
        harmonic: f64,
    },
    CahnHilliard {
        alpha: f64,
        #[serde(default = "one")]
        mobility: f64,
        #[serde(default = "one")]
        well_scale: f64,
        #[serde(default)]
        harmonic: f64,
    },
    FokkerPlanck {
        #[serde(default = "one")]
        beta: f64,
        #[serde(default = "zero_field")]
        potential: FieldSpec,
        #[serde(default)]
        mode: ModeName,
    },
    Pnp {
        #[serde(default = "default_charges")]
        charges: Vec<f64>,
        #[serde(default = "default_diffusivities")]
        diffusivities: Vec<f64>,
        #[serde(default = "one")]
        permittivity: f64,
        #[serde(default = "zero_field")]
        fixed_charge: FieldSpec,
    },
    MaxwellStefan {
        /// Symmetric `s x s` friction matrix; the diagonal is ignored.
        friction: Vec<Vec<f64>>,
    },
    PorousMedia {
        porosity: FieldSpec,
        permeability: FieldSpec,
        sigma: Vec<f64>,
        quad: Vec<Vec<f64>>,
        lin: Vec<f64>,
        viscosities: Vec<f64>,
        #[serde(default = "default_exponent")]
        rel_perm_exponent: u32,
    },
}

impl ModelConfig {
    /// Number of components the model evolves, as far as the config says.
    pub fn components(&self) -> usize {
        match self {
            ModelConfig::AllenCahn { .. } | ModelConfig::CahnHilliard { .. } | ModelConfig::FokkerPlanck { .. } => 1,
            ModelConfig::Pnp { charges, .. } => charges.len(),
            ModelConfig::MaxwellStefan { friction } => friction.len(),
            ModelConfig::PorousMedia { sigma, .. } => sigma.len(),
        }
    }

    pub fn has_simplex(&self) -> bool {
        matches!(self, ModelConfig::MaxwellStefan { .. } | ModelConfig::PorousMedia { .. })
    }

    fn check_fields(&self, dim: Option<usize>, problems: &mut Vec<String>) {
        match self {
            ModelConfig::FokkerPlanck { potential, .. } => potential.check("model.potential", dim, problems),
            ModelConfig::Pnp { fixed_charge, .. } => fixed_charge.check("model.fixed_charge", dim, problems),
            ModelConfig::PorousMedia {
                porosity, permeability, ..
            } => {
                porosity.check("model.porosity", dim, problems);
                permeability.check("model.permeability", dim, problems);
            }
            _ => {}
        }
    }

    /// Builds and validates the library model on `grid`.
    pub fn build(&self, grid: PeriodicGrid) -> onsager::Result<ModelSpec> {
        let flat = |rows: &[Vec<f64>], name: &str| -> onsager::Result<Vec<f64>> {
            let s = rows.len();
            if rows.iter().any(|r| r.len() != s) {
                return Err(onsager::Error::InvalidInput(format!("{name} must be a square matrix")));
            }
            Ok(rows.concat())
        };
        let model = match self {
            ModelConfig::AllenCahn {
                alpha,
                xi0,
                well_scale,
                harmonic,
            } => ModelSpec::AllenCahn(AllenCahn {
                alpha: *alpha,
                xi0: *xi0,
                bulk: BulkPotential {
                    well_scale: *well_scale,
                    harmonic: *harmonic,
                },
            }),
            ModelConfig::CahnHilliard {
                alpha,
                mobility,
                well_scale,
                harmonic,
            } => ModelSpec::CahnHilliard(CahnHilliard {
                alpha: *alpha,
                mobility: *mobility,
                bulk: BulkPotential {
                    well_scale: *well_scale,
                    harmonic: *harmonic,
                },
            }),
            ModelConfig::FokkerPlanck { beta, potential, mode } => ModelSpec::FokkerPlanck(FokkerPlanck {
                beta: *beta,
                potential: potential.sample(grid)?,
                mode: match mode {
                    ModeName::Frozen => DissipationMode::Frozen,
                    ModeName::Joint => DissipationMode::Joint,
                },
            }),
            ModelConfig::Pnp {
                charges,
                diffusivities,
                permittivity,
                fixed_charge,
            } => ModelSpec::Pnp(Pnp {
                charges: charges.clone(),
                diffusivities: diffusivities.clone(),
                permittivity: *permittivity,
                fixed_charge: fixed_charge.sample(grid)?,
            }),
            ModelConfig::MaxwellStefan { friction } => {
                ModelSpec::MaxwellStefan(MaxwellStefan::new(friction.len(), flat(friction, "friction")?)?)
            }
            ModelConfig::PorousMedia {
                porosity,
                permeability,
                sigma,
                quad,
                lin,
                viscosities,
                rel_perm_exponent,
            } => ModelSpec::PorousMedia(PorousMedia {
                porosity: porosity.sample(grid)?,
                sigma: sigma.clone(),
                quad: flat(quad, "quad")?,
                lin: lin.clone(),
                viscosities: viscosities.clone(),
                rel_perm_exponent: *rel_perm_exponent,
                permeability: permeability.sample(grid)?,
            }),
        };
        model.validate(&grid)?;
        Ok(model)
    }
}

/// Initial state; `profile` selects a built-in profile or a snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "profile", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialConfig {
    /// Every component constant; the default value is `1/s` for
    /// volume-filling models and 1 otherwise.
    Uniform {
        #[serde(default)]
        value: Option<f64>,
    },
    /// `background + exp(-|x - center|² / (2 width²))` with periodic distance,
    /// optionally rescaled to unit mass.
    GaussianBump {
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default)]
        width: Option<f64>,
        #[serde(default)]
        background: f64,
        #[serde(default = "yes")]
        normalize: bool,
    },
    PnpPaperExample1 {},
    /// Two phases: saturation `inside` on a box, `outside` elsewhere.
    TwoRegionSaturation {
        inside: f64,
        outside: f64,
        lower: [f64; 2],
        upper: [f64; 2],
    },
    MsThreeSpeciesSmoke {},
    Snapshot {
        path: PathBuf,
    },
}

fn yes() -> bool {
    true
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig::Uniform { value: None }
    }
}

impl InitialConfig {
    pub fn name(&self) -> &'static str {
        match self {
            InitialConfig::Uniform { .. } => "uniform",
            InitialConfig::GaussianBump { .. } => "gaussian_bump",
            InitialConfig::PnpPaperExample1 {} => "pnp_paper_example1",
            InitialConfig::TwoRegionSaturation { .. } => "two_region_saturation",
            InitialConfig::MsThreeSpeciesSmoke {} => "ms_three_species_smoke",
            InitialConfig::Snapshot { .. } => "snapshot",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_label")]
    pub label: String,
}

fn default_dir() -> PathBuf {
    PathBuf::from("output")
}

fn default_label() -> String {
    "run".to_string()
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_dir(),
            label: default_label(),
        }
    }
}

impl RunConfig {
    pub fn grid(&self) -> onsager::Result<PeriodicGrid> {
        PeriodicGrid::new(self.grid.dim, self.grid.n, self.grid.side_length)
    }

    /// Fills every optional field with its resolved default.
    fn resolve(&mut self) {
        if self.solver.max_iterations.is_none() {
            self.solver.max_iterations = Some(self.solver.optimizer().max_iterations);
        }
        let l = self.grid.side_length;
        let s = self.model.components().max(1);
        match &mut self.initial {
            InitialConfig::Uniform { value } if value.is_none() => {
                *value = Some(if self.model.has_simplex() { 1.0 / s as f64 } else { 1.0 });
            }
            InitialConfig::GaussianBump { center, width, .. } => {
                if center.is_none() {
                    *center = Some(vec![0.5 * l; self.grid.dim.clamp(1, 2)]);
                }
                if width.is_none() {
                    *width = Some(0.1 * l);
                }
            }
            _ => {}
        }
    }

    /// Every violated invariant, each prefixed with its key path.
    pub fn problems(&self) -> Vec<String> {
        let mut bad = Vec::new();
        let dim_ok = matches!(self.grid.dim, 1 | 2);
        if !dim_ok {
            bad.push(format!("grid.dim must be 1 or 2, got {}", self.grid.dim));
        }
        if self.grid.n < 2 {
            bad.push(format!("grid.n must be at least 2, got {}", self.grid.n));
        }
        if !(self.grid.side_length > 0.0 && self.grid.side_length.is_finite()) {
            bad.push(format!("grid.side_length must be positive, got {}", self.grid.side_length));
        }
        if !(self.time.tau > 0.0 && self.time.tau.is_finite()) {
            bad.push(format!("time.tau must be positive, got {}", self.time.tau));
        }
        if self.time.steps == 0 {
            bad.push("time.steps must be at least 1".to_string());
        }
        if let Err(e) = self.solver.optimizer().validate() {
            bad.push(format!("solver: {}", strip(&e)));
        }
        if self.output.label.is_empty() || self.output.label.contains(['/', '\\']) {
            bad.push(format!("output.label must be a plain non-empty name, got {:?}", self.output.label));
        }
        let dim = dim_ok.then_some(self.grid.dim);
        self.model.check_fields(dim, &mut bad);
        if let Ok(grid) = self.grid() {
            if let Err(e) = self.model.build(grid) {
                bad.push(format!("model: {}", strip(&e)));
            }
        }
        let s = self.model.components();
        match &self.initial {
            InitialConfig::PnpPaperExample1 {} => {
                if s != 2 {
                    bad.push(format!("initial: pnp_paper_example1 needs 2 components, model has {s}"));
                }
                if self.grid.dim != 2 {
                    bad.push("initial: pnp_paper_example1 needs grid.dim = 2".to_string());
                }
            }
            InitialConfig::MsThreeSpeciesSmoke {} if s != 3 => {
                bad.push(format!("initial: ms_three_species_smoke needs 3 components, model has {s}"));
            }
            InitialConfig::TwoRegionSaturation { inside, outside, .. } => {
                if s != 2 || !self.model.has_simplex() {
                    bad.push("initial: two_region_saturation needs a two-phase volume-filling model".to_string());
                }
                for (k, v) in [("inside", inside), ("outside", outside)] {
                    if !(*v > 0.0 && *v < 1.0) {
                        bad.push(format!("initial.{k} must lie in (0, 1), got {v}"));
                    }
                }
            }
            InitialConfig::GaussianBump { width, center, .. } => {
                if self.model.has_simplex() {
                    bad.push("initial: gaussian_bump cannot satisfy the volume-filling constraint".to_string());
                }
                if let Some(w) = width {
                    if !(*w > 0.0) {
                        bad.push(format!("initial.width must be positive, got {w}"));
                    }
                }
                if let Some(c) = center {
                    if c.len() != self.grid.dim {
                        bad.push(format!("initial.center needs {} coordinates, got {}", self.grid.dim, c.len()));
                    }
                }
            }
            InitialConfig::Snapshot { path } => {
                if !path.is_file() {
                    bad.push(format!("initial.path {} does not exist", path.display()));
                }
            }
            _ => {}
        }
        bad
    }
}

fn strip(e: &onsager::Error) -> String {
    match e {
        onsager::Error::InvalidInput(msg) => msg.clone(),
        other => other.to_string(),
    }
}

/// Parses a strict JSON run configuration, resolves defaults and validates.
pub fn parse_config(text: &str) -> Result<RunConfig, CliError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let mut config: RunConfig = serde_path_to_error::deserialize(&mut de).map_err(|e| CliError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    de.end().map_err(|e| CliError::Parse {
        path: ".".to_string(),
        message: e.to_string(),
    })?;
    config.resolve();
    let bad = config.problems();
    if bad.is_empty() {
        Ok(config)
    } else {
        Err(CliError::Validation(bad))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "model": {"type": "fokker_planck", "beta": 1},
        "grid": {"dim": 1, "n": 8},
        "time": {"tau": 0.01, "steps": 10},
        "solver": {"method": "newton_kkt"}
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid.side_length, 1.0);
        assert_eq!(c.time.snapshot_every, 0);
        assert_eq!(c.solver.max_iterations, Some(OptimizerConfig::NEWTON_MAX_ITERATIONS));
        assert_eq!(c.solver.kkt_tolerance, 1e-9);
        assert_eq!(c.initial, InitialConfig::Uniform { value: Some(1.0) });
        assert_eq!(c.output.label, "run");
    }

    #[test]
    fn round_trip_through_json() {
        let c = parse_config(MINIMAL).unwrap();
        let text = serde_json::to_string_pretty(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }

    #[test]
    fn negative_tau_names_the_key() {
        let text = MINIMAL.replace("0.01", "-1");
        match parse_config(&text) {
            Err(CliError::Validation(v)) => assert!(v.iter().any(|p| p.starts_with("time.tau"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_key_is_a_parse_error() {
        let text = MINIMAL.replace("\"tau\"", "\"taus\"");
        match parse_config(&text) {
            Err(CliError::Parse { path, message }) => {
                assert_eq!(path, "time.taus");
                assert!(message.contains("taus"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn all_problems_are_listed() {
        let text = MINIMAL.replace("0.01", "-1").replace("\"n\": 8", "\"n\": 1");
        match parse_config(&text) {
            Err(CliError::Validation(v)) => {
                assert!(v.iter().any(|p| p.starts_with("time.tau")));
                assert!(v.iter().any(|p| p.starts_with("grid.n")));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_model_field_is_rejected() {
        let text = MINIMAL.replace("\"beta\": 1", "\"beta\": 1, \"gamma\": 2");
        assert!(matches!(parse_config(&text), Err(CliError::Parse { .. })));
    }
}
