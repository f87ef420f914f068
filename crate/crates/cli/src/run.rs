//! The batch driver.

use std::path::PathBuf;

use onsager::diagnostics::{DiagnosticsRow, Tolerances};
use onsager::step::{advance, build_step};

use crate::config::RunConfig;
use crate::initial::initial_state;
use crate::output::{write_snapshot, FailureRecord, Manifest, OutputBundle, RunStatus, SeriesWriter};
use crate::CliError;

/// Command-line overrides of the output block.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub output: Option<PathBuf>,
    pub label: Option<String>,
}

fn error_kind(e: &onsager::Error) -> &'static str {
    match e {
        onsager::Error::NonNeutralSource { .. } => "NonNeutralSource",
        onsager::Error::DomainViolation(_) => "DomainViolation",
        onsager::Error::NoConvergence { .. } => "NoConvergence",
        onsager::Error::ShiftViolation(_) => "ShiftViolation",
        onsager::Error::SingularSystem(_) => "SingularSystem",
        onsager::Error::InvalidInput(_) => "InvalidInput",
    }
}

/// Runs `config.time.steps` steps, writing the series, snapshots and
/// manifest into the output directory.
///
/// The manifest is written with status `running` before the first step and
/// rewritten at the end; a solver failure leaves the rows computed so far
/// and a manifest with a failure record.
pub fn run_simulation(config: &RunConfig, options: &RunOptions) -> Result<OutputBundle, CliError> {
    let mut config = config.clone();
    if let Some(dir) = &options.output {
        config.output.directory = dir.clone();
    }
    if let Some(label) = &options.label {
        config.output.label = label.clone();
    }
    let bad = config.problems();
    if !bad.is_empty() {
        return Err(CliError::Validation(bad));
    }

    let grid = config.grid().map_err(CliError::Setup)?;
    let model = config.model.build(grid).map_err(CliError::Setup)?;
    let mut state = initial_state(&config.initial, &model, grid)?;
    let solver = config.solver.optimizer();

    let dir = config.output.directory.clone();
    std::fs::create_dir_all(&dir).map_err(|source| CliError::Io {
        path: dir.clone(),
        source,
    })?;
    let label = config.output.label.clone();
    let series = dir.join(format!("{label}_series.csv"));
    let manifest_path = dir.join(format!("{label}_manifest.json"));
    let snapshot_path = |k: usize| dir.join(format!("{label}_step{k:06}.csv"));

    let mut manifest = Manifest {
        code_version: format!("onsager-cli {}", env!("CARGO_PKG_VERSION")),
        label: label.clone(),
        status: RunStatus::Running,
        steps_completed: 0,
        config: config.clone(),
        tolerances: Tolerances::DEFAULT,
        series: series.clone(),
        snapshots: Vec::new(),
        failure: None,
    };
    manifest.write(&manifest_path)?;

    let mut writer = SeriesWriter::create(&series, model.components())?;
    writer.push(&DiagnosticsRow::initial(&model, &state, 0.0).map_err(CliError::Setup)?)?;

    let tau = config.time.tau;
    let steps = config.time.steps;
    let every = config.time.snapshot_every;
    for k in 1..=steps {
        let outcome = build_step(&model, &state, tau, &grid).and_then(|p| advance(&p, &solver).map(|r| (p, r)));
        let (problem, result) = match outcome {
            Ok(x) => x,
            Err(source) => {
                let (iterations, residual) = match &source {
                    onsager::Error::NoConvergence {
                        iterations, residual, ..
                    } => (Some(*iterations), Some(*residual)),
                    _ => (None, None),
                };
                manifest.status = RunStatus::Failed;
                manifest.failure = Some(FailureRecord {
                    step: k,
                    kind: error_kind(&source).to_string(),
                    message: source.to_string(),
                    iterations,
                    residual,
                });
                manifest.write(&manifest_path)?;
                return Err(CliError::Solver { step: k, source });
            }
        };
        writer.push(&DiagnosticsRow::from_step(&problem, &result, k, k as f64 * tau))?;
        state = result.state;
        manifest.steps_completed = k;
        if (every > 0 && k % every == 0) || k == steps {
            let p = snapshot_path(k);
            write_snapshot(&state, &p)?;
            manifest.snapshots.push(p);
        }
    }
    manifest.status = RunStatus::Completed;
    manifest.write(&manifest_path)?;
    Ok(OutputBundle {
        series,
        snapshots: manifest.snapshots,
        manifest: manifest_path,
    })
}
