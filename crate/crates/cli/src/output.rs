//! CSV series and snapshots, JSON manifest.
//!
//! Reals are written as `{:.16e}`, i.e. 17 significant digits, which
//! round-trips every `f64` exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use onsager::diagnostics::{DiagnosticsRow, Tolerances};
use onsager::grid::{CellField, PeriodicGrid};
use onsager::models::SystemState;
use serde::Serialize;

use crate::config::RunConfig;
use crate::CliError;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn real(x: f64) -> String {
    format!("{x:.16e}")
}

fn tolerance_line() -> String {
    let t = Tolerances::DEFAULT;
    format!(
        "# tolerances energy_inequality={:e} mass_relative={:e} simplex={:e} neutrality={:e} kkt={:e} linear={:e}",
        t.energy_inequality, t.mass_relative, t.simplex, t.neutrality, t.kkt, t.linear
    )
}

/// Column names of the series CSV for `components` components.
pub fn series_header(components: usize) -> String {
    let mut cols: Vec<String> = [
        "step",
        "time",
        "energy",
        "dissipation_over_tau",
        "kkt_residual",
        "constraint_residual",
        "inner_iterations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    for prefix in ["mass", "min", "max"] {
        cols.extend((1..=components).map(|i| format!("{prefix}_{i}")));
    }
    cols.join(",")
}

/// Appends rows to a series file, flushing after each one so partial runs
/// leave a readable record.
pub struct SeriesWriter {
    out: BufWriter<File>,
    path: PathBuf,
}

impl SeriesWriter {
    pub fn create(path: &Path, components: usize) -> Result<Self, CliError> {
        let file = File::create(path).map_err(io_err(path))?;
        let mut w = Self {
            out: BufWriter::new(file),
            path: path.to_path_buf(),
        };
        let head = format!("{}\n{}\n", tolerance_line(), series_header(components));
        w.write(&head)?;
        Ok(w)
    }

    fn write(&mut self, text: &str) -> Result<(), CliError> {
        let path = self.path.clone();
        self.out.write_all(text.as_bytes()).map_err(io_err(&path))?;
        self.out.flush().map_err(io_err(&path))
    }

    pub fn push(&mut self, row: &DiagnosticsRow) -> Result<(), CliError> {
        let mut cols = vec![
            row.step.to_string(),
            real(row.time),
            real(row.energy),
            real(row.dissipation_over_tau),
            real(row.kkt_residual),
            real(row.constraint_residual),
            row.inner_iterations.to_string(),
        ];
        for v in [&row.mass, &row.min_value, &row.max_value] {
            cols.extend(v.iter().map(|x| real(*x)));
        }
        let line = cols.join(",") + "\n";
        self.write(&line)
    }
}

/// Writes a complete series file.
pub fn write_series(rows: &[DiagnosticsRow], components: usize, path: &Path) -> Result<(), CliError> {
    let mut w = SeriesWriter::create(path, components)?;
    rows.iter().try_for_each(|r| w.push(r))
}

/// Writes a state as `# dim`, `# n_per_axis`, `# h`, `# components` header
/// lines followed by one row per cell: axis indices, then component values.
pub fn write_snapshot(state: &SystemState, path: &Path) -> Result<(), CliError> {
    let g = state.grid();
    let mut text = format!(
        "# dim {}\n# n_per_axis {}\n# h {}\n# components {}\n{}\n",
        g.dim(),
        g.cells_per_axis(),
        real(g.spacing()),
        state.components.len(),
        tolerance_line()
    );
    for cell in 0..g.cell_count() {
        let idx = g.axis_indices(cell);
        let mut cols: Vec<String> = idx[..g.dim()].iter().map(|i| i.to_string()).collect();
        cols.extend(state.components.iter().map(|c| real(c.values()[cell])));
        text.push_str(&cols.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(io_err(path))
}

/// Reads a snapshot written by [`write_snapshot`] onto `grid`.
pub fn read_snapshot(path: &Path, grid: PeriodicGrid) -> Result<SystemState, CliError> {
    let bad = |msg: String| CliError::Validation(vec![format!("snapshot {}: {msg}", path.display())]);
    let file = File::open(path).map_err(io_err(path))?;
    let mut header = std::collections::HashMap::new();
    let mut rows = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('#') {
            let mut parts = rest.split_whitespace();
            if let (Some(k), Some(v)) = (parts.next(), parts.next()) {
                header.insert(k.to_string(), v.to_string());
            }
            continue;
        }
        rows.push(line.to_string());
    }
    let get = |k: &str| -> Result<String, CliError> {
        header.get(k).cloned().ok_or_else(|| bad(format!("missing `# {k}` header")))
    };
    let dim: usize = get("dim")?.parse().map_err(|_| bad("bad dim".into()))?;
    let n: usize = get("n_per_axis")?.parse().map_err(|_| bad("bad n_per_axis".into()))?;
    let h: f64 = get("h")?.parse().map_err(|_| bad("bad h".into()))?;
    let s: usize = get("components")?.parse().map_err(|_| bad("bad components".into()))?;
    if dim != grid.dim() || n != grid.cells_per_axis() || (h - grid.spacing()).abs() > 1e-12 * grid.spacing() {
        return Err(bad(format!(
            "grid mismatch: file has dim {dim}, n {n}, h {h}; run uses dim {}, n {}, h {}",
            grid.dim(),
            grid.cells_per_axis(),
            grid.spacing()
        )));
    }
    if rows.len() != grid.cell_count() || s == 0 {
        return Err(bad(format!("expected {} cell rows, found {}", grid.cell_count(), rows.len())));
    }
    let mut values = vec![vec![0.0; grid.cell_count()]; s];
    for (k, row) in rows.iter().enumerate() {
        let cols: Vec<&str> = row.split(',').collect();
        if cols.len() != dim + s {
            return Err(bad(format!("row {k} has {} columns, expected {}", cols.len(), dim + s)));
        }
        let idx: Vec<usize> = cols[..dim]
            .iter()
            .map(|c| c.trim().parse())
            .collect::<Result<_, _>>()
            .map_err(|_| bad(format!("row {k} has a bad index")))?;
        if idx.iter().any(|i| *i >= n) {
            return Err(bad(format!("row {k} index out of range")));
        }
        let cell = grid.cell_index(idx[0], idx.get(1).copied().unwrap_or(0));
        for i in 0..s {
            values[i][cell] = cols[dim + i]
                .trim()
                .parse()
                .map_err(|_| bad(format!("row {k} has a bad value")))?;
        }
    }
    let fields = values
        .into_iter()
        .map(|v| CellField::new(grid, v))
        .collect::<onsager::Result<Vec<_>>>()
        .map_err(CliError::Setup)?;
    SystemState::new(fields).map_err(CliError::Setup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureRecord {
    pub step: usize,
    pub kind: String,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
}

/// JSON record of a run: resolved config, tolerances, outputs and outcome.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub code_version: String,
    pub label: String,
    pub status: RunStatus,
    pub steps_completed: usize,
    pub config: RunConfig,
    pub tolerances: Tolerances,
    pub series: PathBuf,
    pub snapshots: Vec<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub failure: Option<FailureRecord>,
}

impl Manifest {
    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serialises") + "\n";
        std::fs::write(path, text).map_err(io_err(path))
    }
}

/// Paths produced by a run.
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBundle {
    pub series: PathBuf,
    pub snapshots: Vec<PathBuf>,
    pub manifest: PathBuf,
}
