use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use onsager_cli::{parse_config, run_simulation, CliError, RunConfig, RunOptions};

#[derive(Parser)]
#[command(name = "onsager", version, about = "Energy-stable gradient-flow simulations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation.
    Run {
        config: PathBuf,
        /// Output directory, overriding `output.directory`.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Run label, overriding `output.label`.
        #[arg(long = "seed-label")]
        seed_label: Option<String>,
    },
    /// Validate a configuration without running it.
    Check { config: PathBuf },
    /// Print the model blocks accepted in configurations.
    DescribeModels,
}

fn load(path: &Path) -> Result<RunConfig, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text)
}

fn describe() -> serde_json::Value {
    serde_json::json!({
        "allen_cahn": {"alpha": "required", "xi0": 1.0, "well_scale": 1.0, "harmonic": 0.0},
        "cahn_hilliard": {"alpha": "required", "mobility": 1.0, "well_scale": 1.0, "harmonic": 0.0},
        "fokker_planck": {"beta": 1.0, "potential": {"kind": "uniform", "value": 0.0}, "mode": "frozen | joint"},
        "pnp": {"charges": [1.0, -1.0], "diffusivities": [1.0, 1.0], "permittivity": 1.0,
                "fixed_charge": {"kind": "uniform", "value": 0.0}},
        "maxwell_stefan": {"friction": "required, symmetric s x s matrix"},
        "porous_media": {"porosity": "required field", "permeability": "required field", "sigma": "required",
                         "quad": "required, symmetric s x s matrix", "lin": "required",
                         "viscosities": "required", "rel_perm_exponent": 3},
        "fields": ["{\"kind\": \"uniform\", \"value\"}",
                   "{\"kind\": \"cosine\", \"mean\", \"amplitude\", \"wavenumber\", \"axis\"}",
                   "{\"kind\": \"two_region\", \"inside\", \"outside\", \"lower\", \"upper\"}"],
        "initial_profiles": onsager_cli::initial::PROFILES.iter().chain(["snapshot"].iter()).collect::<Vec<_>>(),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            config,
            output,
            seed_label,
        } => load(&config).and_then(|c| {
            let bundle = run_simulation(&c, &RunOptions { output, label: seed_label })?;
            println!("series   {}", bundle.series.display());
            println!("manifest {}", bundle.manifest.display());
            Ok(())
        }),
        Command::Check { config } => load(&config).map(|c| {
            println!("{}", serde_json::to_string_pretty(&c).expect("config serialises"));
        }),
        Command::DescribeModels => {
            println!("{}", serde_json::to_string_pretty(&describe()).expect("json"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
