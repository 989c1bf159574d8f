//! `catsim`: runs scenario files and writes CSV/JSON outputs.

mod error;
mod run;
mod scenario;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use error::CliError;
use scenario::{Loaded, BUNDLED, SCHEMA};

#[derive(Parser)]
#[command(name = "catsim", version, about = "Scenario runner for the two-photon dissipation simulator")]
struct Cli {
    /// Directory for outputs.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Cap on worker threads for grid cells and sweep points.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Override the scenario truncations, `memory,buffer`.
    #[arg(long, global = true, value_parser = parse_dims)]
    dims: Option<[usize; 2]>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file (or a bundled scenario by name).
    Run { scenario: String },
    /// Schema and truncation checks without running.
    Validate { scenario: String },
    /// List bundled scenarios.
    List,
    /// Print the scenario JSON schema.
    Schema,
}

fn parse_dims(s: &str) -> Result<[usize; 2], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 2 {
        return Err(format!("expected `m,b`, got `{s}`"));
    }
    let m = parts[0].trim().parse().map_err(|e| format!("memory dim: {e}"))?;
    let b = parts[1].trim().parse().map_err(|e| format!("buffer dim: {e}"))?;
    Ok([m, b])
}

fn load(spec: &str, dims: Option<[usize; 2]>) -> Result<Loaded, CliError> {
    let loaded = scenario::load(spec)?;
    Ok(match dims {
        Some(d) => loaded.with_dims(d),
        None => loaded,
    })
}

fn write_outputs(dir: &Path, outputs: &[run::Output]) -> Result<Vec<String>, CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io {
        path: dir.display().to_string(),
        source: e,
    })?;
    let mut written = Vec::new();
    for o in outputs {
        let path = dir.join(&o.file_name);
        std::fs::write(&path, &o.contents).map_err(|e| CliError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        written.push(path.display().to_string());
    }
    Ok(written)
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::schema("--threads", e.to_string()))?;
    }
    match &cli.command {
        Command::Run { scenario } => {
            let loaded = load(scenario, cli.dims)?;
            let outputs = run::run(&loaded)?;
            let written = write_outputs(&cli.out_dir, &outputs)?;
            println!(
                "{}",
                json!({ "scenario": loaded.scenario.name, "sha256": loaded.hash(), "outputs": written })
            );
        }
        Command::Validate { scenario } => {
            let loaded = load(scenario, cli.dims)?;
            loaded.validate()?;
            println!(
                "{}",
                json!({ "scenario": loaded.scenario.name, "kind": loaded.scenario.kind, "valid": true })
            );
        }
        Command::List => {
            for (name, src) in BUNDLED {
                let l = scenario::parse(src)?;
                println!("{name}\t{}\t{}", serde_json::to_value(l.scenario.kind).unwrap().as_str().unwrap(), l.scenario.description);
            }
        }
        Command::Schema => print!("{SCHEMA}"),
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.report());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
