use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qnflow::config::{parse_config, ConfigError, ExperimentConfig, GradedConfig, MeshConfig};
use qnflow::experiment::{run_many, write_group, write_outputs, ResultTable, RunError};
use qnflow::presets::{self, PRESETS};

#[derive(Parser)]
#[command(name = "qnflow", version, about = "Kacanov iteration experiments for shear-thinning flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a TOML document.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output prefix; defaults to the document's `output`, then its name.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run every entry of a document's sweep concurrently into one directory.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; defaults to the document's `output`, then its name.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a named preset.
    Preset {
        name: String,
        /// Output directory; defaults to the preset name.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Finest uniform level in place of the desk-scale default.
        #[arg(long)]
        level: Option<usize>,
    },
    /// List the available presets.
    Presets,
    /// Write a refined L-shape mesh in qnmesh format.
    Mesh {
        #[arg(long)]
        levels: usize,
        /// Graded refinement toward a point, e.g. `center=0,0 rf=0.5 passes=3`.
        #[arg(long, num_args = 1..)]
        graded: Option<Vec<String>>,
        #[arg(long)]
        out: PathBuf,
    },
}

fn read_config(path: &Path) -> Result<ExperimentConfig, RunError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        RunError::Config(ConfigError::Invalid { field: "config".into(), message: format!("{}: {e}", path.display()) })
    })?;
    Ok(parse_config(&text)?)
}

fn default_prefix(config: &ExperimentConfig) -> PathBuf {
    PathBuf::from(config.output.clone().or_else(|| config.name.clone()).unwrap_or_else(|| "run".into()))
}

fn report(table: &ResultTable) {
    let last = table.rows.last();
    let err = last.and_then(|r| r.energy_error).map(|e| format!(", energy error {e:.3e}")).unwrap_or_default();
    eprintln!(
        "{}: {} triangles, {} dofs, {} steps{err}",
        table.meta.name,
        table.meta.triangles,
        table.meta.dofs,
        table.rows.len().saturating_sub(1)
    );
}

fn run_group(configs: &[ExperimentConfig], dir: &Path, group: &str) -> Result<(), RunError> {
    let mut tables = Vec::with_capacity(configs.len());
    for result in run_many(configs, true) {
        let table = result?;
        report(&table);
        tables.push(table);
    }
    write_group(&tables, dir, group)?;
    eprintln!("wrote {}", dir.display());
    Ok(())
}

fn parse_graded(tokens: &[String]) -> Result<GradedConfig, ConfigError> {
    let bad = |message: String| ConfigError::Invalid { field: "--graded".into(), message };
    let mut graded = GradedConfig { passes: 1, radius_fraction: 0.5, center: [0.0, 0.0] };
    for token in tokens {
        let (key, value) = token.split_once('=').ok_or_else(|| bad(format!("expected key=value, got `{token}`")))?;
        match key {
            "center" => {
                let parts: Vec<f64> = value
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|e| bad(format!("center: {e}")))?;
                let [x, y] = parts[..] else {
                    return Err(bad("center needs two coordinates".into()));
                };
                graded.center = [x, y];
            }
            "rf" => graded.radius_fraction = value.parse().map_err(|e| bad(format!("rf: {e}")))?,
            "passes" => graded.passes = value.parse().map_err(|e| bad(format!("passes: {e}")))?,
            _ => return Err(bad(format!("unknown key `{key}`"))),
        }
    }
    if !(graded.radius_fraction > 0.0 && graded.radius_fraction <= 1.0) {
        return Err(bad("rf must lie in (0,1]".into()));
    }
    Ok(graded)
}

fn execute(cli: Cli) -> Result<(), RunError> {
    match cli.command {
        Command::Run { config, out } => {
            let config = read_config(&config)?;
            let prefix = out.unwrap_or_else(|| default_prefix(&config));
            let runs = config.expand()?;
            if runs.len() == 1 {
                let table = qnflow::experiment::run_experiment(&runs[0])?;
                report(&table);
                for path in write_outputs(&table, &prefix)? {
                    eprintln!("wrote {}", path.display());
                }
                Ok(())
            } else {
                let group = config.name.clone().unwrap_or_else(|| "sweep".into());
                run_group(&runs, &prefix, &group)
            }
        }
        Command::Sweep { config, out } => {
            let config = read_config(&config)?;
            let dir = out.unwrap_or_else(|| default_prefix(&config));
            let group = config.name.clone().unwrap_or_else(|| "sweep".into());
            run_group(&config.expand()?, &dir, &group)
        }
        Command::Preset { name, out, level } => {
            let preset = presets::find(&name).ok_or_else(|| ConfigError::Invalid {
                field: "preset".into(),
                message: format!("unknown preset `{name}`; run `qnflow presets` for the list"),
            })?;
            let configs = match level {
                Some(l) => preset.configs_at(l),
                None => preset.configs(),
            };
            for c in &configs {
                c.validate()?;
            }
            let dir = out.unwrap_or_else(|| PathBuf::from(preset.name));
            run_group(&configs, &dir, preset.name)
        }
        Command::Presets => {
            for p in PRESETS {
                println!("{:<34} {}", p.name, p.summary);
            }
            Ok(())
        }
        Command::Mesh { levels, graded, out } => {
            let mesh = MeshConfig { uniform_levels: levels, graded: graded.as_deref().map(parse_graded).transpose()? }
                .build()?;
            std::fs::write(&out, mesh.to_qnmesh())
                .map_err(|source| RunError::Io { context: format!("writing {}", out.display()), source })?;
            eprintln!("wrote {} ({} triangles)", out.display(), mesh.num_triangles());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
