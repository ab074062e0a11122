use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use qnflow_core::fem::{assemble_load_manufactured, assemble_load_pointwise, ExactSolution, LoadFunctional, P1Space};
use qnflow_core::kacanov::{reference_solve_until, run, IterationConfig, IterationRecord};

use crate::config::{ConfigError, ExperimentConfig, SolutionConfig};
use crate::plot::{emit_plot_script, PlotKind, PlotRun};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Numeric { context: String, source: qnflow_core::Error },
    #[error("{context}: {source}")]
    Io { context: String, source: std::io::Error },
}

impl RunError {
    /// Process exit code: 2 for configuration errors, 3 for numerical
    /// failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numeric { source, .. } if source.is_numeric_failure() => 3,
            RunError::Numeric { source, .. } => match source {
                qnflow_core::Error::InvalidParameter(_) | qnflow_core::Error::Domain(_) => 2,
                _ => 1,
            },
            RunError::Io { .. } => 1,
        }
    }
}

fn numeric(context: &str) -> impl FnOnce(qnflow_core::Error) -> RunError + '_ {
    move |source| RunError::Numeric { context: context.to_string(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunMetadata {
    pub name: String,
    pub triangles: usize,
    pub dofs: usize,
    pub config_hash: String,
    pub reference_steps: Option<usize>,
    pub reference_increment: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultTable {
    pub rows: Vec<IterationRecord>,
    pub meta: RunMetadata,
}

pub const CSV_HEADER: &str = "n,energy,energy_error,h1_error,q_E,q_A,q_W,q_H,q_thm";

fn cell(value: Option<f64>) -> String {
    value.map(|v| format!("{v:.16e}")).unwrap_or_default()
}

impl ResultTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(256 * (self.rows.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let cells = [r.energy_error, r.h1_error, r.q_e, r.q_a, r.q_w, r.q_h, r.q_thm].map(cell);
            let _ = writeln!(out, "{},{},{}", r.step, cell(Some(r.energy)), cells.join(","));
        }
        out
    }

    /// Sidecar metadata in TOML.
    pub fn metadata_toml(&self) -> String {
        let m = &self.meta;
        let mut out = String::new();
        let _ = writeln!(out, "name = {:?}", m.name);
        let _ = writeln!(out, "triangles = {}", m.triangles);
        let _ = writeln!(out, "dofs = {}", m.dofs);
        let _ = writeln!(out, "config_hash = {:?}", m.config_hash);
        let _ = writeln!(out, "steps_recorded = {}", self.rows.len());
        if let Some(steps) = m.reference_steps {
            let _ = writeln!(out, "reference_steps = {steps}");
        }
        if let Some(inc) = m.reference_increment {
            let _ = writeln!(out, "reference_final_increment = {inc:e}");
        }
        out
    }
}

/// Builds mesh, space, load and reference, then runs the iteration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ResultTable, RunError> {
    config.validate()?;
    if !config.sweep.is_empty() {
        return Err(
            ConfigError::Invalid { field: "sweep".into(), message: "expand the sweep before running".into() }.into()
        );
    }
    let model = config.model.build()?;
    let mesh = config.mesh.build()?;
    let space = P1Space::new(mesh).map_err(numeric("building the finite element space"))?;
    let order = config.iteration.quad_order;
    let load: LoadFunctional = match config.solution {
        SolutionConfig::Smooth => {
            assemble_load_manufactured(&space, |p| ExactSolution::Smooth.gradient(p), &model, order)
        }
        SolutionConfig::Singular => {
            assemble_load_manufactured(&space, |p| ExactSolution::Singular.gradient(p), &model, order)
        }
        SolutionConfig::Source { f } => assemble_load_pointwise(&space, |p| f.eval(p), order),
    }
    .map_err(numeric("assembling the load"))?;

    let mut iteration = IterationConfig::new(&model, &space, &load);
    iteration.linear_rel_tol = config.iteration.linear_rel_tol;
    let reference = match &config.reference {
        Some(r) => {
            let mut ref_config = iteration.clone();
            ref_config.max_steps = r.steps;
            Some(reference_solve_until(&ref_config, r.tol).map_err(numeric("computing the reference solution"))?)
        }
        None => None,
    };
    iteration.max_steps = config.iteration.max_steps;
    iteration.energy_increment_tol = config.iteration.energy_increment_tol;
    let rows = run(&iteration, reference.as_ref()).map_err(numeric("running the iteration"))?;
    Ok(ResultTable {
        rows,
        meta: RunMetadata {
            name: config.name.clone().unwrap_or_else(|| "run".into()),
            triangles: space.num_triangles(),
            dofs: space.num_dofs(),
            config_hash: config.hash(),
            reference_steps: reference.as_ref().map(|r| r.steps),
            reference_increment: reference.as_ref().map(|r| r.final_increment),
        },
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), RunError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)
            .map_err(|source| RunError::Io { context: format!("creating {}", dir.display()), source })?;
    }
    fs::write(path, contents).map_err(|source| RunError::Io { context: format!("writing {}", path.display()), source })
}

fn with_suffix(prefix: &Path, suffix: &str) -> PathBuf {
    let mut name = prefix.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(suffix);
    prefix.with_file_name(name)
}

/// Writes `<prefix>.csv`, `<prefix>.meta.toml` and one plot script per kind.
/// Returns the written paths.
pub fn write_outputs(table: &ResultTable, prefix: &Path) -> Result<Vec<PathBuf>, RunError> {
    let csv = with_suffix(prefix, ".csv");
    let meta = with_suffix(prefix, ".meta.toml");
    write_file(&csv, &table.to_csv())?;
    write_file(&meta, &table.metadata_toml())?;
    let csv_name = csv.file_name().expect("file name").to_string_lossy().into_owned();
    let mut written = vec![csv, meta];
    written.extend(write_plots(&[PlotRun { label: &table.meta.name, csv: &csv_name, table }], prefix)?);
    Ok(written)
}

/// Writes one plot script per kind for a group of runs whose CSV files lie
/// next to `prefix`.
pub fn write_plots(runs: &[PlotRun<'_>], prefix: &Path) -> Result<Vec<PathBuf>, RunError> {
    let mut written = Vec::new();
    for kind in PlotKind::ALL {
        if !kind.applies(runs) {
            continue;
        }
        let script = emit_plot_script(runs, kind).map_err(|e| RunError::Io {
            context: "generating plot script".into(),
            source: std::io::Error::new(std::io::ErrorKind::InvalidInput, e.to_string()),
        })?;
        let path = with_suffix(prefix, &format!("-{}.py", kind.slug()));
        write_file(&path, &script)?;
        written.push(path);
    }
    Ok(written)
}

/// Runs every configuration, concurrently when `parallel` is set. Results
/// keep the input order.
pub fn run_many(configs: &[ExperimentConfig], parallel: bool) -> Vec<Result<ResultTable, RunError>> {
    if parallel {
        use rayon::prelude::*;
        configs.par_iter().map(run_experiment).collect()
    } else {
        configs.iter().map(run_experiment).collect()
    }
}

/// Writes each table under `dir/<run name>` and one combined set of plot
/// scripts under `dir/<group>`.
pub fn write_group(tables: &[ResultTable], dir: &Path, group: &str) -> Result<Vec<PathBuf>, RunError> {
    let mut written = Vec::new();
    let mut csv_names = Vec::with_capacity(tables.len());
    for t in tables {
        let files = write_outputs(t, &dir.join(&t.meta.name))?;
        csv_names.push(format!("{}.csv", t.meta.name));
        written.extend(files);
    }
    let runs: Vec<PlotRun<'_>> =
        tables.iter().zip(&csv_names).map(|(t, csv)| PlotRun { label: &t.meta.name, csv, table: t }).collect();
    if !runs.is_empty() {
        written.extend(write_plots(&runs, &dir.join(group))?);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;

    const DOC: &str = r#"
name = "tiny"

[model]
kind = "carreau"
mu_inf = 1.0
mu_0 = 100.0
lambda = 2.0
r = 1.5

[mesh]
uniform_levels = 2

[solution]
kind = "smooth"

[iteration]
max_steps = 12

[reference]
steps = 60
"#;

    #[test]
    fn csv_layout() {
        let table = run_experiment(&parse_config(DOC).unwrap()).unwrap();
        let csv = table.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(CSV_HEADER));
        let first: Vec<&str> = lines.next().unwrap().split(',').collect();
        assert_eq!(first.len(), 9);
        assert_eq!(first[0], "0");
        assert_eq!(first[4], "", "q_E undefined at n = 0");
        assert_eq!(first[7], "", "q_H undefined at n = 0");
        let mantissa = first[1].split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.len(), 18, "17 significant digits");
        assert_eq!(csv.lines().count(), table.rows.len() + 1);
        assert_eq!(table.meta.triangles, 96);
    }

    #[test]
    fn csv_is_reproducible() {
        let config = parse_config(DOC).unwrap();
        let a = run_experiment(&config).unwrap();
        let b = run_experiment(&config).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
        assert_eq!(a.metadata_toml(), b.metadata_toml());
    }

    #[test]
    fn run_without_reference_leaves_error_columns_empty() {
        let doc = DOC.replace("[reference]\nsteps = 60\n", "");
        let table = run_experiment(&parse_config(&doc).unwrap()).unwrap();
        assert!(table.rows.iter().all(|r| r.energy_error.is_none() && r.q_e.is_none() && r.q_thm.is_none()));
        assert!(table.rows.iter().all(|r| r.q_a.is_some() && r.q_w.is_some()));
    }

    #[test]
    fn outputs_are_written() {
        let dir = tempfile::tempdir().unwrap();
        let table = run_experiment(&parse_config(DOC).unwrap()).unwrap();
        let written = write_outputs(&table, &dir.path().join("sub/tiny")).unwrap();
        let csv = fs::read_to_string(dir.path().join("sub/tiny.csv")).unwrap();
        assert_eq!(csv, table.to_csv());
        let meta = fs::read_to_string(dir.path().join("sub/tiny.meta.toml")).unwrap();
        assert!(meta.contains(&table.meta.config_hash));
        assert!(written.iter().any(|p| p.to_string_lossy().ends_with("tiny-factors.py")));
    }

    #[test]
    fn exit_codes() {
        let config_err = RunError::Config(ConfigError::Parse { line: 1, message: String::new() });
        assert_eq!(config_err.exit_code(), 2);
        let numeric = RunError::Numeric {
            context: String::new(),
            source: qnflow_core::Error::NonConvergence { iters: 1, residual: 1.0 },
        };
        assert_eq!(numeric.exit_code(), 3);
    }
}
