//! TOML experiment configuration.
//!
//! A document describes one experiment; an optional `[[sweep]]` array lists
//! override tables that are deep-merged into the base document, one run per
//! entry. An override whose `model` table names a `kind` replaces the base
//! model instead of merging into it.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use qnflow_core::mesh::{Mesh, Point};
use qnflow_core::viscosity::ViscosityModel;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid `{field}`: {message}")]
    Invalid { field: String, message: String },
}

fn invalid(field: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid { field: field.to_string(), message: message.into() }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Carreau { mu_inf: f64, mu_0: f64, lambda: f64, r: f64 },
    RelaxedPowerLaw { eps_minus: f64, eps_plus: f64, r: f64 },
    SmoothRelaxedPowerLaw { eps_minus: f64, eps_plus: f64, r: f64, delta: f64 },
    Constant { mu_c: f64 },
}

impl ModelConfig {
    pub fn build(&self) -> Result<ViscosityModel, ConfigError> {
        let model = match *self {
            ModelConfig::Carreau { mu_inf, mu_0, lambda, r } => ViscosityModel::carreau(mu_inf, mu_0, lambda, r),
            ModelConfig::RelaxedPowerLaw { eps_minus, eps_plus, r } => {
                ViscosityModel::relaxed_power_law(eps_minus, eps_plus, r)
            }
            ModelConfig::SmoothRelaxedPowerLaw { eps_minus, eps_plus, r, delta } => {
                ViscosityModel::smooth_relaxed_power_law(eps_minus, eps_plus, r, delta)
            }
            ModelConfig::Constant { mu_c } => ViscosityModel::constant(mu_c),
        };
        model.map_err(|e| invalid("model", strip_prefix(&e.to_string())))
    }
}

fn strip_prefix(message: &str) -> String {
    message.strip_prefix("invalid parameter: ").unwrap_or(message).to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GradedConfig {
    pub passes: usize,
    pub radius_fraction: f64,
    #[serde(default)]
    pub center: [f64; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshConfig {
    /// Uniform refinements of the coarse mesh, applied before any grading.
    #[serde(default)]
    pub uniform_levels: usize,
    pub graded: Option<GradedConfig>,
}

/// Largest accepted number of uniform refinements.
pub const MAX_UNIFORM_LEVELS: usize = 9;

impl MeshConfig {
    pub fn build(&self) -> Result<Mesh, ConfigError> {
        if self.uniform_levels > MAX_UNIFORM_LEVELS {
            return Err(invalid(
                "mesh.uniform_levels",
                format!("at most {MAX_UNIFORM_LEVELS} levels are supported, got {}", self.uniform_levels),
            ));
        }
        let mesh = Mesh::lshape_uniform(self.uniform_levels);
        match &self.graded {
            None => Ok(mesh),
            Some(g) => mesh
                .refine_graded(g.center as Point, g.radius_fraction, g.passes)
                .map_err(|e| invalid("mesh.graded", strip_prefix(&e.to_string()))),
        }
    }
}

/// Pointwise source terms available without a manufactured solution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceTag {
    /// `f = 1`.
    One,
    /// `f = x`.
    X,
}

impl SourceTag {
    pub fn eval(self, p: Point) -> f64 {
        match self {
            SourceTag::One => 1.0,
            SourceTag::X => p[0],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SolutionConfig {
    Smooth,
    Singular,
    Source { f: SourceTag },
}

fn default_max_steps() -> usize {
    100
}

fn default_linear_rel_tol() -> f64 {
    1e-12
}

fn default_quad_order() -> u8 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterationSettings {
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
    /// Relative energy increment below which the run stops.
    #[serde(default)]
    pub energy_increment_tol: f64,
    #[serde(default = "default_linear_rel_tol")]
    pub linear_rel_tol: f64,
    #[serde(default = "default_quad_order")]
    pub quad_order: u8,
}

impl Default for IterationSettings {
    fn default() -> Self {
        IterationSettings {
            max_steps: default_max_steps(),
            energy_increment_tol: 0.0,
            linear_rel_tol: default_linear_rel_tol(),
            quad_order: default_quad_order(),
        }
    }
}

fn default_reference_tol() -> f64 {
    qnflow_core::kacanov::REFERENCE_INCREMENT_TOL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    /// Maximum number of reference steps.
    pub steps: usize,
    /// Relative energy increment at which the reference stops early.
    #[serde(default = "default_reference_tol")]
    pub tol: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: Option<String>,
    /// Output path prefix.
    pub output: Option<String>,
    pub model: ModelConfig,
    pub mesh: MeshConfig,
    pub solution: SolutionConfig,
    #[serde(default)]
    pub iteration: IterationSettings,
    pub reference: Option<ReferenceConfig>,
    /// Raw override tables, expanded by [`ExperimentConfig::expand`].
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweep: Vec<Table>,
}

impl ExperimentConfig {
    /// Checks every numeric field against the model and mesh constraints.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.build()?;
        if let Some(g) = &self.mesh.graded {
            if g.passes == 0 {
                return Err(invalid("mesh.graded.passes", "must be at least 1"));
            }
            if !(g.radius_fraction > 0.0 && g.radius_fraction <= 1.0) {
                return Err(invalid("mesh.graded.radius_fraction", "must lie in (0,1]"));
            }
            if !g.center.iter().all(|c| c.is_finite()) {
                return Err(invalid("mesh.graded.center", "must be finite"));
            }
        }
        if self.mesh.uniform_levels > MAX_UNIFORM_LEVELS {
            return Err(invalid("mesh.uniform_levels", format!("must not exceed {MAX_UNIFORM_LEVELS}")));
        }
        let it = &self.iteration;
        if it.max_steps == 0 {
            return Err(invalid("iteration.max_steps", "must be at least 1"));
        }
        if !(it.energy_increment_tol.is_finite() && it.energy_increment_tol >= 0.0) {
            return Err(invalid("iteration.energy_increment_tol", "must be finite and nonnegative"));
        }
        if !(it.linear_rel_tol > 0.0 && it.linear_rel_tol < 1.0) {
            return Err(invalid("iteration.linear_rel_tol", "must lie in (0,1)"));
        }
        if !(1..=3).contains(&it.quad_order) {
            return Err(invalid("iteration.quad_order", "must be 1, 2 or 3"));
        }
        if let Some(r) = &self.reference {
            if r.steps == 0 {
                return Err(invalid("reference.steps", "must be at least 1"));
            }
            if !(r.tol.is_finite() && r.tol >= 0.0) {
                return Err(invalid("reference.tol", "must be finite and nonnegative"));
            }
        }
        if let Some(name) = &self.name {
            if name.is_empty() || name.contains(['/', '\\']) {
                return Err(invalid("name", "must be nonempty and free of path separators"));
            }
        }
        Ok(())
    }

    /// Canonical TOML of the effective configuration (sweep block excluded).
    pub fn canonical_toml(&self) -> String {
        let mut plain = self.clone();
        plain.sweep.clear();
        toml::to_string(&plain).expect("configuration serializes")
    }

    /// Hex SHA-256 of [`ExperimentConfig::canonical_toml`].
    pub fn hash(&self) -> String {
        Sha256::digest(self.canonical_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Concrete runs described by this document: the base alone, or one run
    /// per sweep entry.
    pub fn expand(&self) -> Result<Vec<ExperimentConfig>, ConfigError> {
        if self.sweep.is_empty() {
            return Ok(vec![self.clone()]);
        }
        let mut base = Value::try_from(self).map_err(|e| invalid("sweep", e.to_string()))?;
        if let Value::Table(t) = &mut base {
            t.remove("sweep");
        }
        let mut names = std::collections::BTreeSet::new();
        self.sweep
            .iter()
            .enumerate()
            .map(|(k, entry)| {
                let mut merged = base.clone();
                merge_override(&mut merged, entry);
                let mut run: ExperimentConfig = merged
                    .try_into()
                    .map_err(|e: toml::de::Error| invalid(&format!("sweep[{k}]"), e.message().to_string()))?;
                if !entry.contains_key("name") {
                    let base_name = self.name.as_deref().unwrap_or("run");
                    run.name = Some(format!("{base_name}-{k}"));
                }
                run.validate().map_err(|e| match e {
                    ConfigError::Invalid { field, message } => invalid(&format!("sweep[{k}].{field}"), message),
                    other => other,
                })?;
                if !names.insert(run.name.clone()) {
                    return Err(invalid(&format!("sweep[{k}].name"), "duplicate run name"));
                }
                Ok(run)
            })
            .collect()
    }
}

fn merge_override(base: &mut Value, entry: &Table) {
    let Value::Table(base) = base else { return };
    for (key, value) in entry {
        match (base.get_mut(key), value) {
            (Some(Value::Table(_)), Value::Table(t)) if key == "model" && t.contains_key("kind") => {
                base.insert(key.clone(), value.clone());
            }
            (Some(target @ Value::Table(_)), Value::Table(t)) => merge_override(target, t),
            _ => {
                base.insert(key.clone(), value.clone());
            }
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Parses and validates a configuration document, including all sweep entries.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let config: ExperimentConfig = toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map_or(1, |s| line_of(text, s.start)),
        message: e.message().to_string(),
    })?;
    config.validate()?;
    config.expand()?;
    Ok(config)
}
