//! Named experiment groups.
//!
//! Each preset expands to a list of runs that share a plot group. The desk
//! scale uses six uniform refinements of the L-shape; `configs_at` rebuilds a
//! preset on a different finest level.

use crate::config::{
    ExperimentConfig, GradedConfig, IterationSettings, MeshConfig, ModelConfig, ReferenceConfig, SolutionConfig,
};

/// Finest uniform level used by the presets.
pub const DESK_LEVEL: usize = 6;

#[derive(Debug, Clone, Copy)]
pub struct Preset {
    pub name: &'static str,
    pub summary: &'static str,
    build: fn(usize) -> Vec<ExperimentConfig>,
}

impl Preset {
    pub fn configs(&self) -> Vec<ExperimentConfig> {
        (self.build)(DESK_LEVEL)
    }

    /// Runs with `level` in place of [`DESK_LEVEL`]. Relative level offsets
    /// inside a preset are kept.
    pub fn configs_at(&self, level: usize) -> Vec<ExperimentConfig> {
        (self.build)(level)
    }
}

pub const PRESETS: &[Preset] = &[
    Preset {
        name: "fig-carreau-error-smooth",
        summary: "Carreau {1,100,2,r}, smooth solution, r = 1.2..1.8",
        build: |l| error_sweep(l, Family::Carreau, SolutionConfig::Smooth),
    },
    Preset {
        name: "fig-carreau-error-singular",
        summary: "Carreau {1,100,2,r}, singular solution on a graded mesh, r = 1.2..1.8",
        build: |l| error_sweep(l, Family::Carreau, SolutionConfig::Singular),
    },
    Preset {
        name: "fig-powerlaw-error-smooth",
        summary: "relaxed power law, eps = (1e-6, 1e6), smooth solution, r = 1.2..1.8",
        build: |l| error_sweep(l, Family::PowerLaw, SolutionConfig::Smooth),
    },
    Preset {
        name: "fig-powerlaw-error-singular",
        summary: "relaxed power law, eps = (1e-6, 1e6), singular solution on a graded mesh, r = 1.2..1.8",
        build: |l| error_sweep(l, Family::PowerLaw, SolutionConfig::Singular),
    },
    Preset {
        name: "fig-near-constant",
        summary: "Carreau {1,2,2,r} and relaxed power law eps = (1, 2), smooth solution, r close to 1",
        build: near_constant,
    },
    Preset {
        name: "fig-shear-sweep",
        summary: "relaxed power law, r = 1.5, eps = (10^-a, 10^a), a = 1..5",
        build: |l| shear_sweep(l, Family::PowerLaw),
    },
    Preset {
        name: "fig-carreau-shear-sweep",
        summary: "Carreau, lambda = 2, r = 1.5, mu_0 = 10^a, mu_inf = 10^-a, a = 1..5",
        build: |l| shear_sweep(l, Family::Carreau),
    },
    Preset {
        name: "fig-carreau-contraction",
        summary: "Carreau {1,100,2,r}, r = 1.3 and 1.1, contraction factors against a 70-step reference",
        build: |l| contraction(l, Family::Carreau),
    },
    Preset {
        name: "fig-powerlaw-contraction",
        summary: "relaxed power law, r = 1.3 and 1.1, contraction factors against 50- and 100-step references",
        build: |l| contraction(l, Family::PowerLaw),
    },
    Preset {
        name: "fig-powerlaw-contraction-coarse",
        summary: "fig-powerlaw-contraction one level coarser",
        build: |l| contraction(l.saturating_sub(1), Family::PowerLaw),
    },
    Preset {
        name: "fig-mesh-compare",
        summary: "Carreau {1,100,2,1.3} and relaxed power law r = 1.3 on three uniform levels",
        build: mesh_compare,
    },
];

pub fn find(name: &str) -> Option<&'static Preset> {
    PRESETS.iter().find(|p| p.name == name)
}

/// Exponents of the error-decay sweeps.
pub const ERROR_SWEEP_R: [f64; 4] = [1.2, 1.4, 1.6, 1.8];
/// Exponents of the near-constant sweep.
pub const NEAR_CONSTANT_R: [f64; 4] = [1.05, 1.1, 1.2, 1.5];
/// Exponents `a` of the shear sweeps.
pub const SHEAR_SWEEP_A: [i32; 5] = [1, 2, 3, 4, 5];

/// Graded passes toward the reentrant corner for the singular runs.
const GRADED_PASSES: usize = 4;
const GRADED_RADIUS_FRACTION: f64 = 0.5;
/// Relative energy decrease at which the runs stop.
const RUN_INCREMENT_TOL: f64 = 1e-15;
/// Relative energy decrease at which converged references stop; in practice
/// the iteration reaches a floating-point fixed point first.
const REFERENCE_INCREMENT_TOL: f64 = 1e-24;
const MAX_STEPS: usize = 400;

#[derive(Clone, Copy)]
enum Family {
    Carreau,
    PowerLaw,
}

impl Family {
    fn model(self, r: f64) -> ModelConfig {
        match self {
            Family::Carreau => ModelConfig::Carreau { mu_inf: 1.0, mu_0: 100.0, lambda: 2.0, r },
            Family::PowerLaw => ModelConfig::RelaxedPowerLaw { eps_minus: 1e-6, eps_plus: 1e6, r },
        }
    }

    fn slug(self) -> &'static str {
        match self {
            Family::Carreau => "carreau",
            Family::PowerLaw => "powerlaw",
        }
    }
}

fn uniform(levels: usize) -> MeshConfig {
    MeshConfig { uniform_levels: levels, graded: None }
}

fn mesh_for(level: usize, solution: &SolutionConfig) -> MeshConfig {
    match solution {
        SolutionConfig::Singular => MeshConfig {
            uniform_levels: level.saturating_sub(1),
            graded: Some(GradedConfig {
                passes: GRADED_PASSES,
                radius_fraction: GRADED_RADIUS_FRACTION,
                center: [0.0, 0.0],
            }),
        },
        _ => uniform(level),
    }
}

fn config(
    name: String,
    model: ModelConfig,
    mesh: MeshConfig,
    solution: SolutionConfig,
    tol: f64,
    reference: ReferenceConfig,
) -> ExperimentConfig {
    ExperimentConfig {
        name: Some(name),
        output: None,
        model,
        mesh,
        solution,
        iteration: IterationSettings {
            max_steps: MAX_STEPS,
            energy_increment_tol: tol,
            ..IterationSettings::default()
        },
        reference: Some(reference),
        sweep: Vec::new(),
    }
}

fn converged_reference() -> ReferenceConfig {
    ReferenceConfig { steps: 2 * MAX_STEPS, tol: REFERENCE_INCREMENT_TOL }
}

fn fixed_reference(steps: usize) -> ReferenceConfig {
    ReferenceConfig { steps, tol: 0.0 }
}

fn r_tag(r: f64) -> String {
    format!("r{r}")
}

fn error_sweep(level: usize, family: Family, solution: SolutionConfig) -> Vec<ExperimentConfig> {
    let kind = match solution {
        SolutionConfig::Singular => "singular",
        _ => "smooth",
    };
    ERROR_SWEEP_R
        .iter()
        .map(|&r| {
            config(
                format!("{}-{kind}-{}", family.slug(), r_tag(r)),
                family.model(r),
                mesh_for(level, &solution),
                solution.clone(),
                RUN_INCREMENT_TOL,
                converged_reference(),
            )
        })
        .collect()
}

fn near_constant(level: usize) -> Vec<ExperimentConfig> {
    let mut runs = Vec::new();
    for &r in &NEAR_CONSTANT_R {
        runs.push(config(
            format!("near-constant-carreau-{}", r_tag(r)),
            ModelConfig::Carreau { mu_inf: 1.0, mu_0: 2.0, lambda: 2.0, r },
            uniform(level),
            SolutionConfig::Smooth,
            RUN_INCREMENT_TOL,
            converged_reference(),
        ));
    }
    for &r in &NEAR_CONSTANT_R {
        runs.push(config(
            format!("near-constant-powerlaw-{}", r_tag(r)),
            ModelConfig::RelaxedPowerLaw { eps_minus: 1.0, eps_plus: 2.0, r },
            uniform(level),
            SolutionConfig::Smooth,
            RUN_INCREMENT_TOL,
            converged_reference(),
        ));
    }
    runs
}

fn shear_sweep(level: usize, family: Family) -> Vec<ExperimentConfig> {
    SHEAR_SWEEP_A
        .iter()
        .map(|&a| {
            let model = match family {
                Family::Carreau => {
                    ModelConfig::Carreau { mu_inf: 10f64.powi(-a), mu_0: 10f64.powi(a), lambda: 2.0, r: 1.5 }
                }
                Family::PowerLaw => {
                    ModelConfig::RelaxedPowerLaw { eps_minus: 10f64.powi(-a), eps_plus: 10f64.powi(a), r: 1.5 }
                }
            };
            config(
                format!("shear-{}-a{a}", family.slug()),
                model,
                uniform(level),
                SolutionConfig::Smooth,
                RUN_INCREMENT_TOL,
                converged_reference(),
            )
        })
        .collect()
}

fn contraction(level: usize, family: Family) -> Vec<ExperimentConfig> {
    let steps: [(f64, usize); 2] = match family {
        Family::Carreau => [(1.3, 70), (1.1, 70)],
        Family::PowerLaw => [(1.3, 50), (1.1, 100)],
    };
    steps
        .iter()
        .map(|&(r, ref_steps)| {
            let mut c = config(
                format!("contraction-{}-{}-level{level}", family.slug(), r_tag(r)),
                family.model(r),
                uniform(level),
                SolutionConfig::Smooth,
                0.0,
                fixed_reference(ref_steps),
            );
            // factors are only meaningful while the energy error is resolved
            c.iteration.max_steps = ref_steps * 3 / 5;
            c
        })
        .collect()
}

fn mesh_compare(level: usize) -> Vec<ExperimentConfig> {
    let mut runs = Vec::new();
    for family in [Family::Carreau, Family::PowerLaw] {
        for l in level.saturating_sub(2)..=level {
            runs.push(config(
                format!("mesh-{}-level{l}", family.slug()),
                family.model(1.3),
                uniform(l),
                SolutionConfig::Smooth,
                RUN_INCREMENT_TOL,
                converged_reference(),
            ));
        }
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_are_unique_and_resolvable() {
        let mut names: Vec<_> = PRESETS.iter().map(|p| p.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), PRESETS.len());
        assert!(find("fig-mesh-compare").is_some());
        assert!(find("fig-unknown").is_none());
    }

    #[test]
    fn every_run_validates_with_a_unique_name() {
        for preset in PRESETS {
            let runs = preset.configs();
            assert!(!runs.is_empty(), "{}", preset.name);
            let mut names: Vec<_> = runs.iter().map(|c| c.name.clone().unwrap()).collect();
            names.sort();
            names.dedup();
            assert_eq!(names.len(), runs.len(), "{}", preset.name);
            for c in &runs {
                c.validate().unwrap_or_else(|e| panic!("{}: {e}", preset.name));
            }
        }
    }

    #[test]
    fn mesh_compare_spans_three_levels() {
        let levels: Vec<_> =
            find("fig-mesh-compare").unwrap().configs().iter().map(|c| c.mesh.uniform_levels).collect();
        assert_eq!(levels, [4, 5, 6, 4, 5, 6]);
    }

    #[test]
    fn presets_round_trip_through_toml() {
        for preset in PRESETS {
            for c in preset.configs() {
                let text = c.canonical_toml();
                assert_eq!(crate::config::parse_config(&text).unwrap(), c, "{}", preset.name);
            }
        }
    }
}
