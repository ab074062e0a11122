//! Kačanov fixed-point iteration and contraction-factor monitors.
//!
//! Each step freezes the viscosity at the previous iterate and solves the
//! resulting linear SPD problem. All essential suprema in the factor
//! formulas become maxima over triangles because P1 gradients are piecewise
//! constant.

use crate::error::{Error, Result};
use crate::fem::{
    assemble_weighted_stiffness, energy_difference_from_gradients, energy_from_gradients, gradients,
    h1_error_piecewise, viscosity_weights, DiscreteFunction, LoadFunctional, P1Space, Vector2,
};
use crate::linalg::{cg_solve_from, CgOptions};
use crate::viscosity::ViscosityModel;

/// Relative energy increase tolerated before a step is treated as a defect.
pub const ENERGY_INCREASE_SLACK: f64 = 1e-10;

/// Relative energy increment at which a reference run is considered converged.
pub const REFERENCE_INCREMENT_TOL: f64 = 1e-15;

/// Relative threshold below which ratio denominators are treated as zero.
const RATIO_FLOOR: f64 = 1e-15;

#[derive(Debug, Clone)]
pub struct IterationConfig<'a> {
    pub model: &'a ViscosityModel,
    pub space: &'a P1Space,
    pub load: &'a LoadFunctional,
    /// Initial guess; zero when absent.
    pub u0: Option<DiscreteFunction>,
    pub max_steps: usize,
    /// Stop once `E(u^n) - E(u^{n+1}) < energy_increment_tol * (1 + |E(u^n)|)`.
    pub energy_increment_tol: f64,
    pub linear_rel_tol: f64,
}

impl<'a> IterationConfig<'a> {
    pub fn new(model: &'a ViscosityModel, space: &'a P1Space, load: &'a LoadFunctional) -> Self {
        IterationConfig {
            model,
            space,
            load,
            u0: None,
            max_steps: 100,
            energy_increment_tol: 0.0,
            linear_rel_tol: CgOptions::default().rel_tol,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps == 0 {
            return Err(Error::InvalidParameter("max_steps must be at least 1".into()));
        }
        if !(self.energy_increment_tol.is_finite() && self.energy_increment_tol >= 0.0) {
            return Err(Error::InvalidParameter("energy_increment_tol must be finite and nonnegative".into()));
        }
        if !(self.linear_rel_tol > 0.0 && self.linear_rel_tol < 1.0) {
            return Err(Error::InvalidParameter("linear rel_tol must lie in (0,1)".into()));
        }
        if self.load.values().len() != self.space.num_dofs() {
            return Err(Error::DimensionMismatch { expected: self.space.num_dofs(), got: self.load.values().len() });
        }
        if let Some(u0) = &self.u0 {
            if u0.values().len() != self.space.num_vertices() {
                return Err(Error::DimensionMismatch { expected: self.space.num_vertices(), got: u0.values().len() });
            }
            if !u0.is_homogeneous(self.space) {
                return Err(Error::InvalidParameter("initial guess must vanish on the boundary".into()));
            }
        }
        Ok(())
    }

    fn cg_options(&self) -> CgOptions {
        CgOptions { rel_tol: self.linear_rel_tol, ..CgOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub step: usize,
    pub energy: f64,
    pub energy_error: Option<f64>,
    pub h1_error: Option<f64>,
    pub q_e: Option<f64>,
    pub q_a: Option<f64>,
    pub q_w: Option<f64>,
    pub q_h: Option<f64>,
    pub q_thm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceSolution {
    pub u_star: DiscreteFunction,
    pub e_star: f64,
    pub grads_star: Vec<Vector2>,
    pub steps: usize,
    /// `E(u^{N-1}) - E(u^N)` of the final step.
    pub final_increment: f64,
}

/// One Kačanov step from `u_n`, warm-started at `u_n`.
pub fn step(
    model: &ViscosityModel,
    space: &P1Space,
    load: &LoadFunctional,
    u_n: &DiscreteFunction,
    linear: &CgOptions,
) -> Result<DiscreteFunction> {
    let grads = gradients(space, u_n)?;
    step_from_gradients(model, space, load, u_n, &grads, linear)
}

fn step_from_gradients(
    model: &ViscosityModel,
    space: &P1Space,
    load: &LoadFunctional,
    u_n: &DiscreteFunction,
    grads: &[Vector2],
    linear: &CgOptions,
) -> Result<DiscreteFunction> {
    let a = assemble_weighted_stiffness(space, &viscosity_weights(model, grads))?;
    let solution = cg_solve_from(&a, load.values(), &u_n.dofs(space), linear)?;
    DiscreteFunction::from_dofs(space, &solution.x)
}

/// State of the iteration after each step.
struct Iterate {
    u: DiscreteFunction,
    grads: Vec<Vector2>,
    energy: f64,
    /// `E(u^n) - E(u^{n-1})`, evaluated from the difference of the iterates;
    /// absent for `n = 0`.
    increment: Option<f64>,
}

/// Runs the iteration and hands every iterate (including `u^0`) to `visit`.
/// Stops after `max_steps` or when the relative energy decrease drops below
/// `increment_tol`.
fn iterate(
    config: &IterationConfig<'_>,
    increment_tol: f64,
    mut visit: impl FnMut(usize, &Iterate) -> Result<()>,
) -> Result<Iterate> {
    config.validate()?;
    let (model, space, load) = (config.model, config.space, config.load);
    let u = config.u0.clone().unwrap_or_else(|| DiscreteFunction::zero(space));
    let grads = gradients(space, &u)?;
    let energy = energy_from_gradients(space, model, &grads, &u, load);
    let mut current = Iterate { u, grads, energy, increment: None };
    visit(0, &current)?;
    let linear = config.cg_options();
    for n in 1..=config.max_steps {
        let u = step_from_gradients(model, space, load, &current.u, &current.grads, &linear)?;
        let grads = gradients(space, &u)?;
        let energy = energy_from_gradients(space, model, &grads, &u, load);
        let delta = energy_difference_from_gradients(space, model, &u, &current.u, &current.grads, load)?;
        if delta > ENERGY_INCREASE_SLACK * (1.0 + current.energy.abs()) {
            return Err(Error::EnergyIncrease { step: n, delta });
        }
        let converged = -delta < increment_tol * (1.0 + current.energy.abs());
        current = Iterate { u, grads, energy, increment: Some(delta) };
        visit(n, &current)?;
        if converged {
            break;
        }
    }
    Ok(current)
}

/// Runs the iteration and records all computable monitors. `q_thm`, the
/// energy error, the gradient error and `q_E` need a reference solution.
///
/// Energy errors and increments are evaluated from differences of iterates,
/// so `q_E` and `q_H` stay meaningful well below the rounding level of `E`.
pub fn run(config: &IterationConfig<'_>, reference: Option<&ReferenceSolution>) -> Result<Vec<IterationRecord>> {
    let (model, space, load) = (config.model, config.space, config.load);
    let q_w = factor_qw(model);
    let mut records: Vec<IterationRecord> = Vec::new();
    let mut increments: Vec<f64> = Vec::new();
    iterate(config, config.energy_increment_tol, |n, it| {
        let (energy_error, h1_error, q_thm) = match reference {
            Some(r) => (
                Some(energy_difference_from_gradients(space, model, &it.u, &r.u_star, &r.grads_star, load)?),
                Some(h1_error_piecewise(space, &it.grads, &r.grads_star)?),
                Some(factor_q_thm(model, &it.grads, &r.grads_star)?),
            ),
            None => (None, None, None),
        };
        let q_e = match (reference, records.last().and_then(|p| p.energy_error), energy_error) {
            (Some(r), Some(prev), Some(cur)) => error_ratio(prev, cur, r.e_star),
            _ => None,
        };
        increments.extend(it.increment);
        let q_h = match increments[..] {
            [.., d0, d1] if n >= 2 => increment_ratio(d0, d1, it.energy),
            _ => None,
        };
        records.push(IterationRecord {
            step: n,
            energy: it.energy,
            energy_error,
            h1_error,
            q_e,
            q_a: Some(factor_qa(model, &it.grads)),
            q_w: Some(q_w),
            q_h,
            q_thm,
        });
        Ok(())
    })?;
    Ok(records)
}

/// Runs `config.max_steps` steps, or fewer once the relative energy increment
/// falls below [`REFERENCE_INCREMENT_TOL`], and keeps the final iterate.
pub fn reference_solve(config: &IterationConfig<'_>) -> Result<ReferenceSolution> {
    reference_solve_until(config, REFERENCE_INCREMENT_TOL)
}

/// As [`reference_solve`] with a custom relative increment tolerance.
pub fn reference_solve_until(config: &IterationConfig<'_>, increment_tol: f64) -> Result<ReferenceSolution> {
    if !(increment_tol.is_finite() && increment_tol >= 0.0) {
        return Err(Error::InvalidParameter("reference tolerance must be finite and nonnegative".into()));
    }
    let mut steps = 0;
    let mut last = f64::NAN;
    let fin = iterate(config, increment_tol, |n, it| {
        steps = n;
        last = it.increment.map_or(f64::NAN, |d| -d);
        Ok(())
    })?;
    Ok(ReferenceSolution { e_star: fin.energy, grads_star: fin.grads, u_star: fin.u, steps, final_increment: last })
}

fn norm2(g: Vector2) -> f64 {
    g[0] * g[0] + g[1] * g[1]
}

/// `q_A = 1 - 1/4 / max_T [mu(g_T^2) / xi'(g_T)]`.
pub fn factor_qa(model: &ViscosityModel, grads: &[Vector2]) -> f64 {
    let worst = grads
        .iter()
        .map(|&g| {
            let s = norm2(g);
            model.mu_unchecked(s) / model.xi_prime_unchecked(s.sqrt())
        })
        .fold(f64::NEG_INFINITY, f64::max);
    1.0 - 0.25 / worst
}

/// `q_W = 1 - m_mu / (4 M_mu)`.
pub fn factor_qw(model: &ViscosityModel) -> f64 {
    let (m, big_m) = model.bounds();
    1.0 - m / (4.0 * big_m)
}

/// Contraction factor of the global energy estimate, with the infimum of
/// `xi'` taken over `[max(0, a_T - b_T), a_T + b_T]`, `a_T = |grad u*|`,
/// `b_T = |grad u^n - grad u*|`.
pub fn factor_q_thm(model: &ViscosityModel, grads_un: &[Vector2], grads_ustar: &[Vector2]) -> Result<f64> {
    if grads_un.len() != grads_ustar.len() {
        return Err(Error::DimensionMismatch { expected: grads_ustar.len(), got: grads_un.len() });
    }
    let worst = grads_un
        .iter()
        .zip(grads_ustar)
        .map(|(&gn, &gs)| {
            let a = norm2(gs).sqrt();
            let b = norm2([gn[0] - gs[0], gn[1] - gs[1]]).sqrt();
            let (inf, _) = model.xi_prime_extrema_unchecked((a - b).max(0.0), a + b);
            model.mu_unchecked(norm2(gn)) / inf
        })
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(1.0 - 0.25 / worst)
}

/// `cur / prev` for energy errors; `None` below the relative floor.
fn error_ratio(prev: f64, cur: f64, e_star: f64) -> Option<f64> {
    (prev >= RATIO_FLOOR * (1.0 + e_star.abs())).then(|| cur / prev)
}

/// `d1 / d0` for consecutive energy increments, clamped to `[0, 1]`.
fn increment_ratio(d0: f64, d1: f64, energy: f64) -> Option<f64> {
    // rounding can flip the sign of a vanishing numerator
    (d0.abs() >= RATIO_FLOOR * (1.0 + energy.abs())).then(|| (d1 / d0).clamp(0.0, 1.0))
}

/// `q_E(n) = (E_n - E*) / (E_{n-1} - E*)` for `n >= 1`; `None` where the
/// denominator is negligible. The entry for `n = 0` is always `None`.
pub fn factor_qe(energies: &[f64], e_star: f64) -> Vec<Option<f64>> {
    (0..energies.len())
        .map(|n| if n == 0 { None } else { error_ratio(energies[n - 1] - e_star, energies[n] - e_star, e_star) })
        .collect()
}

/// `q_H(n) = min{1, (E_n - E_{n-1}) / (E_{n-1} - E_{n-2})}` for `n >= 2`.
pub fn factor_qh(energies: &[f64]) -> Vec<Option<f64>> {
    (0..energies.len())
        .map(|n| {
            if n < 2 {
                None
            } else {
                increment_ratio(energies[n - 1] - energies[n - 2], energies[n] - energies[n - 1], energies[n - 1])
            }
        })
        .collect()
}
