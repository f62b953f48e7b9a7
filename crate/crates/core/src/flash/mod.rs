//! Two-phase split at fixed `(U, V, N)`.
//!
//! Two formulations are available. The UVN one maximises the summed entropy
//! over per-phase `(N, V, U)` and inverts the EOS for every phase temperature.
//! The TVN one works in per-phase `(V, N)` plus a shared temperature and
//! finds the stationary point of a Lagrangian whose multiplier is `-1/T`,
//! either in entropy form (SCL) or in Helmholtz form (ACL).

mod init;
mod layout;
mod tvn;
mod uvn;

#[cfg(test)]
mod tests;

use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use web_time::Instant;

use crate::eos::{EosError, Mixture, StateTVN};
use crate::solver::{self, SolverConfig, SolverFailure};
use crate::stability::{run_stability, run_stability_extended, StabilityError, StabilityOutcome, StabilitySpec};

pub use init::{initial_split, MAX_SPLIT_HALVINGS};
pub use layout::{decode, encode, vector_len};
pub use tvn::{constraint, lagrangian, TvnObjective};
pub use uvn::{objective_uvn, UvnObjective};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Lagrangian {
    /// Entropy plus multiplier times the energy constraint.
    Scl,
    /// Helmholtz form, `(U* - sum A) / T`.
    Acl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Formulation {
    Uvn,
    Scl,
    Acl,
}

impl Formulation {
    pub const ALL: [Formulation; 3] = [Formulation::Uvn, Formulation::Scl, Formulation::Acl];

    pub fn lagrangian(self) -> Option<Lagrangian> {
        match self {
            Formulation::Uvn => None,
            Formulation::Scl => Some(Lagrangian::Scl),
            Formulation::Acl => Some(Lagrangian::Acl),
        }
    }

    pub fn is_tvn(self) -> bool {
        self != Formulation::Uvn
    }
}

impl fmt::Display for Formulation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Formulation::Uvn => "uvn",
            Formulation::Scl => "scl",
            Formulation::Acl => "acl",
        })
    }
}

impl FromStr for Formulation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uvn" => Ok(Formulation::Uvn),
            "scl" => Ok(Formulation::Scl),
            "acl" => Ok(Formulation::Acl),
            other => Err(format!("unknown formulation '{other}' (expected uvn, scl or acl)")),
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FlashError {
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error(transparent)]
    Stability(#[from] StabilityError),
    #[error("invalid specification: {0}")]
    InvalidSpec(String),
    #[error("vector of length {got} does not match {expected}")]
    Length { expected: usize, got: usize },
    #[error("phase {phase} is infeasible: {reason}")]
    Infeasible { phase: usize, reason: String },
    #[error("stability analysis found no trial phase to split from")]
    NoTrialPhase,
    #[error("no feasible initial split: trial volume fraction fell to {volume_fraction:e}")]
    NoFeasibleSplit { volume_fraction: f64 },
    #[error("{formulation} flash did not converge after {iterations} iterations: {}", reason.as_ref().map_or("unknown".to_string(), |r| r.to_string()))]
    NotConverged {
        formulation: Formulation,
        iterations: usize,
        inner_iterations: usize,
        reason: Option<SolverFailure>,
        last_iterate: Vec<f64>,
        residual_norm_history: Vec<f64>,
    },
    #[error(
        "{formulation} flash stopped at a stationary point below the single-phase entropy ({s_two} < {s_single} J/K)"
    )]
    LowerEntropy { formulation: Formulation, iterations: usize, inner_iterations: usize, s_single: f64, s_two: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlashSpec {
    pub total_u: f64,
    pub total_v: f64,
    pub total_moles: Vec<f64>,
    #[serde(default = "two")]
    pub phases: usize,
}

fn two() -> usize {
    2
}

impl FlashSpec {
    pub fn new(total_u: f64, total_v: f64, total_moles: Vec<f64>) -> Self {
        FlashSpec { total_u, total_v, total_moles, phases: 2 }
    }

    pub fn stability_spec(&self) -> StabilitySpec {
        StabilitySpec { total_u: self.total_u, total_v: self.total_v, total_moles: self.total_moles.clone() }
    }

    pub fn validate(&self, mix: &Mixture) -> Result<(), FlashError> {
        if self.phases < 2 {
            return Err(FlashError::InvalidSpec(format!("{} phases requested, need at least 2", self.phases)));
        }
        self.stability_spec().validate(mix)?;
        Ok(())
    }
}

/// Per-phase states. The last phase is the residual one, defined by
/// subtracting the others from the totals.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseSplit {
    pub phases: Vec<StateTVN>,
    pub energies: Vec<f64>,
    pub residual_phase: usize,
}

impl PhaseSplit {
    /// Temperature of the residual phase.
    pub fn temperature(&self) -> f64 {
        self.phases[self.residual_phase].temperature
    }

    pub fn volumes(&self) -> Vec<f64> {
        self.phases.iter().map(|p| p.volume).collect()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResiduals {
    /// max_i max_k |μ_i^k - μ_i^p|, J/mol
    pub dmu: f64,
    /// max_k |P^k - P^p|, Pa
    pub dp: f64,
    /// |sum U - U*|, J
    pub c: f64,
    /// max_k |T^k - T^p|, K; zero by construction in TVN form
    pub dt: f64,
    pub tol_mu: f64,
    pub tol_p: f64,
    pub tol_c: f64,
}

impl EquilibriumResiduals {
    pub fn satisfied(&self) -> bool {
        self.dmu <= self.tol_mu && self.dp <= self.tol_p && self.c <= self.tol_c
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlashConfig {
    pub formulation: Formulation,
    pub solver: SolverConfig,
    /// Attempt a split even when the stability test finds none.
    pub force_split: bool,
}

impl Default for FlashConfig {
    fn default() -> Self {
        FlashConfig { formulation: Formulation::Acl, solver: SolverConfig::default(), force_split: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlashSolution {
    pub formulation: Formulation,
    /// `false` when the reference state was found stable and returned as is.
    pub split_found: bool,
    pub split: PhaseSplit,
    pub initial: Option<PhaseSplit>,
    pub reference_t: f64,
    pub s_single: f64,
    pub s_two: f64,
    pub residuals: EquilibriumResiduals,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub residual_norm_history: Vec<f64>,
    pub regularized_steps: usize,
    /// Newton solve only.
    pub wall_time: Duration,
}

/// Stability result and starting split, reusable across formulations.
#[derive(Clone, Debug, PartialEq)]
pub struct Prepared {
    pub stability: StabilityOutcome,
    pub s_single: f64,
    pub initial: Option<PhaseSplit>,
}

pub fn prepare(mix: &Mixture, spec: &FlashSpec, force_split: bool) -> Result<Prepared, FlashError> {
    spec.validate(mix)?;
    let mut stability = run_stability(mix, &spec.stability_spec())?;
    if stability.is_stable && force_split {
        stability = run_stability_extended(mix, &spec.stability_spec())?;
    }
    let s_single = stability.reference_props.entropy;
    let initial = if !stability.is_stable || force_split { Some(initial_split(mix, spec, &stability)?) } else { None };
    Ok(Prepared { stability, s_single, initial })
}

pub fn flash(mix: &Mixture, spec: &FlashSpec, config: &FlashConfig) -> Result<FlashSolution, FlashError> {
    let prepared = prepare(mix, spec, config.force_split)?;
    solve_prepared(mix, spec, &prepared, config)
}

/// Runs the Newton solve from a prepared starting split.
pub fn solve_prepared(
    mix: &Mixture,
    spec: &FlashSpec,
    prepared: &Prepared,
    config: &FlashConfig,
) -> Result<FlashSolution, FlashError> {
    let reference_t = prepared.stability.reference_t;
    let Some(initial) = &prepared.initial else {
        let state = StateTVN::new(reference_t, spec.total_v, spec.total_moles.clone());
        return Ok(FlashSolution {
            formulation: config.formulation,
            split_found: false,
            split: PhaseSplit { phases: vec![state], energies: vec![spec.total_u], residual_phase: 0 },
            initial: None,
            reference_t,
            s_single: prepared.s_single,
            s_two: prepared.s_single,
            residuals: EquilibriumResiduals::default(),
            outer_iterations: 0,
            inner_iterations: 0,
            residual_norm_history: Vec::new(),
            regularized_steps: 0,
            wall_time: Duration::ZERO,
        });
    };
    let x0 = encode(initial, config.formulation);
    let start = Instant::now();
    let (result, inner, x_final) = match config.formulation.lagrangian() {
        Some(form) => {
            let mut obj = TvnObjective::new(mix, spec, form);
            let r = solver::solve(&mut obj, x0, &config.solver);
            let x = r.x_final.clone();
            (r, 0, x)
        }
        None => {
            let mut obj = UvnObjective::new(mix, spec, config.solver.scaling);
            obj.start_temperatures(initial.phases.iter().map(|p| p.temperature).collect());
            let xs = obj.to_solver(&x0);
            let r = solver::solve(&mut obj, xs, &config.solver);
            let x = obj.from_solver(&r.x_final);
            (r, obj.inner_iterations(), x)
        }
    };
    let wall_time = start.elapsed();
    if !result.converged {
        return Err(FlashError::NotConverged {
            formulation: config.formulation,
            iterations: result.outer_iterations,
            inner_iterations: inner,
            reason: result.failure_reason,
            last_iterate: x_final.iter().copied().collect(),
            residual_norm_history: result.residual_norm_history,
        });
    }
    let split = decode(mix, spec, &x_final, config.formulation)?;
    let (residuals, s_two) = equilibrium_residuals(mix, spec, &split)?;
    let s_single = prepared.s_single;
    if s_two < s_single - 1e-12 * s_single.abs() {
        return Err(FlashError::LowerEntropy {
            formulation: config.formulation,
            iterations: result.outer_iterations,
            inner_iterations: inner,
            s_single,
            s_two,
        });
    }
    Ok(FlashSolution {
        formulation: config.formulation,
        split_found: true,
        split,
        initial: Some(initial.clone()),
        reference_t,
        s_single: prepared.s_single,
        s_two,
        residuals,
        outer_iterations: result.outer_iterations,
        inner_iterations: inner,
        residual_norm_history: result.residual_norm_history,
        regularized_steps: result.regularized_steps,
        wall_time,
    })
}

/// Pairwise equilibrium residuals against the residual phase, and the total
/// entropy of the split.
pub fn equilibrium_residuals(
    mix: &Mixture,
    spec: &FlashSpec,
    split: &PhaseSplit,
) -> Result<(EquilibriumResiduals, f64), FlashError> {
    let props = split.phases.iter().map(|s| mix.properties(s)).collect::<Result<Vec<_>, _>>()?;
    let r = &props[split.residual_phase];
    let mut out = EquilibriumResiduals::default();
    let mut mu_max: f64 = 0.0;
    let mut p_max: f64 = 0.0;
    let mut u_sum = 0.0;
    let t_res = split.temperature();
    for s in &split.phases {
        out.dt = out.dt.max((s.temperature - t_res).abs());
    }
    for p in &props {
        for (a, b) in p.chem_potential.iter().zip(&r.chem_potential) {
            out.dmu = out.dmu.max((a - b).abs());
            mu_max = mu_max.max(a.abs());
        }
        out.dp = out.dp.max((p.pressure - r.pressure).abs());
        p_max = p_max.max(p.pressure.abs());
        u_sum += p.internal_energy;
    }
    out.c = (u_sum - spec.total_u).abs();
    out.tol_mu = 1e-6 * mu_max;
    out.tol_p = 1e-6 * p_max.max(1.0);
    out.tol_c = 1e-6 * spec.total_u.abs();
    Ok((out, props.iter().map(|p| p.entropy).sum()))
}
