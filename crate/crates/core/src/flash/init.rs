//! Starting split from the stability result: the trial phase takes half the
//! volume, shrunk by halving until the split raises the entropy and every
//! phase is admissible.

use super::{FlashError, FlashSpec, PhaseSplit};
use crate::eos::{Mixture, StateTVN};
use crate::stability::StabilityOutcome;

pub const MAX_SPLIT_HALVINGS: usize = 100;
const MIN_VOLUME_FRACTION: f64 = 1e-8;
/// Entropy gains below this fraction of |S| are roundoff.
const GAIN_TOL: f64 = 1e-13;

/// Both phases with their own inverted temperatures, or `None` if either is
/// outside the domain.
fn try_split(
    mix: &Mixture,
    spec: &FlashSpec,
    vol: f64,
    conc: &[f64],
    u: f64,
    t_guess: f64,
) -> Option<(PhaseSplit, f64)> {
    let moles: Vec<f64> = conc.iter().map(|c| c * vol).collect();
    let rest: Vec<f64> = spec.total_moles.iter().zip(&moles).map(|(a, b)| a - b).collect();
    let energies = [u * vol, spec.total_u - u * vol];
    let volumes = [vol, spec.total_v - vol];
    let moles = [moles, rest];
    let mut phases = Vec::with_capacity(2);
    let mut s = 0.0;
    for k in 0..2 {
        if moles[k].iter().any(|m| !(*m > 0.0)) || !(volumes[k] > mix.total_covolume(&moles[k])) {
            return None;
        }
        let t = mix.solve_temperature(energies[k], volumes[k], &moles[k], t_guess).ok()?.temperature;
        let state = StateTVN::new(t, volumes[k], moles[k].clone());
        s += mix.entropy(&state).ok()?;
        phases.push(state);
    }
    Some((PhaseSplit { phases, energies: energies.to_vec(), residual_phase: 1 }, s))
}

/// Two-phase starting point built from the highest-D trial phase.
pub fn initial_split(mix: &Mixture, spec: &FlashSpec, outcome: &StabilityOutcome) -> Result<PhaseSplit, FlashError> {
    spec.validate(mix)?;
    if spec.phases != 2 {
        return Err(FlashError::InvalidSpec("starting splits are built for two phases".into()));
    }
    let trial = outcome.best_trial().ok_or(FlashError::NoTrialPhase)?;
    let s_star = outcome.reference_props.entropy;
    let t_star = outcome.reference_t;
    let mut vol = 0.5 * spec.total_v;
    for _ in 0..MAX_SPLIT_HALVINGS {
        if let Some((split, s)) = try_split(mix, spec, vol, &trial.conc, trial.energy_density, t_star) {
            if s - s_star > GAIN_TOL * s_star.abs() {
                return Ok(split);
            }
        }
        if vol / spec.total_v < MIN_VOLUME_FRACTION {
            break;
        }
        vol *= 0.5;
    }
    Err(FlashError::NoFeasibleSplit { volume_fraction: vol / spec.total_v })
}
