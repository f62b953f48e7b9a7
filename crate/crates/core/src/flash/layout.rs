//! Packing of the optimizer vector.
//!
//! TVN: `(V, N_1..N_n)` for each non-residual phase, then `T`.
//! UVN: `(N_1..N_n, V, U)` for each non-residual phase.

use nalgebra::DVector;

use super::{FlashError, FlashSpec, Formulation, PhaseSplit};
use crate::eos::{Mixture, StateTVN};

pub fn vector_len(formulation: Formulation, n: usize, phases: usize) -> usize {
    match formulation {
        Formulation::Uvn => (phases - 1) * (n + 2),
        _ => (phases - 1) * (n + 1) + 1,
    }
}

/// Volume and moles of every phase, residual last.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct Phases {
    pub volumes: Vec<f64>,
    pub moles: Vec<Vec<f64>>,
    /// Energies, UVN only.
    pub energies: Vec<f64>,
}

fn check_len(x: &[f64], expected: usize) -> Result<(), FlashError> {
    if x.len() != expected {
        return Err(FlashError::Length { expected, got: x.len() });
    }
    Ok(())
}

fn infeasible(phase: usize, reason: String) -> FlashError {
    FlashError::Infeasible { phase, reason }
}

/// Subtracts the explicit phases from the totals and checks every phase lies
/// strictly inside the EOS domain.
fn close(mix: &Mixture, spec: &FlashSpec, mut ph: Phases) -> Result<Phases, FlashError> {
    let n = mix.n();
    let mut v_res = spec.total_v;
    let mut n_res = spec.total_moles.clone();
    let mut u_res = spec.total_u;
    for k in 0..ph.volumes.len() {
        v_res -= ph.volumes[k];
        for i in 0..n {
            n_res[i] -= ph.moles[k][i];
        }
        if let Some(u) = ph.energies.get(k) {
            u_res -= u;
        }
    }
    ph.volumes.push(v_res);
    ph.moles.push(n_res);
    if !ph.energies.is_empty() {
        ph.energies.push(u_res);
    }
    for k in 0..ph.volumes.len() {
        let v = ph.volumes[k];
        if let Some((i, m)) = ph.moles[k].iter().enumerate().find(|(_, m)| !(**m > 0.0 && m.is_finite())) {
            return Err(infeasible(k, format!("N_{i} = {m:e}")));
        }
        let b = mix.total_covolume(&ph.moles[k]);
        if !(v > b && v.is_finite()) {
            return Err(infeasible(k, format!("V = {v:e} m3 against co-volume {b:e} m3")));
        }
        if let Some(u) = ph.energies.get(k) {
            if !u.is_finite() {
                return Err(infeasible(k, "energy is not finite".into()));
            }
        }
    }
    Ok(ph)
}

pub(crate) fn unpack_tvn(mix: &Mixture, spec: &FlashSpec, x: &[f64]) -> Result<(f64, Phases), FlashError> {
    let n = mix.n();
    check_len(x, vector_len(Formulation::Acl, n, spec.phases))?;
    let t = x[x.len() - 1];
    if !(t > 0.0 && t.is_finite()) {
        return Err(infeasible(spec.phases - 1, format!("T = {t}")));
    }
    let mut ph = Phases { volumes: Vec::new(), moles: Vec::new(), energies: Vec::new() };
    for chunk in x[..x.len() - 1].chunks(n + 1) {
        ph.volumes.push(chunk[0]);
        ph.moles.push(chunk[1..].to_vec());
    }
    Ok((t, close(mix, spec, ph)?))
}

pub(crate) fn unpack_uvn(mix: &Mixture, spec: &FlashSpec, x: &[f64]) -> Result<Phases, FlashError> {
    let n = mix.n();
    check_len(x, vector_len(Formulation::Uvn, n, spec.phases))?;
    let mut ph = Phases { volumes: Vec::new(), moles: Vec::new(), energies: Vec::new() };
    for chunk in x.chunks(n + 2) {
        ph.moles.push(chunk[..n].to_vec());
        ph.volumes.push(chunk[n]);
        ph.energies.push(chunk[n + 1]);
    }
    close(mix, spec, ph)
}

/// Full per-phase states of an optimizer vector. UVN decoding inverts the
/// EOS for every phase temperature.
pub fn decode(
    mix: &Mixture,
    spec: &FlashSpec,
    x: &DVector<f64>,
    formulation: Formulation,
) -> Result<PhaseSplit, FlashError> {
    let x = x.as_slice();
    let residual_phase = spec.phases - 1;
    if formulation.is_tvn() {
        let (t, ph) = unpack_tvn(mix, spec, x)?;
        let phases: Vec<StateTVN> = ph.volumes.iter().zip(ph.moles).map(|(v, m)| StateTVN::new(t, *v, m)).collect();
        let energies = phases.iter().map(|s| mix.internal_energy(s)).collect::<Result<_, _>>()?;
        Ok(PhaseSplit { phases, energies, residual_phase })
    } else {
        let ph = unpack_uvn(mix, spec, x)?;
        let mut phases = Vec::with_capacity(ph.volumes.len());
        for k in 0..ph.volumes.len() {
            let t = mix.solve_temperature_precise(ph.energies[k], ph.volumes[k], &ph.moles[k], 300.0)?;
            phases.push(StateTVN::new(t.temperature, ph.volumes[k], ph.moles[k].clone()));
        }
        Ok(PhaseSplit { phases, energies: ph.energies, residual_phase })
    }
}

/// Inverse of [`decode`]: takes all but the residual phase, and the residual
/// phase temperature in TVN form.
pub fn encode(split: &PhaseSplit, formulation: Formulation) -> DVector<f64> {
    let mut out = Vec::new();
    for (k, s) in split.phases.iter().enumerate() {
        if k == split.residual_phase {
            continue;
        }
        if formulation.is_tvn() {
            out.push(s.volume);
            out.extend_from_slice(&s.moles);
        } else {
            out.extend_from_slice(&s.moles);
            out.push(s.volume);
            out.push(split.energies[k]);
        }
    }
    if formulation.is_tvn() {
        out.push(split.temperature());
    }
    DVector::from_vec(out)
}
