//! wasm-bindgen surface for the demo page. Every export returns a JSON string.

use serde::Serialize;
use uvflash::bench::{builtin_problems, ProblemDef, StabilitySummary};
use uvflash::flash::{flash, FlashConfig, Formulation};
use uvflash::solver::{Globalization, SolverConfig};
use uvflash::stability::run_stability;
use uvflash::StateTVN;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct ProblemInfo<'a> {
    id: &'a str,
    components: &'a [String],
    total_u: f64,
    total_v: f64,
    total_moles: &'a [f64],
}

#[derive(Serialize)]
struct Isotherm {
    temperature: f64,
    /// m3/mol
    molar_volume: Vec<f64>,
    /// Pa
    pressure: Vec<f64>,
    covolume: f64,
    /// molar volume of the specified state
    specified: f64,
}

#[derive(Serialize)]
struct Stability {
    id: String,
    components: Vec<String>,
    reference_pressure: f64,
    #[serde(flatten)]
    summary: StabilitySummary,
}

#[derive(Serialize)]
struct Phase {
    volume: f64,
    moles: Vec<f64>,
    pressure: f64,
}

#[derive(Serialize)]
struct Flash {
    id: String,
    components: Vec<String>,
    formulation: Formulation,
    globalization: Globalization,
    split_found: bool,
    temperature: f64,
    s_single: f64,
    s_two: f64,
    outer_iterations: usize,
    inner_iterations: usize,
    residual_norm_history: Vec<f64>,
    phases: Vec<Phase>,
}

fn problem(id: &str) -> Result<ProblemDef, String> {
    builtin_problems()
        .map_err(|e| e.to_string())?
        .into_iter()
        .find(|p| p.id.eq_ignore_ascii_case(id))
        .ok_or_else(|| format!("unknown problem '{id}'"))
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn problems_json() -> Result<String, String> {
    let ps = builtin_problems().map_err(|e| e.to_string())?;
    let info: Vec<ProblemInfo> = ps
        .iter()
        .map(|p| ProblemInfo {
            id: &p.id,
            components: &p.components,
            total_u: p.spec.total_u,
            total_v: p.spec.total_v,
            total_moles: &p.spec.total_moles,
        })
        .collect();
    to_json(&info)
}

/// Pressure along an isotherm at the problem's overall composition, on
/// `points` log-spaced molar volumes from just above the covolume to 1000 times it.
pub fn isotherm_json(id: &str, temperature: f64, points: usize) -> Result<String, String> {
    if !(temperature > 0.0) || points < 2 {
        return Err("need a positive temperature and at least two points".into());
    }
    let p = problem(id)?;
    let total: f64 = p.spec.total_moles.iter().sum();
    let x: Vec<f64> = p.spec.total_moles.iter().map(|n| n / total).collect();
    let b = p.mixture.total_covolume(&x);
    let (lo, hi) = ((1.02 * b).ln(), (1000.0 * b).ln());
    let mut out = Isotherm {
        temperature,
        molar_volume: Vec::new(),
        pressure: Vec::new(),
        covolume: b,
        specified: p.spec.total_v / total,
    };
    for k in 0..points {
        let v = (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp();
        if let Ok(pr) = p.mixture.pressure(&StateTVN::new(temperature, v, x.clone())) {
            out.molar_volume.push(v);
            out.pressure.push(pr);
        }
    }
    to_json(&out)
}

pub fn stability_json(id: &str) -> Result<String, String> {
    let p = problem(id)?;
    let o = run_stability(&p.mixture, &p.spec.stability_spec()).map_err(|e| e.to_string())?;
    to_json(&Stability {
        id: p.id,
        components: p.components,
        reference_pressure: o.reference_props.pressure,
        summary: StabilitySummary::from_outcome(&o),
    })
}

pub fn flash_json(id: &str, formulation: &str, globalization: &str) -> Result<String, String> {
    let p = problem(id)?;
    let formulation: Formulation = formulation.parse()?;
    let globalization = match globalization {
        "linesearch" => Globalization::LineSearch,
        "trustregion" => Globalization::TrustRegion,
        other => return Err(format!("unknown globalization '{other}'")),
    };
    let cfg = FlashConfig {
        formulation,
        solver: SolverConfig { globalization, ..Default::default() },
        force_split: p.marginal,
    };
    let sol = flash(&p.mixture, &p.spec, &cfg).map_err(|e| e.to_string())?;
    let phases = sol
        .split
        .phases
        .iter()
        .map(|s| {
            Ok(Phase {
                volume: s.volume,
                moles: s.moles.clone(),
                pressure: p.mixture.pressure(s).map_err(|e| e.to_string())?,
            })
        })
        .collect::<Result<Vec<_>, String>>()?;
    to_json(&Flash {
        id: p.id,
        components: p.components,
        formulation,
        globalization,
        split_found: sol.split_found,
        temperature: sol.split.temperature(),
        s_single: sol.s_single,
        s_two: sol.s_two,
        outer_iterations: sol.outer_iterations,
        inner_iterations: sol.inner_iterations,
        residual_norm_history: sol.residual_norm_history,
        phases,
    })
}

/// Built-in problems with their specifications.
#[wasm_bindgen]
pub fn problems() -> Result<String, JsError> {
    problems_json().map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn isotherm(id: &str, temperature: f64, points: usize) -> Result<String, JsError> {
    isotherm_json(id, temperature, points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn stability(id: &str) -> Result<String, JsError> {
    stability_json(id).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn flash_problem(id: &str, formulation: &str, globalization: &str) -> Result<String, JsError> {
    flash_json(id, formulation, globalization).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::Value;

    fn parse(s: Result<String, String>) -> Value {
        serde_json::from_str(&s.unwrap()).unwrap()
    }

    #[test]
    fn lists_every_problem() {
        let v = parse(problems_json());
        assert_eq!(v.as_array().unwrap().len(), 7);
        assert_eq!(v[1]["id"], "P2");
    }

    #[test]
    fn isotherm_below_critical_has_a_loop() {
        let v = parse(isotherm_json("P2", 300.0, 400));
        let p: Vec<f64> = v["pressure"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
        assert!(p.len() > 300);
        assert!(p.windows(2).any(|w| w[1] > w[0]), "no van der Waals loop");
        assert!(p.last().unwrap() > &0.0);
    }

    #[test]
    fn stability_and_flash_of_p2() {
        let s = parse(stability_json("p2"));
        assert_eq!(s["is_stable"], false);
        let f = parse(flash_json("P2", "uvn", "trustregion"));
        assert_eq!(f["split_found"], true);
        assert_eq!(f["phases"].as_array().unwrap().len(), 2);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(flash_json("P9", "acl", "linesearch").is_err());
        assert!(flash_json("P2", "xyz", "linesearch").is_err());
        assert!(isotherm_json("P2", -1.0, 10).is_err());
    }
}
