//! Built-in benchmark problems, problem files and the benchmark matrix.

mod problems;
mod report;

#[cfg(feature = "cli")]
pub mod cli;

use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eos::{ComponentDatabase, EosError, Mixture};
use crate::flash::{FlashError, FlashSpec};

pub use problems::{builtin_problems, builtin_problems_with, BUILTIN_IDS};
pub use report::{
    max_disagreement, run_benchmark, run_problem, BenchConfig, BenchMatrix, BenchReport, CellReport, Check,
    ProblemReport, StabilitySummary, Tolerance,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error(transparent)]
    Eos(#[from] EosError),
    #[error(transparent)]
    Flash(#[from] FlashError),
    #[error("{0}")]
    Config(String),
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("bad problem file: {0}")]
    Parse(#[from] serde_json::Error),
}

/// Stationary point of the tangent plane distance as tabulated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedStability {
    pub source: String,
    pub temperature: f64,
    pub conc: Vec<f64>,
    pub tpd: f64,
}

/// One phase of the converged split plus both entropies.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedFlash {
    pub source: String,
    pub energy: f64,
    pub volume: f64,
    pub moles: Vec<f64>,
    pub s_single: f64,
    pub s_two: f64,
}

impl ExpectedFlash {
    pub fn entropy_gap(&self) -> f64 {
        self.s_two - self.s_single
    }
}

/// Outer iterations per globalization, `None` where the run failed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationPair {
    pub line_search: Option<usize>,
    pub trust_region: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpectedIterations {
    pub source: String,
    /// Tolerance the counts were produced at.
    pub rel_tol: f64,
    pub scl: IterationPair,
    pub acl: IterationPair,
    pub uvn_outer: IterationPair,
    pub uvn_inner: IterationPair,
}

/// Expected results. Stability and flash may list several published value
/// sets for the same problem; comparisons use the nearest one.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Expected {
    pub stability: Vec<ExpectedStability>,
    pub flash: Vec<ExpectedFlash>,
    pub iterations: Option<ExpectedIterations>,
}

#[derive(Clone, Debug)]
pub struct ProblemDef {
    pub id: String,
    pub components: Vec<String>,
    pub mixture: Mixture,
    pub spec: FlashSpec,
    pub expected: Option<Expected>,
    /// Reference state sits on the stability limit; a split is forced.
    pub marginal: bool,
}

/// On-disk problem description. Volumes may be given in m3 or cm3; moles are
/// keyed by component name in mixture order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    #[serde(rename = "u_J")]
    pub u_j: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_m3: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_cm3: Option<f64>,
    pub moles: IndexMap<String, f64>,
}

impl ProblemFile {
    pub fn from_problem(p: &ProblemDef) -> Self {
        ProblemFile {
            id: Some(p.id.clone()),
            u_j: p.spec.total_u,
            v_m3: Some(p.spec.total_v),
            v_cm3: None,
            moles: p.components.iter().cloned().zip(p.spec.total_moles.iter().copied()).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem files always serialise")
    }

    pub fn into_problem(self, db: &ComponentDatabase, fallback_id: &str) -> Result<ProblemDef, BenchError> {
        let total_v = match (self.v_m3, self.v_cm3) {
            (Some(v), None) => v,
            (None, Some(v)) => v * 1e-6,
            _ => return Err(BenchError::Config("give exactly one of v_m3 and v_cm3".into())),
        };
        if self.moles.is_empty() {
            return Err(BenchError::Config("moles is empty".into()));
        }
        let components: Vec<String> = self.moles.keys().cloned().collect();
        let mixture = db.mixture(&components)?;
        let spec = FlashSpec::new(self.u_j, total_v, self.moles.values().copied().collect());
        spec.validate(&mixture)?;
        Ok(ProblemDef {
            id: self.id.unwrap_or_else(|| fallback_id.to_string()),
            components,
            mixture,
            spec,
            expected: None,
            marginal: false,
        })
    }
}

pub fn parse_problem(text: &str, db: &ComponentDatabase, fallback_id: &str) -> Result<ProblemDef, BenchError> {
    serde_json::from_str::<ProblemFile>(text)?.into_problem(db, fallback_id)
}

/// A built-in id (case-insensitive) or the path of a problem file.
pub fn load_problem(name: &str, db: &ComponentDatabase) -> Result<ProblemDef, BenchError> {
    if let Some(p) = find_builtin(name, db)? {
        return Ok(p);
    }
    let path = Path::new(name);
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io { path: name.to_string(), source })?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or(name);
    parse_problem(&text, db, stem)
}

fn find_builtin(name: &str, db: &ComponentDatabase) -> Result<Option<ProblemDef>, BenchError> {
    let key = name.to_ascii_uppercase().replace(['-', '_'], "");
    let key = if key == "PCO2" { "CO2".to_string() } else { key };
    if !BUILTIN_IDS.contains(&key.as_str()) {
        return Ok(None);
    }
    Ok(builtin_problems_with(db)?.into_iter().find(|p| p.id == key))
}
