use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use super::{BenchError, ExpectedIterations, IterationPair, ProblemDef};
use crate::flash::{prepare, solve_prepared, FlashConfig, FlashError, FlashSolution, Formulation, Prepared};
use crate::solver::{Globalization, SolverConfig};
use crate::stability::StabilityOutcome;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchMatrix {
    pub formulations: Vec<Formulation>,
    pub globalizations: Vec<Globalization>,
    /// Scaling variants tried for UVN; TVN always runs unscaled.
    pub uvn_scaling: Vec<bool>,
}

impl Default for BenchMatrix {
    fn default() -> Self {
        BenchMatrix {
            formulations: Formulation::ALL.to_vec(),
            globalizations: vec![Globalization::LineSearch, Globalization::TrustRegion],
            uvn_scaling: vec![false, true],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub rel_tol: f64,
    pub max_outer: usize,
    /// Timed runs per converged cell after one untimed warm-up; 0 disables timing.
    pub repeats: usize,
    pub force_split: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { rel_tol: 1e-6, max_outer: 1000, repeats: 100, force_split: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tolerance {
    Relative(f64),
    Absolute(f64),
    /// ±2 or ±25 %, whichever is larger.
    Iterations,
}

impl Tolerance {
    pub fn accepts(self, expected: f64, actual: f64) -> bool {
        let err = (actual - expected).abs();
        match self {
            Tolerance::Relative(r) => err <= r * expected.abs(),
            Tolerance::Absolute(a) => err <= a,
            Tolerance::Iterations => err <= (0.25 * expected).max(2.0),
        }
    }
}

impl fmt::Display for Tolerance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tolerance::Relative(r) => write!(f, "rel {r:e}"),
            Tolerance::Absolute(a) => write!(f, "abs {a:e}"),
            Tolerance::Iterations => f.write_str("±2 or ±25%"),
        }
    }
}

/// One comparison against an expected value. `expected = None` means the
/// run is expected to fail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub quantity: String,
    pub expected: Option<f64>,
    pub actual: Option<f64>,
    pub tolerance: Tolerance,
    pub pass: bool,
    pub source: String,
}

impl Check {
    fn new(
        quantity: impl Into<String>,
        expected: f64,
        actual: Option<f64>,
        tolerance: Tolerance,
        source: &str,
    ) -> Self {
        let pass = actual.is_some_and(|a| tolerance.accepts(expected, a));
        Check {
            quantity: quantity.into(),
            expected: Some(expected),
            actual,
            tolerance,
            pass,
            source: source.to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub conc: Vec<f64>,
    pub tpd: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilitySummary {
    pub reference_t: f64,
    pub is_stable: bool,
    pub trials: usize,
    pub best: Option<TrialSummary>,
    pub stationary_points: Vec<TrialSummary>,
}

impl StabilitySummary {
    pub fn from_outcome(o: &StabilityOutcome) -> Self {
        let summary = |t: &crate::stability::TrialPhase| TrialSummary { conc: t.conc.clone(), tpd: t.tpd };
        StabilitySummary {
            reference_t: o.reference_t,
            is_stable: o.is_stable,
            trials: o.trials.len(),
            best: o.best_trial().map(summary),
            stationary_points: o.stationary_points().into_iter().map(summary).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellReport {
    pub formulation: Formulation,
    pub globalization: Globalization,
    pub scaled: bool,
    pub converged: bool,
    pub outer_iterations: usize,
    pub inner_iterations: usize,
    pub mean_ms: Option<f64>,
    pub temperature: Option<f64>,
    pub s_gap: Option<f64>,
    pub volumes: Vec<f64>,
    pub moles: Vec<Vec<f64>>,
    pub equilibrium: bool,
    pub failure: Option<String>,
}

impl CellReport {
    pub fn label(&self) -> String {
        let scale = if self.formulation == Formulation::Uvn {
            if self.scaled {
                "/scaled"
            } else {
                "/unscaled"
            }
        } else {
            ""
        };
        format!("{}/{}{}", self.formulation, self.globalization, scale)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemReport {
    pub id: String,
    pub components: Vec<String>,
    /// Reference temperature within 0.01 K of the expected one, i.e. the
    /// component data reproduce the reference data set.
    pub data_match: Option<bool>,
    pub forced_split: bool,
    pub stability: Option<StabilitySummary>,
    pub error: Option<String>,
    pub cells: Vec<CellReport>,
    /// Largest relative spread of volumes and moles across converged cells.
    pub max_disagreement: Option<f64>,
    pub checks: Vec<Check>,
}

impl ProblemReport {
    pub fn cell(&self, f: Formulation, g: Globalization, scaled: bool) -> Option<&CellReport> {
        self.cells.iter().find(|c| c.formulation == f && c.globalization == g && c.scaled == scaled)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub rel_tol: f64,
    pub repeats: usize,
    pub problems: Vec<ProblemReport>,
}

fn cell(prepared: &Prepared, p: &ProblemDef, cfg: &FlashConfig, repeats: usize) -> CellReport {
    let mut out = CellReport {
        formulation: cfg.formulation,
        globalization: cfg.solver.globalization,
        scaled: cfg.solver.scaling,
        converged: false,
        outer_iterations: 0,
        inner_iterations: 0,
        mean_ms: None,
        temperature: None,
        s_gap: None,
        volumes: Vec::new(),
        moles: Vec::new(),
        equilibrium: false,
        failure: None,
    };
    match solve_prepared(&p.mixture, &p.spec, prepared, cfg) {
        Ok(sol) => {
            fill(&mut out, &sol);
            if repeats > 0 {
                let mut total = 0.0;
                for _ in 0..repeats {
                    let again = solve_prepared(&p.mixture, &p.spec, prepared, cfg).expect("repeat of a converged run");
                    total += again.wall_time.as_secs_f64();
                }
                out.mean_ms = Some(1e3 * total / repeats as f64);
            }
        }
        Err(FlashError::NotConverged { iterations, inner_iterations, reason, .. }) => {
            out.outer_iterations = iterations;
            out.inner_iterations = inner_iterations;
            out.failure = Some(reason.map_or("not converged".into(), |r| r.to_string()));
        }
        Err(e) => {
            if let FlashError::LowerEntropy { iterations, inner_iterations, .. } = e {
                out.outer_iterations = iterations;
                out.inner_iterations = inner_iterations;
            }
            out.failure = Some(e.to_string());
        }
    }
    out
}

fn fill(out: &mut CellReport, sol: &FlashSolution) {
    out.converged = true;
    out.outer_iterations = sol.outer_iterations;
    out.inner_iterations = sol.inner_iterations;
    out.temperature = Some(sol.split.temperature());
    out.s_gap = Some(sol.s_two - sol.s_single);
    out.volumes = sol.split.volumes();
    out.moles = sol.split.phases.iter().map(|p| p.moles.clone()).collect();
    out.equilibrium = sol.residuals.satisfied();
}

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| ((x - y) / y).abs()).fold(0.0, f64::max)
}

fn stability_checks(p: &ProblemDef, o: &StabilityOutcome, checks: &mut Vec<Check>) {
    let Some(cands) = p.expected.as_ref().map(|e| &e.stability).filter(|c| !c.is_empty()) else { return };
    let t_exp = cands[0].temperature;
    let source = cands[0].source.as_str();
    checks.push(Check::new("stability T", t_exp, Some(o.reference_t), Tolerance::Absolute(0.01), source));
    if cands.iter().any(|c| c.tpd.abs() < crate::stability::D_TOL) {
        let d = o.best_trial().map_or(0.0, |t| t.tpd);
        let mut c =
            Check::new("stability D", cands[0].tpd, Some(d), Tolerance::Absolute(crate::stability::D_TOL), source);
        c.pass = c.pass && o.is_stable;
        checks.push(c);
        return;
    }
    let points = o.stationary_points();
    // (candidate, nearest stationary point) with the smallest concentration error
    let best = cands
        .iter()
        .flat_map(|c| points.iter().map(move |t| (c, *t, max_rel(&t.conc, &c.conc))))
        .min_by(|a, b| a.2.total_cmp(&b.2));
    let exp = best.map_or(&cands[0], |b| b.0);
    let found = best.map(|b| b.1);
    for (i, &c) in exp.conc.iter().enumerate() {
        let q = format!("stability c'[{}]", p.components[i]);
        checks.push(Check::new(q, c, found.map(|t| t.conc[i]), Tolerance::Relative(1e-3), &exp.source));
    }
    checks.push(Check::new("stability D", exp.tpd, found.map(|t| t.tpd), Tolerance::Relative(5e-3), &exp.source));
}

fn flash_checks(p: &ProblemDef, cells: &[CellReport], checks: &mut Vec<Check>) {
    let Some(cands) = p.expected.as_ref().map(|e| &e.flash).filter(|c| !c.is_empty()) else { return };
    let reference = cells
        .iter()
        .find(|c| c.converged && c.formulation == Formulation::Scl && c.globalization == Globalization::LineSearch)
        .or_else(|| cells.iter().find(|c| c.converged));
    // (candidate, phase index, error) minimising the error over volume and moles
    let best = reference.and_then(|c| {
        cands
            .iter()
            .flat_map(|e| {
                (0..c.volumes.len()).map(move |k| {
                    let err = max_rel(&c.moles[k], &e.moles).max(((c.volumes[k] - e.volume) / e.volume).abs());
                    (e, k, err)
                })
            })
            .min_by(|a, b| a.2.total_cmp(&b.2))
    });
    let exp = best.map_or(&cands[0], |b| b.0);
    let src = exp.source.as_str();
    let pick = |f: &dyn Fn(&CellReport, usize) -> f64| reference.zip(best).map(|(c, b)| f(c, b.1));
    checks.push(Check::new("flash V", exp.volume, pick(&|c, k| c.volumes[k]), Tolerance::Relative(1e-3), src));
    for (i, &n) in exp.moles.iter().enumerate() {
        let q = format!("flash N[{}]", p.components[i]);
        checks.push(Check::new(q, n, pick(&|c, k| c.moles[k][i]), Tolerance::Relative(1e-3), src));
    }
    let gap = reference.and_then(|c| c.s_gap);
    checks.push(Check::new("flash S_II - S_I", exp.entropy_gap(), gap, Tolerance::Relative(1e-3), src));
}

fn iteration_checks(exp: &ExpectedIterations, cells: &[CellReport], checks: &mut Vec<Check>) {
    let source = exp.source.as_str();
    let mut push = |name: &str, f: Formulation, pair: IterationPair, inner: bool| {
        for (g, want) in
            [(Globalization::LineSearch, pair.line_search), (Globalization::TrustRegion, pair.trust_region)]
        {
            let Some(c) = cells.iter().find(|c| c.formulation == f && c.globalization == g && !c.scaled) else {
                continue;
            };
            let got = c.converged.then_some(if inner { c.inner_iterations } else { c.outer_iterations } as f64);
            let quantity = format!("{name} iterations ({g})");
            checks.push(match want {
                Some(n) => Check::new(quantity, n as f64, got, Tolerance::Iterations, source),
                None => Check {
                    quantity,
                    expected: None,
                    actual: got,
                    tolerance: Tolerance::Iterations,
                    pass: !c.converged,
                    source: source.to_string(),
                },
            });
        }
    };
    push("scl", Formulation::Scl, exp.scl, false);
    push("acl", Formulation::Acl, exp.acl, false);
    push("uvn outer", Formulation::Uvn, exp.uvn_outer, false);
    push("uvn inner", Formulation::Uvn, exp.uvn_inner, true);
}

/// Largest relative difference in volumes and moles between converged cells.
pub fn max_disagreement(cells: &[CellReport]) -> Option<f64> {
    let conv: Vec<_> = cells.iter().filter(|c| c.converged).collect();
    let first = conv.first()?;
    let mut worst: f64 = 0.0;
    for c in &conv[1..] {
        for k in 0..first.volumes.len() {
            worst = worst.max(((c.volumes[k] - first.volumes[k]) / first.volumes[k]).abs());
            for (a, b) in c.moles[k].iter().zip(&first.moles[k]) {
                worst = worst.max(((a - b) / b).abs());
            }
        }
    }
    Some(worst)
}

pub fn run_problem(p: &ProblemDef, matrix: &BenchMatrix, cfg: &BenchConfig) -> ProblemReport {
    let forced = cfg.force_split || p.marginal;
    let mut report = ProblemReport {
        id: p.id.clone(),
        components: p.components.clone(),
        data_match: None,
        forced_split: forced,
        stability: None,
        error: None,
        cells: Vec::new(),
        max_disagreement: None,
        checks: Vec::new(),
    };
    let prepared = match prepare(&p.mixture, &p.spec, forced) {
        Ok(prep) => prep,
        Err(e) => {
            report.error = Some(e.to_string());
            return report;
        }
    };
    let plain = if forced {
        crate::stability::run_stability(&p.mixture, &p.spec.stability_spec()).ok()
    } else {
        Some(prepared.stability.clone())
    };
    if let Some(o) = &plain {
        report.stability = Some(StabilitySummary::from_outcome(o));
        stability_checks(p, o, &mut report.checks);
        report.data_match = p
            .expected
            .as_ref()
            .and_then(|e| e.stability.first())
            .map(|s| (s.temperature - o.reference_t).abs() <= 0.01);
    }
    if prepared.initial.is_none() {
        report.error = Some("reference state is stable; no split attempted".into());
        return report;
    }
    for &formulation in &matrix.formulations {
        for &globalization in &matrix.globalizations {
            let scalings: &[bool] = if formulation == Formulation::Uvn { &matrix.uvn_scaling } else { &[false] };
            for &scaling in scalings {
                let fc = FlashConfig {
                    formulation,
                    solver: SolverConfig {
                        rel_tol: cfg.rel_tol,
                        max_outer: cfg.max_outer,
                        globalization,
                        scaling,
                        ..Default::default()
                    },
                    force_split: forced,
                };
                report.cells.push(cell(&prepared, p, &fc, cfg.repeats));
            }
        }
    }
    flash_checks(p, &report.cells, &mut report.checks);
    if let Some(exp) = p.expected.as_ref().and_then(|e| e.iterations.as_ref()) {
        if (exp.rel_tol - cfg.rel_tol).abs() <= 1e-12 {
            iteration_checks(exp, &report.cells, &mut report.checks);
        }
    }
    report.max_disagreement = max_disagreement(&report.cells);
    report
}

/// Runs every selected problem through the matrix. Failures are recorded in
/// the cells, never propagated.
pub fn run_benchmark(
    problems: &[ProblemDef],
    matrix: &BenchMatrix,
    cfg: &BenchConfig,
) -> Result<BenchReport, BenchError> {
    if cfg.rel_tol.is_nan() || cfg.rel_tol <= 0.0 {
        return Err(BenchError::Config(format!("rel_tol must be positive, got {}", cfg.rel_tol)));
    }
    Ok(BenchReport {
        rel_tol: cfg.rel_tol,
        repeats: cfg.repeats,
        problems: problems.iter().map(|p| run_problem(p, matrix, cfg)).collect(),
    })
}

fn opt(v: Option<f64>, prec: usize) -> String {
    v.map_or("x".into(), |v| format!("{v:.prec$}"))
}

fn sci(v: Option<f64>) -> String {
    v.map_or("x".into(), |v| format!("{v:.6e}"))
}

impl BenchReport {
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        for p in &self.problems {
            let _ = writeln!(s, "== {} ({}) ==", p.id, p.components.join(", "));
            if let Some(st) = &p.stability {
                let best = st.best.as_ref().map_or("none".into(), |b| {
                    let c: Vec<_> = b.conc.iter().map(|c| format!("{c:.4}")).collect();
                    format!("c' = ({}) D = {:.6e} Pa/K", c.join(", "), b.tpd)
                });
                let verdict = if st.is_stable { "stable" } else { "unstable" };
                let _ = writeln!(s, "stability: T = {:.4} K, {verdict}, best {best}", st.reference_t);
            }
            if let Some(m) = p.data_match {
                let _ = writeln!(s, "component data match: {}", if m { "yes" } else { "no" });
            }
            if let Some(d) = p.max_disagreement {
                let _ = writeln!(s, "largest relative spread between converged cells: {d:.3e}");
            }
            if let Some(e) = &p.error {
                let _ = writeln!(s, "note: {e}");
            }
            if !p.cells.is_empty() {
                let _ = writeln!(
                    s,
                    "{:<28} {:>6} {:>6} {:>10} {:>10} {:>14}",
                    "cell", "outer", "inner", "ms", "T [K]", "S_II - S_I"
                );
                for c in &p.cells {
                    let it = |n: usize| if c.converged { n.to_string() } else { "x".into() };
                    let _ = writeln!(
                        s,
                        "{:<28} {:>6} {:>6} {:>10} {:>10} {:>14}",
                        c.label(),
                        it(c.outer_iterations),
                        it(c.inner_iterations),
                        opt(c.mean_ms, 4),
                        opt(c.temperature, 4),
                        sci(c.s_gap)
                    );
                }
            }
            for c in &p.checks {
                let exp = c.expected.map_or("fail".into(), |v| format!("{v:.6e}"));
                let _ = writeln!(
                    s,
                    "  [{}] {:<34} expected {:>14} got {:>14} ({}; {})",
                    if c.pass { "ok" } else { "MISS" },
                    c.quantity,
                    exp,
                    sci(c.actual),
                    c.tolerance,
                    c.source
                );
            }
            s.push('\n');
        }
        s
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialise")
    }

    /// One row per matrix cell.
    pub fn to_csv(&self) -> Result<String, BenchError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| BenchError::Config(e.to_string());
        w.write_record([
            "problem",
            "formulation",
            "globalization",
            "scaled",
            "converged",
            "outer",
            "inner",
            "mean_ms",
            "temperature_K",
            "entropy_gap_J_per_K",
        ])
        .map_err(io)?;
        for p in &self.problems {
            for c in &p.cells {
                let num = |v: Option<f64>| v.map_or(String::new(), |v| format!("{v:e}"));
                w.write_record([
                    p.id.clone(),
                    c.formulation.to_string(),
                    c.globalization.to_string(),
                    c.scaled.to_string(),
                    c.converged.to_string(),
                    c.outer_iterations.to_string(),
                    c.inner_iterations.to_string(),
                    num(c.mean_ms),
                    num(c.temperature),
                    num(c.s_gap),
                ])
                .map_err(io)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| BenchError::Config(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
    }
}
