//! Command-line front end: `stability`, `flash` and `bench`.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use super::{builtin_problems_with, load_problem, run_benchmark, BenchConfig, BenchError, BenchMatrix, ProblemDef};
use crate::eos::{ComponentDatabase, EosError};
use crate::flash::{flash, FlashConfig, FlashError, FlashSolution, Formulation};
use crate::solver::{Globalization, SolverConfig};
use crate::stability::{run_stability, StabilityError, StabilityOutcome};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Parser, Debug)]
#[command(name = "uvflash", version, about = "UVN flash and phase stability for Peng-Robinson mixtures")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Options,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Tangent plane stability of the single-phase reference state.
    Stability { problem: String },
    /// Two-phase split at the specified (U, V, N).
    Flash { problem: String },
    /// Run the formulation x globalization matrix on built-in problems.
    Bench {
        #[arg(long, value_delimiter = ',', num_args = 1..)]
        problems: Vec<String>,
    },
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Table,
    Json,
    Csv,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum GlobalizationArg {
    Linesearch,
    Trustregion,
}

impl From<GlobalizationArg> for Globalization {
    fn from(g: GlobalizationArg) -> Self {
        match g {
            GlobalizationArg::Linesearch => Globalization::LineSearch,
            GlobalizationArg::Trustregion => Globalization::TrustRegion,
        }
    }
}

#[derive(Args, Debug)]
pub struct Options {
    #[arg(long, global = true, default_value = "acl")]
    pub formulation: Formulation,
    #[arg(long, global = true, value_enum, default_value = "linesearch")]
    pub globalization: GlobalizationArg,
    /// Relative gradient tolerance (default 1e-8 for flash, 1e-6 for bench).
    #[arg(long, global = true)]
    pub tol: Option<f64>,
    /// Scale UVN variables by the specified totals.
    #[arg(long, global = true)]
    pub scale_uvn: bool,
    #[arg(long, global = true, default_value_t = 100)]
    pub repeats: usize,
    /// Component data file (JSON) replacing the built-in table.
    #[arg(long, global = true)]
    pub components: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value = "table")]
    pub output: OutputFormat,
    /// Write the report here instead of standard output.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Split even when the stability test finds the state stable.
    #[arg(long, global = true)]
    pub force_split: bool,
}

enum Failure {
    Config(String),
    NotConverged(String),
}

impl From<BenchError> for Failure {
    fn from(e: BenchError) -> Self {
        match e {
            BenchError::Flash(f) => f.into(),
            other => Failure::Config(other.to_string()),
        }
    }
}

impl From<FlashError> for Failure {
    fn from(e: FlashError) -> Self {
        let msg = e.to_string();
        match e {
            FlashError::InvalidSpec(_)
            | FlashError::Length { .. }
            | FlashError::Stability(StabilityError::InvalidSpec(_))
            | FlashError::Eos(
                EosError::UnknownComponent(_)
                | EosError::InvalidComponent { .. }
                | EosError::InvalidKij(_)
                | EosError::Data(_),
            ) => Failure::Config(msg),
            _ => Failure::NotConverged(msg),
        }
    }
}

impl From<StabilityError> for Failure {
    fn from(e: StabilityError) -> Self {
        FlashError::from(e).into()
    }
}

/// Parses `args` (including the program name) and runs the command; returns
/// the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Config(m)) => {
            eprintln!("error: {m}");
            EXIT_CONFIG
        }
        Err(Failure::NotConverged(m)) => {
            eprintln!("error: {m}");
            EXIT_NOT_CONVERGED
        }
    }
}

fn database(opts: &Options) -> Result<ComponentDatabase, Failure> {
    match &opts.components {
        Some(p) => ComponentDatabase::load(p).map_err(|e| Failure::Config(e.to_string())),
        None => Ok(ComponentDatabase::builtin()),
    }
}

fn emit(opts: &Options, text: &str) -> Result<(), Failure> {
    match &opts.out {
        Some(p) => std::fs::write(p, text).map_err(|e| Failure::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn check_tol(tol: f64) -> Result<f64, Failure> {
    if tol.is_finite() && tol > 0.0 {
        Ok(tol)
    } else {
        Err(Failure::Config(format!("--tol must be positive, got {tol}")))
    }
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let opts = &cli.opts;
    let db = database(opts)?;
    match &cli.command {
        Command::Stability { problem } => {
            let p = load_problem(problem, &db)?;
            let out = run_stability(&p.mixture, &p.spec.stability_spec())?;
            emit(opts, &format_stability(&p, &out, opts.output)?)
        }
        Command::Flash { problem } => {
            let p = load_problem(problem, &db)?;
            let cfg = FlashConfig {
                formulation: opts.formulation,
                solver: SolverConfig {
                    rel_tol: check_tol(opts.tol.unwrap_or(1e-8))?,
                    globalization: opts.globalization.into(),
                    scaling: opts.scale_uvn,
                    ..Default::default()
                },
                force_split: opts.force_split,
            };
            let sol = flash(&p.mixture, &p.spec, &cfg)?;
            emit(opts, &format_flash(&p, &sol, opts.output)?)
        }
        Command::Bench { problems } => {
            let all = builtin_problems_with(&db)?;
            let selected: Vec<ProblemDef> = if problems.is_empty() {
                all
            } else {
                problems.iter().map(|name| load_problem(name, &db)).collect::<Result<_, _>>()?
            };
            let cfg = BenchConfig {
                rel_tol: check_tol(opts.tol.unwrap_or(1e-6))?,
                repeats: opts.repeats,
                force_split: opts.force_split,
                ..Default::default()
            };
            let report = run_benchmark(&selected, &BenchMatrix::default(), &cfg)?;
            let text = match opts.output {
                OutputFormat::Table => report.to_table(),
                OutputFormat::Json => report.to_json() + "\n",
                OutputFormat::Csv => report.to_csv()?,
            };
            emit(opts, &text)
        }
    }
}

fn csv_text(rows: Vec<Vec<String>>) -> Result<String, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.write_record(&r).map_err(|e| Failure::Config(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Failure::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn format_stability(p: &ProblemDef, out: &StabilityOutcome, format: OutputFormat) -> Result<String, Failure> {
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(out).expect("serialisable") + "\n"),
        OutputFormat::Csv => {
            let mut header: Vec<String> = vec!["trial".into()];
            header.extend(p.components.iter().map(|c| format!("c_{c}_mol_per_m3")));
            header.extend(["tpd_Pa_per_K", "converged", "trivial", "iterations"].map(String::from));
            let mut rows = vec![header];
            for (i, t) in out.trials.iter().enumerate() {
                let mut r = vec![i.to_string()];
                r.extend(t.conc.iter().map(|c| format!("{c:e}")));
                r.extend([
                    format!("{:e}", t.tpd),
                    t.converged.to_string(),
                    t.trivial.to_string(),
                    t.iterations.to_string(),
                ]);
                rows.push(r);
            }
            csv_text(rows)
        }
        OutputFormat::Table => {
            let mut s = String::new();
            let _ = writeln!(s, "{}: T = {:.4} K, P = {:.6e} Pa", p.id, out.reference_t, out.reference_props.pressure);
            let _ = writeln!(s, "{:>5}  {:<48} {:>14} {:>5} {:>5}", "trial", "c' [mol/m3]", "D [Pa/K]", "conv", "iter");
            for (i, t) in out.trials.iter().enumerate() {
                let c: Vec<_> = t.conc.iter().map(|c| format!("{c:.6}")).collect();
                let tag = if t.trivial { " (trivial)" } else { "" };
                let _ = writeln!(
                    s,
                    "{:>5}  {:<48} {:>14.6e} {:>5} {:>5}{tag}",
                    i,
                    c.join(", "),
                    t.tpd,
                    if t.converged { "yes" } else { "no" },
                    t.iterations
                );
            }
            let verdict = match out.best_trial() {
                Some(b) => format!("unstable (max D = {:.6e} Pa/K)", b.tpd),
                None => "stable".into(),
            };
            let _ = writeln!(s, "verdict: {verdict}");
            Ok(s)
        }
    }
}

fn format_flash(p: &ProblemDef, sol: &FlashSolution, format: OutputFormat) -> Result<String, Failure> {
    let pressure = |k: usize| p.mixture.pressure(&sol.split.phases[k]).unwrap_or(f64::NAN);
    match format {
        OutputFormat::Json => Ok(serde_json::to_string_pretty(sol).expect("serialisable") + "\n"),
        OutputFormat::Csv => {
            let mut header: Vec<String> = ["phase", "T_K", "V_m3", "U_J", "P_Pa"].map(String::from).to_vec();
            header.extend(p.components.iter().map(|c| format!("N_{c}_mol")));
            let mut rows = vec![header];
            for (k, ph) in sol.split.phases.iter().enumerate() {
                let mut r = vec![
                    k.to_string(),
                    format!("{:e}", ph.temperature),
                    format!("{:e}", ph.volume),
                    format!("{:e}", sol.split.energies[k]),
                    format!("{:e}", pressure(k)),
                ];
                r.extend(ph.moles.iter().map(|n| format!("{n:e}")));
                rows.push(r);
            }
            csv_text(rows)
        }
        OutputFormat::Table => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{}: {} flash, {} outer / {} inner iterations{}",
                p.id,
                sol.formulation,
                sol.outer_iterations,
                sol.inner_iterations,
                if sol.split_found { "" } else { " (stable, single phase)" }
            );
            for (k, ph) in sol.split.phases.iter().enumerate() {
                let n: Vec<_> = p.components.iter().zip(&ph.moles).map(|(c, n)| format!("{c} {n:.6}")).collect();
                let _ = writeln!(
                    s,
                    "phase {k}: T = {:.6} K, V = {:.6} cm3, U = {:.6} J, P = {:.6e} Pa, N = [{}]",
                    ph.temperature,
                    ph.volume * 1e6,
                    sol.split.energies[k],
                    pressure(k),
                    n.join(", ")
                );
            }
            let _ = writeln!(
                s,
                "S_I = {:.6} J/K, S_II = {:.6} J/K, S_II - S_I = {:.6e} J/K",
                sol.s_single,
                sol.s_two,
                sol.s_two - sol.s_single
            );
            let r = &sol.residuals;
            let _ = writeln!(s, "residuals: |dmu| = {:.3e} J/mol, |dP| = {:.3e} Pa, |C| = {:.3e} J", r.dmu, r.dp, r.c);
            Ok(s)
        }
    }
}
