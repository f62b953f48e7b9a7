//! Damped Newton iteration for `g(x) = 0` with a backtracking line search or a
//! dogleg trust region on the merit `½‖g‖²`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Globalization {
    LineSearch,
    TrustRegion,
}

impl std::fmt::Display for Globalization {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Globalization::LineSearch => "linesearch",
            Globalization::TrustRegion => "trustregion",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_outer: usize,
    pub globalization: Globalization,
    pub initial_tr_radius: f64,
    pub scaling: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_tol: 1e-8,
            max_outer: 200,
            globalization: Globalization::LineSearch,
            initial_tr_radius: 1.0,
            scaling: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Error, Serialize, Deserialize)]
pub enum SolverFailure {
    #[error("no convergence within {0} iterations")]
    MaxIterations(usize),
    #[error("line search stalled at step {0:e}")]
    LineSearch(f64),
    #[error("trust region collapsed to {0:e}")]
    TrustRegion(f64),
    #[error("no feasible point along the Newton direction")]
    Infeasible,
    #[error("Newton system could not be factorised")]
    Singular,
    #[error("starting point is infeasible")]
    InfeasibleStart,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverResult {
    pub x_final: DVector<f64>,
    pub converged: bool,
    pub outer_iterations: usize,
    pub residual_norm_history: Vec<f64>,
    pub failure_reason: Option<SolverFailure>,
    pub gradient_evaluations: usize,
    pub hessian_evaluations: usize,
    /// Number of Newton systems that needed diagonal damping.
    pub regularized_steps: usize,
}

/// Root-finding problem: `gradient` is the residual, `hessian` its Jacobian.
/// Both return `None` where the point is outside the domain.
pub trait Problem {
    fn gradient(&mut self, x: &DVector<f64>) -> Option<DVector<f64>>;
    fn hessian(&mut self, x: &DVector<f64>) -> Option<DMatrix<f64>>;
    fn feasible(&mut self, _x: &DVector<f64>) -> bool {
        true
    }
    /// Extra condition a point must meet, besides the gradient norm, to count
    /// as converged.
    fn accept(&mut self, _x: &DVector<f64>) -> bool {
        true
    }
}

struct Closures<G, H, F> {
    g: G,
    h: H,
    f: F,
}

impl<G, H, F> Problem for Closures<G, H, F>
where
    G: FnMut(&DVector<f64>) -> Option<DVector<f64>>,
    H: FnMut(&DVector<f64>) -> Option<DMatrix<f64>>,
    F: FnMut(&DVector<f64>) -> bool,
{
    fn gradient(&mut self, x: &DVector<f64>) -> Option<DVector<f64>> {
        (self.g)(x)
    }
    fn hessian(&mut self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        (self.h)(x)
    }
    fn feasible(&mut self, x: &DVector<f64>) -> bool {
        (self.f)(x)
    }
}

const C1: f64 = 1e-4;
const RHO_LO: f64 = 0.1;
const RHO_HI: f64 = 0.5;
const ALPHA_MIN: f64 = 1e-12;
const MAX_HALVINGS: usize = 40;
const ETA: f64 = 1e-4;

/// Newton's method on closures.
pub fn newton<G, H, F>(g: G, h: H, feasible: F, x0: DVector<f64>, cfg: &SolverConfig) -> SolverResult
where
    G: FnMut(&DVector<f64>) -> Option<DVector<f64>>,
    H: FnMut(&DVector<f64>) -> Option<DMatrix<f64>>,
    F: FnMut(&DVector<f64>) -> bool,
{
    solve(&mut Closures { g, h, f: feasible }, x0, cfg)
}

/// Solves `H dx = rhs` by LU, adding `λ I` with `λ = 1e-8 ‖H‖∞` (doubled on
/// failure) when the factorisation is singular. Returns the step and whether
/// damping was needed.
pub fn solve_newton_system(h: &DMatrix<f64>, rhs: &DVector<f64>) -> Option<(DVector<f64>, bool)> {
    let good = |x: &DVector<f64>| x.iter().all(|v| v.is_finite());
    if let Some(x) = h.clone().lu().solve(rhs) {
        if good(&x) {
            return Some((x, false));
        }
    }
    let norm = h.row_iter().map(|r| r.iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
    let mut lambda = 1e-8 * norm.max(f64::MIN_POSITIVE);
    for _ in 0..200 {
        let mut damped = h.clone();
        for i in 0..h.nrows() {
            damped[(i, i)] += lambda;
        }
        if let Some(x) = damped.lu().solve(rhs) {
            if good(&x) {
                return Some((x, true));
            }
        }
        lambda *= 2.0;
    }
    None
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn merit(g: &DVector<f64>) -> f64 {
    0.5 * g.norm_squared()
}

pub fn solve<P: Problem>(p: &mut P, x0: DVector<f64>, cfg: &SolverConfig) -> SolverResult {
    let mut res = SolverResult {
        x_final: x0.clone(),
        converged: false,
        outer_iterations: 0,
        residual_norm_history: Vec::new(),
        failure_reason: None,
        gradient_evaluations: 0,
        hessian_evaluations: 0,
        regularized_steps: 0,
    };
    let g0 = if p.feasible(&x0) { p.gradient(&x0) } else { None };
    res.gradient_evaluations += 1;
    let Some(mut g) = g0 else {
        res.failure_reason = Some(SolverFailure::InfeasibleStart);
        return res;
    };
    let g0norm = inf_norm(&g);
    res.residual_norm_history.push(g0norm);
    let tol = cfg.rel_tol * g0norm.max(1.0);
    if g0norm <= tol && p.accept(&x0) {
        res.converged = true;
        return res;
    }
    let mut x = x0;
    let mut tr = TrustState::default();
    let mut hess: Option<DMatrix<f64>> = None;
    for it in 1..=cfg.max_outer {
        res.outer_iterations = it;
        let h = match hess.take() {
            Some(h) => h,
            None => {
                res.hessian_evaluations += 1;
                match p.hessian(&x) {
                    Some(h) => h,
                    None => {
                        res.failure_reason = Some(SolverFailure::Singular);
                        break;
                    }
                }
            }
        };
        let Some((dx, damped)) = solve_newton_system(&h, &-&g) else {
            res.failure_reason = Some(SolverFailure::Singular);
            break;
        };
        res.regularized_steps += usize::from(damped);
        let step = match cfg.globalization {
            Globalization::LineSearch => line_search(p, &x, &g, &h, &dx, &mut res),
            Globalization::TrustRegion => trust_region(p, &x, &g, &h, &dx, cfg, &mut tr, &mut res),
        };
        match step {
            Ok(Step::Accepted { x: xn, g: gn, h: hn }) => {
                x = xn;
                g = gn;
                hess = hn;
            }
            Ok(Step::Rejected) => hess = Some(h),
            Err(e) => {
                res.failure_reason = Some(e);
                break;
            }
        }
        let gn = inf_norm(&g);
        res.residual_norm_history.push(gn);
        if gn <= tol && p.accept(&x) {
            res.converged = true;
            break;
        }
    }
    if !res.converged && res.failure_reason.is_none() {
        res.failure_reason = Some(SolverFailure::MaxIterations(cfg.max_outer));
    }
    res.x_final = x;
    res
}

enum Step {
    Accepted { x: DVector<f64>, g: DVector<f64>, h: Option<DMatrix<f64>> },
    Rejected,
}

/// Cubic backtracking on `φ(α) = ½‖g(x + α dx)‖²`, after halving `α` until the
/// trial point is inside the domain.
fn line_search<P: Problem>(
    p: &mut P,
    x: &DVector<f64>,
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    dx: &DVector<f64>,
    res: &mut SolverResult,
) -> Result<Step, SolverFailure> {
    let phi0 = merit(g);
    let dphi0 = g.dot(&(h * dx));
    let mut eval = |alpha: f64, res: &mut SolverResult| -> Option<(DVector<f64>, DVector<f64>, f64)> {
        let xt = x + dx * alpha;
        if !p.feasible(&xt) {
            return None;
        }
        res.gradient_evaluations += 1;
        let gt = p.gradient(&xt)?;
        let m = merit(&gt);
        m.is_finite().then_some((xt, gt, m))
    };
    let (mut a1, mut a2) = (1.0, 1.0);
    let mut trial = eval(a2, res);
    let mut halvings = 0;
    while trial.is_none() {
        halvings += 1;
        if halvings > MAX_HALVINGS {
            return Err(SolverFailure::Infeasible);
        }
        a1 = a2;
        a2 *= 0.5;
        trial = eval(a2, res);
    }
    let (mut xt, mut gt, mut phi1) = trial.unwrap();
    if dphi0 >= 0.0 {
        // not a descent direction for the merit; take the feasible Newton step
        return Ok(Step::Accepted { x: xt, g: gt, h: None });
    }
    let mut phi_prev = phi0;
    let mut iteration = 0;
    while phi1 > phi0 + C1 * a2 * dphi0 {
        iteration += 1;
        let a_tmp = if iteration == 1 {
            -(dphi0 * a2 * a2) / (2.0 * (phi1 - phi0 - dphi0 * a2))
        } else {
            let div = 1.0 / (a1 * a1 * a2 * a2 * (a2 - a1));
            let r1 = phi1 - phi0 - dphi0 * a2;
            let r0 = phi_prev - phi0 - dphi0 * a1;
            let a = (a1 * a1 * r1 - a2 * a2 * r0) * div;
            let b = (-a1 * a1 * a1 * r1 + a2 * a2 * a2 * r0) * div;
            if a.abs() <= f64::EPSILON + f64::EPSILON.sqrt() * a.abs() {
                dphi0 / (2.0 * b)
            } else {
                let d = (b * b - 3.0 * a * dphi0).max(0.0);
                (-b + d.sqrt()) / (3.0 * a)
            }
        };
        a1 = a2;
        let a_tmp = if a_tmp.is_nan() { a2 * RHO_HI } else { a_tmp.min(a2 * RHO_HI) };
        a2 = a_tmp.max(a2 * RHO_LO);
        if a2 < ALPHA_MIN {
            return Err(SolverFailure::LineSearch(a2));
        }
        phi_prev = phi1;
        match eval(a2, res) {
            Some((xn, gn, m)) => {
                xt = xn;
                gt = gn;
                phi1 = m;
            }
            None => phi1 = f64::INFINITY,
        }
    }
    Ok(Step::Accepted { x: xt, g: gt, h: None })
}

#[derive(Default)]
struct TrustState {
    delta: f64,
    scale: Option<DVector<f64>>,
}

fn column_norms(h: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(h.ncols(), h.column_iter().map(|c| c.norm()))
}

fn wnorm(d: &DVector<f64>, x: &DVector<f64>) -> f64 {
    d.component_mul(x).norm()
}

/// One dogleg trust-region step with column-norm scaling.
#[allow(clippy::too_many_arguments)]
fn trust_region<P: Problem>(
    p: &mut P,
    x: &DVector<f64>,
    g: &DVector<f64>,
    h: &DMatrix<f64>,
    newton: &DVector<f64>,
    cfg: &SolverConfig,
    tr: &mut TrustState,
    res: &mut SolverResult,
) -> Result<Step, SolverFailure> {
    let d = match tr.scale.take() {
        Some(d) => d,
        None => {
            let d = column_norms(h).map(|v| if v == 0.0 { 1.0 } else { v });
            tr.delta = cfg.initial_tr_radius * wnorm(&d, x);
            if tr.delta == 0.0 {
                tr.delta = cfg.initial_tr_radius;
            }
            d
        }
    };
    let step = if wnorm(&d, newton) <= tr.delta {
        newton.clone()
    } else {
        let grad = (h.transpose() * g).component_div(&d.component_mul(&d));
        let gn = wnorm(&d, &grad);
        let jg = h * &grad;
        let cauchy = &grad * (-gn * gn / jg.norm_squared());
        if wnorm(&d, &cauchy) >= tr.delta {
            &grad * (-tr.delta / gn)
        } else {
            let diff = newton - &cauchy;
            let a = d.component_mul(&diff).norm_squared();
            let b = 2.0 * d.component_mul(&cauchy).dot(&d.component_mul(&diff));
            let c = d.component_mul(&cauchy).norm_squared() - tr.delta * tr.delta;
            let tau = (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a);
            &cauchy + diff * tau
        }
    };
    let xt = x + &step;
    let trial = if p.feasible(&xt) {
        res.gradient_evaluations += 1;
        p.gradient(&xt).filter(|v| v.iter().all(|x| x.is_finite()))
    } else {
        None
    };
    let predicted = g.norm_squared() - (g + h * &step).norm_squared();
    let rho = match &trial {
        Some(gt) => (g.norm_squared() - gt.norm_squared()) / predicted,
        None => f64::NEG_INFINITY,
    };
    let dp = wnorm(&d, &step);
    let mut d = d;
    let out = if rho > ETA { trial.map(|gt| (xt, gt)) } else { None };
    if rho < 0.25 {
        tr.delta = 0.25 * tr.delta.min(dp);
    } else if rho > 0.75 {
        tr.delta = tr.delta.max(2.0 * dp);
    }
    if tr.delta < 1e-14 * wnorm(&d, x).max(1e-300) {
        return Err(SolverFailure::TrustRegion(tr.delta));
    }
    match out {
        Some((xt, gt)) => {
            res.hessian_evaluations += 1;
            let Some(hn) = p.hessian(&xt) else {
                return Err(SolverFailure::Singular);
            };
            let cn = column_norms(&hn);
            for j in 0..d.len() {
                d[j] = (0.1 * d[j]).max(cn[j]);
            }
            tr.scale = Some(d);
            Ok(Step::Accepted { x: xt, g: gt, h: Some(hn) })
        }
        None => {
            tr.scale = Some(d);
            Ok(Step::Rejected)
        }
    }
}
