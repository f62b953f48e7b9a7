//! UVN objective: total entropy over per-phase `(N, V, U)`, each phase
//! temperature obtained by inverting `U(T, V, N)`.

use nalgebra::{DMatrix, DVector};

use super::layout::{unpack_uvn, Phases};
use super::tvn::{equilibrium_reached, Derivs};
use super::{FlashError, FlashSpec, Formulation};
use crate::eos::{Mixture, Order, Potential};
use crate::solver::Problem;

/// Entropy of one phase and its derivatives in `(N_1..N_n, V, U)`, from a
/// Helmholtz jet at the inverted temperature.
fn phase_derivs(mix: &Mixture, t: f64, v: f64, moles: &[f64], order: Order) -> Result<Derivs, FlashError> {
    let n = mix.n();
    let m = n + 2;
    if order == Order::Value {
        let s = mix.jet(Potential::Entropy, t, v, moles, Order::Value)?.value;
        return Ok(Derivs { value: s, grad: DVector::zeros(0), hess: DMatrix::zeros(0, 0) });
    }
    let a = mix.jet(Potential::Helmholtz, t, v, moles, order)?;
    let jt = n + 1;
    let mut grad = DVector::zeros(m);
    for l in 0..=n {
        grad[l] = -a.grad[l] / t;
    }
    grad[n + 1] = 1.0 / t;
    let mut hess = DMatrix::zeros(0, 0);
    if order == Order::Hessian {
        hess = DMatrix::zeros(m, m);
        let cv = -t * a.h(jt, jt);
        // ∂U/∂z at fixed T for z in (N, V)
        let du: Vec<f64> = (0..=n).map(|l| a.grad[l] - t * a.h(l, jt)).collect();
        let w = 1.0 / (t * t * cv);
        for l in 0..=n {
            for l2 in 0..=n {
                hess[(l, l2)] = -a.h(l, l2) / t - du[l] * du[l2] * w;
            }
            hess[(l, n + 1)] = du[l] * w;
            hess[(n + 1, l)] = du[l] * w;
        }
        hess[(n + 1, n + 1)] = -w;
    }
    Ok(Derivs { value: -a.d_t(), grad, hess })
}

/// Reduced entropy `sum_k S(U^k, V^k, N^k)`. Every inversion starts from the
/// same per-phase temperatures.
#[derive(Clone, Debug)]
pub struct UvnObjective<'a> {
    mix: &'a Mixture,
    spec: &'a FlashSpec,
    scale: Option<DVector<f64>>,
    temps: Vec<f64>,
    inner: usize,
    cache: Option<(Vec<f64>, Vec<f64>)>,
}

impl<'a> UvnObjective<'a> {
    /// With `scaling`, the solver sees every unknown divided by its total.
    pub fn new(mix: &'a Mixture, spec: &'a FlashSpec, scaling: bool) -> Self {
        let scale = scaling.then(|| {
            let mut per_phase: Vec<f64> = spec.total_moles.clone();
            per_phase.push(spec.total_v);
            per_phase.push(spec.total_u.abs());
            DVector::from_iterator(
                (spec.phases - 1) * per_phase.len(),
                (0..spec.phases - 1).flat_map(|_| per_phase.clone()),
            )
        });
        UvnObjective { mix, spec, scale, temps: Vec::new(), inner: 0, cache: None }
    }

    /// Starting temperatures for the per-phase inversions (300 K otherwise).
    pub fn start_temperatures(&mut self, temps: Vec<f64>) {
        self.temps = temps;
    }

    /// Newton steps spent in temperature inversions so far.
    pub fn inner_iterations(&self) -> usize {
        self.inner
    }

    pub fn to_solver(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.scale {
            Some(s) => x.component_div(s),
            None => x.clone(),
        }
    }

    pub fn from_solver(&self, x: &DVector<f64>) -> DVector<f64> {
        match &self.scale {
            Some(s) => x.component_mul(s),
            None => x.clone(),
        }
    }

    fn temperatures(&mut self, x: &[f64], ph: &Phases) -> Result<Vec<f64>, FlashError> {
        if let Some((cx, ct)) = &self.cache {
            if cx.as_slice() == x {
                return Ok(ct.clone());
            }
        }
        let mut out = Vec::with_capacity(ph.volumes.len());
        for k in 0..ph.volumes.len() {
            let guess = self.temps.get(k).copied().unwrap_or(300.0);
            let sol = self.mix.solve_temperature_precise(ph.energies[k], ph.volumes[k], &ph.moles[k], guess)?;
            self.inner += sol.iterations - 1;
            out.push(sol.temperature);
        }
        self.cache = Some((x.to_vec(), out.clone()));
        Ok(out)
    }

    pub(crate) fn derivs(&mut self, x: &[f64], order: Order) -> Result<Derivs, FlashError> {
        let ph = unpack_uvn(self.mix, self.spec, x)?;
        let temps = self.temperatures(x, &ph)?;
        let phases = (0..temps.len())
            .map(|k| phase_derivs(self.mix, temps[k], ph.volumes[k], &ph.moles[k], order))
            .collect::<Result<Vec<_>, _>>()?;
        let value = phases.iter().map(|d| d.value).sum();
        let p = phases.len();
        let m = self.mix.n() + 2;
        let dim = (p - 1) * m;
        let mut out = Derivs { value, grad: DVector::zeros(0), hess: DMatrix::zeros(0, 0) };
        if order == Order::Value {
            return Ok(out);
        }
        let res = &phases[p - 1];
        out.grad = DVector::zeros(dim);
        for k in 0..p - 1 {
            for l in 0..m {
                out.grad[k * m + l] = phases[k].grad[l] - res.grad[l];
            }
        }
        if order == Order::Hessian {
            out.hess = DMatrix::zeros(dim, dim);
            for k in 0..p - 1 {
                for k2 in 0..p - 1 {
                    for l in 0..m {
                        for l2 in 0..m {
                            let own = if k == k2 { phases[k].hess[(l, l2)] } else { 0.0 };
                            out.hess[(k * m + l, k2 * m + l2)] = own + res.hess[(l, l2)];
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn value(&mut self, x: &DVector<f64>) -> Result<f64, FlashError> {
        Ok(self.derivs(x.as_slice(), Order::Value)?.value)
    }

    pub fn gradient(&mut self, x: &DVector<f64>) -> Result<DVector<f64>, FlashError> {
        Ok(self.derivs(x.as_slice(), Order::Gradient)?.grad)
    }

    pub fn hessian(&mut self, x: &DVector<f64>) -> Result<DMatrix<f64>, FlashError> {
        Ok(self.derivs(x.as_slice(), Order::Hessian)?.hess)
    }
}

impl Problem for UvnObjective<'_> {
    fn gradient(&mut self, xs: &DVector<f64>) -> Option<DVector<f64>> {
        let x = self.from_solver(xs);
        let g = UvnObjective::gradient(self, &x).ok()?;
        Some(match &self.scale {
            Some(s) => g.component_mul(s),
            None => g,
        })
    }

    fn hessian(&mut self, xs: &DVector<f64>) -> Option<DMatrix<f64>> {
        let x = self.from_solver(xs);
        let h = UvnObjective::hessian(self, &x).ok()?;
        Some(match &self.scale {
            Some(s) => DMatrix::from_fn(h.nrows(), h.ncols(), |i, j| s[i] * h[(i, j)] * s[j]),
            None => h,
        })
    }

    fn feasible(&mut self, xs: &DVector<f64>) -> bool {
        unpack_uvn(self.mix, self.spec, self.from_solver(xs).as_slice()).is_ok()
    }

    fn accept(&mut self, xs: &DVector<f64>) -> bool {
        equilibrium_reached(self.mix, self.spec, &self.from_solver(xs), Formulation::Uvn)
    }
}

/// `S_red` at a UVN optimizer vector.
pub fn objective_uvn(mix: &Mixture, spec: &FlashSpec, x: &DVector<f64>) -> Result<f64, FlashError> {
    UvnObjective::new(mix, spec, false).value(x)
}
