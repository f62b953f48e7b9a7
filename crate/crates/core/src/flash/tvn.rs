//! TVN Lagrangians `L_SCL = sum S - (sum U - U*) / T` and
//! `L_ACL = (U* - sum A) / T` with gradients and Hessians.

use nalgebra::{DMatrix, DVector};

use super::layout::{decode, unpack_tvn, Phases};
use super::{equilibrium_residuals, FlashError, FlashSpec, Formulation, Lagrangian};
use crate::eos::{Jet, Mixture, Order, Potential};
use crate::solver::Problem;

/// A scalar with its gradient and Hessian in the optimizer variables.
#[derive(Clone, Debug)]
pub(crate) struct Derivs {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

/// Sums per-phase jets of one potential into optimizer coordinates, with the
/// residual phase depending on the others through the totals.
fn assemble(jets: &[Jet], n: usize, order: Order) -> Derivs {
    let p = jets.len();
    let m = (p - 1) * (n + 1) + 1;
    let it = m - 1;
    let jt = n + 1;
    let local = |l: usize| if l == 0 { n } else { l - 1 };
    let res = &jets[p - 1];
    let mut d = Derivs {
        value: jets.iter().map(|j| j.value).sum(),
        grad: DVector::zeros(if order >= Order::Gradient { m } else { 0 }),
        hess: DMatrix::zeros(if order >= Order::Hessian { m } else { 0 }, if order >= Order::Hessian { m } else { 0 }),
    };
    if order < Order::Gradient {
        return d;
    }
    for (k, jet) in jets[..p - 1].iter().enumerate() {
        for l in 0..=n {
            d.grad[k * (n + 1) + l] = jet.grad[local(l)] - res.grad[local(l)];
        }
    }
    d.grad[it] = jets.iter().map(|j| j.d_t()).sum();
    if order < Order::Hessian {
        return d;
    }
    for (k, jet) in jets[..p - 1].iter().enumerate() {
        for l in 0..=n {
            let r = k * (n + 1) + l;
            for k2 in 0..p - 1 {
                for l2 in 0..=n {
                    let c = k2 * (n + 1) + l2;
                    let own = if k == k2 { jet.h(local(l), local(l2)) } else { 0.0 };
                    d.hess[(r, c)] = own + res.h(local(l), local(l2));
                }
            }
            let v = jet.h(local(l), jt) - res.h(local(l), jt);
            d.hess[(r, it)] = v;
            d.hess[(it, r)] = v;
        }
    }
    d.hess[(it, it)] = jets.iter().map(|j| j.h(jt, jt)).sum();
    d
}

/// `W / T` where `T` is the last optimizer variable.
fn over_t(w: &Derivs, t: f64, order: Order) -> Derivs {
    let mut out = Derivs { value: w.value / t, grad: w.grad.clone(), hess: w.hess.clone() };
    if order < Order::Gradient {
        return out;
    }
    let it = w.grad.len() - 1;
    out.grad /= t;
    out.grad[it] = w.grad[it] / t - w.value / (t * t);
    if order < Order::Hessian {
        return out;
    }
    out.hess /= t;
    for i in 0..it {
        let v = w.hess[(i, it)] / t - w.grad[i] / (t * t);
        out.hess[(i, it)] = v;
        out.hess[(it, i)] = v;
    }
    out.hess[(it, it)] = w.hess[(it, it)] / t - 2.0 * w.grad[it] / (t * t) + 2.0 * w.value / (t * t * t);
    out
}

fn jets(mix: &Mixture, kind: Potential, t: f64, ph: &Phases, order: Order) -> Result<Vec<Jet>, FlashError> {
    ph.volumes.iter().zip(&ph.moles).map(|(v, m)| mix.jet(kind, t, *v, m, order).map_err(FlashError::from)).collect()
}

/// Evaluates the selected Lagrangian at a TVN optimizer vector.
#[derive(Clone, Debug)]
pub struct TvnObjective<'a> {
    mix: &'a Mixture,
    spec: &'a FlashSpec,
    form: Lagrangian,
}

impl<'a> TvnObjective<'a> {
    pub fn new(mix: &'a Mixture, spec: &'a FlashSpec, form: Lagrangian) -> Self {
        TvnObjective { mix, spec, form }
    }

    pub(crate) fn derivs(&self, x: &[f64], order: Order) -> Result<Derivs, FlashError> {
        let (t, ph) = unpack_tvn(self.mix, self.spec, x)?;
        let n = self.mix.n();
        let u_star = self.spec.total_u;
        match self.form {
            Lagrangian::Acl => {
                let mut w = assemble(&jets(self.mix, Potential::Helmholtz, t, &ph, order)?, n, order);
                w.value = u_star - w.value;
                w.grad.neg_mut();
                w.hess.neg_mut();
                Ok(over_t(&w, t, order))
            }
            Lagrangian::Scl => {
                let s = assemble(&jets(self.mix, Potential::Entropy, t, &ph, order)?, n, order);
                let mut w = assemble(&jets(self.mix, Potential::Energy, t, &ph, order)?, n, order);
                w.value = u_star - w.value;
                w.grad.neg_mut();
                w.hess.neg_mut();
                let q = over_t(&w, t, order);
                Ok(Derivs { value: s.value + q.value, grad: s.grad + q.grad, hess: s.hess + q.hess })
            }
        }
    }

    pub fn value(&self, x: &DVector<f64>) -> Result<f64, FlashError> {
        Ok(self.derivs(x.as_slice(), Order::Value)?.value)
    }

    pub fn gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>, FlashError> {
        Ok(self.derivs(x.as_slice(), Order::Gradient)?.grad)
    }

    pub fn hessian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>, FlashError> {
        Ok(self.derivs(x.as_slice(), Order::Hessian)?.hess)
    }
}

impl Problem for TvnObjective<'_> {
    fn gradient(&mut self, x: &DVector<f64>) -> Option<DVector<f64>> {
        TvnObjective::gradient(self, x).ok()
    }

    fn hessian(&mut self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        TvnObjective::hessian(self, x).ok()
    }

    fn feasible(&mut self, x: &DVector<f64>) -> bool {
        unpack_tvn(self.mix, self.spec, x.as_slice()).is_ok()
    }

    fn accept(&mut self, x: &DVector<f64>) -> bool {
        equilibrium_reached(self.mix, self.spec, x, Formulation::Acl)
    }
}

/// Whether the split at `x` meets the pressure, chemical potential and energy
/// tolerances.
pub(crate) fn equilibrium_reached(mix: &Mixture, spec: &FlashSpec, x: &DVector<f64>, form: Formulation) -> bool {
    decode(mix, spec, x, form)
        .and_then(|split| equilibrium_residuals(mix, spec, &split))
        .is_ok_and(|(r, _)| r.satisfied())
}

pub fn lagrangian(mix: &Mixture, spec: &FlashSpec, x: &DVector<f64>, form: Lagrangian) -> Result<f64, FlashError> {
    TvnObjective::new(mix, spec, form).value(x)
}

/// `C = sum U(T, V^k, N^k) - U*` over all phases.
pub fn constraint(mix: &Mixture, spec: &FlashSpec, x: &DVector<f64>) -> Result<f64, FlashError> {
    let (t, ph) = unpack_tvn(mix, spec, x.as_slice())?;
    let u: f64 = jets(mix, Potential::Energy, t, &ph, Order::Value)?.iter().map(|j| j.value).sum();
    Ok(u - spec.total_u)
}
