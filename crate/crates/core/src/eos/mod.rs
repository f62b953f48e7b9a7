//! Peng-Robinson equation of state with analytic derivatives.
//!
//! Every potential (Helmholtz energy, entropy, internal energy) is available as
//! a [`Jet`] in the variables `(N_1, ..., N_n, V, T)`.

mod counters;
mod cubic;
mod database;
mod jet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use counters::{snapshot as eval_counts, EvalCounts};
pub use database::ComponentDatabase;
pub use jet::{Jet, Order};

use cubic::{attraction_factor, repulsion_factor};
use jet::TnPart;

pub const GAS_CONSTANT: f64 = 8.31446261815324;
const OMEGA_A: f64 = 0.45724;
const OMEGA_B: f64 = 0.0778;

/// Temperature bracket of the energy inversion, K.
pub const T_BRACKET: (f64, f64) = (10.0, 2000.0);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EosError {
    #[error("mole vector has no positive entry")]
    EmptyMoles,
    #[error("mole number {value} of component {index} is not allowed here")]
    BadMoles { index: usize, value: f64 },
    #[error("expected {expected} mole numbers, got {got}")]
    Length { expected: usize, got: usize },
    #[error("temperature {0} K is not positive and finite")]
    Temperature(f64),
    #[error("volume {volume} m3 does not exceed co-volume {covolume} m3")]
    Covolume { volume: f64, covolume: f64 },
    #[error("concentration vector is infeasible: sum c_i b_i = {0}")]
    Infeasible(f64),
    #[error("energy {target} J is not bracketed on [{t_lo}, {t_hi}] K, where U spans [{u_lo}, {u_hi}] J")]
    Unbracketed { target: f64, t_lo: f64, t_hi: f64, u_lo: f64, u_hi: f64 },
    #[error("invalid component {name}: {reason}")]
    InvalidComponent { name: String, reason: String },
    #[error("invalid interaction matrix: {0}")]
    InvalidKij(String),
    #[error("unknown component {0}")]
    UnknownComponent(String),
    #[error("component data: {0}")]
    Data(String),
}

impl From<serde_json::Error> for EosError {
    fn from(e: serde_json::Error) -> Self {
        EosError::Data(e.to_string())
    }
}

impl From<std::io::Error> for EosError {
    fn from(e: std::io::Error) -> Self {
        EosError::Data(e.to_string())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Component {
    pub name: String,
    #[serde(rename = "t_crit_K")]
    pub t_crit: f64,
    #[serde(rename = "p_crit_Pa")]
    pub p_crit: f64,
    pub acentric: f64,
    /// Ideal-gas heat capacity `cp = c0 + c1 T + c2 T^2 + c3 T^3`, J/(mol K).
    pub cp_coeffs: [f64; 4],
    #[serde(rename = "u0_J_per_mol", default)]
    pub u0: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
}

impl Component {
    pub fn kappa(&self) -> f64 {
        let w = self.acentric;
        if w < 0.5 {
            0.37464 + 1.54226 * w - 0.26992 * w * w
        } else {
            0.3796 + 1.485 * w - 0.1644 * w * w + 0.01667 * w * w * w
        }
    }

    pub fn covolume(&self) -> f64 {
        OMEGA_B * GAS_CONSTANT * self.t_crit / self.p_crit
    }

    pub fn critical_attraction(&self) -> f64 {
        OMEGA_A * (GAS_CONSTANT * self.t_crit).powi(2) / self.p_crit
    }

    pub fn attraction(&self, t: f64) -> f64 {
        let alpha = 1.0 + self.kappa() * (1.0 - (t / self.t_crit).sqrt());
        self.critical_attraction() * alpha * alpha
    }

    pub fn cp(&self, t: f64) -> f64 {
        let c = &self.cp_coeffs;
        c[0] + t * (c[1] + t * (c[2] + t * c[3]))
    }

    fn cp_slope(&self, t: f64) -> f64 {
        let c = &self.cp_coeffs;
        c[1] + t * (2.0 * c[2] + t * 3.0 * c[3])
    }

    /// `∫ (cp - R) dT` from `t0` to `t`.
    fn energy_integral(&self, t: f64, t0: f64) -> f64 {
        let c = &self.cp_coeffs;
        let mut s = -GAS_CONSTANT * (t - t0);
        let (mut tk, mut t0k) = (t, t0);
        for (k, ck) in c.iter().enumerate() {
            s += ck * (tk - t0k) / (k + 1) as f64;
            tk *= t;
            t0k *= t0;
        }
        s
    }

    /// `∫ cp / T dT` from `t0` to `t`.
    fn entropy_integral(&self, t: f64, t0: f64) -> f64 {
        let c = &self.cp_coeffs;
        let mut s = c[0] * (t / t0).ln();
        let (mut tk, mut t0k) = (t, t0);
        for (k, ck) in c.iter().enumerate().skip(1) {
            s += ck * (tk - t0k) / k as f64;
            tk *= t;
            t0k *= t0;
        }
        s
    }

    fn validate(&self) -> Result<(), EosError> {
        let bad = |reason: &str| Err(EosError::InvalidComponent { name: self.name.clone(), reason: reason.into() });
        if !(self.t_crit > 0.0 && self.t_crit.is_finite()) {
            return bad("t_crit must be positive");
        }
        if !(self.p_crit > 0.0 && self.p_crit.is_finite()) {
            return bad("p_crit must be positive");
        }
        if !self.acentric.is_finite() || self.cp_coeffs.iter().any(|c| !c.is_finite()) {
            return bad("non-finite coefficient");
        }
        if !(self.covolume() > 0.0) {
            return bad("co-volume must be positive");
        }
        Ok(())
    }
}

/// A single-phase state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateTVN {
    pub temperature: f64,
    pub volume: f64,
    pub moles: Vec<f64>,
}

impl StateTVN {
    pub fn new(temperature: f64, volume: f64, moles: Vec<f64>) -> Self {
        StateTVN { temperature, volume, moles }
    }

    pub fn total_moles(&self) -> f64 {
        self.moles.iter().sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MixtureParams {
    pub a: f64,
    pub da_dt: f64,
    pub d2a_dt2: f64,
    pub b: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropertyBundle {
    pub pressure: f64,
    pub internal_energy: f64,
    pub entropy: f64,
    pub helmholtz: f64,
    pub heat_capacity_v: f64,
    pub chem_potential: Vec<f64>,
    pub dmu_dt: Vec<f64>,
    pub dp_dt: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TemperatureSolve {
    pub temperature: f64,
    pub iterations: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Potential {
    Helmholtz,
    Entropy,
    Energy,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mixture {
    components: Vec<Component>,
    kij: Vec<f64>,
    t_ref: f64,
    p_ref: f64,
    b: Vec<f64>,
    kappa: Vec<f64>,
    t_crit: Vec<f64>,
    // (1 - k_ij) sqrt(ac_i ac_j)
    kmat: Vec<f64>,
}

/// Attraction sum `Q = sum N_i N_j a_ij(T)` and its derivatives.
/// `q[k]` is the k-th T-derivative, `qn[k][i]` the k-th T-derivative of
/// `∂Q/∂N_i`, `qnn[k]` the k-th T-derivative of the N-Hessian.
struct Attraction {
    q: [f64; 4],
    qn: [Vec<f64>; 3],
    qnn: [Vec<f64>; 2],
}

impl Mixture {
    pub fn new(components: Vec<Component>, kij: Vec<Vec<f64>>, t_ref: f64, p_ref: f64) -> Result<Self, EosError> {
        let n = components.len();
        if n == 0 {
            return Err(EosError::Data("a mixture needs at least one component".into()));
        }
        for c in &components {
            c.validate()?;
        }
        if kij.len() != n || kij.iter().any(|r| r.len() != n) {
            return Err(EosError::InvalidKij(format!("expected a {n}x{n} matrix")));
        }
        for i in 0..n {
            if kij[i][i] != 0.0 {
                return Err(EosError::InvalidKij(format!("nonzero diagonal at {i}")));
            }
            for j in 0..i {
                if kij[i][j] != kij[j][i] || !kij[i][j].is_finite() {
                    return Err(EosError::InvalidKij(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        if !(t_ref > 0.0 && p_ref > 0.0) {
            return Err(EosError::Data("reference temperature and pressure must be positive".into()));
        }
        let ac: Vec<f64> = components.iter().map(Component::critical_attraction).collect();
        let mut kmat = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                kmat[i * n + j] = (1.0 - kij[i][j]) * (ac[i] * ac[j]).sqrt();
            }
        }
        Ok(Mixture {
            b: components.iter().map(Component::covolume).collect(),
            kappa: components.iter().map(Component::kappa).collect(),
            t_crit: components.iter().map(|c| c.t_crit).collect(),
            kij: kij.into_iter().flatten().collect(),
            components,
            t_ref,
            p_ref,
            kmat,
        })
    }

    /// Mixture without interaction coefficients.
    pub fn ideal_mixing(components: Vec<Component>, t_ref: f64, p_ref: f64) -> Result<Self, EosError> {
        let n = components.len();
        Self::new(components, vec![vec![0.0; n]; n], t_ref, p_ref)
    }

    pub fn n(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    pub fn names(&self) -> Vec<&str> {
        self.components.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn kij(&self, i: usize, j: usize) -> f64 {
        self.kij[i * self.n() + j]
    }

    pub fn covolumes(&self) -> &[f64] {
        &self.b
    }

    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn p_ref(&self) -> f64 {
        self.p_ref
    }

    pub fn gas_constant(&self) -> f64 {
        GAS_CONSTANT
    }

    /// Same mixture with the rows and columns of every component permuted:
    /// component `i` of the result is component `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Result<Self, EosError> {
        let comps = perm.iter().map(|&i| self.components[i].clone()).collect();
        let kij = perm.iter().map(|&i| perm.iter().map(|&j| self.kij(i, j)).collect()).collect();
        Self::new(comps, kij, self.t_ref, self.p_ref)
    }

    /// Same mixture with every reference energy shifted by `du0` J/mol and a new `p_ref`.
    pub fn with_reference(&self, du0: f64, p_ref: f64) -> Result<Self, EosError> {
        let mut comps = self.components.clone();
        for c in &mut comps {
            c.u0 += du0;
        }
        let n = self.n();
        let kij = (0..n).map(|i| (0..n).map(|j| self.kij(i, j)).collect()).collect();
        Self::new(comps, kij, self.t_ref, p_ref)
    }

    pub fn total_covolume(&self, moles: &[f64]) -> f64 {
        moles.iter().zip(&self.b).map(|(n, b)| n * b).sum()
    }

    fn check_moles(&self, moles: &[f64], strict: bool) -> Result<f64, EosError> {
        if moles.len() != self.n() {
            return Err(EosError::Length { expected: self.n(), got: moles.len() });
        }
        let mut total = 0.0;
        for (index, &value) in moles.iter().enumerate() {
            let ok = if strict { value > 0.0 } else { value >= 0.0 };
            if !ok || !value.is_finite() {
                return Err(EosError::BadMoles { index, value });
            }
            total += value;
        }
        if total <= 0.0 {
            return Err(EosError::EmptyMoles);
        }
        Ok(total)
    }

    fn check_state(&self, t: f64, v: f64, moles: &[f64], strict: bool) -> Result<f64, EosError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(EosError::Temperature(t));
        }
        self.check_moles(moles, strict)?;
        let covolume = self.total_covolume(moles);
        if !(v > covolume) || !v.is_finite() {
            return Err(EosError::Covolume { volume: v, covolume });
        }
        Ok(covolume)
    }

    fn attraction(&self, t: f64, moles: &[f64], t_depth: usize, n_depth: usize, nn_depth: usize) -> Attraction {
        let n = self.n();
        let mut al = [vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]];
        for i in 0..n {
            let m = self.kappa[i];
            let sr = (t / self.t_crit[i]).sqrt();
            al[0][i] = 1.0 + m * (1.0 - sr);
            al[1][i] = -m * sr / (2.0 * t);
            al[2][i] = m * sr / (4.0 * t * t);
            al[3][i] = -3.0 * m * sr / (8.0 * t * t * t);
        }
        let y: Vec<Vec<f64>> = (0..4).map(|k| al[k].iter().zip(moles).map(|(a, n)| a * n).collect()).collect();
        let matvec = |x: &[f64]| -> Vec<f64> {
            (0..n).map(|i| self.kmat[i * n..(i + 1) * n].iter().zip(x).map(|(k, x)| k * x).sum()).collect()
        };
        let dot = |a: &[f64], b: &[f64]| -> f64 { a.iter().zip(b).map(|(a, b)| a * b).sum() };
        let ky0 = matvec(&y[0]);
        let ky1 = if t_depth >= 2 || n_depth >= 2 { matvec(&y[1]) } else { Vec::new() };
        let ky2 = if n_depth >= 3 { matvec(&y[2]) } else { Vec::new() };

        let mut q = [0.0; 4];
        q[0] = dot(&y[0], &ky0);
        if t_depth >= 1 {
            q[1] = 2.0 * dot(&y[1], &ky0);
        }
        if t_depth >= 2 {
            q[2] = 2.0 * (dot(&y[2], &ky0) + dot(&y[1], &ky1));
        }
        if t_depth >= 3 {
            q[3] = 2.0 * (dot(&y[3], &ky0) + 3.0 * dot(&y[2], &ky1));
        }
        let mut qn = [Vec::new(), Vec::new(), Vec::new()];
        if n_depth >= 1 {
            qn[0] = (0..n).map(|i| 2.0 * al[0][i] * ky0[i]).collect();
        }
        if n_depth >= 2 {
            qn[1] = (0..n).map(|i| 2.0 * (al[1][i] * ky0[i] + al[0][i] * ky1[i])).collect();
        }
        if n_depth >= 3 {
            qn[2] = (0..n).map(|i| 2.0 * (al[2][i] * ky0[i] + 2.0 * al[1][i] * ky1[i] + al[0][i] * ky2[i])).collect();
        }
        let mut qnn = [Vec::new(), Vec::new()];
        if nn_depth >= 1 {
            qnn[0] = (0..n * n).map(|k| 2.0 * al[0][k / n] * self.kmat[k] * al[0][k % n]).collect();
        }
        if nn_depth >= 2 {
            qnn[1] = (0..n * n)
                .map(|k| {
                    let (i, j) = (k / n, k % n);
                    2.0 * self.kmat[k] * (al[1][i] * al[0][j] + al[0][i] * al[1][j])
                })
                .collect();
        }
        Attraction { q, qn, qnn }
    }

    /// Evaluates a potential and its derivatives in `(N, V, T)`.
    pub fn jet(&self, kind: Potential, t: f64, v: f64, moles: &[f64], order: Order) -> Result<Jet, EosError> {
        counters::bump(kind);
        let strict = order >= Order::Gradient;
        let bsum = self.check_state(t, v, moles, strict)?;
        let n = self.n();
        let r = GAS_CONSTANT;
        let ntot: f64 = moles.iter().sum();
        let o = order as usize;
        let shift = usize::from(kind != Potential::Helmholtz);
        let att = self.attraction(
            t,
            moles,
            o + shift,
            if o >= 1 { o + shift } else { 0 },
            if o >= 2 { 1 + shift } else { 0 },
        );
        let neg = |x: &Vec<f64>| x.iter().map(|v| -v).collect::<Vec<_>>();
        let f = match kind {
            Potential::Helmholtz => TnPart {
                v: att.q[0],
                t: att.q[1],
                tt: att.q[2],
                n: att.qn[0].clone(),
                tn: att.qn[1].clone(),
                nn: att.qnn[0].clone(),
            },
            Potential::Entropy => TnPart {
                v: -att.q[1],
                t: -att.q[2],
                tt: -att.q[3],
                n: neg(&att.qn[1]),
                tn: neg(&att.qn[2]),
                nn: neg(&att.qnn[1]),
            },
            Potential::Energy => TnPart {
                v: att.q[0] - t * att.q[1],
                t: -t * att.q[2],
                tt: -att.q[2] - t * att.q[3],
                n: att.qn[0].iter().zip(&att.qn[1]).map(|(a, b)| a - t * b).collect(),
                tn: att.qn[2].iter().map(|x| -t * x).collect(),
                nn: att.qnn[0].iter().zip(&att.qnn[1]).map(|(a, b)| a - t * b).collect(),
            },
        };
        let mut jet = Jet::zeros(n, order);
        jet.add_product(&f, &attraction_factor(v, bsum), &self.b);
        let g = match kind {
            Potential::Helmholtz => Some(TnPart {
                v: -r * t * ntot,
                t: -r * ntot,
                tt: 0.0,
                n: vec![-r * t; n],
                tn: vec![-r; n],
                nn: Vec::new(),
            }),
            Potential::Entropy => {
                Some(TnPart { v: r * ntot, t: 0.0, tt: 0.0, n: vec![r; n], tn: vec![0.0; n], nn: Vec::new() })
            }
            Potential::Energy => None,
        };
        if let Some(g) = g {
            jet.add_product(&g, &repulsion_factor(v, bsum), &self.b);
        }
        self.add_ideal(&mut jet, kind, t, v, moles, ntot);
        Ok(jet)
    }

    fn add_ideal(&self, jet: &mut Jet, kind: Potential, t: f64, v: f64, moles: &[f64], ntot: f64) {
        let n = self.n();
        let r = GAS_CONSTANT;
        let (iv, it) = (n, n + 1);
        let has_grad = !jet.grad.is_empty();
        let has_hess = !jet.hess.is_empty();
        for (i, c) in self.components.iter().enumerate() {
            let ni = moles[i];
            let e = c.u0 + c.energy_integral(t, self.t_ref);
            let ell = if ni > 0.0 { (v * self.p_ref / (ni * r * t)).ln() } else { 0.0 };
            let s = r * ell + c.entropy_integral(t, self.t_ref);
            let cv = c.cp(t) - r;
            match kind {
                Potential::Helmholtz => {
                    jet.value += ni * (e - t * s);
                    if has_grad {
                        jet.add_grad(i, e - t * (s - r));
                        jet.add_grad(it, -ni * s);
                    }
                    if has_hess {
                        jet.add_hess(i, i, r * t / ni);
                        jet.add_hess(i, iv, -r * t / v);
                        jet.add_hess(i, it, -(s - r));
                        jet.add_hess(it, it, -ni * cv / t);
                    }
                }
                Potential::Entropy => {
                    jet.value += ni * s;
                    if has_grad {
                        jet.add_grad(i, s - r);
                        jet.add_grad(it, ni * cv / t);
                    }
                    if has_hess {
                        jet.add_hess(i, i, -r / ni);
                        jet.add_hess(i, iv, r / v);
                        jet.add_hess(i, it, cv / t);
                        jet.add_hess(it, it, ni * (c.cp_slope(t) / t - cv / (t * t)));
                    }
                }
                Potential::Energy => {
                    jet.value += ni * e;
                    if has_grad {
                        jet.add_grad(i, e);
                        jet.add_grad(it, ni * cv);
                    }
                    if has_hess {
                        jet.add_hess(i, it, cv);
                        jet.add_hess(it, it, ni * c.cp_slope(t));
                    }
                }
            }
        }
        match kind {
            Potential::Helmholtz => {
                if has_grad {
                    jet.add_grad(iv, -r * t * ntot / v);
                }
                if has_hess {
                    jet.add_hess(iv, iv, r * t * ntot / (v * v));
                    jet.add_hess(iv, it, -r * ntot / v);
                }
            }
            Potential::Entropy => {
                if has_grad {
                    jet.add_grad(iv, r * ntot / v);
                }
                if has_hess {
                    jet.add_hess(iv, iv, -r * ntot / (v * v));
                }
            }
            Potential::Energy => {}
        }
    }

    pub fn helmholtz_jet(&self, s: &StateTVN, order: Order) -> Result<Jet, EosError> {
        self.jet(Potential::Helmholtz, s.temperature, s.volume, &s.moles, order)
    }

    pub fn entropy_jet(&self, s: &StateTVN, order: Order) -> Result<Jet, EosError> {
        self.jet(Potential::Entropy, s.temperature, s.volume, &s.moles, order)
    }

    pub fn energy_jet(&self, s: &StateTVN, order: Order) -> Result<Jet, EosError> {
        self.jet(Potential::Energy, s.temperature, s.volume, &s.moles, order)
    }

    pub fn internal_energy(&self, s: &StateTVN) -> Result<f64, EosError> {
        Ok(self.energy_jet(s, Order::Value)?.value)
    }

    pub fn entropy(&self, s: &StateTVN) -> Result<f64, EosError> {
        Ok(self.entropy_jet(s, Order::Value)?.value)
    }

    pub fn helmholtz(&self, s: &StateTVN) -> Result<f64, EosError> {
        Ok(self.helmholtz_jet(s, Order::Value)?.value)
    }

    /// Mole-fraction-weighted mixing-rule parameters.
    pub fn mixture_params(&self, moles: &[f64], t: f64) -> Result<MixtureParams, EosError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(EosError::Temperature(t));
        }
        let ntot = self.check_moles(moles, false)?;
        let att = self.attraction(t, moles, 2, 0, 0);
        let n2 = ntot * ntot;
        Ok(MixtureParams {
            a: att.q[0] / n2,
            da_dt: att.q[1] / n2,
            d2a_dt2: att.q[2] / n2,
            b: self.total_covolume(moles) / ntot,
        })
    }

    pub fn pressure(&self, s: &StateTVN) -> Result<f64, EosError> {
        let (t, v) = (s.temperature, s.volume);
        let bsum = self.check_state(t, v, &s.moles, false)?;
        let q = self.attraction(t, &s.moles, 0, 0, 0).q[0];
        Ok(s.total_moles() * GAS_CONSTANT * t / (v - bsum) - q / (v * v + 2.0 * bsum * v - bsum * bsum))
    }

    pub fn properties(&self, s: &StateTVN) -> Result<PropertyBundle, EosError> {
        let n = self.n();
        let a = self.helmholtz_jet(s, Order::Hessian)?;
        let u = self.internal_energy(s)?;
        let t = s.temperature;
        let entropy = -a.d_t();
        Ok(PropertyBundle {
            pressure: -a.d_v(),
            internal_energy: u,
            entropy,
            helmholtz: u - t * entropy,
            heat_capacity_v: -t * a.h(n + 1, n + 1),
            chem_potential: (0..n).map(|i| a.d_n(i)).collect(),
            dmu_dt: (0..n).map(|i| a.h(i, n + 1)).collect(),
            dp_dt: -a.h(n, n + 1),
        })
    }

    /// Internal energy and constant-volume heat capacity.
    pub fn energy_and_heat_capacity(&self, t: f64, v: f64, moles: &[f64]) -> Result<(f64, f64), EosError> {
        counters::bump(Potential::Energy);
        let bsum = self.check_state(t, v, moles, false)?;
        let att = self.attraction(t, moles, 2, 0, 0);
        let h = attraction_factor(v, bsum).v;
        let mut u = (att.q[0] - t * att.q[1]) * h;
        let mut cv = -t * att.q[2] * h;
        for (c, &ni) in self.components.iter().zip(moles) {
            u += ni * (c.u0 + c.energy_integral(t, self.t_ref));
            cv += ni * (c.cp(t) - GAS_CONSTANT);
        }
        Ok((u, cv))
    }

    /// Solves `U(T, V, N) = target_u` for `T` by safeguarded Newton on [`T_BRACKET`].
    pub fn solve_temperature(
        &self,
        target_u: f64,
        v: f64,
        moles: &[f64],
        t_init: f64,
    ) -> Result<TemperatureSolve, EosError> {
        self.invert_energy(target_u, v, moles, t_init, false)
    }

    /// As [`Mixture::solve_temperature`], but iterates until the Newton
    /// correction is below `1e-12 T`.
    pub fn solve_temperature_precise(
        &self,
        target_u: f64,
        v: f64,
        moles: &[f64],
        t_init: f64,
    ) -> Result<TemperatureSolve, EosError> {
        self.invert_energy(target_u, v, moles, t_init, true)
    }

    fn invert_energy(
        &self,
        target_u: f64,
        v: f64,
        moles: &[f64],
        t_init: f64,
        precise: bool,
    ) -> Result<TemperatureSolve, EosError> {
        self.check_state(T_BRACKET.1, v, moles, false)?;
        let atol = (1e-8 * target_u.abs()).max(1e-6);
        let (mut lo, mut hi) = T_BRACKET;
        let mut t = if t_init > lo && t_init < hi { t_init } else { 0.5 * (lo + hi) };
        for it in 1..=200 {
            let (u, cv) = self.energy_and_heat_capacity(t, v, moles)?;
            let r = u - target_u;
            let done = if precise { (r / cv).abs() <= 1e-12 * t && r.abs() <= atol } else { r.abs() <= atol };
            if done {
                return Ok(TemperatureSolve { temperature: t, iterations: it });
            }
            if r < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            if hi - lo <= 1e-12 * hi {
                if r.abs() <= atol {
                    return Ok(TemperatureSolve { temperature: t, iterations: it });
                }
                break;
            }
            let step = t - r / cv;
            t = if cv > 0.0 && step > lo && step < hi { step } else { 0.5 * (lo + hi) };
        }
        let u_lo = self.energy_and_heat_capacity(T_BRACKET.0, v, moles)?.0;
        let u_hi = self.energy_and_heat_capacity(T_BRACKET.1, v, moles)?.0;
        Err(EosError::Unbracketed { target: target_u, t_lo: T_BRACKET.0, t_hi: T_BRACKET.1, u_lo, u_hi })
    }

    /// `ln Φ_i = -μ_i^res(T, V = 1, N = c) / (R T)`, with `Φ_i = 1 / (Z φ_i)`.
    pub fn ln_volume_function(&self, t: f64, conc: &[f64]) -> Result<Vec<f64>, EosError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(EosError::Temperature(t));
        }
        if conc.len() != self.n() {
            return Err(EosError::Length { expected: self.n(), got: conc.len() });
        }
        if let Some((index, &value)) = conc.iter().enumerate().find(|(_, c)| !(**c >= 0.0)) {
            return Err(EosError::BadMoles { index, value });
        }
        let bsum = self.total_covolume(conc);
        if !(bsum < 1.0) {
            return Err(EosError::Infeasible(bsum));
        }
        let att = self.attraction(t, conc, 0, 1, 0);
        let h = attraction_factor(1.0, bsum);
        let g = repulsion_factor(1.0, bsum);
        let rt = GAS_CONSTANT * t;
        let ctot: f64 = conc.iter().sum();
        Ok((0..self.n())
            .map(|i| {
                let mu = att.qn[0][i] * h.v + att.q[0] * h.db * self.b[i] - rt * (g.v + ctot * g.db * self.b[i]);
                -mu / rt
            })
            .collect())
    }
}
