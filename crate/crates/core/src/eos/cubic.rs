//! Volume-dependent factors of the Peng-Robinson residual Helmholtz energy.
//!
//! The residual part is written as `Q(T, N) h(V, B) - R T N g(V, B)` with
//! `B = sum b_i N_i`, `h = -ln((V + (1+√2)B) / (V + (1-√2)B)) / (2√2 B)` and
//! `g = ln(1 - B/V)`.

use std::f64::consts::SQRT_2;

const SERIES_CUTOFF: f64 = 0.02;
const PELL: [f64; 18] = [
    1.0, 2.0, 5.0, 12.0, 29.0, 70.0, 169.0, 408.0, 985.0, 2378.0, 5741.0, 13860.0, 33461.0, 80782.0, 195025.0,
    470832.0, 1136689.0, 2744210.0,
];

/// A function of `(V, B)` with derivatives up to second order.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub(crate) struct VbPart {
    pub v: f64,
    pub dv: f64,
    pub db: f64,
    pub dvv: f64,
    pub dvb: f64,
    pub dbb: f64,
}

/// `phi(beta) = L / (2√2 beta)` and its first two derivatives.
pub(crate) fn phi(beta: f64) -> (f64, f64, f64) {
    if beta.abs() < SERIES_CUTOFF {
        let mut pow = [1.0; PELL.len()];
        for k in 1..pow.len() {
            pow[k] = pow[k - 1] * beta;
        }
        let (mut f, mut f1, mut f2) = (0.0, 0.0, 0.0);
        for (k, &pell) in PELL.iter().enumerate() {
            let c = if k % 2 == 0 { pell } else { -pell } / (k + 1) as f64;
            let e = k as f64;
            f += c * pow[k];
            if k >= 1 {
                f1 += c * e * pow[k - 1];
            }
            if k >= 2 {
                f2 += c * e * (e - 1.0) * pow[k - 2];
            }
        }
        (f, f1, f2)
    } else {
        let c = 2.0 * SQRT_2;
        let l = ((1.0 + (1.0 + SQRT_2) * beta) / (1.0 + (1.0 - SQRT_2) * beta)).ln();
        let den = 1.0 + 2.0 * beta - beta * beta;
        let l1 = c / den;
        let l2 = -c * (2.0 - 2.0 * beta) / (den * den);
        let f = l / (c * beta);
        let f1 = (l1 * beta - l) / (c * beta * beta);
        let f2 = (l2 * beta * beta - 2.0 * l1 * beta + 2.0 * l) / (c * beta * beta * beta);
        (f, f1, f2)
    }
}

/// `h(V, B) = -phi(B/V) / V`.
pub(crate) fn attraction_factor(v: f64, b: f64) -> VbPart {
    let beta = b / v;
    let (f, f1, f2) = phi(beta);
    let v2 = v * v;
    let v3 = v2 * v;
    VbPart {
        v: -f / v,
        dv: (f + beta * f1) / v2,
        db: -f1 / v2,
        dvv: -(2.0 * f + 4.0 * beta * f1 + beta * beta * f2) / v3,
        dvb: (2.0 * f1 + beta * f2) / v3,
        dbb: -f2 / v3,
    }
}

/// `g(V, B) = ln(1 - B/V)`.
pub(crate) fn repulsion_factor(v: f64, b: f64) -> VbPart {
    let free = v - b;
    VbPart {
        v: (-b / v).ln_1p(),
        dv: b / (v * free),
        db: -1.0 / free,
        dvv: -b * (2.0 * v - b) / (v * v * free * free),
        dvb: 1.0 / (free * free),
        dbb: -1.0 / (free * free),
    }
}
