use super::cubic::VbPart;

/// Derivative order requested from a potential evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Order {
    Value,
    Gradient,
    Hessian,
}

/// Value, gradient and Hessian of a potential in the variables
/// `(N_1, ..., N_n, V, T)`. The Hessian is dense row-major and empty below
/// [`Order::Hessian`]; the gradient is empty for [`Order::Value`].
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: Vec<f64>,
    pub hess: Vec<f64>,
    n: usize,
}

impl Jet {
    pub(crate) fn zeros(n: usize, order: Order) -> Self {
        let m = n + 2;
        Jet {
            value: 0.0,
            grad: if order >= Order::Gradient { vec![0.0; m] } else { Vec::new() },
            hess: if order >= Order::Hessian { vec![0.0; m * m] } else { Vec::new() },
            n,
        }
    }

    pub fn components(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.n + 2
    }

    pub fn v_index(&self) -> usize {
        self.n
    }

    pub fn t_index(&self) -> usize {
        self.n + 1
    }

    pub fn d_n(&self, i: usize) -> f64 {
        self.grad[i]
    }

    pub fn d_v(&self) -> f64 {
        self.grad[self.n]
    }

    pub fn d_t(&self) -> f64 {
        self.grad[self.n + 1]
    }

    pub fn h(&self, i: usize, j: usize) -> f64 {
        self.hess[i * (self.n + 2) + j]
    }

    fn add_h(&mut self, i: usize, j: usize, x: f64) {
        let m = self.n + 2;
        self.hess[i * m + j] += x;
        if i != j {
            self.hess[j * m + i] += x;
        }
    }

    /// Adds `F(T, N) * H(V, B(N))` with `B = sum b_i N_i`.
    pub(crate) fn add_product(&mut self, f: &TnPart, h: &VbPart, b: &[f64]) {
        let n = self.n;
        let (iv, it) = (n, n + 1);
        self.value += f.v * h.v;
        if self.grad.is_empty() {
            return;
        }
        for i in 0..n {
            self.grad[i] += f.n[i] * h.v + f.v * h.db * b[i];
        }
        self.grad[iv] += f.v * h.dv;
        self.grad[it] += f.t * h.v;
        if self.hess.is_empty() {
            return;
        }
        for i in 0..n {
            for j in 0..=i {
                let x = f.nn(i, j) * h.v + (f.n[i] * b[j] + f.n[j] * b[i]) * h.db + f.v * h.dbb * b[i] * b[j];
                self.add_h(i, j, x);
            }
            self.add_h(i, iv, f.n[i] * h.dv + f.v * h.dvb * b[i]);
            self.add_h(i, it, f.tn[i] * h.v + f.t * h.db * b[i]);
        }
        self.add_h(iv, iv, f.v * h.dvv);
        self.add_h(iv, it, f.t * h.dv);
        self.add_h(it, it, f.tt * h.v);
    }

    pub(crate) fn add_grad(&mut self, i: usize, x: f64) {
        self.grad[i] += x;
    }

    pub(crate) fn add_hess(&mut self, i: usize, j: usize, x: f64) {
        self.add_h(i, j, x);
    }
}

/// A function of `(T, N)`: value, `∂/∂T`, `∂²/∂T²`, `∂/∂N_i`, `∂²/∂T∂N_i`
/// and `∂²/∂N_i∂N_j` (row-major, or empty when identically zero).
#[derive(Clone, Debug, Default)]
pub(crate) struct TnPart {
    pub v: f64,
    pub t: f64,
    pub tt: f64,
    pub n: Vec<f64>,
    pub tn: Vec<f64>,
    pub nn: Vec<f64>,
}

impl TnPart {
    fn nn(&self, i: usize, j: usize) -> f64 {
        if self.nn.is_empty() {
            0.0
        } else {
            self.nn[i * self.n.len() + j]
        }
    }
}
