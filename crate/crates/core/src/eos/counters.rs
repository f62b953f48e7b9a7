//! Per-thread counts of EOS evaluations, used to compare formulation costs.

use std::cell::Cell;

thread_local! {
    static HELMHOLTZ: Cell<u64> = const { Cell::new(0) };
    static ENTROPY: Cell<u64> = const { Cell::new(0) };
    static ENERGY: Cell<u64> = const { Cell::new(0) };
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EvalCounts {
    pub helmholtz: u64,
    pub entropy: u64,
    pub energy: u64,
}

impl std::ops::Sub for EvalCounts {
    type Output = EvalCounts;
    fn sub(self, rhs: Self) -> Self {
        EvalCounts {
            helmholtz: self.helmholtz - rhs.helmholtz,
            entropy: self.entropy - rhs.entropy,
            energy: self.energy - rhs.energy,
        }
    }
}

/// Counts accumulated on the current thread since it started.
pub fn snapshot() -> EvalCounts {
    EvalCounts {
        helmholtz: HELMHOLTZ.with(Cell::get),
        entropy: ENTROPY.with(Cell::get),
        energy: ENERGY.with(Cell::get),
    }
}

pub(crate) fn bump(kind: super::Potential) {
    let cell = match kind {
        super::Potential::Helmholtz => &HELMHOLTZ,
        super::Potential::Entropy => &ENTROPY,
        super::Potential::Energy => &ENERGY,
    };
    cell.with(|c| c.set(c.get() + 1));
}
