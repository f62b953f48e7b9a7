//! UVN flash (specified internal energy, volume and moles) for Peng-Robinson
//! mixtures, solved as an entropy maximisation over temperature, volumes and
//! mole numbers with the Lagrange multiplier fixed to `-1/T`.
//!
//! ```
//! use uvflash::bench::builtin_problems;
//! use uvflash::flash::{flash, FlashConfig};
//!
//! let p = builtin_problems().unwrap().into_iter().find(|p| p.id == "P2").unwrap();
//! let sol = flash(&p.mixture, &p.spec, &FlashConfig::default()).unwrap();
//! assert!(sol.s_two >= sol.s_single);
//! ```

pub mod bench;
pub mod eos;
pub mod flash;
pub mod solver;
pub mod stability;

pub use eos::{Component, ComponentDatabase, Mixture, PropertyBundle, StateTVN};
