//! Two-line Ising spin system with Kac self-interaction and local
//! activator–inhibitor cross coupling.
//!
//! The crate provides the exact microscopic dynamics ([`kmc`]), the
//! limiting nonlocal PDE and mean-field systems ([`pde`]), linear stability
//! of the homogeneous state ([`stability`]), and ensemble experiments that
//! compare the two scales ([`harness`]).

pub mod error;
pub mod functions;
pub mod harness;
pub mod kernel;
pub mod kmc;
pub mod lattice;
pub mod pde;
pub mod rng;
pub mod schedule;
pub mod stability;

pub use error::{Error, Result};
pub use functions::{Profile, TestFunction, TorusFn};
pub use kernel::{DiscreteKernel, KernelSpec};
pub use lattice::{KernelPair, Line, ModelParams, PairConfig};
