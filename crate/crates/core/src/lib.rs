//! Self-learning Metropolis-Hastings sampling with a classically simulated
//! quantum-Fourier-transform proposal.
//!
//! The crate is organized bottom-up:
//!
//! - [`fourier`]: the one-dimensional proposal `q(x; θ)`, exact evaluation,
//!   exact adaptive-measurement sampling and the `θ` gradient kernel.
//! - [`conditioner`]: the maps producing each stage's parameter vector from
//!   earlier coordinates (Id, LBLR, NBLR, NN).
//! - [`multistage`]: the product-of-conditionals proposal for `D` dimensions.
//! - [`engine`]: Metropolis-Hastings filtering and the momentum training loop.
//! - [`targets`]: target densities, including the Lennard-Jones Boltzmann
//!   density and tabulated grids.
//! - [`metrics`]: cross entropy, Wasserstein-1 distance, acceptance ratio.
//! - [`harness`]: configuration, experiment runner, validation suite and
//!   benchmark used by the `slmc` binary.

pub mod conditioner;
pub mod engine;
pub mod error;
pub mod fourier;
pub mod harness;
pub mod metrics;
pub mod multistage;
pub mod stats;
pub mod targets;

pub use error::{Result, SlmcError};
pub use fourier::{BitPrefix, FourierProposal, FourierRow, ParamVector, C64};
