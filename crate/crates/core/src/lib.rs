//! Coupling-based convergence rates for finite Markov chains.
//!
//! The overlap coefficient `κ` gives the classical geometric rate `1 − κ`.
//! The coupling operator `V̂` on pairs of distinct states refines it: the
//! probability that two coupled copies have not met after `n` steps is
//! exactly `(V̂ⁿ 1)(x)`, so `r(V̂) ≤ 1 − κ` is an improved rate.
//!
//! - [`chain`]: validated matrices, distributions, overlaps, exact distances.
//! - [`coupling`]: the operator `V̂` and its variants.
//! - [`spectral`]: eigenvalues, spectral radii, cross-checks.
//! - [`bounds`]: every bound as a comparable curve, plus reports.
//! - [`sim`]: seeded Monte Carlo of the coupled pair.

pub mod bounds;
pub mod chain;
pub mod coupling;
mod eigen;
pub mod ensemble;
pub mod sim;
pub mod spectral;

pub use chain::{ChainError, Distribution, KappaProfile, Kernel, StochasticMatrix, TimeVaryingKernel};
pub use coupling::{CouplingError, CouplingOperator, PairIndex};
pub use spectral::{SpectralError, SpectralOptions, SpectralSummary};
