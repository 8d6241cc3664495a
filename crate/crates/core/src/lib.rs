//! Simulation and numerics for the range of planar random walks.
//!
//! The crate covers the lattice side (step laws, walks, occupation-based
//! intersection local times, killed Green's functions), the continuum side
//! (Brownian paths, mollified and renormalized self-intersection local
//! times), a block coupler between the two, and a Monte Carlo experiment
//! runner that checks the identities and asymptotic expansions tying them
//! together.

pub mod brownian;
pub mod coupling;
pub mod experiments;
pub mod extrapolation;
pub mod green;
pub mod lattice;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;
pub mod stepdist;
pub mod walk;

pub use lattice::Site;
pub use stepdist::StepLaw;
