//! Numerical toolkit for interference structure in quantum phase space.
//!
//! The crate builds superpositions of Gaussian wavepackets on a periodic
//! position grid, computes their Wigner distributions, and quantifies how
//! small displacements in phase space degrade the overlap with the original
//! state. Superpositions whose packets span an action A much larger than
//! hbar develop interference patterning on cells of area hbar^2 / A, far
//! below the naive hbar-per-dimension resolution limit, and that patterning
//! is exactly what makes the states sensitive to displacements of order
//! hbar / spread. A split-operator propagator for a driven pendulum
//! generates such states dynamically, and a classical ensemble integrator
//! provides the matching filamentation picture.
//!
//! Modules:
//! - [`grid`]: position grid, wavefunctions, density matrices, displacements
//! - [`states`]: Gaussian, two-packet cat, four-packet compass, sparse superpositions
//! - [`wigner`]: Wigner transform, overlap identities, structure measurements
//! - [`dynamics`]: quantum split-operator and classical symplectic evolution
//! - [`decoherence`]: overlap suppression factors and their closed-form predictions
//! - [`io`]: binary grid formats and CSV export
//! - [`scenario`]: JSON-driven runs with deterministic manifests

pub mod decoherence;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod io;
pub mod scenario;
pub mod states;
pub mod wigner;

pub use error::SubplanckError;
