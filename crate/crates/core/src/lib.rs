//! Coherent dynamics of a two-level atom tunneling in a symmetric double well
//! while coupled to a single cavity mode.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`] holds the parameter record, basis conventions and the composite
//!   atom–field state.
//! * [`sector`] builds the 4×4 block of the Hamiltonian for each excitation
//!   number, evaluates its closed-form propagator and an independent
//!   spectral-decomposition oracle, and the resonant / far-detuned closed forms.
//! * [`observables`] evolves composite states (Fock or coherent fields) and
//!   reduces them to ρ_LL, ρ_RR, ρ_ee and ⟨x⟩.
//! * [`envelope`] predicts and measures collapse and revival of tunneling.
//! * [`control`] runs π-pulse / free-evolution protocols.
//! * [`grid`] solves the unreduced double-well problem on a spatial grid.
//! * [`scenario`] parses and runs the batch configurations used by the CLI.
//!
//! Units: ħ = 1 throughout. Frequencies are angular frequencies; the CLI works
//! in units of the atom–field coupling `g`.

pub mod control;
pub mod envelope;
pub mod error;
pub mod grid;
mod linalg;
pub mod model;
pub mod observables;
pub mod scenario;
pub mod sector;
pub mod signal;

pub use error::{Error, Result};
pub use model::{BasisLabel, CompositeState, SystemParams};
pub use sector::{EigenFrequencies, SectorHamiltonian, SectorPropagator};

/// Library version echoed into every report file.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
