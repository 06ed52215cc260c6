//! Cooling of atoms on a ring by an atom diode followed by a ground-state trap.
//!
//! Quantum dynamics are unraveled into Monte Carlo wave-function trajectories
//! of a two- or three-level spinor on a periodic grid; a classical toy model
//! with point diode and trap gives the time scales. Ensemble observables
//! (trapping probabilities, coordinate and velocity densities) are written
//! as CSV.

pub mod classical;
pub mod diode;
pub mod grid;
pub mod manifest;
pub mod mcwf;
pub mod observables;
pub mod output;
pub mod params;
pub mod potentials;

pub use grid::{RingGrid, SpinorField};
pub use params::{Mode, ParameterSet};
