//! Grid quantum dynamics: lattices, states, Hamiltonians, split-operator
//! propagation and the Ehrenfest-type checks built on top of them.
// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hamiltonian;
pub mod lattice;
pub mod propagator;
pub mod series;
pub mod states;
pub mod tolerances;
pub mod verifier;

pub use error::{Error, Result};
pub use hamiltonian::{Hamiltonian, MassVector, Observable, PotentialSpec};
pub use lattice::{Lattice, LatticeSpec, Representation, WaveState};
pub use propagator::{evolve, imaginary_time_relax, strang_step, EvolutionPlan, EvolveLimits};
pub use series::{ObservableSeries, Record};
pub use states::{build_state, StateSpec};
pub use tolerances::Tolerances;

/// Below this many elements, elementwise loops stay on one thread.
pub(crate) const PAR_MIN_LEN: usize = 1 << 14;
