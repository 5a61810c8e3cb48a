//! Numerical laboratory for finite-volume Hamiltonian lattice gauge theory.
//!
//! The crate builds finite sublattices of ℤ^d (d ≤ 3), truncated gauge-link
//! Hilbert spaces for U(1) and SU(2), Jordan–Wigner fermions, the
//! Kogut–Susskind Hamiltonian with its local/interaction split, Heisenberg
//! dynamics with interaction-picture cocycles and certified Dyson expansions,
//! quasi-locality (Lieb–Robinson) bounds with exact boundary combinatorics,
//! finite-volume ground states with spectral subadditivity checks, and the
//! Gauss-law machinery (gauge unitaries, projector, invariant observables).

pub mod dynamics;
pub mod error;
pub mod fermions;
pub mod gauge;
pub mod ground_state;
pub mod hamiltonian;
pub mod lattice;
pub mod lieb_robinson;
pub mod linkspace;
pub mod opalg;
pub mod quadrature;
pub mod sparse;

pub use error::{Error, Result};
