//! Numerical laboratory for ultraviolet renormalization of generalized
//! spin-boson (GSB) models on truncated bosonic Fock spaces.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: quadrature grids, form factors, spectral densities and the
//!   analytic classification of UV divergences.
//! - [`fock`]: graded occupation-number basis and sparse realizations of
//!   creation, annihilation and second-quantized one-body operators.
//! - [`gsb`]: spin systems, cut-off Hamiltonians, self-energy counterterms and
//!   the completing-the-square identity.
//! - [`dressing`]: dressing generator, dressed vacuum, dressed annihilation
//!   operators and the shifted second quantization.
//! - [`resolvent`]: shifted solves, resolvent-difference norms and cutoff
//!   sweeps.
//! - [`triviality`]: Weyl operators, fiber decomposition of permutation
//!   couplings and the supercritical triviality sweep.
//!
//! Every operator lives on `C^D ⊗ F_{≤ n_max}` with the spin index slow.

// `!(x > 0.0)` is the NaN-rejecting form used throughout validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop, clippy::too_many_arguments)]

pub mod dense;
pub mod dressing;
pub mod error;
pub mod fock;
pub mod gsb;
pub mod krylov;
pub mod model;
pub mod resolvent;
pub mod sparse;
pub mod triviality;

pub use dressing::{DecayProfile, DressedVacuum, DressingGenerator};
pub use error::{Error, Result};
pub use fock::{FockBasis, FockOperator, StateVector};
pub use gsb::{CounterTerm, SpinSystem};
pub use model::{FormFactorFamily, FormFactorSpec, FormFactorVector, GridScheme, ModeGrid, UvCase, UvClass};
pub use num_complex::Complex64;
pub use resolvent::{ConvergenceReport, NormEstimate, ShiftPoint};
pub use sparse::CsrMatrix;
pub use triviality::{FiberSet, TrivialityReport, WeylOperator};
