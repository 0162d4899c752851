//! Numerical core for Feynman–Kac representations of fiber Hamiltonians with
//! quantized boson fields: weighted mode spaces, truncated Fock space, driving
//! paths, basic processes, scalar and spin integrands, time-ordered series and
//! exact finite-dimensional oracles. `no_std` with `alloc`.

#![no_std]
// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments, clippy::needless_range_loop)]

extern crate alloc;

pub mod basic_processes;
pub mod drivers;
pub mod error;
pub mod feynman_kac;
pub mod fock;
pub mod hamiltonians;
pub mod linalg;
pub mod modespace;
pub mod potential;
pub mod rng;
pub mod scalar_kernel;
pub mod spin_sde;
pub mod spin_series;

pub use error::{Error, Result};
