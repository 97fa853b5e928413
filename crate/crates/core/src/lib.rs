//! Numerical core of the stochastic thin-film laboratory.
//!
//! Everything in this crate is a pure function of its inputs and runs on
//! `core` + `alloc`: the periodic grid and its difference/spectral operators,
//! the mobility and interface-potential families, the conservative noise
//! basis, the energy and α-entropy diagnostics, the semi-implicit SPDE
//! stepper, and the exact-mode bench for the linear fourth-order problem with
//! time-measurable coefficients. File formats, configuration, parallel
//! ensembles and the command line live in the `filmlab` companion crate.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod coefficients;
pub mod error;
pub mod fft;
pub mod functionals;
pub mod grid;
pub mod linalg;
pub mod maxreg;
pub mod noise;
pub mod quadrature;
pub mod rng;
pub mod solver;
pub mod stats;

pub use error::{Error, Result};
pub use grid::{Field, TorusGrid};
