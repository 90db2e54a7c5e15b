//! Landau-de Gennes nematic films on curved substrates.
//!
//! The crate covers the pointwise algebra of order tensors ([`qtensor`]),
//! the non-dimensional energy densities ([`elastic`]), the minimization that
//! produces the reduced elastic density of a vanishing-thickness film
//! ([`remnant`]), geometry of surfaces of revolution ([`surface`]), a 2D
//! gradient-flow solver for the reduced energy ([`reduced`]), the 1D frustum
//! winding problem ([`frustum`]) and a harness that evaluates the full shell
//! energy and measures its convergence to the thin-film limit ([`film3d`]),
//! plus the command-line front end ([`cli`]).

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod elastic;
pub mod error;
pub mod film3d;
pub mod frustum;
pub mod qtensor;
pub mod reduced;
pub mod remnant;
pub mod surface;

pub use error::{Error, Result};
