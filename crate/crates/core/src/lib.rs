//! Log-Hölder regularity, mollified energy flux and boundary commutator
//! estimates for incompressible flows, with a pseudo-spectral 2-D Euler
//! solver to test the energy identity.

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod boundary;
pub mod commutator;
pub mod error;
pub mod euler2d;
pub mod fields;
pub mod harness;
pub mod modulus;
pub mod mollify;
pub mod par;
pub mod spectral;

pub use error::{Error, Result};
