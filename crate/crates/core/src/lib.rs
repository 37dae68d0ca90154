//! Turn-on transient simulation and switching-energy prediction for a
//! half-bridge built from nonlinear equivalent-circuit transistor models.

// `!(x > 0.0)` guards are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod circuit;
pub mod device;
pub mod energy;
pub mod error;
pub mod interp;
pub mod io;
pub mod phases;
pub mod quad;
pub mod solver;
pub mod synthetic;
pub mod trace;
pub mod validation;

pub use error::{Error, Result};
