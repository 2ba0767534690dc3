//! Continuum student-job matching with strategic grading and early contracting.
//!
//! Distributions and monotone maps live in [`piecewise`]; [`market`] turns a
//! scenario into truthful and policy-induced placements; [`grading_eq`] and
//! [`early_eq`] compute equilibria; [`welfare_poa`] measures their cost.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod early_eq;
pub mod error;
pub mod grading_eq;
pub mod numeric;
pub mod market;
pub mod piecewise;
pub mod welfare_poa;

pub use error::{Error, Result};
