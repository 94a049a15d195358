//! Sparse high-dimensional VAR estimation and variance-decomposition
//! connectedness networks.
//!
//! The pipeline: load prices ([`dataset`]), difference and impute, pick a lag
//! order ([`selection`]), estimate each VAR equation by iterated sure
//! independence screening with a Lasso or SCAD penalty ([`screening`],
//! [`penalty`]), then decompose forecast error variances into a directed
//! network ([`connectedness`]) and export it ([`graph`], [`io`]).

pub mod connectedness;
pub mod dataset;
pub mod error;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod penalty;
pub mod screening;
pub mod selection;
pub mod synthetic;
pub mod varcore;

pub use error::{Error, Result};
