//! Numerical laboratory for shrinking targets of non-autonomous
//! iterated function systems.
//!
//! The crate models level-indexed families of conformal contractions,
//! evaluates finite-horizon pressure sums and their Bowen root, verifies
//! the geometric and combinatorial hypotheses a dimension result needs,
//! builds the nested Moran tree of target balls with its mass
//! distribution, and cross-validates the resulting dimension against a
//! box-counting oracle.

pub mod error;
pub mod gamma;
pub mod geom;
pub mod ifs;
pub mod numeric;
pub mod boxcount;
pub mod cli;
pub mod conditions;
pub mod config;
pub mod perturb;
pub mod pressure;
pub mod targets;

pub use error::{NifsError, Result};
