//! Rating recovery on item-item similarity graphs.
//!
//! A user's ratings are treated as a scalar function on the item graph. The
//! crate provides the graph construction, the discrete second-derivative
//! operator, three estimators (neighborhood average, harmonic interpolation
//! and sparse-second-derivative recovery), an exhaustive minimal-source
//! search for small graphs, and the evaluation harness for the rating-bound
//! problem.

pub mod data;
pub mod error;
pub mod estimators;
pub mod eval;
pub mod graph;

pub use error::{Error, Result};
