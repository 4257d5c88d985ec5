// `!(x > 0.0)` rejects NaN along with non-positive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataio;
pub mod diffmath;
pub mod divergences;
pub mod error;
pub mod evaluation;
pub mod hallucination;
pub mod losses;
pub mod model;
pub mod rng;
pub mod training;

pub use error::{Error, Result};
