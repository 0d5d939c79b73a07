//! Interpolated n-gram language models whose interpolation weights are chosen
//! by linear programming, grid search, random search, or an exact concave
//! maximizer of validation log-likelihood.

pub mod corpus;
pub mod error;
pub mod experiment;
pub mod grid;
pub mod mixture;
pub mod ngram;
pub mod numeric;
pub mod optimizer;
pub mod simplex;

pub use error::{Error, Result};
