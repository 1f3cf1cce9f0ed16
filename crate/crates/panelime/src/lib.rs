// Negated comparisons like `!(x > 0.0)` are deliberate: they reject NaN
// along with out-of-range values, which `x <= 0.0` would let through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops over several parallel arrays read better than zipped chains
#![allow(clippy::needless_range_loop)]

//! Model-agnostic interpretability for entity-by-year tabular panels.
//!
//! The pipeline: load a panel CSV, impute gaps under a per-row missing-rate
//! threshold, turn levels into year-over-year changes, train an internal
//! black-box regressor, explain single predictions with a local linear
//! surrogate, summarize globally with submodular pick and ICE/PDP curves,
//! and quantify explanation quality with a masked-column R^2 experiment
//! plus a one-sided paired t-test.

pub mod error;
pub mod eval;
pub mod ice;
pub mod impute;
pub mod lime;
mod linalg;
pub mod models;
pub mod pick;
pub mod seed;
pub mod stats;
pub mod table;

pub use error::{Error, Result};
