// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod feedback;
pub mod fraction;
pub mod quadrature;
pub mod stream;
pub mod discrete;
pub mod embedding;
pub mod analytics;
pub mod config;
pub mod montecarlo;
pub mod cli;
