// Range checks are written `!(x >= lo)` on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod code_model;
pub mod nn;
pub mod artifact;
pub mod dataset;
pub mod detector;
pub mod synth;
pub mod locator;
pub mod steer;
pub mod profiler;
pub mod prompt;
pub mod validator;
pub mod metrics;
pub mod config;
pub mod pipeline;
