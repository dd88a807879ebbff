//! Minimal numeric core: matrices, a reverse-mode tape, Adam, seeded streams.

pub mod block;
pub mod graph;
pub mod matrix;
pub mod optim;
pub mod rng;

pub use graph::{Gradients, Graph, NodeId};
pub use matrix::{dot, gelu, softmax, Matrix};
pub use optim::{Adam, Param, ParamId, ParamStore};
pub use rng::{derive_seed, stream_rng};
