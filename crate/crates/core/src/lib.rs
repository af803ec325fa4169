//! Graph representation learning engine.
//!
//! Message-passing layers (GCN, GAT, GATv2, GraphSAGE), graph-connected
//! layers that wrap layers of an unconnected model, subgraph samplers and
//! phased training schedules, built on a small reverse-mode tensor engine.

// Negated float comparisons below deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod embed;
pub mod error;
pub mod graph;
pub mod nn;
pub mod rng;
pub mod sampler;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
