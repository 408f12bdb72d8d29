//! Heterogeneous graph convolutional networks for multi-label text
//! classification.
//!
//! Each text becomes a small graph of token nodes and label nodes. Token nodes
//! form a chain, label nodes start isolated, and token-label edges are rebuilt
//! from node features after every convolution. Label scores are the summed
//! token-label edge weights of the last layer.

pub mod autodiff;
pub mod checkpoint;
pub mod container;
pub mod correlate;
pub mod dataset;
pub mod decode;
pub mod encoder;
pub mod error;
pub mod explain;
pub mod graph;
pub mod matrix;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use matrix::Matrix;
