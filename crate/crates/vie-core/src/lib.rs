//! Self-supervised video embeddings on the unit hypersphere.
//!
//! Videos are embedded by small frame-sampling encoders trained with the
//! instance-recognition or local-aggregation objective against a momentum
//! memory bank. The crate is fully self-contained at desk scale: it ships
//! its own dense-tensor reverse-mode differentiation, a synthetic
//! moving-blob video generator with appearance- or dynamics-coded labels,
//! and an evaluation battery (linear probes on frozen features, embedding
//! retrieval, clustering quality).

pub mod bytes;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod embedding;
pub mod grad_check;
pub mod encoders;
pub mod eval;
pub mod losses;
pub mod neighbors;
pub mod sampling;
pub mod synth;
pub mod train;
pub mod tape;
pub mod tensor;

pub use checkpoint::Checkpoint;
pub use embedding::{Embedding, MemoryBank, SoftmaxParams};
pub use neighbors::{ClusterAssignment, NeighborSets};
pub use tape::{Gradients, Tape, TensorId};
pub use tensor::{Tensor, TensorError};
