//! Layered recurrent energy-based networks with feedforward-initialized
//! relaxation.
//!
//! A network is a stack of layers `h_0 = v, h_1, ..., h_L` where every hidden
//! unit receives two dendritic predictions: a bottom-up one from the layer
//! below and a top-down one from the layer above. Inference clamps the visible
//! layer and relaxes the hidden layers toward a fixed point where the
//! gain-weighted average of the branch predictions reproduces each unit's
//! state. When consecutive layers form a good auto-encoder, a single
//! feedforward sweep already lands on that fixed point.
//!
//! - [`network`]: parameters, states, branch predictions, feedforward sweep
//! - [`energy`]: the layered energy and its gradient (tied networks only)
//! - [`inference`]: direct, leaky and Langevin relaxation with traces
//! - [`learning`]: random tied weights and greedy stacked auto-encoders
//! - [`dataset`]: in-memory datasets and synthetic generators
//!
//! The crate is `no_std` and only needs `alloc`. The `std` feature turns on
//! runtime SIMD dispatch in the matrix products used by training.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod dataset;
pub mod energy;
pub mod error;
pub mod inference;
pub mod learning;
pub mod linalg;
pub mod network;

pub use dataset::{synth_autoencodable, synth_blobs, DataSource, Dataset};
pub use energy::EnergyModel;
pub use error::{Error, Result};
pub use inference::{
    direct_update_layer, infer_from_feedforward, relax, ConvergenceTrace, RelaxationConfig, Scheme,
};
pub use learning::{
    init_random_tied, local_branch_update, reconstruction_error, train_stacked_ae, training_init,
    EpochRecord, Optimizer, TrainConfig, TrainLog, TrainRule,
};
pub use linalg::Matrix;
pub use network::{Activation, BranchGains, LayerSpec, NetworkParams, NetworkState};
