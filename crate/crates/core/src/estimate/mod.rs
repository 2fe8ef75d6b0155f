//! Unsupervised estimators minimising the view-synthesis loss: direct
//! per-snippet optimisation and a toy wrap-convolutional network pair.

pub mod adam;
pub mod checkpoint;
pub mod direct;
pub mod gradcheck;
pub mod graph;
pub mod net;
pub mod train;

pub use adam::Adam;
pub use checkpoint::Checkpoint;
pub use direct::{
    direct_optimize, direct_optimize_from, smoothed_monotone, DirectInit, DirectResult, OptimConfig, Snippet,
    TraceEntry,
};
pub use net::{Model, NetSpec};
pub use train::{train, train_step, train_to_dir, StepRecord, TrainConfig, TrainState};
