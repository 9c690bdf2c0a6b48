//! The LRCN forecaster: a shared CNN frame encoder, a bidirectional LSTM over
//! the window, and a linear head on all hidden outputs.

pub mod config;
pub mod network;
pub mod params;
pub mod train;

pub use config::{format_stack, parse_stack, LayerSpec, PVNetConfig};
pub use network::{backward, encode_frame, forward, forward_batch, forward_train, BatchCache, DropoutPlan};
pub use params::{Architecture, ConvLayer, PVNetParams};
pub use train::{
    architecture_for, mse, predict, predict_normalized, predict_windows, train, train_from, EpochLoss, Trained,
};
