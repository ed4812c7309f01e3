//! The network: blocks, U-Net, loss and weights.

mod blocks;
mod config;
mod loss;
mod unet;
mod weights;

pub use blocks::{
    fce_ssm, fce_ssm_graph, fce_ssm_trace, frssb, frssb_graph, frssb_param_count, fsi_ssm, fsi_ssm_graph,
    fsi_ssm_trace, init_fce, init_frssb, init_fsi, seq_transform_param_count, FceTaps, FceTrace, FsiTaps, FsiTrace,
};
pub use config::{ModelConfig, ALL_CLASSIC, ALL_SPECTRAL, DEFAULT_LAMBDA};
pub use loss::{loss_total, loss_total_graph};
pub use unet::{forward, forward_graph, parameter_count};
pub use weights::{BoundParams, ModelWeights, ParamStore};
