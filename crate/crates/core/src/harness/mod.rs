//! Everything around the math: data, metrics, training and checks.

pub mod ablation;
pub mod cli;
pub mod gradsuite;
pub mod image_io;
pub mod metrics;
pub mod rain;
pub mod train;
