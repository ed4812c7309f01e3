//! Fourier-space selective state-space image deraining at desk scale.
//!
//! The crate is layered bottom-up:
//!
//! - [`tensor`], [`ops`]: dense `f64` tensors and the primitive kernels.
//! - [`fourier`]: unitary 2D and channel-axis DFTs, amplitude/phase, and the
//!   Hermitian half spectrum.
//! - [`scan`]: frequency-space and spatial scan orders.
//! - [`ssm`]: the selective scan and the sequence transform built on it.
//! - [`autodiff`], [`optim`]: reverse-mode gradients and Adam.
//! - [`net`]: blocks, the U-Net, the loss, and weight persistence.
//! - [`harness`]: synthetic data, metrics, training, ablation.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::type_complexity,
    clippy::needless_range_loop
)]

pub mod autodiff;
pub mod error;
pub mod fourier;
pub mod harness;
pub mod net;
pub mod ops;
pub mod optim;
pub mod rng;
pub mod scan;
pub mod ssm;
pub mod tensor;

pub use error::{Error, Result};
pub use scan::{ScanOrder, ScanVariant};
pub use tensor::Tensor;
