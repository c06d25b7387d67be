//! Deinterlacing with a two-pathway, shared-trunk convolutional network.
//!
//! The crate covers the whole pipeline: a small tensor/autograd kernel,
//! the network and its weights format, training-data synthesis, training
//! with ADAM, classical intra-field baselines, and PSNR/SSIM/timing
//! evaluation.

pub mod autograd;
pub mod classic;
mod codec;
pub mod color;
pub mod conv;
pub mod data;
pub mod frame;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod tensor;
pub mod train;
pub mod tv;

pub use classic::{deinterlace_classic, BaselineKind};
pub use conv::{ConvSpec, Padding};
pub use frame::{weave, Field, Frame, FrameError, Parity};
pub use metrics::{psnr, ssim, QualityReport, TimingReport};
pub use model::{flop_count, DeinterlaceNet, LayerId, NetConfig};
pub use pipeline::{deinterlace_frame, Method};
pub use tensor::{Element, Shape, Tensor, TensorError};
pub use train::{TrainConfig, Trainer};
