//! Multi-coordinate-frame MLP (MC-MLP) for image classification, built from first
//! principles.
//!
//! Each mixer changes the coordinate frame of a token slab with an orthogonal
//! transform (2D Walsh–Hadamard or 2D DCT-II), concatenates the transformed slab
//! with the original along channels, and feeds the result through
//! LayerNorm → MLP with a residual connection. An MC-Block chains a Hadamard
//! mixer and a DCT mixer.
//!
//! Crate layout:
//! - [`tensor`], [`autograd`]: dense tensors and a tape-based reverse-mode engine.
//! - [`transforms`]: fast and reference DCT-II / Walsh–Hadamard kernels.
//! - [`model`]: configuration, parameters and forward pass of the network.
//! - [`train`]: AdamW, warmup + cosine schedule, mixup / cutmix, epoch loop.
//! - [`data`], [`checkpoint`], [`config_file`], [`run`]: CIFAR-100 ingestion and
//!   run persistence.
//! - [`verify`], [`timing`]: oracle suites and complexity measurements.

pub mod autograd;
pub mod checkpoint;
pub mod config_file;
pub mod data;
pub mod element;
pub mod error;
pub mod model;
pub mod run;
pub mod tensor;
pub mod timing;
pub mod train;
pub mod transforms;
pub mod verify;

pub use autograd::{finite_diff_grad, Tape, Var};
pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config_file::RunConfig;
pub use element::Element;
pub use error::{Error, Result};
pub use model::{count_macs, count_params, Model, ModelConfig};
pub use tensor::Tensor;
pub use train::TrainConfig;
pub use transforms::TransformKind;
