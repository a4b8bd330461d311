//! Conditional GAN for seismic-to-velocity translation: a UNet generator,
//! a PatchGAN discriminator, their losses, Adam, and the training loop.
//!
//! Everything is generic over [`Real`]; training uses `f32`, gradient
//! checks `f64`. Computation is single-threaded and seeded, so a run is
//! reproducible bit-for-bit.

pub mod adam;
pub mod checkpoint;
pub mod discriminator;
pub mod generator;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod tensor;
pub mod train;

pub use adam::{adam_update, AdamState, OptimConfig};
pub use checkpoint::{Checkpoint, CheckpointHeader};
pub use discriminator::{DiscLayer, Discriminator, DiscriminatorSpec};
pub use generator::{Generator, GeneratorSpec, NoiseMode};
pub use layers::{ForwardCtx, Layer, Param};
pub use loss::{AdversarialForm, LossConfig};
pub use tensor::Real;
pub use train::{Batch, EpochLosses, StepLosses, TrainState};

#[derive(Debug, thiserror::Error)]
pub enum NetError {
    #[error("invalid network spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("non-finite {component}: {value}")]
    NonFiniteLoss { component: &'static str, value: f64 },
    #[error("epoch callback failed: {0}")]
    Callback(train::CallbackError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
