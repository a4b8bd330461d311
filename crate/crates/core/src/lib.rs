//! Data side of the velocity-model surrogate: SEG-Y volumes, the synthetic
//! paired-data generator, preprocessing into patch pairs, and evaluation
//! metrics.

pub mod dataset;
pub mod metrics;
pub mod preprocess;
pub mod segy;
pub mod synth;
pub mod volume;

pub use dataset::{Role, VolumeSet};
pub use preprocess::{ChannelMode, NormStats, PatchOrigin, PatchPair, PreprocessStats, Region, SplitSpec};
pub use volume::{Volume3D, VolumeError};
