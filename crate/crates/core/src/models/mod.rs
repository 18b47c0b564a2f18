//! Network architectures and checkpoints.

pub mod arch;
pub mod checkpoint;
pub mod nets;

pub use arch::{ArchConfig, ArchPreset, ClassifierArch, DiscriminatorArch, GeneratorArch};
pub use checkpoint::{Checkpoint, ModelHeader};
pub use nets::{Classifier, Discriminator, Generator, MIN_FEATURE_DIM};
