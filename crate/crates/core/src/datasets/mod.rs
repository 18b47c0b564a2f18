//! Dataset ingestion, synthetic generation and the two feature coordinate
//! systems: standardised (classifier) space and min-max (GAN) space.

pub mod dataset;
pub mod gan_space;
pub mod scaler;
pub mod synthetic;

pub use dataset::{Dataset, Format};
pub use gan_space::GanSpaceTransform;
pub use scaler::{ScalerMode, ScalerState};
pub use synthetic::{make_synthetic, ClassSizes, SyntheticSpec};
