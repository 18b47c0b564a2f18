//! Architecture hyperparameters. The layer counts are fixed; widths, kernels
//! and dropout rates are not, and come in three presets.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorArch {
    pub noise_dim: usize,
    /// Output channels of the four stride-1 convolutions.
    pub conv_channels: [usize; 4],
    pub conv_kernel: usize,
    /// Width of the first dense layer.
    pub hidden: usize,
    /// Channels of the tensor handed to the first deconvolution.
    pub base_channels: usize,
    /// Output channels of the first two deconvolutions (the last emits 1).
    pub deconv_channels: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorArch {
    pub conv_channels: [usize; 2],
    pub conv_kernel: usize,
    pub hidden: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierArch {
    pub conv_channels: [usize; 3],
    pub conv_kernel: usize,
    pub pool: usize,
    pub conv_dropout: f64,
    pub head_dropout: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub generator: GeneratorArch,
    pub discriminator: DiscriminatorArch,
    pub classifier: ClassifierArch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArchPreset {
    Full,
    Desk,
    Tiny,
}

impl ArchPreset {
    pub fn config(self) -> ArchConfig {
        match self {
            ArchPreset::Full => ArchConfig::full(),
            ArchPreset::Desk => ArchConfig::desk(),
            ArchPreset::Tiny => ArchConfig::tiny(),
        }
    }
}

impl ArchConfig {
    pub fn full() -> Self {
        Self {
            generator: GeneratorArch {
                noise_dim: 100,
                conv_channels: [64, 128, 256, 256],
                conv_kernel: 5,
                hidden: 1024,
                base_channels: 256,
                deconv_channels: [128, 64],
            },
            discriminator: DiscriminatorArch {
                conv_channels: [64, 128],
                conv_kernel: 5,
                hidden: 256,
            },
            classifier: ClassifierArch {
                conv_channels: [32, 64, 128],
                conv_kernel: 5,
                pool: 2,
                conv_dropout: 0.25,
                head_dropout: 0.5,
            },
        }
    }

    /// Narrow widths that train in seconds on one core.
    pub fn desk() -> Self {
        Self {
            generator: GeneratorArch {
                noise_dim: 32,
                conv_channels: [4, 8, 8, 8],
                conv_kernel: 5,
                hidden: 128,
                base_channels: 32,
                deconv_channels: [16, 8],
            },
            discriminator: DiscriminatorArch {
                conv_channels: [8, 16],
                conv_kernel: 5,
                hidden: 64,
            },
            classifier: ClassifierArch {
                conv_channels: [8, 16, 16],
                conv_kernel: 5,
                pool: 2,
                conv_dropout: 0.25,
                head_dropout: 0.5,
            },
        }
    }

    /// Two-channel variants sized for finite-difference gradient checks.
    pub fn tiny() -> Self {
        Self {
            generator: GeneratorArch {
                noise_dim: 6,
                conv_channels: [2, 2, 2, 2],
                conv_kernel: 5,
                hidden: 8,
                base_channels: 2,
                deconv_channels: [2, 2],
            },
            discriminator: DiscriminatorArch {
                conv_channels: [2, 2],
                conv_kernel: 5,
                hidden: 4,
            },
            classifier: ClassifierArch {
                conv_channels: [2, 2, 2],
                conv_kernel: 5,
                pool: 2,
                conv_dropout: 0.25,
                head_dropout: 0.5,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.generator;
        let widths = g
            .conv_channels
            .iter()
            .chain(&g.deconv_channels)
            .chain(&self.discriminator.conv_channels)
            .chain(&self.classifier.conv_channels)
            .chain([&g.noise_dim, &g.hidden, &g.base_channels, &self.discriminator.hidden]);
        if widths.into_iter().any(|&w| w == 0) {
            return Err(Error::config("architecture widths must be positive"));
        }
        for k in [g.conv_kernel, self.discriminator.conv_kernel, self.classifier.conv_kernel] {
            if k % 2 == 0 {
                return Err(Error::config(format!("conv kernel {k} must be odd")));
            }
        }
        let c = &self.classifier;
        if c.pool == 0 {
            return Err(Error::config("classifier pool window must be positive"));
        }
        for r in [c.conv_dropout, c.head_dropout] {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::config(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        Ok(())
    }
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self::full()
    }
}
