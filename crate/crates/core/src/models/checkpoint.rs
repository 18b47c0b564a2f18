//! Model checkpoints.
//!
//! Layout (little-endian): magic `RCLM`, u32 version, u32 header length,
//! header JSON (model kind, feature length, class count, architecture), u32
//! tensor count, then per tensor: u32 name length, UTF-8 name, u32 rank, u64
//! dims, f32 payload.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::arch::{ClassifierArch, DiscriminatorArch, GeneratorArch};
use super::nets::{Classifier, Discriminator, Generator};
use crate::error::{Error, Result};
use crate::numeric::Tensor;

const MAGIC: &[u8; 4] = b"RCLM";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ModelHeader {
    Generator {
        feature_dim: usize,
        arch: GeneratorArch,
    },
    Discriminator {
        feature_dim: usize,
        arch: DiscriminatorArch,
    },
    Classifier {
        feature_dim: usize,
        class_count: usize,
        arch: ClassifierArch,
    },
}

/// A model that can be written to and rebuilt from a checkpoint.
pub trait Checkpoint: Sized {
    fn header(&self) -> ModelHeader;
    fn from_header(header: &ModelHeader) -> Result<Self>;
    fn tensors(&self) -> Vec<(String, &Tensor<f32>)>;
    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<f32>)>;
}

fn scratch_rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(0)
}

fn wrong_kind(expected: &str) -> Error {
    Error::Serde(format!("checkpoint does not hold a {expected}"))
}

impl Checkpoint for Generator<f32> {
    fn header(&self) -> ModelHeader {
        ModelHeader::Generator {
            feature_dim: self.feature_dim,
            arch: self.arch.clone(),
        }
    }

    fn from_header(header: &ModelHeader) -> Result<Self> {
        match header {
            ModelHeader::Generator { feature_dim, arch } => Generator::new(*feature_dim, arch, &mut scratch_rng()),
            _ => Err(wrong_kind("generator")),
        }
    }

    fn tensors(&self) -> Vec<(String, &Tensor<f32>)> {
        self.net.named_tensors("net.")
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<f32>)> {
        self.net.named_tensors_mut("net.")
    }
}

impl Checkpoint for Discriminator<f32> {
    fn header(&self) -> ModelHeader {
        ModelHeader::Discriminator {
            feature_dim: self.feature_dim,
            arch: self.arch.clone(),
        }
    }

    fn from_header(header: &ModelHeader) -> Result<Self> {
        match header {
            ModelHeader::Discriminator { feature_dim, arch } => {
                Discriminator::new(*feature_dim, arch, &mut scratch_rng())
            }
            _ => Err(wrong_kind("discriminator")),
        }
    }

    fn tensors(&self) -> Vec<(String, &Tensor<f32>)> {
        self.named_tensors()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<f32>)> {
        self.named_tensors_mut()
    }
}

impl Checkpoint for Classifier<f32> {
    fn header(&self) -> ModelHeader {
        ModelHeader::Classifier {
            feature_dim: self.feature_dim,
            class_count: self.class_count(),
            arch: self.arch.clone(),
        }
    }

    fn from_header(header: &ModelHeader) -> Result<Self> {
        match header {
            ModelHeader::Classifier {
                feature_dim,
                class_count,
                arch,
            } => Classifier::new(*feature_dim, *class_count, arch, &mut scratch_rng()),
            _ => Err(wrong_kind("classifier")),
        }
    }

    fn tensors(&self) -> Vec<(String, &Tensor<f32>)> {
        self.named_tensors()
    }

    fn tensors_mut(&mut self) -> Vec<(String, &mut Tensor<f32>)> {
        self.named_tensors_mut()
    }
}

pub fn to_bytes<M: Checkpoint>(model: &M) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&model.header())?;
    let tensors = model.tensors();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(&header);
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.ndim() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < self.pos + n {
            return Err(Error::Serde(format!(
                "checkpoint truncated at byte offset {}",
                self.bytes.len()
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn read_header(bytes: &[u8]) -> Result<ModelHeader> {
    let mut r = Reader { bytes, pos: 0 };
    header_from(&mut r)
}

fn header_from(r: &mut Reader<'_>) -> Result<ModelHeader> {
    if r.take(4)? != MAGIC {
        return Err(Error::Serde("bad checkpoint magic (expected RCLM)".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Serde(format!("unsupported checkpoint version {version}")));
    }
    let len = r.u32()? as usize;
    Ok(serde_json::from_slice(r.take(len)?)?)
}

pub fn from_bytes<M: Checkpoint>(bytes: &[u8]) -> Result<M> {
    let mut r = Reader { bytes, pos: 0 };
    let header = header_from(&mut r)?;
    let mut model = M::from_header(&header)?;
    let count = r.u32()? as usize;
    let mut slots = model.tensors_mut();
    if count != slots.len() {
        return Err(Error::Serde(format!(
            "checkpoint has {count} tensors, architecture expects {}",
            slots.len()
        )));
    }
    for (name, slot) in slots.iter_mut() {
        let len = r.u32()? as usize;
        let stored = std::str::from_utf8(r.take(len)?)
            .map_err(|_| Error::Serde("tensor name is not UTF-8".into()))?;
        if stored != name {
            return Err(Error::Serde(format!("expected tensor {name}, found {stored}")));
        }
        let rank = r.u32()? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u64()? as usize);
        }
        if shape != slot.shape() {
            return Err(Error::Serde(format!(
                "tensor {name} has shape {shape:?}, architecture expects {:?}",
                slot.shape()
            )));
        }
        let payload = r.take(4 * slot.len())?;
        for (v, chunk) in slot.data_mut().iter_mut().zip(payload.chunks_exact(4)) {
            *v = f32::from_le_bytes(chunk.try_into().unwrap());
        }
    }
    drop(slots);
    if r.pos != bytes.len() {
        return Err(Error::Serde(format!("{} trailing bytes in checkpoint", bytes.len() - r.pos)));
    }
    Ok(model)
}

pub fn save<M: Checkpoint>(model: &M, path: &Path) -> Result<()> {
    std::fs::write(path, to_bytes(model)?).map_err(|e| Error::io(path, e))
}

pub fn load<M: Checkpoint>(path: &Path) -> Result<M> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::ArchConfig;
    use crate::numeric::Module;

    #[test]
    fn classifier_round_trip_is_bit_exact() {
        let a = ArchConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut c = Classifier::<f32>::new(16, 4, &a.classifier, &mut rng).unwrap();
        c.grow(6, &mut rng).unwrap();
        let bytes = to_bytes(&c).unwrap();
        let back: Classifier<f32> = from_bytes(&bytes).unwrap();
        assert_eq!(to_bytes(&back).unwrap(), bytes);
        assert_eq!(back.class_count(), 6);
    }

    #[test]
    fn batch_norm_buffers_survive() {
        let a = ArchConfig::tiny();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut d = Discriminator::<f32>::new(16, &a.discriminator, &mut rng).unwrap();
        let x = Tensor::from_fn(&[4, 16], |i| (i % 7) as f32 / 7.0);
        let mut drop = ChaCha8Rng::seed_from_u64(2);
        d.forward(&x, &mut crate::numeric::ForwardCtx::train(&mut drop)).unwrap();
        let mut back: Discriminator<f32> = from_bytes(&to_bytes(&d).unwrap()).unwrap();
        let mut ctx = crate::numeric::ForwardCtx::eval();
        assert_eq!(d.forward(&x, &mut ctx).unwrap(), back.forward(&x, &mut ctx).unwrap());
    }

    #[test]
    fn kind_mismatch_and_truncation_fail() {
        let a = ArchConfig::tiny();
        let g = Generator::<f32>::new(16, &a.generator, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let bytes = to_bytes(&g).unwrap();
        assert!(from_bytes::<Classifier<f32>>(&bytes).is_err());
        assert!(from_bytes::<Generator<f32>>(&bytes[..bytes.len() - 1]).is_err());
        assert!(matches!(read_header(&bytes).unwrap(), ModelHeader::Generator { feature_dim: 16, .. }));
    }
}
