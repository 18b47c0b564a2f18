//! Dense tensors, layers with hand-written backward passes, optimizers and
//! seeded random streams.

pub mod gradcheck;
pub mod layers;
pub mod network;
pub mod optim;
pub mod rng;
pub mod tensor;

pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{
    BatchNorm1d, Conv1d, Deconv1d, Dense, Dropout, ForwardCtx, Init, MaxPool1d, Mode, Param, Relu,
    Reshape, Sigmoid,
};
pub use network::{Layer, Module, Sequential};
pub use optim::{Adam, AdamConfig, Sgd, SgdConfig};
pub use rng::{RngStreams, Stream};
pub use tensor::{softmax, DType, Real, Tensor};
