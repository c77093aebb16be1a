//! Tensor and autodiff substrate plus the NAS-Bench-201 cell space.

pub mod error;
pub mod gradcheck;
pub mod mlp;
pub mod model;
pub mod network;
pub mod objective;
pub mod params;
pub mod scalar;
pub mod space;
pub mod tape;
pub mod tensor;

pub use error::{Result, TensorError};
pub use mlp::Mlp;
pub use model::{BnMode, Classifier, CrossEntropyObjective, ForwardOpts, ForwardTrace, Frozen, Model};
pub use network::{MacroConfig, Network};
pub use objective::{dot, hvp, hvp_with, norm, value_and_grad, HvpMethod, Objective};
pub use params::{ParamKind, ParamSet};
pub use scalar::{Dual, Scalar};
pub use space::{canonical_form, information_flow_key, ArchEncoding, CanonicalKey, OpId};
pub use tape::{ChannelStats, Tape, Var};
pub use tensor::Tensor;
