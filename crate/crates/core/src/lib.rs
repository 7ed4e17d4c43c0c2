//! Two-stage multi-modal alignment on a synthetic semantic world.
//!
//! Stage one distills data-poor student modality encoders into a frozen
//! teacher (image/text) embedding space with a contrastive loss plus two
//! correspondence-matrix KL losses. Stage two trains a small self-attention
//! fusion module so that any non-empty subset of modalities maps to a single
//! unified embedding. The crate also ships the synthetic dataset machinery
//! (label alignment, description matching, combination manifests, noise
//! injection) and the evaluation harness used to score the result.

pub mod dataset;
pub mod distill;
pub mod error;
pub mod evalkit;
pub mod fusion;
pub mod optim;
pub mod pipeline;
pub mod tape;
pub mod tensor;
pub mod threads;
pub mod world;

pub use error::{OmniBindError, Result};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{kl_rows, l2_normalize_rows, rowwise_softmax, Tensor};
pub use world::{ModalityId, PromptTemplate, Role, SemanticWorld, StudentHead, WorldConfig};
