//! Deterministic decision pipeline for open-vocabulary panoptic
//! segmentation over precomputed embeddings and masks.
//!
//! The crate covers the full path from raw per-image tensors to evaluated
//! panoptic output:
//!
//! - [`tensor`]: dense rank-1/2/3 arrays and the shared numeric kernels;
//! - [`concepts`]: category sets, cross-vocabulary similarity, concept trees;
//! - [`adapter`]: feature-map projection, mask pooling, cross-attention;
//! - [`modulation`]: embedding fusion, cosine logits, logit debiasing;
//! - [`matching`]: assignment costs, Hungarian matching, training losses and
//!   their gradient checks;
//! - [`inference`]: proposal filtering, panoptic merge, semantic maps,
//!   hierarchical category paths;
//! - [`metrics`]: PQ/SQ/RQ, mIoU and similarity statistics;
//! - [`fixtures`]: seeded synthetic scenes for tests and demos.
//!
//! Everything is pure and deterministic: no I/O, no global state, and all
//! arithmetic in `f64`.

pub mod adapter;
pub mod concepts;
pub mod error;
pub mod fixtures;
pub mod inference;
pub mod matching;
pub mod metrics;
pub mod modulation;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::DenseTensor;
