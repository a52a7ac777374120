//! Error type shared by every module of the engine.

use thiserror::Error;

/// Errors produced by the decision pipeline, the training-side losses and
/// the evaluation harness.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("invalid tensor shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("non-finite value at flat index {index}")]
    NonFiniteValue { index: usize },

    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },

    #[error("row {row} has norm {norm:.3e}, below the zero-vector threshold")]
    ZeroVector { row: usize, norm: f64 },

    #[error("temperature must be positive, got {tau}")]
    InvalidTemperature { tau: f64 },

    #[error("duplicate category name `{name}`")]
    DuplicateName { name: String },

    #[error("count mismatch: {names} names, {rows} embedding rows, {flags} flags")]
    CountMismatch {
        names: usize,
        rows: usize,
        flags: usize,
    },

    #[error("concept set `{which}` has no categories")]
    EmptyConceptSet { which: String },

    #[error("category tree contains a cycle through node {node}")]
    CycleDetected { node: u64 },

    #[error("category tree has multiple roots: nodes {first} and {second}")]
    MultipleRoots { first: u64, second: u64 },

    #[error("tree node {node} embedding norm {norm} is not unit within {tol}")]
    NonUnitEmbedding { node: u64, norm: f64, tol: f64 },

    #[error("category tree has no nodes")]
    EmptyTree,

    #[error("mask {index} has total weight {sum:.3e}, below the empty-mask threshold")]
    EmptyMask { index: usize, sum: f64 },

    #[error("non-finite cost at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("length mismatch in {context}: {left} vs {right}")]
    LengthMismatch {
        context: String,
        left: usize,
        right: usize,
    },

    #[error("annotated category set is empty")]
    EmptyAnnotation,

    #[error(
        "loss appears non-differentiable at coordinate {index}: \
         forward/backward difference asymmetry {asymmetry:.3e} exceeds {limit:.3e}"
    )]
    NonDifferentiablePoint {
        index: usize,
        asymmetry: f64,
        limit: f64,
    },

    #[error("category {category} out of range for {num_categories} categories")]
    CategoryOutOfRange {
        category: i64,
        num_categories: usize,
    },

    #[error("similarity statistics need at least 2 categories, got {count}")]
    TooFewCategories { count: usize },

    #[error("invalid fixture spec: {reason}")]
    InvalidSpec { reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;
