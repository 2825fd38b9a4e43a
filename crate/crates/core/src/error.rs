//! Error types shared across the crate.

use thiserror::Error;

/// Errors raised by embedding primitives, losses, samplers, the trainer,
/// evaluation and the complexity probe.
#[derive(Debug, Error)]
pub enum Error {
    /// A vector with zero Euclidean norm cannot be length-normalized.
    #[error("cannot normalize a zero vector")]
    Normalization,

    /// A class in a minibatch has fewer than two instances, so its
    /// leave-one-out centroid would average zero vectors.
    #[error("class {class} has {count} instance(s); at least 2 are required")]
    DegenerateClass { class: usize, count: usize },

    /// A softmax-style denominator has no terms (for example a single-class
    /// batch with no masked-out proxies).
    #[error("loss denominator is empty: {context}")]
    EmptyDenominator { context: &'static str },

    /// A batch contains no valid (anchor, positive, negative) triplet.
    #[error("batch contains no valid triplet")]
    NoTriplet,

    /// A sampler request cannot be satisfied by the dataset.
    #[error("sampler infeasible: {reason}")]
    Sampler { reason: String },

    /// The training loop produced a non-finite loss.
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    TrainingDiverged { epoch: usize },

    /// An utterance is shorter than the requested scoring segment.
    #[error("utterance of {frames} frame(s) is shorter than segment length {segment_length}")]
    TrialTooShort {
        frames: usize,
        segment_length: usize,
    },

    /// Evaluation inputs are unusable (empty score lists, too few classes).
    #[error("evaluation error: {reason}")]
    Evaluation { reason: String },

    /// The complexity probe was given a degenerate configuration or grid.
    #[error("complexity probe error: {reason}")]
    Probe { reason: String },

    /// A configuration value violates its documented invariant.
    #[error("invalid configuration: {reason}")]
    Config { reason: String },

    /// Reading or writing an artifact (model snapshot, CSV) failed.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// A model snapshot could not be encoded or decoded.
    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
