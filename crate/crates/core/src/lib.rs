//! Phoneme Substitution Profile scoring engine.
//!
//! Scores synthesized Indic speech against native-speaker references along six
//! dimensions: retroflex (RR), aspiration (AF), vowel length (LF) and Tamil zha
//! (ZF) per-phoneme probes, plus the corpus-level Fréchet distances in
//! embedding space (FAD) and prosodic space (PSD).
//!
//! The engine never touches audio. It consumes per-utterance bundles of CTC
//! emissions, frame embeddings and F0 tracks (see [`interchange`]).

pub mod align;
pub mod bootstrap;
pub mod centroids;
pub mod distributional;
pub mod interchange;
pub mod json;
pub mod probes;
pub mod report;
pub mod scorecard;
pub mod synth;
mod types;

pub use types::{Dimension, Language, ParseEnumError};

pub use align::{force_align, greedy_frames, span_embedding, AlignError, AlignmentSpan};
pub use bootstrap::{bootstrap_ci, BootstrapConfig, BootstrapError, ResampleUnit, Statistic};
pub use centroids::{
    build_centroids, build_reference_bank, sample_corpus, CentroidEntry, CentroidError, CentroidSet,
    ReferenceBank,
};
pub use distributional::{
    fit_gaussian, frechet, npvi, prosodic_vector, psd, FrechetResult, GaussianSummary, ProsodicVector,
    StatsError,
};
pub use interchange::{
    load_dimension_tables, read_tensor, validate_bundle, write_tensor, DimensionTable, Tensor,
    TensorError, UtteranceBundle, Violation,
};
pub use probes::{
    aggregate, fidelity, lf_fidelity, normalize_floor, score_per_phoneme, AggregateLevel,
    DimensionScore, ProbeError, TokenFidelity,
};
pub use scorecard::{Scorecard, ScoreOptions};

/// Default collapse threshold on per-token fidelity.
pub const DEFAULT_TAU: f64 = 0.5;

/// Default covariance regularization added to both sides of a Fréchet distance.
pub const DEFAULT_EPS: f64 = 1e-6;
