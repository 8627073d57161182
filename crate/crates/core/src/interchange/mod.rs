//! On-disk interchange between the feature extractor and the scoring engine.

pub mod bundle;
pub mod tables;
pub mod tensor;

pub use bundle::{
    unknown_graphemes, validate_bundle, BundleError, BundleManifest, Corpus, CorpusEntry,
    CorpusManifest, UtteranceBundle, Violation,
};
pub use tables::{
    default_tables, load_dimension_tables, parse_dimension_tables, tables_for, DimensionTable,
    TableError,
};
pub use tensor::{read_tensor, write_tensor, Tensor, TensorError};
