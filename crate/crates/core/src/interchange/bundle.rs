//! Utterance bundles and corpus directories.
//!
//! A bundle is a directory:
//!
//! ```text
//! <utterance>/
//!   manifest.json    id, language, text, frame_hop_ms, vocab, blank_index, duration_s, speaker_id
//!   emissions.pspt   T×V log-probabilities
//!   embeddings.pspt  T×D frame embeddings
//!   f0.pspt          length-T F0 in Hz, 0 at unvoiced frames
//! ```
//!
//! A corpus is a directory holding `corpus.json` plus one bundle directory
//! per utterance.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tensor::{read_tensor, write_tensor, Tensor, TensorError};
use super::tables::DimensionTable;
use crate::Language;

pub const BUNDLE_MANIFEST: &str = "manifest.json";
pub const CORPUS_MANIFEST: &str = "corpus.json";
pub const EMISSIONS_FILE: &str = "emissions.pspt";
pub const EMBEDDINGS_FILE: &str = "embeddings.pspt";
pub const F0_FILE: &str = "f0.pspt";

/// Tolerance on `logsumexp(row)` for an emission row to count as normalized.
pub const ROW_NORM_TOLERANCE: f64 = 1e-3;

fn default_hop_ms() -> f64 {
    20.0
}

#[derive(Debug, thiserror::Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Tensor {
        path: String,
        #[source]
        source: TensorError,
    },
}

/// Metadata half of a bundle, stored as `manifest.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleManifest {
    pub id: String,
    pub language: Language,
    pub text: String,
    #[serde(default = "default_hop_ms")]
    pub frame_hop_ms: f64,
    pub vocab: Vec<String>,
    pub blank_index: usize,
    pub duration_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
    /// Producer metadata we carry but do not interpret (f0 method, model ids, ...).
    #[serde(flatten)]
    pub extra: BTreeMap<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceBundle {
    pub id: String,
    pub language: Language,
    pub text: String,
    pub frame_hop_ms: f64,
    /// T×V log-probabilities.
    pub emissions: Array2<f32>,
    /// T×D frame embeddings.
    pub embeddings: Array2<f32>,
    /// Length T, 0.0 at unvoiced frames.
    pub f0_hz: Array1<f32>,
    pub vocab: Vec<String>,
    pub blank_index: usize,
    pub duration_s: f64,
    pub speaker_id: Option<String>,
    pub extra: BTreeMap<String, serde_json::Value>,
}

impl UtteranceBundle {
    pub fn n_frames(&self) -> usize {
        self.emissions.nrows()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.ncols()
    }

    pub fn vocab_index(&self) -> HashMap<&str, usize> {
        let mut map = HashMap::with_capacity(self.vocab.len());
        for (i, g) in self.vocab.iter().enumerate() {
            map.entry(g.as_str()).or_insert(i);
        }
        map
    }

    pub fn manifest(&self) -> BundleManifest {
        BundleManifest {
            id: self.id.clone(),
            language: self.language,
            text: self.text.clone(),
            frame_hop_ms: self.frame_hop_ms,
            vocab: self.vocab.clone(),
            blank_index: self.blank_index,
            duration_s: self.duration_s,
            speaker_id: self.speaker_id.clone(),
            extra: self.extra.clone(),
        }
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, BundleError> {
        let dir = dir.as_ref();
        let manifest: BundleManifest = read_json(&dir.join(BUNDLE_MANIFEST))?;
        let emissions = load_tensor(&dir.join(EMISSIONS_FILE), |t| t.into_array2())?;
        let embeddings = load_tensor(&dir.join(EMBEDDINGS_FILE), |t| t.into_array2())?;
        let f0_hz = load_tensor(&dir.join(F0_FILE), |t| t.into_array1())?;
        Ok(UtteranceBundle {
            id: manifest.id,
            language: manifest.language,
            text: manifest.text,
            frame_hop_ms: manifest.frame_hop_ms,
            emissions,
            embeddings,
            f0_hz,
            vocab: manifest.vocab,
            blank_index: manifest.blank_index,
            duration_s: manifest.duration_s,
            speaker_id: manifest.speaker_id,
            extra: manifest.extra,
        })
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), BundleError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| BundleError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_json(&dir.join(BUNDLE_MANIFEST), &self.manifest())?;
        save_tensor(&dir.join(EMISSIONS_FILE), &Tensor::from_array2(&self.emissions))?;
        save_tensor(&dir.join(EMBEDDINGS_FILE), &Tensor::from_array2(&self.embeddings))?;
        save_tensor(&dir.join(F0_FILE), &Tensor::from_array1(&self.f0_hz))?;
        Ok(())
    }
}

fn load_tensor<T>(
    path: &Path,
    convert: impl FnOnce(Tensor) -> Result<T, TensorError>,
) -> Result<T, BundleError> {
    read_tensor(path)
        .and_then(convert)
        .map_err(|source| BundleError::Tensor {
            path: path.display().to_string(),
            source,
        })
}

fn save_tensor(path: &Path, t: &Tensor) -> Result<(), BundleError> {
    write_tensor(path, t).map_err(|source| BundleError::Tensor {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, BundleError> {
    let text = fs::read_to_string(path).map_err(|source| BundleError::Io {
        path: path.display().to_string(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| BundleError::Json {
        path: path.display().to_string(),
        source,
    })
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), BundleError> {
    let text = serde_json::to_string_pretty(value).map_err(|source| BundleError::Json {
        path: path.display().to_string(),
        source,
    })?;
    fs::write(path, text + "\n").map_err(|source| BundleError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: String,
    /// Bundle directory, relative to the corpus directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speaker_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub corpus_id: String,
    pub language: Language,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<String>,
    pub utterances: Vec<CorpusEntry>,
}

impl CorpusManifest {
    pub fn load(corpus_dir: impl AsRef<Path>) -> Result<Self, BundleError> {
        read_json(&corpus_dir.as_ref().join(CORPUS_MANIFEST))
    }

    pub fn save(&self, corpus_dir: impl AsRef<Path>) -> Result<(), BundleError> {
        let dir = corpus_dir.as_ref();
        fs::create_dir_all(dir).map_err(|source| BundleError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        write_json(&dir.join(CORPUS_MANIFEST), self)
    }
}

/// A corpus directory with its manifest.
#[derive(Debug, Clone)]
pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: CorpusManifest,
}

impl Corpus {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, BundleError> {
        let dir = dir.as_ref().to_path_buf();
        let manifest = CorpusManifest::load(&dir)?;
        Ok(Corpus { dir, manifest })
    }

    /// Writes `bundles` under `dir`, one subdirectory per utterance id.
    pub fn write(
        dir: impl AsRef<Path>,
        corpus_id: &str,
        language: Language,
        system: Option<&str>,
        bundles: &[UtteranceBundle],
    ) -> Result<Self, BundleError> {
        let dir = dir.as_ref().to_path_buf();
        let mut utterances = Vec::with_capacity(bundles.len());
        for b in bundles {
            b.save(dir.join(&b.id))?;
            utterances.push(CorpusEntry {
                id: b.id.clone(),
                path: b.id.clone(),
                speaker_id: b.speaker_id.clone(),
            });
        }
        let manifest = CorpusManifest {
            corpus_id: corpus_id.to_string(),
            language,
            system: system.map(str::to_string),
            utterances,
        };
        manifest.save(&dir)?;
        Ok(Corpus { dir, manifest })
    }

    /// Loads and validates bundles, dropping the ones that fail. Returns the
    /// survivors in manifest order and one message per dropped utterance.
    pub fn load_valid(&self, ids: Option<&[String]>) -> (Vec<UtteranceBundle>, Vec<String>) {
        let mut ok = Vec::new();
        let mut problems = Vec::new();
        for (id, b) in self.load_bundles(ids) {
            match b {
                Err(e) => problems.push(format!("{id}: {e}")),
                Ok(b) if b.language != self.manifest.language => problems.push(format!(
                    "{id}: language {} does not match corpus language {}",
                    b.language, self.manifest.language
                )),
                Ok(b) => {
                    let v = validate_bundle(&b);
                    if v.is_empty() {
                        ok.push(b);
                    } else {
                        let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
                        problems.push(format!("{id}: {}", parts.join("; ")));
                    }
                }
            }
        }
        (ok, problems)
    }

    /// Loads the bundles for `ids` (all entries when `None`), in manifest order.
    /// Loading runs in parallel; failures are returned per entry.
    pub fn load_bundles(
        &self,
        ids: Option<&[String]>,
    ) -> Vec<(String, Result<UtteranceBundle, BundleError>)> {
        let entries: Vec<&CorpusEntry> = match ids {
            None => self.manifest.utterances.iter().collect(),
            Some(ids) => {
                let wanted: std::collections::HashSet<&str> =
                    ids.iter().map(String::as_str).collect();
                self.manifest
                    .utterances
                    .iter()
                    .filter(|e| wanted.contains(e.id.as_str()))
                    .collect()
            }
        };
        entries
            .par_iter()
            .map(|e| (e.id.clone(), UtteranceBundle::load(self.dir.join(&e.path))))
            .collect()
    }
}

/// One failed bundle invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    pub field: &'static str,
    pub message: String,
}

impl Violation {
    fn new(field: &'static str, message: impl Into<String>) -> Self {
        Violation {
            field,
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

pub(crate) fn logsumexp(row: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = row.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if !max.is_finite() {
        return max;
    }
    max + row.into_iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Checks every bundle invariant. An empty list means the bundle is valid.
/// Violations come back in a fixed field order.
pub fn validate_bundle(bundle: &UtteranceBundle) -> Vec<Violation> {
    let mut out = Vec::new();
    let t_emit = bundle.emissions.nrows();
    let v = bundle.emissions.ncols();

    if bundle.id.trim().is_empty() {
        out.push(Violation::new("id", "empty id"));
    }
    if bundle.text.trim().is_empty() {
        out.push(Violation::new("text", "empty text"));
    }
    if !(bundle.frame_hop_ms.is_finite() && bundle.frame_hop_ms > 0.0) {
        out.push(Violation::new(
            "frame_hop_ms",
            format!("must be > 0, got {}", bundle.frame_hop_ms),
        ));
    }
    if !(bundle.duration_s.is_finite() && bundle.duration_s > 0.0) {
        out.push(Violation::new(
            "duration_s",
            format!("must be > 0, got {}", bundle.duration_s),
        ));
    }
    if t_emit == 0 || v == 0 {
        out.push(Violation::new("emissions", "empty emission matrix"));
    }
    if bundle.vocab.len() != v {
        out.push(Violation::new(
            "vocab",
            format!("vocab size {} != emission width {}", bundle.vocab.len(), v),
        ));
    }
    if bundle.blank_index >= v {
        out.push(Violation::new(
            "blank_index",
            format!("blank_index {} outside [0, {})", bundle.blank_index, v),
        ));
    }

    let mut bad_rows = Vec::new();
    let mut nan_rows = 0usize;
    for (t, row) in bundle.emissions.outer_iter().enumerate() {
        if row.iter().any(|x| x.is_nan() || *x == f32::INFINITY) {
            nan_rows += 1;
            continue;
        }
        let lse = logsumexp(row.iter().map(|&x| x as f64));
        if !(lse.abs() <= ROW_NORM_TOLERANCE) {
            bad_rows.push(t);
        }
    }
    if nan_rows > 0 {
        out.push(Violation::new(
            "emissions",
            format!("{nan_rows} rows contain NaN or +inf"),
        ));
    }
    if let Some(&first) = bad_rows.first() {
        out.push(Violation::new(
            "emissions",
            format!(
                "row not normalized: {} rows with |logsumexp| > {ROW_NORM_TOLERANCE}, first at frame {first}",
                bad_rows.len()
            ),
        ));
    }

    if bundle.embeddings.nrows() != t_emit {
        out.push(Violation::new(
            "embeddings",
            format!(
                "frame count mismatch: emissions T={} embeddings T={}",
                t_emit,
                bundle.embeddings.nrows()
            ),
        ));
    }
    if bundle.embeddings.ncols() == 0 {
        out.push(Violation::new("embeddings", "zero embedding width"));
    }
    if bundle.embeddings.iter().any(|x| !x.is_finite()) {
        out.push(Violation::new("embeddings", "non-finite values"));
    }

    if bundle.f0_hz.len() != t_emit {
        out.push(Violation::new(
            "f0_hz",
            format!(
                "frame count mismatch: emissions T={} f0 T={}",
                t_emit,
                bundle.f0_hz.len()
            ),
        ));
    }
    if bundle.f0_hz.iter().any(|x| !x.is_finite() || *x < 0.0) {
        out.push(Violation::new("f0_hz", "values must be finite and >= 0"));
    }
    out
}

/// Table graphemes missing from the bundle's aligner vocabulary. These are
/// warnings: such graphemes can never be aligned or scored for this bundle.
pub fn unknown_graphemes(bundle: &UtteranceBundle, tables: &[DimensionTable]) -> Vec<String> {
    let vocab = bundle.vocab_index();
    let mut missing: Vec<String> = tables
        .iter()
        .filter(|t| t.language == bundle.language)
        .flat_map(|t| t.native_graphemes.iter().chain(t.substitute_graphemes.iter()))
        .filter(|g| !vocab.contains_key(g.as_str()))
        .cloned()
        .collect();
    missing.sort();
    missing.dedup();
    missing
}
