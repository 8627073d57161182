//! Native and substitute phoneme centroids, plus utterance-level reference
//! banks for the corpus-level distances.
//!
//! Centroid bags collect the frame embeddings at every frame whose greedy
//! aligner label is the bag's grapheme, in utterances whose text contains
//! that grapheme. A substitute bag only draws from utterances that also
//! contributed to its native bag, so both centroids share recording
//! conditions.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::{align_bundle, greedy_frames};
use crate::distributional::prosodic_vector;
use crate::interchange::bundle::{read_json, write_json, BundleError};
use crate::interchange::{tables_for, CorpusManifest, DimensionTable, Tensor, TensorError, UtteranceBundle};
use crate::probes::DurationContrast;
use crate::{Dimension, Language};

pub const CENTROID_SCHEMA: &str = "psp_centroids_v1";
pub const BANK_SCHEMA: &str = "psp_reference_bank_v1";
pub const CENTROID_INDEX: &str = "index.json";
pub const BANK_INDEX: &str = "bank.json";
pub const DEFAULT_SPEAKER_CAP: usize = 25;

#[derive(Debug, thiserror::Error)]
pub enum CentroidError {
    #[error("{found} speakers, need at least {required}")]
    TooFewSpeakers { found: usize, required: usize },
    #[error("utterance {0} has no speaker_id")]
    MissingSpeaker(String),
    #[error("speaker {speaker} contributes {clips} clips, cap is {cap}")]
    SpeakerCapExceeded {
        speaker: String,
        clips: usize,
        cap: usize,
    },
    #[error("bundles mix languages {0} and {1}")]
    MixedLanguages(Language, Language),
    #[error("no bundles")]
    EmptyCorpus,
    #[error("{what}: need at least 2 rows, got {got}")]
    TooFewSamples { what: &'static str, got: usize },
    #[error("embedding width {found} differs from {expected} in {id}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        found: usize,
    },
    #[error("{0}")]
    Schema(String),
    #[error(transparent)]
    Bundle(#[from] BundleError),
}

fn tensor_err(path: &Path, source: TensorError) -> CentroidError {
    CentroidError::Bundle(BundleError::Tensor {
        path: path.display().to_string(),
        source,
    })
}

fn io_err(path: &Path, source: std::io::Error) -> CentroidError {
    CentroidError::Bundle(BundleError::Io {
        path: path.display().to_string(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleConfig {
    /// Maximum clips per speaker.
    pub cap: usize,
    pub min_speakers: usize,
    /// Stop after this many clips, drawing round-robin across speakers.
    pub max_total: Option<usize>,
    pub seed: u64,
}

impl SampleConfig {
    pub fn for_language(language: Language, seed: u64) -> Self {
        SampleConfig {
            cap: DEFAULT_SPEAKER_CAP,
            min_speakers: language.min_speakers(),
            max_total: None,
            seed,
        }
    }
}

/// Samples utterance ids uniformly across speakers without replacement,
/// at most `cap` per speaker. Speakers are visited in sorted order and each
/// speaker's clips are shuffled from one seeded stream, so the result is a
/// pure function of the manifest and the seed.
pub fn sample_corpus(manifest: &CorpusManifest, config: &SampleConfig) -> Result<Vec<String>, CentroidError> {
    let mut by_speaker: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for e in &manifest.utterances {
        let spk = e
            .speaker_id
            .as_deref()
            .ok_or_else(|| CentroidError::MissingSpeaker(e.id.clone()))?;
        by_speaker.entry(spk).or_default().push(e.id.as_str());
    }
    if by_speaker.len() < config.min_speakers {
        return Err(CentroidError::TooFewSpeakers {
            found: by_speaker.len(),
            required: config.min_speakers,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut pools: Vec<Vec<&str>> = by_speaker
        .into_values()
        .map(|mut ids| {
            ids.sort_unstable();
            ids.shuffle(&mut rng);
            ids.truncate(config.cap);
            ids
        })
        .collect();

    let limit = config.max_total.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    let mut round = 0;
    while out.len() < limit && pools.iter().any(|p| round < p.len()) {
        for p in pools.iter_mut() {
            if out.len() >= limit {
                break;
            }
            if let Some(id) = p.get(round) {
                out.push(id.to_string());
            }
        }
        round += 1;
    }
    Ok(out)
}

/// Native and substitute centroids for one native grapheme.
#[derive(Debug, Clone, PartialEq)]
pub struct CentroidEntry {
    pub dimension: Dimension,
    pub native: String,
    pub substitute: String,
    pub native_centroid: Vec<f32>,
    pub substitute_centroid: Vec<f32>,
    pub native_count: usize,
    pub substitute_count: usize,
    /// Utterances that contributed frames to each bag, in id order.
    pub native_utterances: Vec<String>,
    pub substitute_utterances: Vec<String>,
}

impl CentroidEntry {
    pub fn native_f64(&self) -> Vec<f64> {
        self.native_centroid.iter().map(|&v| v as f64).collect()
    }

    pub fn substitute_f64(&self) -> Vec<f64> {
        self.substitute_centroid.iter().map(|&v| v as f64).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub corpus_id: String,
    pub speaker_count: usize,
    pub clips_per_speaker: BTreeMap<String, usize>,
    /// Utterances the centroids were built from; held-out sets must avoid them.
    pub utterance_ids: Vec<String>,
    /// Long/short vowel duration ratio measured on this corpus.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_measured_ratio: Option<f64>,
    /// Prior used for LF scoring: the table's configured ratio when present,
    /// else the measured one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_native_ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentroidSet {
    pub language: Language,
    pub embedding_dim: usize,
    pub entries: BTreeMap<(Dimension, String), CentroidEntry>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct IndexEntry {
    dimension: Dimension,
    native: String,
    substitute: String,
    native_count: usize,
    substitute_count: usize,
    native_file: String,
    substitute_file: String,
    #[serde(default)]
    native_utterances: Vec<String>,
    #[serde(default)]
    substitute_utterances: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct CentroidIndex {
    schema: String,
    language: Language,
    embedding_dim: usize,
    entries: Vec<IndexEntry>,
    provenance: Provenance,
}

impl CentroidSet {
    pub fn entry(&self, dimension: Dimension, native: &str) -> Option<&CentroidEntry> {
        self.entries.get(&(dimension, native.to_string()))
    }

    fn index(&self) -> CentroidIndex {
        let entries = self
            .entries
            .values()
            .enumerate()
            .map(|(i, e)| IndexEntry {
                dimension: e.dimension,
                native: e.native.clone(),
                substitute: e.substitute.clone(),
                native_count: e.native_count,
                substitute_count: e.substitute_count,
                native_file: format!("{}_{i:03}_native.pspt", e.dimension),
                substitute_file: format!("{}_{i:03}_substitute.pspt", e.dimension),
                native_utterances: e.native_utterances.clone(),
                substitute_utterances: e.substitute_utterances.clone(),
            })
            .collect();
        CentroidIndex {
            schema: CENTROID_SCHEMA.to_string(),
            language: self.language,
            embedding_dim: self.embedding_dim,
            entries,
            provenance: self.provenance.clone(),
        }
    }

    /// Writes `index.json` plus one tensor file per centroid.
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), CentroidError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let index = self.index();
        for (ie, e) in index.entries.iter().zip(self.entries.values()) {
            for (file, v) in [
                (&ie.native_file, &e.native_centroid),
                (&ie.substitute_file, &e.substitute_centroid),
            ] {
                let p = dir.join(file);
                crate::interchange::write_tensor(&p, &Tensor::vector(v.clone()))
                    .map_err(|e| tensor_err(&p, e))?;
            }
        }
        write_json(&dir.join(CENTROID_INDEX), &index)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, CentroidError> {
        let dir = dir.as_ref();
        let index: CentroidIndex = read_json(&dir.join(CENTROID_INDEX))?;
        if index.schema != CENTROID_SCHEMA {
            return Err(CentroidError::Schema(format!(
                "unsupported centroid schema {:?}",
                index.schema
            )));
        }
        let mut entries = BTreeMap::new();
        for ie in index.entries {
            let read = |file: &str| -> Result<Vec<f32>, CentroidError> {
                let p = dir.join(file);
                let v = crate::interchange::read_tensor(&p)
                    .and_then(|t| t.into_array1())
                    .map_err(|e| tensor_err(&p, e))?;
                if v.len() != index.embedding_dim {
                    return Err(CentroidError::DimensionMismatch {
                        id: file.to_string(),
                        expected: index.embedding_dim,
                        found: v.len(),
                    });
                }
                Ok(v.to_vec())
            };
            let native_centroid = read(&ie.native_file)?;
            let substitute_centroid = read(&ie.substitute_file)?;
            entries.insert(
                (ie.dimension, ie.native.clone()),
                CentroidEntry {
                    dimension: ie.dimension,
                    native: ie.native,
                    substitute: ie.substitute,
                    native_centroid,
                    substitute_centroid,
                    native_count: ie.native_count,
                    substitute_count: ie.substitute_count,
                    native_utterances: ie.native_utterances,
                    substitute_utterances: ie.substitute_utterances,
                },
            );
        }
        Ok(CentroidSet {
            language: index.language,
            embedding_dim: index.embedding_dim,
            entries,
            provenance: index.provenance,
        })
    }

    /// SHA-256 over the index and every centroid payload.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.index()).expect("index serializes"));
        for e in self.entries.values() {
            h.update(Tensor::vector(e.native_centroid.clone()).to_bytes());
            h.update(Tensor::vector(e.substitute_centroid.clone()).to_bytes());
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CentroidConfig {
    pub cap: usize,
}

impl Default for CentroidConfig {
    fn default() -> Self {
        CentroidConfig {
            cap: DEFAULT_SPEAKER_CAP,
        }
    }
}

/// Embedding sums for one (dimension, native grapheme) bag pair.
#[derive(Debug, Clone, Default)]
struct BagPartial {
    native_sum: Vec<f64>,
    native_n: usize,
    substitute_sum: Vec<f64>,
    substitute_n: usize,
    native_ids: Vec<String>,
    substitute_ids: Vec<String>,
}

impl BagPartial {
    fn merge(mut self, other: &BagPartial) -> BagPartial {
        fn add(a: &mut Vec<f64>, b: &[f64]) {
            if a.is_empty() {
                a.extend_from_slice(b);
            } else if !b.is_empty() {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
            }
        }
        add(&mut self.native_sum, &other.native_sum);
        add(&mut self.substitute_sum, &other.substitute_sum);
        self.native_n += other.native_n;
        self.substitute_n += other.substitute_n;
        self.native_ids.extend_from_slice(&other.native_ids);
        self.substitute_ids.extend_from_slice(&other.substitute_ids);
        self
    }
}

type Partials = BTreeMap<(Dimension, String), BagPartial>;

fn merge_partials(a: Partials, b: &Partials) -> Partials {
    let mut out = a;
    for (k, v) in b {
        let cur = out.remove(k).unwrap_or_default();
        out.insert(k.clone(), cur.merge(v));
    }
    out
}

/// Pairwise tree reduction in slice order.
fn tree_reduce(parts: &[Partials]) -> Partials {
    match parts.len() {
        0 => Partials::new(),
        1 => parts[0].clone(),
        n => {
            let (l, r) = parts.split_at(n / 2);
            merge_partials(tree_reduce(l), &tree_reduce(r))
        }
    }
}

fn bundle_partials(bundle: &UtteranceBundle, tables: &[&DimensionTable]) -> Partials {
    let labels = greedy_frames(bundle.emissions.view());
    let frames_for = |g: &str| -> (Vec<f64>, usize) {
        let mut sum = vec![0.0; bundle.embedding_dim()];
        let mut n = 0;
        for (t, &l) in labels.iter().enumerate() {
            if l != bundle.blank_index && bundle.vocab[l] == g {
                for (s, &v) in sum.iter_mut().zip(bundle.embeddings.row(t)) {
                    *s += v as f64;
                }
                n += 1;
            }
        }
        (sum, n)
    };
    let mut out = Partials::new();
    for table in tables.iter().filter(|t| t.dimension.is_centroid_probe()) {
        for (native, cognate) in &table.cognate_map {
            if !bundle.text.contains(native.as_str()) {
                continue;
            }
            let (native_sum, native_n) = frames_for(native);
            if native_n == 0 {
                continue;
            }
            let (substitute_sum, substitute_n) = if bundle.text.contains(cognate.as_str()) {
                frames_for(cognate)
            } else {
                (Vec::new(), 0)
            };
            out.insert(
                (table.dimension, native.clone()),
                BagPartial {
                    native_sum,
                    native_n,
                    substitute_sum: if substitute_n > 0 { substitute_sum } else { Vec::new() },
                    substitute_n,
                    native_ids: vec![bundle.id.clone()],
                    substitute_ids: if substitute_n > 0 { vec![bundle.id.clone()] } else { Vec::new() },
                },
            );
        }
    }
    out
}

fn speaker_key(b: &UtteranceBundle) -> String {
    b.speaker_id.clone().unwrap_or_else(|| format!("<{}>", b.id))
}

fn common_language(bundles: &[UtteranceBundle]) -> Result<Language, CentroidError> {
    let first = bundles.first().ok_or(CentroidError::EmptyCorpus)?;
    for b in bundles {
        if b.language != first.language {
            return Err(CentroidError::MixedLanguages(first.language, b.language));
        }
    }
    Ok(first.language)
}

fn check_dims(bundles: &[UtteranceBundle]) -> Result<usize, CentroidError> {
    let d = bundles[0].embedding_dim();
    for b in bundles {
        if b.embedding_dim() != d {
            return Err(CentroidError::DimensionMismatch {
                id: b.id.clone(),
                expected: d,
                found: b.embedding_dim(),
            });
        }
    }
    Ok(d)
}

/// Builds centroids from validated native bundles. Returns the set and the
/// warnings for omitted entries. Bundles are reduced in id order, so the
/// result does not depend on input order.
pub fn build_centroids(
    bundles: &[UtteranceBundle],
    tables: &[DimensionTable],
    corpus_id: &str,
    config: &CentroidConfig,
) -> Result<(CentroidSet, Vec<String>), CentroidError> {
    let language = common_language(bundles)?;
    let embedding_dim = check_dims(bundles)?;
    let mut sorted: Vec<&UtteranceBundle> = bundles.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let mut clips_per_speaker: BTreeMap<String, usize> = BTreeMap::new();
    for b in &sorted {
        *clips_per_speaker.entry(speaker_key(b)).or_default() += 1;
    }
    if let Some((speaker, &clips)) = clips_per_speaker.iter().find(|(_, &n)| n > config.cap) {
        return Err(CentroidError::SpeakerCapExceeded {
            speaker: speaker.clone(),
            clips,
            cap: config.cap,
        });
    }

    let tables = tables_for(tables, language);
    let partials: Vec<Partials> = sorted.par_iter().map(|b| bundle_partials(b, &tables)).collect();
    let total = tree_reduce(&partials);

    let mut warnings = Vec::new();
    let mut entries = BTreeMap::new();
    for table in tables.iter().filter(|t| t.dimension.is_centroid_probe()) {
        for (native, cognate) in &table.cognate_map {
            let key = (table.dimension, native.clone());
            let bag = total.get(&key).cloned().unwrap_or_default();
            if bag.native_n == 0 || bag.substitute_n == 0 {
                let msg = format!(
                    "{language}/{}: omitting {native} (native frames {}, substitute {cognate} frames {})",
                    table.dimension, bag.native_n, bag.substitute_n
                );
                log::warn!("{msg}");
                warnings.push(msg);
                continue;
            }
            let mean = |sum: &[f64], n: usize| sum.iter().map(|s| (s / n as f64) as f32).collect();
            entries.insert(
                key,
                CentroidEntry {
                    dimension: table.dimension,
                    native: native.clone(),
                    substitute: cognate.clone(),
                    native_centroid: mean(&bag.native_sum, bag.native_n),
                    substitute_centroid: mean(&bag.substitute_sum, bag.substitute_n),
                    native_count: bag.native_n,
                    substitute_count: bag.substitute_n,
                    native_utterances: bag.native_ids,
                    substitute_utterances: bag.substitute_ids,
                },
            );
        }
    }

    let mut provenance = Provenance {
        corpus_id: corpus_id.to_string(),
        speaker_count: clips_per_speaker.len(),
        clips_per_speaker,
        utterance_ids: sorted.iter().map(|b| b.id.clone()).collect(),
        lf_measured_ratio: None,
        lf_native_ratio: None,
    };
    if let Some(lf) = tables.iter().find(|t| t.dimension == Dimension::LF) {
        let contrasts: Vec<DurationContrast> = sorted
            .par_iter()
            .map(|b| match align_bundle(b) {
                Ok((_, spans)) => DurationContrast::from_spans(&spans, lf, b.frame_hop_ms),
                Err(e) => {
                    log::warn!("{}: alignment failed during LF prior estimation: {e}", b.id);
                    DurationContrast::default()
                }
            })
            .collect();
        let pooled = contrasts
            .iter()
            .fold(DurationContrast::default(), |a, c| a.merge(c));
        provenance.lf_measured_ratio = pooled.ratio();
        provenance.lf_native_ratio = lf
            .native_ratio
            .or(provenance.lf_measured_ratio.filter(|&r| r > 1.0));
        if provenance.lf_native_ratio.is_none() {
            let msg = format!(
                "{language}/LF: no usable native duration ratio (measured {:?})",
                provenance.lf_measured_ratio
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }

    Ok((
        CentroidSet {
            language,
            embedding_dim,
            entries,
            provenance,
        },
        warnings,
    ))
}

/// Utterance-level embedding: mean over frames whose greedy label is not
/// blank, or over all frames when every frame is blank.
pub fn utterance_embedding(bundle: &UtteranceBundle) -> Vec<f64> {
    let labels = greedy_frames(bundle.emissions.view());
    let d = bundle.embedding_dim();
    let mut sum = vec![0.0; d];
    let mut n = 0usize;
    for (t, &l) in labels.iter().enumerate() {
        if l != bundle.blank_index {
            for (s, &v) in sum.iter_mut().zip(bundle.embeddings.row(t)) {
                *s += v as f64;
            }
            n += 1;
        }
    }
    if n == 0 {
        return crate::align::mean_rows(&bundle.embeddings, 0, bundle.n_frames())
            .unwrap_or_else(|_| vec![0.0; d]);
    }
    sum.iter().map(|s| s / n as f64).collect()
}

/// Native reference rows for FAD and PSD.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceBank {
    pub language: Language,
    /// N×D utterance embeddings.
    pub utterance_embeddings: Array2<f64>,
    /// M×5 prosodic vectors.
    pub prosodic_matrix: Array2<f64>,
    pub source: BankSource,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BankSource {
    pub corpus_id: String,
    pub embedding_ids: Vec<String>,
    pub prosodic_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BankConfig {
    pub max_utterances: usize,
    pub max_prosodic: usize,
}

impl Default for BankConfig {
    fn default() -> Self {
        BankConfig {
            max_utterances: 1000,
            max_prosodic: 500,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct BankIndex {
    schema: String,
    language: Language,
    embeddings_file: String,
    prosodic_file: String,
    #[serde(flatten)]
    source: BankSource,
}

fn rows_to_array(rows: &[Vec<f64>], width: usize) -> Array2<f64> {
    Array2::from_shape_vec((rows.len(), width), rows.iter().flatten().copied().collect())
        .expect("rows share width")
}

/// Builds the reference bank from validated native bundles, taken in id
/// order. Bundles whose prosodic vector cannot be computed only miss the
/// prosodic matrix.
pub fn build_reference_bank(
    bundles: &[UtteranceBundle],
    corpus_id: &str,
    config: &BankConfig,
) -> Result<(ReferenceBank, Vec<String>), CentroidError> {
    let language = common_language(bundles)?;
    let d = check_dims(bundles)?;
    let mut sorted: Vec<&UtteranceBundle> = bundles.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let rows: Vec<(Vec<f64>, Result<[f64; 5], String>)> = sorted
        .par_iter()
        .map(|b| {
            let emb = utterance_embedding(b);
            let pros = align_bundle(b)
                .map_err(|e| e.to_string())
                .and_then(|(_, spans)| prosodic_vector(b, &spans).map_err(|e| e.to_string()))
                .map(|p| p.to_array());
            (emb, pros)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut emb_rows = Vec::new();
    let mut emb_ids = Vec::new();
    let mut pros_rows = Vec::new();
    let mut pros_ids = Vec::new();
    for (b, (emb, pros)) in sorted.iter().zip(rows) {
        if emb_rows.len() < config.max_utterances {
            emb_rows.push(emb);
            emb_ids.push(b.id.clone());
        }
        match pros {
            Ok(p) if pros_rows.len() < config.max_prosodic => {
                pros_rows.push(p.to_vec());
                pros_ids.push(b.id.clone());
            }
            Ok(_) => {}
            Err(e) => warnings.push(format!("{}: no prosodic vector: {e}", b.id)),
        }
    }
    if emb_rows.len() < 2 {
        return Err(CentroidError::TooFewSamples {
            what: "utterance embeddings",
            got: emb_rows.len(),
        });
    }
    if pros_rows.len() < 2 {
        return Err(CentroidError::TooFewSamples {
            what: "prosodic vectors",
            got: pros_rows.len(),
        });
    }
    Ok((
        ReferenceBank {
            language,
            utterance_embeddings: rows_to_array(&emb_rows, d),
            prosodic_matrix: rows_to_array(&pros_rows, 5),
            source: BankSource {
                corpus_id: corpus_id.to_string(),
                embedding_ids: emb_ids,
                prosodic_ids: pros_ids,
            },
        },
        warnings,
    ))
}

impl ReferenceBank {
    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), CentroidError> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        let index = BankIndex {
            schema: BANK_SCHEMA.to_string(),
            language: self.language,
            embeddings_file: "utterance_embeddings.pspt".into(),
            prosodic_file: "prosodic.pspt".into(),
            source: self.source.clone(),
        };
        for (file, m) in [
            (&index.embeddings_file, &self.utterance_embeddings),
            (&index.prosodic_file, &self.prosodic_matrix),
        ] {
            let p = dir.join(file);
            let t = Tensor::from_array2(&m.mapv(|v| v as f32));
            crate::interchange::write_tensor(&p, &t).map_err(|e| tensor_err(&p, e))?;
        }
        write_json(&dir.join(BANK_INDEX), &index)?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self, CentroidError> {
        let dir = dir.as_ref();
        let index: BankIndex = read_json(&dir.join(BANK_INDEX))?;
        if index.schema != BANK_SCHEMA {
            return Err(CentroidError::Schema(format!(
                "unsupported reference bank schema {:?}",
                index.schema
            )));
        }
        let read = |file: &str| -> Result<Array2<f64>, CentroidError> {
            let p = dir.join(file);
            crate::interchange::read_tensor(&p)
                .and_then(|t| t.into_array2())
                .map(|a| a.mapv(|v| v as f64))
                .map_err(|e| tensor_err(&p, e))
        };
        let utterance_embeddings = read(&index.embeddings_file)?;
        let prosodic_matrix = read(&index.prosodic_file)?;
        if prosodic_matrix.ncols() != 5 {
            return Err(CentroidError::Schema(format!(
                "prosodic matrix has {} columns, expected 5",
                prosodic_matrix.ncols()
            )));
        }
        for (what, m) in [
            ("utterance embeddings", &utterance_embeddings),
            ("prosodic vectors", &prosodic_matrix),
        ] {
            if m.nrows() < 2 {
                return Err(CentroidError::TooFewSamples { what, got: m.nrows() });
            }
        }
        Ok(ReferenceBank {
            language: index.language,
            utterance_embeddings,
            prosodic_matrix,
            source: index.source,
        })
    }
}

/// Ids present in both lists.
pub fn overlapping_ids<'a>(a: &'a [String], b: &[String]) -> Vec<&'a str> {
    let b: BTreeSet<&str> = b.iter().map(String::as_str).collect();
    a.iter().map(String::as_str).filter(|id| b.contains(id)).collect()
}
