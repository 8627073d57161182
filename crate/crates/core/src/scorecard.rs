//! End-to-end scoring of a system corpus into a scorecard.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::align::align_bundle;
use crate::bootstrap::{bootstrap_ci, bootstrap_with, BootstrapConfig, Statistic};
use crate::centroids::{overlapping_ids, utterance_embedding, CentroidError, CentroidSet, ReferenceBank};
use crate::distributional::{fit_gaussian, frechet, prosodic_vector, psd, FrechetResult, ProsodicVector};
use crate::interchange::bundle::BundleError;
use crate::interchange::{tables_for, validate_bundle, Corpus, DimensionTable, UtteranceBundle};
use crate::probes::{
    aggregate, lf_score, normalize_floor, score_per_phoneme, AggregateLevel, DimensionScore,
    DurationContrast, TokenFidelity,
};
use crate::{Dimension, Language, DEFAULT_EPS, DEFAULT_TAU};

pub const SCORECARD_SCHEMA: &str = "psp_scorecard_v1";

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Centroid(#[from] CentroidError),
    #[error("{what} language is {found}, expected {expected}")]
    LanguageMismatch {
        what: &'static str,
        expected: Language,
        found: Language,
    },
    #[error("no bundle passed validation")]
    NoValidBundles,
    #[error("held-out corpus shares {} utterance ids with the centroid corpus (first: {})", .ids.len(), .ids[0])]
    OverlapWithCentroidCorpus { ids: Vec<String> },
    #[error("scorecard {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreOptions {
    pub tau: f64,
    pub eps: f64,
    pub bootstrap: BootstrapConfig,
    pub psd_zscore: bool,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            tau: DEFAULT_TAU,
            eps: DEFAULT_EPS,
            bootstrap: BootstrapConfig::default(),
            psd_zscore: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DimensionEntry {
    Ok(DimensionScore),
    NotApplicable,
    Error { message: String },
}

impl DimensionEntry {
    pub fn score(&self) -> Option<&DimensionScore> {
        match self {
            DimensionEntry::Ok(s) => Some(s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum DistanceEntry {
    Ok(FrechetResult),
    Error { message: String },
}

impl DistanceEntry {
    pub fn result(&self) -> Option<&FrechetResult> {
        match self {
            DistanceEntry::Ok(r) => Some(r),
            DistanceEntry::Error { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScorecardRole {
    System,
    /// Held-out native audio; used as the noise floor for normalization.
    NativeFloor,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scorecard {
    pub schema: String,
    pub system: String,
    pub language: Language,
    pub role: ScorecardRole,
    pub per_dimension: BTreeMap<Dimension, DimensionEntry>,
    pub fad: DistanceEntry,
    pub psd: DistanceEntry,
    /// Utterances scored.
    pub n_wavs: usize,
    /// Utterances that failed loading or validation.
    pub n_failed: usize,
    pub settings: ScoreOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lf_native_ratio: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub floor_system: Option<String>,
    pub config_fingerprint: String,
    pub warnings: Vec<String>,
}

impl Scorecard {
    pub fn dimension(&self, d: Dimension) -> Option<&DimensionScore> {
        self.per_dimension.get(&d).and_then(DimensionEntry::score)
    }

    /// True when some utterances failed or a dimension could not be scored.
    pub fn is_partial(&self) -> bool {
        self.n_failed > 0
            || self
                .per_dimension
                .values()
                .any(|e| matches!(e, DimensionEntry::Error { .. }))
            || matches!(self.fad, DistanceEntry::Error { .. })
            || matches!(self.psd, DistanceEntry::Error { .. })
    }

    pub fn to_json(&self) -> String {
        crate::json::to_string_pretty(self).expect("scorecard serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScoreError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| ScoreError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Scorecard::from_json(&text).map_err(|source| ScoreError::Json {
            path: path.display().to_string(),
            source,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ScoreError> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json()).map_err(|source| ScoreError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Plain-text summary table.
    pub fn render_table(&self) -> String {
        let mut s = String::new();
        let role = match self.role {
            ScorecardRole::System => "",
            ScorecardRole::NativeFloor => " [native floor]",
        };
        let _ = writeln!(
            s,
            "{} / {} ({}){role}: {} utterances scored, {} failed",
            self.system,
            self.language.name(),
            self.language,
            self.n_wavs,
            self.n_failed
        );
        let _ = writeln!(
            s,
            "{:<5} {:>9} {:>19} {:>9} {:>19} {:>7} {:>10}",
            "dim", "fidelity", "95% CI", "collapse", "95% CI", "tokens", "normalized"
        );
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.3}"));
        let ci = |lo: Option<f64>, hi: Option<f64>| match (lo, hi) {
            (Some(lo), Some(hi)) => format!("[{lo:.3}, {hi:.3}]"),
            _ => "-".to_string(),
        };
        for (d, e) in &self.per_dimension {
            match e {
                DimensionEntry::Ok(sc) => {
                    let _ = writeln!(
                        s,
                        "{:<5} {:>9.3} {:>19} {:>9} {:>19} {:>7} {:>10}",
                        d.code(),
                        sc.mean_fidelity,
                        ci(sc.ci_low, sc.ci_high),
                        opt(sc.collapse_rate),
                        ci(sc.collapse_ci_low, sc.collapse_ci_high),
                        sc.n_tokens,
                        opt(sc.normalized)
                    );
                }
                DimensionEntry::NotApplicable => {
                    let _ = writeln!(s, "{:<5} n/a", d.code());
                }
                DimensionEntry::Error { message } => {
                    let _ = writeln!(s, "{:<5} error: {message}", d.code());
                }
            }
        }
        for (name, e) in [("FAD", &self.fad), ("PSD", &self.psd)] {
            match e {
                DistanceEntry::Ok(r) => {
                    let _ = writeln!(
                        s,
                        "{name:<5} {:>9.3}   |mu_g - mu_n| {:.3}   tr-term {:.3}",
                        r.total, r.mean_dist, r.trace_term
                    );
                }
                DistanceEntry::Error { message } => {
                    let _ = writeln!(s, "{name:<5} error: {message}");
                }
            }
        }
        if !self.warnings.is_empty() {
            let _ = writeln!(s, "{} warnings", self.warnings.len());
        }
        s
    }
}

/// Per-utterance intermediate results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub tokens: Vec<TokenFidelity>,
    pub length_contrast: DurationContrast,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub prosodic: Option<ProsodicVector>,
    pub dropped_graphemes: Vec<String>,
    #[serde(skip)]
    embedding: Option<Vec<f64>>,
    #[serde(skip)]
    missing_centroids: Vec<String>,
}

impl UtteranceResult {
    fn failed(id: String, error: String) -> Self {
        UtteranceResult {
            id,
            error: Some(error),
            tokens: Vec::new(),
            length_contrast: DurationContrast::default(),
            prosodic: None,
            dropped_graphemes: Vec::new(),
            embedding: None,
            missing_centroids: Vec::new(),
        }
    }
}

fn process_utterance(
    bundle: &UtteranceBundle,
    tables: &[&DimensionTable],
    centroids: &CentroidSet,
    tau: f64,
) -> UtteranceResult {
    let mut r = UtteranceResult::failed(bundle.id.clone(), String::new());
    r.error = None;
    r.embedding = Some(utterance_embedding(bundle));
    let (targets, spans) = match align_bundle(bundle) {
        Ok(v) => v,
        Err(e) => {
            r.error = Some(format!("alignment: {e}"));
            return r;
        }
    };
    r.dropped_graphemes = targets.dropped;
    for table in tables {
        if table.dimension == Dimension::LF {
            r.length_contrast = DurationContrast::from_spans(&spans, table, bundle.frame_hop_ms);
        } else {
            let out = score_per_phoneme(bundle, &spans, table, centroids, tau);
            r.tokens.extend(out.tokens);
            r.missing_centroids.extend(out.missing_centroids);
        }
    }
    match prosodic_vector(bundle, &spans) {
        Ok(p) => r.prosodic = Some(p),
        Err(e) => log::info!("{}: no prosodic vector: {e}", bundle.id),
    }
    r
}

/// Everything a scoring run produces.
#[derive(Debug, Clone)]
pub struct ScoreRun {
    pub scorecard: Scorecard,
    pub utterances: Vec<UtteranceResult>,
}

/// Hash of the scoring configuration: centroid digest, the language's
/// dimension tables, tau, eps, bootstrap config and PSD normalization.
pub fn config_fingerprint(
    centroids: &CentroidSet,
    tables: &[&DimensionTable],
    options: &ScoreOptions,
) -> String {
    let payload = serde_json::json!({
        "centroids": centroids.digest(),
        "tables": tables,
        "tau": options.tau,
        "eps": options.eps,
        "bootstrap": options.bootstrap,
        "psd_zscore": options.psd_zscore,
    });
    let bytes = crate::json::to_string_pretty(&payload).expect("fingerprint payload serializes");
    hex::encode(Sha256::digest(bytes.as_bytes()))
}

fn lf_entry(
    results: &[&UtteranceResult],
    prior: Option<f64>,
    bootstrap: &BootstrapConfig,
    warnings: &mut Vec<String>,
) -> DimensionEntry {
    let Some(prior) = prior else {
        return DimensionEntry::Error {
            message: "no native long/short duration prior".into(),
        };
    };
    let pooled = results
        .iter()
        .fold(DurationContrast::default(), |a, r| a.merge(&r.length_contrast));
    let Some(ratio) = pooled.ratio() else {
        return DimensionEntry::Error {
            message: "no long/short vowel contrast tokens".into(),
        };
    };
    let value = match lf_score(ratio, prior) {
        Ok(v) => v,
        Err(e) => return DimensionEntry::Error { message: e.to_string() },
    };
    let mut score = DimensionScore::point(Dimension::LF, value, None, pooled.n_tokens());
    let units: Vec<DurationContrast> = results
        .iter()
        .map(|r| r.length_contrast)
        .filter(|c| c.n_tokens() > 0)
        .collect();
    let ci = bootstrap_with(units.len(), bootstrap, |idx| {
        let c = idx
            .iter()
            .fold(DurationContrast::default(), |a, &i| a.merge(&units[i]));
        c.ratio().and_then(|r| lf_score(r, prior).ok())
    });
    match ci {
        Ok((lo, hi)) => {
            score.ci_low = Some(lo);
            score.ci_high = Some(hi);
        }
        Err(e) => warnings.push(format!("LF: no confidence interval: {e}")),
    }
    DimensionEntry::Ok(score)
}

fn probe_entry(
    dimension: Dimension,
    results: &[&UtteranceResult],
    options: &ScoreOptions,
    warnings: &mut Vec<String>,
) -> DimensionEntry {
    let tokens: Vec<TokenFidelity> = results
        .iter()
        .flat_map(|r| r.tokens.iter().filter(|t| t.dimension == dimension).cloned())
        .collect();
    let mut score = match aggregate(&tokens, AggregateLevel::Corpus) {
        Ok(s) => s,
        Err(e) => return DimensionEntry::Error { message: e.to_string() },
    };
    let groups: Vec<Vec<f64>> = results
        .iter()
        .map(|r| {
            r.tokens
                .iter()
                .filter(|t| t.dimension == dimension)
                .map(|t| t.fidelity)
                .collect()
        })
        .collect();
    match bootstrap_ci(&groups, Statistic::PooledMean, &options.bootstrap) {
        Ok((lo, hi)) => {
            score.ci_low = Some(lo);
            score.ci_high = Some(hi);
        }
        Err(e) => warnings.push(format!("{dimension}: no fidelity interval: {e}")),
    }
    match bootstrap_ci(&groups, Statistic::CollapseRate { tau: options.tau }, &options.bootstrap) {
        Ok((lo, hi)) => {
            score.collapse_ci_low = Some(lo);
            score.collapse_ci_high = Some(hi);
        }
        Err(e) => warnings.push(format!("{dimension}: no collapse interval: {e}")),
    }
    let low_conf = tokens.iter().filter(|t| t.low_confidence).count();
    if low_conf > 0 {
        warnings.push(format!(
            "{dimension}: {low_conf} tokens had non-positive similarity to both centroids (scored 0.5)"
        ));
    }
    DimensionEntry::Ok(score)
}

fn distance_entry(
    name: &str,
    result: Result<FrechetResult, String>,
    warnings: &mut Vec<String>,
) -> DistanceEntry {
    match result {
        Ok(r) => DistanceEntry::Ok(r),
        Err(message) => {
            warnings.push(format!("{name}: {message}"));
            DistanceEntry::Error { message }
        }
    }
}

fn rows(v: &[Vec<f64>], width: usize) -> Array2<f64> {
    Array2::from_shape_vec((v.len(), width), v.iter().flatten().copied().collect())
        .expect("rows share width")
}

/// Scores loaded bundles. `bundles` pairs each utterance id with its loaded
/// bundle or the load error; failures are skipped with a warning.
#[allow(clippy::too_many_arguments)]
pub fn score_bundles(
    system: &str,
    language: Language,
    bundles: Vec<(String, Result<UtteranceBundle, String>)>,
    tables: &[DimensionTable],
    centroids: &CentroidSet,
    bank: &ReferenceBank,
    floor: Option<&Scorecard>,
    role: ScorecardRole,
    options: &ScoreOptions,
) -> Result<ScoreRun, ScoreError> {
    if centroids.language != language {
        return Err(ScoreError::LanguageMismatch {
            what: "centroid set",
            expected: language,
            found: centroids.language,
        });
    }
    if bank.language != language {
        return Err(ScoreError::LanguageMismatch {
            what: "reference bank",
            expected: language,
            found: bank.language,
        });
    }
    let tables = tables_for(tables, language);
    let mut warnings = Vec::new();

    let mut bundles = bundles;
    bundles.sort_by(|a, b| a.0.cmp(&b.0));
    let mut failed = Vec::new();
    let mut valid = Vec::new();
    for (id, b) in bundles {
        let problem = match &b {
            Err(e) => Some(format!("load failed: {e}")),
            Ok(b) if b.language != language => Some(format!("language {} != {language}", b.language)),
            Ok(b) => {
                let v = validate_bundle(b);
                (!v.is_empty()).then(|| {
                    let parts: Vec<String> = v.iter().map(ToString::to_string).collect();
                    format!("invalid bundle: {}", parts.join("; "))
                })
            }
        };
        match problem {
            Some(p) => {
                warnings.push(format!("{id}: {p}"));
                failed.push(UtteranceResult::failed(id, p));
            }
            None => valid.push(b.expect("checked above")),
        }
    }
    if valid.is_empty() {
        return Err(ScoreError::NoValidBundles);
    }

    let results: Vec<UtteranceResult> = valid
        .par_iter()
        .map(|b| process_utterance(b, &tables, centroids, options.tau))
        .collect();
    let scored: Vec<&UtteranceResult> = results.iter().filter(|r| r.error.is_none()).collect();
    for r in results.iter().filter(|r| r.error.is_some()) {
        warnings.push(format!(
            "{}: {} (excluded from per-phoneme and PSD scoring)",
            r.id,
            r.error.as_deref().unwrap_or_default()
        ));
    }

    let dropped: BTreeSet<&str> = scored
        .iter()
        .flat_map(|r| r.dropped_graphemes.iter().map(String::as_str))
        .collect();
    if !dropped.is_empty() {
        let n: usize = scored.iter().map(|r| r.dropped_graphemes.len()).sum();
        warnings.push(format!(
            "{n} text graphemes not in the aligner vocabulary were dropped: {}",
            dropped.into_iter().collect::<Vec<_>>().join(" ")
        ));
    }
    let missing: BTreeSet<&str> = scored
        .iter()
        .flat_map(|r| r.missing_centroids.iter().map(String::as_str))
        .collect();
    if !missing.is_empty() {
        warnings.push(format!(
            "spans skipped for graphemes without centroids: {}",
            missing.into_iter().collect::<Vec<_>>().join(" ")
        ));
    }

    let lf_prior = tables
        .iter()
        .find(|t| t.dimension == Dimension::LF)
        .and_then(|t| t.native_ratio)
        .or(centroids.provenance.lf_native_ratio);

    let mut per_dimension = BTreeMap::new();
    for d in Dimension::ALL {
        let entry = if !d.applies_to(language) {
            DimensionEntry::NotApplicable
        } else if !tables.iter().any(|t| t.dimension == d) {
            DimensionEntry::Error {
                message: "no dimension table for this language".into(),
            }
        } else if d == Dimension::LF {
            lf_entry(&scored, lf_prior, &options.bootstrap, &mut warnings)
        } else {
            probe_entry(d, &scored, options, &mut warnings)
        };
        let entry = match entry {
            DimensionEntry::Ok(mut s) => {
                if let Some(floor_score) = floor.and_then(|f| f.dimension(d)) {
                    match normalize_floor(s.mean_fidelity, floor_score.mean_fidelity) {
                        Ok(v) => s.normalized = Some(v),
                        Err(e) => warnings.push(format!("{d}: not normalized: {e}")),
                    }
                }
                DimensionEntry::Ok(s)
            }
            DimensionEntry::Error { message } => {
                warnings.push(format!("{d}: {message}"));
                DimensionEntry::Error { message }
            }
            other => other,
        };
        per_dimension.insert(d, entry);
    }

    let embeddings: Vec<Vec<f64>> = results.iter().filter_map(|r| r.embedding.clone()).collect();
    let width = embeddings.first().map_or(0, Vec::len);
    let fad = if width != bank.utterance_embeddings.ncols() {
        Err(format!(
            "embedding width {width} differs from reference bank ({})",
            bank.utterance_embeddings.ncols()
        ))
    } else {
        (|| {
            let sys = fit_gaussian(rows(&embeddings, width).view()).map_err(|e| e.to_string())?;
            let nat = fit_gaussian(bank.utterance_embeddings.view()).map_err(|e| e.to_string())?;
            frechet(&sys, &nat, options.eps).map_err(|e| e.to_string())
        })()
    };
    let fad = distance_entry("FAD", fad, &mut warnings);

    let prosodic: Vec<Vec<f64>> = scored
        .iter()
        .filter_map(|r| r.prosodic.map(|p| p.to_array().to_vec()))
        .collect();
    let psd_result = psd(
        rows(&prosodic, 5).view(),
        bank.prosodic_matrix.view(),
        options.psd_zscore,
        options.eps,
    )
    .map_err(|e| e.to_string());
    let psd_entry = distance_entry("PSD", psd_result, &mut warnings);

    let scorecard = Scorecard {
        schema: SCORECARD_SCHEMA.to_string(),
        system: system.to_string(),
        language,
        role,
        per_dimension,
        fad,
        psd: psd_entry,
        n_wavs: results.len(),
        n_failed: failed.len(),
        settings: *options,
        lf_native_ratio: lf_prior,
        floor_system: floor.map(|f| f.system.clone()),
        config_fingerprint: config_fingerprint(centroids, &tables, options),
        warnings,
    };
    let mut utterances = failed;
    utterances.extend(results);
    utterances.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(ScoreRun {
        scorecard,
        utterances,
    })
}

/// Inputs for scoring a corpus directory.
#[derive(Debug, Clone)]
pub struct ScoreRequest<'a> {
    pub system: Option<&'a str>,
    pub corpus_dir: &'a Path,
    pub language: Language,
    pub centroids_dir: &'a Path,
    pub refs_dir: &'a Path,
    pub tables: &'a [DimensionTable],
    pub floor: Option<&'a Scorecard>,
    pub options: ScoreOptions,
}

fn load_corpus_bundles(corpus: &Corpus) -> Vec<(String, Result<UtteranceBundle, String>)> {
    corpus
        .load_bundles(None)
        .into_iter()
        .map(|(id, b)| (id, b.map_err(|e| e.to_string())))
        .collect()
}

/// Loads a system corpus with its centroids and reference bank and scores it.
pub fn cmd_score(req: &ScoreRequest<'_>) -> Result<ScoreRun, ScoreError> {
    let corpus = Corpus::open(req.corpus_dir)?;
    if corpus.manifest.language != req.language {
        return Err(ScoreError::LanguageMismatch {
            what: "corpus",
            expected: req.language,
            found: corpus.manifest.language,
        });
    }
    let centroids = CentroidSet::load(req.centroids_dir)?;
    let bank = ReferenceBank::load(req.refs_dir)?;
    let system = req
        .system
        .map(str::to_string)
        .or_else(|| corpus.manifest.system.clone())
        .unwrap_or_else(|| corpus.manifest.corpus_id.clone());
    score_bundles(
        &system,
        req.language,
        load_corpus_bundles(&corpus),
        req.tables,
        &centroids,
        &bank,
        req.floor,
        ScorecardRole::System,
        &req.options,
    )
}

/// Scores held-out native audio to establish the language's noise floor.
/// The held-out ids must be disjoint from the centroid corpus.
pub fn cmd_sanity(req: &ScoreRequest<'_>) -> Result<ScoreRun, ScoreError> {
    let corpus = Corpus::open(req.corpus_dir)?;
    if corpus.manifest.language != req.language {
        return Err(ScoreError::LanguageMismatch {
            what: "corpus",
            expected: req.language,
            found: corpus.manifest.language,
        });
    }
    let centroids = CentroidSet::load(req.centroids_dir)?;
    let ids: Vec<String> = corpus.manifest.utterances.iter().map(|e| e.id.clone()).collect();
    check_disjoint(&ids, &centroids)?;
    let bank = ReferenceBank::load(req.refs_dir)?;
    score_bundles(
        req.system.unwrap_or("native"),
        req.language,
        load_corpus_bundles(&corpus),
        req.tables,
        &centroids,
        &bank,
        None,
        ScorecardRole::NativeFloor,
        &req.options,
    )
}

pub fn check_disjoint(heldout_ids: &[String], centroids: &CentroidSet) -> Result<(), ScoreError> {
    let overlap = overlapping_ids(heldout_ids, &centroids.provenance.utterance_ids);
    if overlap.is_empty() {
        Ok(())
    } else {
        Err(ScoreError::OverlapWithCentroidCorpus {
            ids: overlap.into_iter().map(String::from).collect(),
        })
    }
}
