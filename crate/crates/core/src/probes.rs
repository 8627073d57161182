//! Per-phoneme probes: centroid fidelity, collapse, vowel-length fidelity,
//! aggregation and noise-floor normalization.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::align::{span_embedding, AlignmentSpan};
use crate::centroids::CentroidSet;
use crate::interchange::{DimensionTable, UtteranceBundle};
use crate::Dimension;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProbeError {
    #[error("zero-norm vector")]
    ZeroVector,
    #[error("vector length mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("no tokens to aggregate")]
    EmptyTokens,
    #[error("tokens span more than one dimension")]
    MixedDimensions,
    #[error("need at least one long and one short vowel span")]
    NoContrastTokens,
    #[error("native duration ratio must be > 1, got {0}")]
    InvalidPrior(f64),
    #[error("noise floor {0} leaves no headroom")]
    DegenerateFloor(f64),
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64, ProbeError> {
    if a.len() != b.len() {
        return Err(ProbeError::DimensionMismatch(a.len(), b.len()));
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Err(ProbeError::ZeroVector);
    }
    Ok(dot / (na.sqrt() * nb.sqrt()))
}

/// Fidelity value plus whether both rectified similarities were zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FidelityDetail {
    pub value: f64,
    pub sim_native: f64,
    pub sim_substitute: f64,
    pub low_confidence: bool,
}

pub fn fidelity_detail(e: &[f64], mu_nat: &[f64], mu_sub: &[f64]) -> Result<FidelityDetail, ProbeError> {
    let s_n = cosine(e, mu_nat)?.max(0.0);
    let s_s = cosine(e, mu_sub)?.max(0.0);
    let denom = s_n + s_s;
    let (value, low_confidence) = if denom > 0.0 {
        (s_n / denom, false)
    } else {
        (0.5, true)
    };
    Ok(FidelityDetail {
        value,
        sim_native: s_n,
        sim_substitute: s_s,
        low_confidence,
    })
}

/// `s_n / (s_n + s_s)` with rectified cosine similarities to the native and
/// substitute centroids; 0.5 when both similarities are zero.
pub fn fidelity(e: &[f64], mu_nat: &[f64], mu_sub: &[f64]) -> Result<f64, ProbeError> {
    fidelity_detail(e, mu_nat, mu_sub).map(|d| d.value)
}

/// One scored occurrence of a native grapheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenFidelity {
    pub utterance_id: String,
    pub dimension: Dimension,
    pub grapheme: String,
    pub fidelity: f64,
    /// `fidelity < tau`.
    pub collapsed: bool,
    pub low_confidence: bool,
    pub span: AlignmentSpan,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProbeOutput {
    pub tokens: Vec<TokenFidelity>,
    /// Native graphemes that were aligned but had no centroid entry.
    pub missing_centroids: Vec<String>,
}

/// Scores every aligned span whose grapheme is native for `table`.
pub fn score_per_phoneme(
    bundle: &UtteranceBundle,
    spans: &[AlignmentSpan],
    table: &DimensionTable,
    centroids: &CentroidSet,
    tau: f64,
) -> ProbeOutput {
    let mut out = ProbeOutput::default();
    for span in spans.iter().filter(|s| table.is_native(&s.grapheme)) {
        let Some(entry) = centroids.entry(table.dimension, &span.grapheme) else {
            out.missing_centroids.push(span.grapheme.clone());
            continue;
        };
        let scored = span_embedding(&bundle.embeddings, span)
            .map_err(|e| e.to_string())
            .and_then(|emb| {
                fidelity_detail(&emb, &entry.native_f64(), &entry.substitute_f64())
                    .map_err(|e| e.to_string())
            });
        match scored {
            Ok(d) => out.tokens.push(TokenFidelity {
                utterance_id: bundle.id.clone(),
                dimension: table.dimension,
                grapheme: span.grapheme.clone(),
                fidelity: d.value,
                collapsed: d.value < tau,
                low_confidence: d.low_confidence,
                span: span.clone(),
            }),
            Err(e) => log::warn!("{}: skipping {} span: {e}", bundle.id, span.grapheme),
        }
    }
    if !out.missing_centroids.is_empty() {
        log::warn!(
            "{}: {} {} spans without centroid entries",
            bundle.id,
            out.missing_centroids.len(),
            table.dimension
        );
    }
    out
}

/// Accumulated long- and short-vowel durations.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DurationContrast {
    pub long_total: f64,
    pub long_count: usize,
    pub short_total: f64,
    pub short_count: usize,
}

impl DurationContrast {
    /// Durations are span frame counts times `frame_hop_ms`, in seconds.
    pub fn from_spans(spans: &[AlignmentSpan], table: &DimensionTable, frame_hop_ms: f64) -> Self {
        let mut c = DurationContrast::default();
        for s in spans {
            let d = s.duration_s(frame_hop_ms);
            if table.is_native(&s.grapheme) {
                c.long_total += d;
                c.long_count += 1;
            } else if table.is_substitute(&s.grapheme) {
                c.short_total += d;
                c.short_count += 1;
            }
        }
        c
    }

    pub fn merge(&self, other: &Self) -> Self {
        DurationContrast {
            long_total: self.long_total + other.long_total,
            long_count: self.long_count + other.long_count,
            short_total: self.short_total + other.short_total,
            short_count: self.short_count + other.short_count,
        }
    }

    pub fn n_tokens(&self) -> usize {
        self.long_count + self.short_count
    }

    /// Mean long duration over mean short duration.
    pub fn ratio(&self) -> Option<f64> {
        if self.long_count == 0 || self.short_count == 0 || self.short_total <= 0.0 {
            return None;
        }
        Some((self.long_total / self.long_count as f64) / (self.short_total / self.short_count as f64))
    }
}

/// `clamp((ratio − 1) / (native_ratio − 1), 0, 1)`.
pub fn lf_score(ratio: f64, native_ratio: f64) -> Result<f64, ProbeError> {
    if !(native_ratio.is_finite() && native_ratio > 1.0) {
        return Err(ProbeError::InvalidPrior(native_ratio));
    }
    Ok(((ratio - 1.0) / (native_ratio - 1.0)).clamp(0.0, 1.0))
}

/// Vowel-length fidelity of one set of spans. The frame hop cancels in the
/// duration ratio, so frame counts are used directly.
pub fn lf_fidelity(
    spans: &[AlignmentSpan],
    table: &DimensionTable,
    native_ratio: f64,
) -> Result<f64, ProbeError> {
    let ratio = DurationContrast::from_spans(spans, table, 1000.0)
        .ratio()
        .ok_or(ProbeError::NoContrastTokens)?;
    lf_score(ratio, native_ratio)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AggregateLevel {
    Utterance,
    Corpus,
}

/// Aggregate result for one dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionScore {
    pub dimension: Dimension,
    pub mean_fidelity: f64,
    /// Absent for LF, which has no per-token collapse.
    pub collapse_rate: Option<f64>,
    pub n_tokens: usize,
    /// Bootstrap interval on `mean_fidelity`.
    pub ci_low: Option<f64>,
    pub ci_high: Option<f64>,
    /// Bootstrap interval on `collapse_rate`.
    pub collapse_ci_low: Option<f64>,
    pub collapse_ci_high: Option<f64>,
    /// `mean_fidelity` after noise-floor normalization.
    pub normalized: Option<f64>,
}

impl DimensionScore {
    pub fn point(dimension: Dimension, mean_fidelity: f64, collapse_rate: Option<f64>, n_tokens: usize) -> Self {
        DimensionScore {
            dimension,
            mean_fidelity,
            collapse_rate,
            n_tokens,
            ci_low: None,
            ci_high: None,
            collapse_ci_low: None,
            collapse_ci_high: None,
            normalized: None,
        }
    }
}

/// Mean fidelity and collapse rate over `tokens`.
///
/// At corpus level the utterance means are weighted by token count, which
/// is the pooled mean over all tokens; tokens are summed in utterance-id
/// order so the result does not depend on input order.
pub fn aggregate(tokens: &[TokenFidelity], level: AggregateLevel) -> Result<DimensionScore, ProbeError> {
    let first = tokens.first().ok_or(ProbeError::EmptyTokens)?;
    if tokens.iter().any(|t| t.dimension != first.dimension) {
        return Err(ProbeError::MixedDimensions);
    }
    let (sum, collapsed) = match level {
        AggregateLevel::Utterance => tokens.iter().fold((0.0, 0usize), |(s, c), t| {
            (s + t.fidelity, c + t.collapsed as usize)
        }),
        AggregateLevel::Corpus => {
            let mut by_utt: BTreeMap<&str, (f64, usize)> = BTreeMap::new();
            for t in tokens {
                let e = by_utt.entry(t.utterance_id.as_str()).or_default();
                e.0 += t.fidelity;
                e.1 += t.collapsed as usize;
            }
            by_utt
                .values()
                .fold((0.0, 0usize), |(s, c), (us, uc)| (s + us, c + uc))
        }
    };
    let n = tokens.len();
    Ok(DimensionScore::point(
        first.dimension,
        sum / n as f64,
        Some(collapsed as f64 / n as f64),
        n,
    ))
}

/// Noise-floor normalization `(system − native) / (1 − native)`, clamped
/// to [0, 1]. For higher-is-better fidelity statistics.
pub fn normalize_floor(system_stat: f64, native_stat: f64) -> Result<f64, ProbeError> {
    if !(native_stat < 1.0 - 1e-9) {
        return Err(ProbeError::DegenerateFloor(native_stat));
    }
    Ok(((system_stat - native_stat) / (1.0 - native_stat)).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TAU: f64 = 0.5;

    #[test]
    fn fidelity_boundaries() {
        // e at the native centroid, substitute orthogonal
        assert_eq!(fidelity(&[1.0, 0.0], &[2.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        // equal similarity to both
        let f = fidelity(&[1.0, 1.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((f - 0.5).abs() < 1e-15);
        // both similarities rectified to zero
        let d = fidelity_detail(&[1.0, 0.0], &[-1.0, 0.0], &[-1.0, 0.1]).unwrap();
        assert_eq!(d.value, 0.5);
        assert!(d.low_confidence);
    }

    #[test]
    fn fidelity_hand_example() {
        let r = std::f64::consts::FRAC_1_SQRT_2;
        let d = fidelity_detail(&[1.0, 0.0], &[r, r], &[0.0, 1.0]).unwrap();
        assert!((d.sim_native - r).abs() < 1e-12);
        assert_eq!(d.sim_substitute, 0.0);
        assert_eq!(d.value, 1.0);
    }

    #[test]
    fn zero_vector_rejected() {
        assert_eq!(
            fidelity(&[0.0, 0.0], &[1.0, 0.0], &[0.0, 1.0]).unwrap_err(),
            ProbeError::ZeroVector
        );
    }

    fn span(g: &str, start: usize, end: usize) -> AlignmentSpan {
        AlignmentSpan {
            target_index: 0,
            grapheme: g.into(),
            start_frame: start,
            end_frame: end,
            score: 0.0,
        }
    }

    fn lf_table() -> DimensionTable {
        crate::interchange::default_tables()
            .into_iter()
            .find(|t| t.language == crate::Language::Te && t.dimension == Dimension::LF)
            .unwrap()
    }

    #[test]
    fn lf_values() {
        let t = lf_table();
        // long spans 19 frames, short spans 10 frames: ratio 1.9
        let spans = [span("ఆ", 0, 19), span("అ", 20, 30)];
        assert!((lf_fidelity(&spans, &t, 1.90).unwrap() - 1.0).abs() < 1e-12);
        let spans = [span("ా", 0, 10), span("అ", 20, 30)];
        assert_eq!(lf_fidelity(&spans, &t, 1.90).unwrap(), 0.0);
        // ratio 1.45 → 0.5
        let spans = [span("ా", 0, 29), span("ి", 30, 50)];
        assert!((lf_fidelity(&spans, &t, 1.90).unwrap() - 0.5).abs() < 1e-12);
        assert_eq!(
            lf_fidelity(&[span("ా", 0, 3)], &t, 1.9).unwrap_err(),
            ProbeError::NoContrastTokens
        );
        assert!(matches!(
            lf_fidelity(&spans, &t, 1.0),
            Err(ProbeError::InvalidPrior(_))
        ));
    }

    fn tok(utt: &str, f: f64) -> TokenFidelity {
        TokenFidelity {
            utterance_id: utt.into(),
            dimension: Dimension::RR,
            grapheme: "ట".into(),
            fidelity: f,
            collapsed: f < TAU,
            low_confidence: false,
            span: span("ట", 0, 1),
        }
    }

    #[test]
    fn aggregate_examples() {
        let s = aggregate(&[tok("a", 1.0), tok("a", 0.0)], AggregateLevel::Utterance).unwrap();
        assert_eq!(s.mean_fidelity, 0.5);
        assert_eq!(s.collapse_rate, Some(0.5));
        let tokens = [tok("a", 1.0), tok("b", 0.0), tok("b", 0.0), tok("b", 0.0)];
        let s = aggregate(&tokens, AggregateLevel::Corpus).unwrap();
        assert_eq!(s.mean_fidelity, 0.25);
        assert_eq!(s.n_tokens, 4);
        assert_eq!(aggregate(&[], AggregateLevel::Corpus).unwrap_err(), ProbeError::EmptyTokens);
    }

    #[test]
    fn collapse_rate_fifteen_of_thirty() {
        let tokens: Vec<_> = (0..30)
            .map(|i| tok(&format!("u{}", i / 3), if i % 2 == 0 { 0.2 } else { 0.9 }))
            .collect();
        let s = aggregate(&tokens, AggregateLevel::Corpus).unwrap();
        assert_eq!(s.collapse_rate, Some(0.5));
        assert_eq!(s.n_tokens, 30);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let mut b = tok("a", 0.3);
        b.dimension = Dimension::AF;
        assert_eq!(
            aggregate(&[tok("a", 1.0), b], AggregateLevel::Corpus).unwrap_err(),
            ProbeError::MixedDimensions
        );
    }

    #[test]
    fn floor_normalization() {
        let v = normalize_floor(0.786, 0.538).unwrap();
        assert!((v - 0.537).abs() < 1e-3, "{v}");
        assert_eq!(normalize_floor(0.6, 0.6).unwrap(), 0.0);
        assert_eq!(normalize_floor(1.0, 0.3).unwrap(), 1.0);
        assert_eq!(normalize_floor(0.1, 0.3).unwrap(), 0.0);
        assert!(matches!(normalize_floor(0.9, 1.0), Err(ProbeError::DegenerateFloor(_))));
    }
}
