//! CTC forced alignment and greedy frame decoding.

pub mod targets;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

pub use targets::{text_to_targets, TargetSequence};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AlignError {
    #[error("empty target sequence")]
    EmptyTargets,
    #[error("empty emission matrix")]
    EmptyEmissions,
    #[error("target {position} has index {index}, outside [0, {vocab}) or equal to blank")]
    BadTargetIndex {
        position: usize,
        index: usize,
        vocab: usize,
    },
    #[error("{frames} frames cannot fit {required} CTC states")]
    InfeasibleLength { frames: usize, required: usize },
    #[error("no finite-probability path")]
    NoFinitePath,
    #[error("span [{start}, {end}) outside [0, {frames})")]
    SpanOutOfRange {
        start: usize,
        end: usize,
        frames: usize,
    },
}

/// Frames assigned to one target grapheme.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentSpan {
    pub target_index: usize,
    pub grapheme: String,
    /// Inclusive.
    pub start_frame: usize,
    /// Exclusive.
    pub end_frame: usize,
    /// Mean emission log-probability of the target label over the span.
    pub score: f64,
}

impl AlignmentSpan {
    pub fn n_frames(&self) -> usize {
        self.end_frame - self.start_frame
    }

    pub fn duration_s(&self, frame_hop_ms: f64) -> f64 {
        self.n_frames() as f64 * frame_hop_ms / 1000.0
    }
}

/// The best CTC path through the blank-interleaved target sequence.
///
/// State `2k + 1` is target `k`; even states are blanks.
#[derive(Debug, Clone, PartialEq)]
pub struct CtcPath {
    pub states: Vec<usize>,
    pub log_prob: f64,
}

impl CtcPath {
    /// Target index occupying frame `t`, `None` for blank frames.
    pub fn target_at(&self, t: usize) -> Option<usize> {
        let s = self.states[t];
        (s % 2 == 1).then_some(s / 2)
    }
}

/// Minimum frame count for `targets`: one frame per target plus a blank
/// between each pair of equal neighbours.
pub fn min_frames(targets: &[usize]) -> usize {
    targets.len() + targets.windows(2).filter(|w| w[0] == w[1]).count()
}

fn check_inputs(
    emissions: &ArrayView2<f32>,
    targets: &[usize],
    blank_index: usize,
) -> Result<(), AlignError> {
    let (frames, vocab) = emissions.dim();
    if frames == 0 || vocab == 0 {
        return Err(AlignError::EmptyEmissions);
    }
    if targets.is_empty() {
        return Err(AlignError::EmptyTargets);
    }
    if let Some((position, &index)) = targets
        .iter()
        .enumerate()
        .find(|(_, &i)| i >= vocab || i == blank_index)
    {
        return Err(AlignError::BadTargetIndex {
            position,
            index,
            vocab,
        });
    }
    let required = min_frames(targets);
    if frames < required {
        return Err(AlignError::InfeasibleLength { frames, required });
    }
    Ok(())
}

/// Viterbi search over the extended CTC state sequence.
///
/// Transitions: stay, advance one state, or skip a blank between two
/// different labels. Ties prefer stay, then advance, then skip; at the end
/// the path finishing on the last label wins ties against the trailing blank.
pub fn viterbi(
    emissions: ArrayView2<f32>,
    targets: &[usize],
    blank_index: usize,
) -> Result<CtcPath, AlignError> {
    check_inputs(&emissions, targets, blank_index)?;
    let frames = emissions.nrows();
    let n_states = 2 * targets.len() + 1;
    let label = |s: usize| if s.is_multiple_of(2) { blank_index } else { targets[s / 2] };
    let can_skip = |s: usize| s >= 2 && s % 2 == 1 && targets[s / 2] != targets[s / 2 - 1];

    let mut prev = vec![f64::NEG_INFINITY; n_states];
    let mut curr = vec![f64::NEG_INFINITY; n_states];
    // 0 = stay, 1 = from s-1, 2 = from s-2
    let mut back = vec![0u8; frames * n_states];

    prev[0] = emissions[[0, label(0)]] as f64;
    prev[1] = emissions[[0, label(1)]] as f64;

    for t in 1..frames {
        let row = emissions.row(t);
        for s in 0..n_states {
            let mut best = prev[s];
            let mut step = 0u8;
            if s >= 1 && prev[s - 1] > best {
                best = prev[s - 1];
                step = 1;
            }
            if can_skip(s) && prev[s - 2] > best {
                best = prev[s - 2];
                step = 2;
            }
            curr[s] = if best == f64::NEG_INFINITY {
                f64::NEG_INFINITY
            } else {
                best + row[label(s)] as f64
            };
            back[t * n_states + s] = step;
        }
        std::mem::swap(&mut prev, &mut curr);
    }

    let last = n_states - 1;
    let mut s = if prev[last - 1] > prev[last] { last - 1 } else { last };
    let log_prob = prev[s];
    if log_prob == f64::NEG_INFINITY {
        return Err(AlignError::NoFinitePath);
    }
    let mut states = vec![0usize; frames];
    states[frames - 1] = s;
    for t in (1..frames).rev() {
        s -= back[t * n_states + s] as usize;
        states[t - 1] = s;
    }
    Ok(CtcPath { states, log_prob })
}

/// Aligns `targets` against `emissions` and returns one span per target.
/// Blank frames belong to no span.
pub fn force_align(
    emissions: ArrayView2<f32>,
    targets: &[usize],
    blank_index: usize,
    vocab: &[String],
) -> Result<Vec<AlignmentSpan>, AlignError> {
    let path = viterbi(emissions, targets, blank_index)?;
    Ok(path_spans(&path, emissions, targets, vocab))
}

/// Builds targets from the bundle text and aligns them.
pub fn align_bundle(
    bundle: &crate::interchange::UtteranceBundle,
) -> Result<(TargetSequence, Vec<AlignmentSpan>), AlignError> {
    let targets = text_to_targets(&bundle.text, &bundle.vocab_index(), bundle.blank_index);
    let spans = force_align(
        bundle.emissions.view(),
        &targets.indices,
        bundle.blank_index,
        &bundle.vocab,
    )?;
    Ok((targets, spans))
}

/// Converts a CTC path to per-target spans.
pub fn path_spans(
    path: &CtcPath,
    emissions: ArrayView2<f32>,
    targets: &[usize],
    vocab: &[String],
) -> Vec<AlignmentSpan> {
    let mut spans: Vec<AlignmentSpan> = Vec::with_capacity(targets.len());
    for (t, _) in path.states.iter().enumerate() {
        let Some(k) = path.target_at(t) else { continue };
        let lp = emissions[[t, targets[k]]] as f64;
        match spans.last_mut() {
            Some(span) if span.target_index == k => {
                span.end_frame = t + 1;
                span.score += lp;
            }
            _ => spans.push(AlignmentSpan {
                target_index: k,
                grapheme: vocab.get(targets[k]).cloned().unwrap_or_default(),
                start_frame: t,
                end_frame: t + 1,
                score: lp,
            }),
        }
    }
    for span in &mut spans {
        span.score /= span.n_frames() as f64;
    }
    debug_assert_eq!(spans.len(), targets.len());
    spans
}

/// Per-frame argmax label. Ties go to the lowest index.
pub fn greedy_frames(emissions: ArrayView2<f32>) -> Vec<usize> {
    emissions
        .outer_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] || (row[best].is_nan() && !v.is_nan()) {
                    best = j;
                }
            }
            best
        })
        .collect()
}

/// Arithmetic mean of embedding rows in `[start_frame, end_frame)`.
pub fn span_embedding(embeddings: &Array2<f32>, span: &AlignmentSpan) -> Result<Vec<f64>, AlignError> {
    mean_rows(embeddings, span.start_frame, span.end_frame)
}

pub(crate) fn mean_rows(
    embeddings: &Array2<f32>,
    start: usize,
    end: usize,
) -> Result<Vec<f64>, AlignError> {
    let frames = embeddings.nrows();
    if start >= end || end > frames {
        return Err(AlignError::SpanOutOfRange { start, end, frames });
    }
    let mut acc = vec![0.0f64; embeddings.ncols()];
    for row in embeddings.slice(ndarray::s![start..end, ..]).outer_iter() {
        for (a, &v) in acc.iter_mut().zip(row.iter()) {
            *a += v as f64;
        }
    }
    let n = (end - start) as f64;
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}
