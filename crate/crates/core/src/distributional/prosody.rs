use serde::{Deserialize, Serialize};

use super::StatsError;
use crate::align::AlignmentSpan;
use crate::interchange::UtteranceBundle;

/// Normalized Pairwise Variability Index of successive durations:
/// `100/(m−1) · Σ |d_k − d_{k+1}| / ((d_k + d_{k+1}) / 2)`.
pub fn npvi(intervals: &[f64]) -> Result<f64, StatsError> {
    if intervals.len() < 2 {
        return Err(StatsError::TooFewIntervals(intervals.len()));
    }
    if let Some((index, &value)) = intervals
        .iter()
        .enumerate()
        .find(|(_, &d)| !(d > 0.0 && d.is_finite()))
    {
        return Err(StatsError::NonPositiveInterval { index, value });
    }
    let sum: f64 = intervals
        .windows(2)
        .map(|w| (w[0] - w[1]).abs() / ((w[0] + w[1]) / 2.0))
        .sum();
    Ok(100.0 * sum / (intervals.len() - 1) as f64)
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    let rank = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Per-utterance prosodic features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProsodicVector {
    /// 95th − 5th percentile of natural-log F0 over voiced frames.
    pub pitch_range: f64,
    pub logf0_mean: f64,
    /// Aligned graphemes per second.
    pub speech_rate: f64,
    pub npvi: f64,
    pub log_duration: f64,
}

impl ProsodicVector {
    pub const DIM: usize = 5;

    pub fn to_array(&self) -> [f64; 5] {
        [
            self.pitch_range,
            self.logf0_mean,
            self.speech_rate,
            self.npvi,
            self.log_duration,
        ]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        ProsodicVector {
            pitch_range: a[0],
            logf0_mean: a[1],
            speech_rate: a[2],
            npvi: a[3],
            log_duration: a[4],
        }
    }
}

/// Extracts the 5-D prosodic vector. nPVI runs over onset-to-onset
/// intervals of consecutive spans; intervals of zero length are merged, and
/// at least two intervals (three distinct onsets) are required.
pub fn prosodic_vector(
    bundle: &UtteranceBundle,
    spans: &[AlignmentSpan],
) -> Result<ProsodicVector, StatsError> {
    let mut logf0: Vec<f64> = bundle
        .f0_hz
        .iter()
        .filter(|&&f| f > 0.0)
        .map(|&f| (f as f64).ln())
        .collect();
    if logf0.is_empty() {
        return Err(StatsError::NoVoicedFrames);
    }
    logf0.sort_by(f64::total_cmp);
    let pitch_range = percentile(&logf0, 0.95) - percentile(&logf0, 0.05);
    let logf0_mean = logf0.iter().sum::<f64>() / logf0.len() as f64;

    let mut onsets: Vec<usize> = spans.iter().map(|s| s.start_frame).collect();
    onsets.sort_unstable();
    onsets.dedup();
    if onsets.len() < 3 {
        return Err(StatsError::TooFewSpans {
            needed: 3,
            got: onsets.len(),
        });
    }
    let hop_s = bundle.frame_hop_ms / 1000.0;
    let intervals: Vec<f64> = onsets
        .windows(2)
        .map(|w| (w[1] - w[0]) as f64 * hop_s)
        .collect();

    Ok(ProsodicVector {
        pitch_range,
        logf0_mean,
        speech_rate: spans.len() as f64 / bundle.duration_s,
        npvi: npvi(&intervals)?,
        log_duration: bundle.duration_s.ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::BundleBuilder;
    use crate::Language;

    #[test]
    fn npvi_hand_values() {
        assert_eq!(npvi(&[0.3, 0.3, 0.3]).unwrap(), 0.0);
        assert!((npvi(&[1.0, 2.0]).unwrap() - 200.0 / 3.0).abs() < 1e-9);
        assert!((npvi(&[2.0, 2.0, 2.0, 4.0]).unwrap() - 200.0 / 9.0).abs() < 1e-9);
    }

    #[test]
    fn npvi_errors() {
        assert_eq!(npvi(&[1.0]).unwrap_err(), StatsError::TooFewIntervals(1));
        assert!(matches!(
            npvi(&[1.0, 0.0]),
            Err(StatsError::NonPositiveInterval { index: 1, .. })
        ));
    }

    fn span(start: usize, end: usize) -> AlignmentSpan {
        AlignmentSpan {
            target_index: 0,
            grapheme: "a".into(),
            start_frame: start,
            end_frame: end,
            score: 0.0,
        }
    }

    fn bundle(frames: usize, f0: f32) -> UtteranceBundle {
        BundleBuilder::new("p", Language::Te, vec!["_", "a"], 1)
            .run(Some(1), frames, &[0.0])
            .f0(vec![f0; frames])
            .build()
    }

    #[test]
    fn constant_pitch() {
        let b = bundle(20, std::f32::consts::E);
        let spans = [span(0, 2), span(5, 6), span(15, 16)];
        let p = prosodic_vector(&b, &spans).unwrap();
        assert!(p.pitch_range.abs() < 1e-12);
        assert!((p.logf0_mean - 1.0).abs() < 1e-6);
        // onsets 0, 5, 15 at 20 ms: intervals 0.1 s and 0.2 s
        assert!((p.npvi - 200.0 / 3.0).abs() < 1e-9);
        assert!((p.log_duration - 0.4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn speech_rate_counts_spans() {
        let b = bundle(100, 100.0); // 2 s
        let spans: Vec<_> = (0..10).map(|i| span(i * 10, i * 10 + 1)).collect();
        let p = prosodic_vector(&b, &spans).unwrap();
        assert!((p.speech_rate - 5.0).abs() < 1e-12);
    }

    #[test]
    fn unvoiced_and_short() {
        let b = bundle(10, 0.0);
        assert_eq!(
            prosodic_vector(&b, &[span(0, 1), span(2, 3), span(4, 5)]).unwrap_err(),
            StatsError::NoVoicedFrames
        );
        let b = bundle(10, 100.0);
        assert!(matches!(
            prosodic_vector(&b, &[span(0, 1), span(2, 3)]),
            Err(StatsError::TooFewSpans { .. })
        ));
    }

    #[test]
    fn percentile_interpolates() {
        let s = [0.0, 1.0, 2.0, 3.0, 4.0];
        assert_eq!(percentile(&s, 0.5), 2.0);
        assert!((percentile(&s, 0.95) - 3.8).abs() < 1e-12);
        assert!((percentile(&s, 0.05) - 0.2).abs() < 1e-12);
    }
}
