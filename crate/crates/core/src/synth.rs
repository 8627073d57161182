//! Synthetic bundle construction for fixtures and tests.
//!
//! Frames are planned by label: each frame names the vocabulary entry that
//! should win the per-frame argmax (or `None` for blank) and the embedding
//! row to store. Emissions are the log-softmax of logits that put `margin`
//! on the planned label and 0 elsewhere.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::interchange::{tables_for, DimensionTable, UtteranceBundle};
use crate::{Dimension, Language};

#[derive(Debug, Clone)]
pub struct BundleBuilder {
    id: String,
    language: Language,
    vocab: Vec<String>,
    blank_index: usize,
    dim: usize,
    labels: Vec<Option<usize>>,
    rows: Vec<Vec<f32>>,
    f0: Option<Vec<f32>>,
    text: Option<String>,
    speaker_id: Option<String>,
    frame_hop_ms: f64,
    margin: f32,
}

impl BundleBuilder {
    /// Blank is vocabulary entry 0.
    pub fn new(id: &str, language: Language, vocab: Vec<&str>, dim: usize) -> Self {
        BundleBuilder {
            id: id.to_string(),
            language,
            vocab: vocab.into_iter().map(String::from).collect(),
            blank_index: 0,
            dim,
            labels: Vec::new(),
            rows: Vec::new(),
            f0: None,
            text: None,
            speaker_id: None,
            frame_hop_ms: 20.0,
            margin: 6.0,
        }
    }

    /// Appends frames. `embedding` is called with the absolute frame index.
    pub fn frames(mut self, labels: &[Option<usize>], embedding: impl Fn(usize) -> Vec<f32>) -> Self {
        for &l in labels {
            let t = self.labels.len();
            let row = embedding(t);
            assert_eq!(row.len(), self.dim, "embedding width");
            self.labels.push(l);
            self.rows.push(row);
        }
        self
    }

    /// Appends `n` frames of `label`, all with the same embedding row.
    pub fn run(self, label: Option<usize>, n: usize, embedding: &[f32]) -> Self {
        let row = embedding.to_vec();
        self.frames(&vec![label; n], move |_| row.clone())
    }

    pub fn text(mut self, text: &str) -> Self {
        self.text = Some(text.to_string());
        self
    }

    pub fn speaker(mut self, speaker: &str) -> Self {
        self.speaker_id = Some(speaker.to_string());
        self
    }

    pub fn f0(mut self, f0: Vec<f32>) -> Self {
        self.f0 = Some(f0);
        self
    }

    pub fn hop_ms(mut self, hop: f64) -> Self {
        self.frame_hop_ms = hop;
        self
    }

    pub fn margin(mut self, margin: f32) -> Self {
        self.margin = margin;
        self
    }

    /// Text implied by the label plan: planned labels in order, with runs
    /// of the same label collapsed.
    pub fn planned_text(&self) -> String {
        let mut text = String::new();
        let mut prev: Option<usize> = None;
        for &l in &self.labels {
            if let Some(l) = l {
                if prev != Some(l) {
                    text.push_str(&self.vocab[l]);
                }
            }
            prev = l;
        }
        text
    }

    pub fn build(self) -> UtteranceBundle {
        let t = self.labels.len();
        let v = self.vocab.len();
        let mut emissions = Array2::<f32>::zeros((t, v));
        // log-softmax of (margin at the planned label, 0 elsewhere)
        let lse = ((v as f64 - 1.0) + (self.margin as f64).exp()).ln();
        for (i, l) in self.labels.iter().enumerate() {
            let hot = l.unwrap_or(self.blank_index);
            for j in 0..v {
                let logit = if j == hot { self.margin as f64 } else { 0.0 };
                emissions[[i, j]] = (logit - lse) as f32;
            }
        }
        let embeddings = Array2::from_shape_vec(
            (t, self.dim),
            self.rows.iter().flatten().copied().collect(),
        )
        .expect("rows checked on insert");
        let f0 = self.f0.clone().unwrap_or_else(|| vec![120.0; t]);
        assert_eq!(f0.len(), t, "f0 length");
        let text = self.text.clone().unwrap_or_else(|| self.planned_text());
        UtteranceBundle {
            id: self.id,
            language: self.language,
            text,
            frame_hop_ms: self.frame_hop_ms,
            emissions,
            embeddings,
            f0_hz: Array1::from(f0),
            vocab: self.vocab,
            blank_index: self.blank_index,
            duration_s: t as f64 * self.frame_hop_ms / 1000.0,
            speaker_id: self.speaker_id,
            extra: BTreeMap::new(),
        }
    }
}

/// Unit basis vector `e_i` in `dim` dimensions.
pub fn basis(dim: usize, i: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

/// Recipe for a seeded corpus with orthogonal grapheme embeddings.
///
/// Every vocabulary entry owns one basis direction. Probe tokens are
/// embedded at their native grapheme's direction, or at the cognate
/// substitute's direction with probability `collapse_p`. Each utterance
/// also carries a random "style" vector in `style_dims` extra directions
/// that are orthogonal to all graphemes, so FAD and PSD have spread.
/// Utterances come in pairs that share a token plan and have opposite
/// styles, so with an even utterance count and no collapse the style part
/// of every centroid cancels exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedCorpus {
    pub language: Language,
    pub id_prefix: String,
    pub n_utterances: usize,
    pub n_speakers: usize,
    /// Native tokens per utterance for each centroid-probe dimension.
    pub probe_tokens: usize,
    /// Restrict probe tokens to these dimensions (all when empty).
    pub probe_dimensions: Vec<Dimension>,
    /// Long and short vowel tokens per utterance (each).
    pub vowel_tokens: usize,
    pub collapse_p: f64,
    /// Long-vowel duration as a multiple of the short vowel's.
    pub length_ratio: f64,
    pub style_dims: usize,
    pub style_scale: f64,
    pub seed: u64,
}

impl PlantedCorpus {
    pub fn new(language: Language, seed: u64) -> Self {
        PlantedCorpus {
            language,
            id_prefix: format!("{}", language),
            n_utterances: 40,
            n_speakers: 20,
            probe_tokens: 10,
            probe_dimensions: Vec::new(),
            vowel_tokens: 2,
            collapse_p: 0.0,
            length_ratio: 1.9,
            style_dims: 4,
            style_scale: 0.3,
            seed,
        }
    }

    /// Blank first, then every probe grapheme and LF vowel, sorted.
    pub fn vocab(&self, tables: &[DimensionTable]) -> Vec<String> {
        let mut set = BTreeSet::new();
        for t in tables_for(tables, self.language) {
            if t.dimension == Dimension::LF {
                for (long, short) in lf_pairs(t) {
                    set.insert(long);
                    set.insert(short);
                }
            } else {
                set.extend(t.native_graphemes.iter().cloned());
                set.extend(t.cognate_map.values().cloned());
            }
        }
        std::iter::once("_".to_string()).chain(set).collect()
    }

    pub fn build(&self, tables: &[DimensionTable]) -> Vec<UtteranceBundle> {
        let vocab = self.vocab(tables);
        let index: BTreeMap<&str, usize> = vocab.iter().enumerate().map(|(i, g)| (g.as_str(), i)).collect();
        let dim = vocab.len() + self.style_dims;
        let lang_tables = tables_for(tables, self.language);
        let probes: Vec<&DimensionTable> = lang_tables
            .iter()
            .copied()
            .filter(|t| t.dimension.is_centroid_probe())
            .filter(|t| self.probe_dimensions.is_empty() || self.probe_dimensions.contains(&t.dimension))
            .collect();
        let vowels: Vec<(String, String)> = lang_tables
            .iter()
            .filter(|t| t.dimension == Dimension::LF)
            .flat_map(|t| lf_pairs(t))
            .collect();
        let style = Normal::new(0.0, self.style_scale.max(0.0)).expect("finite scale");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut style_u: Vec<f32> = Vec::new();

        // Token plan: (planned grapheme, substitute to show on collapse, frames, trailing blanks).
        let mut plan: Vec<(usize, Option<usize>, usize, usize)> = Vec::new();

        (0..self.n_utterances)
            .map(|u| {
                if u % 2 == 0 {
                    plan.clear();
                    for t in &probes {
                        let natives: Vec<&String> = t.native_graphemes.iter().collect();
                        for k in 0..self.probe_tokens {
                            let g = natives[k % natives.len()];
                            let sub = index[t.cognate(g).expect("validated table")];
                            plan.push((index[g.as_str()], Some(sub), rng.random_range(2..=4), rng.random_range(1..=2)));
                            plan.push((sub, None, rng.random_range(2..=4), rng.random_range(1..=2)));
                        }
                    }
                    for k in 0..if vowels.is_empty() { 0 } else { self.vowel_tokens } {
                        let (long, short) = &vowels[k % vowels.len()];
                        let short_n: usize = rng.random_range(3..=5);
                        let long_n = ((short_n as f64) * self.length_ratio).round().max(1.0) as usize;
                        plan.push((index[long.as_str()], None, long_n, rng.random_range(1..=2)));
                        plan.push((index[short.as_str()], None, short_n, rng.random_range(1..=2)));
                    }
                    plan.shuffle(&mut rng);
                    style_u = (0..self.style_dims).map(|_| style.sample(&mut rng) as f32).collect();
                } else {
                    style_u.iter_mut().for_each(|v| *v = -*v);
                }
                let tokens: Vec<(usize, usize, usize, usize)> = plan
                    .iter()
                    .map(|&(g, sub, n, gap)| {
                        let shown = match sub {
                            Some(sub) if rng.random_bool(self.collapse_p) => sub,
                            _ => g,
                        };
                        (g, shown, n, gap)
                    })
                    .collect();
                let row = |g: Option<usize>| {
                    let mut v = vec![0.0f32; dim];
                    if let Some(g) = g {
                        v[g] = 1.0;
                    }
                    v[vocab.len()..].copy_from_slice(&style_u);
                    v
                };
                let id = format!("{}_{u:04}", self.id_prefix);
                let speaker = format!("{}_spk{:02}", self.id_prefix, u % self.n_speakers.max(1));
                let mut b = BundleBuilder::new(&id, self.language, vocab.iter().map(String::as_str).collect(), dim)
                    .speaker(&speaker)
                    .run(None, 2, &row(None));
                for (planned, shown, n, gap) in tokens {
                    b = b.run(Some(planned), n, &row(Some(shown))).run(None, gap, &row(None));
                }
                b = b.run(None, 1, &row(None));
                let n = b.labels.len();
                let base: f64 = rng.random_range(100.0..220.0);
                let depth: f64 = rng.random_range(0.05..0.3);
                let f0: Vec<f32> = (0..n)
                    .map(|t| {
                        if t < 2 || t + 1 == n {
                            0.0
                        } else {
                            (base * (depth * (t as f64 * 0.2).sin()).exp()) as f32
                        }
                    })
                    .collect();
                b.f0(f0).build()
            })
            .collect()
    }
}

fn is_independent_vowel(g: &str) -> bool {
    g.chars().all(|c| {
        matches!(c, '\u{0904}'..='\u{0914}' | '\u{0C05}'..='\u{0C14}' | '\u{0B85}'..='\u{0B94}')
    })
}

/// (long, short) pairs of independent vowels from an LF table.
fn lf_pairs(t: &DimensionTable) -> Vec<(String, String)> {
    t.cognate_map
        .iter()
        .filter(|(l, s)| is_independent_vowel(l) && is_independent_vowel(s))
        .map(|(l, s)| (l.clone(), s.clone()))
        .collect()
}
