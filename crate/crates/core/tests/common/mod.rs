//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use ndarray::Array2;
use rand::Rng;

use psp_core::centroids::{build_centroids, build_reference_bank, BankConfig, CentroidConfig};
use psp_core::interchange::{default_tables, DimensionTable};
use psp_core::synth::PlantedCorpus;
use psp_core::{CentroidSet, GaussianSummary, Language, ReferenceBank, UtteranceBundle};

/// Random T x V log-softmax matrix.
pub fn random_log_probs(rng: &mut impl Rng, t: usize, v: usize) -> Array2<f32> {
    let mut m = Array2::<f32>::zeros((t, v));
    for mut row in m.outer_iter_mut() {
        let logits: Vec<f64> = (0..v).map(|_| rng.random_range(-4.0..4.0)).collect();
        let lse = logits.iter().map(|x| x.exp()).sum::<f64>().ln();
        for (r, l) in row.iter_mut().zip(&logits) {
            *r = (l - lse) as f32;
        }
    }
    m
}

/// CTC collapse: merge repeats, then drop blanks.
pub fn ctc_collapse(labels: &[usize], blank: usize) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in labels {
        if Some(l) != prev && l != blank {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Every frame labelling of length T over V symbols that collapses to
/// `targets`, with its summed log-probability.
pub fn legal_paths(em: &Array2<f32>, targets: &[usize], blank: usize) -> Vec<(Vec<usize>, f64)> {
    let (t, v) = em.dim();
    let mut out = Vec::new();
    let mut labels = vec![0usize; t];
    for code in 0..v.pow(t as u32) {
        let mut c = code;
        for l in labels.iter_mut() {
            *l = c % v;
            c /= v;
        }
        if ctc_collapse(&labels, blank) == targets {
            let mut score = 0.0f64;
            for (i, &l) in labels.iter().enumerate() {
                score += em[[i, l]] as f64;
            }
            out.push((labels.clone(), score));
        }
    }
    out
}

/// (target_index, start, end, mean log-prob) per token of a labelling.
pub fn label_spans(em: &Array2<f32>, labels: &[usize], blank: usize) -> Vec<(usize, usize, usize, f64)> {
    let mut spans: Vec<(usize, usize, usize, f64)> = Vec::new();
    let mut k = 0usize;
    for (t, &l) in labels.iter().enumerate() {
        if l == blank {
            continue;
        }
        let continues = t > 0 && labels[t - 1] == l;
        if continues {
            let s = spans.last_mut().unwrap();
            s.2 = t + 1;
            s.3 += em[[t, l]] as f64;
        } else {
            spans.push((k, t, t + 1, em[[t, l]] as f64));
            k += 1;
        }
    }
    for s in &mut spans {
        s.3 /= (s.2 - s.1) as f64;
    }
    spans
}

/// Fréchet distance between 1-D normals given means and variances.
pub fn frechet_1d(m1: f64, v1: f64, m2: f64, v2: f64) -> f64 {
    (m1 - m2).powi(2) + (v1.sqrt() - v2.sqrt()).powi(2)
}

pub fn gaussian(mean: &[f64], cov_diag: &[f64]) -> GaussianSummary {
    GaussianSummary {
        mean: DVector::from_column_slice(mean),
        cov: DMatrix::from_diagonal(&DVector::from_column_slice(cov_diag)),
        n: 100,
    }
}

pub fn native_corpus(language: Language, seed: u64) -> Vec<UtteranceBundle> {
    let mut r = PlantedCorpus::new(language, seed);
    r.id_prefix = "native".into();
    r.build(&default_tables())
}

pub struct NativeRefs {
    pub tables: Vec<DimensionTable>,
    pub bundles: Vec<UtteranceBundle>,
    pub centroids: CentroidSet,
    pub bank: ReferenceBank,
}

pub fn native_refs(language: Language, seed: u64) -> NativeRefs {
    let tables = default_tables();
    let bundles = native_corpus(language, seed);
    let (centroids, _) = build_centroids(&bundles, &tables, "native", &CentroidConfig::default()).unwrap();
    let (bank, _) = build_reference_bank(&bundles, "native", &BankConfig::default()).unwrap();
    NativeRefs {
        tables,
        bundles,
        centroids,
        bank,
    }
}

pub fn as_loaded(bundles: Vec<UtteranceBundle>) -> Vec<(String, Result<UtteranceBundle, String>)> {
    bundles.into_iter().map(|b| (b.id.clone(), Ok(b))).collect()
}
