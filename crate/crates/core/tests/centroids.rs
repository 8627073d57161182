mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use psp_core::centroids::{
    build_centroids, build_reference_bank, sample_corpus, BankConfig, CentroidConfig, CentroidError, SampleConfig,
};
use psp_core::interchange::{default_tables, CorpusEntry, CorpusManifest};
use psp_core::synth::PlantedCorpus;
use psp_core::{greedy_frames, Language, UtteranceBundle};

fn noisy(mut bundles: Vec<UtteranceBundle>, seed: u64) -> Vec<UtteranceBundle> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for b in &mut bundles {
        b.embeddings.mapv_inplace(|v| v + rng.random_range(-0.1f32..0.1));
    }
    bundles
}

fn manifest(speakers: usize, clips: usize) -> CorpusManifest {
    CorpusManifest {
        corpus_id: "synthetic".into(),
        language: Language::Ta,
        system: None,
        utterances: (0..speakers)
            .flat_map(|s| {
                (0..clips).map(move |c| CorpusEntry {
                    id: format!("s{s:02}_c{c:02}"),
                    path: format!("s{s:02}_c{c:02}"),
                    speaker_id: Some(format!("s{s:02}")),
                })
            })
            .collect(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn centroids_do_not_depend_on_bundle_order(shuffle in any::<u64>()) {
        let tables = default_tables();
        let mut bundles = noisy(common::native_corpus(Language::Te, 5), 11);
        let (reference, _) = build_centroids(&bundles, &tables, "c", &CentroidConfig::default()).unwrap();
        bundles.shuffle(&mut ChaCha8Rng::seed_from_u64(shuffle));
        let (shuffled, _) = build_centroids(&bundles, &tables, "c", &CentroidConfig::default()).unwrap();
        prop_assert_eq!(reference.digest(), shuffled.digest());
        prop_assert!(reference == shuffled);
    }
}

#[test]
fn planted_clusters_are_recovered() {
    let tables = default_tables();
    for language in Language::ALL {
        let planted = PlantedCorpus::new(language, 3);
        let vocab = planted.vocab(&tables);
        let bundles = planted.build(&tables);
        let (set, warnings) = build_centroids(&bundles, &tables, "c", &CentroidConfig::default()).unwrap();
        assert!(warnings.is_empty(), "{warnings:?}");
        assert!(!set.entries.is_empty());
        for e in set.entries.values() {
            for (grapheme, centroid) in [(&e.native, &e.native_centroid), (&e.substitute, &e.substitute_centroid)] {
                let k = vocab.iter().position(|g| g == grapheme).unwrap();
                for (i, &v) in centroid.iter().enumerate() {
                    let expect = if i == k { 1.0 } else { 0.0 };
                    assert!((v - expect).abs() <= 1e-6, "{language} {grapheme} [{i}] = {v}");
                }
            }
        }
    }
}

#[test]
fn substitute_bags_only_use_utterances_with_native_tokens() {
    let tables = default_tables();
    let mut planted = PlantedCorpus::new(Language::Hi, 9);
    planted.collapse_p = 0.3;
    let bundles = planted.build(&tables);
    let (set, _) = build_centroids(&bundles, &tables, "c", &CentroidConfig::default()).unwrap();
    for e in set.entries.values() {
        let natives: BTreeSet<&String> = e.native_utterances.iter().collect();
        assert!(!e.substitute_utterances.is_empty());
        assert!(e.substitute_utterances.iter().all(|u| natives.contains(u)), "{}", e.native);
    }
}

#[test]
fn speaker_cap_is_enforced_and_recorded() {
    let tables = default_tables();
    let mut planted = PlantedCorpus::new(Language::Ta, 4);
    planted.n_utterances = 52;
    planted.n_speakers = 2;
    let bundles = planted.build(&tables);
    match build_centroids(&bundles, &tables, "c", &CentroidConfig::default()) {
        Err(CentroidError::SpeakerCapExceeded { clips: 26, cap: 25, .. }) => {}
        other => panic!("{other:?}"),
    }
    let (set, _) = build_centroids(&bundles, &tables, "c", &CentroidConfig { cap: 26 }).unwrap();
    assert_eq!(set.provenance.speaker_count, 2);
    assert!(set.provenance.clips_per_speaker.values().all(|&n| n <= 26));
    assert_eq!(set.provenance.utterance_ids.len(), 52);
}

#[test]
fn bank_mean_matches_planted_mean() {
    let mut bundles = common::native_corpus(Language::Ta, 8);
    let d = bundles[0].embedding_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mu: Vec<f32> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut offset: Vec<f32> = Vec::new();
    for (u, b) in bundles.iter_mut().enumerate() {
        if u % 2 == 0 {
            offset = (0..d).map(|_| rng.random_range(-0.5..0.5)).collect();
        } else {
            offset.iter_mut().for_each(|v| *v = -*v);
        }
        let labels = greedy_frames(b.emissions.view());
        for (t, mut row) in b.embeddings.rows_mut().into_iter().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                // blank frames get junk that must not reach the mean
                *v = if labels[t] == b.blank_index { 50.0 } else { mu[j] + offset[j] };
            }
        }
    }
    let (bank, _) = build_reference_bank(&bundles, "native", &BankConfig::default()).unwrap();
    assert_eq!(bank.utterance_embeddings.nrows(), bundles.len());
    let mean = bank.utterance_embeddings.mean_axis(ndarray::Axis(0)).unwrap();
    for (m, &p) in mean.iter().zip(&mu) {
        assert!((m - p as f64).abs() <= 1e-6, "{m} vs {p}");
    }
}

#[test]
fn sampling_caps_speakers_and_is_deterministic() {
    let m = manifest(30, 30);
    let config = SampleConfig { cap: 25, min_speakers: 20, max_total: None, seed: 7 };
    let ids = sample_corpus(&m, &config).unwrap();
    assert_eq!(ids.len(), 750);
    assert_eq!(ids.iter().collect::<BTreeSet<_>>().len(), 750);
    for s in 0..30 {
        let prefix = format!("s{s:02}_");
        assert_eq!(ids.iter().filter(|i| i.starts_with(&prefix)).count(), 25);
    }
    assert_eq!(ids, sample_corpus(&m, &config).unwrap());
    assert_ne!(ids, sample_corpus(&m, &SampleConfig { seed: 8, ..config }).unwrap());

    let limited = sample_corpus(&m, &SampleConfig { max_total: Some(60), ..config }).unwrap();
    assert_eq!(limited.len(), 60);
    for s in 0..30 {
        let prefix = format!("s{s:02}_");
        assert_eq!(limited.iter().filter(|i| i.starts_with(&prefix)).count(), 2);
    }

    match sample_corpus(&manifest(10, 30), &config) {
        Err(CentroidError::TooFewSpeakers { found: 10, required: 20 }) => {}
        other => panic!("{other:?}"),
    }
}
