mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use psp_core::align::greedy_frames;
use psp_core::bootstrap::{bootstrap_ci, replicate_statistics, BootstrapConfig, Statistic};
use psp_core::probes::{aggregate, fidelity, lf_score, normalize_floor, AggregateLevel, TokenFidelity};
use psp_core::{fit_gaussian, frechet, npvi, AlignmentSpan, Dimension};

fn rows(seed: u64, n: usize, d: usize, scale: f64, shift: f64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |(_, j)| shift + scale * (j as f64 + 1.0) * rng.random_range(-1.0..1.0))
}

fn token(utt: &str, f: f64, tau: f64) -> TokenFidelity {
    TokenFidelity {
        utterance_id: utt.to_string(),
        dimension: Dimension::RR,
        grapheme: "ट".into(),
        fidelity: f,
        collapsed: f < tau,
        low_confidence: false,
        span: AlignmentSpan {
            target_index: 0,
            grapheme: "ट".into(),
            start_frame: 0,
            end_frame: 1,
            score: 0.0,
        },
    }
}

/// Unit vector with cosine `sn` to e0 and `ss` to e1, in 3 dimensions.
fn with_cosines(sn: f64, ss: f64) -> Vec<f64> {
    vec![sn, ss, (1.0 - sn * sn - ss * ss).max(0.0).sqrt()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn frechet_is_symmetric(seed in any::<u64>(), d in 1usize..6, n in 3usize..30, shift in -3.0f64..3.0) {
        let a = fit_gaussian(rows(seed, n, d, 1.0, 0.0).view()).unwrap();
        let b = fit_gaussian(rows(seed ^ 0x9e37, n + 2, d, 2.0, shift).view()).unwrap();
        let ab = frechet(&a, &b, 1e-6).unwrap();
        let ba = frechet(&b, &a, 1e-6).unwrap();
        prop_assert!((ab.total - ba.total).abs() <= 1e-6 * ab.total.abs().max(1e-12));
        for r in [ab, ba] {
            prop_assert!(r.trace_term >= -1e-6);
            prop_assert_eq!(r.total, r.mean_dist * r.mean_dist + r.trace_term);
        }
    }

    #[test]
    fn frechet_self_distance_is_small(seed in any::<u64>(), d in 1usize..8, n in 2usize..40) {
        let eps = 1e-6;
        let a = fit_gaussian(rows(seed, n, d, 1.0, 0.5).view()).unwrap();
        let r = frechet(&a, &a, eps).unwrap();
        prop_assert!(r.total <= 10.0 * d as f64 * eps, "{:?}", r);
    }

    #[test]
    fn frechet_diagonal_matches_closed_form(
        means in prop::collection::vec((-10.0f64..10.0, -10.0f64..10.0), 1..7),
        vars in prop::collection::vec((0.01f64..20.0, 0.01f64..20.0), 7),
    ) {
        let d = means.len();
        let (m1, m2): (Vec<f64>, Vec<f64>) = means.into_iter().unzip();
        let (v1, v2): (Vec<f64>, Vec<f64>) = vars.into_iter().take(d).unzip();
        let r = frechet(&common::gaussian(&m1, &v1), &common::gaussian(&m2, &v2), 0.0).unwrap();
        let expect: f64 = (0..d).map(|i| common::frechet_1d(m1[i], v1[i], m2[i], v2[i])).sum();
        prop_assert!((r.total - expect).abs() <= 1e-6 * expect.max(1e-9), "{} vs {}", r.total, expect);
    }

    #[test]
    fn npvi_scale_invariant(d in prop::collection::vec(0.01f64..5.0, 2..20), c in 0.001f64..1000.0) {
        let a = npvi(&d).unwrap();
        let scaled: Vec<f64> = d.iter().map(|x| x * c).collect();
        let b = npvi(&scaled).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
        prop_assert!((0.0..200.0).contains(&a));
    }

    #[test]
    fn fidelity_scale_invariant_in_each_argument(
        e in prop::collection::vec(-1.0f64..1.0, 4),
        n in prop::collection::vec(-1.0f64..1.0, 4),
        s in prop::collection::vec(-1.0f64..1.0, 4),
        c in 0.01f64..100.0,
    ) {
        prop_assume!([&e, &n, &s].iter().all(|v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6));
        let scale = |v: &[f64]| v.iter().map(|x| x * c).collect::<Vec<_>>();
        let f = fidelity(&e, &n, &s).unwrap();
        prop_assert!((0.0..=1.0).contains(&f));
        for g in [
            fidelity(&scale(&e), &n, &s).unwrap(),
            fidelity(&e, &scale(&n), &s).unwrap(),
            fidelity(&e, &n, &scale(&s)).unwrap(),
        ] {
            prop_assert!((f - g).abs() <= 1e-12);
        }
    }

    #[test]
    fn fidelity_strictly_increases_in_native_similarity(a in 0.0f64..0.6, b in 0.0f64..0.6, ss in 0.01f64..0.7) {
        prop_assume!((a - b).abs() > 1e-6);
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let mu_n = [1.0, 0.0, 0.0];
        let mu_s = [0.0, 1.0, 0.0];
        let f_lo = fidelity(&with_cosines(lo, ss), &mu_n, &mu_s).unwrap();
        let f_hi = fidelity(&with_cosines(hi, ss), &mu_n, &mu_s).unwrap();
        prop_assert!(f_lo < f_hi);
    }

    #[test]
    fn floor_normalization_bounds(sys in 0.0f64..=1.0, nat in 0.0f64..0.999) {
        let v = normalize_floor(sys, nat).unwrap();
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(normalize_floor(nat, nat).unwrap(), 0.0);
        prop_assert_eq!(normalize_floor(1.0, nat).unwrap(), 1.0);
    }

    #[test]
    fn lf_nondecreasing_in_ratio(prior in 1.01f64..4.0, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let r = |x: f64| 1.0 + x * (prior - 1.0);
        prop_assert!(lf_score(r(lo), prior).unwrap() <= lf_score(r(hi), prior).unwrap());
    }

    #[test]
    fn corpus_aggregate_is_pooled_mean(groups in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 1..12), 1..10)) {
        let tokens: Vec<TokenFidelity> = groups
            .iter()
            .enumerate()
            .flat_map(|(u, g)| g.iter().map(move |&f| token(&format!("u{u:02}"), f, 0.5)))
            .collect();
        let s = aggregate(&tokens, AggregateLevel::Corpus).unwrap();
        // pooled mean of utterance sums, utterances in id order
        let sum: f64 = groups.iter().map(|g| g.iter().sum::<f64>()).sum();
        let n: usize = groups.iter().map(Vec::len).sum();
        prop_assert_eq!(s.mean_fidelity, sum / n as f64);
        // utterance order must not matter; token order within an utterance is fixed by alignment
        let rev: Vec<TokenFidelity> = groups
            .iter()
            .enumerate()
            .rev()
            .flat_map(|(u, g)| g.iter().map(move |&f| token(&format!("u{u:02}"), f, 0.5)))
            .collect();
        prop_assert_eq!(aggregate(&rev, AggregateLevel::Corpus).unwrap().mean_fidelity, s.mean_fidelity);
        let all_high: Vec<TokenFidelity> = tokens.iter().map(|t| token(&t.utterance_id, 0.5 + t.fidelity / 2.0, 0.5)).collect();
        prop_assert_eq!(aggregate(&all_high, AggregateLevel::Corpus).unwrap().collapse_rate, Some(0.0));
        let all_low: Vec<TokenFidelity> = tokens.iter().map(|t| token(&t.utterance_id, t.fidelity * 0.49, 0.5)).collect();
        prop_assert_eq!(aggregate(&all_low, AggregateLevel::Corpus).unwrap().collapse_rate, Some(1.0));
    }

    #[test]
    fn bootstrap_interval_is_ordered_and_inside_replicates(
        groups in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 0..8), 1..15),
        seed in any::<u64>(),
    ) {
        prop_assume!(groups.iter().any(|g| !g.is_empty()));
        let config = BootstrapConfig { replicates: 200, seed, ..Default::default() };
        let (lo, hi) = bootstrap_ci(&groups, Statistic::PooledMean, &config).unwrap();
        prop_assert!(lo <= hi);
        let units: Vec<&Vec<f64>> = groups.iter().filter(|g| !g.is_empty()).collect();
        let reps = replicate_statistics(units.len(), &config, |idx| {
            let (s, n) = idx.iter().fold((0.0, 0usize), |(s, n), &i| (s + units[i].iter().sum::<f64>(), n + units[i].len()));
            Some(s / n as f64)
        });
        let min = reps.iter().copied().fold(f64::INFINITY, f64::min);
        let max = reps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(min - 1e-12 <= lo && hi <= max + 1e-12);
    }

    #[test]
    fn greedy_unchanged_by_constant_shift(seed in any::<u64>(), t in 1usize..20, v in 2usize..8, c in -50.0f32..50.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let em = common::random_log_probs(&mut rng, t, v);
        let shifted = em.mapv(|x| x + c);
        prop_assert_eq!(greedy_frames(em.view()), greedy_frames(shifted.view()));
    }
}

#[test]
fn bootstrap_width_shrinks_with_more_utterances() {
    let width = |n: usize, trial: u64| {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + trial);
        let groups: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..5).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let config = BootstrapConfig { replicates: 400, seed: trial, ..Default::default() };
        let (lo, hi) = bootstrap_ci(&groups, Statistic::PooledMean, &config).unwrap();
        hi - lo
    };
    let median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        (v[24] + v[25]) / 2.0
    };
    let small = median((0..50).map(|t| width(10, t)).collect());
    let large = median((0..50).map(|t| width(100, t)).collect());
    assert!(large < 0.5 * small, "{large} vs {small}");
}

#[test]
fn bootstrap_is_identical_across_thread_counts() {
    let groups: Vec<Vec<f64>> = (0..30).map(|u| (0..u % 7).map(|k| ((u * 7 + k) % 10) as f64 / 10.0).collect()).collect();
    let config = BootstrapConfig { seed: 42, ..Default::default() };
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| bootstrap_ci(&groups, Statistic::CollapseRate { tau: 0.5 }, &config).unwrap())
    };
    let one = run(1);
    for threads in [2, 3, 8] {
        let other = run(threads);
        assert_eq!(one.0.to_bits(), other.0.to_bits());
        assert_eq!(one.1.to_bits(), other.1.to_bits());
    }
}
