mod common;

use common::{label_spans, legal_paths, random_log_probs};
use psp_core::align::{force_align, viterbi, AlignError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn check_instance(seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.random_range(1..=6);
    let v = rng.random_range(2..=4);
    let n = rng.random_range(1..=3);
    let targets: Vec<usize> = (0..n).map(|_| rng.random_range(1..v)).collect();
    let em = random_log_probs(&mut rng, t, v);
    let vocab: Vec<String> = (0..v).map(|i| i.to_string()).collect();

    let paths = legal_paths(&em, &targets, 0);
    let ours = force_align(em.view(), &targets, 0, &vocab);
    if paths.is_empty() {
        assert!(
            matches!(ours, Err(AlignError::InfeasibleLength { .. })),
            "seed {seed}: no legal path but aligner returned {ours:?}"
        );
        return;
    }
    let best = paths.iter().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
    let winners: Vec<&(Vec<usize>, f64)> = paths.iter().filter(|p| p.1 == best).collect();
    let path = viterbi(em.view(), &targets, 0).unwrap();
    assert_eq!(path.log_prob, best, "seed {seed}: path score");

    let spans = ours.unwrap();
    let got: Vec<(usize, usize, usize, f64)> = spans
        .iter()
        .map(|s| (s.target_index, s.start_frame, s.end_frame, s.score))
        .collect();
    assert!(
        winners.iter().any(|(labels, _)| label_spans(&em, labels, 0) == got),
        "seed {seed}: spans {got:?} not among the {} optimal labellings",
        winners.len()
    );
    // monotone, covering, blank-free
    assert_eq!(spans.len(), targets.len());
    for w in spans.windows(2) {
        assert!(w[1].start_frame >= w[0].end_frame);
    }
    assert!(spans.iter().all(|s| s.end_frame > s.start_frame));
}

#[test]
fn matches_exhaustive_enumeration() {
    for seed in 0..500 {
        check_instance(seed);
    }
}

#[test]
fn repeated_labels_need_a_blank() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let em = random_log_probs(&mut rng, 2, 3);
    let vocab: Vec<String> = (0..3).map(|i| i.to_string()).collect();
    assert!(matches!(
        force_align(em.view(), &[1, 1], 0, &vocab),
        Err(AlignError::InfeasibleLength { frames: 2, required: 3 })
    ));
    let em = random_log_probs(&mut rng, 3, 3);
    let spans = force_align(em.view(), &[1, 1], 0, &vocab).unwrap();
    assert_eq!((spans[0].start_frame, spans[1].start_frame), (0, 2));
}
