use las_core::lm::train_ngram;
use las_core::model::{listener_length, smooth_labels};
use las_core::numerics::Tensor;
use las_core::training::{
    edit_distance, global_norm, scaled_posteriors, warmup_lr, GradNormTracker, NewBob, Warmup,
};
use proptest::prelude::*;

fn nested_ceil(t: usize, layers: usize) -> usize {
    let mut u = t as f64;
    for _ in 0..layers {
        u = (u / 2.0).ceil();
    }
    u as usize
}

proptest! {
    #[test]
    fn listener_length_formula(t in 1usize..200) {
        prop_assert_eq!(listener_length(t, 3), nested_ceil(t, 3));
    }

    #[test]
    fn smoothed_targets_sum_to_one(k in 2usize..600, eps in 0.0f64..0.999, truth in 0usize..600) {
        let truth = (truth % k) as u32;
        let q = smooth_labels(truth, k, eps).unwrap();
        prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(q.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn tracker_output_never_exceeds_cap(norms in prop::collection::vec(0.0f64..100.0, 1..60), dims in 1usize..5) {
        let mut tr = GradNormTracker::default();
        for n in norms {
            let mut g: Vec<Tensor> = (0..dims).map(|_| Tensor::vector(&[n / (dims as f64).sqrt()])).collect();
            tr.track_and_clip(&mut g).unwrap();
            prop_assert!(global_norm(&g) <= 5.0 + 1e-12);
            prop_assert!(tr.sq_mean >= tr.mean * tr.mean - 1e-9);
            prop_assert!(tr.mean >= 0.0);
        }
    }

    #[test]
    fn newbob_never_raises_the_rate(losses in prop::collection::vec(0.01f64..10.0, 1..40)) {
        let mut nb = NewBob::new(0.002, 0.9, 1e-3);
        let mut last = nb.lr;
        for l in losses {
            nb.update(l).unwrap();
            prop_assert!(nb.lr <= last);
            last = nb.lr;
        }
    }

    #[test]
    fn warmup_is_monotone_and_crosses_at_the_end(steps in 1usize..5000) {
        let w = Warmup { steps, ..Warmup::default() };
        let mut prev = 0.0;
        for s in (0..=steps + 3).step_by((steps / 50).max(1)) {
            let lr = warmup_lr(s, &w);
            prop_assert!(lr >= prev);
            prev = lr;
        }
        prop_assert!(warmup_lr(steps - 1, &w) < w.lr_end);
        prop_assert_eq!(warmup_lr(steps, &w), w.lr_end);
    }

    #[test]
    fn edit_distance_swaps_deletions_and_insertions(
        a in prop::collection::vec(0u8..4, 0..12),
        b in prop::collection::vec(0u8..4, 0..12),
    ) {
        let x = edit_distance(&a, &b);
        let y = edit_distance(&b, &a);
        prop_assert_eq!(x.total(), y.total());
        prop_assert_eq!(x.substitutions, y.substitutions);
        prop_assert_eq!(x.deletions, y.insertions);
        prop_assert_eq!(x.insertions, y.deletions);
    }

    #[test]
    fn scaled_posteriors_sum_to_one(lp in prop::collection::vec(-200.0f64..0.0, 1..16), gamma in 0.01f64..1.0) {
        let p = scaled_posteriors(&lp, gamma).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn trained_ngrams_normalize(
        sents in prop::collection::vec(prop::collection::vec(0u8..5, 1..6), 1..8),
        order in 1usize..4,
        discount in 0.05f64..0.95,
    ) {
        let corpus: Vec<Vec<String>> = sents.iter().map(|s| s.iter().map(|w| format!("w{w}")).collect()).collect();
        let lm = train_ngram(&corpus, order, discount).unwrap();
        let mut contexts: Vec<Vec<u32>> = vec![vec![]];
        for n in 1..order {
            contexts.extend(lm.entries(n).map(|(k, _)| k.to_vec()));
        }
        for h in contexts {
            let total: f64 = (0..lm.vocab().len() as u32).map(|w| 10f64.powf(lm.logprob10(&h, w))).sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "{:?} {}", h, total);
        }
    }
}
