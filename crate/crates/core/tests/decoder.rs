use las_core::decoder::{
    beam_search, greedy, length_penalty, merge_wordpieces, ranking_score, rescore_nbest, BeamConfig, Hypothesis,
    LmLevel, NoLm, SentenceLm, SequenceScorer,
};
use las_core::lm::{NeuralLm, NeuralLmConfig};
use las_core::model::{LasConfig, LasModel, LasScorer};
use las_core::numerics::{log_softmax, Prng, Tensor};
use las_core::wordpiece::{learn_bpe, EOS};
use las_core::{Result, TokenId};
use proptest::prelude::*;

/// Deterministic pseudo-random next-token distributions keyed on the prefix.
struct Toy {
    vocab: usize,
    seed: u64,
    sharpness: f64,
}

impl SequenceScorer for Toy {
    type State = Vec<TokenId>;
    fn start(&self) -> Result<(Vec<f64>, Vec<TokenId>)> {
        Ok((self.dist(&[]), Vec::new()))
    }
    fn step(&self, s: &Vec<TokenId>, t: TokenId) -> Result<(Vec<f64>, Vec<TokenId>)> {
        let mut n = s.clone();
        n.push(t);
        Ok((self.dist(&n), n))
    }
    fn vocab_size(&self) -> usize {
        self.vocab
    }
}

impl Toy {
    fn dist(&self, prefix: &[TokenId]) -> Vec<f64> {
        let mut h = self.seed;
        for &t in prefix {
            h = h.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(t as u64 + 1);
        }
        let mut p = Prng::new(h);
        let logits: Vec<f64> = (0..self.vocab).map(|_| self.sharpness * p.normal()).collect();
        log_softmax(&logits).unwrap()
    }
}

struct Uniform(usize);

impl SequenceScorer for Uniform {
    type State = ();
    fn start(&self) -> Result<(Vec<f64>, ())> {
        Ok((vec![-(self.0 as f64).ln(); self.0], ()))
    }
    fn step(&self, _: &(), _: TokenId) -> Result<(Vec<f64>, ())> {
        self.start()
    }
    fn vocab_size(&self) -> usize {
        self.0
    }
}

fn toy_cfg(beam: usize, nbest: usize, lm_weight: f64, alpha: f64) -> BeamConfig {
    BeamConfig { beam, nbest, lm_weight, length_alpha: alpha, max_steps: None, suppress: vec![] }
}

/// Best finished sequence of length ≤ `max` by brute force.
fn exhaustive<M: SequenceScorer, L: SequenceScorer>(m: &M, lm: Option<&L>, cfg: &BeamConfig, max: usize) -> (f64, Vec<TokenId>) {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    let (p, s) = m.start().unwrap();
    let lm_start = lm.map(|l| l.start().unwrap());
    fn go<M: SequenceScorer, L: SequenceScorer>(
        m: &M,
        lm: Option<&L>,
        cfg: &BeamConfig,
        max: usize,
        prefix: &mut Vec<TokenId>,
        las: f64,
        lmv: f64,
        state: (Vec<f64>, M::State),
        lm_state: Option<(Vec<f64>, L::State)>,
        best: &mut (f64, Vec<TokenId>),
    ) {
        for t in 0..m.vocab_size() as TokenId {
            let l = las + state.0[t as usize];
            let v = lmv + lm_state.as_ref().map_or(0.0, |s| s.0[t as usize]);
            prefix.push(t);
            if t == EOS {
                let score = ranking_score(l, v, prefix.len(), cfg);
                if score > best.0 || (score == best.0 && *prefix < best.1) {
                    *best = (score, prefix.clone());
                }
            } else if prefix.len() < max {
                let next = m.step(&state.1, t).unwrap();
                let lnext = lm.zip(lm_state.as_ref()).map(|(lm, s)| lm.step(&s.1, t).unwrap());
                go(m, lm, cfg, max, prefix, l, v, next, lnext, best);
            }
            prefix.pop();
        }
    }
    go(m, lm, cfg, max, &mut Vec::new(), 0.0, 0.0, (p, s), lm_start, &mut best);
    best
}

#[test]
fn wide_beam_matches_exhaustive_enumeration() {
    for seed in 0..20 {
        let m = Toy { vocab: 4, seed, sharpness: 1.5 };
        let lm = Toy { vocab: 4, seed: seed + 1000, sharpness: 1.0 };
        for (w, alpha) in [(0.0, 0.0), (0.0, 0.6), (0.3, 0.6), (0.8, 1.0)] {
            let cfg = toy_cfg(400, 1, w, alpha);
            let out = beam_search(&m, Some(&lm), &cfg, 5).unwrap();
            let (score, tokens) = exhaustive(&m, if w == 0.0 { None } else { Some(&lm) }, &cfg, 5);
            assert!(out[0].finished);
            assert_eq!(out[0].tokens, tokens, "seed {seed} λ {w} α {alpha}");
            assert_eq!(out[0].score, score);
        }
    }
}

#[test]
fn beam_one_equals_greedy() {
    for seed in 0..30 {
        let m = Toy { vocab: 6, seed, sharpness: 2.0 };
        let lm = Toy { vocab: 6, seed: seed + 7, sharpness: 1.0 };
        for w in [0.0, 0.5] {
            let cfg = toy_cfg(1, 1, w, 0.6);
            let b = beam_search(&m, Some(&lm), &cfg, 12).unwrap();
            let g = greedy(&m, Some(&lm), &cfg, 12).unwrap();
            assert_eq!(b, vec![g], "seed {seed}");
        }
    }
}

#[test]
fn zero_weight_ignores_the_lm() {
    for seed in 0..10 {
        let m = Toy { vocab: 5, seed, sharpness: 1.5 };
        let lm = Toy { vocab: 5, seed: 99, sharpness: 3.0 };
        let cfg = toy_cfg(4, 3, 0.0, 0.6);
        let with = beam_search(&m, Some(&lm), &cfg, 8).unwrap();
        let without = beam_search(&m, None::<&NoLm>, &cfg, 8).unwrap();
        assert_eq!(with, without);
        assert!(with.iter().all(|h| h.lm_logp == 0.0));
    }
}

#[test]
fn alpha_zero_ranks_by_raw_score() {
    assert_eq!(length_penalty(17, 0.0), 1.0);
    assert!((length_penalty(1, 0.6) - 1.0).abs() < 1e-15);
    let m = Toy { vocab: 5, seed: 3, sharpness: 1.0 };
    let cfg = toy_cfg(8, 8, 0.0, 0.0);
    for h in beam_search(&m, None::<&NoLm>, &cfg, 6).unwrap() {
        assert_eq!(h.score, h.las_logp);
    }
}

#[test]
fn nbest_is_sorted_and_terminated() {
    for seed in 0..10 {
        let m = Toy { vocab: 6, seed, sharpness: 1.0 };
        let lm = Toy { vocab: 6, seed: seed + 3, sharpness: 1.0 };
        let cfg = toy_cfg(8, 5, 0.3, 0.6);
        let out = beam_search(&m, Some(&lm), &cfg, 10).unwrap();
        assert!(out.len() <= 5);
        for h in &out {
            assert!(!h.finished || h.tokens.last() == Some(&EOS));
            assert!(h.las_logp <= 0.0);
            assert_eq!(h.score, ranking_score(h.las_logp, h.lm_logp, h.tokens.len(), &cfg));
            assert_eq!(h.tokens.iter().filter(|&&t| t == EOS).count(), usize::from(h.finished));
        }
        for w in out.windows(2) {
            assert!(w[0].score > w[1].score || (w[0].score == w[1].score && w[0].tokens < w[1].tokens));
        }
    }
}

#[test]
fn ties_break_lexicographically() {
    let m = Uniform(4);
    let cfg = toy_cfg(4, 3, 0.0, 0.0);
    let out = beam_search(&m, None::<&NoLm>, &cfg, 3).unwrap();
    assert_eq!(out[0].tokens, vec![EOS]);
    // Two-token ties keep ascending order.
    let cfg = BeamConfig { suppress: vec![EOS], ..toy_cfg(4, 2, 0.0, 0.0) };
    let out = beam_search(&m, None::<&NoLm>, &cfg, 2).unwrap();
    assert!(!out[0].finished);
    assert_eq!(out[0].tokens, vec![0, 0]);
    assert_eq!(out[1].tokens, vec![0, 1]);
}

#[test]
fn uniform_lm_keeps_equal_length_ranking() {
    let m = Toy { vocab: 5, seed: 11, sharpness: 1.0 };
    let lm = Uniform(5);
    let cfg0 = toy_cfg(6, 6, 0.0, 0.0);
    let cfg1 = toy_cfg(6, 6, 0.7, 0.0);
    // Identical candidate sets: same ordering among equal-length prefixes.
    let a = beam_search(&m, None::<&NoLm>, &BeamConfig { max_steps: None, ..cfg0 }, 3).unwrap();
    let b = beam_search(&m, Some(&lm), &cfg1, 3).unwrap();
    for len in 1..=3 {
        let la: Vec<_> = a.iter().filter(|h| h.tokens.len() == len).map(|h| h.tokens.clone()).collect();
        let lb: Vec<_> = b.iter().filter(|h| h.tokens.len() == len).map(|h| h.tokens.clone()).collect();
        let common: Vec<_> = la.iter().filter(|t| lb.contains(t)).cloned().collect();
        let order_b: Vec<_> = lb.iter().filter(|t| common.contains(t)).cloned().collect();
        assert_eq!(common, order_b);
    }
    for h in &b {
        let per = -(5f64).ln();
        assert!((h.lm_logp - per * h.tokens.len() as f64).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn exhaustive_width_dominates_narrower(seed in 0u64..10_000, narrow in 1usize..8) {
        let m = Toy { vocab: 4, seed, sharpness: 2.0 };
        let wide = beam_search(&m, None::<&NoLm>, &toy_cfg(400, 1, 0.0, 0.6), 5).unwrap();
        let small = beam_search(&m, None::<&NoLm>, &toy_cfg(narrow, 1, 0.0, 0.6), 5).unwrap();
        prop_assert!(wide[0].finished);
        if small[0].finished {
            prop_assert!(wide[0].score >= small[0].score);
        }
    }
}

fn tiny_las(vocab: usize) -> LasModel {
    let cfg = LasConfig {
        feature_dim: 4,
        listener_layers: 2,
        listener_hidden: 4,
        speller_layers: 2,
        speller_hidden: 5,
        embed_dim: 4,
        attention_dim: 4,
        conv_filters: 2,
        conv_width: 5,
        vocab_size: vocab,
        ..LasConfig::default()
    };
    LasModel::new(cfg, &mut Prng::new(42)).unwrap()
}

fn feats(t: usize) -> Tensor {
    let mut p = Prng::new(t as u64);
    Tensor::matrix(t, 4, (0..4 * t).map(|_| p.normal()).collect()).unwrap()
}

#[test]
fn las_beam_one_equals_greedy_and_zero_weight_fusion_is_inert() {
    let model = tiny_las(9);
    let lm = NeuralLm::new(NeuralLmConfig { vocab_size: 9, embed_dim: 3, hidden: 4, layers: 2 }, &mut Prng::new(3)).unwrap();
    for t in [5, 12, 17] {
        let x = feats(t);
        let s = LasScorer::new(&model, &x).unwrap();
        let cfg = BeamConfig { beam: 1, nbest: 1, ..BeamConfig::default() };
        let steps = cfg.steps_for(s.encoder_len());
        let b = beam_search(&s, Some(&lm), &cfg, steps).unwrap();
        let g = greedy(&s, Some(&lm), &cfg, steps).unwrap();
        assert_eq!(b, vec![g]);
        let cfg0 = BeamConfig { beam: 4, nbest: 4, lm_weight: 0.0, ..BeamConfig::default() };
        assert_eq!(
            beam_search(&s, Some(&lm), &cfg0, steps).unwrap(),
            beam_search(&s, None::<&NoLm>, &cfg0, steps).unwrap()
        );
    }
}

#[test]
fn merge_examples() {
    let corpus = ["the cat", "the cat sat", "a hat"];
    let v = learn_bpe(corpus.iter().copied(), 40).unwrap();
    let id = |p: &str| v.id(p).unwrap();
    assert_eq!(merge_wordpieces(&[id("▁the"), id("▁cat")], &v), vec!["the", "cat"]);
    let v2 = learn_bpe(["xy"].iter().copied(), 8).unwrap();
    assert_eq!(merge_wordpieces(&[], &v2), Vec::<String>::new());
    let pieces = [v2.id("▁x").unwrap(), v2.id("y").unwrap(), v2.id("▁y").unwrap(), EOS];
    assert_eq!(merge_wordpieces(&pieces, &v2), vec!["xy", "y"]);
}

struct Fixed(Vec<f64>);

impl SentenceLm for Fixed {
    fn word_logprob(&self, words: &[String]) -> Result<f64> {
        Ok(self.0[words.len() - 1])
    }
}

fn hyp(n_words: usize, las: f64) -> Hypothesis {
    Hypothesis { tokens: vec![8; n_words], las_logp: las, lm_logp: 0.0, score: las, finished: true }
}

#[test]
fn rescoring_examples() {
    let v = learn_bpe(["a"].iter().copied(), 6).unwrap();
    let a = v.id("▁a").unwrap();
    let mk = |n: usize, las: f64| Hypothesis { tokens: vec![a; n], ..hyp(n, las) };
    let nbest = vec![mk(1, -1.0), mk(2, -1.2)];
    let lm = Fixed(vec![-5.0, -1.0]);
    let out = rescore_nbest(&nbest, &v, &lm, 0.5, LmLevel::Word).unwrap();
    assert_eq!(out[0].tokens.len(), 2);
    assert!((out[0].score + 1.7).abs() < 1e-12 && (out[1].score + 3.5).abs() < 1e-12);
    assert_eq!(out[0].las_logp, -1.2);

    let same = rescore_nbest(&nbest, &v, &lm, 0.0, LmLevel::Word).unwrap();
    assert_eq!(same.iter().map(|h| h.las_logp).collect::<Vec<_>>(), vec![-1.0, -1.2]);
    let twice = rescore_nbest(&out, &v, &lm, 0.5, LmLevel::Word).unwrap();
    assert_eq!(twice.iter().map(|h| &h.tokens).collect::<Vec<_>>(), out.iter().map(|h| &h.tokens).collect::<Vec<_>>());
    assert!(rescore_nbest(&[], &v, &lm, 0.5, LmLevel::Word).is_err());
    assert!(rescore_nbest(&nbest, &v, &lm, 0.5, LmLevel::WordPiece).is_err());
}
