//! Beam search with shallow fusion, n-best lists and rescoring.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::wordpiece::{WordPieceVocab, BOS, EOS, PAD};
use crate::TokenId;

/// Anything that assigns next-token log-probabilities to a prefix.
///
/// States are plain values: extending a hypothesis never mutates the
/// parent's state, so siblings can share it.
pub trait SequenceScorer {
    type State: Clone;

    /// Natural-log distribution over the first token, with the state after
    /// the start-of-sequence protocol.
    fn start(&self) -> Result<(Vec<f64>, Self::State)>;

    /// Feeds `token` and returns the distribution over what follows.
    fn step(&self, state: &Self::State, token: TokenId) -> Result<(Vec<f64>, Self::State)>;

    fn vocab_size(&self) -> usize;
}

/// A ranked decoding result.
#[derive(Clone, Debug, PartialEq)]
pub struct Hypothesis {
    /// Word pieces, ending in `</s>` when `finished`.
    pub tokens: Vec<TokenId>,
    /// `Σ ln p(y_i | x, y_<i)` under the recognizer.
    pub las_logp: f64,
    /// Natural-log score of the fusion or rescoring LM.
    pub lm_logp: f64,
    pub score: f64,
    pub finished: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BeamConfig {
    pub beam: usize,
    pub nbest: usize,
    pub lm_weight: f64,
    /// Length-penalty exponent; `0` disables the penalty.
    pub length_alpha: f64,
    /// Upper bound on emitted tokens; `None` uses `2U + 10`.
    pub max_steps: Option<usize>,
    /// Tokens never proposed as extensions.
    pub suppress: Vec<TokenId>,
}

impl Default for BeamConfig {
    fn default() -> Self {
        BeamConfig {
            beam: 16,
            nbest: 16,
            lm_weight: 0.3,
            length_alpha: 0.6,
            max_steps: None,
            suppress: vec![PAD, BOS],
        }
    }
}

impl BeamConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nbest == 0 || self.beam < self.nbest {
            return Err(Error::invalid("beam width must be at least nbest, and nbest at least 1"));
        }
        if !(self.length_alpha >= 0.0) || !self.lm_weight.is_finite() {
            return Err(Error::invalid("length penalty exponent must be non-negative and LM weight finite"));
        }
        Ok(())
    }

    /// Step limit for an encoder of length `u`.
    pub fn steps_for(&self, u: usize) -> usize {
        self.max_steps.unwrap_or(2 * u + 10)
    }
}

/// `((5 + len) / 6)^α`.
pub fn length_penalty(len: usize, alpha: f64) -> f64 {
    if alpha == 0.0 {
        1.0
    } else {
        libm::pow((5.0 + len as f64) / 6.0, alpha)
    }
}

/// Ranking score of a prefix with `len` tokens.
pub fn ranking_score(las_logp: f64, lm_logp: f64, len: usize, cfg: &BeamConfig) -> f64 {
    (las_logp + cfg.lm_weight * lm_logp) / length_penalty(len, cfg.length_alpha)
}

/// Descending score, then ascending token sequence.
fn rank_order(a_score: f64, a: &[TokenId], b_score: f64, b: &[TokenId]) -> Ordering {
    b_score.total_cmp(&a_score).then_with(|| a.cmp(b))
}

fn sort_hypotheses(h: &mut [Hypothesis]) {
    h.sort_by(|a, b| rank_order(a.score, &a.tokens, b.score, &b.tokens));
}

/// Placeholder scorer used when no fusion LM is supplied.
#[derive(Clone, Copy, Debug)]
pub struct NoLm;

impl SequenceScorer for NoLm {
    type State = ();
    fn start(&self) -> Result<(Vec<f64>, ())> {
        Ok((Vec::new(), ()))
    }
    fn step(&self, _: &(), _: TokenId) -> Result<(Vec<f64>, ())> {
        Ok((Vec::new(), ()))
    }
    fn vocab_size(&self) -> usize {
        0
    }
}

struct Active<A, L> {
    tokens: Vec<TokenId>,
    las: f64,
    lm: f64,
    las_next: Vec<f64>,
    lm_next: Vec<f64>,
    las_state: A,
    lm_state: L,
}

struct Candidate {
    parent: usize,
    token: TokenId,
    las: f64,
    lm: f64,
    score: f64,
    tokens: Vec<TokenId>,
}

/// Beam search over `model`, optionally fused with `lm` at weight
/// `cfg.lm_weight`. The LM is never consulted when that weight is zero.
///
/// Candidates across all active hypotheses compete for `cfg.beam` slots,
/// ranked by `(ln p_las + λ ln p_lm) / lp(len)`. Search stops once `nbest`
/// hypotheses have finished and no active prefix can still beat the worst
/// of them, when the beam empties, or after `max_steps` tokens. If nothing
/// finished, the surviving prefixes are returned with `finished = false`.
pub fn beam_search<M: SequenceScorer, L: SequenceScorer>(
    model: &M,
    lm: Option<&L>,
    cfg: &BeamConfig,
    max_steps: usize,
) -> Result<Vec<Hypothesis>> {
    cfg.validate()?;
    if max_steps == 0 {
        return Err(Error::invalid("max_steps must be positive"));
    }
    let k = model.vocab_size();
    let lm = lm.filter(|_| cfg.lm_weight != 0.0);
    if let Some(l) = lm {
        if l.vocab_size() != k {
            return Err(Error::invalid("fusion LM vocabulary differs from the recognizer's"));
        }
    }
    let suppress: BTreeSet<TokenId> = cfg.suppress.iter().copied().collect();
    let (las_next, las_state) = model.start()?;
    let (lm_next, lm_state) = match lm {
        Some(l) => {
            let (p, s) = l.start()?;
            (p, Some(s))
        }
        None => (Vec::new(), None),
    };
    let mut active = vec![Active {
        tokens: Vec::new(),
        las: 0.0,
        lm: 0.0,
        las_next,
        lm_next,
        las_state,
        lm_state,
    }];
    let mut finished: Vec<Hypothesis> = Vec::new();
    let bound_lp = length_penalty(max_steps, cfg.length_alpha);

    for step in 0..max_steps {
        let len = step + 1;
        let mut cands = Vec::with_capacity(active.len() * k);
        for (pi, a) in active.iter().enumerate() {
            for t in 0..k as TokenId {
                if suppress.contains(&t) {
                    continue;
                }
                let las = a.las + a.las_next[t as usize];
                let lmv = if lm.is_some() { a.lm + a.lm_next[t as usize] } else { 0.0 };
                if las == f64::NEG_INFINITY {
                    continue;
                }
                let score = ranking_score(las, lmv, len, cfg);
                cands.push(Candidate { parent: pi, token: t, las, lm: lmv, score, tokens: Vec::new() });
            }
        }
        for c in &mut cands {
            let mut t = active[c.parent].tokens.clone();
            t.push(c.token);
            c.tokens = t;
        }
        cands.sort_by(|a, b| rank_order(a.score, &a.tokens, b.score, &b.tokens));
        cands.truncate(cfg.beam);

        let mut next = Vec::with_capacity(cands.len());
        for c in cands {
            if c.token == EOS {
                finished.push(Hypothesis {
                    tokens: c.tokens,
                    las_logp: c.las,
                    lm_logp: c.lm,
                    score: c.score,
                    finished: true,
                });
                continue;
            }
            if len == max_steps {
                next.push(Active {
                    tokens: c.tokens,
                    las: c.las,
                    lm: c.lm,
                    las_next: Vec::new(),
                    lm_next: Vec::new(),
                    las_state: active[c.parent].las_state.clone(),
                    lm_state: active[c.parent].lm_state.clone(),
                });
                continue;
            }
            let parent = &active[c.parent];
            let (las_next, las_state) = model.step(&parent.las_state, c.token)?;
            let (lm_next, lm_state) = match (lm, &parent.lm_state) {
                (Some(l), Some(s)) => {
                    let (p, s) = l.step(s, c.token)?;
                    (p, Some(s))
                }
                _ => (Vec::new(), None),
            };
            next.push(Active {
                tokens: c.tokens,
                las: c.las,
                lm: c.lm,
                las_next,
                lm_next,
                las_state,
                lm_state,
            });
        }
        sort_hypotheses(&mut finished);
        finished.truncate(cfg.beam);
        active = next;

        if active.is_empty() {
            break;
        }
        if finished.len() >= cfg.nbest {
            let worst = finished[cfg.nbest - 1].score;
            let best_bound = active
                .iter()
                .map(|a| (a.las + cfg.lm_weight * a.lm) / bound_lp)
                .fold(f64::NEG_INFINITY, f64::max);
            if best_bound <= worst {
                break;
            }
        }
    }

    if finished.is_empty() {
        let mut out: Vec<Hypothesis> = active
            .into_iter()
            .map(|a| {
                let score = ranking_score(a.las, a.lm, a.tokens.len(), cfg);
                Hypothesis { tokens: a.tokens, las_logp: a.las, lm_logp: a.lm, score, finished: false }
            })
            .collect();
        sort_hypotheses(&mut out);
        out.truncate(cfg.nbest);
        return Ok(out);
    }
    finished.truncate(cfg.nbest);
    Ok(finished)
}

/// Arg-max decoding; the same result as a beam of width one.
pub fn greedy<M: SequenceScorer, L: SequenceScorer>(
    model: &M,
    lm: Option<&L>,
    cfg: &BeamConfig,
    max_steps: usize,
) -> Result<Hypothesis> {
    let lm = lm.filter(|_| cfg.lm_weight != 0.0);
    let suppress: BTreeSet<TokenId> = cfg.suppress.iter().copied().collect();
    let (mut las_next, mut las_state) = model.start()?;
    let mut lm_cur = match lm {
        Some(l) => Some(l.start()?),
        None => None,
    };
    let (mut las, mut lmv) = (0.0, 0.0);
    let mut tokens = Vec::new();
    for _ in 0..max_steps {
        let mut best: Option<(f64, TokenId)> = None;
        for t in 0..las_next.len() as TokenId {
            if suppress.contains(&t) || las_next[t as usize] == f64::NEG_INFINITY {
                continue;
            }
            let lm_t = lm_cur.as_ref().map_or(0.0, |(p, _)| p[t as usize]);
            let s = ranking_score(las + las_next[t as usize], lmv + lm_t, tokens.len() + 1, cfg);
            if best.map_or(true, |(b, _)| s > b) {
                best = Some((s, t));
            }
        }
        let Some((_, t)) = best else { break };
        las += las_next[t as usize];
        if let Some((p, _)) = &lm_cur {
            lmv += p[t as usize];
        }
        tokens.push(t);
        if t == EOS {
            let score = ranking_score(las, lmv, tokens.len(), cfg);
            return Ok(Hypothesis { tokens, las_logp: las, lm_logp: lmv, score, finished: true });
        }
        if tokens.len() == max_steps {
            break;
        }
        (las_next, las_state) = model.step(&las_state, t)?;
        if let (Some(l), Some((_, s))) = (lm, &lm_cur) {
            lm_cur = Some(l.step(s, t)?);
        }
    }
    let score = ranking_score(las, lmv, tokens.len(), cfg);
    Ok(Hypothesis { tokens, las_logp: las, lm_logp: lmv, score, finished: false })
}

/// Word sequence behind a token sequence; specials and ids outside the
/// vocabulary are skipped.
pub fn merge_wordpieces(tokens: &[TokenId], vocab: &WordPieceVocab) -> Vec<String> {
    let known: Vec<TokenId> = tokens.iter().copied().filter(|&t| (t as usize) < vocab.len()).collect();
    vocab.words(&known).unwrap_or_default()
}

/// Granularity an external LM scores at.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LmLevel {
    /// Whitespace words after merging word pieces.
    Word,
    WordPiece,
}

/// A sentence-level LM for second-pass rescoring. Scores are natural logs
/// and include the end-of-sentence event.
pub trait SentenceLm {
    fn word_logprob(&self, _words: &[String]) -> Result<f64> {
        Err(Error::invalid("this LM does not score words"))
    }
    fn piece_logprob(&self, _tokens: &[TokenId]) -> Result<f64> {
        Err(Error::invalid("this LM does not score word pieces"))
    }
}

/// Re-ranks by `las_logp + λ · lm_logp` with `lm_logp` from `lm`.
///
/// Tokens, `las_logp` and `finished` are kept; `lm_logp` and `score` are
/// replaced. The sort is stable, so ties keep their input order.
pub fn rescore_nbest<L: SentenceLm + ?Sized>(
    nbest: &[Hypothesis],
    vocab: &WordPieceVocab,
    lm: &L,
    lambda: f64,
    level: LmLevel,
) -> Result<Vec<Hypothesis>> {
    if nbest.is_empty() {
        return Err(Error::invalid("empty n-best list"));
    }
    let mut out = Vec::with_capacity(nbest.len());
    for h in nbest {
        let lm_logp = match level {
            LmLevel::Word => lm.word_logprob(&merge_wordpieces(&h.tokens, vocab))?,
            LmLevel::WordPiece => {
                let inner: Vec<TokenId> = h.tokens.iter().copied().filter(|&t| t != EOS && t != BOS).collect();
                lm.piece_logprob(&inner)?
            }
        };
        out.push(Hypothesis { lm_logp, score: h.las_logp + lambda * lm_logp, ..h.clone() });
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score));
    Ok(out)
}
