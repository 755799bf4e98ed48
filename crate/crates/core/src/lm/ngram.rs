use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::decoder::SentenceLm;
use crate::error::{Error, Result};

pub const SENT_START: &str = "<s>";
pub const SENT_END: &str = "</s>";
pub const UNKNOWN: &str = "<unk>";

const LN_10: f64 = core::f64::consts::LN_10;

/// One stored n-gram: log10 probability and optional log10 backoff weight.
/// A probability of zero is `-inf`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NGramEntry {
    pub log10_prob: f64,
    pub log10_backoff: Option<f64>,
}

/// Word-level backoff n-gram model.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramLm {
    order: usize,
    words: Vec<String>,
    ids: BTreeMap<String, u32>,
    /// `tables[k]` holds the `(k + 1)`-grams.
    tables: Vec<BTreeMap<Vec<u32>, NGramEntry>>,
}

impl NGramLm {
    /// Empty model with the three sentence markers in its vocabulary.
    pub fn new(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::invalid("n-gram order must be at least 1"));
        }
        let mut lm = NGramLm { order, words: Vec::new(), ids: BTreeMap::new(), tables: vec![BTreeMap::new(); order] };
        for w in [SENT_START, SENT_END, UNKNOWN] {
            lm.intern(w);
        }
        Ok(lm)
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn vocab(&self) -> &[String] {
        &self.words
    }

    fn intern(&mut self, w: &str) -> u32 {
        if let Some(&id) = self.ids.get(w) {
            return id;
        }
        let id = self.words.len() as u32;
        self.words.push(w.to_string());
        self.ids.insert(w.to_string(), id);
        id
    }

    /// Id of `w`, mapping out-of-vocabulary words to `<unk>`.
    pub fn word_id(&self, w: &str) -> u32 {
        self.ids.get(w).or_else(|| self.ids.get(UNKNOWN)).copied().unwrap_or(2)
    }

    pub fn unk_id(&self) -> u32 {
        self.ids[UNKNOWN]
    }

    pub fn start_id(&self) -> u32 {
        self.ids[SENT_START]
    }

    pub fn end_id(&self) -> u32 {
        self.ids[SENT_END]
    }

    /// Stores (or replaces) an n-gram given as words.
    pub fn insert(&mut self, words: &[&str], entry: NGramEntry) -> Result<()> {
        if words.is_empty() || words.len() > self.order {
            return Err(Error::invalid(format!("{}-gram in an order-{} model", words.len(), self.order)));
        }
        let key: Vec<u32> = words.iter().map(|w| self.intern(w)).collect();
        self.tables[key.len() - 1].insert(key, entry);
        Ok(())
    }

    pub fn remove(&mut self, ids: &[u32]) -> Option<NGramEntry> {
        self.tables.get_mut(ids.len().checked_sub(1)?)?.remove(ids)
    }

    pub fn entry(&self, ids: &[u32]) -> Option<&NGramEntry> {
        self.tables.get(ids.len().checked_sub(1)?)?.get(ids)
    }

    pub fn entry_mut(&mut self, ids: &[u32]) -> Option<&mut NGramEntry> {
        self.tables.get_mut(ids.len().checked_sub(1)?)?.get_mut(ids)
    }

    /// All `n`-grams in id order.
    pub fn entries(&self, n: usize) -> impl Iterator<Item = (&[u32], &NGramEntry)> {
        self.tables.get(n.wrapping_sub(1)).into_iter().flat_map(|t| t.iter().map(|(k, v)| (k.as_slice(), v)))
    }

    pub fn count(&self, n: usize) -> usize {
        self.tables.get(n.wrapping_sub(1)).map_or(0, BTreeMap::len)
    }

    pub fn words_of(&self, ids: &[u32]) -> Vec<&str> {
        ids.iter().map(|&i| self.words[i as usize].as_str()).collect()
    }

    /// `log10 p(token | history)` by longest-match backoff. Only the last
    /// `order - 1` history tokens matter.
    pub fn logprob10(&self, history: &[u32], token: u32) -> f64 {
        let keep = history.len().min(self.order - 1);
        let mut h = &history[history.len() - keep..];
        let mut backoff = 0.0;
        loop {
            let mut key = h.to_vec();
            key.push(token);
            if let Some(e) = self.entry(&key) {
                return backoff + e.log10_prob;
            }
            if h.is_empty() {
                // Unlisted word: fall back to the <unk> unigram.
                let unk = self.unk_id();
                if token == unk {
                    return f64::NEG_INFINITY;
                }
                return backoff + self.entry(&[unk]).map_or(f64::NEG_INFINITY, |e| e.log10_prob);
            }
            if let Some(b) = self.entry(h).and_then(|e| e.log10_backoff) {
                backoff += b;
            }
            h = &h[1..];
        }
    }

    /// `log10 P(w_1 .. w_n </s> | <s>)`.
    pub fn sentence_logprob10<S: AsRef<str>>(&self, words: &[S]) -> f64 {
        let mut hist = vec![self.start_id()];
        let mut total = 0.0;
        for w in words {
            let id = self.word_id(w.as_ref());
            total += self.logprob10(&hist, id);
            hist.push(id);
        }
        total + self.logprob10(&hist, self.end_id())
    }

    /// `exp(−mean ln p)` over every word and `</s>`; infinite when some
    /// event has probability zero.
    pub fn perplexity<S: AsRef<str>>(&self, sentences: &[Vec<S>]) -> Result<f64> {
        let events: usize = sentences.iter().map(|s| s.len() + 1).sum();
        if sentences.is_empty() {
            return Err(Error::invalid("no sentences"));
        }
        let total: f64 = sentences.iter().map(|s| self.sentence_logprob10(s)).sum();
        Ok(libm::exp(-total * LN_10 / events as f64))
    }
}

impl SentenceLm for NGramLm {
    fn word_logprob(&self, words: &[String]) -> Result<f64> {
        Ok(self.sentence_logprob10(words) * LN_10)
    }
}

/// Interpolated absolute-discounting estimate.
///
/// `p(w | h) = max(c(h w) − D, 0) / c(h) + D · N₁₊(h ·) / c(h) · p(w | h')`,
/// where `h'` drops the oldest word; unigrams interpolate with the uniform
/// distribution over every word except `<s>`. Backoff weights are the
/// `D · N₁₊(h ·) / c(h)` mass, so each context normalizes exactly.
pub fn train_ngram<S: AsRef<str>>(corpus: &[Vec<S>], order: usize, discount: f64) -> Result<NGramLm> {
    let mut lm = NGramLm::new(order)?;
    if corpus.is_empty() {
        return Err(Error::invalid("empty training corpus"));
    }
    if !(0.0..=1.0).contains(&discount) {
        return Err(Error::invalid(format!("discount {discount} outside [0, 1]")));
    }
    let start = lm.start_id();
    let end = lm.end_id();
    let sentences: Vec<Vec<u32>> = corpus
        .iter()
        .map(|s| {
            let mut ids = vec![start];
            ids.extend(s.iter().map(|w| lm.intern(w.as_ref())));
            ids.push(end);
            ids
        })
        .collect();

    // counts[k]: (k+1)-gram counts; predicted word never <s>.
    let mut counts: Vec<BTreeMap<Vec<u32>, f64>> = vec![BTreeMap::new(); order];
    for s in &sentences {
        for i in 1..s.len() {
            for n in 1..=order.min(i + 1) {
                *counts[n - 1].entry(s[i + 1 - n..=i].to_vec()).or_insert(0.0) += 1.0;
            }
        }
    }
    // Context totals and distinct followers.
    let mut ctx: Vec<BTreeMap<Vec<u32>, (f64, f64)>> = vec![BTreeMap::new(); order];
    for (k, table) in counts.iter().enumerate() {
        for (g, &c) in table {
            let e = ctx[k].entry(g[..k].to_vec()).or_insert((0.0, 0.0));
            e.0 += c;
            e.1 += 1.0;
        }
    }
    let targets: Vec<u32> = (0..lm.words.len() as u32).filter(|&w| w != start).collect();
    let uniform = 1.0 / targets.len() as f64;

    let prob = |hist: &[u32], w: u32| -> f64 {
        let mut p = uniform;
        for k in 0..=hist.len() {
            let h = &hist[hist.len() - k..];
            let Some(&(total, followers)) = ctx[k].get(h) else { continue };
            let mut key = h.to_vec();
            key.push(w);
            let c = counts[k].get(&key).copied().unwrap_or(0.0);
            p = (c - discount).max(0.0) / total + discount * followers / total * p;
        }
        p
    };
    let log10 = |p: f64| if p > 0.0 { libm::log10(p) } else { f64::NEG_INFINITY };

    for &w in &targets {
        let e = NGramEntry { log10_prob: log10(prob(&[], w)), log10_backoff: None };
        lm.tables[0].insert(vec![w], e);
    }
    for k in 1..order {
        for g in counts[k].keys() {
            let e = NGramEntry { log10_prob: log10(prob(&g[..k], g[k])), log10_backoff: None };
            lm.tables[k].insert(g.clone(), e);
        }
    }
    lm.tables[0].insert(vec![start], NGramEntry { log10_prob: f64::NEG_INFINITY, log10_backoff: None });
    for k in 1..order {
        for (h, &(total, followers)) in &ctx[k] {
            let bow = log10(discount * followers / total);
            let entry = lm.tables[k - 1].get_mut(h.as_slice()).ok_or_else(|| Error::invalid("context without entry"))?;
            entry.log10_backoff = Some(bow);
        }
    }
    Ok(lm)
}

/// Distinct words of a corpus, in first-seen order.
pub fn corpus_vocab<S: AsRef<str>>(corpus: &[Vec<S>]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for w in corpus.iter().flatten() {
        if seen.insert(w.as_ref()) {
            out.push(w.as_ref().to_string());
        }
    }
    out
}
