//! Byte-pair-encoded word pieces.
//!
//! Every word is prefixed with the marker `▁` fused onto its first
//! character, so `"ab"` starts life as the symbols `["▁a", "b"]`. Decoding
//! is then "concatenate the pieces and split on the marker".

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::TokenId;

pub const MARKER: char = '\u{2581}';

pub const PAD: TokenId = 0;
pub const BOS: TokenId = 1;
pub const EOS: TokenId = 2;
pub const UNK: TokenId = 3;
pub const SPECIALS: [&str; 4] = ["<pad>", "<s>", "</s>", "<unk>"];

/// Lowercases and collapses whitespace. Applied before learning and
/// encoding unless case is kept on purpose.
pub fn normalize_text(text: &str) -> String {
    let words: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    words.join(" ")
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WordPieceVocab {
    pieces: Vec<String>,
    ids: BTreeMap<String, TokenId>,
    merges: Vec<(String, String)>,
    ranks: BTreeMap<(String, String), usize>,
}

fn word_symbols(word: &str) -> Vec<String> {
    word.chars()
        .enumerate()
        .map(|(i, c)| {
            if i == 0 {
                let mut s = String::new();
                s.push(MARKER);
                s.push(c);
                s
            } else {
                c.to_string()
            }
        })
        .collect()
}

/// Replaces every non-overlapping occurrence of `pair`, scanning left to right.
fn apply_merge(symbols: &mut Vec<String>, pair: (&str, &str)) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut iter = core::mem::take(symbols).into_iter().peekable();
    while let Some(s) = iter.next() {
        if s == pair.0 && iter.peek().is_some_and(|n| n == pair.1) {
            let next = iter.next().unwrap();
            out.push(s + &next);
        } else {
            out.push(s);
        }
    }
    *symbols = out;
}

/// Adjacent-pair counts over a weighted word list.
pub fn count_pairs(words: &[(Vec<String>, usize)]) -> BTreeMap<(String, String), usize> {
    let mut counts = BTreeMap::new();
    for (symbols, n) in words {
        for w in symbols.windows(2) {
            *counts.entry((w[0].clone(), w[1].clone())).or_insert(0) += n;
        }
    }
    counts
}

/// Greedy BPE: repeatedly merge the most frequent adjacent pair.
///
/// Stops when the vocabulary reaches `target_size` or no pair occurs at
/// least twice. Frequency ties go to the lexicographically smallest pair.
pub fn learn_bpe<'a>(
    corpus: impl IntoIterator<Item = &'a str>,
    target_size: usize,
) -> Result<WordPieceVocab> {
    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for line in corpus {
        for w in line.split_whitespace() {
            *word_counts.entry(w).or_insert(0) += 1;
        }
    }
    if word_counts.is_empty() {
        return Err(Error::invalid("BPE corpus is empty"));
    }
    let chars: BTreeSet<char> = word_counts.keys().flat_map(|w| w.chars()).collect();
    let mut base: BTreeSet<String> = BTreeSet::new();
    for c in &chars {
        base.insert(c.to_string());
        let mut m = String::new();
        m.push(MARKER);
        m.push(*c);
        base.insert(m);
    }
    let mut vocab = WordPieceVocab::empty();
    for p in &base {
        vocab.push_piece(p.clone());
    }
    if target_size < vocab.len() {
        return Err(Error::invalid(alloc::format!(
            "target size {target_size} is below the {} base symbols and specials",
            vocab.len()
        )));
    }

    let mut words: Vec<(Vec<String>, usize)> =
        word_counts.iter().map(|(w, n)| (word_symbols(w), *n)).collect();
    while vocab.len() < target_size {
        let counts = count_pairs(&words);
        let mut best: Option<(&(String, String), usize)> = None;
        for (pair, &n) in &counts {
            // Ascending iteration: strict `>` keeps the smallest pair on ties.
            if best.is_none_or(|(_, b)| n > b) {
                best = Some((pair, n));
            }
        }
        let Some((pair, n)) = best else { break };
        if n < 2 {
            break;
        }
        let pair = pair.clone();
        for (symbols, _) in &mut words {
            apply_merge(symbols, (&pair.0, &pair.1));
        }
        vocab.push_merge(pair);
    }
    Ok(vocab)
}

impl WordPieceVocab {
    fn empty() -> Self {
        let mut v = WordPieceVocab {
            pieces: Vec::new(),
            ids: BTreeMap::new(),
            merges: Vec::new(),
            ranks: BTreeMap::new(),
        };
        for s in SPECIALS {
            v.push_piece(s.to_string());
        }
        v
    }

    fn push_piece(&mut self, piece: String) {
        if !self.ids.contains_key(&piece) {
            self.ids.insert(piece.clone(), self.pieces.len() as TokenId);
            self.pieces.push(piece);
        }
    }

    fn push_merge(&mut self, pair: (String, String)) {
        let mut joined = pair.0.clone();
        joined.push_str(&pair.1);
        self.push_piece(joined);
        self.ranks.insert(pair.clone(), self.merges.len());
        self.merges.push(pair);
    }

    /// Rebuilds a vocabulary from its stored pieces and merges, checking
    /// that the four specials lead and that replaying the merges over the
    /// base symbols reproduces the piece list exactly.
    pub fn from_parts(pieces: Vec<String>, merges: Vec<(String, String)>) -> Result<Self> {
        if pieces.len() < SPECIALS.len() || pieces[..4].iter().zip(SPECIALS).any(|(p, s)| p != s) {
            return Err(Error::invalid("vocabulary must start with <pad> <s> </s> <unk>"));
        }
        let merged: BTreeSet<String> = merges
            .iter()
            .map(|(a, b)| {
                let mut s = a.clone();
                s.push_str(b);
                s
            })
            .collect();
        let mut v = WordPieceVocab::empty();
        let mut n_base = SPECIALS.len();
        for p in &pieces[SPECIALS.len()..] {
            if merged.contains(p) || v.ids.contains_key(p) {
                break;
            }
            v.push_piece(p.clone());
            n_base += 1;
        }
        for m in merges {
            v.push_merge(m);
        }
        if v.pieces != pieces {
            return Err(Error::invalid(alloc::format!(
                "merges over {} base symbols do not reproduce the {} stored pieces",
                n_base - SPECIALS.len(),
                pieces.len()
            )));
        }
        Ok(v)
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn id(&self, piece: &str) -> Option<TokenId> {
        self.ids.get(piece).copied()
    }

    pub fn piece(&self, id: TokenId) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn is_special(id: TokenId) -> bool {
        (id as usize) < SPECIALS.len()
    }

    /// Word-piece ids for `text`; characters outside the vocabulary become `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        let mut out = Vec::new();
        for word in text.split_whitespace() {
            // `None` marks an unknown symbol that never takes part in a merge.
            let mut symbols: Vec<Option<String>> = word_symbols(word)
                .into_iter()
                .map(|s| self.ids.contains_key(&s).then_some(s))
                .collect();
            loop {
                let best = symbols
                    .windows(2)
                    .filter_map(|w| match (&w[0], &w[1]) {
                        (Some(a), Some(b)) => self
                            .ranks
                            .get(&(a.clone(), b.clone()))
                            .map(|&r| (r, a.clone(), b.clone())),
                        _ => None,
                    })
                    .min();
                let Some((_, a, b)) = best else { break };
                merge_known(&mut symbols, &a, &b);
            }
            out.extend(symbols.iter().map(|s| match s {
                Some(s) => self.ids[s],
                None => UNK,
            }));
        }
        out
    }

    /// Concatenates pieces, splits on the marker and joins words with single
    /// spaces. Special tokens are dropped.
    pub fn decode(&self, ids: &[TokenId]) -> Result<String> {
        Ok(self.words(ids)?.join(" "))
    }

    /// Word list behind [`decode`](Self::decode).
    pub fn words(&self, ids: &[TokenId]) -> Result<Vec<String>> {
        let mut joined = String::new();
        for &id in ids {
            let piece = self.piece(id).ok_or_else(|| {
                Error::invalid(alloc::format!("token id {id} outside vocabulary of {}", self.len()))
            })?;
            if !Self::is_special(id) {
                joined.push_str(piece);
            }
        }
        Ok(joined
            .split(MARKER)
            .filter(|w| !w.is_empty())
            .map(ToString::to_string)
            .collect())
    }
}

fn merge_known(symbols: &mut Vec<Option<String>>, a: &str, b: &str) {
    let mut out = Vec::with_capacity(symbols.len());
    let mut i = 0;
    while i < symbols.len() {
        if i + 1 < symbols.len() {
            if let (Some(x), Some(y)) = (&symbols[i], &symbols[i + 1]) {
                if x == a && y == b {
                    let mut s = x.clone();
                    s.push_str(y);
                    out.push(Some(s));
                    i += 2;
                    continue;
                }
            }
        }
        out.push(symbols[i].take());
        i += 1;
    }
    *symbols = out;
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn m(s: &str) -> String {
        let mut out = String::new();
        out.push(MARKER);
        out.push_str(s);
        out
    }

    #[test]
    fn first_merge_single_pair() {
        let v = learn_bpe(["ab ab ab"], 4 + 4 + 1).unwrap();
        assert_eq!(v.merges(), &[(m("a"), "b".to_string())]);
        assert_eq!(v.encode("ab"), vec![v.id(&m("ab")).unwrap()]);
    }

    #[test]
    fn first_merge_pair_count_oracle() {
        // Brute-force pair counts over "aaab aaab": symbols ▁a a a b per word.
        let words = vec![(word_symbols("aaab"), 2)];
        let counts = count_pairs(&words);
        assert_eq!(counts[&(m("a"), "a".to_string())], 2);
        assert_eq!(counts[&("a".to_string(), "a".to_string())], 2);
        assert_eq!(counts[&("a".to_string(), "b".to_string())], 2);
        // Three-way tie; ("a", "a") is lexicographically smallest.
        let v = learn_bpe(["aaab aaab"], 4 + 4 + 1).unwrap();
        assert_eq!(v.merges()[0], ("a".to_string(), "a".to_string()));
    }

    #[test]
    fn zero_merge_budget() {
        let v = learn_bpe(["hello world"], 4 + 14).unwrap();
        assert!(v.merges().is_empty());
        assert_eq!(v.len(), 18);
        assert_eq!(&v.pieces()[..4], &SPECIALS.map(String::from));
        assert!(learn_bpe(["hello world"], 17).is_err());
    }

    #[test]
    fn empty_corpus_is_rejected() {
        assert!(matches!(learn_bpe(["", "   "], 10), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn unknown_character_maps_to_unk() {
        let v = learn_bpe(["ab ba"], 20).unwrap();
        assert_eq!(v.encode("q"), vec![UNK]);
        assert_eq!(v.encode("aqb").iter().filter(|&&i| i == UNK).count(), 1);
    }

    #[test]
    fn decode_conventions() {
        let v = learn_bpe(["the cat the cat the"], 40).unwrap();
        let ids: Vec<TokenId> = ["▁the", "▁cat"].iter().map(|p| v.id(p).unwrap()).collect();
        assert_eq!(v.decode(&ids).unwrap(), "the cat");
        let th = learn_bpe(["th th e"], 30).unwrap();
        let ids = vec![th.id("▁th").unwrap(), th.id("e").unwrap()];
        assert_eq!(th.decode(&ids).unwrap(), "the");
        assert_eq!(v.decode(&[]).unwrap(), "");
        assert_eq!(v.decode(&[BOS, EOS]).unwrap(), "");
        assert!(matches!(v.decode(&[999]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn from_parts_round_trip() {
        let v = learn_bpe(["low lower lowest newer wider"], 40).unwrap();
        let w = WordPieceVocab::from_parts(v.pieces().to_vec(), v.merges().to_vec()).unwrap();
        assert_eq!(v, w);
        let mut bad = v.pieces().to_vec();
        bad.swap(4, 5);
        bad.push("zzz".into());
        assert!(WordPieceVocab::from_parts(bad, v.merges().to_vec()).is_err());
    }

    #[test]
    fn normalize_lowercases_and_collapses() {
        assert_eq!(normalize_text("  The  CAT\tsat "), "the cat sat");
    }
}
