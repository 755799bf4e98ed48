//! ARPA backoff language-model text.

use std::fmt::Write as _;
use std::path::Path;

use las_core::lm::{NGramEntry, NGramLm, UNKNOWN};

use crate::error::{read_text, write_atomic, Error, Result};

/// log10 values at or below this mean probability zero.
pub const LOG_ZERO: f64 = -99.0;
pub const DEFAULT_UNK_PENALTY: f64 = -10.0;

fn fmt_log(v: f64) -> String {
    if v == f64::NEG_INFINITY || v <= LOG_ZERO {
        "-99".to_string()
    } else {
        format!("{v}")
    }
}

pub fn format_arpa(lm: &NGramLm) -> String {
    let mut out = String::from("\\data\\\n");
    for n in 1..=lm.order() {
        let _ = writeln!(out, "ngram {n}={}", lm.count(n));
    }
    for n in 1..=lm.order() {
        let _ = write!(out, "\n\\{n}-grams:\n");
        for (ids, e) in lm.entries(n) {
            let _ = write!(out, "{}\t{}", fmt_log(e.log10_prob), lm.words_of(ids).join(" "));
            if let Some(b) = e.log10_backoff {
                let _ = write!(out, "\t{}", fmt_log(b));
            }
            out.push('\n');
        }
    }
    out.push_str("\n\\end\\\n");
    out
}

fn parse_log(tok: &str, at: &dyn Fn(String) -> Error) -> Result<f64> {
    let v: f64 = tok.parse().map_err(|_| at(format!("bad number {tok:?}")))?;
    if v.is_nan() {
        return Err(at("NaN log probability".into()));
    }
    Ok(if v <= LOG_ZERO { f64::NEG_INFINITY } else { v })
}

/// Parses ARPA text. Higher-order entries mentioning `<unk>` are dropped
/// and `unk_penalty` (log10, ≤ 0) is added to the `<unk>` unigram.
pub fn parse_arpa(text: &str, unk_penalty: f64, context: &str) -> Result<NGramLm> {
    if !(unk_penalty <= 0.0) {
        return Err(Error::invalid(format!("unk penalty must be ≤ 0, got {unk_penalty}")));
    }
    enum Part {
        Preamble,
        Data,
        Grams(usize),
        End,
    }
    let mut part = Part::Preamble;
    let mut declared: Vec<usize> = Vec::new();
    let mut seen: Vec<usize> = Vec::new();
    let mut lm: Option<NGramLm> = None;
    for (i, raw) in text.lines().enumerate() {
        let at = |m: String| Error::format(format!("{context}:{}", i + 1), m);
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        if line == "\\data\\" {
            part = Part::Data;
            continue;
        }
        if line == "\\end\\" {
            part = Part::End;
            continue;
        }
        if let Some(n) = line.strip_prefix('\\').and_then(|l| l.strip_suffix("-grams:")) {
            let n: usize = n.parse().map_err(|_| at(format!("bad section header {line:?}")))?;
            if n == 0 || n > declared.len() {
                return Err(at(format!("section {n}-grams was not declared")));
            }
            if lm.is_none() {
                lm = Some(NGramLm::new(declared.len())?);
            }
            part = Part::Grams(n);
            continue;
        }
        match part {
            Part::Preamble | Part::End => continue,
            Part::Data => {
                let spec = line.strip_prefix("ngram ").ok_or_else(|| at(format!("expected `ngram N=count`, got {line:?}")))?;
                let (n, c) = spec.split_once('=').ok_or_else(|| at(format!("expected `ngram N=count`, got {line:?}")))?;
                let n: usize = n.trim().parse().map_err(|_| at(format!("bad order in {line:?}")))?;
                let c: usize = c.trim().parse().map_err(|_| at(format!("bad count in {line:?}")))?;
                if n != declared.len() + 1 {
                    return Err(at(format!("ngram orders must be declared in sequence, got {n}")));
                }
                declared.push(c);
                seen.push(0);
            }
            Part::Grams(n) => {
                let toks: Vec<&str> = line.split_whitespace().collect();
                if toks.len() != n + 1 && toks.len() != n + 2 {
                    return Err(at(format!("expected {n} word(s) with a probability and optional backoff")));
                }
                let log10_prob = parse_log(toks[0], &at)?;
                let log10_backoff = toks.get(n + 1).map(|t| parse_log(t, &at)).transpose()?;
                let words = &toks[1..=n];
                seen[n - 1] += 1;
                if n > 1 && words.contains(&UNKNOWN) {
                    continue;
                }
                let lm = lm.as_mut().expect("set at section header");
                lm.insert(words, NGramEntry { log10_prob, log10_backoff }).map_err(|e| at(e.to_string()))?;
            }
        }
    }
    if !matches!(part, Part::End) {
        return Err(Error::format(context, "missing \\end\\ marker"));
    }
    for (n, (d, s)) in declared.iter().zip(&seen).enumerate() {
        if d != s {
            return Err(Error::format(context, format!("header declares {d} {}-grams, found {s}", n + 1)));
        }
    }
    let mut lm = lm.ok_or_else(|| Error::format(context, "no n-gram sections"))?;
    let unk = lm.unk_id();
    if let Some(e) = lm.entry_mut(&[unk]) {
        e.log10_prob += unk_penalty;
    }
    Ok(lm)
}

pub fn save_arpa(path: &Path, lm: &NGramLm) -> Result<()> {
    write_atomic(path, format_arpa(lm).as_bytes())
}

pub fn load_arpa(path: &Path, unk_penalty: f64) -> Result<NGramLm> {
    parse_arpa(&read_text(path)?, unk_penalty, &path.display().to_string())
}
