use alloc::format;

use crate::error::{Error, Result};

/// Edit operations aligning a hypothesis to a reference.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct EditCounts {
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
}

impl EditCounts {
    pub fn total(&self) -> usize {
        self.substitutions + self.deletions + self.insertions
    }
}

impl core::ops::AddAssign for EditCounts {
    fn add_assign(&mut self, o: Self) {
        self.substitutions += o.substitutions;
        self.deletions += o.deletions;
        self.insertions += o.insertions;
    }
}

/// Unit-cost Levenshtein alignment.
///
/// Among alignments with the fewest edits the one with the most
/// substitutions is reported, so swapping the arguments keeps the
/// substitution count and exchanges deletions with insertions.
pub fn edit_distance<T: PartialEq>(reference: &[T], hypothesis: &[T]) -> EditCounts {
    // Cost is (total, -substitutions), compared lexicographically.
    type Cell = (usize, isize, EditCounts);
    let better = |a: &Cell, b: &Cell| (a.0, a.1) < (b.0, b.1);
    let m = hypothesis.len();
    let mut prev: alloc::vec::Vec<Cell> = (0..=m)
        .map(|j| (j, 0, EditCounts { insertions: j, ..EditCounts::default() }))
        .collect();
    let mut cur = prev.clone();
    for (i, r) in reference.iter().enumerate() {
        cur[0] = (i + 1, 0, EditCounts { deletions: i + 1, ..EditCounts::default() });
        for (j, h) in hypothesis.iter().enumerate() {
            let (dw, ds, mut dc) = prev[j];
            let diag = if r == h {
                (dw, ds, dc)
            } else {
                dc.substitutions += 1;
                (dw + 1, ds - 1, dc)
            };
            let (uw, us, mut uc) = prev[j + 1];
            uc.deletions += 1;
            let up = (uw + 1, us, uc);
            let (lw, ls, mut lc) = cur[j];
            lc.insertions += 1;
            let left = (lw + 1, ls, lc);
            let mut best = diag;
            if better(&up, &best) {
                best = up;
            }
            if better(&left, &best) {
                best = left;
            }
            cur[j + 1] = best;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[m].2
}

/// Corpus word error rate in percent: `100 · ΣW / Σ|ref|`.
pub fn wer<R: AsRef<[S]>, H: AsRef<[S]>, S: PartialEq>(refs: &[R], hyps: &[H]) -> Result<f64> {
    Ok(wer_counts(refs, hyps)?.rate())
}

/// Totals behind [`wer`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct WerReport {
    pub edits: EditCounts,
    pub ref_words: usize,
    pub utterances: usize,
}

impl WerReport {
    pub fn rate(&self) -> f64 {
        100.0 * self.edits.total() as f64 / self.ref_words as f64
    }
}

pub fn wer_counts<R: AsRef<[S]>, H: AsRef<[S]>, S: PartialEq>(refs: &[R], hyps: &[H]) -> Result<WerReport> {
    if refs.len() != hyps.len() {
        return Err(Error::invalid(format!(
            "{} references but {} hypotheses",
            refs.len(),
            hyps.len()
        )));
    }
    let mut report = WerReport { utterances: refs.len(), ..WerReport::default() };
    for (r, h) in refs.iter().zip(hyps) {
        report.edits += edit_distance(r.as_ref(), h.as_ref());
        report.ref_words += r.as_ref().len();
    }
    if report.ref_words == 0 {
        return Err(Error::UndefinedMetric("references contain no words".into()));
    }
    Ok(report)
}
