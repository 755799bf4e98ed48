//! `WPV1` word-piece vocabularies.

use std::path::Path;

use las_core::wordpiece::WordPieceVocab;

use crate::error::{read_text, write_atomic, Error, Result};

pub const HEADER: &str = "WPV1";
pub const MERGES: &str = "#MERGES";

pub fn format_vocab(v: &WordPieceVocab) -> String {
    let mut out = String::from(HEADER);
    out.push('\n');
    for p in v.pieces() {
        out.push_str(p);
        out.push('\n');
    }
    out.push_str(MERGES);
    out.push('\n');
    for (a, b) in v.merges() {
        out.push_str(a);
        out.push(' ');
        out.push_str(b);
        out.push('\n');
    }
    out
}

pub fn parse_vocab(text: &str, context: &str) -> Result<WordPieceVocab> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, HEADER)) => {}
        _ => return Err(Error::format(context, "missing WPV1 header")),
    }
    let mut pieces = Vec::new();
    let mut merges = Vec::new();
    let mut in_merges = false;
    for (i, line) in lines {
        if !in_merges {
            if line == MERGES {
                in_merges = true;
            } else {
                pieces.push(line.to_string());
            }
            continue;
        }
        let mut parts = line.split(' ');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) if !a.is_empty() && !b.is_empty() => merges.push((a.to_string(), b.to_string())),
            _ => return Err(Error::format(format!("{context}:{}", i + 1), format!("bad merge line {line:?}"))),
        }
    }
    if !in_merges {
        return Err(Error::format(context, "missing #MERGES section"));
    }
    WordPieceVocab::from_parts(pieces, merges).map_err(|e| Error::format(context, e.to_string()))
}

pub fn save_vocab(path: &Path, v: &WordPieceVocab) -> Result<()> {
    write_atomic(path, format_vocab(v).as_bytes())
}

pub fn load_vocab(path: &Path) -> Result<WordPieceVocab> {
    parse_vocab(&read_text(path)?, &path.display().to_string())
}
