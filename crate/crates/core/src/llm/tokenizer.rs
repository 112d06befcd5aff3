//! Token counting.
//!
//! [`ApproxTokenizer`] is the default: a quarter of the UTF-8 byte length,
//! rounded up. It approximates cl100k-style vocabularies and is not exact.
//! [`BpeTokenizer`] runs byte-level greedy BPE over a ranked merge table.
//!
//! Merge files hold one merge per line, `<left> <right>`, ranked by line
//! order. Tokens are written literally; bytes that are whitespace, `\` or
//! non-printable are written as `\xHH`. Blank lines and lines starting with
//! `#` are ignored.

use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

pub trait Tokenizer: Send + Sync {
    fn count(&self, text: &str) -> u64;
    fn name(&self) -> &str;
}

pub fn approx_count(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Debug, Clone, Copy, Default)]
pub struct ApproxTokenizer;

impl Tokenizer for ApproxTokenizer {
    fn count(&self, text: &str) -> u64 {
        approx_count(text)
    }

    fn name(&self) -> &str {
        "approx-bytes/4"
    }
}

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("merge table line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("reading merge table: {0}")]
    Io(#[from] std::io::Error),
}

/// Ranked byte-sequence merge pairs; lower rank merges first.
#[derive(Debug, Clone, Default)]
pub struct MergeTable {
    ranks: HashMap<(Vec<u8>, Vec<u8>), usize>,
}

impl MergeTable {
    pub fn from_pairs<A: AsRef<[u8]>, B: AsRef<[u8]>>(pairs: impl IntoIterator<Item = (A, B)>) -> Self {
        let mut ranks = HashMap::new();
        for (rank, (a, b)) in pairs.into_iter().enumerate() {
            ranks.entry((a.as_ref().to_vec(), b.as_ref().to_vec())).or_insert(rank);
        }
        Self { ranks }
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self, TokenizerError> {
        let mut pairs = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim_end_matches(['\r', '\n']);
            if trimmed.trim().is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let malformed = |message: String| TokenizerError::Malformed { line: i + 1, message };
            let fields: Vec<&str> = trimmed.split(' ').collect();
            if fields.len() != 2 || fields.iter().any(|f| f.is_empty()) {
                return Err(malformed(format!(
                    "expected two space-separated tokens, got {trimmed:?}"
                )));
            }
            let left = unescape(fields[0]).map_err(malformed)?;
            let right = unescape(fields[1]).map_err(malformed)?;
            pairs.push((left, right));
        }
        Ok(Self::from_pairs(pairs))
    }

    pub fn len(&self) -> usize {
        self.ranks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ranks.is_empty()
    }

    fn rank(&self, a: &[u8], b: &[u8]) -> Option<usize> {
        // Allocation per lookup keeps the table simple; pieces are short.
        self.ranks.get(&(a.to_vec(), b.to_vec())).copied()
    }
}

fn unescape(token: &str) -> Result<Vec<u8>, String> {
    let bytes = token.as_bytes();
    let mut out = Vec::with_capacity(bytes.len());
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i] == b'\\' {
            if bytes.get(i + 1) != Some(&b'x') || i + 4 > bytes.len() {
                return Err(format!("bad escape in token {token:?}"));
            }
            let hex = std::str::from_utf8(&bytes[i + 2..i + 4]).map_err(|e| e.to_string())?;
            let b = u8::from_str_radix(hex, 16).map_err(|_| format!("bad hex byte {hex:?}"))?;
            out.push(b);
            i += 4;
        } else {
            out.push(bytes[i]);
            i += 1;
        }
    }
    Ok(out)
}

/// Splits text into pieces that each start at a whitespace run, so a space
/// travels with the word after it. Merges never cross piece boundaries.
fn pretokenize(text: &str) -> impl Iterator<Item = &[u8]> {
    let bytes = text.as_bytes();
    let mut starts = vec![0];
    for i in 1..bytes.len() {
        if bytes[i].is_ascii_whitespace() && !bytes[i - 1].is_ascii_whitespace() {
            starts.push(i);
        }
    }
    starts.push(bytes.len());
    let pieces: Vec<&[u8]> = starts
        .windows(2)
        .map(|w| &bytes[w[0]..w[1]])
        .filter(|p| !p.is_empty())
        .collect();
    pieces.into_iter()
}

fn bpe_piece(piece: &[u8], merges: &MergeTable) -> usize {
    let mut parts: Vec<Vec<u8>> = piece.iter().map(|b| vec![*b]).collect();
    loop {
        let best = parts
            .windows(2)
            .enumerate()
            .filter_map(|(i, w)| merges.rank(&w[0], &w[1]).map(|r| (r, i)))
            .min();
        let Some((_, i)) = best else { break };
        let right = parts.remove(i + 1);
        parts[i].extend(right);
    }
    parts.len()
}

/// Greedy lowest-rank-first BPE token count.
pub fn bpe_count(text: &str, merges: &MergeTable) -> u64 {
    pretokenize(text).map(|p| bpe_piece(p, merges) as u64).sum()
}

#[derive(Debug, Clone)]
pub struct BpeTokenizer {
    merges: MergeTable,
}

impl BpeTokenizer {
    pub fn new(merges: MergeTable) -> Self {
        Self { merges }
    }
}

impl Tokenizer for BpeTokenizer {
    fn count(&self, text: &str) -> u64 {
        bpe_count(text, &self.merges)
    }

    fn name(&self) -> &str {
        "bpe"
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn approx_examples() {
        assert_eq!(approx_count(""), 0);
        assert_eq!(approx_count("abcdefgh"), 2);
        assert_eq!(approx_count("abcdefghi"), 3);
    }

    #[test]
    fn bpe_examples() {
        assert_eq!(bpe_count("a", &MergeTable::default()), 1);
        let merges = MergeTable::from_pairs([("a", "a"), ("aa", "aa")]);
        assert_eq!(bpe_count("aaaa", &merges), 1);
        // a a a -> aa a; (aa, a) has no rank.
        assert_eq!(bpe_count("aaa", &merges), 2);
        assert_eq!(bpe_count("hello", &merges), 5);
        assert_eq!(bpe_count("", &merges), 0);
    }

    #[test]
    fn lowest_rank_applies_first() {
        // "abc": (b,c) outranks (a,b), so we get a|bc rather than ab|c.
        let merges = MergeTable::from_pairs([("b", "c"), ("a", "b"), ("ab", "c")]);
        assert_eq!(bpe_count("abc", &merges), 2);
        let merges = MergeTable::from_pairs([("a", "b"), ("b", "c"), ("ab", "c")]);
        assert_eq!(bpe_count("abc", &merges), 1);
    }

    #[test]
    fn merge_file_parsing() {
        let src = "# version 1\na a\naa aa\n\\x20 t\n";
        let table = MergeTable::read(src.as_bytes()).unwrap();
        assert_eq!(table.len(), 3);
        assert_eq!(bpe_count("aaaa", &table), 1);
        assert_eq!(bpe_count("x t", &table), 2);

        for bad in ["a\n", "a b c\n", "a \\xZZ\n", "\\x2 b\n"] {
            assert!(
                matches!(
                    MergeTable::read(bad.as_bytes()),
                    Err(TokenizerError::Malformed { line: 1, .. })
                ),
                "{bad:?}"
            );
        }
    }

    proptest! {
        #[test]
        fn approx_is_monotone_under_concat(a in "\\PC{0,30}", b in "\\PC{0,30}") {
            let ab = format!("{a}{b}");
            prop_assert!(approx_count(&ab) >= approx_count(&a).max(approx_count(&b)));
        }

        #[test]
        fn bpe_never_exceeds_bytes(text in "[ab ]{0,40}") {
            let merges = MergeTable::from_pairs([("a", "a"), ("a", "b"), ("aa", "aa"), (" ", "a"), ("ab", "ab")]);
            prop_assert!(bpe_count(&text, &merges) <= text.len() as u64);
        }
    }
}
