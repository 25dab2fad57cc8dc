//! Sentence splitting, tokenization, vocabulary construction, and encoding
//! of emails onto fixed-shape padded index grids with validity masks.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::corpus::{Dataset, Email};
use crate::error::{Error, Result};

/// Index of the padding symbol in every vocabulary.
pub const PAD: u32 = 0;
/// Index of the unknown-word symbol in every vocabulary.
pub const UNK: u32 = 1;

const SENTENCE_TERMINALS: [char; 3] = ['.', '!', '?'];

/// Token-to-index map with reserved PAD/UNK entries at 0 and 1.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    /// Builds from an ordered token list (index = position + 2).
    pub fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), (i + 2) as u32))
            .collect();
        Vocabulary { tokens, index }
    }

    /// Total size including PAD and UNK.
    pub fn size(&self) -> usize {
        self.tokens.len() + 2
    }

    pub fn lookup(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// The token at a non-special index.
    pub fn token(&self, id: u32) -> Option<&str> {
        if id < 2 {
            None
        } else {
            self.tokens.get((id - 2) as usize).map(|s| s.as_str())
        }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// One token per line; line number = index - 2.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let tokens = text.lines().map(|l| l.to_string()).collect();
        Ok(Vocabulary::from_tokens(tokens))
    }
}

/// An email encoded onto an L x K body grid plus a length-H header vector,
/// with binary masks marking real (unpadded) cells.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedEmail {
    pub l: usize,
    pub k: usize,
    pub h: usize,
    /// L*K token indices, row-major; padded cells hold PAD.
    pub body_ids: Vec<u32>,
    /// L*K mask, 1 exactly where a real token sits.
    pub body_mask: Vec<u8>,
    /// Length L; 1 iff the row holds at least one real token.
    pub sentence_mask: Vec<u8>,
    pub header_ids: Vec<u32>,
    pub header_mask: Vec<u8>,
    pub label: Option<u8>,
}

impl EncodedEmail {
    pub fn body_row(&self, i: usize) -> (&[u32], &[u8]) {
        let s = i * self.k;
        (&self.body_ids[s..s + self.k], &self.body_mask[s..s + self.k])
    }

    /// Number of leading real sentences.
    pub fn real_sentences(&self) -> usize {
        self.sentence_mask.iter().filter(|&&m| m != 0).count()
    }

    /// Number of leading real tokens in body row `i`.
    pub fn real_tokens(&self, i: usize) -> usize {
        let (_, mask) = self.body_row(i);
        mask.iter().filter(|&&m| m != 0).count()
    }

    pub fn real_header_tokens(&self) -> usize {
        self.header_mask.iter().filter(|&&m| m != 0).count()
    }
}

fn is_capitalized(word: &str) -> bool {
    word.chars().next().is_some_and(|c| c.is_uppercase())
}

fn ends_with_terminal(word: &str) -> bool {
    word.chars()
        .next_back()
        .is_some_and(|c| SENTENCE_TERMINALS.contains(&c))
}

/// Splits a body into sentences.
///
/// A new sentence starts when the first word of a line is capitalized, or
/// when a capitalized word immediately follows a word ending in one of
/// `. ! ?`. Sentences shorter than 3 tokens are then merged into their
/// successor (into their predecessor when last). Words keep their original
/// form; lines are joined with single spaces.
pub fn split_sentences(body: &str) -> Vec<String> {
    let mut raw: Vec<Vec<&str>> = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let mut prev_word: Option<&str> = None;

    for line in body.lines() {
        for (wi, word) in line.split_whitespace().enumerate() {
            let boundary = if is_capitalized(word) {
                wi == 0 || prev_word.is_some_and(ends_with_terminal)
            } else {
                false
            };
            if boundary && !current.is_empty() {
                raw.push(std::mem::take(&mut current));
            }
            current.push(word);
            prev_word = Some(word);
        }
    }
    if !current.is_empty() {
        raw.push(current);
    }

    // Merge pass: short sentences are carried into their successor; a short
    // tail is appended to the last kept sentence.
    let mut merged: Vec<String> = Vec::new();
    let mut carry: Vec<&str> = Vec::new();
    for words in raw {
        carry.extend(words);
        let text = carry.join(" ");
        if tokenize(&text).len() >= 3 {
            merged.push(text);
            carry.clear();
        }
    }
    if !carry.is_empty() {
        let tail = carry.join(" ");
        match merged.last_mut() {
            Some(last) => {
                last.push(' ');
                last.push_str(&tail);
            }
            None => merged.push(tail),
        }
    }
    merged
}

/// Lowercases and splits on Unicode whitespace; leading and trailing
/// punctuation of each chunk is split off into separate single-character
/// tokens, so sentence-ending symbols survive as tokens of their own.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && !chars[start].is_alphanumeric() {
            start += 1;
        }
        while end > start && !chars[end - 1].is_alphanumeric() {
            end -= 1;
        }
        for &c in &chars[..start] {
            tokens.push(c.to_string());
        }
        if start < end {
            let core: String = chars[start..end].iter().collect();
            tokens.push(core.to_lowercase());
        }
        for &c in &chars[end..] {
            tokens.push(c.to_string());
        }
    }
    tokens
}

/// All tokens of an email: body tokens followed by header tokens.
pub fn email_tokens(email: &Email) -> Vec<String> {
    let mut tokens = tokenize(&email.body);
    if let Some(h) = &email.header {
        tokens.extend(tokenize(h));
    }
    tokens
}

/// Builds the vocabulary from every token (bodies and headers) with corpus
/// frequency >= `min_count`, ordered by (frequency desc, token asc).
pub fn build_vocab(dataset: &Dataset, min_count: u64) -> Vocabulary {
    let mut counts: HashMap<String, u64> = HashMap::new();
    for email in &dataset.emails {
        for tok in email_tokens(email) {
            *counts.entry(tok).or_insert(0) += 1;
        }
    }
    let mut entries: Vec<(String, u64)> = counts
        .into_iter()
        .filter(|(_, c)| *c >= min_count)
        .collect();
    entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Vocabulary::from_tokens(entries.into_iter().map(|(t, _)| t).collect())
}

/// Encodes an email onto the fixed L x K / H grids. The first L sentences
/// and first K tokens per sentence are kept; unknown tokens map to UNK.
pub fn encode_email(
    email: &Email,
    vocab: &Vocabulary,
    l: usize,
    k: usize,
    h: usize,
) -> EncodedEmail {
    assert!(l >= 1 && k >= 1 && h >= 1, "grid dimensions must be >= 1");
    let mut body_ids = vec![PAD; l * k];
    let mut body_mask = vec![0u8; l * k];
    let mut sentence_mask = vec![0u8; l];

    for (i, sentence) in split_sentences(&email.body).into_iter().take(l).enumerate() {
        let toks = tokenize(&sentence);
        for (j, tok) in toks.iter().take(k).enumerate() {
            body_ids[i * k + j] = vocab.lookup(tok);
            body_mask[i * k + j] = 1;
        }
        if !toks.is_empty() {
            sentence_mask[i] = 1;
        }
    }

    let mut header_ids = vec![PAD; h];
    let mut header_mask = vec![0u8; h];
    if let Some(header) = &email.header {
        for (j, tok) in tokenize(header).iter().take(h).enumerate() {
            header_ids[j] = vocab.lookup(tok);
            header_mask[j] = 1;
        }
    }

    EncodedEmail {
        l,
        k,
        h,
        body_ids,
        body_mask,
        sentence_mask,
        header_ids,
        header_mask,
        label: email.label,
    }
}
