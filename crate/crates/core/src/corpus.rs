//! Prompt/completion text, the character vocabulary, and training contexts.
//!
//! One pair per video frame:
//!
//! ```text
//! prompt:<c0>, <c1>, ..., <c127>\n
//! completion:(r, g, b, x), (r, g, b, x), ...\n
//! ```
//!
//! The corpus is the concatenation of all pairs in temporal order. The first
//! `floor(0.9 * len)` characters are the training split, the rest validation.

use std::collections::BTreeSet;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{serialize_frame, LaunchpadFrame, SerializeMode};

pub const PROMPT_PREFIX: &str = "prompt:";
pub const COMPLETION_PREFIX: &str = "completion:";
/// Prompt values are clamped to `±PROMPT_CLAMP` before formatting.
pub const PROMPT_CLAMP: f64 = 999.0;
/// Fraction of corpus characters in the training split.
pub const TRAIN_FRACTION: f64 = 0.9;

pub type TokenId = u32;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus needs at least one pair")]
    NoPairs,
    #[error("corpus text of {0} characters cannot be split into train and validation")]
    TooShort(usize),
    #[error("{split:?} split has {len} tokens, need at least {needed}")]
    SplitTooShort { split: Split, len: usize, needed: usize },
    #[error("character {0:?} is not in the vocabulary")]
    UnknownChar(char),
    #[error("token id {0} is outside the vocabulary")]
    UnknownToken(TokenId),
    #[error("vocabulary contains a repeated character {0:?}")]
    DuplicateChar(char),
    #[error("prompt precision {0} outside 0..=2")]
    Precision(u8),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptCompletionPair {
    pub prompt_text: String,
    pub completion_text: String,
}

impl PromptCompletionPair {
    pub fn text(&self) -> String {
        format!("{}{}", self.prompt_text, self.completion_text)
    }

    /// Split a pair text back into its prompt and completion halves.
    pub fn from_text(text: &str) -> Option<Self> {
        if !text.starts_with(PROMPT_PREFIX) {
            return None;
        }
        let at = text.find(COMPLETION_PREFIX)?;
        let (prompt, completion) = text.split_at(at);
        if completion[COMPLETION_PREFIX.len()..].contains(COMPLETION_PREFIX) {
            return None;
        }
        Some(Self {
            prompt_text: prompt.to_string(),
            completion_text: completion.to_string(),
        })
    }
}

/// Format one MFCC row as prompt text.
///
/// Values are rounded half away from zero to `precision` decimals (0..=2)
/// and clamped to `[-999, 999]`.
pub fn format_mfcc_prompt(row: &[f64], precision: u8) -> Result<String, CorpusError> {
    if precision > 2 {
        return Err(CorpusError::Precision(precision));
    }
    let scale = 10f64.powi(i32::from(precision));
    let mut out = String::from(PROMPT_PREFIX);
    for (i, &v) in row.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        let v = if v.is_nan() { 0.0 } else { v.clamp(-PROMPT_CLAMP, PROMPT_CLAMP) };
        let q = (v * scale).round() / scale;
        if precision == 0 {
            out.push_str(&(q as i64).to_string());
        } else {
            // `+ 0.0` folds negative zero.
            out.push_str(&format!("{:.*}", usize::from(precision), q + 0.0));
        }
    }
    out.push('\n');
    Ok(out)
}

pub fn completion_text(frame: &LaunchpadFrame, mode: SerializeMode) -> String {
    format!("{COMPLETION_PREFIX}{}\n", serialize_frame(frame, mode))
}

pub fn build_pair(
    row: &[f64],
    frame: &LaunchpadFrame,
    mode: SerializeMode,
    precision: u8,
) -> Result<PromptCompletionPair, CorpusError> {
    Ok(PromptCompletionPair {
        prompt_text: format_mfcc_prompt(row, precision)?,
        completion_text: completion_text(frame, mode),
    })
}

/// Sorted character vocabulary with contiguous ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CharVocab {
    chars: Vec<char>,
}

impl CharVocab {
    pub fn from_text(text: &str) -> Self {
        let set: BTreeSet<char> = text.chars().collect();
        Self {
            chars: set.into_iter().collect(),
        }
    }

    /// Vocabulary in the given id order.
    pub fn from_chars(chars: Vec<char>) -> Result<Self, CorpusError> {
        let mut seen = BTreeSet::new();
        for &c in &chars {
            if !seen.insert(c) {
                return Err(CorpusError::DuplicateChar(c));
            }
        }
        Ok(Self { chars })
    }

    pub fn chars(&self) -> &[char] {
        &self.chars
    }

    pub fn len(&self) -> usize {
        self.chars.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chars.is_empty()
    }

    pub fn id(&self, c: char) -> Option<TokenId> {
        self.chars.iter().position(|&v| v == c).map(|i| i as TokenId)
    }

    pub fn char_of(&self, id: TokenId) -> Option<char> {
        self.chars.get(id as usize).copied()
    }

    pub fn contains_all(&self, text: &str) -> bool {
        text.chars().all(|c| self.id(c).is_some())
    }

    pub fn encode(&self, text: &str) -> Result<Vec<TokenId>, CorpusError> {
        let table = self.ascii_table();
        text.chars()
            .map(|c| lookup(self, &table, c).ok_or(CorpusError::UnknownChar(c)))
            .collect()
    }

    /// Encode, dropping characters outside the vocabulary. Returns the
    /// tokens and how many characters were dropped.
    pub fn encode_lossy(&self, text: &str) -> (Vec<TokenId>, usize) {
        let table = self.ascii_table();
        let mut dropped = 0;
        let ids = text
            .chars()
            .filter_map(|c| {
                let id = lookup(self, &table, c);
                dropped += usize::from(id.is_none());
                id
            })
            .collect();
        (ids, dropped)
    }

    pub fn decode(&self, ids: &[TokenId]) -> Result<String, CorpusError> {
        ids.iter()
            .map(|&id| self.char_of(id).ok_or(CorpusError::UnknownToken(id)))
            .collect()
    }

    fn ascii_table(&self) -> Vec<Option<TokenId>> {
        let mut table = vec![None; 128];
        for (i, &c) in self.chars.iter().enumerate() {
            if c.is_ascii() {
                table[c as usize] = Some(i as TokenId);
            }
        }
        table
    }

    /// Persisted form: the characters in id order as UTF-8, no separators.
    pub fn to_file_text(&self) -> String {
        self.chars.iter().collect()
    }

    pub fn from_file_text(text: &str) -> Result<Self, CorpusError> {
        Self::from_chars(text.chars().collect())
    }
}

fn lookup(vocab: &CharVocab, table: &[Option<TokenId>], c: char) -> Option<TokenId> {
    if c.is_ascii() {
        table[c as usize]
    } else {
        vocab.id(c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Clone)]
pub struct Corpus {
    text: String,
    vocab: CharVocab,
    tokens: Vec<TokenId>,
    split_index: usize,
}

impl Corpus {
    pub fn build(pairs: &[PromptCompletionPair]) -> Result<Self, CorpusError> {
        if pairs.is_empty() {
            return Err(CorpusError::NoPairs);
        }
        let mut text = String::new();
        for p in pairs {
            text.push_str(&p.prompt_text);
            text.push_str(&p.completion_text);
        }
        Self::from_text(text)
    }

    pub fn from_text(text: String) -> Result<Self, CorpusError> {
        let vocab = CharVocab::from_text(&text);
        Self::with_vocab(text, vocab)
    }

    /// Use an existing vocabulary (e.g. one loaded from disk).
    pub fn with_vocab(text: String, vocab: CharVocab) -> Result<Self, CorpusError> {
        let tokens = vocab.encode(&text)?;
        let len = tokens.len();
        let split_index = (len as f64 * TRAIN_FRACTION).floor() as usize;
        if split_index == 0 || split_index == len {
            return Err(CorpusError::TooShort(len));
        }
        Ok(Self {
            text,
            vocab,
            tokens,
            split_index,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn vocab(&self) -> &CharVocab {
        &self.vocab
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.tokens
    }

    pub fn split_index(&self) -> usize {
        self.split_index
    }

    pub fn split_tokens(&self, split: Split) -> &[TokenId] {
        match split {
            Split::Train => &self.tokens[..self.split_index],
            Split::Val => &self.tokens[self.split_index..],
        }
    }

    pub fn save(&self, dir: &Path) -> Result<(), CorpusError> {
        write(&dir.join("corpus.txt"), self.text.as_bytes())?;
        write(&dir.join("vocab.txt"), self.vocab.to_file_text().as_bytes())
    }

    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let text = read(&dir.join("corpus.txt"))?;
        let vocab = CharVocab::from_file_text(&read(&dir.join("vocab.txt"))?)?;
        Self::with_vocab(text, vocab)
    }
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CorpusError> {
    std::fs::write(path, bytes).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn read(path: &Path) -> Result<String, CorpusError> {
    std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// `batch_size` contexts, flattened row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextBatch {
    pub batch_size: usize,
    pub context: usize,
    pub inputs: Vec<TokenId>,
    pub targets: Vec<TokenId>,
    pub offsets: Vec<usize>,
}

impl ContextBatch {
    pub fn input_row(&self, b: usize) -> &[TokenId] {
        &self.inputs[b * self.context..(b + 1) * self.context]
    }

    pub fn target_row(&self, b: usize) -> &[TokenId] {
        &self.targets[b * self.context..(b + 1) * self.context]
    }
}

/// Sample `batch_size` random windows of `context + 1` tokens from a split.
pub fn sample_batch(
    corpus: &Corpus,
    split: Split,
    batch_size: usize,
    context: usize,
    rng_seed: u64,
) -> Result<ContextBatch, CorpusError> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    sample_batch_with(corpus.split_tokens(split), split, batch_size, context, &mut rng)
}

pub(crate) fn sample_batch_with<R: Rng>(
    data: &[TokenId],
    split: Split,
    batch_size: usize,
    context: usize,
    rng: &mut R,
) -> Result<ContextBatch, CorpusError> {
    if data.len() < context + 1 {
        return Err(CorpusError::SplitTooShort {
            split,
            len: data.len(),
            needed: context + 1,
        });
    }
    let max_start = data.len() - context - 1;
    let mut inputs = Vec::with_capacity(batch_size * context);
    let mut targets = Vec::with_capacity(batch_size * context);
    let mut offsets = Vec::with_capacity(batch_size);
    for _ in 0..batch_size {
        let start = rng.gen_range(0..=max_start);
        offsets.push(start);
        inputs.extend_from_slice(&data[start..start + context]);
        targets.extend_from_slice(&data[start + 1..start + context + 1]);
    }
    Ok(ContextBatch {
        batch_size,
        context,
        inputs,
        targets,
        offsets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{ButtonColor, Coord};

    #[test]
    fn prompt_formatting() {
        let zeros = format_mfcc_prompt(&[0.0; 128], 0).unwrap();
        assert_eq!(zeros, format!("prompt:{}\n", vec!["0"; 128].join(", ")));

        let mut row = vec![0.0; 128];
        row[0] = 1.4;
        row[1] = -2.6;
        assert!(format_mfcc_prompt(&row, 0).unwrap().starts_with("prompt:1, -3, 0"));

        assert_eq!(format_mfcc_prompt(&[12345.0, -1e9, 2.5, -2.5, -0.4], 0).unwrap(), "prompt:999, -999, 3, -3, 0\n");
        assert_eq!(format_mfcc_prompt(&[1.234, -0.001], 2).unwrap(), "prompt:1.23, 0.00\n");
        assert!(format_mfcc_prompt(&[1.0], 3).is_err());
    }

    fn purple_frame() -> LaunchpadFrame {
        let mut f = LaunchpadFrame::black();
        f.set(Coord::new(1).unwrap(), ButtonColor::new(245, 5, 169));
        f
    }

    #[test]
    fn pair_examples() {
        let silent = build_pair(&[0.0; 4], &LaunchpadFrame::black(), SerializeMode::Sparse, 0).unwrap();
        assert_eq!(silent.text(), "prompt:0, 0, 0, 0\ncompletion:\n");

        let p = build_pair(&[3.0; 4], &purple_frame(), SerializeMode::Sparse, 0).unwrap();
        assert!(p.completion_text.contains("(245, 5, 169, 1)"));
        assert_eq!(PromptCompletionPair::from_text(&p.text()), Some(p));
    }

    #[test]
    fn vocab_examples() {
        let v = CharVocab::from_text("abcb");
        assert_eq!(v.len(), 3);
        assert_eq!(v.encode("bac").unwrap(), vec![1, 0, 2]);
        assert_eq!(v.decode(&[1, 0, 2]).unwrap(), "bac");
        assert!(v.encode("abz").is_err());
        assert_eq!(v.encode_lossy("azb"), (vec![0, 1], 1));
        assert!(CharVocab::from_chars(vec!['a', 'a']).is_err());
        assert_eq!(CharVocab::from_file_text(&v.to_file_text()).unwrap(), v);
    }

    #[test]
    fn split_boundary() {
        let pairs: Vec<_> = (0..10)
            .map(|_| build_pair(&[1.0; 8], &purple_frame(), SerializeMode::Sparse, 0).unwrap())
            .collect();
        let c = Corpus::build(&pairs).unwrap();
        let pair_len = pairs[0].text().len();
        assert_eq!(c.split_index(), (c.tokens().len() as f64 * 0.9).floor() as usize);
        assert!(9 * pair_len <= c.split_index());
        assert!(Corpus::build(&[]).is_err());
        assert!(Corpus::from_text("a".into()).is_err());
    }

    #[test]
    fn batch_contract() {
        let text: String = (0..3000).map(|i| char::from(b'a' + (i % 7) as u8)).collect();
        let c = Corpus::from_text(text).unwrap();
        let a = sample_batch(&c, Split::Train, 4, 256, 9).unwrap();
        let b = sample_batch(&c, Split::Train, 4, 256, 9).unwrap();
        assert_eq!(a, b);
        for r in 0..4 {
            assert_eq!(a.input_row(r)[1..], a.target_row(r)[..255]);
        }
        // Validation split has 300 tokens: max start = 300 - 257 = 43.
        for seed in 0..200 {
            let v = sample_batch(&c, Split::Val, 2, 256, seed).unwrap();
            assert!(v.offsets.iter().all(|&o| o <= 43));
        }
        assert!(matches!(
            sample_batch(&c, Split::Val, 1, 300, 0),
            Err(CorpusError::SplitTooShort { .. })
        ));
    }
}
