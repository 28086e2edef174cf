//! Character language models over the 28-key alphabet.
//!
//! The decoder works against the [`CharLM`] trait; the default
//! implementation is a character n-gram model with add-k smoothing and
//! longest-suffix backoff, trained from a plain-text corpus.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::layout::{KeyId, KEY_COUNT};
use crate::spatial::KeyDistribution;

/// A character-level language model over the 28 candidate keys.
///
/// Callers pass the committed text so far; the decoder truncates it to
/// the last five words before the call, so implementations may assume a
/// short context. Outputs must be deterministic for a fixed context and
/// sum to one.
pub trait CharLM: Sync {
    fn next_key_probs(&self, context: &str) -> KeyDistribution;
    fn describe(&self) -> String;
}

/// Lowercases and maps every character outside the 28-key alphabet to
/// SPACE, collapsing runs of SPACE and trimming the ends. Used to prepare
/// training corpora.
pub fn normalize_corpus(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    let mut pending_space = false;
    for c in text.chars() {
        let mapped = match KeyId::from_char(c) {
            Some(k) => k.to_char(),
            None => ' ',
        };
        if mapped == ' ' {
            pending_space = true;
        } else {
            if pending_space && !out.is_empty() {
                out.push(' ');
            }
            pending_space = false;
            out.push(mapped);
        }
    }
    out
}

/// Keeps at most the last `n` words of a context string (words are
/// SPACE-separated; a trailing space is preserved).
pub fn truncate_to_last_words(context: &str, n: usize) -> &str {
    let bytes = context.as_bytes();
    let mut word_starts = Vec::new();
    for i in 0..bytes.len() {
        if bytes[i] != b' ' && (i == 0 || bytes[i - 1] == b' ') {
            word_starts.push(i);
        }
    }
    if word_starts.len() <= n {
        context
    } else {
        &context[word_starts[word_starts.len() - n]..]
    }
}

/// Character n-gram model with add-k smoothing and lower-order backoff.
#[derive(Clone, Debug)]
pub struct NgramCharLM {
    order: usize,
    smoothing: f64,
    /// `counts[l]` maps a length-`l` context to per-key continuation
    /// counts.
    counts: Vec<BTreeMap<String, Vec<u64>>>,
    corpus_fingerprint: String,
}

pub const DEFAULT_LM_ORDER: usize = 5;
pub const DEFAULT_LM_SMOOTHING: f64 = 0.1;

impl NgramCharLM {
    /// Trains count tables of every order up to `order` from a plain-text
    /// corpus. The corpus is normalized with [`normalize_corpus`] first.
    pub fn train(corpus: &str, order: usize, smoothing: f64) -> Result<NgramCharLM> {
        if order == 0 {
            return Err(Error::InvalidConfig("n-gram order must be at least 1".into()));
        }
        if !(smoothing > 0.0) {
            return Err(Error::InvalidConfig("smoothing constant must be positive".into()));
        }
        let normalized = normalize_corpus(corpus);
        if normalized.is_empty() {
            return Err(Error::EmptyInput("language model corpus"));
        }
        let chars: Vec<char> = normalized.chars().collect();
        let mut counts: Vec<BTreeMap<String, Vec<u64>>> = vec![BTreeMap::new(); order];
        for t in 0..chars.len() {
            let key = KeyId::from_char(chars[t]).expect("normalized corpus");
            for l in 0..order {
                if t < l {
                    break;
                }
                let context: String = chars[t - l..t].iter().collect();
                let entry = counts[l].entry(context).or_insert_with(|| vec![0; KEY_COUNT]);
                entry[key.index()] += 1;
            }
        }
        let digest = Sha256::digest(normalized.as_bytes());
        let corpus_fingerprint: String =
            digest.iter().take(8).map(|b| format!("{b:02x}")).collect();
        Ok(NgramCharLM { order, smoothing, counts, corpus_fingerprint })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn corpus_fingerprint(&self) -> &str {
        &self.corpus_fingerprint
    }

    /// Add-k-smoothed distribution for the longest context suffix with
    /// observed counts; the empty context always backs the recursion.
    fn probs_for_context(&self, context: &[char]) -> KeyDistribution {
        let max_len = (self.order - 1).min(context.len());
        for l in (0..=max_len).rev() {
            let suffix: String = context[context.len() - l..].iter().collect();
            if let Some(counts) = self.counts[l].get(&suffix) {
                let total: u64 = counts.iter().sum();
                let denom = total as f64 + self.smoothing * KEY_COUNT as f64;
                let mut probs = [0.0; KEY_COUNT];
                for (p, &c) in probs.iter_mut().zip(counts) {
                    *p = (c as f64 + self.smoothing) / denom;
                }
                return KeyDistribution::new(probs).expect("smoothed distribution");
            }
        }
        KeyDistribution::uniform()
    }
}

impl CharLM for NgramCharLM {
    fn next_key_probs(&self, context: &str) -> KeyDistribution {
        // Out-of-alphabet characters are mapped to SPACE without
        // collapsing, preserving the positional structure of the context.
        let chars: Vec<char> = context
            .chars()
            .map(|c| KeyId::from_char(c).unwrap_or(KeyId::SPACE).to_char())
            .collect();
        self.probs_for_context(&chars)
    }

    fn describe(&self) -> String {
        format!("ngram(order={}, corpus={})", self.order, self.corpus_fingerprint)
    }
}

// ---------------------------------------------------------------------------
// LM file serialization

#[derive(Serialize, Deserialize)]
struct LmFile {
    schema: u32,
    order: usize,
    smoothing: f64,
    corpus_fingerprint: String,
    counts: Vec<BTreeMap<String, Vec<u64>>>,
}

const LM_SCHEMA: u32 = 1;

impl NgramCharLM {
    pub fn to_json(&self) -> String {
        let file = LmFile {
            schema: LM_SCHEMA,
            order: self.order,
            smoothing: self.smoothing,
            corpus_fingerprint: self.corpus_fingerprint.clone(),
            counts: self.counts.clone(),
        };
        serde_json::to_string(&file).expect("LM serialization")
    }

    pub fn from_json(json: &str) -> Result<NgramCharLM> {
        let file: LmFile = serde_json::from_str(json)?;
        if file.schema != LM_SCHEMA {
            return Err(Error::InvalidData(format!("unsupported LM schema {}", file.schema)));
        }
        if file.order == 0 || file.counts.len() != file.order {
            return Err(Error::InvalidData("LM count tables do not match order".into()));
        }
        if !(file.smoothing > 0.0) {
            return Err(Error::InvalidData("LM smoothing constant must be positive".into()));
        }
        for table in &file.counts {
            for counts in table.values() {
                if counts.len() != KEY_COUNT {
                    return Err(Error::InvalidData("LM count row length mismatch".into()));
                }
            }
        }
        Ok(NgramCharLM {
            order: file.order,
            smoothing: file.smoothing,
            counts: file.counts,
            corpus_fingerprint: file.corpus_fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<NgramCharLM> {
        let text = std::fs::read_to_string(path)?;
        NgramCharLM::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_normalization() {
        assert_eq!(normalize_corpus("Hello, World!"), "hello world");
        assert_eq!(normalize_corpus("a  b\n\nc"), "a b c");
        assert_eq!(normalize_corpus("It is 42 degrees."), "it is degrees.");
        assert_eq!(normalize_corpus("  padded  "), "padded");
        assert_eq!(normalize_corpus("end. start"), "end. start");
    }

    #[test]
    fn truncation_keeps_last_five_words() {
        let ctx = "one two three four five six seven";
        assert_eq!(truncate_to_last_words(ctx, 5), "three four five six seven");
        let with_space = "one two three four five six ";
        assert_eq!(truncate_to_last_words(with_space, 5), "two three four five six ");
        assert_eq!(truncate_to_last_words("a b", 5), "a b");
        assert_eq!(truncate_to_last_words("", 5), "");
    }

    #[test]
    fn learns_simple_bigram_structure() {
        let lm = NgramCharLM::train(&"ab ".repeat(200), 3, 0.1).unwrap();
        let after_a = lm.next_key_probs("xxa");
        assert_eq!(after_a.argmax(), KeyId::from_char('b').unwrap());
        let after_b = lm.next_key_probs("ab");
        assert_eq!(after_b.argmax(), KeyId::SPACE);
    }

    #[test]
    fn smoothing_keeps_all_keys_positive() {
        let lm = NgramCharLM::train("abcabcabc", 5, 0.1).unwrap();
        let p = lm.next_key_probs("ab");
        for k in KeyId::all() {
            assert!(p.get(k) > 0.0, "zero probability for {k}");
        }
        let sum: f64 = p.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-9);
    }

    #[test]
    fn backs_off_to_shorter_contexts() {
        let lm = NgramCharLM::train(&"the cat sat. ".repeat(50), 5, 0.1).unwrap();
        // "zq" never occurs, so the prediction for context "...zq" must
        // equal the unigram distribution (empty-context table).
        let unseen = lm.next_key_probs("zq");
        let unigram = lm.probs_for_context(&[]);
        assert_eq!(unseen.probs(), unigram.probs());
        // A seen context uses the longer table and differs from unigram.
        let seen = lm.next_key_probs("th");
        assert_ne!(seen.probs(), unigram.probs());
        assert_eq!(seen.argmax(), KeyId::from_char('e').unwrap());
    }

    #[test]
    fn period_is_predicted_like_any_key() {
        let lm = NgramCharLM::train(&"it is done. ".repeat(100), 5, 0.1).unwrap();
        let p = lm.next_key_probs("it is done");
        assert_eq!(p.argmax(), KeyId::PERIOD);
    }

    #[test]
    fn deterministic_and_roundtrips() {
        let corpus = "the quick brown fox jumps over the lazy dog. again and again.";
        let lm = NgramCharLM::train(corpus, 4, 0.1).unwrap();
        let a = lm.next_key_probs("the qu");
        let b = lm.next_key_probs("the qu");
        assert_eq!(a.probs(), b.probs());

        let restored = NgramCharLM::from_json(&lm.to_json()).unwrap();
        assert_eq!(restored.next_key_probs("the qu").probs(), a.probs());
        assert_eq!(restored.corpus_fingerprint(), lm.corpus_fingerprint());
        assert_eq!(lm.to_json(), restored.to_json());
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(NgramCharLM::train("", 5, 0.1).is_err());
        assert!(NgramCharLM::train("?!,;", 5, 0.1).is_err());
        assert!(NgramCharLM::train("abc", 0, 0.1).is_err());
        assert!(NgramCharLM::train("abc", 5, 0.0).is_err());
    }

    #[test]
    fn uppercase_and_unknown_context_chars_fold() {
        let lm = NgramCharLM::train(&"the end ".repeat(50), 5, 0.1).unwrap();
        let upper = lm.next_key_probs("THE En");
        let lower = lm.next_key_probs("the en");
        assert_eq!(upper.probs(), lower.probs());
    }
}
