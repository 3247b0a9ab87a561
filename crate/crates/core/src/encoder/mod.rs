//! Sentence encoders.
//!
//! Built-in encoders are pure functions of the sentence text. The external
//! encoder talks to a sidecar process; see [`sidecar`].

mod cache;
mod hash;
pub mod sidecar;
mod word_avg;

use std::collections::HashMap;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::Mutex;

pub use cache::{read_records, write_records, EmbeddingCache, EmbeddingRecord};
pub use hash::{fnv1a64, HashEncoder};
pub use sidecar::SidecarEncoder;
pub use word_avg::WordAverageEncoder;

use crate::contextualize::token_spans;
use crate::error::{Error, Result};
use crate::linalg::{EmbeddingMatrix, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderKind {
    WordAvg,
    HashToy,
    External,
}

pub trait SentenceEncoder: Send + Sync {
    fn name(&self) -> &str;
    fn dim(&self) -> usize;
    fn kind(&self) -> EncoderKind;
    /// One vector per sentence, in order, each of length [`SentenceEncoder::dim`].
    fn encode(&self, sentences: &[String]) -> Result<Vec<Vector>>;
}

/// Lowercased tokens, split on whitespace with edge punctuation trimmed.
pub fn tokenize(sentence: &str) -> Vec<String> {
    token_spans(sentence)
        .into_iter()
        .map(|(s, e)| sentence[s..e].to_lowercase())
        .collect()
}

/// `--encoder` values: `word_avg:<path>`, `hash:<dim>`, `sidecar:<command line>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EncoderSpec {
    WordAvg(PathBuf),
    Hash(usize),
    Sidecar(Vec<String>),
}

impl FromStr for EncoderSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, arg) = s.split_once(':').ok_or_else(|| {
            Error::invalid(format!("encoder spec {s:?} is missing `kind:` prefix"))
        })?;
        match kind {
            "word_avg" => Ok(EncoderSpec::WordAvg(PathBuf::from(arg))),
            "hash" => {
                let dim: usize = arg.parse().map_err(|_| {
                    Error::invalid(format!("hash encoder dim {arg:?} is not an integer"))
                })?;
                if dim == 0 {
                    return Err(Error::invalid("hash encoder dim must be positive"));
                }
                Ok(EncoderSpec::Hash(dim))
            }
            "sidecar" => {
                let argv: Vec<String> = arg.split_whitespace().map(str::to_string).collect();
                if argv.is_empty() {
                    return Err(Error::invalid("sidecar command is empty"));
                }
                Ok(EncoderSpec::Sidecar(argv))
            }
            other => Err(Error::invalid(format!(
                "unknown encoder kind {other:?} (expected word_avg, hash or sidecar)"
            ))),
        }
    }
}

impl EncoderSpec {
    pub fn build(&self) -> Result<Box<dyn SentenceEncoder>> {
        Ok(match self {
            EncoderSpec::WordAvg(path) => Box::new(WordAverageEncoder::load(path)?),
            EncoderSpec::Hash(dim) => Box::new(HashEncoder::new(*dim)),
            EncoderSpec::Sidecar(argv) => Box::new(SidecarEncoder::connect(argv)?),
        })
    }
}

/// An encoder plus an optional persistent cache.
pub struct EncoderHandle {
    encoder: Box<dyn SentenceEncoder>,
    cache: Option<Mutex<EmbeddingCache>>,
}

impl EncoderHandle {
    pub fn new(encoder: Box<dyn SentenceEncoder>) -> Self {
        EncoderHandle {
            encoder,
            cache: None,
        }
    }

    pub fn with_cache(mut self, cache: EmbeddingCache) -> Self {
        self.cache = Some(Mutex::new(cache));
        self
    }

    pub fn name(&self) -> &str {
        self.encoder.name()
    }

    pub fn dim(&self) -> usize {
        self.encoder.dim()
    }

    pub fn kind(&self) -> EncoderKind {
        self.encoder.kind()
    }

    pub fn encoder(&self) -> &dyn SentenceEncoder {
        self.encoder.as_ref()
    }

    /// Encodes `sentences` in order, consulting and filling the cache.
    pub fn encode_vectors<S: AsRef<str>>(&self, sentences: &[S]) -> Result<Vec<Vector>> {
        if sentences.is_empty() {
            return Err(Error::invalid("cannot encode an empty batch"));
        }
        let name = self.encoder.name().to_string();
        let mut out: Vec<Option<Vector>> = vec![None; sentences.len()];
        let mut misses: Vec<String> = Vec::new();
        let mut miss_slots: HashMap<String, Vec<usize>> = HashMap::new();

        {
            let cache = self
                .cache
                .as_ref()
                .map(|c| c.lock().expect("cache lock poisoned"));
            for (i, s) in sentences.iter().enumerate() {
                let s = s.as_ref();
                if let Some(hit) = cache.as_ref().and_then(|c| c.get(&name, s)) {
                    out[i] = Some(hit.clone());
                    continue;
                }
                let slots = miss_slots.entry(s.to_string()).or_default();
                if slots.is_empty() {
                    misses.push(s.to_string());
                }
                slots.push(i);
            }
        }

        if !misses.is_empty() {
            let encoded = self.encoder.encode(&misses)?;
            if encoded.len() != misses.len() {
                return Err(Error::transport(
                    format!(
                        "encoder returned {} vectors for {} sentences",
                        encoded.len(),
                        misses.len()
                    ),
                    None,
                ));
            }
            let dim = self.encoder.dim();
            let mut cache = self
                .cache
                .as_ref()
                .map(|c| c.lock().expect("cache lock poisoned"));
            for (sentence, vector) in misses.iter().zip(encoded) {
                if vector.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: vector.dim(),
                    });
                }
                for &slot in &miss_slots[sentence] {
                    out[slot] = Some(vector.clone());
                }
                if let Some(cache) = cache.as_mut() {
                    cache.insert(&name, sentence, vector);
                }
            }
        }

        Ok(out
            .into_iter()
            .map(|v| v.expect("every slot filled"))
            .collect())
    }

    /// Encodes into a matrix keyed by sentence text. Repeats get a `#n` suffix.
    pub fn encode_batch<S: AsRef<str>>(&self, sentences: &[S]) -> Result<EmbeddingMatrix> {
        let rows = self.encode_vectors(sentences)?;
        let mut counts: HashMap<&str, usize> = HashMap::new();
        let keys = sentences
            .iter()
            .map(|s| {
                let s = s.as_ref();
                let n = counts.entry(s).or_insert(0);
                *n += 1;
                if *n == 1 {
                    s.to_string()
                } else {
                    format!("{s}#{n}")
                }
            })
            .collect();
        EmbeddingMatrix::new(self.dim(), rows, keys)
    }

    /// Writes any new cache entries to disk.
    pub fn flush_cache(&self) -> Result<()> {
        match &self.cache {
            Some(c) => c.lock().expect("cache lock poisoned").flush(),
            None => Ok(()),
        }
    }
}

impl std::fmt::Debug for EncoderHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EncoderHandle")
            .field("name", &self.name())
            .field("dim", &self.dim())
            .field("kind", &self.kind())
            .field("cached", &self.cache.is_some())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_parsing() {
        assert_eq!(
            "hash:16".parse::<EncoderSpec>().unwrap(),
            EncoderSpec::Hash(16)
        );
        assert_eq!(
            "sidecar:python3 serve.py --model elmo"
                .parse::<EncoderSpec>()
                .unwrap(),
            EncoderSpec::Sidecar(vec![
                "python3".into(),
                "serve.py".into(),
                "--model".into(),
                "elmo".into()
            ])
        );
        assert_eq!(
            "word_avg:/tmp/v.txt".parse::<EncoderSpec>().unwrap(),
            EncoderSpec::WordAvg("/tmp/v.txt".into())
        );
        assert!("hash:0".parse::<EncoderSpec>().is_err());
        assert!("hash".parse::<EncoderSpec>().is_err());
        assert!("bert:x".parse::<EncoderSpec>().is_err());
        assert!("sidecar:  ".parse::<EncoderSpec>().is_err());
    }

    #[test]
    fn batch_keys_are_unique() {
        let h = EncoderHandle::new(Box::new(HashEncoder::new(4)));
        let m = h.encode_batch(&["a b", "c", "a b"]).unwrap();
        assert_eq!(m.keys(), &["a b".to_string(), "c".into(), "a b#2".into()]);
        assert_eq!(m.row(0), m.row(2));
    }

    #[test]
    fn empty_batch_is_rejected() {
        let h = EncoderHandle::new(Box::new(HashEncoder::new(4)));
        assert!(h.encode_batch::<&str>(&[]).is_err());
    }

    #[test]
    fn batching_is_invariant_for_builtin_encoders() {
        let h = EncoderHandle::new(Box::new(HashEncoder::new(8)));
        let s = ["the man ran", "she sat", "x"];
        let t = ["a dog", "the man ran"];
        let joined: Vec<&str> = s.iter().chain(&t).copied().collect();
        let all = h.encode_vectors(&joined).unwrap();
        let mut parts = h.encode_vectors(&s).unwrap();
        parts.extend(h.encode_vectors(&t).unwrap());
        assert_eq!(all, parts);
    }

    #[test]
    fn tokenize_lowercases_and_strips() {
        assert_eq!(tokenize("This is John."), vec!["this", "is", "john"]);
    }
}
