use std::collections::HashMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::{EncoderKind, SentenceEncoder};
use crate::contextualize::token_spans;
use crate::error::{Error, Result};
use crate::linalg::Vector;

/// Averages pretrained word vectors over the in-vocabulary tokens of a sentence.
#[derive(Debug)]
pub struct WordAverageEncoder {
    name: String,
    dim: usize,
    table: HashMap<String, Vector>,
    oov_tokens: AtomicUsize,
    empty_sentences: AtomicUsize,
}

impl WordAverageEncoder {
    pub fn from_table(name: impl Into<String>, table: HashMap<String, Vector>) -> Result<Self> {
        let dim = table
            .values()
            .next()
            .map(Vector::dim)
            .ok_or_else(|| Error::invalid("word vector table is empty"))?;
        if let Some(v) = table.values().find(|v| v.dim() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: v.dim(),
            });
        }
        Ok(WordAverageEncoder {
            name: name.into(),
            dim,
            table,
            oov_tokens: AtomicUsize::new(0),
            empty_sentences: AtomicUsize::new(0),
        })
    }

    /// Parses `token f1 f2 ... fd` lines. A leading `<count> <dim>` header line is skipped.
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut table = HashMap::new();
        let mut dim: Option<usize> = None;
        for (i, line) in text.lines().enumerate() {
            let mut fields = line.split_whitespace();
            let Some(token) = fields.next() else { continue };
            let rest: Vec<&str> = fields.collect();
            let err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            if i == 0
                && rest.len() == 1
                && token.parse::<usize>().is_ok()
                && rest[0].parse::<usize>().is_ok()
            {
                continue;
            }
            if rest.is_empty() {
                return Err(err(format!("token {token:?} has no vector")));
            }
            let values = rest
                .iter()
                .map(|f| {
                    f.parse::<f64>()
                        .map_err(|_| err(format!("cannot parse {f:?} as a number")))
                })
                .collect::<Result<Vec<f64>>>()?;
            match dim {
                None => dim = Some(values.len()),
                Some(d) if d != values.len() => {
                    return Err(err(format!("expected {d} values, found {}", values.len())));
                }
                Some(_) => {}
            }
            let v = Vector::new(values).map_err(|e| err(e.to_string()))?;
            table.insert(token.to_string(), v);
        }
        if table.is_empty() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 0,
                message: "no word vectors found".into(),
            });
        }
        Self::from_table(format!("word_avg:{origin}"), table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn vocabulary_size(&self) -> usize {
        self.table.len()
    }

    pub fn lookup(&self, token: &str) -> Option<&Vector> {
        self.table
            .get(token)
            .or_else(|| self.table.get(&token.to_lowercase()))
    }

    /// Tokens seen so far that had no vector.
    pub fn oov_tokens(&self) -> usize {
        self.oov_tokens.load(Ordering::Relaxed)
    }

    /// Sentences so far with no in-vocabulary token (encoded as zero).
    pub fn empty_sentences(&self) -> usize {
        self.empty_sentences.load(Ordering::Relaxed)
    }

    pub fn encode_sentence(&self, sentence: &str) -> Vector {
        let mut acc = Vector::zeros(self.dim);
        let mut hits = 0usize;
        for (s, e) in token_spans(sentence) {
            match self.lookup(&sentence[s..e]) {
                Some(v) => {
                    acc.axpy(1.0, v).expect("uniform table dim");
                    hits += 1;
                }
                None => {
                    self.oov_tokens.fetch_add(1, Ordering::Relaxed);
                }
            }
        }
        if hits == 0 {
            self.empty_sentences.fetch_add(1, Ordering::Relaxed);
            log::warn!("no in-vocabulary tokens in {sentence:?}; encoding as zero");
            return acc;
        }
        acc.scaled(1.0 / hits as f64)
    }
}

impl SentenceEncoder for WordAverageEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::WordAvg
    }

    fn encode(&self, sentences: &[String]) -> Result<Vec<Vector>> {
        Ok(sentences.iter().map(|s| self.encode_sentence(s)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn averages_in_vocabulary_tokens() {
        let e = WordAverageEncoder::parse("good 1 0\ndog 0 1\nthe 0.5 0.5\n", "v").unwrap();
        assert_eq!(e.dim(), 2);
        assert_eq!(e.vocabulary_size(), 3);
        assert_eq!(e.encode_sentence("good dog").as_slice(), &[0.5, 0.5]);
        assert_eq!(e.encode_sentence("Good cat dog.").as_slice(), &[0.5, 0.5]);
        assert_eq!(e.oov_tokens(), 1);
    }

    #[test]
    fn all_oov_gives_zero_and_counts() {
        let e = WordAverageEncoder::parse("good 1 0\n", "v").unwrap();
        assert!(e.encode_sentence("purple zebra").is_zero());
        assert_eq!(e.empty_sentences(), 1);
        assert_eq!(e.oov_tokens(), 2);
    }

    #[test]
    fn parse_errors_name_the_line() {
        let err = WordAverageEncoder::parse("dog 0.1 0.2\ncat 0.1 x\n", "vec.txt").unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("vec.txt:2:"), "{msg}");
        let err = WordAverageEncoder::parse("dog 0.1 0.2\ncat 0.1\n", "vec.txt").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(WordAverageEncoder::parse("", "v").is_err());
    }

    #[test]
    fn word2vec_header_is_skipped() {
        let e = WordAverageEncoder::parse("2 3\na 1 2 3\nb 4 5 6\n", "v").unwrap();
        assert_eq!(e.dim(), 3);
        assert_eq!(e.vocabulary_size(), 2);
    }
}
