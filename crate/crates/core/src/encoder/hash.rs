use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{tokenize, EncoderKind, SentenceEncoder};
use crate::error::Result;
use crate::linalg::Vector;

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Asset-free encoder: every token maps to a fixed pseudo-random unit vector
/// and a sentence is the mean of its token vectors.
#[derive(Debug, Clone)]
pub struct HashEncoder {
    dim: usize,
    name: String,
}

impl HashEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "hash encoder dim must be positive");
        HashEncoder {
            dim,
            name: format!("hash_toy:{dim}"),
        }
    }

    pub fn token_vector(&self, token: &str) -> Vector {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(token.as_bytes()));
        loop {
            let raw: Vec<f64> = (0..self.dim)
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let v = Vector::new(raw).expect("normal samples are finite");
            if let Ok(unit) = v.normalized() {
                return unit;
            }
        }
    }

    /// Mean of the token vectors; the zero vector for an empty token list.
    pub fn encode_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> Vector {
        let mut acc = Vector::zeros(self.dim);
        for t in tokens {
            acc.axpy(1.0, &self.token_vector(t.as_ref()))
                .expect("token vectors share the encoder dim");
        }
        if tokens.is_empty() {
            acc
        } else {
            acc.scaled(1.0 / tokens.len() as f64)
        }
    }

    pub fn encode_sentence(&self, sentence: &str) -> Vector {
        self.encode_tokens(&tokenize(sentence))
    }
}

impl SentenceEncoder for HashEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::HashToy
    }

    fn encode(&self, sentences: &[String]) -> Result<Vec<Vector>> {
        Ok(sentences.iter().map(|s| self.encode_sentence(s)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn deterministic_and_unit_norm() {
        let e = HashEncoder::new(4);
        let a = e.encode_sentence("abc");
        assert_eq!(a, e.encode_sentence("abc"));
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert_eq!(a.dim(), 4);
        assert_ne!(e.token_vector("abc"), e.token_vector("abd"));
    }

    #[test]
    fn sentence_is_token_mean() {
        let e = HashEncoder::new(6);
        let s = e.encode_sentence("Good, dog!");
        let m = e
            .token_vector("good")
            .add(&e.token_vector("dog"))
            .unwrap()
            .scaled(0.5);
        for (x, y) in s.as_slice().iter().zip(m.as_slice()) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn empty_sentence_encodes_to_zero() {
        assert!(HashEncoder::new(3).encode_sentence(" ... ").is_zero());
    }
}
