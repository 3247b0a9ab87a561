//! A synthetic world with a known bias direction.
//!
//! [`PlantedBiasEncoder`] wraps [`HashEncoder`]. Registered words carry a sign
//! (+1 for the first class, -1 for the second) and a counterpart token: a word
//! is hashed as its counterpart, so the two members of a pair differ only by
//! the planted offset `±magnitude · b` and per-sentence noise. Everything else
//! about the encoder is the plain hash encoder.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::encoder::{fnv1a64, tokenize, EncoderKind, HashEncoder, SentenceEncoder};
use crate::error::Result;
use crate::lexicon::AttributeTupleSet;
use crate::linalg::Vector;
use crate::metrics::AssociationTest;

#[derive(Debug, Clone)]
struct Planted {
    counterpart: String,
    sign: f64,
}

#[derive(Debug, Clone)]
pub struct PlantedBiasEncoder {
    base: HashEncoder,
    name: String,
    direction: Vector,
    magnitude: f64,
    noise_sigma: f64,
    seed: u64,
    words: HashMap<String, Planted>,
}

impl PlantedBiasEncoder {
    /// Draws the bias direction from `seed`. `noise_sigma` is the per-component
    /// standard deviation of the sentence noise.
    pub fn new(dim: usize, seed: u64, magnitude: f64, noise_sigma: f64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let direction = loop {
            let raw: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
            if let Ok(unit) = Vector::new(raw).expect("finite").normalized() {
                break unit;
            }
        };
        PlantedBiasEncoder {
            base: HashEncoder::new(dim),
            name: format!("planted:{dim}:{seed}"),
            direction,
            magnitude,
            noise_sigma,
            seed,
            words: HashMap::new(),
        }
    }

    /// Registers `plus` and `minus` as counterparts. Words already registered keep
    /// their first registration; a new word joins the content of an already
    /// registered partner.
    pub fn with_pair(mut self, plus: &str, minus: &str) -> Self {
        let (plus, minus) = (plus.to_lowercase(), minus.to_lowercase());
        let counterpart = self
            .words
            .get(&minus)
            .or_else(|| self.words.get(&plus))
            .map_or_else(|| minus.clone(), |p| p.counterpart.clone());
        self.words.entry(minus.clone()).or_insert(Planted {
            counterpart: counterpart.clone(),
            sign: -1.0,
        });
        self.words.entry(plus).or_insert(Planted {
            counterpart,
            sign: 1.0,
        });
        self
    }

    /// Registers a word with its own content and the given sign.
    pub fn with_word(mut self, word: &str, sign: f64) -> Self {
        let word = word.to_lowercase();
        self.words.entry(word.clone()).or_insert(Planted {
            counterpart: word,
            sign,
        });
        self
    }

    /// Registers positional pairs of two equally long lists.
    pub fn with_pairs<S: AsRef<str>>(mut self, plus: &[S], minus: &[S]) -> Self {
        for (p, m) in plus.iter().zip(minus) {
            self = self.with_pair(p.as_ref(), m.as_ref());
        }
        self
    }

    /// The world used for the gender suite: every test's X/Y lists are paired by
    /// position, A words get +1 and B words -1 with their own content, then the
    /// lexicon tuples are paired (class 0 positive).
    pub fn for_suite(
        dim: usize,
        seed: u64,
        magnitude: f64,
        noise_sigma: f64,
        tests: &[AssociationTest],
        lexicon: &AttributeTupleSet,
    ) -> Self {
        let mut enc = Self::new(dim, seed, magnitude, noise_sigma);
        for t in tests {
            enc = enc.with_pairs(&t.targets_x, &t.targets_y);
            for w in &t.attrs_a {
                enc = enc.with_word(w, 1.0);
            }
            for w in &t.attrs_b {
                enc = enc.with_word(w, -1.0);
            }
        }
        for tuple in lexicon.tuples() {
            enc = enc.with_pair(&tuple[0], &tuple[1]);
        }
        enc
    }

    pub fn direction(&self) -> &Vector {
        &self.direction
    }

    pub fn is_planted(&self, word: &str) -> bool {
        self.words.contains_key(&word.to_lowercase())
    }

    pub fn encode_sentence(&self, sentence: &str) -> Vector {
        let mut sign = 0.0;
        let tokens: Vec<String> = tokenize(sentence)
            .into_iter()
            .map(|t| match self.words.get(&t) {
                Some(p) => {
                    sign += p.sign;
                    p.counterpart.clone()
                }
                None => t,
            })
            .collect();
        let mut v = self.base.encode_tokens(&tokens);
        v.axpy(
            self.magnitude * f64::clamp(sign, -1.0, 1.0),
            &self.direction,
        )
        .expect("matching dims");
        if self.noise_sigma > 0.0 {
            let noise = Normal::new(0.0, self.noise_sigma).expect("valid sigma");
            let mut rng = ChaCha8Rng::seed_from_u64(fnv1a64(sentence.as_bytes()) ^ self.seed);
            let raw: Vec<f64> = (0..v.dim()).map(|_| noise.sample(&mut rng)).collect();
            v.axpy(1.0, &Vector::new(raw).expect("finite noise"))
                .expect("matching dims");
        }
        v
    }
}

impl SentenceEncoder for PlantedBiasEncoder {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn kind(&self) -> EncoderKind {
        EncoderKind::HashToy
    }

    fn encode(&self, sentences: &[String]) -> Result<Vec<Vector>> {
        Ok(sentences.iter().map(|s| self.encode_sentence(s)).collect())
    }
}

const FILLER: &[&str] = &[
    "the",
    "a",
    "yesterday",
    "walked",
    "into",
    "store",
    "quietly",
    "said",
    "that",
    "river",
    "was",
    "cold",
    "after",
    "dinner",
    "we",
    "found",
    "old",
    "letters",
    "under",
    "table",
    "and",
    "laughed",
    "about",
    "weather",
    "train",
    "late",
    "again",
    "because",
    "snow",
    "kept",
    "falling",
    "over",
    "hills",
    "near",
    "town",
    "people",
    "stayed",
    "inside",
    "reading",
    "books",
    "all",
    "night",
];

/// `n` one-sentence lines, each holding one or two same-class words of one lexicon
/// tuple among filler words. Deterministic in `seed`.
pub fn synthetic_corpus(lexicon: &AttributeTupleSet, n: usize, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let tuple = rng.random_range(0..lexicon.len());
            let class = rng.random_range(0..lexicon.class_count());
            let word = lexicon.word(tuple, class);
            let len = rng.random_range(5..10);
            let mut tokens: Vec<&str> = (0..len)
                .map(|_| FILLER[rng.random_range(0..FILLER.len())])
                .collect();
            let slots = if rng.random_bool(0.25) { 2 } else { 1 };
            for _ in 0..slots {
                let at = rng.random_range(0..=tokens.len());
                tokens.insert(at, word);
            }
            let mut line = tokens.join(" ");
            line.push('.');
            line
        })
        .collect()
}
