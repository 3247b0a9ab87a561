//! Bias-attribute word tuples.
//!
//! File format: a `classes: a,b[,c...]` header followed by one comma-separated
//! tuple per line. Blank lines and lines starting with `#` are ignored.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use crate::error::{Error, Result};

const GENDER: &str = include_str!("../data/gender.txt");
const RELIGION: &str = include_str!("../data/religion.txt");

/// Where a lexicon word sits: which tuple, which class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct WordSlot {
    pub tuple: usize,
    pub class: usize,
}

/// A `d`-class lexicon of `m` word tuples.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeTupleSet {
    class_names: Vec<String>,
    tuples: Vec<Vec<String>>,
    index: HashMap<String, WordSlot>,
}

impl AttributeTupleSet {
    pub fn new(class_names: Vec<String>, tuples: Vec<Vec<String>>) -> Result<Self> {
        let d = class_names.len();
        if d < 2 {
            return Err(Error::invalid(format!(
                "a tuple set needs at least 2 classes, got {d}"
            )));
        }
        if tuples.is_empty() {
            return Err(Error::invalid("tuple set has no tuples"));
        }

        let mut index: HashMap<String, WordSlot> = HashMap::new();
        let mut seen_tuples = HashSet::new();
        let mut normalized = Vec::with_capacity(tuples.len());
        for (t, tuple) in tuples.into_iter().enumerate() {
            if tuple.len() != d {
                return Err(Error::invalid(format!(
                    "tuple {t} has {} words, expected {d}",
                    tuple.len()
                )));
            }
            let tuple: Vec<String> = tuple.iter().map(|w| w.trim().to_lowercase()).collect();
            if let Some(empty) = tuple.iter().position(String::is_empty) {
                return Err(Error::invalid(format!(
                    "tuple {t} has an empty word at class {empty}"
                )));
            }
            if !seen_tuples.insert(tuple.clone()) {
                return Err(Error::invalid(format!("duplicate tuple {tuple:?}")));
            }
            for (class, word) in tuple.iter().enumerate() {
                match index.get(word) {
                    Some(slot) if slot.class != class => {
                        return Err(Error::invalid(format!(
                            "word {word:?} appears in class {} ({}) and class {class} ({})",
                            slot.class, class_names[slot.class], class_names[class]
                        )));
                    }
                    Some(_) => {}
                    None => {
                        index.insert(word.clone(), WordSlot { tuple: t, class });
                    }
                }
            }
            normalized.push(tuple);
        }

        Ok(AttributeTupleSet {
            class_names,
            tuples: normalized,
            index,
        })
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut class_names: Option<Vec<String>> = None;
        let mut tuples = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: origin.to_string(),
                line: i + 1,
                message,
            };
            match &class_names {
                None => {
                    let rest = line.strip_prefix("classes:").ok_or_else(|| {
                        parse_err("expected `classes: <name>,<name>...` header".into())
                    })?;
                    let names: Vec<String> = split_list(rest);
                    if names.len() < 2 {
                        return Err(parse_err(format!(
                            "header declares {} classes, need at least 2",
                            names.len()
                        )));
                    }
                    class_names = Some(names);
                }
                Some(names) => {
                    let words = split_list(line);
                    if words.len() != names.len() {
                        return Err(parse_err(format!(
                            "expected {} words, found {}",
                            names.len(),
                            words.len()
                        )));
                    }
                    tuples.push(words);
                }
            }
        }
        let class_names = class_names.ok_or_else(|| Error::Parse {
            path: origin.to_string(),
            line: 0,
            message: "empty tuple-set file".into(),
        })?;
        if tuples.is_empty() {
            return Err(Error::Parse {
                path: origin.to_string(),
                line: 0,
                message: "tuple-set file has a header but no tuples".into(),
            });
        }
        Self::new(class_names, tuples)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// The ten binary gender pairs shipped with the crate.
    pub fn bundled_gender() -> Self {
        Self::parse(GENDER, "bundled gender.txt").expect("bundled gender lexicon is valid")
    }

    /// The six three-way religion tuples shipped with the crate.
    pub fn bundled_religion() -> Self {
        Self::parse(RELIGION, "bundled religion.txt").expect("bundled religion lexicon is valid")
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn tuples(&self) -> &[Vec<String>] {
        &self.tuples
    }

    pub fn len(&self) -> usize {
        self.tuples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tuples.is_empty()
    }

    pub fn word(&self, tuple: usize, class: usize) -> &str {
        &self.tuples[tuple][class]
    }

    /// Looks up an already lowercased word.
    pub fn lookup(&self, word: &str) -> Option<WordSlot> {
        self.index.get(word).copied()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }
}

fn split_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|w| !w.is_empty())
        .map(str::to_string)
        .collect()
}
