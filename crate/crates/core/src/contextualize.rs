//! Template mining and counterfactual expansion.
//!
//! A template is a corpus sentence that contains at least one lexicon word as a
//! whole token. Expanding it rewrites every matched span with the word of one
//! class, giving one realization per class.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexicon::AttributeTupleSet;

/// A lexicon word located in a template, as byte offsets into the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Match {
    pub start: usize,
    pub end: usize,
    pub tuple: usize,
    pub class: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceTemplate {
    pub id: String,
    pub domain: String,
    pub text: String,
    pub matches: Vec<Match>,
}

impl SentenceTemplate {
    /// Distinct classes among the matches.
    pub fn classes(&self) -> BTreeSet<usize> {
        self.matches.iter().map(|m| m.class).collect()
    }

    pub fn is_mixed(&self) -> bool {
        self.classes().len() > 1
    }
}

/// One realization per class of a template.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentenceTuple {
    pub template_id: String,
    pub realizations: Vec<String>,
    /// Byte spans of the substituted words in each realization.
    pub spans: Vec<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Default)]
pub struct MineOptions {
    /// Keep sentences whose matches span more than one class.
    pub keep_mixed: bool,
    /// Only read this leading fraction of the corpus lines.
    pub max_fraction: Option<f64>,
    /// Stop after this many templates.
    pub max_templates: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct MineReport {
    pub templates: Vec<SentenceTemplate>,
    pub lines_read: usize,
    pub undecodable_lines: usize,
    pub mixed_dropped: usize,
}

/// Whitespace-delimited tokens with surrounding punctuation trimmed, as byte spans.
pub fn token_spans(text: &str) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                push_trimmed(text, s, i, &mut spans);
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        push_trimmed(text, s, text.len(), &mut spans);
    }
    spans
}

fn push_trimmed(text: &str, start: usize, end: usize, out: &mut Vec<(usize, usize)>) {
    let raw = &text[start..end];
    let lead = raw.len() - raw.trim_start_matches(|c: char| !c.is_alphanumeric()).len();
    let trimmed = raw.trim_matches(|c: char| !c.is_alphanumeric());
    if !trimmed.is_empty() {
        out.push((start + lead, start + lead + trimmed.len()));
    }
}

/// Lexicon matches in one sentence, in text order.
pub fn find_matches(text: &str, lexicon: &AttributeTupleSet) -> Vec<Match> {
    token_spans(text)
        .into_iter()
        .filter_map(|(start, end)| {
            lexicon
                .lookup(&text[start..end].to_lowercase())
                .map(|slot| Match {
                    start,
                    end,
                    tuple: slot.tuple,
                    class: slot.class,
                })
        })
        .collect()
}

pub fn template_id(domain: &str, line_number: usize) -> String {
    format!("{domain}:{line_number:08}")
}

/// Mines templates from a one-sentence-per-line corpus. Output follows input line order.
pub fn mine_templates<R: BufRead>(
    mut corpus: R,
    lexicon: &AttributeTupleSet,
    domain: &str,
    options: &MineOptions,
) -> Result<MineReport> {
    let mut lines = Vec::new();
    let mut buf = Vec::new();
    loop {
        buf.clear();
        let n = corpus
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(format!("<corpus {domain}>"), e))?;
        if n == 0 {
            break;
        }
        while matches!(buf.last(), Some(b'\n' | b'\r')) {
            buf.pop();
        }
        lines.push(std::mem::take(&mut buf));
    }

    if let Some(fraction) = options.max_fraction {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::invalid(format!(
                "max fraction must lie in [0, 1], got {fraction}"
            )));
        }
        let keep = (lines.len() as f64 * fraction).floor() as usize;
        lines.truncate(keep);
    }

    enum Outcome {
        Template(SentenceTemplate),
        Mixed,
        Undecodable,
        Nothing,
    }

    let outcomes: Vec<Outcome> = lines
        .par_iter()
        .enumerate()
        .map(|(i, bytes)| {
            let Ok(text) = std::str::from_utf8(bytes) else {
                return Outcome::Undecodable;
            };
            let matches = find_matches(text, lexicon);
            if matches.is_empty() {
                return Outcome::Nothing;
            }
            let template = SentenceTemplate {
                id: template_id(domain, i + 1),
                domain: domain.to_string(),
                text: text.to_string(),
                matches,
            };
            if template.is_mixed() && !options.keep_mixed {
                Outcome::Mixed
            } else {
                Outcome::Template(template)
            }
        })
        .collect();

    let mut report = MineReport {
        lines_read: lines.len(),
        ..Default::default()
    };
    for outcome in outcomes {
        match outcome {
            Outcome::Template(t) => {
                if options
                    .max_templates
                    .is_some_and(|cap| report.templates.len() >= cap)
                {
                    continue;
                }
                report.templates.push(t);
            }
            Outcome::Mixed => report.mixed_dropped += 1,
            Outcome::Undecodable => report.undecodable_lines += 1,
            Outcome::Nothing => {}
        }
    }
    if report.undecodable_lines > 0 {
        log::warn!(
            "{domain}: skipped {} lines that are not valid UTF-8",
            report.undecodable_lines
        );
    }
    Ok(report)
}

/// Applies the letter case of `original` to `word`.
pub fn mirror_case(original: &str, word: &str) -> String {
    let letters: Vec<char> = original.chars().filter(|c| c.is_alphabetic()).collect();
    if letters.len() >= 2 && letters.iter().all(|c| c.is_uppercase()) {
        return word.to_uppercase();
    }
    if original.chars().next().is_some_and(char::is_uppercase) {
        let lower = word.to_lowercase();
        let mut chars = lower.chars();
        return match chars.next() {
            Some(first) => first.to_uppercase().chain(chars).collect(),
            None => lower,
        };
    }
    word.to_lowercase()
}

/// Builds the class-`j` realization of `template` for every class `j`.
pub fn expand(template: &SentenceTemplate, lexicon: &AttributeTupleSet) -> Result<SentenceTuple> {
    if template.matches.is_empty() {
        return Err(Error::invalid(format!(
            "template {} has no matches",
            template.id
        )));
    }
    let text = &template.text;
    let mut matches = template.matches.clone();
    matches.sort_by_key(|m| m.start);
    let mut prev_end = 0;
    for m in &matches {
        let in_bounds = m.start >= prev_end
            && m.start < m.end
            && m.end <= text.len()
            && text.is_char_boundary(m.start)
            && text.is_char_boundary(m.end);
        if !in_bounds || m.tuple >= lexicon.len() || m.class >= lexicon.class_count() {
            return Err(Error::invalid(format!(
                "template {} has an invalid match {m:?}",
                template.id
            )));
        }
        let token = text[m.start..m.end].to_lowercase();
        if token != lexicon.word(m.tuple, m.class) {
            return Err(Error::invalid(format!(
                "template {}: span {:?} is {:?}, lexicon expects {:?}",
                template.id,
                (m.start, m.end),
                &text[m.start..m.end],
                lexicon.word(m.tuple, m.class)
            )));
        }
        prev_end = m.end;
    }

    let d = lexicon.class_count();
    let mut realizations = Vec::with_capacity(d);
    let mut spans = Vec::with_capacity(d);
    for class in 0..d {
        let mut out = String::with_capacity(text.len() + 8);
        let mut class_spans = Vec::with_capacity(matches.len());
        let mut cursor = 0;
        for m in &matches {
            out.push_str(&text[cursor..m.start]);
            let word = mirror_case(&text[m.start..m.end], lexicon.word(m.tuple, class));
            let start = out.len();
            out.push_str(&word);
            class_spans.push((start, out.len()));
            cursor = m.end;
        }
        out.push_str(&text[cursor..]);
        realizations.push(out);
        spans.push(class_spans);
    }
    Ok(SentenceTuple {
        template_id: template.id.clone(),
        realizations,
        spans,
    })
}

/// Slot templates for word-level contextualization. The flag marks the last two,
/// which only pad the set to four sentences per word.
pub const SIMPLE_TEMPLATES: [(&str, bool); 4] = [
    ("This is {}.", false),
    ("I am a {}.", false),
    ("Here is {}.", true),
    ("The {} is here.", true),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TemplatedSentence {
    pub word: String,
    pub template: &'static str,
    pub supplementary: bool,
    pub text: String,
}

fn fill(template: &str, word: &str) -> String {
    template.replacen("{}", word, 1)
}

/// Every word slotted into every entry of [`SIMPLE_TEMPLATES`], grouped by word.
pub fn simple_templates<S: AsRef<str>>(words: &[S]) -> Vec<TemplatedSentence> {
    words
        .iter()
        .flat_map(|w| {
            SIMPLE_TEMPLATES
                .iter()
                .map(move |&(template, supplementary)| TemplatedSentence {
                    word: w.as_ref().to_string(),
                    template,
                    supplementary,
                    text: fill(template, w.as_ref()),
                })
        })
        .collect()
}

/// Slot-template realizations of every lexicon tuple, for comparing against mined templates.
pub fn simple_tuples(lexicon: &AttributeTupleSet) -> Vec<SentenceTuple> {
    let mut out = Vec::new();
    for (t, tuple) in lexicon.tuples().iter().enumerate() {
        for (s, (template, _)) in SIMPLE_TEMPLATES.iter().enumerate() {
            let slot = template.find("{}").expect("template has a slot");
            let realizations: Vec<String> = tuple.iter().map(|w| fill(template, w)).collect();
            let spans = tuple.iter().map(|w| vec![(slot, slot + w.len())]).collect();
            out.push(SentenceTuple {
                template_id: format!("simple:{t}:{s}"),
                realizations,
                spans,
            });
        }
    }
    out
}

/// Template counts keyed by domain.
pub fn domain_counts(templates: &[SentenceTemplate]) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for t in templates {
        *counts.entry(t.domain.clone()).or_insert(0) += 1;
    }
    counts
}

pub fn write_store(path: impl AsRef<Path>, templates: &[SentenceTemplate]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for t in templates {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_store(path: impl AsRef<Path>) -> Result<Vec<SentenceTemplate>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let t: SentenceTemplate = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(t);
    }
    Ok(out)
}
