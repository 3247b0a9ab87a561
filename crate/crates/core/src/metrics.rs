//! Association tests: the binary effect size and the multiclass mean average
//! cosine distance (MAC).
//!
//! For a word vector `w` and attribute sets `A`, `B`:
//!
//! ```text
//! s(w, A, B) = mean_{a in A} cos(w, a) - mean_{b in B} cos(w, b)
//! d = (mean_{x in X} s(x, A, B) - mean_{y in Y} s(y, A, B)) / sd_{w in X ∪ Y} s(w, A, B)
//! ```
//!
//! with the sample (n - 1) standard deviation. MAC averages `1 - cos(t, a)` over
//! every attribute in a set, then over every (target, set) pair.
//!
//! Words are turned into sentences with the slot templates in
//! [`crate::contextualize::SIMPLE_TEMPLATES`]; a word's vector is the mean of
//! its (optionally neutralized) sentence vectors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::contextualize::simple_templates;
use crate::encoder::EncoderHandle;
use crate::error::{Error, Result};
use crate::linalg::{cosine, mean, Vector};
use crate::subspace::{neutralize, BiasSubspace};

const GENDER_TESTS: &str = include_str!("../data/tests/gender.json");
const RELIGION_TEST: &str = include_str!("../data/tests/religion.json");

/// Standard deviations at or below this make the effect size undefined.
pub const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateMode {
    /// Slot each word into the simple templates.
    #[default]
    Simple,
    /// Entries are already sentences and are encoded verbatim.
    ProvidedSentences,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssociationTest {
    pub name: String,
    pub targets_x: Vec<String>,
    pub targets_y: Vec<String>,
    pub attrs_a: Vec<String>,
    pub attrs_b: Vec<String>,
    #[serde(default)]
    pub template_mode: TemplateMode,
}

impl AssociationTest {
    pub fn validate(&self) -> Result<()> {
        for (label, set) in [
            ("targets_x", &self.targets_x),
            ("targets_y", &self.targets_y),
            ("attrs_a", &self.attrs_a),
            ("attrs_b", &self.attrs_b),
        ] {
            if set.is_empty() {
                return Err(Error::invalid(format!(
                    "test {}: {label} is empty",
                    self.name
                )));
            }
        }
        if let Some(w) = self.targets_x.iter().find(|w| self.targets_y.contains(w)) {
            return Err(Error::invalid(format!(
                "test {}: {w:?} is in both target sets",
                self.name
            )));
        }
        Ok(())
    }

    pub fn swapped_targets(&self) -> Self {
        AssociationTest {
            targets_x: self.targets_y.clone(),
            targets_y: self.targets_x.clone(),
            ..self.clone()
        }
    }

    pub fn swapped_attributes(&self) -> Self {
        AssociationTest {
            attrs_a: self.attrs_b.clone(),
            attrs_b: self.attrs_a.clone(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MulticlassTest {
    pub name: String,
    pub targets: Vec<String>,
    pub attribute_sets: Vec<Vec<String>>,
    #[serde(default)]
    pub template_mode: TemplateMode,
}

impl MulticlassTest {
    pub fn validate(&self) -> Result<()> {
        if self.targets.is_empty() {
            return Err(Error::invalid(format!(
                "test {}: targets is empty",
                self.name
            )));
        }
        if self.attribute_sets.len() < 2 {
            return Err(Error::invalid(format!(
                "test {}: need at least 2 attribute sets",
                self.name
            )));
        }
        if self.attribute_sets.iter().any(Vec::is_empty) {
            return Err(Error::invalid(format!(
                "test {}: an attribute set is empty",
                self.name
            )));
        }
        Ok(())
    }
}

/// One entry of a test spec file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TestSpec {
    Binary(AssociationTest),
    Multiclass(MulticlassTest),
}

impl TestSpec {
    pub fn name(&self) -> &str {
        match self {
            TestSpec::Binary(t) => &t.name,
            TestSpec::Multiclass(t) => &t.name,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TestSpec::Binary(t) => t.validate(),
            TestSpec::Multiclass(t) => t.validate(),
        }
    }
}

/// Parses a test spec file holding one object or an array of them.
pub fn parse_tests(text: &str) -> Result<Vec<TestSpec>> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany {
        Many(Vec<TestSpec>),
        One(TestSpec),
    }
    let specs = match serde_json::from_str::<OneOrMany>(text)? {
        OneOrMany::Many(v) => v,
        OneOrMany::One(t) => vec![t],
    };
    for s in &specs {
        s.validate()?;
    }
    Ok(specs)
}

pub fn load_tests(path: impl AsRef<Path>) -> Result<Vec<TestSpec>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tests(&text).map_err(|e| match e {
        Error::Json(j) => Error::Parse {
            path: path.display().to_string(),
            line: j.line(),
            message: j.to_string(),
        },
        other => other,
    })
}

/// C6, C6b, C7, C7b, C8 and C8b.
pub fn bundled_gender_tests() -> Vec<AssociationTest> {
    parse_tests(GENDER_TESTS)
        .expect("bundled gender tests are valid")
        .into_iter()
        .filter_map(|t| match t {
            TestSpec::Binary(b) => Some(b),
            TestSpec::Multiclass(_) => None,
        })
        .collect()
}

/// The three-class religion MAC test.
pub fn bundled_religion_test() -> MulticlassTest {
    match parse_tests(RELIGION_TEST)
        .expect("bundled religion test is valid")
        .pop()
    {
        Some(TestSpec::Multiclass(t)) => t,
        _ => unreachable!("bundled religion test is multiclass"),
    }
}

/// Mean cosine to `a` minus mean cosine to `b`.
pub fn association(w: &Vector, a: &[Vector], b: &[Vector]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("attribute sets must be nonempty"));
    }
    let mean_cos = |set: &[Vector]| -> Result<f64> {
        let mut total = 0.0;
        for v in set {
            total += cosine(w, v)?;
        }
        Ok(total / set.len() as f64)
    };
    Ok(mean_cos(a)? - mean_cos(b)?)
}

/// Effect size over already-encoded word vectors.
pub fn effect_size_vectors(x: &[Vector], y: &[Vector], a: &[Vector], b: &[Vector]) -> Result<f64> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::invalid("target sets must be nonempty"));
    }
    let sx = x
        .iter()
        .map(|w| association(w, a, b))
        .collect::<Result<Vec<_>>>()?;
    let sy = y
        .iter()
        .map(|w| association(w, a, b))
        .collect::<Result<Vec<_>>>()?;
    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;

    // Sorted so the pooled statistics do not depend on which set came first.
    let mut all: Vec<f64> = sx.iter().chain(&sy).copied().collect();
    all.sort_by(f64::total_cmp);
    if all.len() < 2 {
        return Err(Error::UndefinedEffect);
    }
    let mu = mean_of(&all);
    let var = all.iter().map(|s| (s - mu) * (s - mu)).sum::<f64>() / (all.len() - 1) as f64;
    let sd = var.sqrt();
    if sd.is_nan() || sd <= MIN_STD {
        return Err(Error::UndefinedEffect);
    }
    let d = (mean_of(&sx) - mean_of(&sy)) / sd;
    if x.len() == y.len() && d.abs() > 2.0 + 1e-9 {
        return Err(Error::invalid(format!(
            "effect size {d} escaped [-2, 2] with balanced targets"
        )));
    }
    Ok(d)
}

/// MAC over already-encoded target and attribute vectors.
pub fn mac_vectors(targets: &[Vector], attribute_sets: &[Vec<Vector>]) -> Result<f64> {
    if targets.is_empty() || attribute_sets.is_empty() || attribute_sets.iter().any(Vec::is_empty) {
        return Err(Error::invalid(
            "MAC needs nonempty targets and attribute sets",
        ));
    }
    let mut total = 0.0;
    for t in targets {
        for set in attribute_sets {
            let mut s = 0.0;
            for a in set {
                s += 1.0 - cosine(t, a)?;
            }
            total += s / set.len() as f64;
        }
    }
    Ok(total / (targets.len() * attribute_sets.len()) as f64)
}

/// One vector per word: the mean of its template sentence vectors, neutralized if a
/// subspace is given.
pub fn concept_vectors<S: AsRef<str>>(
    encoder: &EncoderHandle,
    words: &[S],
    mode: TemplateMode,
    subspace: Option<&BiasSubspace>,
) -> Result<Vec<Vector>> {
    if words.is_empty() {
        return Err(Error::invalid("no words to encode"));
    }
    let (sentences, per_word): (Vec<String>, usize) = match mode {
        TemplateMode::Simple => {
            let s = simple_templates(words);
            let per = s.len() / words.len();
            (s.into_iter().map(|t| t.text).collect(), per)
        }
        TemplateMode::ProvidedSentences => {
            (words.iter().map(|w| w.as_ref().to_string()).collect(), 1)
        }
    };
    let mut vectors = encoder.encode_vectors(&sentences)?;
    if let Some(s) = subspace {
        vectors = vectors
            .iter()
            .map(|v| neutralize(v, s))
            .collect::<Result<_>>()?;
    }
    vectors.chunks(per_word).map(mean).collect()
}

pub fn effect_size(
    test: &AssociationTest,
    encoder: &EncoderHandle,
    subspace: Option<&BiasSubspace>,
) -> Result<f64> {
    test.validate()?;
    let enc = |words: &[String]| concept_vectors(encoder, words, test.template_mode, subspace);
    effect_size_vectors(
        &enc(&test.targets_x)?,
        &enc(&test.targets_y)?,
        &enc(&test.attrs_a)?,
        &enc(&test.attrs_b)?,
    )
}

pub fn mac_score(
    test: &MulticlassTest,
    encoder: &EncoderHandle,
    subspace: Option<&BiasSubspace>,
) -> Result<f64> {
    test.validate()?;
    let targets = concept_vectors(encoder, &test.targets, test.template_mode, subspace)?;
    let sets = test
        .attribute_sets
        .iter()
        .map(|set| concept_vectors(encoder, set, test.template_mode, subspace))
        .collect::<Result<Vec<_>>>()?;
    mac_vectors(&targets, &sets)
}

/// Mean of `|d|` over a suite.
pub fn average_abs_effect_size(
    tests: &[AssociationTest],
    encoder: &EncoderHandle,
    subspace: Option<&BiasSubspace>,
) -> Result<f64> {
    if tests.is_empty() {
        return Err(Error::invalid("empty test suite"));
    }
    let mut total = 0.0;
    for t in tests {
        total += effect_size(t, encoder, subspace)?.abs();
    }
    Ok(total / tests.len() as f64)
}

/// Mean of absolute values; the suite-level aggregate for precomputed scores.
pub fn mean_abs(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::invalid("no values"));
    }
    Ok(values.iter().map(|v| v.abs()).sum::<f64>() / values.len() as f64)
}

/// Scores a spec: effect size for binary tests, MAC for multiclass ones.
pub fn score(
    spec: &TestSpec,
    encoder: &EncoderHandle,
    subspace: Option<&BiasSubspace>,
) -> Result<f64> {
    match spec {
        TestSpec::Binary(t) => effect_size(t, encoder, subspace),
        TestSpec::Multiclass(t) => mac_score(t, encoder, subspace),
    }
}
