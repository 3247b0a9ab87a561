//! Templates → class representation sets → bias subspace → scores.

use crate::contextualize::{domain_counts, expand, SentenceTemplate, SentenceTuple};
use crate::encoder::EncoderHandle;
use crate::error::{Error, Result};
use crate::lexicon::AttributeTupleSet;
use crate::linalg::EmbeddingMatrix;
use crate::metrics::{average_abs_effect_size, AssociationTest};
use crate::subspace::{
    estimate_subspace_with, BiasSubspace, ClassRepresentationSets, EstimateOptions,
};

/// Encodes realization `j` of every tuple into class set `j`, rows keyed by template id.
pub fn encode_tuples(
    encoder: &EncoderHandle,
    tuples: &[SentenceTuple],
) -> Result<ClassRepresentationSets> {
    let first = tuples
        .first()
        .ok_or_else(|| Error::invalid("no sentence tuples to encode"))?;
    let d = first.realizations.len();
    if let Some(t) = tuples.iter().find(|t| t.realizations.len() != d) {
        return Err(Error::invalid(format!(
            "tuple {} has {} realizations, expected {d}",
            t.template_id,
            t.realizations.len()
        )));
    }
    let keys: Vec<String> = tuples.iter().map(|t| t.template_id.clone()).collect();
    let sets = (0..d)
        .map(|j| {
            let sentences: Vec<&str> = tuples.iter().map(|t| t.realizations[j].as_str()).collect();
            let rows = encoder.encode_vectors(&sentences)?;
            EmbeddingMatrix::new(encoder.dim(), rows, keys.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    ClassRepresentationSets::new(sets)
}

/// Expands, encodes and estimates; the result is bound to the encoder's name.
pub fn estimate_from_templates(
    encoder: &EncoderHandle,
    templates: &[SentenceTemplate],
    lexicon: &AttributeTupleSet,
    options: &EstimateOptions,
) -> Result<BiasSubspace> {
    let tuples = templates
        .iter()
        .map(|t| expand(t, lexicon))
        .collect::<Result<Vec<_>>>()?;
    let reps = encode_tuples(encoder, &tuples)?;
    let mut subspace = estimate_subspace_with(&reps, options)?.with_encoder(encoder.name());
    subspace.template_meta = domain_counts(templates);
    Ok(subspace)
}

/// Estimate from `templates`, then score the suite with the subspace removed.
pub fn debiased_suite_score(
    encoder: &EncoderHandle,
    templates: &[SentenceTemplate],
    lexicon: &AttributeTupleSet,
    options: &EstimateOptions,
    tests: &[AssociationTest],
) -> Result<f64> {
    let subspace = estimate_from_templates(encoder, templates, lexicon, options)?;
    average_abs_effect_size(tests, encoder, Some(&subspace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contextualize::{mine_templates, MineOptions};
    use crate::encoder::HashEncoder;
    use crate::linalg::CenteringMode;

    #[test]
    fn rows_are_aligned_by_template_id() {
        let lex = AttributeTupleSet::bundled_gender();
        let corpus = "he ran home\nthe man slept\nshe sang\n";
        let templates = mine_templates(corpus.as_bytes(), &lex, "toy", &MineOptions::default())
            .unwrap()
            .templates;
        let h = EncoderHandle::new(Box::new(HashEncoder::new(8)));
        let tuples: Vec<_> = templates.iter().map(|t| expand(t, &lex).unwrap()).collect();
        let reps = encode_tuples(&h, &tuples).unwrap();
        assert_eq!(reps.class_count(), 2);
        assert_eq!(reps.tuple_count(), 3);
        assert_eq!(reps.sets()[0].keys(), reps.sets()[1].keys());
        assert_eq!(
            reps.sets()[1].row(0),
            &HashEncoder::new(8).encode_sentence("she ran home")
        );

        let s = estimate_from_templates(
            &h,
            &templates,
            &lex,
            &EstimateOptions {
                k: 2,
                centering: CenteringMode::Tuple,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(s.encoder.as_deref(), Some("hash_toy:8"));
        assert_eq!(s.template_meta.get("toy"), Some(&3));
        assert_eq!(s.k(), 2);
    }
}
