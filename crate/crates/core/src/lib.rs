//! Bias subspace estimation and removal for sentence embeddings.
//!
//! Bias-attribute word tuples are contextualized into counterfactual sentences
//! by rewriting naturally occurring sentences ([`contextualize`]). The sentences
//! are encoded ([`encoder`]), the bias subspace is the top principal directions
//! of the centered class representations ([`subspace`]), and it is projected out
//! of any embedding from the same encoder. [`metrics`] measures what is left and
//! [`harness`] runs the template ablations.

pub mod contextualize;
pub mod encoder;
pub mod error;
pub mod harness;
pub mod lexicon;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod subspace;
pub mod synthetic;

pub use error::{Error, Result};
pub use lexicon::AttributeTupleSet;
pub use linalg::{cosine, dot, pca_top_k, CenteringMode, EmbeddingMatrix, Vector};
pub use subspace::{neutralize, neutralize_sequence, project_onto, BiasSubspace};
