//! Bias subspace estimation and removal.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, pca_top_k_with, CenteringMode, EmbeddingMatrix, RankPolicy, Vector};

/// Tolerance for the orthonormality check on a basis.
pub const ORTHONORMAL_TOLERANCE: f64 = 1e-10;

/// An orthonormal basis of bias directions and where it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasSubspace {
    basis: Vec<Vector>,
    dim: usize,
    centering: CenteringMode,
    explained_variance: Vec<f64>,
    /// Name of the encoder whose representations produced the basis.
    pub encoder: Option<String>,
    /// Template counts per domain.
    pub template_meta: BTreeMap<String, usize>,
}

impl BiasSubspace {
    pub fn new(
        basis: Vec<Vector>,
        centering: CenteringMode,
        explained_variance: Vec<f64>,
    ) -> Result<Self> {
        let dim = basis
            .first()
            .map(Vector::dim)
            .ok_or_else(|| Error::invalid("bias subspace needs at least one basis vector"))?;
        if basis.len() > dim {
            return Err(Error::invalid(format!(
                "{} basis vectors exceed dimension {dim}",
                basis.len()
            )));
        }
        if explained_variance.len() != basis.len() {
            return Err(Error::invalid(format!(
                "{} explained variances for {} basis vectors",
                explained_variance.len(),
                basis.len()
            )));
        }
        if explained_variance.iter().any(|&v| v.is_nan() || v < 0.0) {
            return Err(Error::invalid("explained variance must be non-negative"));
        }
        if explained_variance.windows(2).any(|w| w[1] > w[0]) {
            return Err(Error::invalid("explained variance must be non-increasing"));
        }
        for (i, a) in basis.iter().enumerate() {
            for (j, b) in basis.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                let ip = dot(a, b)?;
                if (ip - target).abs() >= ORTHONORMAL_TOLERANCE {
                    return Err(Error::invalid(format!(
                        "basis is not orthonormal: <v{i}, v{j}> = {ip}"
                    )));
                }
            }
        }
        Ok(BiasSubspace {
            basis,
            dim,
            centering,
            explained_variance,
            encoder: None,
            template_meta: BTreeMap::new(),
        })
    }

    pub fn with_encoder(mut self, encoder: impl Into<String>) -> Self {
        self.encoder = Some(encoder.into());
        self
    }

    pub fn basis(&self) -> &[Vector] {
        &self.basis
    }

    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centering(&self) -> CenteringMode {
        self.centering
    }

    pub fn explained_variance(&self) -> &[f64] {
        &self.explained_variance
    }

    /// Refuses to apply a subspace estimated with a different encoder unless `force`.
    pub fn ensure_compatible(&self, encoder: &str, force: bool) -> Result<()> {
        match &self.encoder {
            Some(own) if own != encoder && !force => Err(Error::invalid(format!(
                "subspace was estimated with encoder {own:?}, not {encoder:?} (use --force to apply anyway)"
            ))),
            _ => Ok(()),
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = SubspaceFile {
            encoder: self.encoder.clone(),
            dim: self.dim,
            k: self.k(),
            centering: self.centering,
            basis: self.basis.clone(),
            explained_variance: self.explained_variance.clone(),
            template_meta: self.template_meta.clone(),
        };
        let mut text = serde_json::to_string_pretty(&file)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: SubspaceFile = serde_json::from_str(&text)?;
        let mut s = BiasSubspace::new(file.basis, file.centering, file.explained_variance)?;
        if s.dim != file.dim || s.k() != file.k {
            return Err(Error::invalid(format!(
                "{}: header says dim {} k {}, basis has dim {} k {}",
                path.display(),
                file.dim,
                file.k,
                s.dim,
                s.k()
            )));
        }
        s.encoder = file.encoder;
        s.template_meta = file.template_meta;
        Ok(s)
    }
}

#[derive(Serialize, Deserialize)]
struct SubspaceFile {
    encoder: Option<String>,
    dim: usize,
    k: usize,
    centering: CenteringMode,
    basis: Vec<Vector>,
    explained_variance: Vec<f64>,
    #[serde(default)]
    template_meta: BTreeMap<String, usize>,
}

/// Per-class representation sets with row `i` of every set drawn from tuple `i`.
#[derive(Debug, Clone)]
pub struct ClassRepresentationSets {
    sets: Vec<EmbeddingMatrix>,
}

impl ClassRepresentationSets {
    pub fn new(sets: Vec<EmbeddingMatrix>) -> Result<Self> {
        let first = sets
            .first()
            .ok_or_else(|| Error::invalid("no class sets"))?;
        if sets.len() < 2 {
            return Err(Error::invalid("need at least two class sets"));
        }
        let (n, dim) = (first.len(), first.dim());
        for (j, s) in sets.iter().enumerate() {
            if s.len() != n {
                return Err(Error::invalid(format!(
                    "class set {j} has {} rows, class set 0 has {n}",
                    s.len()
                )));
            }
            if s.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: s.dim(),
                });
            }
        }
        Ok(ClassRepresentationSets { sets })
    }

    pub fn class_count(&self) -> usize {
        self.sets.len()
    }

    pub fn tuple_count(&self) -> usize {
        self.sets[0].len()
    }

    pub fn dim(&self) -> usize {
        self.sets[0].dim()
    }

    pub fn sets(&self) -> &[EmbeddingMatrix] {
        &self.sets
    }

    /// Every row after subtracting the class mean or the tuple mean.
    pub fn centered_rows(
        &self,
        centering: CenteringMode,
        pre_normalize: bool,
    ) -> Result<Vec<Vector>> {
        let rows: Vec<Vec<Vector>> = self
            .sets
            .iter()
            .map(|s| {
                s.rows()
                    .iter()
                    .map(|r| {
                        if pre_normalize {
                            r.normalized()
                        } else {
                            Ok(r.clone())
                        }
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        let (d, n) = (self.class_count(), self.tuple_count());
        let mut out = Vec::with_capacity(d * n);
        match centering {
            CenteringMode::Class => {
                for class_rows in &rows {
                    let mu = crate::linalg::mean(class_rows)?;
                    for r in class_rows {
                        out.push(r.sub(&mu)?);
                    }
                }
            }
            CenteringMode::Tuple => {
                let mut means = Vec::with_capacity(n);
                for i in 0..n {
                    let tuple: Vec<Vector> = rows.iter().map(|c| c[i].clone()).collect();
                    means.push(crate::linalg::mean(&tuple)?);
                }
                for class_rows in &rows {
                    for (r, mu) in class_rows.iter().zip(&means) {
                        out.push(r.sub(mu)?);
                    }
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub k: usize,
    pub centering: CenteringMode,
    pub pre_normalize: bool,
    pub rank_policy: RankPolicy,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        EstimateOptions {
            k: 1,
            centering: CenteringMode::Tuple,
            pre_normalize: false,
            rank_policy: RankPolicy::Error,
        }
    }
}

/// Top-`k` principal directions of the centered class representations.
pub fn estimate_subspace(
    reps: &ClassRepresentationSets,
    k: usize,
    centering: CenteringMode,
) -> Result<BiasSubspace> {
    estimate_subspace_with(
        reps,
        &EstimateOptions {
            k,
            centering,
            ..Default::default()
        },
    )
}

pub fn estimate_subspace_with(
    reps: &ClassRepresentationSets,
    options: &EstimateOptions,
) -> Result<BiasSubspace> {
    if reps.tuple_count() < 2 {
        return Err(Error::invalid(format!(
            "need at least 2 tuples to estimate a subspace, got {}",
            reps.tuple_count()
        )));
    }
    let rows = reps.centered_rows(options.centering, options.pre_normalize)?;
    let points = EmbeddingMatrix::from_rows(rows)?;
    let axes = pca_top_k_with(&points, options.k, options.rank_policy)?;
    BiasSubspace::new(axes.basis, options.centering, axes.explained_variance)
}

/// Component of `h` inside the span of the subspace.
pub fn project_onto(h: &Vector, subspace: &BiasSubspace) -> Result<Vector> {
    if h.dim() != subspace.dim() {
        return Err(Error::DimensionMismatch {
            expected: subspace.dim(),
            got: h.dim(),
        });
    }
    let mut out = Vector::zeros(h.dim());
    for v in subspace.basis() {
        out.axpy(dot(h, v)?, v)?;
    }
    Ok(out)
}

/// `h` minus its projection onto the subspace.
pub fn neutralize(h: &Vector, subspace: &BiasSubspace) -> Result<Vector> {
    h.sub(&project_onto(h, subspace)?)
}

/// [`neutralize`] applied to each timestep of a sequence.
pub fn neutralize_sequence(steps: &[Vector], subspace: &BiasSubspace) -> Result<Vec<Vector>> {
    steps.iter().map(|h| neutralize(h, subspace)).collect()
}
