//! Dense vectors, embedding matrices, cosine geometry and PCA.
//!
//! Everything is plain `f64`. Encoders that emit `f32` are widened on the way in.

use std::collections::HashSet;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms at or below this are treated as zero by [`cosine`].
pub const ZERO_NORM_TOLERANCE: f64 = 1e-12;

/// A finite, non-empty vector of `f64`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("vector must have at least one entry"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "vector entry {i} is not finite ({})",
                values[i]
            )));
        }
        Ok(Vector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0, "zero-dimensional vector");
        Vector(vec![0.0; dim])
    }

    /// Unit vector along axis `axis`.
    pub fn basis(dim: usize, axis: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.0[axis] = 1.0;
        v
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Vector {
        Vector(self.0.iter().map(|v| v * factor).collect())
    }

    /// Returns `self / ‖self‖`, or a degenerate-input error for a zero vector.
    pub fn normalized(&self) -> Result<Vector> {
        let n = self.norm();
        if n <= ZERO_NORM_TOLERANCE {
            return Err(Error::Degenerate("cannot normalize a zero vector".into()));
        }
        Ok(self.scaled(1.0 / n))
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_dims(self.dim(), other.dim())?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        check_dims(self.dim(), other.dim())?;
        Ok(Vector(
            self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect(),
        ))
    }

    /// `self += alpha * other`
    pub fn axpy(&mut self, alpha: f64, other: &Vector) -> Result<()> {
        check_dims(self.dim(), other.dim())?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&v| v == 0.0)
    }
}

impl TryFrom<Vec<f64>> for Vector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Vector::new(values)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub fn dot(a: &Vector, b: &Vector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(a.0.iter().zip(&b.0).map(|(x, y)| x * y).sum())
}

/// Cosine similarity clamped to `[-1, 1]`.
pub fn cosine(a: &Vector, b: &Vector) -> Result<f64> {
    let d = dot(a, b)?;
    let (na, nb) = (a.norm(), b.norm());
    if na <= ZERO_NORM_TOLERANCE || nb <= ZERO_NORM_TOLERANCE {
        return Err(Error::Degenerate(
            "cosine of a zero-norm vector is undefined".into(),
        ));
    }
    Ok((d / (na * nb)).clamp(-1.0, 1.0))
}

/// Arithmetic mean of equally sized vectors.
pub fn mean(vectors: &[Vector]) -> Result<Vector> {
    let first = vectors
        .first()
        .ok_or_else(|| Error::Degenerate("mean of an empty set".into()))?;
    let mut acc = Vector::zeros(first.dim());
    for v in vectors {
        acc.axpy(1.0, v)?;
    }
    Ok(acc.scaled(1.0 / vectors.len() as f64))
}

/// Rows of sentence representations, each tagged with a unique provenance key.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    rows: Vec<Vector>,
    keys: Vec<String>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, rows: Vec<Vector>, keys: Vec<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        if rows.len() != keys.len() {
            return Err(Error::invalid(format!(
                "{} rows but {} keys",
                rows.len(),
                keys.len()
            )));
        }
        for row in &rows {
            check_dims(dim, row.dim())?;
        }
        let mut seen = HashSet::with_capacity(keys.len());
        for key in &keys {
            if !seen.insert(key.as_str()) {
                return Err(Error::invalid(format!("duplicate row key {key:?}")));
            }
        }
        Ok(EmbeddingMatrix { dim, rows, keys })
    }

    /// Rows keyed by position (`row-0`, `row-1`, ...). Fails on an empty list.
    pub fn from_rows(rows: Vec<Vector>) -> Result<Self> {
        let dim = rows
            .first()
            .map(Vector::dim)
            .ok_or_else(|| Error::Degenerate("no rows".into()))?;
        let keys = (0..rows.len()).map(|i| format!("row-{i}")).collect();
        Self::new(dim, rows, keys)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn rows(&self) -> &[Vector] {
        &self.rows
    }

    pub fn keys(&self) -> &[String] {
        &self.keys
    }

    pub fn row(&self, i: usize) -> &Vector {
        &self.rows[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Vector)> {
        self.keys.iter().map(String::as_str).zip(&self.rows)
    }

    pub fn into_rows(self) -> Vec<Vector> {
        self.rows
    }

    pub fn column_mean(&self) -> Result<Vector> {
        mean(&self.rows)
    }
}

/// How class representations are mean-centered before PCA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenteringMode {
    /// Subtract the mean of each class set from that set's rows.
    Class,
    /// Subtract the mean of each aligned tuple from that tuple's rows.
    Tuple,
}

impl std::str::FromStr for CenteringMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "class" => Ok(CenteringMode::Class),
            "tuple" => Ok(CenteringMode::Tuple),
            other => Err(Error::invalid(format!(
                "unknown centering mode {other:?} (expected class or tuple)"
            ))),
        }
    }
}

impl std::fmt::Display for CenteringMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            CenteringMode::Class => "class",
            CenteringMode::Tuple => "tuple",
        })
    }
}

/// What [`pca_top_k_with`] does when fewer than `k` directions carry variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RankPolicy {
    #[default]
    Error,
    Truncate,
}

/// Top principal axes of a row matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PrincipalAxes {
    pub basis: Vec<Vector>,
    pub singular_values: Vec<f64>,
    pub explained_variance: Vec<f64>,
    /// Set when fewer axes than requested were returned under [`RankPolicy::Truncate`].
    pub truncated: bool,
}

/// Top-`k` right singular directions of `points`, which the caller has already centered.
pub fn pca_top_k(points: &EmbeddingMatrix, k: usize) -> Result<PrincipalAxes> {
    pca_top_k_with(points, k, RankPolicy::Error)
}

pub fn pca_top_k_with(
    points: &EmbeddingMatrix,
    k: usize,
    policy: RankPolicy,
) -> Result<PrincipalAxes> {
    let (n, dim) = (points.len(), points.dim());
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > dim {
        return Err(Error::Rank {
            requested: k,
            available: dim,
        });
    }
    if n < k {
        return Err(Error::Rank {
            requested: k,
            available: n,
        });
    }

    let data: Vec<f64> = points
        .rows()
        .iter()
        .flat_map(|r| r.as_slice().iter().copied())
        .collect();
    let m = DMatrix::from_row_slice(n, dim, &data);
    let svd = m.svd(false, true);
    let v_t = svd
        .v_t
        .ok_or_else(|| Error::Degenerate("SVD did not produce right singular vectors".into()))?;

    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| {
        svd.singular_values[b]
            .partial_cmp(&svd.singular_values[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });

    let sigma_max = order
        .first()
        .map(|&i| svd.singular_values[i])
        .unwrap_or(0.0);
    // Relative cutoff with an absolute floor so rounding residue is not read as signal.
    let tol = ((n.max(dim) as f64) * f64::EPSILON * sigma_max).max(1e-12);
    let rank = order
        .iter()
        .filter(|&&i| svd.singular_values[i] > tol)
        .count();

    let take = if k > rank {
        match policy {
            RankPolicy::Error => {
                return Err(Error::Rank {
                    requested: k,
                    available: rank,
                })
            }
            RankPolicy::Truncate => {
                log::warn!("requested {k} principal axes but data has rank {rank}");
                rank
            }
        }
    } else {
        k
    };
    if take == 0 {
        return Err(Error::Rank {
            requested: k,
            available: 0,
        });
    }

    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let mut basis = Vec::with_capacity(take);
    let mut singular_values = Vec::with_capacity(take);
    for &i in order.iter().take(take) {
        let mut axis: Vec<f64> = v_t.row(i).iter().copied().collect();
        fix_sign(&mut axis);
        basis.push(Vector::new(axis)?.normalized()?);
        singular_values.push(svd.singular_values[i]);
    }
    let explained_variance = singular_values.iter().map(|s| s * s / denom).collect();

    Ok(PrincipalAxes {
        basis,
        singular_values,
        explained_variance,
        truncated: take < k,
    })
}

/// Flip `axis` so its largest-magnitude entry (lowest index on ties) is non-negative.
pub fn fix_sign(axis: &mut [f64]) {
    let mut best = 0;
    for (i, v) in axis.iter().enumerate() {
        if v.abs() > axis[best].abs() {
            best = i;
        }
    }
    if axis.get(best).is_some_and(|&v| v < 0.0) {
        axis.iter_mut().for_each(|v| *v = -*v);
    }
}
