//! Reference computations shared by the integration tests. Nothing here calls into
//! the crate's numeric code.

#![allow(dead_code)]

use debias_core::contextualize::{mine_templates, MineOptions, SentenceTemplate};
use debias_core::encoder::EncoderHandle;
use debias_core::metrics::{bundled_gender_tests, AssociationTest};
use debias_core::synthetic::{synthetic_corpus, PlantedBiasEncoder};
use debias_core::AttributeTupleSet;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn gaussian(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (norm(a) * norm(b))
}

/// Gram-Schmidt on `k` Gaussian draws.
pub fn random_orthonormal(rng: &mut impl Rng, dim: usize, k: usize) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    while out.len() < k {
        let mut v = gaussian(rng, dim);
        for u in &out {
            let p = dot(&v, u);
            v.iter_mut().zip(u).for_each(|(x, y)| *x -= p * y);
        }
        let n = norm(&v);
        if n > 1e-6 {
            out.push(v.iter().map(|x| x / n).collect());
        }
    }
    out
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix. Returns eigenvalues in
/// descending order with eigenvectors as rows.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let n = a.len();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let (vkp, vkq) = (v[k][p], v[k][q]);
                    v[k][p] = c * vkp - s * vkq;
                    v[k][q] = s * vkp + c * vkq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j][j].total_cmp(&a[i][i]));
    let values = order.iter().map(|&i| a[i][i]).collect();
    let vectors = order
        .iter()
        .map(|&i| (0..n).map(|k| v[k][i]).collect())
        .collect();
    (values, vectors)
}

/// Sample covariance of already centered rows.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let dim = rows[0].len();
    let denom = (rows.len() - 1) as f64;
    (0..dim)
        .map(|i| {
            (0..dim)
                .map(|j| rows.iter().map(|r| r[i] * r[j]).sum::<f64>() / denom)
                .collect()
        })
        .collect()
}

pub fn brute_effect_size(x: &[Vec<f64>], y: &[Vec<f64>], a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let s = |w: &Vec<f64>| {
        let mut ca = 0.0;
        for v in a {
            ca += cos(w, v);
        }
        let mut cb = 0.0;
        for v in b {
            cb += cos(w, v);
        }
        ca / a.len() as f64 - cb / b.len() as f64
    };
    let sx: Vec<f64> = x.iter().map(s).collect();
    let sy: Vec<f64> = y.iter().map(s).collect();
    let mx = sx.iter().sum::<f64>() / sx.len() as f64;
    let my = sy.iter().sum::<f64>() / sy.len() as f64;
    let all: Vec<f64> = sx.iter().chain(&sy).copied().collect();
    let m = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (all.len() - 1) as f64;
    (mx - my) / var.sqrt()
}

pub fn brute_mac(targets: &[Vec<f64>], sets: &[Vec<Vec<f64>>]) -> f64 {
    let mut total = 0.0;
    let mut count = 0.0;
    for t in targets {
        for set in sets {
            let mut s = 0.0;
            for a in set {
                s += 1.0 - cos(t, a);
            }
            total += s / set.len() as f64;
            count += 1.0;
        }
    }
    total / count
}

pub const PLANTED_DIM: usize = 64;
pub const PLANTED_MAGNITUDE: f64 = 0.5;
pub const PLANTED_SIGMA: f64 = 0.05;

pub struct PlantedWorld {
    pub lexicon: AttributeTupleSet,
    pub tests: Vec<AssociationTest>,
    pub encoder: EncoderHandle,
    pub direction: Vec<f64>,
}

impl PlantedWorld {
    pub fn new(seed: u64) -> Self {
        let lexicon = AttributeTupleSet::bundled_gender();
        let tests = bundled_gender_tests();
        let enc = PlantedBiasEncoder::for_suite(
            PLANTED_DIM,
            seed,
            PLANTED_MAGNITUDE,
            PLANTED_SIGMA,
            &tests,
            &lexicon,
        );
        let direction = enc.direction().as_slice().to_vec();
        PlantedWorld {
            lexicon,
            tests,
            encoder: EncoderHandle::new(Box::new(enc)),
            direction,
        }
    }

    /// Templates mined from a synthetic single-domain corpus of `lines` lines.
    pub fn templates(&self, lines: usize, seed: u64) -> Vec<SentenceTemplate> {
        let corpus = synthetic_corpus(&self.lexicon, lines, seed).join("\n");
        mine_templates(
            corpus.as_bytes(),
            &self.lexicon,
            "synthetic",
            &MineOptions::default(),
        )
        .expect("synthetic corpus mines")
        .templates
    }
}
