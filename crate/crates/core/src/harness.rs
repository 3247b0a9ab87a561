//! Template ablations: debiasing quality against template quantity and against
//! the number of source domains.
//!
//! Every run is one call of the caller's pipeline on a template subset. Runs are
//! grouped and summarized with the mean and the population standard deviation,
//! since each group enumerates all of its combinations.

use std::collections::BTreeMap;
use std::path::Path;

use itertools::Itertools;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::contextualize::SentenceTemplate;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AblationMode {
    Quantity,
    Domains,
}

impl std::fmt::Display for AblationMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AblationMode::Quantity => "quantity",
            AblationMode::Domains => "domains",
        })
    }
}

impl std::str::FromStr for AblationMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quantity" => Ok(AblationMode::Quantity),
            "domains" => Ok(AblationMode::Domains),
            other => Err(Error::invalid(format!(
                "unknown ablation mode {other:?} (expected quantity or domains)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRun {
    pub mode: AblationMode,
    /// Number of partitions (quantity) or domains (domains) in the combination.
    pub group: usize,
    pub combination: String,
    pub avg_abs_effect_size: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSummary {
    pub group: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationResult {
    pub mode: AblationMode,
    pub runs: Vec<AblationRun>,
    pub summary: Vec<GroupSummary>,
}

impl AblationResult {
    fn from_runs(mode: AblationMode, runs: Vec<AblationRun>) -> Self {
        let mut groups: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for r in &runs {
            groups
                .entry(r.group)
                .or_default()
                .push(r.avg_abs_effect_size);
        }
        let summary = groups
            .into_iter()
            .map(|(group, values)| {
                let (mean, std) = mean_and_population_std(&values);
                GroupSummary { group, mean, std }
            })
            .collect();
        AblationResult {
            mode,
            runs,
            summary,
        }
    }

    pub fn group(&self, group: usize) -> Option<&GroupSummary> {
        self.summary.iter().find(|g| g.group == group)
    }

    /// `mode,group,combination,avg_abs_effect_size`
    pub fn write_runs_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path.as_ref(), &self.runs)
    }

    /// `group,mean,std`
    pub fn write_summary_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        write_csv(path.as_ref(), &self.summary)
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("csv: {other:?}")),
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in rows {
        w.serialize(r).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn mean_and_population_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Splits `pool`, ordered by template id, into `parts` contiguous slices whose
/// sizes differ by at most one.
pub fn partition(pool: &[SentenceTemplate], parts: usize) -> Result<Vec<Vec<SentenceTemplate>>> {
    if parts == 0 {
        return Err(Error::invalid("need at least one partition"));
    }
    if pool.len() < parts {
        return Err(Error::invalid(format!(
            "pool of {} templates is too small for {parts} partitions",
            pool.len()
        )));
    }
    let mut sorted = pool.to_vec();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    let (base, extra) = (sorted.len() / parts, sorted.len() % parts);
    let mut out = Vec::with_capacity(parts);
    let mut it = sorted.into_iter();
    for p in 0..parts {
        let size = base + usize::from(p < extra);
        out.push(it.by_ref().take(size).collect());
    }
    Ok(out)
}

/// Every nonempty union of partitions of a single-domain pool.
pub fn run_quantity_ablation<F>(
    pool: &[SentenceTemplate],
    parts: usize,
    pipeline: F,
) -> Result<AblationResult>
where
    F: Fn(&[SentenceTemplate]) -> Result<f64> + Sync,
{
    let partitions = partition(pool, parts)?;
    let combos: Vec<(usize, Vec<usize>)> = (1..=parts)
        .flat_map(|size| (0..parts).combinations(size).map(move |c| (size, c)))
        .collect();
    let runs = combos
        .par_iter()
        .map(|(size, combo)| {
            let mut templates: Vec<SentenceTemplate> = combo
                .iter()
                .flat_map(|&p| partitions[p].iter().cloned())
                .collect();
            templates.sort_by(|a, b| a.id.cmp(&b.id));
            Ok(AblationRun {
                mode: AblationMode::Quantity,
                group: *size,
                combination: combo.iter().join("+"),
                avg_abs_effect_size: pipeline(&templates)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationResult::from_runs(AblationMode::Quantity, runs))
}

/// Per-domain sample sizes for a subset: `total / k` each, with the remainder going
/// one apiece to the lexicographically first domains.
pub fn domain_quotas(domains: &[&str], total: usize) -> Vec<(String, usize)> {
    let mut sorted: Vec<&str> = domains.to_vec();
    sorted.sort_unstable();
    let k = sorted.len();
    let (base, extra) = (total / k, total % k);
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, d)| (d.to_string(), base + usize::from(i < extra)))
        .collect()
}

/// For every nonempty subset of domains, `total` templates split evenly across the
/// subset and sampled without replacement using `seed`.
pub fn run_domain_ablation<F>(
    pools: &BTreeMap<String, Vec<SentenceTemplate>>,
    total: usize,
    seed: u64,
    pipeline: F,
) -> Result<AblationResult>
where
    F: Fn(&[SentenceTemplate]) -> Result<f64> + Sync,
{
    if pools.len() < 2 {
        return Err(Error::invalid(format!(
            "domain ablation needs at least 2 domains, got {}",
            pools.len()
        )));
    }
    if total == 0 {
        return Err(Error::invalid("total template count must be positive"));
    }
    let sorted_pools: BTreeMap<&str, Vec<&SentenceTemplate>> = pools
        .iter()
        .map(|(d, ts)| {
            let mut v: Vec<&SentenceTemplate> = ts.iter().collect();
            v.sort_by(|a, b| a.id.cmp(&b.id));
            (d.as_str(), v)
        })
        .collect();
    let names: Vec<&str> = sorted_pools.keys().copied().collect();

    // Sampling happens up front, in a fixed order, so results do not depend on scheduling.
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut jobs = Vec::new();
    for k in 1..=names.len() {
        for subset in names.iter().copied().combinations(k) {
            let mut templates = Vec::with_capacity(total);
            for (domain, quota) in domain_quotas(&subset, total) {
                let pool = &sorted_pools[domain.as_str()];
                if quota > pool.len() {
                    return Err(Error::invalid(format!(
                        "domain {domain} has {} templates, {quota} needed",
                        pool.len()
                    )));
                }
                let mut picked: Vec<usize> = sample(&mut rng, pool.len(), quota).into_vec();
                picked.sort_unstable();
                templates.extend(picked.into_iter().map(|i| pool[i].clone()));
            }
            templates.sort_by(|a, b| a.id.cmp(&b.id));
            jobs.push((k, subset.join("+"), templates));
        }
    }

    let runs = jobs
        .par_iter()
        .map(|(k, label, templates)| {
            Ok(AblationRun {
                mode: AblationMode::Domains,
                group: *k,
                combination: label.clone(),
                avg_abs_effect_size: pipeline(templates)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AblationResult::from_runs(AblationMode::Domains, runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::Mutex;

    fn pool(domain: &str, n: usize) -> Vec<SentenceTemplate> {
        (0..n)
            .map(|i| SentenceTemplate {
                id: crate::contextualize::template_id(domain, i + 1),
                domain: domain.to_string(),
                text: format!("he said {i}"),
                matches: vec![],
            })
            .collect()
    }

    #[test]
    fn partitions_are_near_equal_and_disjoint() {
        let parts = partition(&pool("w", 13), 5).unwrap();
        let sizes: Vec<usize> = parts.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![3, 3, 3, 2, 2]);
        let ids: HashSet<&str> = parts.iter().flatten().map(|t| t.id.as_str()).collect();
        assert_eq!(ids.len(), 13);
        assert!(partition(&pool("w", 3), 5).is_err());
        assert!(partition(&pool("w", 3), 0).is_err());
    }

    #[test]
    fn five_parts_give_31_combinations() {
        let r = run_quantity_ablation(&pool("w", 25), 5, |t| Ok(t.len() as f64)).unwrap();
        assert_eq!(r.runs.len(), 31);
        let counts: Vec<usize> = (1..=5)
            .map(|s| r.runs.iter().filter(|x| x.group == s).count())
            .collect();
        assert_eq!(counts, vec![5, 10, 10, 5, 1]);
        let top = r.group(5).unwrap();
        assert_eq!((top.mean, top.std), (25.0, 0.0));
        assert_eq!(r.group(1).unwrap().mean, 5.0);
    }

    #[test]
    fn single_partition_has_zero_std() {
        let r = run_quantity_ablation(&pool("w", 4), 1, |t| Ok(t.len() as f64 * 0.1)).unwrap();
        assert_eq!(r.runs.len(), 1);
        assert_eq!(r.summary[0].std, 0.0);
    }

    #[test]
    fn pipeline_errors_propagate() {
        assert!(run_quantity_ablation(&pool("w", 4), 2, |_| Err(Error::UndefinedEffect)).is_err());
    }

    #[test]
    fn quotas_give_remainder_to_first_domains() {
        assert_eq!(
            domain_quotas(&["sst", "reddit"], 1080),
            vec![("reddit".to_string(), 540), ("sst".to_string(), 540)]
        );
        assert_eq!(
            domain_quotas(&["wikitext", "pom", "sst"], 10),
            vec![
                ("pom".to_string(), 4),
                ("sst".to_string(), 3),
                ("wikitext".to_string(), 3)
            ]
        );
    }

    fn four_domains(n: usize) -> BTreeMap<String, Vec<SentenceTemplate>> {
        ["reddit", "sst", "pom", "wikitext"]
            .iter()
            .map(|d| (d.to_string(), pool(d, n)))
            .collect()
    }

    #[test]
    fn domain_subsets_and_quotas() {
        let seen = Mutex::new(Vec::new());
        let r = run_domain_ablation(&four_domains(1100), 1080, 42, |t| {
            let mut per: BTreeMap<&str, usize> = BTreeMap::new();
            for x in t {
                *per.entry(x.domain.as_str()).or_default() += 1;
            }
            let ids: HashSet<&str> = t.iter().map(|x| x.id.as_str()).collect();
            assert_eq!(ids.len(), t.len(), "template reused within a run");
            seen.lock()
                .unwrap()
                .push(per.values().copied().collect::<Vec<_>>());
            Ok(t.len() as f64)
        })
        .unwrap();
        assert_eq!(r.runs.len(), 15);
        assert_eq!(r.runs.iter().filter(|x| x.group == 2).count(), 6);
        let seen = seen.into_inner().unwrap();
        assert_eq!(seen.iter().filter(|q| **q == vec![540, 540]).count(), 6);
        assert!(r.runs.iter().all(|x| x.avg_abs_effect_size == 1080.0));
    }

    #[test]
    fn domain_ablation_is_deterministic_under_seed() {
        let f = |t: &[SentenceTemplate]| {
            Ok(t.iter()
                .map(|x| x.id.len() as f64 + x.text.len() as f64 * 1e-3)
                .sum::<f64>())
        };
        let pools = four_domains(50);
        let a = run_domain_ablation(&pools, 24, 7, f).unwrap();
        let b = run_domain_ablation(&pools, 24, 7, f).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_domain_subset_matches_quantity_case() {
        let pools = four_domains(12);
        let f = |t: &[SentenceTemplate]| Ok(t.iter().map(|x| x.text.len() as f64).sum::<f64>());
        let dom = run_domain_ablation(&pools, 12, 3, f).unwrap();
        let q = run_quantity_ablation(&pools["reddit"], 1, f).unwrap();
        let run = dom.runs.iter().find(|r| r.combination == "reddit").unwrap();
        assert_eq!(run.avg_abs_effect_size, q.runs[0].avg_abs_effect_size);
    }

    #[test]
    fn insufficient_pool_is_an_error() {
        let err = run_domain_ablation(&four_domains(10), 12, 1, |_| Ok(0.0)).unwrap_err();
        assert!(err.to_string().contains("12 needed"));
        let one: BTreeMap<_, _> = [("a".to_string(), pool("a", 5))].into_iter().collect();
        assert!(run_domain_ablation(&one, 2, 1, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn csv_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let r = run_quantity_ablation(&pool("w", 6), 3, |t| Ok(t.len() as f64 / 4.0)).unwrap();
        let runs = dir.path().join("runs.csv");
        let summary = dir.path().join("summary.csv");
        r.write_runs_csv(&runs).unwrap();
        r.write_summary_csv(&summary).unwrap();
        let text = std::fs::read_to_string(&runs).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("mode,group,combination,avg_abs_effect_size")
        );
        assert_eq!(lines.next(), Some("quantity,1,0,0.5"));
        let text = std::fs::read_to_string(&summary).unwrap();
        assert!(text.starts_with("group,mean,std\n1,0.5,0.0\n"), "{text}");
    }
}
