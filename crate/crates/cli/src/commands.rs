use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use debias_core::contextualize::{
    mine_templates, read_store, write_store, MineOptions, SentenceTemplate,
};
use debias_core::encoder::{
    read_records, write_records, EmbeddingCache, EncoderHandle, EncoderSpec,
};
use debias_core::harness::{run_domain_ablation, run_quantity_ablation, AblationMode};
use debias_core::metrics::{
    bundled_gender_tests, bundled_religion_test, concept_vectors, load_tests, score,
    AssociationTest, TemplateMode, TestSpec,
};
use debias_core::pipeline::{debiased_suite_score, estimate_from_templates};
use debias_core::subspace::EstimateOptions;
use debias_core::{neutralize, AttributeTupleSet, BiasSubspace, Error, Result};

use crate::{Cli, Command, EncoderArgs, EstimateArgs};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Templates {
            lexicon,
            corpus,
            out,
            keep_mixed,
            max_fraction,
            max_templates,
        } => {
            let options = MineOptions {
                keep_mixed,
                max_fraction,
                max_templates,
            };
            templates(&load_lexicon(lexicon.as_deref())?, &corpus, &out, &options)
        }
        Command::Estimate {
            templates,
            encoder,
            estimate,
            out,
        } => {
            let handle = open_encoder(&encoder)?;
            let store = read_store(&templates)?;
            let subspace = estimate_from_templates(
                &handle,
                &store,
                &load_lexicon(estimate.lexicon.as_deref())?,
                &estimate_options(&estimate),
            )?;
            handle.flush_cache()?;
            subspace.save(&out)?;
            println!(
                "k={} dim={} explained_variance={:?}",
                subspace.k(),
                subspace.dim(),
                subspace.explained_variance()
            );
            Ok(())
        }
        Command::Debias {
            subspace,
            input,
            output,
            force,
        } => debias(&subspace, &input, &output, force),
        Command::Eval {
            tests,
            encoder,
            subspace,
            force,
            out,
        } => {
            let specs = if tests.is_empty() {
                let mut v: Vec<TestSpec> = bundled_gender_tests()
                    .into_iter()
                    .map(TestSpec::Binary)
                    .collect();
                v.push(TestSpec::Multiclass(bundled_religion_test()));
                v
            } else {
                load_all_tests(&tests)?
            };
            let handle = open_encoder(&encoder)?;
            let subspace = load_subspace(subspace.as_deref(), &handle, force)?;
            eval(&specs, &handle, subspace.as_ref(), &out)?;
            handle.flush_cache()
        }
        Command::Ablate {
            mode,
            templates,
            encoder,
            estimate,
            tests,
            parts,
            total,
            out_runs,
            out_summary,
        } => {
            let suite = if tests.is_empty() {
                bundled_gender_tests()
            } else {
                binary_tests(load_all_tests(&tests)?)?
            };
            let handle = open_encoder(&encoder)?;
            let lexicon = load_lexicon(estimate.lexicon.as_deref())?;
            let options = estimate_options(&estimate);
            let pool = read_store(&templates)?;
            let pipeline = |ts: &[SentenceTemplate]| {
                debiased_suite_score(&handle, ts, &lexicon, &options, &suite)
            };
            let result = match mode {
                AblationMode::Quantity => run_quantity_ablation(&pool, parts, pipeline)?,
                AblationMode::Domains => {
                    let mut pools: BTreeMap<String, Vec<SentenceTemplate>> = BTreeMap::new();
                    for t in pool {
                        pools.entry(t.domain.clone()).or_default().push(t);
                    }
                    run_domain_ablation(&pools, total, cli.seed, pipeline)?
                }
            };
            handle.flush_cache()?;
            result.write_runs_csv(&out_runs)?;
            result.write_summary_csv(&out_summary)?;
            for g in &result.summary {
                println!("group {}: mean {:.4} std {:.4}", g.group, g.mean, g.std);
            }
            Ok(())
        }
        Command::ExportConceptMeans {
            words,
            word,
            encoder,
            subspace,
            force,
            out,
        } => {
            let mut list = word;
            if let Some(path) = words {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                list.extend(
                    text.lines()
                        .map(str::trim)
                        .filter(|l| !l.is_empty())
                        .map(str::to_string),
                );
            }
            let handle = open_encoder(&encoder)?;
            let subspace = load_subspace(subspace.as_deref(), &handle, force)?;
            let vectors = concept_vectors(&handle, &list, TemplateMode::Simple, subspace.as_ref())?;
            handle.flush_cache()?;
            let mut w = csv_writer(&out)?;
            let mut header = vec!["word".to_string()];
            header.extend((0..handle.dim()).map(|j| format!("v{j}")));
            write_row(&mut w, &out, &header)?;
            for (word, v) in list.iter().zip(&vectors) {
                let mut row = vec![word.clone()];
                row.extend(v.as_slice().iter().map(|x| x.to_string()));
                write_row(&mut w, &out, &row)?;
            }
            finish(w, &out)
        }
    }
}

fn load_lexicon(path: Option<&Path>) -> Result<AttributeTupleSet> {
    match path {
        Some(p) => AttributeTupleSet::load(p),
        None => Ok(AttributeTupleSet::bundled_gender()),
    }
}

fn estimate_options(a: &EstimateArgs) -> EstimateOptions {
    EstimateOptions {
        k: a.k,
        centering: a.centering,
        pre_normalize: a.pre_normalize,
        ..Default::default()
    }
}

fn open_encoder(a: &EncoderArgs) -> Result<EncoderHandle> {
    let spec: EncoderSpec = a.encoder.parse()?;
    let handle = EncoderHandle::new(spec.build()?);
    Ok(match &a.cache {
        Some(path) => handle.with_cache(EmbeddingCache::open(path)?),
        None => handle,
    })
}

fn load_subspace(
    path: Option<&Path>,
    encoder: &EncoderHandle,
    force: bool,
) -> Result<Option<BiasSubspace>> {
    let Some(path) = path else { return Ok(None) };
    let s = BiasSubspace::load(path)?;
    s.ensure_compatible(encoder.name(), force)?;
    if s.dim() != encoder.dim() {
        return Err(Error::DimensionMismatch {
            expected: encoder.dim(),
            got: s.dim(),
        });
    }
    Ok(Some(s))
}

fn load_all_tests(paths: &[PathBuf]) -> Result<Vec<TestSpec>> {
    let mut out = Vec::new();
    for p in paths {
        out.extend(load_tests(p)?);
    }
    Ok(out)
}

fn binary_tests(specs: Vec<TestSpec>) -> Result<Vec<AssociationTest>> {
    specs
        .into_iter()
        .map(|s| match s {
            TestSpec::Binary(t) => Ok(t),
            TestSpec::Multiclass(t) => Err(Error::invalid(format!(
                "ablation scores effect sizes; {} is a multiclass test",
                t.name
            ))),
        })
        .collect()
}

/// `domain=path`, or a bare path whose file stem names the domain.
fn corpus_source(arg: &str) -> Result<(String, PathBuf)> {
    if let Some((domain, path)) = arg.split_once('=') {
        if domain.is_empty() {
            return Err(Error::invalid(format!(
                "corpus {arg:?} has an empty domain label"
            )));
        }
        return Ok((domain.to_string(), PathBuf::from(path)));
    }
    let path = PathBuf::from(arg);
    let domain = path
        .file_stem()
        .and_then(|s| s.to_str())
        .ok_or_else(|| Error::invalid(format!("cannot derive a domain label from {arg:?}")))?
        .to_string();
    Ok((domain, path))
}

fn templates(
    lexicon: &AttributeTupleSet,
    corpora: &[String],
    out: &Path,
    options: &MineOptions,
) -> Result<()> {
    let mut sources = Vec::with_capacity(corpora.len());
    for arg in corpora {
        let (domain, path) = corpus_source(arg)?;
        if sources
            .iter()
            .any(|(d, _): &(String, PathBuf)| *d == domain)
        {
            return Err(Error::invalid(format!("domain {domain} is given twice")));
        }
        sources.push((domain, path));
    }
    let mut all = Vec::new();
    for (domain, path) in &sources {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let report = mine_templates(BufReader::new(file), lexicon, domain, options)?;
        if report.lines_read == 0 {
            log::warn!("{}: corpus is empty", path.display());
        }
        if report.undecodable_lines > 0 {
            log::warn!(
                "{}: skipped {} undecodable lines",
                path.display(),
                report.undecodable_lines
            );
        }
        println!(
            "{domain}\t{} templates\t{} lines\t{} mixed dropped",
            report.templates.len(),
            report.lines_read,
            report.mixed_dropped
        );
        all.extend(report.templates);
    }
    write_store(out, &all)
}

fn debias(subspace: &Path, input: &Path, output: &Path, force: bool) -> Result<()> {
    let s = BiasSubspace::load(subspace)?;
    let mut records = read_records(input)?;
    for r in &mut records {
        s.ensure_compatible(&r.encoder, force)?;
        r.vec = neutralize(&r.vec, &s)?;
    }
    write_records(output, &records)?;
    println!("{} embeddings debiased", records.len());
    Ok(())
}

fn eval(
    specs: &[TestSpec],
    encoder: &EncoderHandle,
    subspace: Option<&BiasSubspace>,
    out: &Path,
) -> Result<()> {
    let mut w = csv_writer(out)?;
    write_row(&mut w, out, ["test", "before", "after"])?;
    for spec in specs {
        let before = score(spec, encoder, None)?;
        let after = subspace
            .map(|s| score(spec, encoder, Some(s)))
            .transpose()?;
        let after_text = after.map(|a| a.to_string()).unwrap_or_default();
        match after {
            Some(a) => println!("{}: {before:.4} -> {a:.4}", spec.name()),
            None => println!("{}: {before:.4}", spec.name()),
        }
        write_row(&mut w, out, [spec.name(), &before.to_string(), &after_text])?;
    }
    finish(w, out)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<File>> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::Writer::from_writer(file))
}

fn write_row<I, T>(w: &mut csv::Writer<File>, path: &Path, row: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: AsRef<[u8]>,
{
    w.write_record(row).map_err(|e| csv_error(path, e))
}

fn finish(mut w: csv::Writer<File>, path: &Path) -> Result<()> {
    w.flush().map_err(|e| Error::io(path, e))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::invalid(format!("{}: {other:?}", path.display())),
    }
}
