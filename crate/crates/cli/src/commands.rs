use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::BufReader;
use std::path::Path;

use chrono::Utc;
use serde::Serialize;
use serde_json::json;

use selfscope_core::annotation::{
    agreement_matrix, gold_labels, import_annotations, import_external_annotations, AnnotationRecord, GoldSet,
    ImportOptions, ImportSummary, Origin,
};
use selfscope_core::bias::{evaluate_artifact, generate_minimal_pairs, BiasReport, SubstitutionSet};
use selfscope_core::corpus::{import_jsonl, segment, stratified_folds, Corpus, DatasetManifest, Instance};
use selfscope_core::evaluate::{
    compare_classifiers, fit_fold, run_cv, ComparisonOptions, ComparisonReport, CvResult, Metric, PerformanceTable,
};
use selfscope_core::features::{FeatureConfig, FeatureSpace};
use selfscope_core::interpret::{
    linear_coefficients, model_fingerprint, permutation_importance, ImportanceReport, PermutationOptions,
};
use selfscope_core::models::{Example, ExpertRouter, ModelArtifact, ModelSpec};
use selfscope_core::ontology::{load_ontology, Depth, LabelPath};
use selfscope_core::project::{canonical_json, predict_units, Project};

use crate::args::{MethodArg, OriginArg};
use crate::config::Resolved;
use crate::output::Output;
use crate::CliError;

fn file_key(path: &LabelPath) -> String {
    path.to_string().replace('/', ".")
}

fn gold(project: &Project, corpus: &Corpus, path: &LabelPath, r: &Resolved) -> Result<GoldSet, CliError> {
    Ok(gold_labels(project.store.state(), corpus, path, &r.policy())?)
}

fn merge(corpora: &[Corpus]) -> Corpus {
    match corpora {
        [single] => single.clone(),
        _ => Corpus {
            manifest: DatasetManifest::new("selection"),
            instances: corpora.iter().flat_map(|c| c.instances.iter().cloned()).collect(),
        },
    }
}

fn examples<'a>(corpus: &'a Corpus, gold: &GoldSet) -> Vec<Example<'a>> {
    corpus
        .instances
        .iter()
        .filter_map(|i| {
            gold.labels.get(&i.id).map(|&label| Example {
                id: &i.id,
                text: &i.text,
                label,
            })
        })
        .collect()
}

fn cross_validate(
    r: &Resolved,
    project: &Project,
    corpus: &Corpus,
    path: &LabelPath,
    spec: &ModelSpec,
) -> Result<CvResult, CliError> {
    let gold = gold(project, corpus, path, r)?;
    let labelled = corpus.labelled_subset(&gold.labels);
    let plan = stratified_folds(&labelled, &gold.labels, r.k, r.seed, path)?;
    Ok(run_cv(spec, &r.resources(), &labelled, &gold.labels, &plan)?)
}

/// Paths named in the config, or every path some annotator has labelled.
fn voted_paths(r: &Resolved, project: &Project) -> Vec<LabelPath> {
    if !r.paths.is_empty() {
        return r.paths.clone();
    }
    project
        .store
        .state()
        .records()
        .map(|rec| rec.path.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

pub fn ontology_validate(r: &Resolved, file: Option<&Path>) -> Result<Output, CliError> {
    let ontology = match file {
        Some(f) => load_ontology(f)?,
        None => r.ontology.clone(),
    };
    ontology.validate()?;
    let (aspects, elements, modes) = ontology.counts();
    let value = json!({
        "valid": true,
        "version": ontology.version,
        "language": ontology.language,
        "aspects": aspects,
        "elements": elements,
        "modes": modes,
        "aspect_ids": ontology.aspects.iter().map(|a| a.id.as_str()).collect::<Vec<_>>(),
    });
    let text = format!("ontology {} valid: {aspects} aspects, {elements} elements, {modes} modes\n", ontology.version);
    Ok(Output::new("ontology-validate", &value, text))
}

pub fn ontology_list(r: &Resolved, depth: &str) -> Result<Output, CliError> {
    let depth: Depth = depth.parse()?;
    let paths: Vec<String> = r.ontology.enumerate_paths(depth).iter().map(ToString::to_string).collect();
    let text = paths.iter().map(|p| format!("{p}\n")).collect();
    Ok(Output::new("ontology-list", &paths, text))
}

pub fn corpus_import(r: &Resolved, file: &Path, manifest: &Path) -> Result<Output, CliError> {
    let mut project = r.open_project()?;
    let imported = import_jsonl(file, DatasetManifest::load(manifest)?)?;
    let id = imported.corpus.manifest.dataset_id.clone();
    let n = imported.corpus.len();
    project.put_corpus(imported.corpus)?;
    let value = json!({"dataset_id": id, "instances": n, "warnings": imported.warnings});
    let mut text = format!("imported {n} instances into dataset {id}\n");
    for w in &imported.warnings {
        let _ = writeln!(text, "warning: {w}");
    }
    Ok(Output::new("corpus-import", &value, text))
}

#[derive(Serialize)]
struct SegmentSummary {
    source: String,
    target: String,
    instances: usize,
    units: usize,
}

pub fn corpus_segment(r: &Resolved, into: Option<&str>) -> Result<Output, CliError> {
    let mut project = r.open_project()?;
    let sources = r.corpora(&project)?;
    if into.is_some() && sources.len() != 1 {
        return Err(CliError::usage("--into needs exactly one source dataset"));
    }
    let mut summaries = Vec::new();
    for source in sources {
        let target = into.map_or_else(|| format!("{}-{}", source.manifest.dataset_id, r.level), str::to_string);
        let mut instances = Vec::new();
        for instance in &source.instances {
            for (n, unit) in segment(&instance.text, r.level).into_iter().enumerate() {
                instances.push(Instance {
                    id: format!("{}.{n}", instance.id),
                    dataset_id: target.clone(),
                    text: unit,
                    unit_level: r.level,
                    source_ref: Some(instance.id.clone()),
                    language: instance.language.clone(),
                    synthetic_annotation: instance.synthetic_annotation,
                });
            }
        }
        let manifest = DatasetManifest {
            dataset_id: target.clone(),
            unit_level: r.level,
            ..source.manifest.clone()
        };
        summaries.push(SegmentSummary {
            source: source.manifest.dataset_id.clone(),
            target,
            instances: source.len(),
            units: instances.len(),
        });
        project.put_corpus(Corpus::new(manifest, instances)?)?;
    }
    let text = summaries
        .iter()
        .map(|s| format!("{} -> {}: {} instances, {} {} units\n", s.source, s.target, s.instances, s.units, r.level))
        .collect();
    Ok(Output::new("corpus-segment", &summaries, text))
}

pub fn corpus_stats(r: &Resolved) -> Result<Output, CliError> {
    let project = r.open_project()?;
    let stats: Vec<_> = r.corpora(&project)?.iter().map(Corpus::stats).collect();
    let mut text = String::new();
    for s in &stats {
        let _ = writeln!(
            text,
            "{}: {} instances ({} eligible, {} synthetic), mean {:.1} tokens",
            s.dataset_id, s.instances, s.eligible, s.synthetic, s.mean_tokens
        );
    }
    Ok(Output::new("corpus-stats", &stats, text))
}

pub fn annotate_export(r: &Resolved) -> Result<Output, CliError> {
    let project = r.open_project()?;
    let store = project.store.state();
    let value = json!({
        "records": store.len(),
        "annotators": store.annotators().keys().collect::<Vec<_>>(),
        "decisions": store.decisions().count(),
    });
    let text = format!("exported {} records to annotations.jsonl\n", store.len());
    Ok(Output::new("annotate-export", &value, text).with_file("annotations.jsonl", store.export_jsonl()))
}

pub fn annotate_import(
    r: &Resolved,
    file: &Path,
    annotator: Option<&str>,
    origin: Option<OriginArg>,
) -> Result<Output, CliError> {
    let mut project = r.open_project()?;
    let before: BTreeMap<_, AnnotationRecord> = project.store.state().records().map(|x| (x.key(), x.clone())).collect();
    let mut scratch = project.store.state().clone();
    let mut corpus = project.merged();
    let reader = BufReader::new(std::fs::File::open(file).map_err(|e| CliError::io(file, e))?);
    let now = Utc::now();
    let summary: ImportSummary = match origin {
        Some(OriginArg::ExternalModel) => {
            let id = annotator.ok_or_else(|| CliError::usage("external-model imports need --annotator"))?;
            import_external_annotations(&mut scratch, &project.ontology, &mut corpus, reader, id, now)?
        }
        _ => {
            let options = ImportOptions {
                annotator_id: annotator,
                origin: origin.map(|_| Origin::Human),
                default_timestamp: now,
            };
            import_annotations(&mut scratch, &project.ontology, &corpus, reader, &options)?
        }
    };
    let changed: Vec<AnnotationRecord> = scratch
        .records()
        .filter(|x| before.get(&x.key()) != Some(x))
        .cloned()
        .collect();
    for record in changed {
        project.store.put(record)?;
    }
    let mut summary = summary;
    summary.flagged_synthetic = project.apply_guard();
    let mut text = format!("imported {} records", summary.imported);
    if !summary.flagged_synthetic.is_empty() {
        let _ = write!(text, "; {} instances flagged synthetic", summary.flagged_synthetic.len());
    }
    text.push('\n');
    for e in &summary.errors {
        let _ = writeln!(text, "line {}: {}", e.line, e.message);
    }
    Ok(Output::new("annotate-import", &summary, text))
}

pub fn annotate_agree(r: &Resolved) -> Result<Output, CliError> {
    let project = r.open_project()?;
    let store = project.store.state();
    let explicit = !r.paths.is_empty();
    let mut reports = BTreeMap::new();
    let mut output_files = Vec::new();
    let mut text = String::new();
    for path in voted_paths(r, &project) {
        let report = match agreement_matrix(store, &path) {
            Ok(rep) => rep,
            Err(e) if !explicit => {
                let _ = writeln!(text, "{path}: skipped ({e})");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        text.push_str(&report.to_text());
        output_files.push((format!("agreement.{}.json", file_key(&path)), canonical_json(&report)));
        reports.insert(path.to_string(), report);
    }
    let mut out = Output::new("annotate-agree", &reports, text);
    for (name, body) in output_files {
        out = out.with_file(&name, body);
    }
    Ok(out)
}

pub fn annotate_adjudicate(r: &Resolved) -> Result<Output, CliError> {
    let project = r.open_project()?;
    let corpus = merge(&r.corpora(&project)?);
    let mut result = BTreeMap::new();
    let mut text = String::new();
    for path in voted_paths(r, &project) {
        let g = gold(&project, &corpus, &path, r)?;
        let open = project.store.state().disagreements(&path);
        let positives = g.labels.values().filter(|&&v| v).count();
        let _ = writeln!(
            text,
            "{path}: {} gold labels ({positives} present), {} unresolved, {} open disagreements",
            g.labels.len(),
            g.unresolved.len(),
            open.len()
        );
        result.insert(path.to_string(), json!({"gold": g, "disagreements": open}));
    }
    Ok(Output::new("annotate-adjudicate", &result, text))
}

pub fn features_fit(r: &Resolved) -> Result<Output, CliError> {
    let kind = r
        .features
        .kind()
        .ok_or_else(|| CliError::usage("embedding features are not fitted; choose learned, lexicon or hybrid"))?;
    let project = r.open_project()?;
    let corpus = merge(&r.corpora(&project)?);
    let texts: Vec<&str> = corpus.instances.iter().map(|i| i.text.as_str()).collect();
    let resources = r.resources();
    let config = FeatureConfig {
        kind,
        orders: resources.orders,
        min_df: resources.min_df,
        lexicon: resources.lexicon,
    };
    let space = FeatureSpace::fit(&config, &texts)?;
    let text = format!(
        "{kind} feature space over {} documents: {} columns, fingerprint {}\n",
        texts.len(),
        space.dim(),
        space.fingerprint()
    );
    let value = json!({"fingerprint": space.fingerprint(), "documents": texts.len(), "space": space});
    Ok(Output::new("features-fit", &value, text))
}

pub fn train(r: &Resolved) -> Result<Output, CliError> {
    let project = r.open_project()?;
    let corpus = merge(&r.corpora(&project)?);
    let resources = r.resources();
    let mut rows = Vec::new();
    let mut text = String::new();
    for path in &r.paths {
        let g = gold(&project, &corpus, path, r)?;
        let ex = examples(&corpus, &g);
        for spec in &r.models {
            let artifact = ModelArtifact::fit(spec, path, &resources, &ex)?;
            let file = project.save_model(&artifact)?;
            let relative = file.strip_prefix(project.layout.root()).unwrap_or(&file).to_string_lossy().into_owned();
            let fingerprint = model_fingerprint(&artifact.model);
            let _ = writeln!(text, "{path} {}: {} examples -> {relative}", spec.name(), ex.len());
            rows.push(json!({
                "path": path.to_string(),
                "model": spec.name(),
                "examples": ex.len(),
                "positives": ex.iter().filter(|e| e.label).count(),
                "model_fingerprint": fingerprint,
                "feature_fingerprint": artifact.encoder.fingerprint(),
                "file": relative,
            }));
        }
    }
    Ok(Output::new("train", &rows, text))
}

pub fn predict(r: &Resolved, text_arg: Option<&str>, input: Option<&Path>) -> Result<Output, CliError> {
    let (prefix, text) = match (text_arg, input) {
        (Some(t), _) => ("input".to_string(), t.to_string()),
        (None, Some(p)) => (
            p.file_stem().map_or("input".into(), |s| s.to_string_lossy().into_owned()),
            std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?,
        ),
        (None, None) => return Err(CliError::usage("predict needs --text or --input")),
    };
    let project = r.open_project()?;
    let registry = project.load_models()?;
    let router = r.router.clone().unwrap_or_else(|| ExpertRouter::from_registry(&registry));
    let paths = if r.paths.is_empty() {
        router.routes.keys().cloned().collect()
    } else {
        r.paths.clone()
    };
    if paths.is_empty() {
        return Err(CliError::usage("no trained models; run `train` first or pass --paths with a router"));
    }
    let units = predict_units(&prefix, &text, r.level, &paths, &router, &registry, |id| {
        project.instance(id).map(|i| i.text.clone())
    })?;
    let mut summary = String::new();
    for u in &units {
        let labels: Vec<String> = u
            .predictions
            .iter()
            .map(|p| format!("{}={} ({:.3})", p.prediction.label_path, p.prediction.value, p.prediction.score))
            .collect();
        let _ = writeln!(summary, "[{}] {}  {}", u.index, labels.join(" "), u.text);
    }
    let value = json!({"level": r.level, "units": units});
    Ok(Output::new("predict", &value, summary))
}

fn cv_text(cv: &CvResult) -> String {
    let mut text = format!("{} on {} ({} folds):", cv.name(), cv.label_path, cv.k);
    for m in [Metric::Accuracy, Metric::MacroF1] {
        if let Some(s) = cv.summary.get(&m) {
            let _ = write!(text, " {m} {s};");
        }
    }
    text.pop();
    text.push('\n');
    for f in cv.flags() {
        let _ = writeln!(text, "  flagged {f}");
    }
    text
}

pub fn evaluate_cv(r: &Resolved) -> Result<Output, CliError> {
    let project = r.open_project()?;
    let corpus = merge(&r.corpora(&project)?);
    let mut results = Vec::new();
    for path in &r.paths {
        for spec in &r.models {
            results.push(cross_validate(r, &project, &corpus, path, spec)?);
        }
    }
    let text = results.iter().map(cv_text).collect();
    Ok(Output::new("evaluate-cv", &results, text))
}

#[derive(Serialize)]
struct PathComparison {
    path: String,
    report: ComparisonReport,
    cv: Vec<CvResult>,
}

pub fn compare(r: &Resolved) -> Result<Output, CliError> {
    if r.models.len() < 2 {
        return Err(CliError::usage("compare needs at least two models"));
    }
    let project = r.open_project()?;
    let corpora = r.corpora(&project)?;
    let mut comparisons = Vec::new();
    let mut text = String::new();
    let mut files = Vec::new();
    for path in &r.paths {
        let mut cv = Vec::new();
        for corpus in &corpora {
            for spec in &r.models {
                cv.push(cross_validate(r, &project, corpus, path, spec)?);
            }
        }
        let table = if corpora.len() > 1 {
            PerformanceTable::from_datasets(&cv, Metric::MacroF1)?
        } else {
            PerformanceTable::from_folds(&cv, Metric::MacroF1)?
        };
        let report = compare_classifiers(table, ComparisonOptions { iman_davenport: true })?;
        let _ = writeln!(text, "# {path}");
        text.push_str(&report.to_text());
        files.push((format!("compare.{}.csv", file_key(path)), report.table.to_csv()));
        comparisons.push(PathComparison {
            path: path.to_string(),
            report,
            cv,
        });
    }
    let mut out = Output::new("compare", &comparisons, text);
    for (name, body) in files {
        out = out.with_file(&name, body);
    }
    Ok(out)
}

pub fn importance(r: &Resolved, method: MethodArg, repeats: usize, top: usize) -> Result<Output, CliError> {
    let project = r.open_project()?;
    let corpus = merge(&r.corpora(&project)?);
    let resources = r.resources();
    let mut rows = Vec::new();
    let mut text = String::new();
    for path in &r.paths {
        let g = gold(&project, &corpus, path, r)?;
        let labelled = corpus.labelled_subset(&g.labels);
        let plan = stratified_folds(&labelled, &g.labels, r.k, r.seed, path)?;
        for spec in &r.models {
            // The first fold is held out for validation.
            let artifact = fit_fold(spec, &resources, &labelled, &g.labels, &plan, 0)?;
            let names = artifact.encoder.column_names();
            let (_, held_out) = plan.split(&labelled, 0);
            let report: ImportanceReport = match method {
                MethodArg::Coefficients => linear_coefficients(&artifact.model, &names)?,
                MethodArg::Permutation => {
                    let x = held_out
                        .iter()
                        .map(|i| artifact.encode(&i.id, &i.text))
                        .collect::<selfscope_core::Result<Vec<_>>>()?;
                    let y: Vec<bool> = held_out.iter().map(|i| g.labels[&i.id]).collect();
                    let options = PermutationOptions {
                        metric: Metric::MacroF1,
                        repeats,
                        seed: r.seed,
                    };
                    permutation_importance(&artifact.model, &x, &y, &names, options)?
                }
            };
            let _ = writeln!(text, "# {path} {} (validation = {} instances)", spec.name(), held_out.len());
            text.push_str(&report.to_text(top));
            rows.push(json!({
                "path": path.to_string(),
                "model": spec.name(),
                "validation": held_out.len(),
                "report": report,
            }));
        }
    }
    Ok(Output::new("importance", &rows, text))
}

#[derive(Serialize)]
struct BiasRow {
    path: String,
    model: String,
    report: BiasReport,
}

pub fn bias(r: &Resolved) -> Result<Output, CliError> {
    let project = r.open_project()?;
    let corpus = merge(&r.corpora(&project)?);
    let set = r.substitutions.clone().unwrap_or_else(SubstitutionSet::demo);
    let pairs = generate_minimal_pairs(corpus.eligible().map(|i| (i.id.as_str(), i.text.as_str())), &set);
    if pairs.is_empty() {
        return Err(CliError::usage("no instance contains a substitutable token"));
    }
    let resources = r.resources();
    let mut rows = Vec::new();
    let mut text = String::new();
    for path in &r.paths {
        let g = gold(&project, &corpus, path, r)?;
        let ex = examples(&corpus, &g);
        for spec in &r.models {
            let artifact = ModelArtifact::fit(spec, path, &resources, &ex)?;
            let report = evaluate_artifact(&artifact, &pairs)?;
            let _ = writeln!(text, "# {}", spec.name());
            text.push_str(&report.to_text());
            rows.push(BiasRow {
                path: path.to_string(),
                model: spec.name(),
                report,
            });
        }
    }
    Ok(Output::new("bias", &rows, text))
}
