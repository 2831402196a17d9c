//! Per-annotator judgments, Cohen's κ agreement analytics, and gold-label
//! adjudication.
//!
//! Records are keyed by `(instance_id, annotator_id, path)`; writing the same
//! key again supersedes the earlier judgment. Records whose origin is an
//! external model are ordinary records with an origin flag, but an instance
//! whose only judgments are external is marked synthetic and kept out of
//! evaluation splits.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::BufRead;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::ontology::{is_positive, LabelPath, Ontology};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Human,
    ExternalModel,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub instance_id: String,
    pub annotator_id: String,
    pub path: LabelPath,
    pub value: String,
    pub timestamp: DateTime<Utc>,
    pub origin: Origin,
}

pub type RecordKey = (String, String, LabelPath);

impl AnnotationRecord {
    pub fn key(&self) -> RecordKey {
        (
            self.instance_id.clone(),
            self.annotator_id.clone(),
            self.path.clone(),
        )
    }
}

/// An explicit adjudicator decision for one instance on one path. `version`
/// is the label-state token the adjudicator saw.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationDecision {
    pub instance_id: String,
    pub path: LabelPath,
    pub value: String,
    pub adjudicator_id: String,
    pub version: String,
    pub timestamp: DateTime<Utc>,
}

/// In-memory annotation state with last-write-wins semantics.
#[derive(Debug, Clone, Default)]
pub struct AnnotationStore {
    records: BTreeMap<RecordKey, AnnotationRecord>,
    decisions: BTreeMap<(String, LabelPath), AdjudicationDecision>,
}

impl AnnotationStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts or supersedes a record. Returns the record it replaced.
    pub fn upsert(&mut self, record: AnnotationRecord) -> Option<AnnotationRecord> {
        self.records.insert(record.key(), record)
    }

    pub fn decide(&mut self, decision: AdjudicationDecision) {
        self.decisions
            .insert((decision.instance_id.clone(), decision.path.clone()), decision);
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> impl Iterator<Item = &AnnotationRecord> {
        self.records.values()
    }

    pub fn records_on<'a>(
        &'a self,
        path: &LabelPath,
    ) -> impl Iterator<Item = &'a AnnotationRecord> + use<'a> {
        let path = path.clone();
        self.records.values().filter(move |r| r.path == path)
    }

    pub fn decisions(&self) -> impl Iterator<Item = &AdjudicationDecision> {
        self.decisions.values()
    }

    pub fn decision(&self, instance_id: &str, path: &LabelPath) -> Option<&AdjudicationDecision> {
        self.decisions.get(&(instance_id.to_string(), path.clone()))
    }

    pub fn annotators(&self) -> BTreeMap<String, BTreeSet<Origin>> {
        let mut out: BTreeMap<String, BTreeSet<Origin>> = BTreeMap::new();
        for r in self.records.values() {
            out.entry(r.annotator_id.clone()).or_default().insert(r.origin);
        }
        out
    }

    /// Votes per instance on `path`: instance → (annotator → record).
    pub fn votes<'a>(
        &'a self,
        path: &LabelPath,
    ) -> BTreeMap<&'a str, BTreeMap<&'a str, &'a AnnotationRecord>> {
        let mut out: BTreeMap<&str, BTreeMap<&str, &AnnotationRecord>> = BTreeMap::new();
        for r in self.records_on(path) {
            out.entry(r.instance_id.as_str())
                .or_default()
                .insert(r.annotator_id.as_str(), r);
        }
        out
    }

    /// Records in the annotation export format, one JSON object per line, in
    /// key order.
    pub fn export_jsonl(&self) -> String {
        let mut out = String::new();
        for record in self.records.values() {
            out.push_str(&serde_json::to_string(record).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    /// Token identifying the current label state of one instance on one
    /// path; changes whenever any annotator's label there changes.
    pub fn label_state_token(&self, instance_id: &str, path: &LabelPath) -> String {
        let mut hasher = Sha256::new();
        for r in self.records_on(path).filter(|r| r.instance_id == instance_id) {
            hasher.update(r.annotator_id.as_bytes());
            hasher.update([0]);
            hasher.update(r.value.as_bytes());
            hasher.update([0]);
        }
        hex::encode(&hasher.finalize()[..8])
    }

    /// Instances where annotators disagree on `path` and no decision has
    /// been made for the current label state.
    pub fn disagreements(&self, path: &LabelPath) -> Vec<Disagreement> {
        let mut out = Vec::new();
        for (instance, votes) in self.votes(path) {
            let distinct: BTreeSet<&str> = votes.values().map(|r| r.value.as_str()).collect();
            if distinct.len() < 2 {
                continue;
            }
            let version = self.label_state_token(instance, path);
            if self
                .decision(instance, path)
                .is_some_and(|d| d.version == version)
            {
                continue;
            }
            out.push(Disagreement {
                instance_id: instance.to_string(),
                path: path.clone(),
                labels: votes
                    .iter()
                    .map(|(a, r)| (a.to_string(), r.value.clone()))
                    .collect(),
                version,
            });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Disagreement {
    pub instance_id: String,
    pub path: LabelPath,
    pub labels: BTreeMap<String, String>,
    pub version: String,
}

/// κ together with its components.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Kappa {
    pub kappa: f64,
    pub observed: f64,
    pub chance: f64,
    pub items: usize,
}

/// Cohen's κ between two label sequences over the union of their
/// categories, with chance agreement from the product of marginals.
pub fn cohen_kappa<T: Ord>(a: &[T], b: &[T]) -> Result<f64> {
    kappa_detail(a, b).map(|k| k.kappa)
}

pub fn kappa_detail<T: Ord>(a: &[T], b: &[T]) -> Result<Kappa> {
    if a.len() != b.len() {
        return Err(Error::invalid(format!(
            "label sequences differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::invalid("cannot compute kappa of empty sequences"));
    }
    let n = a.len() as f64;
    let mut marginals: BTreeMap<&T, (usize, usize)> = BTreeMap::new();
    let mut agree = 0usize;
    for (x, y) in a.iter().zip(b) {
        marginals.entry(x).or_default().0 += 1;
        marginals.entry(y).or_default().1 += 1;
        if x == y {
            agree += 1;
        }
    }
    let observed = agree as f64 / n;
    let chance = marginals
        .values()
        .map(|&(ca, cb)| (ca as f64 / n) * (cb as f64 / n))
        .sum::<f64>();
    let kappa = if chance == 1.0 {
        if observed == 1.0 {
            1.0
        } else {
            return Err(Error::UndefinedKappa { observed });
        }
    } else {
        (observed - chance) / (1.0 - chance)
    };
    Ok(Kappa {
        kappa,
        observed,
        chance,
        items: a.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairStatus {
    Ok,
    InsufficientOverlap,
    Undefined,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAgreement {
    pub first: String,
    pub second: String,
    pub items: usize,
    pub status: PairStatus,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub observed: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub chance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub path: LabelPath,
    pub annotators: Vec<String>,
    /// Symmetric κ matrix in `annotators` order; `None` marks a flagged cell.
    pub matrix: Vec<Vec<Option<f64>>>,
    pub pairs: Vec<PairAgreement>,
    /// Mean κ over the valid pairs: the path-level summary.
    pub mean_kappa: Option<f64>,
    pub instances: usize,
}

/// Pairwise κ over co-annotated instances on `path`.
pub fn agreement_matrix(store: &AnnotationStore, path: &LabelPath) -> Result<AgreementReport> {
    let votes = store.votes(path);
    let annotators: Vec<String> = votes
        .values()
        .flat_map(|v| v.keys().map(|a| a.to_string()))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if annotators.len() < 2 {
        return Err(Error::invalid(format!(
            "agreement on \"{path}\" needs at least two annotators, found {}",
            annotators.len()
        )));
    }
    let n = annotators.len();
    let mut matrix = vec![vec![None; n]; n];
    let mut pairs = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let (ai, aj) = (annotators[i].as_str(), annotators[j].as_str());
            let mut left = Vec::new();
            let mut right = Vec::new();
            for v in votes.values() {
                if let (Some(x), Some(y)) = (v.get(ai), v.get(aj)) {
                    left.push(x.value.as_str());
                    right.push(y.value.as_str());
                }
            }
            let pair = if left.is_empty() {
                PairAgreement {
                    first: ai.into(),
                    second: aj.into(),
                    items: 0,
                    status: PairStatus::InsufficientOverlap,
                    kappa: None,
                    observed: None,
                    chance: None,
                }
            } else {
                match kappa_detail(&left, &right) {
                    Ok(k) => {
                        matrix[i][j] = Some(k.kappa);
                        matrix[j][i] = Some(k.kappa);
                        PairAgreement {
                            first: ai.into(),
                            second: aj.into(),
                            items: k.items,
                            status: PairStatus::Ok,
                            kappa: Some(k.kappa),
                            observed: Some(k.observed),
                            chance: Some(k.chance),
                        }
                    }
                    Err(_) => PairAgreement {
                        first: ai.into(),
                        second: aj.into(),
                        items: left.len(),
                        status: PairStatus::Undefined,
                        kappa: None,
                        observed: None,
                        chance: None,
                    },
                }
            };
            pairs.push(pair);
        }
        matrix[i][i] = Some(1.0);
    }
    let valid: Vec<f64> = pairs.iter().filter_map(|p| p.kappa).collect();
    let mean_kappa = (!valid.is_empty()).then(|| valid.iter().sum::<f64>() / valid.len() as f64);
    Ok(AgreementReport {
        path: path.clone(),
        annotators,
        matrix,
        pairs,
        mean_kappa,
        instances: votes.len(),
    })
}

impl AgreementReport {
    pub fn to_text(&self) -> String {
        let width = self.annotators.iter().map(String::len).max().unwrap_or(4).max(8);
        let mut out = format!("agreement on {} ({} instances)\n", self.path, self.instances);
        out.push_str(&format!("{:width$}", ""));
        for a in &self.annotators {
            out.push_str(&format!("  {a:>width$}"));
        }
        out.push('\n');
        for (a, row) in self.annotators.iter().zip(&self.matrix) {
            out.push_str(&format!("{a:width$}"));
            for cell in row {
                match cell {
                    Some(k) => out.push_str(&format!("  {k:>width$.4}")),
                    None => out.push_str(&format!("  {:>width$}", "n/a")),
                }
            }
            out.push('\n');
        }
        for p in &self.pairs {
            match p.status {
                PairStatus::Ok => {}
                PairStatus::InsufficientOverlap => out.push_str(&format!(
                    "{} vs {}: insufficient overlap\n",
                    p.first, p.second
                )),
                PairStatus::Undefined => out.push_str(&format!(
                    "{} vs {}: kappa undefined over {} items\n",
                    p.first, p.second, p.items
                )),
            }
        }
        if let Some(mean) = self.mean_kappa {
            out.push_str(&format!("mean kappa: {mean:.4}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Majority,
    MajorityWithAdjudicator,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdjudicationPolicy {
    pub strategy: Strategy,
    #[serde(default)]
    pub adjudicator_id: Option<String>,
}

impl AdjudicationPolicy {
    pub fn majority() -> Self {
        AdjudicationPolicy {
            strategy: Strategy::Majority,
            adjudicator_id: None,
        }
    }

    pub fn with_adjudicator(id: impl Into<String>) -> Self {
        AdjudicationPolicy {
            strategy: Strategy::MajorityWithAdjudicator,
            adjudicator_id: Some(id.into()),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Adjudication {
    pub gold: BTreeMap<String, String>,
    pub unresolved: Vec<String>,
}

/// Resolves one label per instance from votes.
///
/// A label with more than half the votes wins. Otherwise, when the policy
/// names an adjudicator whose own vote is among the most-voted labels, that
/// vote decides; anything else is left unresolved.
pub fn adjudicate_votes<'a>(
    votes: &BTreeMap<&'a str, BTreeMap<&'a str, &'a str>>,
    policy: &AdjudicationPolicy,
) -> Result<Adjudication> {
    let adjudicator = match policy.strategy {
        Strategy::Majority => None,
        Strategy::MajorityWithAdjudicator => Some(policy.adjudicator_id.as_deref().ok_or_else(|| {
            Error::InvalidPolicy("majority_with_adjudicator requires an adjudicator_id".into())
        })?),
    };
    let mut out = Adjudication::default();
    for (&instance, by_annotator) in votes {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for &value in by_annotator.values() {
            *counts.entry(value).or_default() += 1;
        }
        let total = by_annotator.len();
        let top = counts.values().copied().max().unwrap_or(0);
        let leaders: Vec<&str> = counts
            .iter()
            .filter(|(_, &c)| c == top)
            .map(|(&v, _)| v)
            .collect();
        let decided = if leaders.len() == 1 && 2 * top > total {
            Some(leaders[0])
        } else {
            adjudicator
                .and_then(|a| by_annotator.get(a).copied())
                .filter(|v| leaders.contains(v))
        };
        match decided {
            Some(value) => {
                out.gold.insert(instance.to_string(), value.to_string());
            }
            None => out.unresolved.push(instance.to_string()),
        }
    }
    Ok(out)
}

/// Adjudicates every instance with at least one record on `path`. Explicit
/// adjudicator decisions made for the current label state take precedence.
pub fn adjudicate(
    store: &AnnotationStore,
    path: &LabelPath,
    policy: &AdjudicationPolicy,
) -> Result<Adjudication> {
    let votes: BTreeMap<&str, BTreeMap<&str, &str>> = store
        .votes(path)
        .into_iter()
        .map(|(i, v)| (i, v.into_iter().map(|(a, r)| (a, r.value.as_str())).collect()))
        .collect();
    let mut result = adjudicate_votes(&votes, policy)?;
    apply_decisions(store, path, &mut result);
    Ok(result)
}

fn apply_decisions(store: &AnnotationStore, path: &LabelPath, result: &mut Adjudication) {
    for decision in store.decisions().filter(|d| &d.path == path) {
        if store.label_state_token(&decision.instance_id, path) == decision.version {
            result
                .gold
                .insert(decision.instance_id.clone(), decision.value.clone());
            result.unresolved.retain(|i| i != &decision.instance_id);
        }
    }
}

/// Binarized gold labels for training and evaluation on one path.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldSet {
    pub path: Option<LabelPath>,
    pub labels: BTreeMap<String, bool>,
    pub unresolved: Vec<String>,
}

/// Gold labels for `path`. An instance with any human judgment is
/// adjudicated over human votes only; an instance judged only by external
/// models is adjudicated over those votes and must already be flagged
/// synthetic in `corpus` (see [`apply_contamination_guard`]).
pub fn gold_labels(
    store: &AnnotationStore,
    corpus: &Corpus,
    path: &LabelPath,
    policy: &AdjudicationPolicy,
) -> Result<GoldSet> {
    let mut human: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
    let mut external: BTreeMap<&str, BTreeMap<&str, &str>> = BTreeMap::new();
    for (instance, votes) in store.votes(path) {
        if corpus.get(instance).is_none() {
            continue;
        }
        let has_human = votes.values().any(|r| r.origin == Origin::Human);
        let target = if has_human { &mut human } else { &mut external };
        target.insert(
            instance,
            votes
                .iter()
                .filter(|(_, r)| !has_human || r.origin == Origin::Human)
                .map(|(&a, r)| (a, r.value.as_str()))
                .collect(),
        );
    }
    for &instance in external.keys() {
        let flagged = corpus.get(instance).is_some_and(|i| i.synthetic_annotation);
        if !flagged {
            return Err(Error::invalid(format!(
                "instance \"{instance}\" has only external-model labels but is not flagged synthetic"
            )));
        }
    }
    let mut result = adjudicate_votes(&human, policy)?;
    let synthetic = adjudicate_votes(&external, &AdjudicationPolicy::majority())?;
    result.gold.extend(synthetic.gold);
    result.unresolved.extend(synthetic.unresolved);
    apply_decisions(store, path, &mut result);
    result.unresolved.sort();
    Ok(GoldSet {
        path: Some(path.clone()),
        labels: result
            .gold
            .iter()
            .map(|(i, v)| (i.clone(), is_positive(path, v)))
            .collect(),
        unresolved: result.unresolved,
    })
}

/// Flags every instance whose only records are external-model judgments as
/// synthetic. Returns the ids newly flagged.
pub fn apply_contamination_guard(corpus: &mut Corpus, store: &AnnotationStore) -> Vec<String> {
    let mut has_human: HashSet<&str> = HashSet::new();
    let mut has_external: BTreeSet<&str> = BTreeSet::new();
    for r in store.records() {
        match r.origin {
            Origin::Human => {
                has_human.insert(&r.instance_id);
            }
            Origin::ExternalModel => {
                has_external.insert(&r.instance_id);
            }
        }
    }
    let mut flagged = Vec::new();
    for id in has_external.difference(&has_human.iter().copied().collect()) {
        if let Some(instance) = corpus.get_mut(id) {
            if !instance.synthetic_annotation {
                instance.synthetic_annotation = true;
                flagged.push(id.to_string());
            }
        }
    }
    flagged
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImportSummary {
    pub imported: usize,
    pub errors: Vec<RowError>,
    pub flagged_synthetic: Vec<String>,
}

#[derive(Deserialize)]
struct ImportRow {
    instance_id: String,
    #[serde(default)]
    annotator_id: Option<String>,
    path: String,
    value: String,
    #[serde(default)]
    timestamp: Option<DateTime<Utc>>,
    #[serde(default)]
    origin: Option<Origin>,
}

/// Options for reading annotation export rows into a store.
#[derive(Debug, Clone)]
pub struct ImportOptions<'a> {
    /// Overrides each row's annotator id when set.
    pub annotator_id: Option<&'a str>,
    /// Overrides each row's origin when set.
    pub origin: Option<Origin>,
    /// Timestamp for rows that carry none.
    pub default_timestamp: DateTime<Utc>,
}

/// Imports rows in the annotation export format. Row-level problems
/// (malformed JSON, unknown instances, paths or values) are collected and
/// the remaining rows are still imported.
pub fn import_annotations(
    store: &mut AnnotationStore,
    ontology: &Ontology,
    corpus: &Corpus,
    reader: impl BufRead,
    options: &ImportOptions<'_>,
) -> Result<ImportSummary> {
    let mut summary = ImportSummary::default();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index + 1;
        let line = line.map_err(|e| Error::Line {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        match parse_row(&line, ontology, corpus, options) {
            Ok(record) => {
                store.upsert(record);
                summary.imported += 1;
            }
            Err(message) => summary.errors.push(RowError {
                line: line_no,
                message,
            }),
        }
    }
    Ok(summary)
}

fn parse_row(
    line: &str,
    ontology: &Ontology,
    corpus: &Corpus,
    options: &ImportOptions<'_>,
) -> std::result::Result<AnnotationRecord, String> {
    let row: ImportRow = serde_json::from_str(line).map_err(|e| format!("malformed row: {e}"))?;
    if corpus.get(&row.instance_id).is_none() {
        return Err(format!("unknown instance id \"{}\"", row.instance_id));
    }
    let path = ontology.resolve(&row.path).map_err(|e| e.to_string())?;
    let domain = ontology.value_domain(&path).map_err(|e| e.to_string())?;
    if !domain.contains(&row.value) {
        return Err(format!("value \"{}\" is not valid for path \"{path}\"", row.value));
    }
    let annotator_id = options
        .annotator_id
        .map(str::to_string)
        .or(row.annotator_id)
        .ok_or("missing annotator_id")?;
    let origin = options.origin.or(row.origin).unwrap_or(Origin::Human);
    Ok(AnnotationRecord {
        instance_id: row.instance_id,
        annotator_id,
        path,
        value: row.value,
        timestamp: row.timestamp.unwrap_or(options.default_timestamp),
        origin,
    })
}

/// Imports judgments produced by an external model under `annotator_id`,
/// then applies the contamination guard to `corpus`.
pub fn import_external_annotations(
    store: &mut AnnotationStore,
    ontology: &Ontology,
    corpus: &mut Corpus,
    reader: impl BufRead,
    annotator_id: &str,
    default_timestamp: DateTime<Utc>,
) -> Result<ImportSummary> {
    if store
        .annotators()
        .get(annotator_id)
        .is_some_and(|origins| origins.contains(&Origin::Human))
    {
        return Err(Error::invalid(format!(
            "annotator id \"{annotator_id}\" already belongs to a human annotator"
        )));
    }
    let options = ImportOptions {
        annotator_id: Some(annotator_id),
        origin: Some(Origin::ExternalModel),
        default_timestamp,
    };
    let mut summary = import_annotations(store, ontology, corpus, reader, &options)?;
    summary.flagged_synthetic = apply_contamination_guard(corpus, store);
    Ok(summary)
}
