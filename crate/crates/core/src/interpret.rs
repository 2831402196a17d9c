//! Explanations for trained models: coefficient rankings, exact linear
//! attributions, permutation importance and retrieval evidence.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluate::{metric_value, Metric};
use crate::features::{fingerprint_json, FeatureVector};
use crate::models::{ModelArtifact, Prediction, TrainedModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LinearCoefficients,
    PermutationImportance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: String,
    pub value: f64,
    /// Competition rank: tied values share the smallest rank.
    pub rank: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub method: Method,
    pub features: Vec<RankedFeature>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub metric: Option<Metric>,
    pub model_fingerprint: String,
}

pub fn model_fingerprint(model: &TrainedModel) -> String {
    fingerprint_json(model)
}

/// Sorts by `key` descending, then by name, and assigns competition ranks.
fn rank_by(mut items: Vec<(String, f64)>, key: impl Fn(f64) -> f64) -> Vec<RankedFeature> {
    items.sort_by(|a, b| key(b.1).total_cmp(&key(a.1)).then_with(|| a.0.cmp(&b.0)));
    let mut out: Vec<RankedFeature> = Vec::with_capacity(items.len());
    for (i, (feature, value)) in items.into_iter().enumerate() {
        let rank = match out.last() {
            Some(prev) if key(prev.value) == key(value) => prev.rank,
            _ => i + 1,
        };
        out.push(RankedFeature { feature, value, rank });
    }
    out
}

fn check_names(model: &TrainedModel, names: &[String]) -> Result<()> {
    if names.len() != model.dim {
        return Err(Error::DimensionMismatch {
            expected: model.dim,
            actual: names.len(),
        });
    }
    Ok(())
}

/// Signed weights ranked by magnitude.
pub fn linear_coefficients(model: &TrainedModel, names: &[String]) -> Result<ImportanceReport> {
    let (weights, _) = model.linear().ok_or_else(|| Error::WrongFamily {
        operation: "linear coefficients",
        family: model.family().to_string(),
    })?;
    check_names(model, names)?;
    let items = names.iter().cloned().zip(weights.iter().copied()).collect();
    Ok(ImportanceReport {
        method: Method::LinearCoefficients,
        features: rank_by(items, f64::abs),
        seed: None,
        repeats: None,
        metric: None,
        model_fingerprint: model_fingerprint(model),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Contribution {
    pub feature: String,
    pub value: f64,
    pub phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributionReport {
    pub instance_id: String,
    /// Linear score `w·μ + b` at the background means.
    pub expected_score: f64,
    /// Linear score `w·x + b`.
    pub score: f64,
    /// Non-zero contributions ordered by |φ| descending.
    pub contributions: Vec<Contribution>,
    pub model_fingerprint: String,
}

impl AttributionReport {
    pub fn total(&self) -> f64 {
        self.contributions.iter().map(|c| c.phi).sum()
    }
}

/// `φ_i = w_i (x_i − μ_i)`, so that `Σφ = score(x) − score(μ)`.
pub fn linear_attribution(
    model: &TrainedModel,
    instance_id: &str,
    x: &FeatureVector,
    background: &[f64],
    names: &[String],
) -> Result<AttributionReport> {
    let (weights, bias) = model.linear().ok_or_else(|| Error::WrongFamily {
        operation: "linear attribution",
        family: model.family().to_string(),
    })?;
    check_names(model, names)?;
    for actual in [x.dim(), background.len()] {
        if actual != model.dim {
            return Err(Error::DimensionMismatch {
                expected: model.dim,
                actual,
            });
        }
    }
    let dense = x.to_dense();
    let mut contributions: Vec<Contribution> = (0..model.dim)
        .map(|i| Contribution {
            feature: names[i].clone(),
            value: dense[i],
            phi: weights[i] * (dense[i] - background[i]),
        })
        .filter(|c| c.phi != 0.0)
        .collect();
    contributions.sort_by(|a, b| b.phi.abs().total_cmp(&a.phi.abs()).then_with(|| a.feature.cmp(&b.feature)));
    let expected_score = weights.iter().zip(background).map(|(w, m)| w * m).sum::<f64>() + bias;
    Ok(AttributionReport {
        instance_id: instance_id.to_string(),
        expected_score,
        score: x.dot(weights) + bias,
        contributions,
        model_fingerprint: model_fingerprint(model),
    })
}

pub const MIN_VALIDATION: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationOptions {
    pub metric: Metric,
    pub repeats: usize,
    pub seed: u64,
}

impl Default for PermutationOptions {
    fn default() -> Self {
        PermutationOptions {
            metric: Metric::MacroF1,
            repeats: 20,
            seed: 0,
        }
    }
}

fn predict_all(model: &TrainedModel, x: &[FeatureVector]) -> Result<Vec<bool>> {
    x.iter().map(|v| model.predict(v)).collect()
}

/// Metric drop when one column is shuffled across the validation set,
/// averaged over repeats. Each (feature, repeat) pair draws from its own
/// stream of the seeded generator, so results do not depend on scheduling.
pub fn permutation_importance(
    model: &TrainedModel,
    x: &[FeatureVector],
    y: &[bool],
    names: &[String],
    options: PermutationOptions,
) -> Result<ImportanceReport> {
    check_names(model, names)?;
    if x.len() != y.len() {
        return Err(Error::invalid(format!("{} vectors but {} labels", x.len(), y.len())));
    }
    if x.len() < MIN_VALIDATION {
        return Err(Error::invalid(format!(
            "permutation importance needs at least {MIN_VALIDATION} validation instances, got {}",
            x.len()
        )));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::MetricUndefined(format!(
            "{} on a single-class validation set",
            options.metric
        )));
    }
    if options.repeats == 0 {
        return Err(Error::invalid("repeats must be at least 1"));
    }
    let baseline = metric_value(options.metric, y, &predict_all(model, x)?)?;
    let importances = (0..model.dim)
        .into_par_iter()
        .map(|j| {
            let column: Vec<f64> = x.iter().map(|v| v.get(j)).collect();
            if column.iter().all(|&v| v == column[0]) {
                return Ok(0.0);
            }
            let mut drop = 0.0;
            for r in 0..options.repeats {
                let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
                rng.set_stream(((j as u64) << 20) | r as u64);
                let mut shuffled = column.clone();
                shuffled.shuffle(&mut rng);
                let permuted: Vec<FeatureVector> =
                    x.iter().zip(&shuffled).map(|(v, &s)| v.with_value(j, s)).collect();
                drop += baseline - metric_value(options.metric, y, &predict_all(model, &permuted)?)?;
            }
            Ok(drop / options.repeats as f64)
        })
        .collect::<Result<Vec<f64>>>()?;
    let items = names.iter().cloned().zip(importances).collect();
    Ok(ImportanceReport {
        method: Method::PermutationImportance,
        features: rank_by(items, |v| v),
        seed: Some(options.seed),
        repeats: Some(options.repeats),
        metric: Some(options.metric),
        model_fingerprint: model_fingerprint(model),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRow {
    pub instance_id: String,
    pub label: bool,
    pub similarity: f64,
    pub excerpt: String,
}

pub const EXCERPT_CHARS: usize = 80;

fn excerpt(text: &str) -> String {
    let mut chars = text.chars();
    let head: String = chars.by_ref().take(EXCERPT_CHARS).collect();
    if chars.next().is_some() {
        format!("{head}...")
    } else {
        head
    }
}

/// Neighbours of a retrieval prediction with text excerpts from `lookup`.
pub fn retrieval_evidence(
    prediction: &Prediction,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<Vec<EvidenceRow>> {
    let neighbors = prediction.evidence.as_ref().ok_or_else(|| Error::WrongFamily {
        operation: "retrieval evidence",
        family: prediction.expert.family.to_string(),
    })?;
    Ok(neighbors
        .iter()
        .map(|n| EvidenceRow {
            instance_id: n.instance_id.clone(),
            label: n.label,
            similarity: n.similarity,
            excerpt: lookup(&n.instance_id).map(|t| excerpt(&t)).unwrap_or_default(),
        })
        .collect())
}

/// Evidence attached to a served prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Explanation {
    Neighbors { rows: Vec<EvidenceRow> },
    Attributions { report: AttributionReport },
}

/// Neighbours for retrieval experts, the `top` largest attributions for
/// linear ones, nothing for Naive Bayes.
pub fn explain(
    artifact: &ModelArtifact,
    prediction: &Prediction,
    text: &str,
    lookup: impl Fn(&str) -> Option<String>,
    top: usize,
) -> Result<Option<Explanation>> {
    if prediction.evidence.is_some() {
        return Ok(Some(Explanation::Neighbors {
            rows: retrieval_evidence(prediction, lookup)?,
        }));
    }
    if artifact.model.linear().is_none() {
        return Ok(None);
    }
    let x = artifact.encode(&prediction.instance_id, text)?;
    let mut report = linear_attribution(
        &artifact.model,
        &prediction.instance_id,
        &x,
        &artifact.background,
        &artifact.encoder.column_names(),
    )?;
    report.contributions.truncate(top);
    Ok(Some(Explanation::Attributions { report }))
}

impl ImportanceReport {
    pub fn top(&self, n: usize) -> &[RankedFeature] {
        &self.features[..n.min(self.features.len())]
    }

    pub fn to_text(&self, limit: usize) -> String {
        let rows = self.top(limit);
        let width = rows.iter().map(|r| r.feature.len()).max().unwrap_or(7).max(7);
        let mut out = String::new();
        let _ = writeln!(out, "# {:?} model={}", self.method, self.model_fingerprint);
        let _ = writeln!(out, "{:>4}  {:<width$}  {:>12}", "rank", "feature", "value");
        for r in rows {
            let _ = writeln!(out, "{:>4}  {:<width$}  {:>12.6}", r.rank, r.feature, r.value);
        }
        out
    }
}

impl AttributionReport {
    pub fn to_text(&self, limit: usize) -> String {
        let rows = &self.contributions[..limit.min(self.contributions.len())];
        let width = rows.iter().map(|r| r.feature.len()).max().unwrap_or(7).max(7);
        let mut out = String::new();
        let _ = writeln!(
            out,
            "# {} score={:.6} expected={:.6}",
            self.instance_id, self.score, self.expected_score
        );
        let _ = writeln!(out, "{:<width$}  {:>12}  {:>12}", "feature", "value", "phi");
        for c in rows {
            let _ = writeln!(out, "{:<width$}  {:>12.6}  {:>12.6}", c.feature, c.value, c.phi);
        }
        out
    }
}

pub fn evidence_to_text(rows: &[EvidenceRow]) -> String {
    let mut out = String::new();
    let width = rows.iter().map(|r| r.instance_id.len()).max().unwrap_or(8).max(8);
    let _ = writeln!(out, "{:<width$}  {:<7}  {:>10}  excerpt", "instance", "label", "similarity");
    for r in rows {
        let label = if r.label { "present" } else { "absent" };
        let _ = writeln!(out, "{:<width$}  {label:<7}  {:>10.6}  {}", r.instance_id, r.similarity, r.excerpt);
    }
    out
}
