//! Binary classifiers for one label path at a time.
//!
//! Families: Gaussian and multinomial naive Bayes, L2 logistic regression,
//! linear SVM and cosine k-NN retrieval. All training is deterministic
//! full-batch optimization, so identical inputs give identical parameters.
//! [`ExpertRouter`] maps label paths to model specs, and
//! [`route_and_predict`] invokes one expert per requested path.

use std::collections::BTreeMap;
use std::fmt;
use std::hash::Hasher;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{
    column_means, fingerprint_json, preprocess, FeatureConfig, FeatureKind, FeatureSpace,
    FeatureVector, Lexicon,
};
use crate::ontology::{LabelPath, Ontology, ABSENT, PRESENT};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NbGaussian,
    NbMultinomial,
    Logreg,
    LinearSvm,
    RetrievalKnn,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::NbGaussian,
        Family::NbMultinomial,
        Family::Logreg,
        Family::LinearSvm,
        Family::RetrievalKnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Family::NbGaussian => "nb_gaussian",
            Family::NbMultinomial => "nb_multinomial",
            Family::Logreg => "logreg",
            Family::LinearSvm => "linear_svm",
            Family::RetrievalKnn => "retrieval_knn",
        }
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Family::Logreg | Family::LinearSvm)
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown model family \"{s}\"")))
    }
}

/// Which representation a model consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSource {
    Learned,
    Lexicon,
    Hybrid,
    Embedding,
}

impl FeatureSource {
    pub fn kind(self) -> Option<FeatureKind> {
        match self {
            FeatureSource::Learned => Some(FeatureKind::Learned),
            FeatureSource::Lexicon => Some(FeatureKind::Lexicon),
            FeatureSource::Hybrid => Some(FeatureKind::Hybrid),
            FeatureSource::Embedding => None,
        }
    }
}

impl fmt::Display for FeatureSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind() {
            Some(k) => k.fmt(f),
            None => f.write_str("embedding"),
        }
    }
}

impl FromStr for FeatureSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "embedding" => Ok(FeatureSource::Embedding),
            other => Ok(match other.parse::<FeatureKind>()? {
                FeatureKind::Learned => FeatureSource::Learned,
                FeatureKind::Lexicon => FeatureSource::Lexicon,
                FeatureKind::Hybrid => FeatureSource::Hybrid,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyperparameters {
    /// L2 strength λ.
    pub lambda: f64,
    pub epochs: usize,
    /// Fixed step size; when absent a safe step is derived from the data.
    pub learning_rate: Option<f64>,
    pub k: usize,
    /// Similarity-weighted k-NN vote; `false` counts neighbours equally.
    pub weighted_vote: bool,
    /// Multinomial NB smoothing.
    pub alpha: f64,
    pub variance_floor: f64,
}

impl Default for Hyperparameters {
    fn default() -> Self {
        Hyperparameters {
            lambda: 1e-2,
            epochs: 200,
            learning_rate: None,
            k: 5,
            weighted_vote: true,
            alpha: 1.0,
            variance_floor: 1e-9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub family: Family,
    pub features: FeatureSource,
    #[serde(default)]
    pub hyperparameters: Hyperparameters,
    #[serde(default)]
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(family: Family, features: FeatureSource) -> Self {
        ModelSpec {
            family,
            features,
            hyperparameters: Hyperparameters::default(),
            seed: 0,
        }
    }

    /// Short name such as `logreg+lexicon`.
    pub fn name(&self) -> String {
        format!("{}+{}", self.family, self.features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub instance_id: String,
    pub label: bool,
    pub vector: FeatureVector,
    pub norm: f64,
}

/// Per-class arrays are indexed `[negative, positive]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Parameters {
    Gaussian {
        priors: [f64; 2],
        means: [Vec<f64>; 2],
        variances: [Vec<f64>; 2],
    },
    Multinomial {
        priors: [f64; 2],
        log_likelihoods: [Vec<f64>; 2],
    },
    Linear {
        weights: Vec<f64>,
        bias: f64,
    },
    Retrieval {
        entries: Vec<IndexEntry>,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMetadata {
    pub fold: Option<usize>,
    pub dataset: Option<String>,
    pub examples: usize,
    pub epochs_run: usize,
    pub final_loss: Option<f64>,
    /// Objective of the current iterate after each epoch.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub dim: usize,
    pub parameters: Parameters,
    pub metadata: TrainingMetadata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neighbor {
    pub instance_id: String,
    pub label: bool,
    pub similarity: f64,
}

/// Raw model output for one vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub positive: bool,
    /// Logreg / NB: probability of the positive class; SVM: margin;
    /// k-NN: positive minus negative vote weight.
    pub score: f64,
    pub evidence: Option<Vec<Neighbor>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub instance_id: String,
    pub label_path: LabelPath,
    pub value: String,
    pub score: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence: Option<Vec<Neighbor>>,
    pub expert: ModelSpec,
}

fn check_training(x: &[FeatureVector], y: &[bool]) -> Result<usize> {
    if x.is_empty() {
        return Err(Error::Training("empty training set".into()));
    }
    if x.len() != y.len() {
        return Err(Error::Training(format!(
            "{} feature vectors but {} labels",
            x.len(),
            y.len()
        )));
    }
    let dim = x[0].dim();
    if let Some(bad) = x.iter().find(|v| v.dim() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.dim(),
        });
    }
    Ok(dim)
}

fn class_counts(y: &[bool]) -> [usize; 2] {
    let pos = y.iter().filter(|&&v| v).count();
    [y.len() - pos, pos]
}

fn require_both_classes(y: &[bool]) -> Result<[usize; 2]> {
    let counts = class_counts(y);
    if counts.contains(&0) {
        return Err(Error::Training("training set contains a single class".into()));
    }
    Ok(counts)
}

pub fn train_nb_gaussian(x: &[FeatureVector], y: &[bool], hp: &Hyperparameters) -> Result<Parameters> {
    let dim = check_training(x, y)?;
    let counts = require_both_classes(y)?;
    let mut sums = [vec![0.0; dim], vec![0.0; dim]];
    for (v, &label) in x.iter().zip(y) {
        for &(j, value) in v.entries() {
            sums[label as usize][j] += value;
        }
    }
    let means: [Vec<f64>; 2] = [0, 1].map(|c| sums[c].iter().map(|s| s / counts[c] as f64).collect());
    let mut sq = [vec![0.0; dim], vec![0.0; dim]];
    for (v, &label) in x.iter().zip(y) {
        let c = label as usize;
        let dense = v.to_dense();
        for j in 0..dim {
            sq[c][j] += (dense[j] - means[c][j]).powi(2);
        }
    }
    let variances = [0, 1].map(|c| {
        sq[c]
            .iter()
            .map(|s| (s / counts[c] as f64).max(hp.variance_floor))
            .collect()
    });
    let n = y.len() as f64;
    Ok(Parameters::Gaussian {
        priors: [counts[0] as f64 / n, counts[1] as f64 / n],
        means,
        variances,
    })
}

pub fn train_nb_multinomial(x: &[FeatureVector], y: &[bool], hp: &Hyperparameters) -> Result<Parameters> {
    let dim = check_training(x, y)?;
    let counts = require_both_classes(y)?;
    if x.iter().flat_map(|v| v.entries()).any(|&(_, v)| v < 0.0) {
        return Err(Error::Training(
            "multinomial naive Bayes needs non-negative features".into(),
        ));
    }
    if hp.alpha <= 0.0 {
        return Err(Error::Training("smoothing alpha must be positive".into()));
    }
    let mut totals = [vec![0.0; dim], vec![0.0; dim]];
    for (v, &label) in x.iter().zip(y) {
        for &(j, value) in v.entries() {
            totals[label as usize][j] += value;
        }
    }
    let log_likelihoods = [0, 1].map(|c| {
        let mass: f64 = totals[c].iter().sum::<f64>() + hp.alpha * dim as f64;
        totals[c]
            .iter()
            .map(|t| ((t + hp.alpha) / mass).ln())
            .collect()
    });
    let n = y.len() as f64;
    Ok(Parameters::Multinomial {
        priors: [counts[0] as f64 / n, counts[1] as f64 / n],
        log_likelihoods,
    })
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn margins(x: &[FeatureVector], weights: &[f64], bias: f64) -> Vec<f64> {
    x.iter().map(|v| v.dot(weights) + bias).collect()
}

fn mean_squared_norm(x: &[FeatureVector]) -> f64 {
    x.iter().map(FeatureVector::squared_norm).sum::<f64>() / x.len() as f64
}

/// Mean log-loss plus `(λ/2)‖w‖²`.
pub fn logreg_objective(x: &[FeatureVector], y: &[bool], weights: &[f64], bias: f64, lambda: f64) -> f64 {
    let z = margins(x, weights, bias);
    let data: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &t)| softplus(z) - if t { z } else { 0.0 })
        .sum::<f64>()
        / x.len() as f64;
    data + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`logreg_objective`] with respect to `(w, b)`.
pub fn logreg_gradient(
    x: &[FeatureVector],
    y: &[bool],
    weights: &[f64],
    bias: f64,
    lambda: f64,
) -> (Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut gw: Vec<f64> = weights.iter().map(|w| lambda * w).collect();
    let mut gb = 0.0;
    for (v, &t) in x.iter().zip(y) {
        let r = (sigmoid(v.dot(weights) + bias) - t as u8 as f64) / n;
        for &(j, value) in v.entries() {
            gw[j] += r * value;
        }
        gb += r;
    }
    (gw, gb)
}

const DIVERGENCE_PATIENCE: usize = 10;

struct DivergenceGuard {
    previous: f64,
    increases: usize,
}

impl DivergenceGuard {
    fn new() -> Self {
        DivergenceGuard {
            previous: f64::INFINITY,
            increases: 0,
        }
    }

    fn observe(&mut self, epoch: usize, loss: f64) -> Result<()> {
        if !loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                loss,
                increases: self.increases,
            });
        }
        if loss > self.previous {
            self.increases += 1;
        } else {
            self.increases = 0;
        }
        self.previous = loss;
        if self.increases >= DIVERGENCE_PATIENCE {
            return Err(Error::Diverged {
                epoch,
                loss,
                increases: self.increases,
            });
        }
        Ok(())
    }
}

fn check_finite(x: &[FeatureVector]) -> Result<()> {
    if x.iter().flat_map(|v| v.entries()).any(|(_, v)| !v.is_finite()) {
        return Err(Error::Training("non-finite feature value".into()));
    }
    Ok(())
}

/// Full-batch gradient descent from zero. Without an explicit learning rate
/// the weight step is `1 / (mean‖x‖²/2 + λ)` and the bias step is 2, which
/// bounds the curvature of each block and makes every step a descent step.
pub fn train_logreg(
    x: &[FeatureVector],
    y: &[bool],
    hp: &Hyperparameters,
) -> Result<(Parameters, TrainingMetadata)> {
    let dim = check_training(x, y)?;
    check_finite(x)?;
    if hp.lambda < 0.0 || !hp.lambda.is_finite() {
        return Err(Error::Training("lambda must be finite and non-negative".into()));
    }
    let (step_w, step_b) = match hp.learning_rate {
        Some(rate) => (rate, rate),
        None => {
            let curvature = mean_squared_norm(x) / 2.0 + hp.lambda;
            (if curvature > 0.0 { 1.0 / curvature } else { 1.0 }, 2.0)
        }
    };
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut guard = DivergenceGuard::new();
    let mut trace = Vec::with_capacity(hp.epochs);
    for epoch in 1..=hp.epochs {
        let (gw, gb) = logreg_gradient(x, y, &weights, bias, hp.lambda);
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= step_w * g;
        }
        bias -= step_b * gb;
        let loss = logreg_objective(x, y, &weights, bias, hp.lambda);
        guard.observe(epoch, loss)?;
        trace.push(loss);
    }
    let metadata = TrainingMetadata {
        examples: x.len(),
        epochs_run: hp.epochs,
        final_loss: trace.last().copied(),
        loss_trace: trace,
        ..Default::default()
    };
    Ok((Parameters::Linear { weights, bias }, metadata))
}

/// `(λ/2)‖w‖² + mean hinge loss` with labels mapped to ±1.
pub fn svm_objective(x: &[FeatureVector], y: &[bool], weights: &[f64], bias: f64, lambda: f64) -> f64 {
    let z = margins(x, weights, bias);
    let hinge: f64 = z
        .iter()
        .zip(y)
        .map(|(&z, &t)| (1.0 - sign(t) * z).max(0.0))
        .sum::<f64>()
        / x.len() as f64;
    hinge + 0.5 * lambda * weights.iter().map(|w| w * w).sum::<f64>()
}

fn sign(label: bool) -> f64 {
    if label {
        1.0
    } else {
        -1.0
    }
}

/// Full-batch subgradient descent from zero with step
/// `1 / (λ (t + t0))`, `t0 = max(1, L/λ)`, `L = mean(‖x‖² + 1)`. Returns the
/// average of the iterates from the second half of the run; the trace and
/// the divergence check follow the current iterate.
pub fn train_svm(
    x: &[FeatureVector],
    y: &[bool],
    hp: &Hyperparameters,
) -> Result<(Parameters, TrainingMetadata)> {
    let dim = check_training(x, y)?;
    check_finite(x)?;
    if hp.lambda <= 0.0 || !hp.lambda.is_finite() {
        return Err(Error::Training("linear SVM needs a positive finite lambda".into()));
    }
    let n = x.len() as f64;
    let lipschitz = mean_squared_norm(x) + 1.0;
    let t0 = (lipschitz / hp.lambda).max(1.0);
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut avg_w = vec![0.0; dim];
    let mut avg_b = 0.0;
    let burn_in = hp.epochs / 2 + 1;
    let mut guard = DivergenceGuard::new();
    let mut trace = Vec::with_capacity(hp.epochs);
    for epoch in 1..=hp.epochs {
        let mut gw: Vec<f64> = weights.iter().map(|w| hp.lambda * w).collect();
        let mut gb = 0.0;
        for (v, &t) in x.iter().zip(y) {
            let s = sign(t);
            if s * (v.dot(&weights) + bias) < 1.0 {
                for &(j, value) in v.entries() {
                    gw[j] -= s * value / n;
                }
                gb -= s / n;
            }
        }
        let eta = hp
            .learning_rate
            .unwrap_or_else(|| 1.0 / (hp.lambda * (epoch as f64 + t0)));
        for (w, g) in weights.iter_mut().zip(&gw) {
            *w -= eta * g;
        }
        bias -= eta * gb;
        if epoch >= burn_in {
            let t = (epoch + 1 - burn_in) as f64;
            for (a, w) in avg_w.iter_mut().zip(&weights) {
                *a += (w - *a) / t;
            }
            avg_b += (bias - avg_b) / t;
        }
        let loss = svm_objective(x, y, &weights, bias, hp.lambda);
        guard.observe(epoch, loss)?;
        trace.push(loss);
    }
    let metadata = TrainingMetadata {
        examples: x.len(),
        epochs_run: hp.epochs,
        final_loss: Some(svm_objective(x, y, &avg_w, avg_b, hp.lambda)),
        loss_trace: trace,
        ..Default::default()
    };
    Ok((
        Parameters::Linear {
            weights: avg_w,
            bias: avg_b,
        },
        metadata,
    ))
}

pub fn build_retrieval_index(
    vectors: &[FeatureVector],
    labels: &[bool],
    ids: &[String],
) -> Result<Parameters> {
    check_training(vectors, labels)?;
    if ids.len() != vectors.len() {
        return Err(Error::Training(format!(
            "{} vectors but {} instance ids",
            vectors.len(),
            ids.len()
        )));
    }
    check_finite(vectors)?;
    let entries = vectors
        .iter()
        .zip(labels)
        .zip(ids)
        .map(|((v, &label), id)| IndexEntry {
            instance_id: id.clone(),
            label,
            vector: v.clone(),
            norm: v.squared_norm().sqrt(),
        })
        .collect();
    Ok(Parameters::Retrieval { entries })
}

fn sparse_dot(a: &FeatureVector, b: &FeatureVector) -> f64 {
    let (mut i, mut j, mut sum) = (0, 0, 0.0);
    let (ea, eb) = (a.entries(), b.entries());
    while i < ea.len() && j < eb.len() {
        match ea[i].0.cmp(&eb[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                sum += ea[i].1 * eb[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    sum
}

/// Cosine similarity; a zero-norm second vector scores 0.
fn cosine(query: &FeatureVector, query_norm: f64, entry: &IndexEntry) -> f64 {
    if entry.norm == 0.0 {
        return 0.0;
    }
    sparse_dot(query, &entry.vector) / (query_norm * entry.norm)
}

/// k nearest neighbours by cosine similarity, most similar first, ties by
/// instance id.
pub fn nearest(entries: &[IndexEntry], query: &FeatureVector, k: usize) -> Result<Vec<Neighbor>> {
    let norm = query.squared_norm().sqrt();
    if norm == 0.0 {
        return Err(Error::UndefinedCosine);
    }
    let mut scored: Vec<Neighbor> = entries
        .iter()
        .map(|e| Neighbor {
            instance_id: e.instance_id.clone(),
            label: e.label,
            similarity: cosine(query, norm, e),
        })
        .collect();
    scored.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.instance_id.cmp(&b.instance_id))
    });
    scored.truncate(k.max(1));
    Ok(scored)
}

/// Vote over `neighbors`; a tie goes to the label of the neighbour with the
/// smallest instance id among those carrying a tied label.
pub fn knn_vote(neighbors: &[Neighbor], weighted: bool) -> Decision {
    let mut weight = [0.0f64; 2];
    for n in neighbors {
        weight[n.label as usize] += if weighted { n.similarity } else { 1.0 };
    }
    let positive = if weight[1] != weight[0] {
        weight[1] > weight[0]
    } else {
        neighbors
            .iter()
            .min_by(|a, b| a.instance_id.cmp(&b.instance_id))
            .is_some_and(|n| n.label)
    };
    Decision {
        positive,
        score: weight[1] - weight[0],
        evidence: Some(neighbors.to_vec()),
    }
}

pub fn classify_knn(entries: &[IndexEntry], query: &FeatureVector, k: usize, weighted: bool) -> Result<Decision> {
    Ok(knn_vote(&nearest(entries, query, k)?, weighted))
}

fn gaussian_log_likelihood(x: &[f64], means: &[f64], variances: &[f64]) -> f64 {
    x.iter()
        .zip(means.iter().zip(variances))
        .map(|(&v, (&m, &s2))| -0.5 * (2.0 * std::f64::consts::PI * s2).ln() - (v - m).powi(2) / (2.0 * s2))
        .sum()
}

fn posterior_positive(log_joint: [f64; 2]) -> f64 {
    sigmoid(log_joint[1] - log_joint[0])
}

impl TrainedModel {
    pub fn train(spec: &ModelSpec, x: &[FeatureVector], y: &[bool], ids: &[String]) -> Result<Self> {
        let dim = check_training(x, y)?;
        let hp = &spec.hyperparameters;
        let (parameters, metadata) = match spec.family {
            Family::NbGaussian => (train_nb_gaussian(x, y, hp)?, TrainingMetadata::default()),
            Family::NbMultinomial => (train_nb_multinomial(x, y, hp)?, TrainingMetadata::default()),
            Family::Logreg => train_logreg(x, y, hp)?,
            Family::LinearSvm => train_svm(x, y, hp)?,
            Family::RetrievalKnn => {
                if hp.k == 0 {
                    return Err(Error::Training("k must be at least 1".into()));
                }
                (build_retrieval_index(x, y, ids)?, TrainingMetadata::default())
            }
        };
        Ok(TrainedModel {
            spec: spec.clone(),
            dim,
            parameters,
            metadata: TrainingMetadata {
                examples: x.len(),
                ..metadata
            },
        })
    }

    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// `(w, b)` for linear families.
    pub fn linear(&self) -> Option<(&[f64], f64)> {
        match &self.parameters {
            Parameters::Linear { weights, bias } => Some((weights, *bias)),
            _ => None,
        }
    }

    pub fn decide(&self, x: &FeatureVector) -> Result<Decision> {
        if x.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                actual: x.dim(),
            });
        }
        Ok(match &self.parameters {
            Parameters::Gaussian {
                priors,
                means,
                variances,
            } => {
                let dense = x.to_dense();
                let joint =
                    [0, 1].map(|c| priors[c].ln() + gaussian_log_likelihood(&dense, &means[c], &variances[c]));
                Decision {
                    positive: joint[1] >= joint[0],
                    score: posterior_positive(joint),
                    evidence: None,
                }
            }
            Parameters::Multinomial {
                priors,
                log_likelihoods,
            } => {
                let joint = [0, 1].map(|c| priors[c].ln() + x.dot(&log_likelihoods[c]));
                Decision {
                    positive: joint[1] >= joint[0],
                    score: posterior_positive(joint),
                    evidence: None,
                }
            }
            Parameters::Linear { weights, bias } => {
                let z = x.dot(weights) + bias;
                let score = match self.spec.family {
                    Family::Logreg => self.probability_from_margin(z),
                    _ => z,
                };
                Decision {
                    positive: z >= 0.0,
                    score,
                    evidence: None,
                }
            }
            Parameters::Retrieval { entries } => classify_knn(
                entries,
                x,
                self.spec.hyperparameters.k,
                self.spec.hyperparameters.weighted_vote,
            )?,
        })
    }

    fn probability_from_margin(&self, z: f64) -> f64 {
        sigmoid(z).clamp(f64::EPSILON, 1.0 - f64::EPSILON)
    }

    /// `[P(negative), P(positive)]` for logistic regression.
    pub fn probabilities(&self, x: &FeatureVector) -> Result<[f64; 2]> {
        match (&self.parameters, self.spec.family) {
            (Parameters::Linear { weights, bias }, Family::Logreg) => {
                let p = self.probability_from_margin(x.dot(weights) + bias);
                Ok([1.0 - p, p])
            }
            _ => Err(Error::WrongFamily {
                operation: "probabilities",
                family: self.spec.family.to_string(),
            }),
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<bool> {
        Ok(self.decide(x)?.positive)
    }
}

/// Source of dense text embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum EmbeddingProvider {
    /// Vectors keyed by instance id.
    PrecomputedFile {
        dim: usize,
        vectors: BTreeMap<String, Vec<f64>>,
    },
    /// Signed feature hashing of unigrams and bigrams.
    HashedFallback { dim: usize },
}

fn fnv1a(text: &str) -> u64 {
    let mut hasher = fnv::FnvHasher::default();
    hasher.write(text.as_bytes());
    hasher.finish()
}

impl EmbeddingProvider {
    pub fn hashed(dim: usize) -> Self {
        EmbeddingProvider::HashedFallback { dim }
    }

    /// Reads `dim,<d>` followed by `instance_id,v1,..,vd` rows.
    pub fn from_reader(reader: impl Read) -> Result<Self> {
        let mut rows = csv::ReaderBuilder::new()
            .has_headers(false)
            .flexible(true)
            .trim(csv::Trim::All)
            .from_reader(reader)
            .into_records();
        let header = rows
            .next()
            .ok_or_else(|| Error::Parse("empty embedding file".into()))?
            .map_err(|e| Error::Parse(e.to_string()))?;
        let dim = match (header.get(0), header.get(1), header.len()) {
            (Some("dim"), Some(d), 2) => d
                .parse::<usize>()
                .ok()
                .filter(|&d| d > 0)
                .ok_or_else(|| Error::Line {
                    line: 1,
                    message: format!("invalid dimension \"{d}\""),
                })?,
            _ => {
                return Err(Error::Line {
                    line: 1,
                    message: "expected header \"dim,<d>\"".into(),
                })
            }
        };
        let mut vectors = BTreeMap::new();
        for (i, row) in rows.enumerate() {
            let line = i + 2;
            let row = row.map_err(|e| Error::Line {
                line,
                message: e.to_string(),
            })?;
            if row.len() != dim + 1 {
                return Err(Error::Line {
                    line,
                    message: format!("expected {dim} values, found {}", row.len().saturating_sub(1)),
                });
            }
            let values = row
                .iter()
                .skip(1)
                .map(|v| v.parse::<f64>().ok().filter(|v| v.is_finite()))
                .collect::<Option<Vec<f64>>>()
                .ok_or_else(|| Error::Line {
                    line,
                    message: "non-numeric or non-finite value".into(),
                })?;
            let id = row[0].to_string();
            if vectors.insert(id.clone(), values).is_some() {
                return Err(Error::Line {
                    line,
                    message: format!("duplicate instance id \"{id}\""),
                });
            }
        }
        Ok(EmbeddingProvider::PrecomputedFile { dim, vectors })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn dim(&self) -> usize {
        match self {
            EmbeddingProvider::PrecomputedFile { dim, .. } | EmbeddingProvider::HashedFallback { dim } => *dim,
        }
    }

    pub fn embed(&self, instance_id: &str, text: &str) -> Result<FeatureVector> {
        match self {
            EmbeddingProvider::PrecomputedFile { vectors, .. } => {
                let v = vectors
                    .get(instance_id)
                    .ok_or_else(|| Error::UnknownInstance(instance_id.to_string()))?;
                FeatureVector::from_dense(v)
            }
            EmbeddingProvider::HashedFallback { dim } => {
                let tokens = preprocess(text);
                let mut dense = vec![0.0; *dim];
                for gram in tokens.ngrams(1).chain(tokens.ngrams(2)) {
                    let h = fnv1a(&gram);
                    let s = if h >> 63 == 0 { 1.0 } else { -1.0 };
                    dense[(h % *dim as u64) as usize] += s;
                }
                FeatureVector::from_dense(&dense)
            }
        }
    }
}

/// Feature extraction settings shared by every model of one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureResources {
    pub orders: Vec<usize>,
    pub min_df: usize,
    pub lexicon: Option<Lexicon>,
    pub embeddings: Option<EmbeddingProvider>,
}

impl Default for FeatureResources {
    fn default() -> Self {
        FeatureResources {
            orders: vec![1, 2],
            min_df: 2,
            lexicon: None,
            embeddings: None,
        }
    }
}

/// Maps instances to model inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Encoder {
    Features(FeatureSpace),
    Embedding(EmbeddingProvider),
}

impl Encoder {
    /// Fits on training texts only.
    pub fn fit<S: AsRef<str>>(source: FeatureSource, resources: &FeatureResources, texts: &[S]) -> Result<Self> {
        match source.kind() {
            Some(kind) => {
                let config = FeatureConfig {
                    kind,
                    orders: resources.orders.clone(),
                    min_df: resources.min_df,
                    lexicon: resources.lexicon.clone(),
                };
                Ok(Encoder::Features(FeatureSpace::fit(&config, texts)?))
            }
            None => resources
                .embeddings
                .clone()
                .map(Encoder::Embedding)
                .ok_or_else(|| Error::invalid("embedding features need an embedding provider")),
        }
    }

    pub fn encode(&self, instance_id: &str, text: &str) -> Result<FeatureVector> {
        match self {
            Encoder::Features(space) => Ok(space.transform(text)),
            Encoder::Embedding(provider) => provider.embed(instance_id, text),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Encoder::Features(space) => space.dim(),
            Encoder::Embedding(provider) => provider.dim(),
        }
    }

    /// Human-readable column names.
    pub fn column_names(&self) -> Vec<String> {
        match self {
            Encoder::Features(space) => space.columns.clone(),
            Encoder::Embedding(provider) => (0..provider.dim()).map(|i| format!("embedding:{i}")).collect(),
        }
    }

    pub fn fingerprint(&self) -> String {
        match self {
            Encoder::Features(space) => space.fingerprint(),
            Encoder::Embedding(provider) => fingerprint_json(provider),
        }
    }

    fn rebuild(&mut self) {
        if let Encoder::Features(space) = self {
            space.rebuild();
        }
    }
}

/// A trained model with its encoder and training-set column means.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub label_path: LabelPath,
    pub model: TrainedModel,
    pub encoder: Encoder,
    pub background: Vec<f64>,
}

/// One labelled training example.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub id: &'a str,
    pub text: &'a str,
    pub label: bool,
}

impl ModelArtifact {
    /// Fits the encoder and model on `examples` only.
    pub fn fit(
        spec: &ModelSpec,
        label_path: &LabelPath,
        resources: &FeatureResources,
        examples: &[Example<'_>],
    ) -> Result<Self> {
        let texts: Vec<&str> = examples.iter().map(|e| e.text).collect();
        let encoder = Encoder::fit(spec.features, resources, &texts)?;
        let x = examples
            .iter()
            .map(|e| encoder.encode(e.id, e.text))
            .collect::<Result<Vec<_>>>()?;
        let y: Vec<bool> = examples.iter().map(|e| e.label).collect();
        let ids: Vec<String> = examples.iter().map(|e| e.id.to_string()).collect();
        let model = TrainedModel::train(spec, &x, &y, &ids)?;
        let background = column_means(&x, encoder.dim());
        Ok(ModelArtifact {
            label_path: label_path.clone(),
            model,
            encoder,
            background,
        })
    }

    pub fn encode(&self, instance_id: &str, text: &str) -> Result<FeatureVector> {
        self.encoder.encode(instance_id, text)
    }

    pub fn predict(&self, instance_id: &str, text: &str) -> Result<Prediction> {
        let decision = self.model.decide(&self.encode(instance_id, text)?)?;
        Ok(Prediction {
            instance_id: instance_id.to_string(),
            label_path: self.label_path.clone(),
            value: if decision.positive { PRESENT } else { ABSENT }.to_string(),
            score: decision.score,
            evidence: decision.evidence,
            expert: self.model.spec.clone(),
        })
    }
}

pub const FORMAT_VERSION: &str = "1.0.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactHeader {
    pub format_version: String,
    pub family: Family,
    pub feature_fingerprint: String,
    pub seed: u64,
    pub checksum: String,
}

/// Header line, newline, then the JSON payload.
pub fn encode_artifact(artifact: &ModelArtifact) -> String {
    let payload = serde_json::to_string(artifact).expect("artifact serializes");
    let header = ArtifactHeader {
        format_version: FORMAT_VERSION.into(),
        family: artifact.model.spec.family,
        feature_fingerprint: artifact.encoder.fingerprint(),
        seed: artifact.model.spec.seed,
        checksum: hex::encode(Sha256::digest(payload.as_bytes())),
    };
    format!(
        "{}\n{}\n",
        serde_json::to_string(&header).expect("header serializes"),
        payload
    )
}

fn major(version: &str) -> Option<u64> {
    version.split('.').next()?.parse().ok()
}

pub fn decode_artifact(text: &str) -> Result<ModelArtifact> {
    let (header_line, rest) = text.split_once('\n').ok_or(Error::Checksum)?;
    let header: ArtifactHeader = serde_json::from_str(header_line)
        .map_err(|e| Error::Parse(format!("artifact header: {e}")))?;
    let supported = major(FORMAT_VERSION).expect("valid format version");
    if major(&header.format_version) != Some(supported) {
        return Err(Error::VersionMismatch {
            found: header.format_version,
            supported: FORMAT_VERSION.into(),
        });
    }
    let payload = rest.strip_suffix('\n').unwrap_or(rest);
    if hex::encode(Sha256::digest(payload.as_bytes())) != header.checksum {
        return Err(Error::Checksum);
    }
    let mut artifact: ModelArtifact =
        serde_json::from_str(payload).map_err(|e| Error::Parse(format!("artifact payload: {e}")))?;
    artifact.encoder.rebuild();
    if artifact.encoder.fingerprint() != header.feature_fingerprint {
        return Err(Error::FeatureSpaceMismatch {
            expected: header.feature_fingerprint,
            actual: artifact.encoder.fingerprint(),
        });
    }
    Ok(artifact)
}

pub fn save_model(artifact: &ModelArtifact, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_artifact(artifact)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<ModelArtifact> {
    let path = path.as_ref();
    decode_artifact(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

/// Static routing from label paths to expert specs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExpertRouter {
    #[serde(default)]
    pub routes: BTreeMap<LabelPath, ModelSpec>,
    pub default: Option<ModelSpec>,
}

impl ExpertRouter {
    pub fn parse(document: &str, ontology: &Ontology) -> Result<Self> {
        let router: ExpertRouter = toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
        router.validate(ontology)?;
        Ok(router)
    }

    pub fn load(path: impl AsRef<Path>, ontology: &Ontology) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, ontology)
    }

    pub fn validate(&self, ontology: &Ontology) -> Result<()> {
        self.routes.keys().try_for_each(|p| ontology.check(p))
    }

    pub fn spec_for(&self, path: &LabelPath) -> Result<&ModelSpec> {
        self.routes
            .get(path)
            .or(self.default.as_ref())
            .ok_or_else(|| Error::NoRoute(path.to_string()))
    }

    /// Routes each path to the first stored model for it, by model name.
    pub fn from_registry(registry: &ModelRegistry) -> Self {
        let mut routes = BTreeMap::new();
        for artifact in registry.artifacts() {
            routes
                .entry(artifact.label_path.clone())
                .or_insert_with(|| artifact.model.spec.clone());
        }
        ExpertRouter { routes, default: None }
    }

    /// Every (path, spec) pair needed to serve `paths`.
    pub fn plan(&self, paths: &[LabelPath]) -> Result<Vec<(LabelPath, ModelSpec)>> {
        paths
            .iter()
            .map(|p| Ok((p.clone(), self.spec_for(p)?.clone())))
            .collect()
    }
}

/// Trained artifacts keyed by label path and model name.
#[derive(Debug, Clone, Default)]
pub struct ModelRegistry {
    artifacts: BTreeMap<(LabelPath, String), ModelArtifact>,
}

impl ModelRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, artifact: ModelArtifact) {
        let key = (artifact.label_path.clone(), artifact.model.spec.name());
        self.artifacts.insert(key, artifact);
    }

    pub fn get(&self, path: &LabelPath, spec: &ModelSpec) -> Option<&ModelArtifact> {
        self.artifacts.get(&(path.clone(), spec.name()))
    }

    pub fn len(&self) -> usize {
        self.artifacts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.artifacts.is_empty()
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &ModelArtifact> {
        self.artifacts.values()
    }
}

/// Invokes exactly one expert per requested path.
pub fn route_and_predict(
    instance_id: &str,
    text: &str,
    paths: &[LabelPath],
    router: &ExpertRouter,
    registry: &ModelRegistry,
) -> Result<Vec<Prediction>> {
    router
        .plan(paths)?
        .into_iter()
        .map(|(path, spec)| {
            registry
                .get(&path, &spec)
                .ok_or_else(|| Error::MissingModel {
                    path: path.to_string(),
                    model: spec.name(),
                })?
                .predict(instance_id, text)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense(rows: &[&[f64]]) -> Vec<FeatureVector> {
        rows.iter().map(|r| FeatureVector::from_dense(r).unwrap()).collect()
    }

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("i{i:03}")).collect()
    }

    fn hp() -> Hyperparameters {
        Hyperparameters::default()
    }

    #[test]
    fn gaussian_nb_hand_example() {
        let x = dense(&[&[-1.0], &[-1.0], &[1.0], &[1.0]]);
        let y = [false, false, true, true];
        let m = TrainedModel::train(&ModelSpec::new(Family::NbGaussian, FeatureSource::Lexicon), &x, &y, &ids(4))
            .unwrap();
        let Parameters::Gaussian { priors, variances, .. } = &m.parameters else { panic!() };
        assert_eq!(*priors, [0.5, 0.5]);
        assert_eq!(variances[0][0], 1e-9);
        assert!(m.predict(&dense(&[&[0.9]])[0]).unwrap());
        assert!(!m.predict(&dense(&[&[-0.2]])[0]).unwrap());
    }

    #[test]
    fn multinomial_smoothing_and_errors() {
        let x = dense(&[&[2.0, 0.0], &[0.0, 3.0]]);
        let y = [false, true];
        let Parameters::Multinomial { log_likelihoods, .. } = train_nb_multinomial(&x, &y, &hp()).unwrap() else {
            panic!()
        };
        // Feature 1 unseen in the negative class: (0 + 1) / (2 + 2).
        assert!((log_likelihoods[0][1] - 0.25f64.ln()).abs() < 1e-15);
        assert!(train_nb_multinomial(&dense(&[&[-1.0], &[1.0]]), &y, &hp()).is_err());
        assert!(train_nb_multinomial(&x, &[true, true], &hp()).is_err());
        assert!(train_nb_gaussian(&x, &[false, false], &hp()).is_err());
    }

    #[test]
    fn logreg_separator_sign_and_probabilities() {
        let x = dense(&[&[-1.0], &[1.0]]);
        let y = [false, true];
        let spec = ModelSpec {
            hyperparameters: Hyperparameters { lambda: 0.0, ..hp() },
            ..ModelSpec::new(Family::Logreg, FeatureSource::Lexicon)
        };
        let m = TrainedModel::train(&spec, &x, &y, &ids(2)).unwrap();
        assert!(m.linear().unwrap().0[0] > 0.0);
        let p = m.probabilities(&x[1]).unwrap();
        assert!(p[1] > 0.5 && p[1] < 1.0 && (p[0] + p[1] - 1.0).abs() < 1e-15);
        let trace = &m.metadata.loss_trace;
        assert!(trace.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn logreg_strong_regularization_fits_base_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x: Vec<FeatureVector> = (0..40)
            .map(|_| FeatureVector::from_dense(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).unwrap())
            .collect();
        let y: Vec<bool> = (0..40).map(|i| i % 4 == 0).collect();
        let h = Hyperparameters { lambda: 1e6, epochs: 500, ..hp() };
        let (Parameters::Linear { weights, bias }, _) = train_logreg(&x, &y, &h).unwrap() else { panic!() };
        assert!(weights.iter().all(|w| w.abs() < 1e-5));
        assert!((sigmoid(bias) - 0.25).abs() < 1e-3);
    }

    #[test]
    fn logreg_divergence_is_reported() {
        let x = dense(&[&[-1.0], &[1.0], &[0.5], &[-0.5]]);
        let y = [false, true, false, true];
        let h = Hyperparameters { learning_rate: Some(1e3), lambda: 1.0, ..hp() };
        assert!(matches!(train_logreg(&x, &y, &h), Err(Error::Diverged { .. })));
        let inf = vec![FeatureVector::from_dense(&[1.0]).unwrap(); 2];
        assert!(train_logreg(&inf, &[true], &hp()).is_err());
    }

    #[test]
    fn svm_flip_symmetry_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x: Vec<FeatureVector> = (0..30)
            .map(|_| FeatureVector::from_dense(&[rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)]).unwrap())
            .collect();
        let y: Vec<bool> = x.iter().map(|v| v.get(0) + 0.3 * v.get(1) > 0.1).collect();
        let flipped: Vec<bool> = y.iter().map(|v| !v).collect();
        let (Parameters::Linear { weights: w1, bias: b1 }, _) = train_svm(&x, &y, &hp()).unwrap() else { panic!() };
        let (Parameters::Linear { weights: w2, bias: b2 }, _) = train_svm(&x, &flipped, &hp()).unwrap() else {
            panic!()
        };
        for (a, b) in w1.iter().zip(&w2) {
            assert!((a + b).abs() <= 1e-6);
        }
        assert!((b1 + b2).abs() <= 1e-6);
        assert!(train_svm(&x, &y, &Hyperparameters { lambda: 0.0, ..hp() }).is_err());
    }

    fn blobs(n: usize, seed: u64, spread: f64) -> (Vec<FeatureVector>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let label = i % 2 == 0;
            let c = if label { 2.0 } else { -2.0 };
            x.push(
                FeatureVector::from_dense(&[
                    c + spread * rng.gen_range(-1.0..1.0),
                    c + spread * rng.gen_range(-1.0..1.0),
                ])
                .unwrap(),
            );
            y.push(label);
        }
        (x, y)
    }

    #[test]
    fn linear_models_separate_blobs() {
        let (x, y) = blobs(200, 1, 1.0);
        for family in [Family::Logreg, Family::LinearSvm] {
            let m = TrainedModel::train(&ModelSpec::new(family, FeatureSource::Lexicon), &x, &y, &ids(200)).unwrap();
            let correct = x.iter().zip(&y).filter(|(v, &t)| m.predict(v).unwrap() == t).count();
            assert_eq!(correct, 200, "{family}");
            if family == Family::LinearSvm {
                let (w, b) = m.linear().unwrap();
                for (v, &t) in x.iter().zip(&y) {
                    assert!(sign(t) * (v.dot(w) + b) >= 0.0);
                }
            }
        }
    }

    #[test]
    fn svm_block_objective_is_non_increasing() {
        let (x, y) = blobs(120, 4, 4.0);
        let (params, meta) = train_svm(&x, &y, &hp()).unwrap();
        let blocks: Vec<f64> = meta.loss_trace.chunks(20).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
        assert!(blocks.windows(2).all(|w| w[1] <= w[0]), "{blocks:?}");
        let Parameters::Linear { weights, bias } = params else { panic!() };
        let mut oracle = 0.5 * 1e-2 * (weights[0] * weights[0] + weights[1] * weights[1]);
        for (v, &t) in x.iter().zip(&y) {
            let d = v.to_dense();
            let z = weights[0] * d[0] + weights[1] * d[1] + bias;
            oracle += f64::max(0.0, 1.0 - if t { z } else { -z }) / x.len() as f64;
        }
        assert!((meta.final_loss.unwrap() - oracle).abs() < 1e-12);
        assert!(oracle <= meta.loss_trace[0]);
    }

    #[test]
    fn training_is_deterministic() {
        let (x, y) = blobs(60, 8, 3.0);
        for family in [Family::Logreg, Family::LinearSvm, Family::NbGaussian] {
            let spec = ModelSpec::new(family, FeatureSource::Lexicon);
            let a = TrainedModel::train(&spec, &x, &y, &ids(60)).unwrap();
            let b = TrainedModel::train(&spec, &x, &y, &ids(60)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn knn_examples() {
        let index = build_retrieval_index(
            &dense(&[&[1.0, 0.0], &[0.0, 1.0]]),
            &[true, false],
            &["b".into(), "a".into()],
        )
        .unwrap();
        let Parameters::Retrieval { entries } = index else { panic!() };
        let d = classify_knn(&entries, &dense(&[&[2.0, 0.0]])[0], 1, true).unwrap();
        assert!(d.positive);
        assert_eq!(d.evidence.unwrap()[0].similarity, 1.0);
        let zero = FeatureVector::zeros(2);
        assert!(matches!(classify_knn(&entries, &zero, 1, true), Err(Error::UndefinedCosine)));

        let neighbors = vec![
            Neighbor { instance_id: "x".into(), label: true, similarity: 0.9 },
            Neighbor { instance_id: "y".into(), label: false, similarity: 0.8 },
            Neighbor { instance_id: "z".into(), label: true, similarity: 0.2 },
        ];
        let v = knn_vote(&neighbors, true);
        assert!(v.positive);
        assert!((v.score - 0.3).abs() < 1e-12);
        let tied = knn_vote(&neighbors[..2], false);
        assert!(tied.positive && tied.score == 0.0);
    }

    #[test]
    fn knn_orthogonal_query_uses_id_tie_break() {
        let Parameters::Retrieval { entries } = build_retrieval_index(
            &dense(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0]]),
            &[false, true],
            &["m".into(), "c".into()],
        )
        .unwrap() else {
            panic!()
        };
        let d = classify_knn(&entries, &dense(&[&[0.0, 0.0, 1.0]])[0], 2, true).unwrap();
        let evidence = d.evidence.unwrap();
        assert!(evidence.iter().all(|n| n.similarity == 0.0));
        assert_eq!(evidence[0].instance_id, "c");
        assert!(d.positive);
    }

    #[test]
    fn hashed_embeddings_are_deterministic() {
        let p = EmbeddingProvider::hashed(64);
        let a = p.embed("x", "my body feels light").unwrap();
        assert_eq!(a, p.embed("y", "my body feels light").unwrap());
        assert_eq!(a.dim(), 64);
        let n = a.squared_norm().sqrt();
        assert!((sparse_dot(&a, &a) / (n * n) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn embedding_file_format() {
        let p = EmbeddingProvider::from_reader("dim,2\na,1.0,0.5\nb,0,-1\n".as_bytes()).unwrap();
        assert_eq!(p.embed("b", "").unwrap().to_dense(), [0.0, -1.0]);
        assert!(p.embed("c", "").is_err());
        assert!(EmbeddingProvider::from_reader("dim,2\na,1.0\n".as_bytes()).is_err());
        assert!(EmbeddingProvider::from_reader("a,1,2\n".as_bytes()).is_err());
        assert!(EmbeddingProvider::from_reader("dim,1\na,nan\n".as_bytes()).is_err());
    }

    fn corpus_examples() -> Vec<(String, String, bool)> {
        (0..40)
            .map(|i| {
                let text = if i % 2 == 0 {
                    format!("we met friends together today {i}")
                } else {
                    format!("the report lists numbers only {i}")
                };
                (format!("d{i:02}"), text, i % 2 == 0)
            })
            .collect()
    }

    fn fit(family: Family, source: FeatureSource) -> ModelArtifact {
        let data = corpus_examples();
        let examples: Vec<Example> =
            data.iter().map(|(id, t, l)| Example { id, text: t, label: *l }).collect();
        let resources = FeatureResources {
            lexicon: Some(Lexicon::demo()),
            embeddings: Some(EmbeddingProvider::hashed(32)),
            ..Default::default()
        };
        ModelArtifact::fit(&ModelSpec::new(family, source), &LabelPath::aspect("SS"), &resources, &examples)
            .unwrap()
    }

    #[test]
    fn artifact_round_trip_and_corruption() {
        let dir = tempfile::tempdir().unwrap();
        for (family, source) in [
            (Family::NbMultinomial, FeatureSource::Learned),
            (Family::NbGaussian, FeatureSource::Lexicon),
            (Family::Logreg, FeatureSource::Hybrid),
            (Family::LinearSvm, FeatureSource::Learned),
            (Family::RetrievalKnn, FeatureSource::Embedding),
        ] {
            let artifact = fit(family, source);
            let path = dir.path().join(format!("{family}.model"));
            save_model(&artifact, &path).unwrap();
            let back = load_model(&path).unwrap();
            assert_eq!(back, artifact);
            for t in ["we met friends", "numbers only", "together with friends today"] {
                assert_eq!(back.predict("q", t).unwrap(), artifact.predict("q", t).unwrap());
            }
            let text = std::fs::read_to_string(&path).unwrap();
            assert!(matches!(decode_artifact(&text[..text.len() - 20]), Err(Error::Checksum)));
            let newer = text.replacen("\"format_version\":\"1.0.0\"", "\"format_version\":\"2.0.0\"", 1);
            assert!(matches!(decode_artifact(&newer), Err(Error::VersionMismatch { .. })));
        }
    }

    #[test]
    fn router_examples() {
        let ontology = Ontology::sample();
        let router = ExpertRouter::parse(
            "[routes.BS]\nfamily = \"linear_svm\"\nfeatures = \"learned\"\n\n[default]\nfamily = \"logreg\"\nfeatures = \"learned\"\n",
            &ontology,
        )
        .unwrap();
        let mut registry = ModelRegistry::new();
        for (path, family) in [("BS", Family::LinearSvm), ("NS", Family::Logreg)] {
            let mut a = fit(family, FeatureSource::Learned);
            a.label_path = LabelPath::aspect(path);
            registry.insert(a);
        }
        let paths = [LabelPath::aspect("BS"), LabelPath::aspect("NS")];
        let out = route_and_predict("q", "we met friends", &paths, &router, &registry).unwrap();
        assert_eq!(out[0].expert.family, Family::LinearSvm);
        assert_eq!(out[1].expert.family, Family::Logreg);
        let missing = route_and_predict("q", "x", &[LabelPath::aspect("MS")], &router, &registry);
        assert!(matches!(missing, Err(Error::MissingModel { .. })));
        let no_default = ExpertRouter { default: None, ..router };
        let err = route_and_predict("q", "x", &[LabelPath::aspect("NS")], &no_default, &registry).unwrap_err();
        assert!(err.to_string().contains("NS"));
        assert!(ExpertRouter::parse("[routes.XX]\nfamily = \"logreg\"\nfeatures = \"learned\"\n", &ontology).is_err());
    }
}
