//! Cross-validated metrics and the multi-classifier comparison framework:
//! Friedman test over ranks, pairwise Wilcoxon signed-rank tests and Holm
//! step-down adjustment.
//!
//! A [`PerformanceTable`] has one row per comparison unit (a fold or a
//! dataset) and one column per classifier.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor, Normal};

use crate::corpus::{Corpus, FoldPlan};
use crate::error::{Error, Result};
use crate::models::{Example, FeatureResources, ModelArtifact, ModelSpec};
use crate::ontology::LabelPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    MacroPrecision,
    MacroRecall,
    MacroF1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [
        Metric::Accuracy,
        Metric::MacroPrecision,
        Metric::MacroRecall,
        Metric::MacroF1,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::MacroPrecision => "macro_precision",
            Metric::MacroRecall => "macro_recall",
            Metric::MacroF1 => "macro_f1",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown metric \"{s}\"")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Occurrences in the gold labels.
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: BTreeMap<String, ClassMetrics>,
}

impl MetricSet {
    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::MacroPrecision => self.macro_precision,
            Metric::MacroRecall => self.macro_recall,
            Metric::MacroF1 => self.macro_f1,
        }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Metrics over arbitrary class labels. Macro averages run over the classes
/// present in `y_true`; any 0/0 is taken as 0.
pub fn compute_metrics_by<T: Ord + ToString>(y_true: &[T], y_pred: &[T]) -> Result<MetricSet> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "{} gold labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("no labels to score"));
    }
    let classes: BTreeSet<&T> = y_true.iter().chain(y_pred).collect();
    let present: BTreeSet<&T> = y_true.iter().collect();
    let mut per_class = BTreeMap::new();
    let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
    for class in classes {
        let tp = y_true.iter().zip(y_pred).filter(|(t, p)| *t == class && *p == class).count();
        let predicted = y_pred.iter().filter(|p| *p == class).count();
        let support = y_true.iter().filter(|t| *t == class).count();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        if present.contains(class) {
            p_sum += precision;
            r_sum += recall;
            f_sum += f1;
        }
        per_class.insert(
            class.to_string(),
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    let m = present.len() as f64;
    let correct = y_true.iter().zip(y_pred).filter(|(t, p)| t == p).count();
    Ok(MetricSet {
        accuracy: ratio(correct, y_true.len()),
        macro_precision: p_sum / m,
        macro_recall: r_sum / m,
        macro_f1: f_sum / m,
        per_class,
    })
}

/// Binary metrics with classes named `absent` and `present`.
pub fn compute_metrics(y_true: &[bool], y_pred: &[bool]) -> Result<MetricSet> {
    let name = |v: &bool| if *v { "present" } else { "absent" };
    let t: Vec<&str> = y_true.iter().map(name).collect();
    let p: Vec<&str> = y_pred.iter().map(name).collect();
    compute_metrics_by(&t, &p)
}

pub fn metric_value(metric: Metric, y_true: &[bool], y_pred: &[bool]) -> Result<f64> {
    Ok(compute_metrics(y_true, y_pred)?.get(metric))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(MeanStd {
            mean,
            std: var.sqrt(),
        })
    }
}

impl fmt::Display for MeanStd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} (STD = {:.2})", self.mean, self.std)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub metrics: Option<MetricSet>,
    /// Why the fold produced no metrics.
    pub flag: Option<String>,
    pub feature_fingerprint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub spec: ModelSpec,
    pub dataset_id: String,
    pub label_path: LabelPath,
    pub k: usize,
    pub folds: Vec<FoldResult>,
    pub summary: BTreeMap<Metric, MeanStd>,
}

impl CvResult {
    pub fn name(&self) -> String {
        self.spec.name()
    }

    pub fn flags(&self) -> Vec<String> {
        self.folds
            .iter()
            .filter_map(|f| f.flag.as_ref().map(|m| format!("fold {}: {m}", f.fold)))
            .collect()
    }

    pub fn fold_scores(&self, metric: Metric) -> Vec<Option<f64>> {
        self.folds
            .iter()
            .map(|f| f.metrics.as_ref().map(|m| m.get(metric)))
            .collect()
    }
}

fn examples<'a>(instances: &[&'a crate::corpus::Instance], gold: &BTreeMap<String, bool>) -> Result<Vec<Example<'a>>> {
    instances
        .iter()
        .map(|i| {
            Ok(Example {
                id: &i.id,
                text: &i.text,
                label: *gold.get(&i.id).ok_or_else(|| Error::MissingGold(i.id.clone()))?,
            })
        })
        .collect()
}

/// Fits encoder and model on the training split of `fold` only.
pub fn fit_fold(
    spec: &ModelSpec,
    resources: &FeatureResources,
    corpus: &Corpus,
    gold: &BTreeMap<String, bool>,
    plan: &FoldPlan,
    fold: usize,
) -> Result<ModelArtifact> {
    let (train, _) = plan.split(corpus, fold);
    let train = examples(&train, gold)?;
    let mut artifact = ModelArtifact::fit(spec, &plan.stratify_on, resources, &train)?;
    artifact.model.metadata.fold = Some(fold);
    artifact.model.metadata.dataset = Some(corpus.manifest.dataset_id.clone());
    Ok(artifact)
}

fn evaluate_fold(
    spec: &ModelSpec,
    resources: &FeatureResources,
    corpus: &Corpus,
    gold: &BTreeMap<String, bool>,
    plan: &FoldPlan,
    fold: usize,
) -> Result<FoldResult> {
    let (train, test) = plan.split(corpus, fold);
    let mut result = FoldResult {
        fold,
        train_size: train.len(),
        test_size: test.len(),
        metrics: None,
        flag: None,
        feature_fingerprint: None,
    };
    let train_labels: BTreeSet<bool> = examples(&train, gold)?.iter().map(|e| e.label).collect();
    if train_labels.len() < 2 {
        result.flag = Some("single-class training data".into());
        return Ok(result);
    }
    if test.is_empty() {
        result.flag = Some("empty test fold".into());
        return Ok(result);
    }
    let artifact = match fit_fold(spec, resources, corpus, gold, plan, fold) {
        Ok(a) => a,
        Err(e @ (Error::Training(_) | Error::Diverged { .. })) => {
            result.flag = Some(e.to_string());
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    let test = examples(&test, gold)?;
    let mut y_true = Vec::with_capacity(test.len());
    let mut y_pred = Vec::with_capacity(test.len());
    for e in &test {
        let x = artifact.encode(e.id, e.text)?;
        y_pred.push(artifact.model.decide(&x)?.positive);
        y_true.push(e.label);
    }
    result.metrics = Some(compute_metrics(&y_true, &y_pred)?);
    result.feature_fingerprint = Some(artifact.encoder.fingerprint());
    Ok(result)
}

/// k-fold cross-validation; every fitted statistic comes from the training
/// split. Folds run in parallel and are reported in fold order.
pub fn run_cv(
    spec: &ModelSpec,
    resources: &FeatureResources,
    corpus: &Corpus,
    gold: &BTreeMap<String, bool>,
    plan: &FoldPlan,
) -> Result<CvResult> {
    let folds = (0..plan.k)
        .into_par_iter()
        .map(|fold| evaluate_fold(spec, resources, corpus, gold, plan, fold))
        .collect::<Result<Vec<_>>>()?;
    let summary = Metric::ALL
        .into_iter()
        .filter_map(|m| {
            let values: Vec<f64> = folds
                .iter()
                .filter_map(|f| f.metrics.as_ref().map(|s| s.get(m)))
                .collect();
            MeanStd::of(&values).map(|s| (m, s))
        })
        .collect();
    Ok(CvResult {
        spec: spec.clone(),
        dataset_id: corpus.manifest.dataset_id.clone(),
        label_path: plan.stratify_on.clone(),
        k: plan.k,
        folds,
        summary,
    })
}

/// Ranks within one row, 1 = highest score, ties averaged.
pub fn rank_descending(row: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    average_ranks(&order, |i| row[i])
}

/// Assigns 1-based ranks following `order`, averaging runs of equal keys.
fn average_ranks(order: &[usize], key: impl Fn(usize) -> f64) -> Vec<f64> {
    let mut ranks = vec![0.0; order.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && key(order[end]) == key(order[start]) {
            end += 1;
        }
        let rank = (start + 1 + end) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    pub average_ranks: Vec<f64>,
    pub units: usize,
    pub classifiers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImanDavenport {
    pub statistic: f64,
    pub df1: usize,
    pub df2: usize,
    pub p_value: f64,
}

fn check_table(table: &[Vec<f64>]) -> Result<(usize, usize)> {
    let n = table.len();
    let k = table.first().map_or(0, Vec::len);
    if n < 2 || k < 2 {
        return Err(Error::Statistics(format!(
            "need at least 2 comparison units and 2 classifiers, got {n} x {k}"
        )));
    }
    if table.iter().any(|r| r.len() != k) {
        return Err(Error::Statistics("ragged performance table".into()));
    }
    if table.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Statistics("missing cells in performance table".into()));
    }
    Ok((n, k))
}

/// `table[unit][classifier]`, higher scores better.
pub fn friedman_test(table: &[Vec<f64>]) -> Result<FriedmanResult> {
    let (n, k) = check_table(table)?;
    let mut average_ranks = vec![0.0; k];
    for row in table {
        for (j, r) in rank_descending(row).into_iter().enumerate() {
            average_ranks[j] += r;
        }
    }
    average_ranks.iter_mut().for_each(|r| *r /= n as f64);
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = average_ranks.iter().map(|r| r * r).sum();
    let statistic = (12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    let chi = ChiSquared::new((k - 1) as f64).map_err(|e| Error::Statistics(e.to_string()))?;
    Ok(FriedmanResult {
        statistic,
        df: k - 1,
        p_value: chi.sf(statistic),
        average_ranks,
        units: n,
        classifiers: k,
    })
}

/// The F refinement `(N−1)χ² / (N(k−1) − χ²)`.
pub fn iman_davenport(friedman: &FriedmanResult) -> Result<ImanDavenport> {
    let (n, k) = (friedman.units as f64, friedman.classifiers as f64);
    let df1 = friedman.classifiers - 1;
    let df2 = (friedman.classifiers - 1) * (friedman.units - 1);
    let denominator = n * (k - 1.0) - friedman.statistic;
    let (statistic, p_value) = if denominator <= 0.0 {
        (f64::INFINITY, 0.0)
    } else {
        let f = (n - 1.0) * friedman.statistic / denominator;
        let dist = FisherSnedecor::new(df1 as f64, df2 as f64).map_err(|e| Error::Statistics(e.to_string()))?;
        (f, dist.sf(f))
    };
    Ok(ImanDavenport {
        statistic,
        df1,
        df2,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WilcoxonResult {
    pub w: f64,
    pub r_plus: f64,
    pub r_minus: f64,
    /// Pairs left after dropping zero differences.
    pub n: usize,
    pub p_value: f64,
    pub exact: bool,
}

pub const EXACT_WILCOXON_MAX_N: usize = 12;

/// Two-sided signed-rank test on paired scores.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<WilcoxonResult> {
    if a.len() != b.len() {
        return Err(Error::Statistics(format!(
            "paired samples differ in length: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(Error::Statistics("non-finite score".into()));
    }
    let n = diffs.len();
    if n == 0 {
        return Err(Error::Statistics("all differences zero".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| diffs[i].abs().total_cmp(&diffs[j].abs()));
    let ranks = average_ranks(&order, |i| diffs[i].abs());
    let r_plus = (0..n).filter(|&i| diffs[i] > 0.0).fold(0.0, |s, i| s + ranks[i]);
    let total = (n * (n + 1)) as f64 / 2.0;
    let r_minus = total - r_plus;
    let w = r_plus.min(r_minus);
    let (p_value, exact) = if n <= EXACT_WILCOXON_MAX_N {
        let tolerance = 1e-9;
        let extreme = (0u32..1 << n)
            .filter(|mask| {
                let plus: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
                plus.min(total - plus) <= w + tolerance
            })
            .count();
        (extreme as f64 / (1u64 << n) as f64, true)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let mut tie_term = 0.0;
        let mut sorted: Vec<f64> = ranks.clone();
        sorted.sort_by(f64::total_cmp);
        for run in sorted.chunk_by(|x, y| x == y) {
            let t = run.len() as f64;
            tie_term += t * t * t - t;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let z = ((mean - w - 0.5) / var.sqrt()).max(0.0);
        let normal = Normal::standard();
        ((2.0 * normal.sf(z)).min(1.0), false)
    };
    Ok(WilcoxonResult {
        w,
        r_plus,
        r_minus,
        n,
        p_value,
        exact,
    })
}

/// Holm step-down adjustment, returned in input order.
pub fn holm_adjust(p_values: &[f64]) -> Result<Vec<f64>> {
    if let Some(p) = p_values.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(Error::Statistics(format!("p-value {p} outside [0, 1]")));
    }
    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].total_cmp(&p_values[b]));
    let mut adjusted = vec![0.0; m];
    let mut running = 0.0f64;
    for (rank, &i) in order.iter().enumerate() {
        running = running.max(((m - rank) as f64 * p_values[i]).min(1.0));
        adjusted[i] = running;
    }
    Ok(adjusted)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnitKind {
    Fold,
    Dataset,
}

/// Scores per comparison unit (row) and classifier (column).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerformanceTable {
    pub metric: Metric,
    pub unit_kind: UnitKind,
    pub classifiers: Vec<String>,
    pub units: Vec<String>,
    /// `scores[unit][classifier]`; a missing cell is `None`.
    pub scores: Vec<Vec<Option<f64>>>,
}

impl PerformanceTable {
    /// Rows are the folds of one dataset; all results must share the fold plan.
    pub fn from_folds(results: &[CvResult], metric: Metric) -> Result<Self> {
        let first = results
            .first()
            .ok_or_else(|| Error::Statistics("no cross-validation results".into()))?;
        if let Some(bad) = results
            .iter()
            .find(|r| r.k != first.k || r.dataset_id != first.dataset_id)
        {
            return Err(Error::Statistics(format!(
                "{} was not evaluated on the same folds as {}",
                bad.name(),
                first.name()
            )));
        }
        let columns: Vec<Vec<Option<f64>>> = results.iter().map(|r| r.fold_scores(metric)).collect();
        Ok(PerformanceTable {
            metric,
            unit_kind: UnitKind::Fold,
            classifiers: unique_names(results)?,
            units: (0..first.k).map(|f| format!("{}#fold{f}", first.dataset_id)).collect(),
            scores: (0..first.k).map(|f| columns.iter().map(|c| c[f]).collect()).collect(),
        })
    }

    /// Rows are datasets, cells the CV mean of `metric`.
    pub fn from_datasets(results: &[CvResult], metric: Metric) -> Result<Self> {
        let mut classifiers: Vec<String> = results.iter().map(CvResult::name).collect();
        classifiers.sort();
        classifiers.dedup();
        let mut cells: BTreeMap<(String, String), Option<f64>> = BTreeMap::new();
        for r in results {
            let key = (r.dataset_id.clone(), r.name());
            if cells.insert(key, r.summary.get(&metric).map(|s| s.mean)).is_some() {
                return Err(Error::Statistics(format!(
                    "{} appears twice for dataset {}",
                    r.name(),
                    r.dataset_id
                )));
            }
        }
        let units: Vec<String> = results
            .iter()
            .map(|r| r.dataset_id.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let mut scores = Vec::new();
        for u in &units {
            let mut row = Vec::new();
            for c in &classifiers {
                let cell = cells.get(&(u.clone(), c.clone())).ok_or_else(|| {
                    Error::Statistics(format!("ragged table: {c} missing on dataset {u}"))
                })?;
                row.push(*cell);
            }
            scores.push(row);
        }
        Ok(PerformanceTable {
            metric,
            unit_kind: UnitKind::Dataset,
            classifiers,
            units,
            scores,
        })
    }

    pub fn column(&self, j: usize) -> Vec<Option<f64>> {
        self.scores.iter().map(|r| r[j]).collect()
    }

    /// Dense table, or an error naming the first missing cell.
    pub fn complete(&self) -> Result<Vec<Vec<f64>>> {
        self.scores
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .map(|(j, v)| {
                        v.ok_or_else(|| {
                            Error::Statistics(format!(
                                "missing cells: {} has no score on {}",
                                self.classifiers[j], self.units[i]
                            ))
                        })
                    })
                    .collect()
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec![format!("{:?}", self.unit_kind).to_lowercase()];
        header.extend(self.classifiers.iter().cloned());
        w.write_record(&header).expect("in-memory write");
        for (unit, row) in self.units.iter().zip(&self.scores) {
            let mut record = vec![unit.clone()];
            record.extend(row.iter().map(|v| v.map_or(String::new(), |v| v.to_string())));
            w.write_record(&record).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
    }
}

fn unique_names(results: &[CvResult]) -> Result<Vec<String>> {
    let names: Vec<String> = results.iter().map(CvResult::name).collect();
    let unique: BTreeSet<&String> = names.iter().collect();
    if unique.len() != names.len() {
        return Err(Error::Statistics("duplicate classifier in comparison".into()));
    }
    Ok(names)
}

pub const MINIMUM_UNITS: usize = 5;
pub const RECOMMENDED_UNITS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FlagLevel {
    Hard,
    Soft,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplicabilityFlag {
    pub level: FlagLevel,
    pub message: String,
}

pub fn applicability(units: usize) -> Option<ApplicabilityFlag> {
    if units < MINIMUM_UNITS {
        Some(ApplicabilityFlag {
            level: FlagLevel::Hard,
            message: format!(
                "below minimum applicability: {units} comparison units, at least {MINIMUM_UNITS} required"
            ),
        })
    } else if units < RECOMMENDED_UNITS {
        Some(ApplicabilityFlag {
            level: FlagLevel::Soft,
            message: format!(
                "below recommended: {units} comparison units, at least {RECOMMENDED_UNITS} recommended"
            ),
        })
    } else {
        None
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseTest {
    pub a: String,
    pub b: String,
    pub wilcoxon: Option<WilcoxonResult>,
    pub p_holm: Option<f64>,
    /// Why no test was computed.
    pub note: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComparisonOptions {
    pub iman_davenport: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub table: PerformanceTable,
    pub summary: Vec<Option<MeanStd>>,
    pub ranks: Vec<Vec<f64>>,
    pub average_ranks: Vec<f64>,
    pub friedman: Option<FriedmanResult>,
    pub iman_davenport: Option<ImanDavenport>,
    pub pairwise: Vec<PairwiseTest>,
    pub flags: Vec<ApplicabilityFlag>,
    pub notes: Vec<String>,
}

/// Full comparison report. Statistics that cannot be computed are recorded
/// as notes rather than aborting the report.
pub fn compare_classifiers(table: PerformanceTable, options: ComparisonOptions) -> Result<ComparisonReport> {
    if table.classifiers.len() < 2 {
        return Err(Error::Statistics("need at least two classifiers".into()));
    }
    if table.scores.iter().any(|r| r.len() != table.classifiers.len()) {
        return Err(Error::Statistics("ragged performance table".into()));
    }
    let mut notes = Vec::new();
    let summary = (0..table.classifiers.len())
        .map(|j| {
            let present: Vec<f64> = table.column(j).into_iter().flatten().collect();
            MeanStd::of(&present)
        })
        .collect();
    let dense = table.complete();
    let (ranks, friedman) = match &dense {
        Ok(rows) => {
            let ranks = rows.iter().map(|r| rank_descending(r)).collect();
            let friedman = friedman_test(rows).map_err(|e| notes.push(e.to_string())).ok();
            (ranks, friedman)
        }
        Err(e) => {
            notes.push(e.to_string());
            (Vec::new(), None)
        }
    };
    let average_ranks = friedman.as_ref().map_or_else(Vec::new, |f| f.average_ranks.clone());
    let iman = match (&friedman, options.iman_davenport) {
        (Some(f), true) => iman_davenport(f).map_err(|e| notes.push(e.to_string())).ok(),
        _ => None,
    };

    let k = table.classifiers.len();
    let mut pairwise = Vec::with_capacity(k * (k - 1) / 2);
    for a in 0..k {
        for b in a + 1..k {
            let (x, y): (Vec<f64>, Vec<f64>) = table
                .scores
                .iter()
                .filter_map(|r| Some((r[a]?, r[b]?)))
                .unzip();
            let (wilcoxon, note) = match wilcoxon_signed_rank(&x, &y) {
                Ok(w) => (Some(w), None),
                Err(Error::Statistics(m)) if m == "all differences zero" => (None, Some("no differences".to_string())),
                Err(e) => (None, Some(e.to_string())),
            };
            pairwise.push(PairwiseTest {
                a: table.classifiers[a].clone(),
                b: table.classifiers[b].clone(),
                wilcoxon,
                p_holm: None,
                note,
            });
        }
    }
    let raw: Vec<f64> = pairwise.iter().filter_map(|t| t.wilcoxon.as_ref().map(|w| w.p_value)).collect();
    let mut adjusted = holm_adjust(&raw)?.into_iter();
    for t in pairwise.iter_mut().filter(|t| t.wilcoxon.is_some()) {
        t.p_holm = adjusted.next();
    }
    let flags = applicability(table.units.len()).into_iter().collect();
    Ok(ComparisonReport {
        table,
        summary,
        ranks,
        average_ranks,
        friedman,
        iman_davenport: iman,
        pairwise,
        flags,
        notes,
    })
}

fn fmt_p(p: f64) -> String {
    if p < 0.001 {
        "< 0.001".into()
    } else {
        format!("{p:.3}")
    }
}

impl ComparisonReport {
    /// Classifiers by best average rank first.
    pub fn leaderboard(&self) -> Vec<(String, f64)> {
        let mut board: Vec<(String, f64)> = self
            .table
            .classifiers
            .iter()
            .cloned()
            .zip(self.average_ranks.iter().copied())
            .collect();
        board.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        board
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let width = self.table.classifiers.iter().map(String::len).max().unwrap_or(0).max(10);
        for flag in &self.flags {
            let level = match flag.level {
                FlagLevel::Hard => "HARD",
                FlagLevel::Soft => "SOFT",
            };
            let _ = writeln!(out, "[{level}] {}", flag.message);
        }
        let _ = writeln!(
            out,
            "{:<width$}  {:<22}  avg rank",
            "classifier",
            self.table.metric.to_string()
        );
        for (j, name) in self.table.classifiers.iter().enumerate() {
            let cell = self.summary[j].map_or("n/a".to_string(), |s| s.to_string());
            let rank = self.average_ranks.get(j).map_or("n/a".to_string(), |r| format!("{r:.2}"));
            let _ = writeln!(out, "{name:<width$}  {cell:<22}  {rank}");
        }
        if let Some(f) = &self.friedman {
            let _ = writeln!(
                out,
                "Friedman chi2 = {:.2} (df = {}), p {}",
                f.statistic,
                f.df,
                if f.p_value < 0.001 { "< 0.001".to_string() } else { format!("= {:.3}", f.p_value) }
            );
        }
        if let Some(i) = &self.iman_davenport {
            let _ = writeln!(out, "Iman-Davenport F = {:.2} ({}, {}), p = {}", i.statistic, i.df1, i.df2, fmt_p(i.p_value));
        }
        let _ = writeln!(out, "pairwise Wilcoxon signed-rank (Holm-adjusted, m = {}):", self.pairwise.iter().filter(|t| t.p_holm.is_some()).count());
        for t in &self.pairwise {
            match (&t.wilcoxon, t.p_holm) {
                (Some(w), Some(p)) => {
                    let _ = writeln!(
                        out,
                        "  {:<width$} vs {:<width$}  W = {:>6.1}  p = {}  adjusted p = {}",
                        t.a,
                        t.b,
                        w.w,
                        fmt_p(w.p_value),
                        fmt_p(p)
                    );
                }
                _ => {
                    let _ = writeln!(out, "  {:<width$} vs {:<width$}  {}", t.a, t.b, t.note.as_deref().unwrap_or("not tested"));
                }
            }
        }
        for n in &self.notes {
            let _ = writeln!(out, "note: {n}");
        }
        out
    }
}
