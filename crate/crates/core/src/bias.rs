//! Minimal-pair probing: swap one class of tokens (pronouns, names) and
//! check whether predictions change.
//!
//! Each pair `[a, b]` is swapped in both directions at once, so applying
//! the same substitution to a counterfactual restores the original. Only
//! whole tokens match, in lower, Title or UPPER case; the replacement
//! copies that case pattern.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::is_token_char;
use crate::interpret::model_fingerprint;
use crate::models::{Decision, Encoder, ModelArtifact, TrainedModel};
use crate::ontology::LabelPath;

pub const DEMO_SUBSTITUTIONS: &str = include_str!("../data/substitutions.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubstitutionSet {
    pub classes: BTreeMap<String, Vec<[String; 2]>>,
}

impl FromStr for SubstitutionSet {
    type Err = Error;

    fn from_str(document: &str) -> Result<Self> {
        let set: SubstitutionSet = toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
        set.validate()?;
        Ok(set)
    }
}

impl SubstitutionSet {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .parse()
    }

    pub fn demo() -> Self {
        DEMO_SUBSTITUTIONS.parse().expect("demo substitutions are valid")
    }

    /// Forms must be lowercase single tokens, and each form may occur only
    /// once per class so the swap is a bijection.
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::invalid("substitution set has no classes"));
        }
        for (name, pairs) in &self.classes {
            if pairs.is_empty() {
                return Err(Error::invalid(format!("substitution class {name} has no pairs")));
            }
            let mut seen = BTreeMap::new();
            for pair in pairs {
                for form in pair {
                    if form.is_empty() || !form.chars().all(is_token_char) || form.to_lowercase() != *form {
                        return Err(Error::invalid(format!(
                            "class {name}: \"{form}\" is not a lowercase single token"
                        )));
                    }
                    if seen.insert(form.as_str(), ()).is_some() {
                        return Err(Error::invalid(format!(
                            "class {name}: \"{form}\" appears in more than one position"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    fn swap_table(&self, class: &str) -> BTreeMap<&str, &str> {
        let mut table = BTreeMap::new();
        for [a, b] in &self.classes[class] {
            table.insert(a.as_str(), b.as_str());
            table.insert(b.as_str(), a.as_str());
        }
        table
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Case {
    Lower,
    Title,
    Upper,
}

fn case_of(token: &str) -> Option<Case> {
    let mut chars = token.chars();
    let first = chars.next()?;
    let rest: String = chars.collect();
    let rest_lower = rest.to_lowercase() == rest;
    let rest_upper = rest.to_uppercase() == rest;
    if token.to_lowercase() == token {
        Some(Case::Lower)
    } else if first.is_uppercase() && rest_lower {
        Some(Case::Title)
    } else if first.is_uppercase() && rest_upper {
        Some(Case::Upper)
    } else {
        None
    }
}

fn apply_case(form: &str, case: Case) -> String {
    match case {
        Case::Lower => form.to_string(),
        Case::Upper => form.to_uppercase(),
        Case::Title => {
            let mut chars = form.chars();
            chars
                .next()
                .map(|c| c.to_uppercase().chain(chars).collect())
                .unwrap_or_default()
        }
    }
}

/// Text split into alternating token and non-token runs.
fn runs(text: &str) -> Vec<(bool, &str)> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut current: Option<bool> = None;
    for (i, c) in text.char_indices() {
        let is_token = is_token_char(c);
        match current {
            Some(kind) if kind == is_token => {}
            Some(kind) => {
                out.push((kind, &text[start..i]));
                start = i;
                current = Some(is_token);
            }
            None => current = Some(is_token),
        }
    }
    if let Some(kind) = current {
        out.push((kind, &text[start..]));
    }
    out
}

/// Applies the swap of `class`; returns the new text and the number of
/// replaced tokens.
pub fn substitute(text: &str, set: &SubstitutionSet, class: &str) -> (String, usize) {
    let table = set.swap_table(class);
    let mut out = String::with_capacity(text.len());
    let mut replaced = 0;
    for (is_token, run) in runs(text) {
        let hit = is_token
            .then(|| case_of(run))
            .flatten()
            .and_then(|case| table.get(run.to_lowercase().as_str()).map(|t| apply_case(t, case)));
        match hit {
            Some(new) => {
                out.push_str(&new);
                replaced += 1;
            }
            None => out.push_str(run),
        }
    }
    (out, replaced)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MinimalPair {
    pub instance_id: String,
    pub class: String,
    pub original: String,
    pub counterfactual: String,
    pub substitutions: usize,
}

/// One pair per (instance, class) with at least one matching token.
pub fn generate_minimal_pairs<'a>(
    instances: impl IntoIterator<Item = (&'a str, &'a str)>,
    set: &SubstitutionSet,
) -> Vec<MinimalPair> {
    let mut pairs = Vec::new();
    for (id, text) in instances {
        for class in set.classes.keys() {
            let (counterfactual, substitutions) = substitute(text, set, class);
            if substitutions > 0 {
                pairs.push(MinimalPair {
                    instance_id: id.to_string(),
                    class: class.clone(),
                    original: text.to_string(),
                    counterfactual,
                    substitutions,
                });
            }
        }
    }
    pairs
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub mean: f64,
    pub mean_abs: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlippedPair {
    pub instance_id: String,
    pub original: String,
    pub counterfactual: String,
    pub original_positive: bool,
    pub score_delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub pairs: usize,
    pub flips: usize,
    pub flip_rate: f64,
    /// Counterfactual score minus original score.
    pub score_delta: DeltaSummary,
    pub exemplars: Vec<FlippedPair>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub label_path: LabelPath,
    pub model_fingerprint: String,
    pub classes: BTreeMap<String, ClassReport>,
}

pub const MAX_EXEMPLARS: usize = 5;

struct Outcome<'a> {
    pair: &'a MinimalPair,
    original: Decision,
    counterfactual: Decision,
}

/// Label flips and score deltas of `model` over `pairs`.
pub fn evaluate_invariance(
    model: &TrainedModel,
    encoder: &Encoder,
    label_path: &LabelPath,
    pairs: &[MinimalPair],
) -> Result<BiasReport> {
    if pairs.is_empty() {
        return Err(Error::invalid("no pairs"));
    }
    if encoder.dim() != model.dim {
        return Err(Error::FeatureSpaceMismatch {
            expected: format!("{} columns", model.dim),
            actual: format!("{} columns", encoder.dim()),
        });
    }
    let outcomes = pairs
        .par_iter()
        .map(|pair| {
            Ok(Outcome {
                pair,
                original: model.decide(&encoder.encode(&pair.instance_id, &pair.original)?)?,
                counterfactual: model.decide(&encoder.encode(&pair.instance_id, &pair.counterfactual)?)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut by_class: BTreeMap<String, Vec<&Outcome>> = BTreeMap::new();
    for o in &outcomes {
        by_class.entry(o.pair.class.clone()).or_default().push(o);
    }
    let classes = by_class
        .into_iter()
        .map(|(class, items)| {
            let deltas: Vec<f64> = items.iter().map(|o| o.counterfactual.score - o.original.score).collect();
            let flipped: Vec<&&Outcome> = items
                .iter()
                .filter(|o| o.original.positive != o.counterfactual.positive)
                .collect();
            let n = items.len() as f64;
            let report = ClassReport {
                pairs: items.len(),
                flips: flipped.len(),
                flip_rate: flipped.len() as f64 / n,
                score_delta: DeltaSummary {
                    mean: deltas.iter().sum::<f64>() / n,
                    mean_abs: deltas.iter().map(|d| d.abs()).sum::<f64>() / n,
                    min: deltas.iter().copied().fold(f64::INFINITY, f64::min),
                    max: deltas.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                },
                exemplars: flipped
                    .iter()
                    .take(MAX_EXEMPLARS)
                    .map(|o| FlippedPair {
                        instance_id: o.pair.instance_id.clone(),
                        original: o.pair.original.clone(),
                        counterfactual: o.pair.counterfactual.clone(),
                        original_positive: o.original.positive,
                        score_delta: o.counterfactual.score - o.original.score,
                    })
                    .collect(),
            };
            (class, report)
        })
        .collect();
    Ok(BiasReport {
        label_path: label_path.clone(),
        model_fingerprint: model_fingerprint(model),
        classes,
    })
}

pub fn evaluate_artifact(artifact: &ModelArtifact, pairs: &[MinimalPair]) -> Result<BiasReport> {
    evaluate_invariance(&artifact.model, &artifact.encoder, &artifact.label_path, pairs)
}

impl BiasReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# minimal pairs on {} model={}", self.label_path, self.model_fingerprint);
        let _ = writeln!(out, "{:<20}  {:>6}  {:>6}  {:>9}  {:>12}", "class", "pairs", "flips", "flip rate", "mean |delta|");
        for (class, r) in &self.classes {
            let _ = writeln!(
                out,
                "{class:<20}  {:>6}  {:>6}  {:>9.4}  {:>12.6}",
                r.pairs, r.flips, r.flip_rate, r.score_delta.mean_abs
            );
            for e in &r.exemplars {
                let _ = writeln!(out, "    {}: \"{}\" -> \"{}\"", e.instance_id, e.original, e.counterfactual);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::{FeatureConfig, FeatureKind, FeatureSpace};
    use crate::models::{Family, FeatureSource, ModelSpec, Parameters, TrainingMetadata};

    fn pronouns() -> SubstitutionSet {
        "gender_pronouns = [[\"he\", \"she\"], [\"him\", \"her\"]]".parse().unwrap()
    }

    #[test]
    fn substitution_examples() {
        let s = pronouns();
        assert_eq!(substitute("he said he left", &s, "gender_pronouns").0, "she said she left");
        assert_eq!(substitute("the theater", &s, "gender_pronouns").1, 0);
        assert_eq!(substitute("He went", &s, "gender_pronouns").0, "She went");
        assert_eq!(substitute("HE went; ask him.", &s, "gender_pronouns").0, "SHE went; ask her.");
        assert_eq!(substitute("hE went", &s, "gender_pronouns").1, 0);
        assert_eq!(substitute("he told her", &s, "gender_pronouns").0, "she told him");
    }

    #[test]
    fn pairs_only_for_matches_and_round_trip() {
        let s = SubstitutionSet::demo();
        let pairs = generate_minimal_pairs([("a", "John saw her."), ("b", "Nothing here.")], &s);
        assert_eq!(pairs.len(), 2);
        assert!(pairs.iter().all(|p| p.instance_id == "a"));
        for p in &pairs {
            assert_eq!(substitute(&p.counterfactual, &s, &p.class).0, p.original);
        }
    }

    #[test]
    fn validation_rejects_non_bijections() {
        assert!("x = [[\"him\", \"her\"], [\"his\", \"her\"]]".parse::<SubstitutionSet>().is_err());
        assert!("x = [[\"He\", \"she\"]]".parse::<SubstitutionSet>().is_err());
        assert!("x = [[\"a b\", \"c\"]]".parse::<SubstitutionSet>().is_err());
        assert!("x = []".parse::<SubstitutionSet>().is_err());
    }

    fn keyed_model() -> (TrainedModel, Encoder) {
        let config = FeatureConfig { kind: FeatureKind::Learned, orders: vec![1], min_df: 1, lexicon: None };
        let space = FeatureSpace::fit(&config, &["he"]).unwrap();
        let model = TrainedModel {
            spec: ModelSpec::new(Family::Logreg, FeatureSource::Learned),
            dim: 1,
            parameters: Parameters::Linear { weights: vec![4.0], bias: -1.0 },
            metadata: TrainingMetadata::default(),
        };
        (model, Encoder::Features(space))
    }

    #[test]
    fn keyed_model_flips_every_pair() {
        let (model, encoder) = keyed_model();
        let pairs = generate_minimal_pairs([("1", "he left"), ("2", "then he ran")], &pronouns());
        let r = evaluate_invariance(&model, &encoder, &LabelPath::aspect("SS"), &pairs).unwrap();
        let c = &r.classes["gender_pronouns"];
        assert_eq!((c.pairs, c.flips, c.flip_rate), (2, 2, 1.0));
        assert!(c.score_delta.mean < 0.0);
    }

    #[test]
    fn untouched_columns_never_flip() {
        let (model, _) = keyed_model();
        let config = FeatureConfig { kind: FeatureKind::Learned, orders: vec![1], min_df: 1, lexicon: None };
        let encoder = Encoder::Features(FeatureSpace::fit(&config, &["left"]).unwrap());
        let pairs = generate_minimal_pairs([("1", "he left")], &pronouns());
        let r = evaluate_invariance(&model, &encoder, &LabelPath::aspect("SS"), &pairs).unwrap();
        assert_eq!(r.classes["gender_pronouns"].flip_rate, 0.0);
        assert_eq!(r.classes["gender_pronouns"].score_delta.max, 0.0);
        assert!(evaluate_invariance(&model, &encoder, &LabelPath::aspect("SS"), &[]).is_err());
        let wide = Encoder::Features(FeatureSpace::fit(&config, &["a b"]).unwrap());
        assert!(matches!(
            evaluate_invariance(&model, &wide, &LabelPath::aspect("SS"), &pairs),
            Err(Error::FeatureSpaceMismatch { .. })
        ));
    }
}
