//! Labelled text corpora: JSONL import, segmentation into labelling units,
//! and stratified cross-validation fold planning.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::io::BufRead;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ontology::LabelPath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnitLevel {
    Sentence,
    Paragraph,
    Document,
}

impl FromStr for UnitLevel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sentence" => Ok(UnitLevel::Sentence),
            "paragraph" => Ok(UnitLevel::Paragraph),
            "document" => Ok(UnitLevel::Document),
            other => Err(Error::invalid(format!(
                "unknown unit level \"{other}\" (expected sentence, paragraph or document)"
            ))),
        }
    }
}

impl fmt::Display for UnitLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UnitLevel::Sentence => "sentence",
            UnitLevel::Paragraph => "paragraph",
            UnitLevel::Document => "document",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub id: String,
    pub dataset_id: String,
    pub text: String,
    pub unit_level: UnitLevel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_ref: Option<String>,
    pub language: String,
    /// Set when the instance's labels come only from external models; such
    /// instances may be used for training but never for evaluation.
    #[serde(default)]
    pub synthetic_annotation: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub dataset_id: String,
    #[serde(default)]
    pub description: String,
    pub language: String,
    pub unit_level: UnitLevel,
    #[serde(default)]
    pub licence: String,
}

impl DatasetManifest {
    pub fn new(dataset_id: impl Into<String>) -> Self {
        DatasetManifest {
            dataset_id: dataset_id.into(),
            description: String::new(),
            language: "en".into(),
            unit_level: UnitLevel::Sentence,
            licence: String::new(),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corpus {
    pub manifest: DatasetManifest,
    pub instances: Vec<Instance>,
}

/// Result of importing a corpus file: the corpus plus non-fatal warnings.
#[derive(Debug)]
pub struct Imported {
    pub corpus: Corpus,
    pub warnings: Vec<String>,
}

#[derive(Deserialize)]
struct InstanceRecord {
    id: Option<String>,
    text: Option<String>,
    unit_level: Option<UnitLevel>,
    source_ref: Option<String>,
    language: Option<String>,
    synthetic_annotation: Option<bool>,
}

/// Reads a JSONL corpus file. Every record is validated; instance order is
/// preserved.
pub fn import_jsonl(path: impl AsRef<Path>, manifest: DatasetManifest) -> Result<Imported> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    Corpus::from_jsonl(std::io::BufReader::new(file), manifest)
}

impl Corpus {
    pub fn new(manifest: DatasetManifest, instances: Vec<Instance>) -> Result<Self> {
        let mut seen = HashSet::new();
        for instance in &instances {
            if instance.dataset_id != manifest.dataset_id {
                return Err(Error::invalid(format!(
                    "instance \"{}\" belongs to dataset \"{}\", not \"{}\"",
                    instance.id, instance.dataset_id, manifest.dataset_id
                )));
            }
            if instance.text.trim().is_empty() {
                return Err(Error::invalid(format!("instance \"{}\" has empty text", instance.id)));
            }
            if !seen.insert(instance.id.as_str()) {
                return Err(Error::DuplicateInstance(instance.id.clone()));
            }
        }
        Ok(Corpus { manifest, instances })
    }

    pub fn from_jsonl(reader: impl BufRead, manifest: DatasetManifest) -> Result<Imported> {
        let mut instances = Vec::new();
        let mut seen = HashSet::new();
        let mut warnings = Vec::new();
        let mut unspaced = Vec::new();
        for (index, line) in reader.lines().enumerate() {
            let line_no = index + 1;
            let line = line.map_err(|e| Error::Line {
                line: line_no,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let fail = |message: String| Error::Line {
                line: line_no,
                message,
            };
            let record: InstanceRecord =
                serde_json::from_str(&line).map_err(|e| fail(format!("malformed record: {e}")))?;
            let id = record
                .id
                .ok_or_else(|| fail("missing required field `id`".into()))?;
            let text = record
                .text
                .ok_or_else(|| fail("missing required field `text`".into()))?;
            if text.trim().is_empty() {
                return Err(fail(format!("instance \"{id}\" has empty text")));
            }
            if !seen.insert(id.clone()) {
                return Err(fail(format!("duplicate instance id \"{id}\"")));
            }
            if text.chars().any(is_unspaced_script) {
                unspaced.push(id.clone());
            }
            instances.push(Instance {
                id,
                dataset_id: manifest.dataset_id.clone(),
                text,
                unit_level: record.unit_level.unwrap_or(manifest.unit_level),
                source_ref: record.source_ref,
                language: record.language.unwrap_or_else(|| manifest.language.clone()),
                synthetic_annotation: record.synthetic_annotation.unwrap_or(false),
            });
        }
        if let Some(first) = unspaced.first() {
            let warning = format!(
                "{} instances (first \"{first}\") use a script written without spaces between words; \
                 the tokenizer does not segment such runs",
                unspaced.len()
            );
            log::warn!("{warning}");
            warnings.push(warning);
        }
        if instances.is_empty() {
            let warning = format!("corpus \"{}\" contains no instances", manifest.dataset_id);
            log::warn!("{warning}");
            warnings.push(warning);
        }
        Ok(Imported {
            corpus: Corpus { manifest, instances },
            warnings,
        })
    }

    /// Writes the corpus back out in the JSONL import format.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for instance in &self.instances {
            let mut record = serde_json::Map::new();
            record.insert("id".into(), instance.id.clone().into());
            record.insert("text".into(), instance.text.clone().into());
            record.insert("unit_level".into(), instance.unit_level.to_string().into());
            if let Some(source) = &instance.source_ref {
                record.insert("source_ref".into(), source.clone().into());
            }
            record.insert("language".into(), instance.language.clone().into());
            record.insert(
                "synthetic_annotation".into(),
                instance.synthetic_annotation.into(),
            );
            out.push_str(&serde_json::Value::Object(record).to_string());
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Instance> {
        self.instances.iter().find(|i| i.id == id)
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Instance> {
        self.instances.iter_mut().find(|i| i.id == id)
    }

    /// Instances that may appear in evaluation splits.
    pub fn eligible(&self) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(|i| !i.synthetic_annotation)
    }

    /// Keeps only instances that carry a gold label.
    pub fn labelled_subset(&self, gold: &BTreeMap<String, bool>) -> Corpus {
        Corpus {
            manifest: self.manifest.clone(),
            instances: self
                .instances
                .iter()
                .filter(|i| gold.contains_key(&i.id))
                .cloned()
                .collect(),
        }
    }

    pub fn stats(&self) -> CorpusStats {
        let mut by_level = BTreeMap::new();
        let mut tokens = 0usize;
        for instance in &self.instances {
            *by_level.entry(instance.unit_level).or_insert(0) += 1;
            tokens += crate::features::preprocess(&instance.text).len();
        }
        let synthetic = self
            .instances
            .iter()
            .filter(|i| i.synthetic_annotation)
            .count();
        CorpusStats {
            dataset_id: self.manifest.dataset_id.clone(),
            instances: self.instances.len(),
            synthetic,
            eligible: self.instances.len() - synthetic,
            by_unit_level: by_level,
            mean_tokens: if self.instances.is_empty() {
                0.0
            } else {
                tokens as f64 / self.instances.len() as f64
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub dataset_id: String,
    pub instances: usize,
    pub synthetic: usize,
    pub eligible: usize,
    pub by_unit_level: BTreeMap<UnitLevel, usize>,
    pub mean_tokens: f64,
}

/// Rule-based splitter for labelling units.
///
/// Sentences end after `.`, `?`, `!` or `…` (plus any closing quotes or
/// brackets) when followed by whitespace and then an uppercase letter or an
/// opening quote. A period ending a listed abbreviation never ends a
/// sentence. Paragraphs are separated by one or more blank lines.
#[derive(Debug, Clone)]
pub struct Segmenter {
    abbreviations: BTreeSet<String>,
}

const DEFAULT_ABBREVIATIONS: &[&str] = &[
    "mr", "mrs", "ms", "dr", "prof", "st", "jr", "sr", "vs", "e.g", "i.e", "cf", "approx", "fig",
    "mt",
];

impl Default for Segmenter {
    fn default() -> Self {
        Segmenter::with_abbreviations(DEFAULT_ABBREVIATIONS.iter().copied())
    }
}

impl Segmenter {
    /// Abbreviations are given without their final period, e.g. `"dr"`.
    pub fn with_abbreviations<S: AsRef<str>>(abbreviations: impl IntoIterator<Item = S>) -> Self {
        Segmenter {
            abbreviations: abbreviations
                .into_iter()
                .map(|a| a.as_ref().trim_end_matches('.').to_lowercase())
                .collect(),
        }
    }

    pub fn segment(&self, text: &str, level: UnitLevel) -> Vec<String> {
        match level {
            UnitLevel::Document => {
                if text.trim().is_empty() {
                    Vec::new()
                } else {
                    vec![text.to_string()]
                }
            }
            UnitLevel::Paragraph => split_paragraphs(text),
            UnitLevel::Sentence => split_paragraphs(text)
                .iter()
                .flat_map(|p| self.split_sentences(p))
                .collect(),
        }
    }

    fn split_sentences(&self, text: &str) -> Vec<String> {
        let chars: Vec<(usize, char)> = text.char_indices().collect();
        let mut units = Vec::new();
        let mut start = 0usize;
        let mut i = 0usize;
        while i < chars.len() {
            let (_, c) = chars[i];
            if !is_terminator(c) {
                i += 1;
                continue;
            }
            let term_start = i;
            let mut j = i;
            while j < chars.len() && is_terminator(chars[j].1) {
                j += 1;
            }
            while j < chars.len() && is_closer(chars[j].1) {
                j += 1;
            }
            let end_byte = chars.get(j).map_or(text.len(), |&(b, _)| b);
            let mut k = j;
            while k < chars.len() && chars[k].1.is_whitespace() {
                k += 1;
            }
            let boundary = k > j
                && k < chars.len()
                && (chars[k].1.is_uppercase() || is_opener(chars[k].1))
                && !(chars[term_start].1 == '.' && j == term_start + 1
                    && self.is_abbreviation(&text[start..chars[term_start].0]));
            if boundary {
                let unit = text[start..end_byte].trim();
                if !unit.is_empty() {
                    units.push(unit.to_string());
                }
                start = chars[k].0;
            }
            i = j.max(i + 1);
        }
        let tail = text[start..].trim();
        if !tail.is_empty() {
            units.push(tail.to_string());
        }
        units
    }

    fn is_abbreviation(&self, before: &str) -> bool {
        let word = before
            .rsplit(|c: char| c.is_whitespace() || c == '(' || c == '"')
            .next()
            .unwrap_or("");
        !word.is_empty() && self.abbreviations.contains(&word.to_lowercase())
    }
}

/// Segments `text` with the default rules.
pub fn segment(text: &str, level: UnitLevel) -> Vec<String> {
    Segmenter::default().segment(text, level)
}

fn split_paragraphs(text: &str) -> Vec<String> {
    let mut units = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                units.push(current.join("\n").trim().to_string());
                current.clear();
            }
        } else {
            current.push(line);
        }
    }
    if !current.is_empty() {
        units.push(current.join("\n").trim().to_string());
    }
    units.retain(|u| !u.is_empty());
    units
}

fn is_terminator(c: char) -> bool {
    matches!(c, '.' | '?' | '!' | '…')
}

fn is_closer(c: char) -> bool {
    matches!(c, '"' | '\'' | '”' | '’' | ')' | ']' | '»')
}

fn is_opener(c: char) -> bool {
    matches!(c, '"' | '\'' | '“' | '‘' | '«' | '(')
}

/// Scripts usually written without spaces between words: Thai, Lao,
/// Myanmar, Khmer, kana and Han. Hangul is spaced and not listed.
fn is_unspaced_script(c: char) -> bool {
    matches!(c as u32,
        0x0E00..=0x0EFF | 0x1000..=0x109F | 0x1780..=0x17FF | 0x3040..=0x30FF | 0x3400..=0x4DBF | 0x4E00..=0x9FFF)
}

/// Assignment of evaluation-eligible instances to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratify_on: LabelPath,
    pub assignments: BTreeMap<String, usize>,
    /// Labelled but synthetic instances: added to every training split,
    /// never to a test split.
    pub training_only: Vec<String>,
}

impl FoldPlan {
    /// Training and test instances for `fold`, both in corpus order.
    pub fn split<'c>(&self, corpus: &'c Corpus, fold: usize) -> (Vec<&'c Instance>, Vec<&'c Instance>) {
        let training_only: HashSet<&str> = self.training_only.iter().map(String::as_str).collect();
        let mut train = Vec::new();
        let mut test = Vec::new();
        for instance in &corpus.instances {
            match self.assignments.get(&instance.id) {
                Some(&f) if f == fold => test.push(instance),
                Some(_) => train.push(instance),
                None if training_only.contains(instance.id.as_str()) => train.push(instance),
                None => {}
            }
        }
        (train, test)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &f in self.assignments.values() {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Plans `k` stratified folds over the non-synthetic instances of `corpus`.
///
/// Each class is shuffled with the seeded generator and dealt round-robin,
/// continuing the dealing position across classes, so per-fold class counts
/// and fold sizes each differ by at most one.
pub fn stratified_folds(
    corpus: &Corpus,
    gold: &BTreeMap<String, bool>,
    k: usize,
    seed: u64,
    stratify_on: &LabelPath,
) -> Result<FoldPlan> {
    if k < 2 {
        return Err(Error::InvalidFolds(format!("k must be at least 2, got {k}")));
    }
    let mut classes: BTreeMap<bool, Vec<&str>> = BTreeMap::new();
    let mut training_only = Vec::new();
    for instance in &corpus.instances {
        let label = gold.get(&instance.id);
        if instance.synthetic_annotation {
            if label.is_some() {
                training_only.push(instance.id.clone());
            }
            continue;
        }
        let label = *label.ok_or_else(|| Error::MissingGold(instance.id.clone()))?;
        classes.entry(label).or_default().push(&instance.id);
    }
    let eligible: usize = classes.values().map(Vec::len).sum();
    if k > eligible {
        return Err(Error::InvalidFolds(format!(
            "k = {k} exceeds the {eligible} evaluation-eligible instances; use a smaller k"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut assignments = BTreeMap::new();
    let mut position = 0usize;
    for ids in classes.values_mut() {
        ids.shuffle(&mut rng);
        for id in ids.iter() {
            assignments.insert(id.to_string(), position % k);
            position += 1;
        }
    }
    Ok(FoldPlan {
        k,
        seed,
        stratify_on: stratify_on.clone(),
        assignments,
        training_only,
    })
}
