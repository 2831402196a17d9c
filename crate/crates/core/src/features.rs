//! Hybrid text features: learned TF-IDF n-grams and predefined lexicon
//! category proportions, with z-score normalization of lexicon columns.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Lowercased tokens with punctuation removed.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenStream(pub Vec<String>);

impl TokenStream {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }

    /// All n-grams of order `n`, space-joined.
    pub fn ngrams(&self, n: usize) -> impl Iterator<Item = String> + '_ {
        self.0.windows(n.max(1)).map(|w| w.join(" "))
    }
}

impl<S: Into<String>> FromIterator<S> for TokenStream {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        TokenStream(iter.into_iter().map(Into::into).collect())
    }
}

pub(crate) fn is_token_char(c: char) -> bool {
    c.is_alphanumeric() || c == '\'' || c == '’'
}

/// Lowercases, then splits into maximal runs of letters, digits and
/// apostrophes. Typographic apostrophes become `'`, and apostrophes at
/// either end of a run are dropped.
pub fn preprocess(text: &str) -> TokenStream {
    text.to_lowercase()
        .replace('’', "'")
        .split(|c: char| !is_token_char(c))
        .map(|run| run.trim_matches('\''))
        .filter(|run| !run.is_empty())
        .collect()
}

/// Sparse feature vector with strictly increasing indices and finite values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn new(dim: usize, entries: Vec<(usize, f64)>) -> Result<Self> {
        for w in entries.windows(2) {
            if w[0].0 >= w[1].0 {
                return Err(Error::invalid("feature indices must be strictly increasing"));
            }
        }
        if let Some(&(i, _)) = entries.last() {
            if i >= dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: i + 1,
                });
            }
        }
        if entries.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid("feature values must be finite"));
        }
        Ok(FeatureVector { dim, entries })
    }

    pub fn zeros(dim: usize) -> Self {
        FeatureVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Dense → sparse, dropping exact zeros.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        let entries = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v != 0.0)
            .map(|(i, &v)| (i, v))
            .collect();
        FeatureVector::new(values.len(), entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&index, |&(i, _)| i)
            .map_or(0.0, |pos| self.entries[pos].1)
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries.iter().map(|&(i, v)| v * weights[i]).sum()
    }

    pub fn squared_norm(&self) -> f64 {
        self.entries.iter().map(|(_, v)| v * v).sum()
    }

    /// Copy with column `index` set to `value`.
    pub fn with_value(&self, index: usize, value: f64) -> FeatureVector {
        let mut entries = self.entries.clone();
        match entries.binary_search_by_key(&index, |&(i, _)| i) {
            Ok(pos) if value == 0.0 => {
                entries.remove(pos);
            }
            Ok(pos) => entries[pos].1 = value,
            Err(_) if value == 0.0 => {}
            Err(pos) => entries.insert(pos, (index, value)),
        }
        FeatureVector {
            dim: self.dim,
            entries,
        }
    }

    /// Concatenates `other` after `self`.
    pub fn concat(&self, other: &FeatureVector) -> FeatureVector {
        let mut entries = self.entries.clone();
        entries.extend(other.entries.iter().map(|&(i, v)| (i + self.dim, v)));
        FeatureVector {
            dim: self.dim + other.dim,
            entries,
        }
    }
}

/// Dense per-column means of `rows`.
pub fn column_means(rows: &[FeatureVector], dim: usize) -> Vec<f64> {
    let mut sums = vec![0.0; dim];
    for row in rows {
        for &(i, v) in row.entries() {
            sums[i] += v;
        }
    }
    let n = rows.len().max(1) as f64;
    sums.iter_mut().for_each(|s| *s /= n);
    sums
}

/// N-gram vocabulary with document frequencies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub orders: Vec<usize>,
    pub min_df: usize,
    pub documents: usize,
    /// N-grams in lexicographic order; position is the column index.
    pub terms: Vec<String>,
    pub document_frequency: Vec<usize>,
    #[serde(skip)]
    index: BTreeMap<String, usize>,
}

impl Vocabulary {
    /// Keeps every n-gram of the given orders whose document frequency is at
    /// least `min_df`.
    pub fn fit(documents: &[TokenStream], orders: &[usize], min_df: usize) -> Result<Self> {
        if documents.is_empty() {
            return Err(Error::NoDocuments);
        }
        let mut df: BTreeMap<String, usize> = BTreeMap::new();
        for doc in documents {
            let unique: BTreeSet<String> = orders.iter().flat_map(|&n| doc.ngrams(n)).collect();
            for gram in unique {
                *df.entry(gram).or_default() += 1;
            }
        }
        let (terms, document_frequency): (Vec<String>, Vec<usize>) =
            df.into_iter().filter(|(_, c)| *c >= min_df).unzip();
        let mut vocabulary = Vocabulary {
            orders: orders.to_vec(),
            min_df,
            documents: documents.len(),
            terms,
            document_frequency,
            index: BTreeMap::new(),
        };
        vocabulary.rebuild_index();
        Ok(vocabulary)
    }

    pub(crate) fn rebuild_index(&mut self) {
        self.index = self
            .terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// `ln((1 + N) / (1 + df)) + 1`.
    pub fn idf(&self, column: usize) -> f64 {
        let n = self.documents as f64;
        let df = self.document_frequency[column] as f64;
        ((1.0 + n) / (1.0 + df)).ln() + 1.0
    }

    /// Raw n-gram count times idf; out-of-vocabulary n-grams are ignored.
    pub fn tfidf(&self, tokens: &TokenStream) -> FeatureVector {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &n in &self.orders {
            for gram in tokens.ngrams(n) {
                if let Some(i) = self.index_of(&gram) {
                    *counts.entry(i).or_default() += 1;
                }
            }
        }
        let entries = counts
            .into_iter()
            .map(|(i, c)| (i, c as f64 * self.idf(i)))
            .collect();
        FeatureVector {
            dim: self.len(),
            entries,
        }
    }
}

pub fn tfidf_vector(tokens: &TokenStream, vocabulary: &Vocabulary) -> FeatureVector {
    vocabulary.tfidf(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Pattern {
    Literal(String),
    Prefix(String),
}

impl Pattern {
    pub fn parse(raw: &str) -> Result<Self> {
        let lower = raw.trim().to_lowercase();
        let (body, wildcard) = match lower.strip_suffix('*') {
            Some(prefix) => (prefix, true),
            None => (lower.as_str(), false),
        };
        if body.is_empty() {
            return Err(Error::InvalidLexicon(format!("empty pattern \"{raw}\"")));
        }
        if body.contains('*') {
            return Err(Error::InvalidLexicon(format!(
                "pattern \"{raw}\": wildcard allowed only in final position"
            )));
        }
        Ok(if wildcard {
            Pattern::Prefix(body.to_string())
        } else {
            Pattern::Literal(body.to_string())
        })
    }

    pub fn matches(&self, token: &str) -> bool {
        match self {
            Pattern::Literal(l) => token == l,
            Pattern::Prefix(p) => token.starts_with(p.as_str()),
        }
    }
}

impl fmt::Display for Pattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Pattern::Literal(l) => f.write_str(l),
            Pattern::Prefix(p) => write!(f, "{p}*"),
        }
    }
}

impl Serialize for Pattern {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Pattern {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        Pattern::parse(&raw).map_err(serde::de::Error::custom)
    }
}

/// Word-category lexicon. Categories are kept in name order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub categories: BTreeMap<String, Vec<Pattern>>,
}

/// A small open demo lexicon: first-person pronouns, social and affect words.
pub const DEMO_LEXICON: &str = include_str!("../data/lexicon.toml");

impl FromStr for Lexicon {
    type Err = Error;

    fn from_str(document: &str) -> Result<Self> {
        let lexicon: Lexicon =
            toml::from_str(document).map_err(|e| Error::InvalidLexicon(e.to_string()))?;
        lexicon.validate()?;
        Ok(lexicon)
    }
}

impl Lexicon {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        std::fs::read_to_string(path)
            .map_err(|e| Error::io(path, e))?
            .parse()
    }

    pub fn demo() -> Self {
        DEMO_LEXICON.parse().expect("demo lexicon is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.categories.is_empty() {
            return Err(Error::InvalidLexicon("no categories".into()));
        }
        for (name, patterns) in &self.categories {
            if patterns.is_empty() {
                return Err(Error::InvalidLexicon(format!("category {name} has no patterns")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    /// Whether any pattern of any category matches `token`.
    pub fn covers(&self, token: &str) -> bool {
        self.categories
            .values()
            .any(|ps| ps.iter().any(|p| p.matches(token)))
    }

    /// Proportion of tokens matching each category; each token counts at
    /// most once per category.
    pub fn proportions(&self, tokens: &TokenStream) -> Vec<f64> {
        if tokens.is_empty() {
            return vec![0.0; self.len()];
        }
        let total = tokens.len() as f64;
        self.categories
            .values()
            .map(|patterns| {
                let hits = tokens
                    .iter()
                    .filter(|t| patterns.iter().any(|p| p.matches(t)))
                    .count();
                hits as f64 / total
            })
            .collect()
    }
}

pub fn lexicon_features(tokens: &TokenStream, lexicon: &Lexicon) -> FeatureVector {
    FeatureVector::from_dense(&lexicon.proportions(tokens)).expect("proportions are finite")
}

/// Per-column population mean and standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Mean and population standard deviation of one column; a column whose
/// values are all equal gets σ = 0.
pub fn fit_zscore(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let constant = values.iter().all(|&v| v == values[0]);
    if constant {
        return (values[0], 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl NormalizationStats {
    /// Fits column statistics over dense rows.
    pub fn fit(rows: &[Vec<f64>]) -> Self {
        let dim = rows.first().map_or(0, Vec::len);
        let (mean, std) = (0..dim)
            .map(|j| {
                let column: Vec<f64> = rows.iter().map(|r| r[j]).collect();
                fit_zscore(&column)
            })
            .unzip();
        NormalizationStats { mean, std }
    }

    /// `(v − μ) / σ`, with σ = 0 columns mapped to 0.
    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        values
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&v, (&m, &s))| if s == 0.0 { 0.0 } else { (v - m) / s })
            .collect()
    }
}

pub fn apply_zscore(values: &[f64], stats: &NormalizationStats) -> Vec<f64> {
    stats.apply(values)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Learned,
    Lexicon,
    Hybrid,
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" => Ok(FeatureKind::Learned),
            "lexicon" => Ok(FeatureKind::Lexicon),
            "hybrid" => Ok(FeatureKind::Hybrid),
            other => Err(Error::invalid(format!(
                "unknown feature kind \"{other}\" (expected learned, lexicon or hybrid)"
            ))),
        }
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureKind::Learned => "learned",
            FeatureKind::Lexicon => "lexicon",
            FeatureKind::Hybrid => "hybrid",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub kind: FeatureKind,
    pub orders: Vec<usize>,
    pub min_df: usize,
    pub lexicon: Option<Lexicon>,
}

impl FeatureConfig {
    pub fn new(kind: FeatureKind, lexicon: Option<Lexicon>) -> Self {
        FeatureConfig {
            kind,
            orders: vec![1, 2],
            min_df: 2,
            lexicon,
        }
    }
}

/// Fitted feature space. Learned columns come first, then lexicon columns;
/// only lexicon columns are z-scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpace {
    pub kind: FeatureKind,
    pub vocabulary: Option<Vocabulary>,
    pub lexicon: Option<Lexicon>,
    pub normalization: Option<NormalizationStats>,
    pub columns: Vec<String>,
}

impl FeatureSpace {
    pub fn fit<S: AsRef<str>>(config: &FeatureConfig, texts: &[S]) -> Result<Self> {
        if texts.is_empty() {
            return Err(Error::NoDocuments);
        }
        let tokens: Vec<TokenStream> = texts.iter().map(|t| preprocess(t.as_ref())).collect();
        let wants_learned = matches!(config.kind, FeatureKind::Learned | FeatureKind::Hybrid);
        let wants_lexicon = matches!(config.kind, FeatureKind::Lexicon | FeatureKind::Hybrid);
        let vocabulary = wants_learned
            .then(|| Vocabulary::fit(&tokens, &config.orders, config.min_df))
            .transpose()?;
        let lexicon = if wants_lexicon {
            let lexicon = config
                .lexicon
                .clone()
                .ok_or_else(|| Error::invalid(format!("{} features need a lexicon", config.kind)))?;
            lexicon.validate()?;
            Some(lexicon)
        } else {
            None
        };
        let normalization = lexicon.as_ref().map(|lex| {
            let rows: Vec<Vec<f64>> = tokens.iter().map(|t| lex.proportions(t)).collect();
            NormalizationStats::fit(&rows)
        });
        let mut columns = Vec::new();
        if let Some(v) = &vocabulary {
            columns.extend(v.terms.iter().map(|t| format!("tfidf:{t}")));
        }
        if let Some(l) = &lexicon {
            columns.extend(l.names().map(|n| format!("lexicon:{n}")));
        }
        Ok(FeatureSpace {
            kind: config.kind,
            vocabulary,
            lexicon,
            normalization,
            columns,
        })
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    pub fn transform(&self, text: &str) -> FeatureVector {
        self.transform_tokens(&preprocess(text))
    }

    pub fn transform_tokens(&self, tokens: &TokenStream) -> FeatureVector {
        let learned = self
            .vocabulary
            .as_ref()
            .map(|v| v.tfidf(tokens))
            .unwrap_or_else(|| FeatureVector::zeros(0));
        match (&self.lexicon, &self.normalization) {
            (Some(lex), Some(stats)) => {
                let z = stats.apply(&lex.proportions(tokens));
                learned.concat(&FeatureVector::from_dense(&z).expect("z-scores are finite"))
            }
            _ => learned,
        }
    }

    /// Stable identity of the fitted space.
    pub fn fingerprint(&self) -> String {
        fingerprint_json(self)
    }

    /// Restores lookup tables after deserialization.
    pub fn rebuild(&mut self) {
        if let Some(v) = &mut self.vocabulary {
            v.rebuild_index();
        }
    }
}

/// Hex SHA-256 prefix of a value's JSON encoding.
pub fn fingerprint_json<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("value serializes");
    hex::encode(&Sha256::digest(&bytes)[..16])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn docs(raw: &[&[&str]]) -> Vec<TokenStream> {
        raw.iter().map(|d| d.iter().copied().collect()).collect()
    }

    #[test]
    fn preprocess_examples() {
        assert_eq!(
            preprocess("I'm very connected with my body.").0,
            ["i'm", "very", "connected", "with", "my", "body"]
        );
        assert!(preprocess("").is_empty());
        assert_eq!(preprocess("A—B").0, ["a", "b"]);
        assert_eq!(preprocess("I’m 'here' -- 42x!").0, ["i'm", "here", "42x"]);
    }

    #[test]
    fn vocabulary_listing_and_min_df() {
        let d = docs(&[&["a", "b"], &["a", "c"]]);
        let v = Vocabulary::fit(&d, &[1, 2], 1).unwrap();
        assert_eq!(v.terms, ["a", "a b", "a c", "b", "c"]);
        let v2 = Vocabulary::fit(&d, &[1, 2], 2).unwrap();
        assert_eq!(v2.terms, ["a"]);
        assert!(matches!(Vocabulary::fit(&[], &[1, 2], 1), Err(Error::NoDocuments)));
    }

    #[test]
    fn idf_values() {
        let d = docs(&[&["a", "b"], &["a", "c"]]);
        let v = Vocabulary::fit(&d, &[1, 2], 1).unwrap();
        assert_eq!(v.idf(v.index_of("a").unwrap()), 1.0);
        let idf_b = v.idf(v.index_of("b").unwrap());
        assert!((idf_b - (1.5f64.ln() + 1.0)).abs() < 1e-15);
        assert!((idf_b - 1.4055).abs() < 1e-4);
        let x = v.tfidf(&["a", "a", "b"].into_iter().collect());
        assert_eq!(x.get(v.index_of("a").unwrap()), 2.0);
        let empty = v.tfidf(&["zzz"].into_iter().collect());
        assert_eq!((empty.nnz(), empty.dim()), (0, 5));
    }

    #[test]
    fn lexicon_wildcard_example() {
        let lex: Lexicon = "[categories]\nSOCIAL = [\"we\", \"friend*\"]\n".parse().unwrap();
        let tokens: TokenStream = ["we", "met", "a", "friendly", "friend"].into_iter().collect();
        assert_eq!(lex.proportions(&tokens), [0.6]);
        assert_eq!(lex.proportions(&TokenStream::default()), [0.0]);
        let overlap: Lexicon = "[categories]\nX = [\"friend\", \"friend*\"]\n".parse().unwrap();
        assert_eq!(overlap.proportions(&["friend", "x"].into_iter().collect()), [0.5]);
    }

    #[test]
    fn lexicon_validation() {
        assert!("[categories]\nX = [\"*\"]\n".parse::<Lexicon>().is_err());
        assert!("[categories]\nX = [\"a*b\"]\n".parse::<Lexicon>().is_err());
        assert!("[categories]\nX = []\n".parse::<Lexicon>().is_err());
        assert!("[categories]\n".parse::<Lexicon>().is_err());
        Lexicon::demo();
    }

    #[test]
    fn zscore_examples() {
        let (m, s) = fit_zscore(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let stats = NormalizationStats { mean: vec![m], std: vec![s] };
        let z: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|&v| stats.apply(&[v])[0]).collect();
        for (got, want) in z.iter().zip([-1.2247, 0.0, 1.2247]) {
            assert!((got - want).abs() < 1e-4);
        }
        assert_eq!(fit_zscore(&[5.0, 5.0, 5.0]).1, 0.0);
        let constant = NormalizationStats::fit(&[vec![0.1], vec![0.1], vec![0.1]]);
        assert_eq!(constant.apply(&[0.1]), [0.0]);
        assert_eq!(fit_zscore(&[7.0]), (7.0, 0.0));
    }

    #[test]
    fn hybrid_space_orders_columns() {
        let config = FeatureConfig {
            kind: FeatureKind::Hybrid,
            orders: vec![1],
            min_df: 1,
            lexicon: Some("[categories]\nI = [\"i\"]\nWE = [\"we\"]\n".parse().unwrap()),
        };
        let space = FeatureSpace::fit(&config, &["we went", "i went", "we we i"]).unwrap();
        assert_eq!(
            space.columns,
            ["tfidf:i", "tfidf:we", "tfidf:went", "lexicon:I", "lexicon:WE"]
        );
        let x = space.transform("we went");
        assert_eq!(x.dim(), 5);
        assert!(x.get(4) > 0.0 && x.get(3) < 0.0);
        let mut back: FeatureSpace =
            serde_json::from_str(&serde_json::to_string(&space).unwrap()).unwrap();
        back.rebuild();
        assert_eq!(back.transform("we went"), x);
        assert_eq!(back.fingerprint(), space.fingerprint());
    }

    #[test]
    fn feature_vector_invariants() {
        assert!(FeatureVector::new(3, vec![(1, 1.0), (1, 2.0)]).is_err());
        assert!(FeatureVector::new(3, vec![(3, 1.0)]).is_err());
        assert!(FeatureVector::new(3, vec![(0, f64::NAN)]).is_err());
        let v = FeatureVector::new(4, vec![(1, 2.0), (3, 1.0)]).unwrap();
        assert_eq!(v.with_value(2, 5.0).entries(), &[(1, 2.0), (2, 5.0), (3, 1.0)]);
        assert_eq!(v.with_value(1, 0.0).entries(), &[(3, 1.0)]);
        assert_eq!(v.to_dense(), [0.0, 2.0, 0.0, 1.0]);
    }
}
