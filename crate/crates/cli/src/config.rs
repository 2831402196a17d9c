//! Run configuration: a TOML file, overridden key by key by flags, then
//! checked as a whole so every problem is reported before work starts.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use selfscope_core::annotation::AdjudicationPolicy;
use selfscope_core::bias::SubstitutionSet;
use selfscope_core::corpus::{Corpus, UnitLevel};
use selfscope_core::features::Lexicon;
use selfscope_core::models::{EmbeddingProvider, ExpertRouter, FeatureResources, FeatureSource, Family, Hyperparameters, ModelSpec};
use selfscope_core::ontology::{load_ontology, LabelPath, Ontology};
use selfscope_core::project::{read_corpus_dir, Project, ProjectLayout, MANIFEST_FILE};

use crate::args::GlobalArgs;
use crate::CliError;

pub const HOME_VAR: &str = "SELFSCOPE_HOME";
pub const DEFAULT_K: usize = 10;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub project: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ontology: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub corpora: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub features: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub router: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub level: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub paths: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lexicon: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub substitutions: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub adjudicator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_df: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub orders: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hyperparameters: Option<Hyperparameters>,
}

fn rebase(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(vec![format!("cannot read {}: {e}", path.display())]))?;
        let mut config: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::config(vec![format!("{}: {e}", path.display())]))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut config.project,
            &mut config.ontology,
            &mut config.router,
            &mut config.out,
            &mut config.lexicon,
            &mut config.substitutions,
        ] {
            rebase(base, p);
        }
        if let Some(e) = &mut config.embeddings {
            if !e.starts_with("hashed:") && Path::new(e.as_str()).is_relative() {
                *e = base.join(&*e).to_string_lossy().into_owned();
            }
        }
        config.corpora = config
            .corpora
            .into_iter()
            .map(|c| {
                let p = base.join(&c);
                if p.join(MANIFEST_FILE).exists() {
                    p.to_string_lossy().into_owned()
                } else {
                    c
                }
            })
            .collect();
        Ok(config)
    }

    /// Applies every flag that was given.
    pub fn with_flags(mut self, flags: &GlobalArgs) -> Self {
        macro_rules! set {
            ($($field:ident <- $flag:ident),*) => {$(
                if let Some(v) = &flags.$flag {
                    self.$field = Some(v.clone());
                }
            )*};
        }
        set!(project <- project, ontology <- ontology, features <- features, router <- router,
             k <- k, seed <- seed, out <- out, level <- level, lexicon <- lexicon,
             embeddings <- embeddings, substitutions <- substitutions, adjudicator <- adjudicator);
        if !flags.corpus.is_empty() {
            self.corpora = flags.corpus.clone();
        }
        if !flags.model.is_empty() {
            self.models = flags.model.clone();
        }
        if !flags.paths.is_empty() {
            self.paths = flags.paths.clone();
        }
        self
    }
}

/// What a command needs from the configuration.
#[derive(Debug, Clone, Copy, Default)]
pub struct Needs {
    pub seed: bool,
    pub models: bool,
    pub paths: bool,
}

#[derive(Debug, Clone)]
pub struct Resolved {
    /// The merged configuration with defaults filled in, as written next to
    /// every output.
    pub config: RunConfig,
    pub root: PathBuf,
    pub ontology: Ontology,
    pub models: Vec<ModelSpec>,
    pub features: FeatureSource,
    pub k: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub level: UnitLevel,
    pub paths: Vec<LabelPath>,
    pub router: Option<ExpertRouter>,
    pub lexicon: Lexicon,
    pub embeddings: Option<EmbeddingProvider>,
    pub substitutions: Option<SubstitutionSet>,
}

pub fn parse_model(name: &str, default_features: FeatureSource) -> Result<(Family, FeatureSource), String> {
    let (family, features) = match name.split_once('+') {
        Some((f, s)) => (f, Some(s)),
        None => (name, None),
    };
    let family: Family = family.trim().parse().map_err(|e| format!("model \"{name}\": {e}"))?;
    let features = match features {
        Some(s) => s.trim().parse().map_err(|e| format!("model \"{name}\": {e}"))?,
        None => default_features,
    };
    Ok((family, features))
}

fn parse_embeddings(spec: &str) -> Result<EmbeddingProvider, String> {
    match spec.strip_prefix("hashed:") {
        Some(dim) => dim
            .parse::<usize>()
            .ok()
            .filter(|&d| d > 0)
            .map(EmbeddingProvider::hashed)
            .ok_or_else(|| format!("embeddings \"{spec}\": expected hashed:<positive dim>")),
        None => EmbeddingProvider::load(spec).map_err(|e| format!("embeddings \"{spec}\": {e}")),
    }
}

/// Resolves `config` for a command with `needs`, collecting every error.
pub fn resolve(mut config: RunConfig, needs: Needs) -> Result<Resolved, CliError> {
    let mut errors = Vec::new();
    let root = config
        .project
        .clone()
        .or_else(|| std::env::var_os(HOME_VAR).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    config.project = Some(root.clone());
    let layout = ProjectLayout::new(&root);

    let ontology_file = config.ontology.clone().or_else(|| {
        let p = layout.ontology();
        p.exists().then_some(p)
    });
    let ontology = match &ontology_file {
        Some(p) => load_ontology(p).unwrap_or_else(|e| {
            errors.push(format!("ontology {}: {e}", p.display()));
            Ontology::sample()
        }),
        None => Ontology::sample(),
    };

    let features: FeatureSource = match config.features.as_deref().unwrap_or("learned").parse() {
        Ok(f) => f,
        Err(e) => {
            errors.push(format!("features: {e}"));
            FeatureSource::Learned
        }
    };
    config.features = Some(features.to_string());

    let seed = match config.seed {
        Some(s) => s,
        None => {
            if needs.seed {
                errors.push("seed is required for this command (--seed or `seed` in the config)".into());
            }
            0
        }
    };

    let hyperparameters = config.hyperparameters.clone().unwrap_or_default();
    let mut models = Vec::new();
    for name in &config.models {
        match parse_model(name, features) {
            Ok((family, source)) => models.push(ModelSpec {
                family,
                features: source,
                hyperparameters: hyperparameters.clone(),
                seed,
            }),
            Err(e) => errors.push(e),
        }
    }
    if needs.models && config.models.is_empty() {
        errors.push("at least one model is required (--model)".into());
    }

    let k = config.k.unwrap_or(DEFAULT_K);
    if k < 2 {
        errors.push(format!("k must be at least 2, got {k}"));
    }
    config.k = Some(k);

    let level = match config.level.as_deref().unwrap_or("sentence").parse::<UnitLevel>() {
        Ok(l) => l,
        Err(e) => {
            errors.push(format!("level: {e}"));
            UnitLevel::Sentence
        }
    };
    config.level = Some(level.to_string());

    let mut paths = Vec::new();
    for p in &config.paths {
        match ontology.resolve(p) {
            Ok(path) => paths.push(path),
            Err(e) => errors.push(format!("path \"{p}\": {e}")),
        }
    }
    if needs.paths && paths.is_empty() {
        errors.push("at least one label path is required (--paths)".into());
    }

    let router_file = config.router.clone().or_else(|| {
        let p = layout.router();
        p.exists().then_some(p)
    });
    let router = router_file.and_then(|p| match ExpertRouter::load(&p, &ontology) {
        Ok(r) => Some(r),
        Err(e) => {
            errors.push(format!("router {}: {e}", p.display()));
            None
        }
    });

    let lexicon_file = config.lexicon.clone().or_else(|| {
        let p = layout.lexicon();
        p.exists().then_some(p)
    });
    let lexicon = match &lexicon_file {
        Some(p) => Lexicon::load(p).unwrap_or_else(|e| {
            errors.push(format!("lexicon {}: {e}", p.display()));
            Lexicon::demo()
        }),
        None => Lexicon::demo(),
    };

    let needs_embeddings = models.iter().any(|m| m.features == FeatureSource::Embedding);
    let embeddings = match &config.embeddings {
        Some(spec) => parse_embeddings(spec).map_err(|e| errors.push(e)).ok(),
        None => {
            if needs_embeddings {
                errors.push("embedding models need --embeddings (a file or hashed:<dim>)".into());
            }
            None
        }
    };

    let substitutions = config.substitutions.as_ref().map(|p| {
        SubstitutionSet::load(p).unwrap_or_else(|e| {
            errors.push(format!("substitutions {}: {e}", p.display()));
            SubstitutionSet::demo()
        })
    });

    if config.orders.as_ref().is_some_and(|o| o.is_empty() || o.contains(&0)) {
        errors.push("orders must be a non-empty list of positive n-gram orders".into());
    }
    if config.min_df == Some(0) {
        errors.push("min_df must be at least 1".into());
    }

    for c in &config.corpora {
        let as_dir = Path::new(c).join(MANIFEST_FILE);
        if !as_dir.exists() && !layout.corpus_dir(c).join(MANIFEST_FILE).exists() {
            errors.push(format!("corpus \"{c}\" is neither a project dataset nor a dataset directory"));
        }
    }

    let out = config.out.clone().unwrap_or_else(|| layout.reports());
    config.out = Some(out.clone());

    if !errors.is_empty() {
        return Err(CliError::config(errors));
    }
    Ok(Resolved {
        config,
        root,
        ontology,
        models,
        features,
        k,
        seed,
        out,
        level,
        paths,
        router,
        lexicon,
        embeddings,
        substitutions,
    })
}

impl Resolved {
    pub fn resources(&self) -> FeatureResources {
        let defaults = FeatureResources::default();
        FeatureResources {
            orders: self.config.orders.clone().unwrap_or(defaults.orders),
            min_df: self.config.min_df.unwrap_or(defaults.min_df),
            lexicon: Some(self.lexicon.clone()),
            embeddings: self.embeddings.clone(),
        }
    }

    pub fn policy(&self) -> AdjudicationPolicy {
        match &self.config.adjudicator {
            Some(a) => AdjudicationPolicy::with_adjudicator(a.clone()),
            None => AdjudicationPolicy::majority(),
        }
    }

    pub fn open_project(&self) -> Result<Project, CliError> {
        Ok(Project::open_with(&self.root, Some(self.ontology.clone()))?)
    }

    /// The selected datasets, every project dataset when none are named.
    pub fn corpora(&self, project: &Project) -> Result<Vec<Corpus>, CliError> {
        if self.config.corpora.is_empty() {
            return Ok(project.corpora.clone());
        }
        self.config
            .corpora
            .iter()
            .map(|c| match project.corpus(c) {
                Some(corpus) => Ok(corpus.clone()),
                None => {
                    let mut corpus = read_corpus_dir(Path::new(c))?;
                    selfscope_core::annotation::apply_contamination_guard(&mut corpus, project.store.state());
                    Ok(corpus)
                }
            })
            .collect()
    }
}
