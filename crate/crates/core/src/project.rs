//! Project directory layout shared by the command line and the service.
//!
//! ```text
//! <root>/
//!   ontology.toml          optional; the sample ontology otherwise
//!   lexicon.toml           optional category lexicon
//!   router.toml            optional expert routing table
//!   corpora/<dataset>/     manifest.toml + instances.jsonl
//!   annotations/           append-only log and snapshot
//!   models/<path>/         <family>+<features>.model
//!   reports/               <id>.json, <id>.txt
//! ```
//!
//! Instance ids must be unique across all datasets of a project.

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::annotation::apply_contamination_guard;
use crate::corpus::{segment, Corpus, DatasetManifest, Instance, UnitLevel};
use crate::error::{Error, Result};
use crate::features::Lexicon;
use crate::interpret::{explain, Explanation};
use crate::models::{
    load_model, route_and_predict, save_model, ExpertRouter, ModelArtifact, ModelRegistry, ModelSpec, Prediction,
};
use crate::ontology::{load_ontology, LabelPath, Ontology};
use crate::store::DurableStore;

pub const LAYOUT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const INSTANCES_FILE: &str = "instances.jsonl";
pub const MODEL_EXTENSION: &str = "model";

/// Pretty JSON with a trailing newline; every machine-readable output and
/// every service payload goes through this.
pub fn canonical_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut out = serde_json::to_string_pretty(value).expect("value serializes");
    out.push('\n');
    out
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProjectLayout {
    root: PathBuf,
}

impl ProjectLayout {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ProjectLayout { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn ontology(&self) -> PathBuf {
        self.root.join("ontology.toml")
    }

    pub fn lexicon(&self) -> PathBuf {
        self.root.join("lexicon.toml")
    }

    pub fn router(&self) -> PathBuf {
        self.root.join("router.toml")
    }

    pub fn corpora(&self) -> PathBuf {
        self.root.join("corpora")
    }

    pub fn corpus_dir(&self, dataset_id: &str) -> PathBuf {
        self.corpora().join(dataset_id)
    }

    pub fn annotations(&self) -> PathBuf {
        self.root.join("annotations")
    }

    pub fn models(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn model_file(&self, path: &LabelPath, spec: &ModelSpec) -> PathBuf {
        self.models()
            .join(path.to_string().replace('/', "."))
            .join(format!("{}.{MODEL_EXTENSION}", spec.name()))
    }

    pub fn reports(&self) -> PathBuf {
        self.root.join("reports")
    }
}

fn safe_id(id: &str) -> Result<()> {
    let ok = !id.is_empty()
        && !id.starts_with('.')
        && id.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::invalid(format!("\"{id}\" is not a valid identifier")))
    }
}

/// Reads one dataset directory.
pub fn read_corpus_dir(dir: &Path) -> Result<Corpus> {
    let manifest = DatasetManifest::load(dir.join(MANIFEST_FILE))?;
    let path = dir.join(INSTANCES_FILE);
    let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
    let imported = Corpus::from_jsonl(std::io::BufReader::new(file), manifest)?;
    for w in &imported.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(imported.corpus)
}

pub fn write_corpus_dir(dir: &Path, corpus: &Corpus) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest = toml::to_string(&corpus.manifest).map_err(|e| Error::Parse(e.to_string()))?;
    let target = dir.join(MANIFEST_FILE);
    std::fs::write(&target, manifest).map_err(|e| Error::io(&target, e))?;
    let target = dir.join(INSTANCES_FILE);
    std::fs::write(&target, corpus.to_jsonl()).map_err(|e| Error::io(&target, e))
}

/// A loaded project: ontology, datasets and the durable annotation store.
#[derive(Debug)]
pub struct Project {
    pub layout: ProjectLayout,
    pub ontology: Ontology,
    /// Sorted by dataset id.
    pub corpora: Vec<Corpus>,
    pub store: DurableStore,
}

impl Project {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        Self::open_with(root, None)
    }

    /// Opens `root`, using `ontology` in place of the project file when given.
    pub fn open_with(root: impl Into<PathBuf>, ontology: Option<Ontology>) -> Result<Self> {
        let layout = ProjectLayout::new(root);
        let root = layout.root();
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let ontology = match ontology {
            Some(o) => o,
            None if layout.ontology().exists() => load_ontology(layout.ontology())?,
            None => Ontology::sample(),
        };
        let mut corpora = Vec::new();
        let dir = layout.corpora();
        if dir.exists() {
            let mut entries: Vec<PathBuf> = std::fs::read_dir(&dir)
                .map_err(|e| Error::io(&dir, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.join(MANIFEST_FILE).exists())
                .collect();
            entries.sort();
            for entry in entries {
                corpora.push(read_corpus_dir(&entry)?);
            }
        }
        let store = DurableStore::open(layout.annotations())?;
        let mut project = Project {
            layout,
            ontology,
            corpora,
            store,
        };
        project.check_unique_ids()?;
        project.apply_guard();
        Ok(project)
    }

    fn check_unique_ids(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for instance in self.corpora.iter().flat_map(|c| &c.instances) {
            if !seen.insert(instance.id.as_str()) {
                return Err(Error::DuplicateInstance(instance.id.clone()));
            }
        }
        Ok(())
    }

    /// Flags instances labelled only by external models as synthetic.
    pub fn apply_guard(&mut self) -> Vec<String> {
        let mut flagged = Vec::new();
        for corpus in &mut self.corpora {
            flagged.extend(apply_contamination_guard(corpus, self.store.state()));
        }
        flagged
    }

    pub fn corpus(&self, dataset_id: &str) -> Option<&Corpus> {
        self.corpora.iter().find(|c| c.manifest.dataset_id == dataset_id)
    }

    pub fn instance(&self, id: &str) -> Option<&Instance> {
        self.corpora.iter().find_map(|c| c.get(id))
    }

    /// Every dataset merged into one corpus, in dataset order.
    pub fn merged(&self) -> Corpus {
        Corpus {
            manifest: DatasetManifest::new("project"),
            instances: self.corpora.iter().flat_map(|c| c.instances.iter().cloned()).collect(),
        }
    }

    /// Adds or replaces a dataset and writes it to disk.
    pub fn put_corpus(&mut self, corpus: Corpus) -> Result<()> {
        safe_id(&corpus.manifest.dataset_id)?;
        let others: HashSet<&str> = self
            .corpora
            .iter()
            .filter(|c| c.manifest.dataset_id != corpus.manifest.dataset_id)
            .flat_map(|c| c.instances.iter().map(|i| i.id.as_str()))
            .collect();
        if let Some(clash) = corpus.instances.iter().find(|i| others.contains(i.id.as_str())) {
            return Err(Error::DuplicateInstance(clash.id.clone()));
        }
        write_corpus_dir(&self.layout.corpus_dir(&corpus.manifest.dataset_id), &corpus)?;
        self.corpora.retain(|c| c.manifest.dataset_id != corpus.manifest.dataset_id);
        self.corpora.push(corpus);
        self.corpora.sort_by(|a, b| a.manifest.dataset_id.cmp(&b.manifest.dataset_id));
        self.apply_guard();
        Ok(())
    }

    pub fn lexicon(&self) -> Result<Option<Lexicon>> {
        let path = self.layout.lexicon();
        path.exists().then(|| Lexicon::load(&path)).transpose()
    }

    pub fn router(&self) -> Result<Option<ExpertRouter>> {
        let path = self.layout.router();
        path.exists().then(|| ExpertRouter::load(&path, &self.ontology)).transpose()
    }

    pub fn save_model(&self, artifact: &ModelArtifact) -> Result<PathBuf> {
        let path = self.layout.model_file(&artifact.label_path, &artifact.model.spec);
        let dir = path.parent().expect("model file has a parent");
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_model(artifact, &path)?;
        Ok(path)
    }

    /// Every saved model, keyed by label path and model name.
    pub fn load_models(&self) -> Result<ModelRegistry> {
        let mut registry = ModelRegistry::new();
        let dir = self.layout.models();
        if !dir.exists() {
            return Ok(registry);
        }
        let mut files = BTreeMap::new();
        for sub in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let sub = sub.map_err(|e| Error::io(&dir, e))?.path();
            if !sub.is_dir() {
                continue;
            }
            for file in std::fs::read_dir(&sub).map_err(|e| Error::io(&sub, e))? {
                let file = file.map_err(|e| Error::io(&sub, e))?.path();
                if file.extension().is_some_and(|e| e == MODEL_EXTENSION) {
                    files.insert(file.clone(), ());
                }
            }
        }
        for file in files.into_keys() {
            registry.insert(load_model(&file)?);
        }
        Ok(registry)
    }

    /// Reads a stored report by id.
    pub fn report(&self, id: &str) -> Result<Option<String>> {
        safe_id(id)?;
        let path = self.layout.reports().join(format!("{id}.json"));
        if !path.exists() {
            return Ok(None);
        }
        std::fs::read_to_string(&path).map(Some).map_err(|e| Error::io(&path, e))
    }
}

pub const TOP_ATTRIBUTIONS: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainedPrediction {
    #[serde(flatten)]
    pub prediction: Prediction,
    pub explanation: Option<Explanation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UnitPrediction {
    pub unit_id: String,
    pub index: usize,
    pub text: String,
    pub predictions: Vec<ExplainedPrediction>,
}

/// Segments `text` at `level` and routes every unit through one expert per
/// path. Unit ids are `<prefix>#<index>`.
pub fn predict_units(
    prefix: &str,
    text: &str,
    level: UnitLevel,
    paths: &[LabelPath],
    router: &ExpertRouter,
    registry: &ModelRegistry,
    lookup: impl Fn(&str) -> Option<String>,
) -> Result<Vec<UnitPrediction>> {
    let plan = router.plan(paths)?;
    segment(text, level)
        .into_iter()
        .enumerate()
        .map(|(index, unit)| {
            let unit_id = format!("{prefix}#{index}");
            let predictions = route_and_predict(&unit_id, &unit, paths, router, registry)?
                .into_iter()
                .zip(&plan)
                .map(|(prediction, (path, spec))| {
                    let artifact = registry.get(path, spec).expect("routed model exists");
                    let explanation = explain(artifact, &prediction, &unit, &lookup, TOP_ATTRIBUTIONS)?;
                    Ok(ExplainedPrediction {
                        prediction,
                        explanation,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(UnitPrediction {
                unit_id,
                index,
                text: unit,
                predictions,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UnitLevel;

    fn corpus(id: &str, ids: &[&str]) -> Corpus {
        let instances = ids
            .iter()
            .map(|i| Instance {
                id: i.to_string(),
                dataset_id: id.into(),
                text: format!("text of {i}"),
                unit_level: UnitLevel::Sentence,
                source_ref: None,
                language: "en".into(),
                synthetic_annotation: false,
            })
            .collect();
        Corpus::new(DatasetManifest::new(id), instances).unwrap()
    }

    #[test]
    fn corpora_round_trip_and_ids_stay_unique() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut p = Project::open(dir.path()).unwrap();
            p.put_corpus(corpus("b", &["x1", "x2"])).unwrap();
            p.put_corpus(corpus("a", &["y1"])).unwrap();
            assert!(matches!(p.put_corpus(corpus("c", &["x1"])), Err(Error::DuplicateInstance(_))));
            assert!(p.put_corpus(corpus("../evil", &["z"])).is_err());
        }
        let p = Project::open(dir.path()).unwrap();
        let ids: Vec<&str> = p.corpora.iter().map(|c| c.manifest.dataset_id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(p.merged().len(), 3);
        assert_eq!(p.instance("x2").unwrap().dataset_id, "b");
        assert!(p.report("../secret").is_err());
        assert_eq!(p.report("missing").unwrap(), None);
    }
}
