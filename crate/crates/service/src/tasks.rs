//! Annotation task ordering.
//!
//! Evaluation-eligible instances are shuffled once per project with the
//! service seed. Each annotator walks that order round-robin from an
//! offset derived from their id, so two annotators rarely see the same
//! instance at the same time.

use std::hash::Hasher;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use selfscope_core::ontology::LabelPath;
use selfscope_core::project::Project;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Pending,
    Done,
    Skipped,
}

/// Carries no labels from other annotators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotationTask {
    pub instance_id: String,
    pub text: String,
    pub requested_paths: Vec<LabelPath>,
    pub annotator: String,
    pub status: TaskStatus,
}

pub(crate) fn task_order(project: &Project, seed: u64) -> Vec<String> {
    let mut ids: Vec<String> = project
        .corpora
        .iter()
        .flat_map(|c| c.eligible().map(|i| i.id.clone()))
        .collect();
    ids.sort();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    ids
}

fn offset(annotator: &str, n: usize) -> usize {
    let mut h = fnv::FnvHasher::default();
    h.write(annotator.as_bytes());
    (h.finish() % n as u64) as usize
}

pub(crate) fn status(project: &Project, annotator: &str, instance_id: &str, paths: &[LabelPath]) -> TaskStatus {
    let votes_done = paths.iter().all(|p| {
        project
            .store
            .state()
            .records_on(p)
            .any(|r| r.instance_id == instance_id && r.annotator_id == annotator)
    });
    if votes_done {
        TaskStatus::Done
    } else if project.store.is_skipped(annotator, instance_id) {
        TaskStatus::Skipped
    } else {
        TaskStatus::Pending
    }
}

pub(crate) fn next_task(
    project: &Project,
    order: &[String],
    annotator: &str,
    paths: &[LabelPath],
) -> Option<AnnotationTask> {
    if order.is_empty() {
        return None;
    }
    let start = offset(annotator, order.len());
    (0..order.len())
        .map(|k| &order[(start + k) % order.len()])
        .find(|id| status(project, annotator, id, paths) == TaskStatus::Pending)
        .and_then(|id| {
            project.instance(id).map(|i| AnnotationTask {
                instance_id: id.clone(),
                text: i.text.clone(),
                requested_paths: paths.to_vec(),
                annotator: annotator.to_string(),
                status: TaskStatus::Pending,
            })
        })
}
