use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use proptest::prelude::*;
use selfscope_core::annotation::{
    adjudicate_votes, apply_contamination_guard, cohen_kappa, gold_labels, import_external_annotations,
    AdjudicationPolicy, AnnotationRecord, AnnotationStore, Origin,
};
use selfscope_core::corpus::{stratified_folds, Corpus, DatasetManifest, Instance, UnitLevel};
use selfscope_core::ontology::{LabelPath, Ontology};

fn labels() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..40).prop_flat_map(|n| (prop::collection::vec(0u8..3, n), prop::collection::vec(0u8..3, n)))
}

proptest! {
    #[test]
    fn kappa_is_symmetric((a, b) in labels()) {
        match (cohen_kappa(&a, &b), cohen_kappa(&b, &a)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn kappa_with_itself_is_one((a, _) in labels()) {
        prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn kappa_ignores_joint_item_order((a, b) in labels(), seed in any::<u64>()) {
        use rand::{seq::SliceRandom, SeedableRng};
        let mut order: Vec<usize> = (0..a.len()).collect();
        order.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let pa: Vec<u8> = order.iter().map(|&i| a[i]).collect();
        let pb: Vec<u8> = order.iter().map(|&i| b[i]).collect();
        match (cohen_kappa(&a, &b), cohen_kappa(&pa, &pb)) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (x, y) => prop_assert_eq!(x.is_err(), y.is_err()),
        }
    }

    #[test]
    fn adjudication_only_outputs_voted_labels(
        votes in prop::collection::btree_map(
            "[a-e]{1,2}",
            prop::collection::btree_map("[p-t]", prop::sample::select(vec!["present", "absent", "weak"]), 1..6),
            1..15,
        ),
        use_adjudicator in any::<bool>(),
    ) {
        let borrowed: BTreeMap<&str, BTreeMap<&str, &str>> = votes
            .iter()
            .map(|(i, v)| (i.as_str(), v.iter().map(|(a, l)| (a.as_str(), *l)).collect()))
            .collect();
        let policy = if use_adjudicator { AdjudicationPolicy::with_adjudicator("p") } else { AdjudicationPolicy::majority() };
        let out = adjudicate_votes(&borrowed, &policy).unwrap();
        for (instance, value) in &out.gold {
            prop_assert!(votes[instance].values().any(|v| v == value));
        }
        prop_assert_eq!(out.gold.len() + out.unresolved.len(), votes.len());
    }
}

fn ts() -> DateTime<Utc> {
    DateTime::parse_from_rfc3339("2025-03-01T12:00:00Z").unwrap().into()
}

#[derive(Debug, Clone)]
struct Scenario {
    instances: usize,
    human: Vec<(usize, usize, bool)>,
    external: Vec<(usize, bool)>,
}

fn scenarios() -> impl Strategy<Value = Scenario> {
    (12usize..40).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0usize..3, any::<bool>()), 0..60),
            prop::collection::vec((0..n, any::<bool>()), 0..60),
        )
            .prop_map(|(instances, human, external)| Scenario { instances, human, external })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]
    /// After any import no fold-eligible instance relies on external-model
    /// labels alone.
    #[test]
    fn contamination_guard_holds(s in scenarios(), seed in any::<u64>()) {
        let ontology = Ontology::sample();
        let path = LabelPath::aspect("SS");
        let instances = (0..s.instances)
            .map(|i| Instance {
                id: format!("x{i:02}"),
                dataset_id: "d".into(),
                text: format!("text {i}"),
                unit_level: UnitLevel::Sentence,
                source_ref: None,
                language: "en".into(),
                synthetic_annotation: false,
            })
            .collect();
        let mut corpus = Corpus::new(DatasetManifest::new("d"), instances).unwrap();
        let mut store = AnnotationStore::new();
        for &(i, a, v) in &s.human {
            store.upsert(AnnotationRecord {
                instance_id: format!("x{i:02}"),
                annotator_id: format!("h{a}"),
                path: path.clone(),
                value: if v { "present" } else { "absent" }.into(),
                timestamp: ts(),
                origin: Origin::Human,
            });
        }
        apply_contamination_guard(&mut corpus, &store);
        let rows: String = s
            .external
            .iter()
            .map(|&(i, v)| format!(
                "{{\"instance_id\":\"x{i:02}\",\"path\":\"SS\",\"value\":\"{}\"}}\n",
                if v { "present" } else { "absent" }
            ))
            .collect();
        import_external_annotations(&mut store, &ontology, &mut corpus, rows.as_bytes(), "llm", ts()).unwrap();

        let gold = gold_labels(&store, &corpus, &path, &AdjudicationPolicy::majority()).unwrap();
        let labelled = corpus.labelled_subset(&gold.labels);
        for instance in labelled.eligible() {
            let human = store
                .records_on(&path)
                .any(|r| r.instance_id == instance.id && r.origin == Origin::Human);
            prop_assert!(human, "{} is eligible without human labels", instance.id);
        }
        let eligible = labelled.eligible().count();
        if eligible >= 2 {
            let plan = stratified_folds(&labelled, &gold.labels, 2, seed, &path).unwrap();
            for id in plan.assignments.keys() {
                prop_assert!(store.records_on(&path).any(|r| &r.instance_id == id && r.origin == Origin::Human));
            }
        }
    }
}
