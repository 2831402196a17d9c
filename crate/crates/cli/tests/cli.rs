mod support;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use support::{ok, project, run, Server};

fn outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut files = BTreeMap::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        if path.is_file() && !name.ends_with(".timestamps.json") {
            files.insert(name, fs::read(&path).unwrap());
        }
    }
    files
}

#[test]
fn ontology_validate_reports_the_sample_shape() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["ontology", "validate"]);
    assert!(text.contains("5 aspects"), "{text}");
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reports/ontology-validate.json")).unwrap()).unwrap();
    assert_eq!(json["aspects"], 5);
    assert!(dir.path().join("reports/ontology-validate.timestamps.json").exists());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let p = project(dir.path(), 60);
    let compare = ["--seed", "5", "--k", "5", "--paths", "SS", "--model", "logreg,nb_multinomial,linear_svm+lexicon", "compare"];
    let train = ["--seed", "5", "--paths", "SS", "--model", "logreg,retrieval_knn", "train"];
    let predict = ["--seed", "5", "predict", "--text", "We laughed together. I walked alone in the rain."];
    let importance = ["--seed", "5", "--k", "5", "--paths", "SS", "--model", "logreg", "importance", "--repeats", "3"];
    let mut first = BTreeMap::new();
    for args in [&compare[..], &train, &predict, &importance, &["annotate", "agree"], &["corpus", "stats"]] {
        ok(&p, args);
    }
    first.extend(outputs(&p.join("reports")));
    let model = fs::read(p.join("models/SS/logreg+learned.model")).unwrap();
    for args in [&compare[..], &train, &predict, &importance, &["annotate", "agree"], &["corpus", "stats"]] {
        ok(&p, args);
    }
    let second = outputs(&p.join("reports"));
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (name, bytes) in &first {
        assert!(bytes == &second[name], "{name} differs between runs");
    }
    assert_eq!(model, fs::read(p.join("models/SS/logreg+learned.model")).unwrap());
}

#[test]
fn predict_segments_into_sentences() {
    let dir = tempfile::tempdir().unwrap();
    let p = project(dir.path(), 40);
    ok(&p, &["--seed", "1", "--paths", "SS", "--model", "logreg", "train"]);
    ok(&p, &["--seed", "1", "--level", "sentence", "predict", "--text", "We talked with friends. I walked alone. Then coffee."]);
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("reports/predict.json")).unwrap()).unwrap();
    let units = json["units"].as_array().unwrap();
    assert_eq!(units.len(), 3);
    assert_eq!(units[0]["unit_id"], "input#0");
    let first = &units[0]["predictions"][0];
    assert_eq!(first["label_path"], "SS");
    assert_eq!(first["value"], "present");
    assert_eq!(first["explanation"]["kind"], "attributions");
    assert_eq!(units[1]["predictions"][0]["value"], "absent");
}

#[test]
fn config_errors_are_reported_together() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["--k", "1", "--model", "bogus", "--paths", "XX", "train"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "config");
    let details: Vec<&str> = err["error"]["details"].as_array().unwrap().iter().map(|d| d.as_str().unwrap()).collect();
    assert_eq!(details.len(), 5, "{details:?}");
    for needle in ["seed", "bogus", "k must be", "XX", "label path is required"] {
        assert!(details.iter().any(|d| d.contains(needle)), "{needle} missing from {details:?}");
    }
}

#[test]
fn config_file_and_flags_merge() {
    let dir = tempfile::tempdir().unwrap();
    let p = project(dir.path(), 40);
    let config = dir.path().join("run.toml");
    fs::write(&config, "project = \"project\"\nseed = 3\nk = 4\npaths = [\"SS\"]\nmodels = [\"logreg\"]\n").unwrap();
    let c = config.to_string_lossy().into_owned();
    let text = ok(&p, &["--config", &c, "--model", "nb_multinomial", "evaluate", "cv"]);
    assert!(text.starts_with("nb_multinomial+learned on SS (4 folds)"), "{text}");
    let resolved = fs::read_to_string(p.join("reports/evaluate-cv.config.toml")).unwrap();
    assert!(resolved.contains("seed = 3") && resolved.contains("nb_multinomial"), "{resolved}");
    fs::write(&config, "seed = 3\nunknown_key = 1\n").unwrap();
    assert_eq!(run(&p, &["--config", &c, "corpus", "stats"]).status.code(), Some(2));
}

#[test]
fn cli_agreement_matches_the_service_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let p = project(dir.path(), 30);
    ok(&p, &["annotate", "agree"]);
    let file = fs::read_to_string(p.join("reports/agreement.SS.json")).unwrap();
    let server = Server::start(&p);
    let (status, body) = server.request("GET", "/agreement?path=SS", None, "");
    assert_eq!(status, 200);
    assert_eq!(body, file);
}

#[test]
fn killed_service_keeps_acknowledged_writes() {
    let dir = tempfile::tempdir().unwrap();
    let p = project(dir.path(), 10);
    let server = Server::start(&p);
    let body = r#"{"instance_id":"d001","path":"SS","value":"present"}"#;
    let (status, _) = server.request("POST", "/annotations", Some("carol"), body);
    assert_eq!(status, 201);
    server.kill();

    let server = Server::start(&p);
    let (status, disagreements) = server.request("GET", "/disagreements?path=SS", None, "");
    assert_eq!(status, 200);
    assert!(disagreements.contains("\"carol\": \"present\""), "{disagreements}");
    server.kill();
    let export = ok(&p, &["annotate", "export"]);
    assert!(export.contains("exported 21 records"), "{export}");
    let rows = fs::read_to_string(p.join("reports/annotations.jsonl")).unwrap();
    assert!(rows.lines().any(|l| l.contains("\"carol\"") && l.contains("d001")));
}

#[test]
fn external_model_labels_stay_out_of_evaluation() {
    let dir = tempfile::tempdir().unwrap();
    let p = project(dir.path(), 20);
    let extra = dir.path().join("instances2.jsonl");
    fs::write(&extra, (0..10).map(|i| format!("{{\"id\":\"e{i}\",\"text\":\"we talked {i}\"}}\n")).collect::<String>()).unwrap();
    let manifest = dir.path().join("m2.toml");
    fs::write(&manifest, "dataset_id = \"extra\"\nlanguage = \"en\"\nunit_level = \"sentence\"\n").unwrap();
    let labels = dir.path().join("llm.jsonl");
    fs::write(&labels, (0..10).map(|i| format!("{{\"instance_id\":\"e{i}\",\"path\":\"SS\",\"value\":\"present\"}}\n")).collect::<String>()).unwrap();
    let s = |x: &Path| x.to_string_lossy().into_owned();
    ok(&p, &["corpus", "import", &s(&extra), "--manifest", &s(&manifest)]);
    let text = ok(&p, &["annotate", "import", &s(&labels), "--annotator", "llm", "--origin", "external-model"]);
    assert!(text.contains("10 instances flagged synthetic"), "{text}");
    ok(&p, &["corpus", "stats"]);
    let stats = fs::read_to_string(p.join("reports/corpus-stats.json")).unwrap();
    assert!(stats.contains("\"synthetic\": 10"), "{stats}");
    ok(&p, &["--seed", "2", "--k", "2", "--paths", "SS", "--model", "logreg", "evaluate", "cv"]);
    let cv = fs::read_to_string(p.join("reports/evaluate-cv.json")).unwrap();
    assert!(!cv.contains("\"e0\"") && !cv.contains("\"e9\""));
}
