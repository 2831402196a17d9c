use proptest::prelude::*;
use selfscope_core::ontology::{AspectDef, Depth, ElementDef, Examples, ModeDef, Ontology, SAMPLE_ONTOLOGY};

fn examples() -> Examples {
    Examples {
        positive: vec!["yes".into()],
        negative: vec!["no".into()],
    }
}

fn build(shape: &[Vec<usize>]) -> Ontology {
    Ontology {
        version: "1.0.0".into(),
        language: "en".into(),
        aspects: shape
            .iter()
            .enumerate()
            .map(|(a, elements)| AspectDef {
                id: format!("A{a}"),
                name: format!("aspect {a}"),
                definition: "d".into(),
                examples: examples(),
                notes: None,
                elements: elements
                    .iter()
                    .enumerate()
                    .map(|(e, &modes)| ElementDef {
                        id: format!("e{e}"),
                        definition: "d".into(),
                        examples: examples(),
                        notes: None,
                        modes: (0..modes)
                            .map(|m| ModeDef {
                                id: format!("m{m}"),
                                definition: "d".into(),
                                examples: examples(),
                                notes: None,
                            })
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    }
}

fn shapes() -> impl Strategy<Value = Vec<Vec<usize>>> {
    prop::collection::vec(prop::collection::vec(1usize..4, 0..4), 1..5)
}

proptest! {
    #[test]
    fn path_counts_match_brute_force(shape in shapes()) {
        let o = build(&shape);
        o.validate().unwrap();
        let modes: usize = shape.iter().flatten().sum();
        let elements: usize = shape.iter().map(Vec::len).sum();
        prop_assert_eq!(o.enumerate_paths(Depth::Mode).len(), modes);
        prop_assert_eq!(o.enumerate_paths(Depth::Element).len(), elements);
        prop_assert_eq!(o.enumerate_paths(Depth::Aspect).len(), shape.len());
    }

    #[test]
    fn canonical_strings_resolve_back(shape in shapes()) {
        let o = build(&shape);
        for depth in [Depth::Aspect, Depth::Element, Depth::Mode] {
            for p in o.enumerate_paths(depth) {
                prop_assert_eq!(o.resolve(&p.to_string()).unwrap(), p);
            }
        }
    }
}

/// Every key path of required fields in a TOML value.
fn required_keys(value: &toml::Value, prefix: Vec<String>, out: &mut Vec<Vec<String>>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                let mut p = prefix.clone();
                p.push(k.clone());
                if k != "notes" {
                    out.push(p.clone());
                }
                required_keys(v, p, out);
            }
        }
        toml::Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                let mut p = prefix.clone();
                p.push(format!("#{i}"));
                required_keys(v, p, out);
            }
        }
        _ => {}
    }
}

fn delete(value: &mut toml::Value, path: &[String]) {
    let (last, init) = path.split_last().unwrap();
    let mut cur = value;
    for seg in init {
        cur = match seg.strip_prefix('#') {
            Some(i) => &mut cur.as_array_mut().unwrap()[i.parse::<usize>().unwrap()],
            None => cur.get_mut(seg).unwrap(),
        };
    }
    cur.as_table_mut().unwrap().remove(last);
}

#[test]
fn deleting_any_required_field_is_rejected() {
    let doc: toml::Value = toml::from_str(SAMPLE_ONTOLOGY).unwrap();
    let mut keys = Vec::new();
    required_keys(&doc, Vec::new(), &mut keys);
    assert!(keys.len() > 100);
    for key in keys {
        let mut damaged = doc.clone();
        delete(&mut damaged, &key);
        let text = toml::to_string(&damaged).unwrap();
        assert!(text.parse::<Ontology>().is_err(), "deleting {key:?} was accepted");
    }
    assert_eq!(SAMPLE_ONTOLOGY.parse::<Ontology>().unwrap().aspects.len(), 5);
}
