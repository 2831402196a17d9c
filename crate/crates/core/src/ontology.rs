//! Self-aspect ontology: aspects, their elements, and the modes each element
//! can be experienced in, plus addressable [`LabelPath`] coordinates into
//! that tree.
//!
//! Ontologies are loaded from TOML documents:
//!
//! ```toml
//! version = "0.1.0"
//! language = "en"
//!
//! [[aspects]]
//! id = "BS"
//! name = "Bodily Self"
//! definition = "..."
//! examples = { positive = ["..."], negative = ["..."] }
//!
//! [[aspects.elements]]
//! id = "body_ownership"
//! definition = "..."
//! examples = { positive = ["..."], negative = ["..."] }
//! modes = [
//!   { id = "present", definition = "...", examples = { positive = ["..."], negative = ["..."] } },
//! ]
//! ```
//!
//! Loading is atomic: either the whole document validates or nothing is
//! returned.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The sample ontology shipped with the toolkit (MS, NS, AS, BS, SS).
pub const SAMPLE_ONTOLOGY: &str = include_str!("../data/ontology.toml");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Examples {
    pub positive: Vec<String>,
    pub negative: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeDef {
    pub id: String,
    pub definition: String,
    pub examples: Examples,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ElementDef {
    pub id: String,
    pub definition: String,
    pub examples: Examples,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub modes: Vec<ModeDef>,
}

impl ElementDef {
    pub fn mode(&self, id: &str) -> Option<&ModeDef> {
        self.modes.iter().find(|m| m.id == id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AspectDef {
    pub id: String,
    pub name: String,
    pub definition: String,
    pub examples: Examples,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notes: Option<String>,
    pub elements: Vec<ElementDef>,
}

impl AspectDef {
    pub fn element(&self, id: &str) -> Option<&ElementDef> {
        self.elements.iter().find(|e| e.id == id)
    }
}

/// A validated, immutable ontology.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ontology {
    pub version: String,
    pub language: String,
    pub aspects: Vec<AspectDef>,
}

/// Granularity at which label paths are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Depth {
    Aspect,
    Element,
    Mode,
}

impl FromStr for Depth {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "aspect" => Ok(Depth::Aspect),
            "element" => Ok(Depth::Element),
            "mode" => Ok(Depth::Mode),
            other => Err(Error::invalid(format!(
                "unknown depth \"{other}\" (expected aspect, element or mode)"
            ))),
        }
    }
}

/// Coordinate of a label in the ontology: `aspect[/element[/mode]]`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LabelPath {
    pub aspect: String,
    pub element: Option<String>,
    pub mode: Option<String>,
}

impl LabelPath {
    pub fn aspect(aspect: impl Into<String>) -> Self {
        LabelPath {
            aspect: aspect.into(),
            element: None,
            mode: None,
        }
    }

    pub fn element(aspect: impl Into<String>, element: impl Into<String>) -> Self {
        LabelPath {
            aspect: aspect.into(),
            element: Some(element.into()),
            mode: None,
        }
    }

    pub fn mode(
        aspect: impl Into<String>,
        element: impl Into<String>,
        mode: impl Into<String>,
    ) -> Self {
        LabelPath {
            aspect: aspect.into(),
            element: Some(element.into()),
            mode: Some(mode.into()),
        }
    }

    pub fn depth(&self) -> Depth {
        match (&self.element, &self.mode) {
            (None, _) => Depth::Aspect,
            (Some(_), None) => Depth::Element,
            (Some(_), Some(_)) => Depth::Mode,
        }
    }

    /// Parses the canonical string form without consulting an ontology.
    pub fn parse(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split('/').collect();
        if parts.len() > 3 || parts.iter().any(|p| !is_token(p)) {
            return Err(Error::MalformedPath(s.to_string()));
        }
        Ok(LabelPath {
            aspect: parts[0].to_string(),
            element: parts.get(1).map(|p| p.to_string()),
            mode: parts.get(2).map(|p| p.to_string()),
        })
    }
}

impl fmt::Display for LabelPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.aspect)?;
        if let Some(element) = &self.element {
            write!(f, "/{element}")?;
            if let Some(mode) = &self.mode {
                write!(f, "/{mode}")?;
            }
        }
        Ok(())
    }
}

impl Serialize for LabelPath {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for LabelPath {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        LabelPath::parse(&s).map_err(serde::de::Error::custom)
    }
}

/// Identifier tokens: non-empty, no separators or whitespace.
fn is_token(s: &str) -> bool {
    !s.is_empty()
        && s
            .chars()
            .all(|c| c.is_alphanumeric() || c == '_' || c == '-' || c == '.')
}

impl FromStr for Ontology {
    type Err = Error;

    fn from_str(document: &str) -> Result<Self> {
        let ontology: Ontology =
            toml::from_str(document).map_err(|e| Error::Parse(e.to_string()))?;
        ontology.validate()?;
        Ok(ontology)
    }
}

/// Reads and validates an ontology file.
pub fn load_ontology(path: impl AsRef<Path>) -> Result<Ontology> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse()
}

impl Ontology {
    pub fn sample() -> Self {
        SAMPLE_ONTOLOGY
            .parse()
            .expect("shipped sample ontology is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !is_semver(&self.version) {
            return Err(Error::InvalidOntology {
                at: "version".into(),
                message: format!("\"{}\" is not a MAJOR.MINOR.PATCH version", self.version),
            });
        }
        if !is_language_tag(&self.language) {
            return Err(Error::InvalidOntology {
                at: "language".into(),
                message: format!("\"{}\" is not a language tag", self.language),
            });
        }
        if self.aspects.is_empty() {
            return Err(Error::EmptyOntology);
        }
        let mut aspect_ids = HashSet::new();
        for aspect in &self.aspects {
            check_node("aspect", &aspect.id, &aspect.id, &aspect.definition, &aspect.examples)?;
            if !aspect_ids.insert(aspect.id.as_str()) {
                return Err(Error::DuplicateId {
                    kind: "aspect",
                    id: aspect.id.clone(),
                });
            }
            if aspect.name.trim().is_empty() {
                return Err(Error::InvalidOntology {
                    at: aspect.id.clone(),
                    message: "missing name".into(),
                });
            }
            let mut element_ids = HashSet::new();
            for element in &aspect.elements {
                let at = format!("{}/{}", aspect.id, element.id);
                check_node("element", &element.id, &at, &element.definition, &element.examples)?;
                if !element_ids.insert(element.id.as_str()) {
                    return Err(Error::DuplicateId {
                        kind: "element",
                        id: at,
                    });
                }
                if element.modes.is_empty() {
                    return Err(Error::InvalidOntology {
                        at,
                        message: "element has no modes".into(),
                    });
                }
                let mut mode_ids = HashSet::new();
                for mode in &element.modes {
                    let at = format!("{at}/{}", mode.id);
                    check_node("mode", &mode.id, &at, &mode.definition, &mode.examples)?;
                    if !mode_ids.insert(mode.id.as_str()) {
                        return Err(Error::DuplicateId { kind: "mode", id: at });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn aspect(&self, id: &str) -> Option<&AspectDef> {
        self.aspects.iter().find(|a| a.id == id)
    }

    /// All label paths at the given depth, in document order.
    pub fn enumerate_paths(&self, depth: Depth) -> Vec<LabelPath> {
        let mut paths = Vec::new();
        for aspect in &self.aspects {
            if depth == Depth::Aspect {
                paths.push(LabelPath::aspect(&aspect.id));
                continue;
            }
            for element in &aspect.elements {
                if depth == Depth::Element {
                    paths.push(LabelPath::element(&aspect.id, &element.id));
                    continue;
                }
                for mode in &element.modes {
                    paths.push(LabelPath::mode(&aspect.id, &element.id, &mode.id));
                }
            }
        }
        paths
    }

    /// Parses a canonical path string and checks every segment against
    /// this ontology.
    pub fn resolve(&self, path: &str) -> Result<LabelPath> {
        let parsed = LabelPath::parse(path)?;
        self.check(&parsed)?;
        Ok(parsed)
    }

    pub fn check(&self, path: &LabelPath) -> Result<()> {
        let aspect = self
            .aspect(&path.aspect)
            .ok_or_else(|| Error::UnknownAspect(path.aspect.clone()))?;
        let Some(element_id) = &path.element else {
            if path.mode.is_some() {
                return Err(Error::MalformedPath(path.to_string()));
            }
            return Ok(());
        };
        let element = aspect
            .element(element_id)
            .ok_or_else(|| Error::UnknownElement {
                aspect: aspect.id.clone(),
                element: element_id.clone(),
            })?;
        if let Some(mode) = &path.mode {
            if element.mode(mode).is_none() {
                return Err(Error::UnknownMode {
                    aspect: aspect.id.clone(),
                    element: element.id.clone(),
                    mode: mode.clone(),
                });
            }
        }
        Ok(())
    }

    /// Values an annotator may record for `path`: `present`/`absent` for any
    /// path, plus the element's mode ids for mode-level paths.
    pub fn value_domain(&self, path: &LabelPath) -> Result<Vec<String>> {
        self.check(path)?;
        let mut values = vec![PRESENT.to_string(), ABSENT.to_string()];
        if let (Some(element), Some(_)) = (&path.element, &path.mode) {
            let element = self
                .aspect(&path.aspect)
                .and_then(|a| a.element(element))
                .expect("checked above");
            values.extend(element.modes.iter().map(|m| m.id.clone()));
        }
        Ok(values)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let elements = self.aspects.iter().map(|a| a.elements.len()).sum();
        let modes = self
            .aspects
            .iter()
            .flat_map(|a| &a.elements)
            .map(|e| e.modes.len())
            .sum();
        (self.aspects.len(), elements, modes)
    }
}

pub const PRESENT: &str = "present";
pub const ABSENT: &str = "absent";

/// Binarizes an annotation value for one-vs-rest training on `path`.
pub fn is_positive(path: &LabelPath, value: &str) -> bool {
    value == PRESENT || path.mode.as_deref() == Some(value)
}

fn check_node(
    kind: &'static str,
    id: &str,
    at: &str,
    definition: &str,
    examples: &Examples,
) -> Result<()> {
    if !is_token(id) {
        return Err(Error::InvalidOntology {
            at: at.to_string(),
            message: format!("{kind} id \"{id}\" is not a valid token"),
        });
    }
    if definition.trim().is_empty() {
        return Err(Error::InvalidOntology {
            at: at.to_string(),
            message: "missing definition".into(),
        });
    }
    for (polarity, list) in [("positive", &examples.positive), ("negative", &examples.negative)] {
        if list.iter().all(|e| e.trim().is_empty()) {
            return Err(Error::InvalidOntology {
                at: at.to_string(),
                message: format!("needs at least one {polarity} example"),
            });
        }
    }
    Ok(())
}

fn is_semver(v: &str) -> bool {
    let core = v.split(['-', '+']).next().unwrap_or("");
    let parts: Vec<&str> = core.split('.').collect();
    parts.len() == 3
        && parts
            .iter()
            .all(|p| !p.is_empty() && p.chars().all(|c| c.is_ascii_digit()))
}

fn is_language_tag(tag: &str) -> bool {
    let mut subtags = tag.split('-');
    let primary = subtags.next().unwrap_or("");
    (2..=8).contains(&primary.len())
        && primary.chars().all(|c| c.is_ascii_alphabetic())
        && subtags.all(|s| (1..=8).contains(&s.len()) && s.chars().all(|c| c.is_ascii_alphanumeric()))
}

#[cfg(test)]
mod tests {
    use super::*;

    const BS_ONLY: &str = r#"
version = "0.1.0"
language = "en"

[[aspects]]
id = "BS"
name = "Bodily Self"
definition = "Experience of one's body as one's own."
examples = { positive = ["I could feel my whole body relax."], negative = ["The bus was late."] }

[[aspects.elements]]
id = "body_ownership"
definition = "The body is felt as mine."
examples = { positive = ["These hands are mine."], negative = ["The table is wooden."] }
modes = [
  { id = "present", definition = "Ownership is felt.", examples = { positive = ["My legs feel like mine."], negative = ["My legs felt foreign."] } },
  { id = "weak", definition = "Ownership is faint.", examples = { positive = ["My arm barely felt like mine."], negative = ["My arm is mine."] } },
  { id = "absent", definition = "Ownership is missing.", examples = { positive = ["The hand was not mine."], negative = ["My hand is mine."] } },
]
"#;

    #[test]
    fn loads_single_aspect_with_three_modes() {
        let o: Ontology = BS_ONLY.parse().unwrap();
        assert_eq!(o.counts(), (1, 1, 3));
        assert_eq!(o.enumerate_paths(Depth::Mode).len(), 3);
    }

    #[test]
    fn rejects_empty_ontology() {
        let err = "version = \"1.0.0\"\nlanguage = \"en\"\naspects = []\n"
            .parse::<Ontology>()
            .unwrap_err();
        assert!(matches!(err, Error::EmptyOntology));
        assert!(err.to_string().contains("empty ontology"));
    }

    #[test]
    fn rejects_duplicate_aspect() {
        let dup = format!("{BS_ONLY}{}", &BS_ONLY[BS_ONLY.find("[[aspects]]").unwrap()..]);
        let err = dup.parse::<Ontology>().unwrap_err();
        assert!(matches!(err, Error::DuplicateId { kind: "aspect", .. }));
        assert!(err.to_string().contains("\"BS\""));
    }

    #[test]
    fn rejects_element_without_modes() {
        let doc = BS_ONLY.replace(
            &BS_ONLY[BS_ONLY.find("modes = [").unwrap()..],
            "modes = []\n",
        );
        assert!(doc.parse::<Ontology>().is_err());
    }

    #[test]
    fn resolve_paths() {
        let o: Ontology = BS_ONLY.parse().unwrap();
        assert_eq!(
            o.resolve("BS/body_ownership/weak").unwrap(),
            LabelPath::mode("BS", "body_ownership", "weak")
        );
        assert_eq!(o.resolve("BS").unwrap(), LabelPath::aspect("BS"));
        assert!(matches!(
            o.resolve("BS/teleportation"),
            Err(Error::UnknownElement { .. })
        ));
        assert!(matches!(o.resolve("NS"), Err(Error::UnknownAspect(_))));
        assert!(matches!(
            o.resolve("BS/body_ownership/strong"),
            Err(Error::UnknownMode { .. })
        ));
        assert!(matches!(o.resolve("BS//weak"), Err(Error::MalformedPath(_))));
        assert!(matches!(o.resolve("a/b/c/d"), Err(Error::MalformedPath(_))));
        assert!(matches!(o.resolve(""), Err(Error::MalformedPath(_))));
    }

    #[test]
    fn sample_has_five_aspects_in_order() {
        let o = Ontology::sample();
        let ids: Vec<String> = o
            .enumerate_paths(Depth::Aspect)
            .iter()
            .map(|p| p.to_string())
            .collect();
        assert_eq!(ids, ["MS", "NS", "AS", "BS", "SS"]);
    }

    #[test]
    fn aspect_without_elements_contributes_no_element_paths() {
        let mut o: Ontology = BS_ONLY.parse().unwrap();
        let mut other = o.aspects[0].clone();
        other.id = "NS".into();
        other.elements.clear();
        o.aspects.push(other);
        o.validate().unwrap();
        let paths = o.enumerate_paths(Depth::Element);
        assert_eq!(paths, vec![LabelPath::element("BS", "body_ownership")]);
    }

    #[test]
    fn two_elements_three_modes_each() {
        let mut o: Ontology = BS_ONLY.parse().unwrap();
        let mut second = o.aspects[0].elements[0].clone();
        second.id = "body_awareness".into();
        o.aspects[0].elements.push(second);
        o.validate().unwrap();
        let paths = o.enumerate_paths(Depth::Mode);
        assert_eq!(paths.len(), 6);
        assert_eq!(paths[3], LabelPath::mode("BS", "body_awareness", "present"));
    }

    #[test]
    fn value_domain_includes_modes_only_at_mode_depth() {
        let o: Ontology = BS_ONLY.parse().unwrap();
        assert_eq!(o.value_domain(&LabelPath::aspect("BS")).unwrap().len(), 2);
        let modes = o
            .value_domain(&LabelPath::mode("BS", "body_ownership", "weak"))
            .unwrap();
        assert!(modes.contains(&"weak".to_string()));
    }

    #[test]
    fn language_and_version_checks() {
        assert!(is_semver("1.2.3"));
        assert!(is_semver("1.2.3-rc.1"));
        assert!(!is_semver("1.2"));
        assert!(is_language_tag("en"));
        assert!(is_language_tag("sl-SI"));
        assert!(!is_language_tag("e"));
        assert!(!is_language_tag("en_US"));
    }
}
