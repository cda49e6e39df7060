//! Descriptive deposit models: a deposit type plus an ordered list of
//! characteristic headings and their text.

mod store;
mod summarize;

use std::fmt;

use serde::de::{MapAccess, Visitor};
use serde::ser::SerializeMap;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

pub use store::{load_models, slug, LoadedModel, ModelLoadReport, ModelStore};
pub use summarize::{
    instantiate_prompt, parse_completion, summarize_document, HttpLlm, LlmProvider,
    DEFAULT_PROMPT_TEMPLATE,
};

pub const CANONICAL_HEADINGS: [&str; 10] = [
    "Synonyms",
    "Commodities",
    "Description",
    "Rock types",
    "Textures",
    "Age range",
    "Depositional environment",
    "Tectonic setting",
    "Alteration",
    "Ore controls",
];

/// Longest characteristic text that still embeds comfortably.
pub const MAX_CHARACTERISTIC_CHARS: usize = 2000;

const TUNGSTEN_SKARN: &str = include_str!("../../assets/tungsten_skarn.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepositModel {
    pub deposit_type: String,
    /// Heading → text, in document order. Headings are unique.
    #[serde(
        serialize_with = "serialize_pairs",
        deserialize_with = "deserialize_pairs"
    )]
    pub characteristics: Vec<(String, String)>,
    #[serde(default)]
    pub source_docs: Vec<String>,
    #[serde(default)]
    pub edited: bool,
}

impl DepositModel {
    pub fn characteristic(&self, heading: &str) -> Option<&str> {
        self.characteristics
            .iter()
            .find(|(h, _)| h.eq_ignore_ascii_case(heading))
            .map(|(_, v)| v.as_str())
    }

    pub fn headings(&self) -> Vec<&str> {
        self.characteristics.iter().map(|(h, _)| h.as_str()).collect()
    }

    /// Parse one model document, rejecting duplicate headings.
    pub fn from_json(text: &str, source_name: &str) -> Result<DepositModel> {
        let model: DepositModel =
            serde_json::from_str(text).map_err(|e| Error::from_json(source_name, e))?;
        if model.deposit_type.trim().is_empty() {
            return Err(Error::Validation(format!("{source_name}: deposit_type is empty")));
        }
        Ok(model)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn serialize_pairs<S: Serializer>(pairs: &[(String, String)], s: S) -> std::result::Result<S::Ok, S::Error> {
    let mut map = s.serialize_map(Some(pairs.len()))?;
    for (k, v) in pairs {
        map.serialize_entry(k, v)?;
    }
    map.end()
}

fn deserialize_pairs<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<(String, String)>, D::Error> {
    struct Pairs;
    impl<'de> Visitor<'de> for Pairs {
        type Value = Vec<(String, String)>;

        fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
            f.write_str("an object of heading to description text")
        }

        fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> std::result::Result<Self::Value, A::Error> {
            let mut out: Vec<(String, String)> = Vec::new();
            while let Some((k, v)) = map.next_entry::<String, String>()? {
                if out.iter().any(|(h, _)| h.eq_ignore_ascii_case(&k)) {
                    return Err(serde::de::Error::custom(format!("duplicate heading {k:?}")));
                }
                out.push((k, v));
            }
            Ok(out)
        }
    }
    d.deserialize_map(Pairs)
}

/// The models shipped with the crate.
pub fn builtin_models() -> Vec<DepositModel> {
    vec![DepositModel::from_json(TUNGSTEN_SKARN, "tungsten_skarn.json").expect("bundled model parses")]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiagnosticKind {
    MissingHeading,
    EmptyValue,
    OverLength,
    ExtraHeading,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub heading: String,
    pub message: String,
}

impl Diagnostic {
    /// Missing or empty characteristics make a model unusable as a query
    /// source; the rest are advisory.
    pub fn is_blocking(&self) -> bool {
        matches!(self.kind, DiagnosticKind::MissingHeading | DiagnosticKind::EmptyValue)
    }
}

pub fn validate_model(model: &DepositModel) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    for h in CANONICAL_HEADINGS {
        if model.characteristic(h).is_none() {
            out.push(Diagnostic {
                kind: DiagnosticKind::MissingHeading,
                heading: h.to_string(),
                message: format!("missing characteristic {h:?}"),
            });
        }
    }
    for (h, v) in &model.characteristics {
        if !CANONICAL_HEADINGS.iter().any(|c| c.eq_ignore_ascii_case(h)) {
            out.push(Diagnostic {
                kind: DiagnosticKind::ExtraHeading,
                heading: h.clone(),
                message: format!("{h:?} is not a standard characteristic"),
            });
        }
        let chars = v.trim().chars().count();
        if chars == 0 {
            out.push(Diagnostic {
                kind: DiagnosticKind::EmptyValue,
                heading: h.clone(),
                message: format!("{h:?} has no text"),
            });
        } else if chars > MAX_CHARACTERISTIC_CHARS {
            out.push(Diagnostic {
                kind: DiagnosticKind::OverLength,
                heading: h.clone(),
                message: format!("{h:?} is {chars} characters; limit is {MAX_CHARACTERISTIC_CHARS}"),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table1() -> DepositModel {
        builtin_models().remove(0)
    }

    #[test]
    fn bundled_model_is_complete() {
        let m = table1();
        assert_eq!(m.headings(), CANONICAL_HEADINGS.to_vec());
        assert!(validate_model(&m).is_empty());
        assert!(m
            .characteristic("Rock types")
            .unwrap()
            .starts_with("Pure and impure limestones"));
    }

    #[test]
    fn empty_value_diagnosed() {
        let mut m = table1();
        m.characteristics[4].1.clear();
        let d = validate_model(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::EmptyValue);
        assert_eq!(d[0].heading, "Textures");
    }

    #[test]
    fn over_length_diagnosed() {
        let mut m = table1();
        m.characteristics[0].1 = "x".repeat(3000);
        let d = validate_model(&m);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].kind, DiagnosticKind::OverLength);
        assert!(!d[0].is_blocking());
    }

    #[test]
    fn duplicate_heading_rejected() {
        let text = r#"{"deposit_type":"x","characteristics":{"Synonyms":"a","Synonyms":"b"}}"#;
        let err = DepositModel::from_json(text, "dup.json").unwrap_err();
        assert!(err.to_string().contains("duplicate heading"), "{err}");
    }

    #[test]
    fn json_round_trip_keeps_order() {
        let m = table1();
        let back = DepositModel::from_json(&m.to_json().unwrap(), "m.json").unwrap();
        assert_eq!(back, m);
    }
}
