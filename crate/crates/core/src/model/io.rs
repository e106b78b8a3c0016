//! Instance file format.
//!
//! A JSON document with `kind`, `weights`, `costs` and optional
//! `agent_names` / `item_names`. Numbers are strings holding either a
//! fraction (`"7/10"`) or a decimal (`"0.7"`); both parse exactly.
//! Serialization is canonical: lowest-terms fractions, one cost row per
//! line, LF endings and a trailing newline.

use std::fmt::Write as _;

use serde::de::{self, Deserializer};
use serde::Deserialize;

use super::{format_rational, parse_rational, Instance, Kind, ModelError, Rational};

#[derive(Debug, thiserror::Error)]
pub enum InstanceParseError {
    #[error("{0}")]
    Syntax(#[from] serde_json::Error),
    #[error("{0}")]
    Shape(#[from] ModelError),
}

struct RationalText(Rational);

impl<'de> Deserialize<'de> for RationalText {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        parse_rational(&text)
            .map(RationalText)
            .map_err(de::Error::custom)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceFile {
    kind: Kind,
    weights: Vec<RationalText>,
    costs: Vec<Vec<RationalText>>,
    #[serde(default)]
    agent_names: Option<Vec<String>>,
    #[serde(default)]
    item_names: Option<Vec<String>>,
}

pub fn parse_instance(text: &str) -> Result<Instance, InstanceParseError> {
    let file: InstanceFile = serde_json::from_str(text)?;
    let weights = file.weights.into_iter().map(|r| r.0).collect();
    let costs = file
        .costs
        .into_iter()
        .map(|row| row.into_iter().map(|r| r.0).collect())
        .collect();
    let mut inst = Instance::new(file.kind, weights, costs)?;
    if let Some(names) = file.agent_names {
        inst = inst.with_agent_names(names)?;
    }
    if let Some(names) = file.item_names {
        inst = inst.with_item_names(names)?;
    }
    Ok(inst)
}

fn quoted(text: &str) -> String {
    serde_json::to_string(text).expect("strings always serialize")
}

fn rational_list<'a>(values: impl IntoIterator<Item = &'a Rational>) -> String {
    let parts: Vec<String> = values
        .into_iter()
        .map(|v| quoted(&format_rational(v)))
        .collect();
    format!("[{}]", parts.join(", "))
}

fn name_list(names: &[String]) -> String {
    let parts: Vec<String> = names.iter().map(|s| quoted(s)).collect();
    format!("[{}]", parts.join(", "))
}

pub fn serialize_instance(inst: &Instance) -> String {
    let mut out = String::new();
    out.push_str("{\n");
    let _ = writeln!(out, "  \"kind\": {},", quoted(&inst.kind().to_string()));
    let _ = writeln!(out, "  \"weights\": {},", rational_list(inst.weights()));
    if inst.n() == 0 {
        out.push_str("  \"costs\": []");
    } else {
        out.push_str("  \"costs\": [\n");
        let rows: Vec<String> = inst
            .costs()
            .iter()
            .map(|row| format!("    {}", rational_list(row)))
            .collect();
        out.push_str(&rows.join(",\n"));
        out.push_str("\n  ]");
    }
    if let Some(names) = inst.agent_names() {
        let _ = write!(out, ",\n  \"agent_names\": {}", name_list(names));
    }
    if let Some(names) = inst.item_names() {
        let _ = write!(out, ",\n  \"item_names\": {}", name_list(names));
    }
    out.push_str("\n}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{int, ratio};

    const SAMPLE: &str = r#"{
  "kind": "chores",
  "weights": ["1/3", "2/3"],
  "costs": [
    ["0.7", "1"],
    ["1/2", "0"]
  ],
  "agent_names": ["ann", "bo"]
}
"#;

    #[test]
    fn parses_mixed_notation() {
        let inst = parse_instance(SAMPLE).unwrap();
        assert_eq!(inst.kind(), Kind::Chores);
        assert_eq!(inst.weights(), &[ratio(1, 3), ratio(2, 3)]);
        assert_eq!(inst.cost(0, 0), &ratio(7, 10));
        assert_eq!(inst.cost(1, 1), &int(0));
        assert_eq!(inst.agent_name(1), "bo");
        assert_eq!(inst.item_name(1), "e2");
    }

    #[test]
    fn canonical_output() {
        let inst = parse_instance(SAMPLE).unwrap();
        let text = serialize_instance(&inst);
        assert_eq!(
            text,
            "{\n  \"kind\": \"chores\",\n  \"weights\": [\"1/3\", \"2/3\"],\n  \"costs\": [\n    [\"7/10\", \"1\"],\n    [\"1/2\", \"0\"]\n  ],\n  \"agent_names\": [\"ann\", \"bo\"]\n}\n"
        );
        assert_eq!(serialize_instance(&parse_instance(&text).unwrap()), text);
    }

    #[test]
    fn errors_carry_positions() {
        let broken = SAMPLE.replace("\"0.7\"", "\"0.7x\"");
        let err = parse_instance(&broken).unwrap_err();
        assert!(matches!(err, InstanceParseError::Syntax(_)));
        assert!(err.to_string().contains("line 5"), "{err}");

        let ragged = SAMPLE.replace("[\"1/2\", \"0\"]", "[\"1/2\"]");
        assert!(matches!(
            parse_instance(&ragged),
            Err(InstanceParseError::Shape(ModelError::RowLength { row: 1, .. }))
        ));

        let unknown = SAMPLE.replace("\"kind\"", "\"sort\"");
        assert!(parse_instance(&unknown).is_err());
    }
}
