//! Parsing of structured model output with bounded repair.
//!
//! Models often wrap JSON in code fences, answer with Python-style literals
//! (single quotes, `True`), or leave trailing commas. A strict parse is tried
//! first; on failure up to [`MAX_REPAIR_PASSES`] cumulative repair passes are
//! applied, re-parsing after each.

use serde_json::{Map, Value};
use thiserror::Error;

use crate::ku_model::{normalize_key, Entity, FieldValue};

pub const MAX_REPAIR_PASSES: usize = 2;

#[derive(Debug, Clone, Error, PartialEq)]
#[error("unparseable response: {reason}")]
pub struct UnparseableResponse {
    pub reason: String,
    /// The untouched model output, kept for the audit trail.
    pub raw: String,
}

impl UnparseableResponse {
    pub fn new(reason: impl Into<String>, raw: &str) -> Self {
        Self {
            reason: reason.into(),
            raw: raw.to_string(),
        }
    }
}

/// A parsed value and the number of repair passes it needed.
#[derive(Debug, Clone, PartialEq)]
pub struct Parsed {
    pub value: Value,
    pub repairs: usize,
}

/// Strict parse, then up to two repair passes.
pub fn parse_structured_response(raw: &str) -> Result<Parsed, UnparseableResponse> {
    let mut text = raw.to_string();
    let mut last_err = match serde_json::from_str::<Value>(text.trim()) {
        Ok(value) => return Ok(Parsed { value, repairs: 0 }),
        Err(e) => e.to_string(),
    };
    for pass in 1..=MAX_REPAIR_PASSES {
        text = repair_pass(&text, pass);
        match serde_json::from_str::<Value>(text.trim()) {
            Ok(value) => {
                return Ok(Parsed {
                    value,
                    repairs: pass,
                })
            }
            Err(e) => last_err = e.to_string(),
        }
    }
    Err(UnparseableResponse::new(
        format!("no structured value after {MAX_REPAIR_PASSES} repair passes ({last_err})"),
        raw,
    ))
}

/// Applies repair pass 1 (fences and framing) or 2 (literal syntax).
pub fn repair_pass(text: &str, pass: usize) -> String {
    match pass {
        1 => frame(&strip_fences(text)),
        _ => normalize_literals(&remove_trailing_commas(&requote(text))),
    }
}

fn strip_fences(text: &str) -> String {
    let Some(start) = text.find("```") else {
        return text.to_string();
    };
    let after = &text[start + 3..];
    // Skip the info string (`json`, `python`, ...) on the opening line.
    let body = match after.find('\n') {
        Some(nl) => &after[nl + 1..],
        None => after,
    };
    match body.find("```") {
        Some(end) => body[..end].to_string(),
        None => body.to_string(),
    }
}

/// Slices the outermost object or array; wraps a bare `'key': {...}` listing
/// in braces.
fn frame(text: &str) -> String {
    let t = text.trim();
    let first = t.find(['{', '[']);
    let starts_with_key = t.starts_with('\'') || t.starts_with('"');
    if starts_with_key && t.contains(':') && first.is_some_and(|i| t[..i].contains(':')) {
        let body = t.trim_end().trim_end_matches(',');
        return format!("{{{body}}}");
    }
    let Some(open) = first else {
        return t.to_string();
    };
    let close_char = if t.as_bytes()[open] == b'{' { '}' } else { ']' };
    match t.rfind(close_char) {
        Some(close) if close > open => t[open..=close].to_string(),
        _ => t[open..].to_string(),
    }
}

/// Rewrites single-quoted strings as double-quoted JSON strings. A single
/// quote closes a string only if the next non-space character is a
/// structural one, so apostrophes inside values survive.
fn requote(text: &str) -> String {
    #[derive(PartialEq)]
    enum State {
        Normal,
        Double,
        Single,
    }
    let chars: Vec<char> = text.chars().collect();
    let mut out = String::with_capacity(text.len());
    let mut state = State::Normal;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match state {
            State::Normal => {
                match c {
                    '"' => state = State::Double,
                    '\'' => {
                        state = State::Single;
                        out.push('"');
                        i += 1;
                        continue;
                    }
                    _ => {}
                }
                out.push(c);
            }
            State::Double => {
                out.push(c);
                if c == '\\' {
                    if let Some(&n) = chars.get(i + 1) {
                        out.push(n);
                        i += 1;
                    }
                } else if c == '"' {
                    state = State::Normal;
                }
            }
            State::Single => match c {
                '\\' => {
                    match chars.get(i + 1) {
                        Some('\'') => out.push('\''),
                        Some(&n) => {
                            out.push('\\');
                            out.push(n);
                        }
                        None => out.push_str("\\\\"),
                    }
                    i += 1;
                }
                '"' => out.push_str("\\\""),
                '\'' => {
                    let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
                    if matches!(next, None | Some(',' | ':' | '}' | ']')) {
                        out.push('"');
                        state = State::Normal;
                    } else {
                        out.push('\'');
                    }
                }
                '\n' => out.push_str("\\n"),
                _ => out.push(c),
            },
        }
        i += 1;
    }
    out
}

/// Applies `f` to every maximal run of text outside double-quoted strings.
fn map_outside_strings(text: &str, mut f: impl FnMut(&str, &mut String)) -> String {
    let mut out = String::with_capacity(text.len());
    let mut segment = String::new();
    let mut in_string = false;
    let mut escaped = false;
    for c in text.chars() {
        if in_string {
            out.push(c);
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == '"' {
                in_string = false;
            }
        } else if c == '"' {
            f(&segment, &mut out);
            segment.clear();
            out.push(c);
            in_string = true;
        } else {
            segment.push(c);
        }
    }
    f(&segment, &mut out);
    out
}

fn remove_trailing_commas(text: &str) -> String {
    // A comma is trailing when only whitespace separates it from a closer,
    // possibly across a string boundary, so work on the whole text.
    let kept = map_outside_strings(text, |seg, out| {
        for c in seg.chars() {
            out.push(if c == ',' { '\u{0}' } else { c });
        }
    });
    let chars: Vec<char> = kept.chars().collect();
    let mut out = String::with_capacity(text.len());
    for (i, &c) in chars.iter().enumerate() {
        if c == '\u{0}' {
            let next = chars[i + 1..].iter().find(|c| !c.is_whitespace());
            if !matches!(next, Some('}' | ']')) {
                out.push(',');
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn normalize_literals(text: &str) -> String {
    map_outside_strings(text, |seg, out| {
        let mut word = String::new();
        let flush = |word: &mut String, out: &mut String| {
            out.push_str(match word.as_str() {
                "True" => "true",
                "False" => "false",
                "None" => "null",
                w => w,
            });
            word.clear();
        };
        for c in seg.chars() {
            if c.is_alphanumeric() || c == '_' {
                word.push(c);
            } else {
                flush(&mut word, out);
                out.push(c);
            }
        }
        flush(&mut word, out);
    })
}

/// The model-produced part of a Knowledge Unit, before provenance and ids
/// are attached.
#[derive(Debug, Clone, PartialEq)]
pub struct KuFragment {
    pub context_summary: String,
    pub entities: Vec<Entity>,
}

impl KuFragment {
    /// Accepts `{context_summary, entities}` with entities as a name-keyed
    /// map or a list of `{name, ...}` objects, or a bare map of entity
    /// names. Attribute and relation keys are normalized to snake_case.
    pub fn from_value(value: &Value) -> Result<KuFragment, String> {
        let Value::Object(obj) = value else {
            return Err("expected an object".into());
        };
        let mut summary = String::new();
        let mut entities = Vec::new();
        let mut saw_entities_key = false;
        for (k, v) in obj {
            match normalize_key(k).as_str() {
                "context_summary" | "context" | "summary" => {
                    summary = scalar_text(v).ok_or("context summary must be a string")?;
                }
                "entities" => {
                    saw_entities_key = true;
                    match v {
                        Value::Object(map) => {
                            for (name, body) in map {
                                entities.push(entity_from(name, body)?);
                            }
                        }
                        Value::Array(items) => {
                            for item in items {
                                let name = item
                                    .get("name")
                                    .and_then(Value::as_str)
                                    .ok_or("entity list item without a name")?;
                                entities.push(entity_from(name, item)?);
                            }
                        }
                        _ => return Err("entities must be a map or a list".into()),
                    }
                }
                "source_sentence_minhash" | "sentence_minhashes" => {}
                _ if !saw_entities_key && v.is_object() => entities.push(entity_from(k, v)?),
                _ => {}
            }
        }
        if entities.is_empty() && summary.is_empty() {
            return Err("no context summary and no entities".into());
        }
        Ok(KuFragment {
            context_summary: summary,
            entities,
        })
    }
}

/// Parses and interprets a model response as a [`KuFragment`].
pub fn parse_ku_fragment(raw: &str) -> Result<(KuFragment, usize), UnparseableResponse> {
    let parsed = parse_structured_response(raw)?;
    KuFragment::from_value(&parsed.value)
        .map(|f| (f, parsed.repairs))
        .map_err(|reason| UnparseableResponse::new(reason, raw))
}

fn entity_from(name: &str, body: &Value) -> Result<Entity, String> {
    let mut entity = Entity::new(name.trim());
    match body {
        Value::Object(map) => {
            for (k, v) in map {
                match normalize_key(k).as_str() {
                    "name" => {}
                    "relations" | "relationships" => fill(&mut entity.relations, v)?,
                    "attributes" | "properties" => fill(&mut entity.attributes, v)?,
                    other => {
                        if let Some(fv) = field_value(v) {
                            entity.attributes.insert(other.to_string(), fv);
                        }
                    }
                }
            }
        }
        other => {
            if let Some(fv) = field_value(other) {
                entity.attributes.insert("description".into(), fv);
            }
        }
    }
    Ok(entity)
}

fn fill(
    target: &mut std::collections::BTreeMap<String, FieldValue>,
    v: &Value,
) -> Result<(), String> {
    let Value::Object(map) = v else {
        return Err("relations and attributes must be maps".into());
    };
    for (k, v) in map {
        let key = normalize_key(k);
        if key.is_empty() {
            continue;
        }
        if let Some(fv) = field_value(v) {
            target.insert(key, fv);
        }
    }
    Ok(())
}

fn scalar_text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Null => None,
        Value::Array(_) | Value::Object(_) => Some(v.to_string()),
    }
}

fn field_value(v: &Value) -> Option<FieldValue> {
    match v {
        Value::Array(items) => Some(FieldValue::List(
            items.iter().filter_map(scalar_text).collect(),
        )),
        Value::Object(map) => Some(FieldValue::Text(Value::Object(Map::clone(map)).to_string())),
        other => scalar_text(other).map(FieldValue::Text),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const TABLE_STYLE: &str = r#"```python
'Earth-Moon System': {
  'relations': {
      'evolution_described_by': 'Dark Matter Field Fluid Model',
      'evolution_pattern_agrees_with': ['Geological Evidence', 'Fossil Evidence'],
  },
  'attributes': {
      'closest_distance_4.5_billion_years_ago': '259000 km',
      'distance_relative_to_Roche_limit': 'Far beyond',
  }
},
'Mars': {'attributes': {'note': "Mars's rotation is slowing", 'observed': True}}
```"#;

    #[test]
    fn well_formed_needs_no_repair() {
        let p = parse_structured_response(r#"{"a": [1, 2], "b": "it's"}"#).unwrap();
        assert_eq!(p.repairs, 0);
        assert_eq!(p.value["b"], "it's");
    }

    #[test]
    fn fenced_single_quoted_listing_is_repaired() {
        let (frag, repairs) = parse_ku_fragment(TABLE_STYLE).unwrap();
        assert_eq!(repairs, 2);
        assert_eq!(frag.entities.len(), 2);
        let e = &frag.entities[0];
        assert_eq!(e.name, "Earth-Moon System");
        assert_eq!(
            e.attributes["closest_distance_4_5_billion_years_ago"],
            FieldValue::Text("259000 km".into())
        );
        assert_eq!(
            e.relations["evolution_pattern_agrees_with"],
            FieldValue::List(vec!["Geological Evidence".into(), "Fossil Evidence".into()])
        );
        let mars = &frag.entities[1];
        assert_eq!(
            mars.attributes["note"],
            FieldValue::Text("Mars's rotation is slowing".into())
        );
        assert_eq!(mars.attributes["observed"], FieldValue::Text("true".into()));
    }

    #[test]
    fn apostrophes_inside_single_quoted_values_survive() {
        let p = parse_structured_response("{'limit': 'Roche's limit', 'x': 'a'}").unwrap();
        assert_eq!(p.value["limit"], "Roche's limit");
    }

    #[test]
    fn prose_is_unparseable() {
        let raw = "I am sorry, I cannot produce that output.";
        let err = parse_structured_response(raw).unwrap_err();
        assert_eq!(err.raw, raw);
    }

    #[test]
    fn repair_passes_preserve_well_formed_input() {
        let samples = [
            r#"{"k": "value, with comma ]", "t": true, "n": null, "l": ["True", "it's"]}"#,
            r#"[{"question": "What is 'x'?", "options": ["a", "b"], "correct_index": 0}]"#,
            r#"{"nested": {"deep": [1, 2.5, -3e2]}, "esc": "quote \" inside"}"#,
        ];
        for s in samples {
            let strict: Value = serde_json::from_str(s).unwrap();
            let mut t = s.to_string();
            for pass in 1..=MAX_REPAIR_PASSES {
                t = repair_pass(&t, pass);
                let repaired: Value = serde_json::from_str(&t).unwrap();
                assert_eq!(repaired, strict, "pass {pass} changed {s}");
            }
        }
    }

    #[test]
    fn entity_list_shape() {
        let v: Value = serde_json::from_str(
            r#"{"context_summary": "S.", "entities": [{"name": "A", "attributes": {"Key One": "v"}}]}"#,
        )
        .unwrap();
        let f = KuFragment::from_value(&v).unwrap();
        assert_eq!(f.context_summary, "S.");
        assert_eq!(
            f.entities[0].attributes["key_one"],
            FieldValue::Text("v".into())
        );
    }
}
