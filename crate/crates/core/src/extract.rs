//! Feature extractors: configuration-selected mappings from raw payloads to
//! feature vectors.
//!
//! Extraction is deliberately boring — the interesting reasoning happens on
//! differences, not on raw data — so extractors are small, deterministic,
//! configuration-driven parsers. Three kinds exist:
//!
//! * `passthrough` — the payload *is* a serialized feature vector, either
//!   the canonical dims array or a `{name: value}` shorthand object (parsed
//!   in sorted name order, no units);
//! * `select_dims` — passthrough plus projection onto a named subset, in
//!   the configured order;
//! * `scripted_table` — the payload is a lookup key into a fixture table,
//!   which lets tests replay full scenarios without any real perception.
//!
//! Because states record which extractor produced their features,
//! [`verify_provenance`] can re-run extraction on inline payloads and check
//! the recorded features byte-for-byte.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::feature::{Dim, FeatureVector, RawRef, StateRecord};
use crate::scalar::Real;

/// What an extractor does with a payload.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", bound = "S: Real")]
pub enum ExtractorKind<S: Real> {
    /// Payload is a serialized feature vector.
    Passthrough,
    /// Payload is a serialized feature vector; keep only `names`, in the
    /// order given here.
    SelectDims { names: Vec<String> },
    /// Payload is a UTF-8 key into a fixture table.
    ScriptedTable { table: BTreeMap<String, FeatureVector<S>> },
}

/// A registered extractor: an id plus its behaviour.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct ExtractorSpec<S: Real> {
    pub id: String,
    #[serde(flatten)]
    pub kind: ExtractorKind<S>,
}

/// Runs one extractor over one payload.
pub fn extract<S: Real>(raw: &[u8], spec: &ExtractorSpec<S>) -> Result<FeatureVector<S>> {
    match &spec.kind {
        ExtractorKind::Passthrough => parse_vector_payload(raw),
        ExtractorKind::SelectDims { names } => {
            let full = parse_vector_payload::<S>(raw)?;
            let dims = names
                .iter()
                .map(|name| {
                    full.get(name).cloned().ok_or_else(|| Error::UnparseablePayload {
                        detail: format!("select_dims: dimension `{name}` not present in payload"),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            FeatureVector::new(dims)
        }
        ExtractorKind::ScriptedTable { table } => {
            let key = std::str::from_utf8(raw).map_err(|_| Error::UnparseablePayload {
                detail: "scripted_table key is not UTF-8".into(),
            })?;
            table.get(key).cloned().ok_or_else(|| Error::UnparseablePayload {
                detail: format!("scripted_table has no entry for key `{key}`"),
            })
        }
    }
}

/// Parses a payload as a feature vector: the canonical dims array, or the
/// `{name: value}` shorthand (sorted by name, unit-less).
fn parse_vector_payload<S: Real>(raw: &[u8]) -> Result<FeatureVector<S>> {
    let value: serde_json::Value =
        serde_json::from_slice(raw).map_err(|e| Error::UnparseablePayload {
            detail: format!("payload is not JSON: {e}"),
        })?;
    match value {
        serde_json::Value::Array(_) => {
            serde_json::from_value::<FeatureVector<S>>(value).map_err(|e| {
                Error::UnparseablePayload {
                    detail: format!("payload is not a feature vector: {e}"),
                }
            })
        }
        serde_json::Value::Object(map) => {
            // serde_json object iteration is sorted by key, which fixes the
            // dimension order of the shorthand form deterministically.
            let dims = map
                .into_iter()
                .map(|(name, v)| {
                    let value = v
                        .as_f64()
                        .and_then(S::from_f64)
                        .ok_or_else(|| Error::UnparseablePayload {
                            detail: format!("dimension `{name}` is not a number"),
                        })?;
                    Ok(Dim::new(name, value))
                })
                .collect::<Result<Vec<_>>>()?;
            FeatureVector::new(dims)
        }
        _ => Err(Error::UnparseablePayload {
            detail: "payload must be a JSON array of dims or a {name: value} object".into(),
        }),
    }
}

/// A set of extractors addressable by id.
#[derive(Clone, Debug, Default)]
pub struct ExtractorRegistry<S: Real> {
    specs: BTreeMap<String, ExtractorSpec<S>>,
}

impl<S: Real> ExtractorRegistry<S> {
    pub fn new() -> Self {
        ExtractorRegistry {
            specs: BTreeMap::new(),
        }
    }

    /// Builds a registry from a spec list, rejecting duplicate ids.
    pub fn from_specs(specs: Vec<ExtractorSpec<S>>) -> Result<Self> {
        let mut registry = Self::new();
        for spec in specs {
            registry.register(spec)?;
        }
        Ok(registry)
    }

    /// Adds one extractor; ids must be unique.
    pub fn register(&mut self, spec: ExtractorSpec<S>) -> Result<()> {
        if self.specs.contains_key(&spec.id) {
            return Err(Error::Config {
                detail: format!("duplicate extractor id `{}`", spec.id),
            });
        }
        self.specs.insert(spec.id.clone(), spec);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Result<&ExtractorSpec<S>> {
        self.specs.get(id).ok_or_else(|| Error::UnknownExtractor {
            id: id.to_string(),
        })
    }

    /// Looks the extractor up and runs it.
    pub fn extract_with(&self, id: &str, raw: &[u8]) -> Result<FeatureVector<S>> {
        extract(raw, self.get(id)?)
    }
}

/// Outcome of a provenance check on a state record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProvenanceCheck {
    /// Re-extraction reproduced the recorded features exactly.
    Verified,
    /// Re-extraction produced different features.
    Mismatch,
    /// Nothing to check: no inline payload (absent or URI-referenced).
    Unverifiable,
}

/// Re-extracts a state's inline payload with its recorded extractor and
/// compares against the recorded features.
pub fn verify_provenance<S: Real>(
    state: &StateRecord<S>,
    registry: &ExtractorRegistry<S>,
) -> Result<ProvenanceCheck> {
    let bytes = match state.raw_ref() {
        Some(RawRef::Inline(bytes)) => bytes,
        _ => return Ok(ProvenanceCheck::Unverifiable),
    };
    let extracted = registry.extract_with(state.extractor_id(), bytes)?;
    if &extracted == state.features() {
        Ok(ProvenanceCheck::Verified)
    } else {
        Ok(ProvenanceCheck::Mismatch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn passthrough() -> ExtractorSpec<f64> {
        ExtractorSpec {
            id: "identity".into(),
            kind: ExtractorKind::Passthrough,
        }
    }

    #[test]
    fn passthrough_parses_canonical_dims() {
        let payload = br#"[{"name":"gap_m","value":30.0,"unit":"m"}]"#;
        let v = extract(payload, &passthrough()).unwrap();
        assert_eq!(v.dims()[0].value, 30.0);
        assert_eq!(v.dims()[0].unit.as_deref(), Some("m"));

        let payload = br#"[{"name":"gap_m","value":15.0,"unit":"m"}]"#;
        let v = extract(payload, &passthrough()).unwrap();
        assert_eq!(v.dims()[0].value, 15.0);
    }

    #[test]
    fn passthrough_parses_shorthand_sorted() {
        let payload = br#"{"speed_kmh": 80, "gap_m": 15}"#;
        let v = extract::<f64>(payload, &passthrough()).unwrap();
        let names: Vec<_> = v.dims().iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, vec!["gap_m", "speed_kmh"]);
    }

    #[test]
    fn empty_payload_yields_empty_vector() {
        let v = extract::<f64>(b"[]", &passthrough()).unwrap();
        assert!(v.is_empty());
    }

    #[test]
    fn garbage_is_unparseable() {
        for bad in [&b"not json"[..], b"42", b"\"str\"", b"[{\"name\":\"x\"}]"] {
            assert!(matches!(
                extract::<f64>(bad, &passthrough()),
                Err(Error::UnparseablePayload { .. })
            ));
        }
    }

    #[test]
    fn select_dims_projects_in_given_order() {
        let spec = ExtractorSpec {
            id: "sel".into(),
            kind: ExtractorKind::SelectDims {
                names: vec!["b".into(), "a".into()],
            },
        };
        let v = extract::<f64>(br#"{"a": 1, "b": 2, "c": 3}"#, &spec).unwrap();
        let names: Vec<_> = v.dims().iter().map(|d| d.name.as_str()).collect();
        assert_eq!(names, vec!["b", "a"]);

        let err = extract::<f64>(br#"{"a": 1}"#, &spec);
        assert!(matches!(err, Err(Error::UnparseablePayload { .. })));
    }

    #[test]
    fn scripted_table_replays_fixtures() {
        let mut table = BTreeMap::new();
        table.insert(
            "scene_t0".to_string(),
            FeatureVector::new(vec![Dim::with_unit("gap_m", 30.0, "m")]).unwrap(),
        );
        let spec = ExtractorSpec {
            id: "scene".into(),
            kind: ExtractorKind::ScriptedTable { table },
        };
        let v = extract(b"scene_t0", &spec).unwrap();
        assert_eq!(v.dims()[0].value, 30.0);
        assert!(matches!(
            extract(b"scene_t9", &spec),
            Err(Error::UnparseablePayload { .. })
        ));
    }

    #[test]
    fn extraction_is_deterministic() {
        let payload = br#"{"a": 0.1, "b": -2.5}"#;
        let a = extract::<f64>(payload, &passthrough()).unwrap();
        let b = extract::<f64>(payload, &passthrough()).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn registry_resolves_and_rejects() {
        let mut reg = ExtractorRegistry::new();
        reg.register(passthrough()).unwrap();
        assert!(reg.register(passthrough()).is_err());
        assert!(reg.get("identity").is_ok());
        assert!(matches!(
            reg.get("nope"),
            Err(Error::UnknownExtractor { .. })
        ));
        let v = reg.extract_with("identity", br#"{"x": 1}"#).unwrap();
        assert_eq!(v.len(), 1);
    }

    #[test]
    fn provenance_round_trips() {
        let reg =
            ExtractorRegistry::from_specs(vec![passthrough()]).unwrap();
        let payload = br#"{"gap_m": 30}"#.to_vec();
        let dims = reg.extract_with("identity", &payload).unwrap();
        let good = StateRecord::temporal(
            "s0",
            0,
            "identity",
            Some(RawRef::Inline(payload.clone())),
            dims,
        );
        assert_eq!(
            verify_provenance(&good, &reg).unwrap(),
            ProvenanceCheck::Verified
        );

        let tampered = StateRecord::temporal(
            "s1",
            1,
            "identity",
            Some(RawRef::Inline(payload)),
            FeatureVector::new(vec![Dim::new("gap_m", 31.0)]).unwrap(),
        );
        assert_eq!(
            verify_provenance(&tampered, &reg).unwrap(),
            ProvenanceCheck::Mismatch
        );

        let opaque = StateRecord::temporal(
            "s2",
            2,
            "identity",
            Some(RawRef::Uri("file:///x.png".into())),
            FeatureVector::empty(),
        );
        assert_eq!(
            verify_provenance(&opaque, &reg).unwrap(),
            ProvenanceCheck::Unverifiable
        );
    }

    #[test]
    fn specs_round_trip_through_config_formats() {
        let spec = ExtractorSpec::<f64> {
            id: "sel".into(),
            kind: ExtractorKind::SelectDims {
                names: vec!["gap_m".into()],
            },
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"id":"sel","kind":"select_dims","names":["gap_m"]}"#);
        let toml_text = "id = \"sel\"\nkind = \"select_dims\"\nnames = [\"gap_m\"]\n";
        let back: ExtractorSpec<f64> = toml::from_str(toml_text).unwrap();
        assert_eq!(back.id, "sel");
    }
}
