//! The feature space: named numeric vectors, located state records, and
//! external evidence.
//!
//! A [`FeatureVector`] is an ordered list of named, optionally
//! unit-annotated real dimensions. Two vectors are *compatible* — and all
//! arithmetic demands compatibility — when their name and unit sequences are
//! identical. A [`StateRecord`] is one observation of an object: located in
//! time (timestamp), in space (region label), or both, carrying the raw
//! payload it was derived from plus the id of the extractor that derived it.
//!
//! Records serialize to single-line JSON with a stable key order
//! (`id`, `timestamp`, `region_label`, `extractor_id`, `raw_ref`, `dims`);
//! that canonical form is the persistence and CLI exchange format, and
//! deserialization re-validates every invariant rather than trusting input.

use serde::{de, Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// One named dimension of a feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct Dim<S: Real> {
    /// Dimension name, unique within its vector.
    pub name: String,
    /// Finite value.
    pub value: S,
    /// Optional unit annotation. Units are labels only — there is no
    /// conversion machinery, and mismatched units make vectors incompatible.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
}

impl<S: Real> Dim<S> {
    /// A unit-less dimension.
    pub fn new(name: impl Into<String>, value: S) -> Self {
        Dim {
            name: name.into(),
            value,
            unit: None,
        }
    }

    /// A unit-annotated dimension.
    pub fn with_unit(name: impl Into<String>, value: S, unit: impl Into<String>) -> Self {
        Dim {
            name: name.into(),
            value,
            unit: Some(unit.into()),
        }
    }
}

/// An ordered, named, finite real vector — the codomain of every feature
/// extractor and the operand of all difference arithmetic.
///
/// Invariants (enforced at construction and on deserialization):
/// dimension names are unique, and every value is finite.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureVector<S: Real>(Vec<Dim<S>>);

impl<S: Real> FeatureVector<S> {
    /// Validates and wraps a dimension list.
    pub fn new(dims: Vec<Dim<S>>) -> Result<Self> {
        for (i, dim) in dims.iter().enumerate() {
            if !dim.value.is_finite() {
                return Err(Error::NonFiniteFeature {
                    name: dim.name.clone(),
                });
            }
            if dims[..i].iter().any(|d| d.name == dim.name) {
                return Err(Error::UnparseablePayload {
                    detail: format!("duplicate dimension name `{}`", dim.name),
                });
            }
        }
        Ok(FeatureVector(dims))
    }

    /// The empty vector (compatible only with other empty vectors).
    pub fn empty() -> Self {
        FeatureVector(Vec::new())
    }

    pub fn dims(&self) -> &[Dim<S>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Looks a dimension up by name.
    pub fn get(&self, name: &str) -> Option<&Dim<S>> {
        self.0.iter().find(|d| d.name == name)
    }

    /// The values in dimension order.
    pub fn values(&self) -> impl Iterator<Item = S> + '_ {
        self.0.iter().map(|d| d.value)
    }

    /// Checks compatibility: identical name sequences *and* identical unit
    /// annotations. Returns a descriptive error on the first mismatch.
    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::IncompatibleVectors {
                detail: format!("{} dims vs {} dims", self.len(), other.len()),
            });
        }
        for (a, b) in self.0.iter().zip(other.0.iter()) {
            if a.name != b.name {
                return Err(Error::IncompatibleVectors {
                    detail: format!("dimension `{}` vs `{}`", a.name, b.name),
                });
            }
            if a.unit != b.unit {
                return Err(Error::IncompatibleVectors {
                    detail: format!(
                        "dimension `{}` carries unit {:?} on one side and {:?} on the other",
                        a.name, a.unit, b.unit
                    ),
                });
            }
        }
        Ok(())
    }

    /// Componentwise subtraction `self − other` over compatible vectors.
    /// The result keeps the shared names and units.
    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let dims = self
            .0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| Dim {
                name: a.name.clone(),
                value: a.value - b.value,
                unit: a.unit.clone(),
            })
            .collect();
        // Re-validate: subtracting two finite values can still overflow.
        FeatureVector::new(dims)
    }

    /// Componentwise arithmetic mean of one or more compatible vectors.
    pub fn mean(vectors: &[&Self]) -> Result<Self> {
        let first = vectors.first().ok_or(Error::EmptyHistory)?;
        for v in &vectors[1..] {
            first.check_compatible(v)?;
        }
        let count = S::from_usize(vectors.len()).expect("vector count representable");
        let dims = first
            .0
            .iter()
            .enumerate()
            .map(|(k, proto)| Dim {
                name: proto.name.clone(),
                value: vectors
                    .iter()
                    .fold(S::zero(), |acc, v| acc + v.0[k].value)
                    / count,
                unit: proto.unit.clone(),
            })
            .collect();
        FeatureVector::new(dims)
    }
}

impl<S: Real> Serialize for FeatureVector<S> {
    fn serialize<Ser: Serializer>(&self, serializer: Ser) -> std::result::Result<Ser::Ok, Ser::Error> {
        self.0.serialize(serializer)
    }
}

impl<'de, S: Real> Deserialize<'de> for FeatureVector<S> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let dims = Vec::<Dim<S>>::deserialize(deserializer)?;
        FeatureVector::new(dims).map_err(de::Error::custom)
    }
}

/// Locator for the raw payload a state was derived from: either the bytes
/// themselves (base64 in JSON) or an unresolved URI. The crate never
/// dereferences URIs — resolution is the caller's concern.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RawRef {
    Inline(#[serde(with = "base64_bytes")] Vec<u8>),
    Uri(String),
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(
        bytes: &[u8],
        serializer: S,
    ) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Vec<u8>, D::Error> {
        let text = String::deserialize(deserializer)?;
        STANDARD.decode(text.as_bytes()).map_err(de::Error::custom)
    }
}

/// One observation of an object: its extracted features plus provenance.
///
/// A state is located in time (`timestamp`), in space (`region_label`), or
/// both — never neither. `extractor_id` names the extractor that produced
/// `dims` from the raw payload, so provenance stays checkable.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "S: Real")]
pub struct StateRecord<S: Real> {
    id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    timestamp: Option<i64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    region_label: Option<String>,
    extractor_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    raw_ref: Option<RawRef>,
    dims: FeatureVector<S>,
}

impl<S: Real> StateRecord<S> {
    /// Builds a record, enforcing that it is located in time or space.
    pub fn new(
        id: impl Into<String>,
        timestamp: Option<i64>,
        region_label: Option<String>,
        extractor_id: impl Into<String>,
        raw_ref: Option<RawRef>,
        dims: FeatureVector<S>,
    ) -> Result<Self> {
        if timestamp.is_none() && region_label.is_none() {
            return Err(Error::UnparseablePayload {
                detail: "state record must carry a timestamp or a region label".into(),
            });
        }
        Ok(StateRecord {
            id: id.into(),
            timestamp,
            region_label,
            extractor_id: extractor_id.into(),
            raw_ref,
            dims,
        })
    }

    /// A state located in time.
    pub fn temporal(
        id: impl Into<String>,
        timestamp: i64,
        extractor_id: impl Into<String>,
        raw_ref: Option<RawRef>,
        dims: FeatureVector<S>,
    ) -> Self {
        StateRecord {
            id: id.into(),
            timestamp: Some(timestamp),
            region_label: None,
            extractor_id: extractor_id.into(),
            raw_ref,
            dims,
        }
    }

    /// A state located in space (a sub-object of a partitioned whole).
    pub fn spatial(
        id: impl Into<String>,
        region_label: impl Into<String>,
        extractor_id: impl Into<String>,
        raw_ref: Option<RawRef>,
        dims: FeatureVector<S>,
    ) -> Self {
        StateRecord {
            id: id.into(),
            timestamp: None,
            region_label: Some(region_label.into()),
            extractor_id: extractor_id.into(),
            raw_ref,
            dims,
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn timestamp(&self) -> Option<i64> {
        self.timestamp
    }

    pub fn region_label(&self) -> Option<&str> {
        self.region_label.as_deref()
    }

    pub fn extractor_id(&self) -> &str {
        &self.extractor_id
    }

    pub fn raw_ref(&self) -> Option<&RawRef> {
        self.raw_ref.as_ref()
    }

    pub fn features(&self) -> &FeatureVector<S> {
        &self.dims
    }

    pub fn is_temporal(&self) -> bool {
        self.timestamp.is_some()
    }

    pub fn is_spatial(&self) -> bool {
        self.region_label.is_some()
    }
}

/// Mirror of [`StateRecord`] used to validate untrusted input on the way in.
#[derive(Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Real")]
struct StateRecordWire<S: Real> {
    id: String,
    #[serde(default)]
    timestamp: Option<i64>,
    #[serde(default)]
    region_label: Option<String>,
    extractor_id: String,
    #[serde(default)]
    raw_ref: Option<RawRef>,
    dims: FeatureVector<S>,
}

impl<'de, S: Real> Deserialize<'de> for StateRecord<S> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = StateRecordWire::<S>::deserialize(deserializer)?;
        StateRecord::new(
            wire.id,
            wire.timestamp,
            wire.region_label,
            wire.extractor_id,
            wire.raw_ref,
            wire.dims,
        )
        .map_err(de::Error::custom)
    }
}

/// Where a piece of external evidence came from. The tag doubles as the
/// dimension-name prefix during fusion.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvidenceSource {
    User,
    Sensor,
    Database,
}

impl EvidenceSource {
    /// The prefix tag used for fused dimension names (`sensor.speed_kmh`).
    pub fn tag(&self) -> &'static str {
        match self {
            EvidenceSource::User => "user",
            EvidenceSource::Sensor => "sensor",
            EvidenceSource::Database => "database",
        }
    }
}

/// External evidence observed at one instant, to be fused with a state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Real")]
pub struct EvidenceRecord<S: Real> {
    pub source: EvidenceSource,
    pub timestamp: i64,
    pub dims: FeatureVector<S>,
}
