//! Fusing external evidence into states, and the internal-vs-external
//! difference pair.
//!
//! The fusion function is concatenation: the base state's features followed
//! by every evidence dimension, each renamed with its source prefix
//! (`sensor.speed_kmh`). Concatenation is the minimal fusion with the
//! property the whole module rests on — restricting a fused difference to
//! the base dimensions reproduces the internal difference exactly, so
//! adding evidence can only ever *add* detected change (in the L2 sense),
//! never mask it.

use serde::{Deserialize, Serialize};

use crate::diff::{DiffKind, DiffSession, Difference};
use crate::error::{Error, Result};
use crate::feature::{Dim, EvidenceRecord, FeatureVector, StateRecord};
use crate::scalar::Real;

/// A state with evidence folded in: the untouched base record, the evidence
/// that was fused, and the concatenated feature vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct FusedState<S: Real> {
    pub base: StateRecord<S>,
    pub evidence: Vec<EvidenceRecord<S>>,
    pub fused: FeatureVector<S>,
}

/// Concatenates a state's features with source-prefixed evidence features.
///
/// Every evidence record must be observed at the state's instant, and the
/// prefixed names must not collide with base dimensions or each other.
/// Evidence list order determines fused dimension order, deterministically.
/// With no evidence the fused vector is simply the base features.
pub fn fuse<S: Real>(
    state: &StateRecord<S>,
    evidence: &[EvidenceRecord<S>],
) -> Result<FusedState<S>> {
    let mut dims: Vec<Dim<S>> = state.features().dims().to_vec();
    for record in evidence {
        if state.timestamp() != Some(record.timestamp) {
            return Err(Error::TimestampMismatch {
                state: state.timestamp(),
                evidence: record.timestamp,
            });
        }
        for dim in record.dims.dims() {
            let name = format!("{}.{}", record.source.tag(), dim.name);
            if dims.iter().any(|d| d.name == name) {
                return Err(Error::NameCollision { name });
            }
            dims.push(Dim {
                name,
                value: dim.value,
                unit: dim.unit.clone(),
            });
        }
    }
    Ok(FusedState {
        base: state.clone(),
        evidence: evidence.to_vec(),
        fused: FeatureVector::new(dims)?,
    })
}

/// The difference computed from states alone:
/// `delta = features(current) − features(previous)` (kind `temporal`).
/// Identical to a plain temporal delta over the pair.
pub fn internal_difference<S: Real>(
    current: &StateRecord<S>,
    previous: &StateRecord<S>,
    session: &mut DiffSession<S>,
) -> Result<Difference<S>> {
    session.temporal_delta(previous, current)
}

/// The difference computed over evidence-fused vectors:
/// `delta = fused(current, evidence) − fused(previous, prev_evidence)`
/// (kind `external`, `from` = previous, `to` = current).
///
/// The evidence shape must match across the two instants — same sources,
/// same dimensions — otherwise the subtraction is meaningless and is
/// rejected rather than silently aligned.
pub fn external_difference<S: Real>(
    current: &StateRecord<S>,
    evidence: &[EvidenceRecord<S>],
    previous: &StateRecord<S>,
    prev_evidence: &[EvidenceRecord<S>],
    session: &mut DiffSession<S>,
) -> Result<Difference<S>> {
    let (t_prev, t_cur) = match (previous.timestamp(), current.timestamp()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::MixedLocation),
    };
    if t_cur <= t_prev {
        return Err(Error::NotOrdered {
            earlier: t_prev,
            later: t_cur,
        });
    }
    let fused_current = fuse(current, evidence)?;
    let fused_previous = fuse(previous, prev_evidence)?;
    let delta = fused_current.fused.sub(&fused_previous.fused)?;
    Ok(session.stamp(previous.id(), current.id(), DiffKind::External, delta))
}
