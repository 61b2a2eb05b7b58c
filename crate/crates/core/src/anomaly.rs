//! Normal/abnormal classification of differences and states.
//!
//! Two detectors, both with strict (`>`) boundaries:
//!
//! * threshold — a difference is abnormal when its magnitude strictly
//!   exceeds θ; θ can be given or estimated from the history of
//!   normal-labelled magnitudes as `mean + k·std`;
//! * history — a state is abnormal when its nearest-neighbour distance to
//!   the normal-labelled history strictly exceeds η. "Significantly
//!   different from all historical states" is exactly "the minimum distance
//!   is large", so nearest-neighbour is the literal realization, not an
//!   approximation.
//!
//! Unlabelled and abnormal records are excluded from both the estimation
//! set and the nearest-neighbour set: estimating "normal variation" from
//! data not known to be normal would quietly widen the bounds.

use serde::{Deserialize, Serialize};

use crate::diff::{Difference, Norm};
use crate::error::{Error, Result};
use crate::feature::StateRecord;
use crate::history::{HistoryStore, Label};
use crate::scalar::Real;

/// Detection bounds: θ for difference magnitudes, η for history distance,
/// and the k-sigma multiplier used when estimating θ from history. Each
/// field may be set independently in a config; the others keep their
/// defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct ThresholdSpec<S: Real> {
    #[serde(default = "zero")]
    pub theta: S,
    #[serde(default = "zero")]
    pub eta: S,
    /// Multiplier for [`estimate_threshold`]; three-sigma by default.
    #[serde(default = "default_k_sigma")]
    pub k_sigma: S,
}

fn zero<S: Real>() -> S {
    S::zero()
}

fn default_k_sigma<S: Real>() -> S {
    S::from_f64_const(3.0)
}

impl<S: Real> Default for ThresholdSpec<S> {
    fn default() -> Self {
        ThresholdSpec {
            theta: zero(),
            eta: zero(),
            k_sigma: default_k_sigma(),
        }
    }
}

/// Which detector produced a verdict.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectionMethod {
    Threshold,
    History,
}

/// The outcome of a detection: the compared statistic, the bound it was
/// compared against, and the strict-inequality verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct AnomalyVerdict<S: Real> {
    pub abnormal: bool,
    /// The measured quantity: a difference magnitude or a nearest-history
    /// distance.
    pub statistic: S,
    /// θ or η.
    pub bound: S,
    pub method: DetectionMethod,
}

fn check_nonnegative<S: Real>(value: S) -> Result<()> {
    if value < S::zero() {
        return Err(Error::NegativeThreshold {
            value: value.to_f64().unwrap_or(f64::NAN),
        });
    }
    Ok(())
}

/// Flags a difference whose magnitude strictly exceeds θ.
pub fn detect_threshold<S: Real>(diff: &Difference<S>, theta: S) -> Result<AnomalyVerdict<S>> {
    check_nonnegative(theta)?;
    Ok(AnomalyVerdict {
        abnormal: diff.magnitude > theta,
        statistic: diff.magnitude,
        bound: theta,
        method: DetectionMethod::Threshold,
    })
}

/// Estimates θ as `mean + k·std` (sample standard deviation, n−1
/// denominator) over the normal-labelled magnitudes.
pub fn estimate_threshold<S: Real>(magnitudes: &[(S, Label)], k_sigma: S) -> Result<S> {
    check_nonnegative(k_sigma)?;
    let normal: Vec<S> = magnitudes
        .iter()
        .filter(|(_, label)| *label == Label::Normal)
        .map(|(m, _)| *m)
        .collect();
    if normal.len() < 2 {
        return Err(Error::InsufficientNormalHistory {
            needed: 2,
            got: normal.len(),
        });
    }
    let n = S::from_usize(normal.len()).expect("sample count representable");
    let mean = normal.iter().fold(S::zero(), |acc, &m| acc + m) / n;
    let var = normal
        .iter()
        .fold(S::zero(), |acc, &m| acc + (m - mean) * (m - mean))
        / (n - S::one());
    Ok(mean + k_sigma * var.sqrt())
}

/// The distance from a state to the normal-labelled history: the minimum
/// over stored normal states of `‖features(s) − features(h)‖` under the
/// chosen metric. This *is* the exhaustive scan; there is no index to get
/// out of sync with the log.
pub fn nearest_history_distance<S: Real>(
    state: &StateRecord<S>,
    store: &HistoryStore<S>,
    metric: Norm,
) -> Result<S> {
    let mut best: Option<S> = None;
    for record in store.effective() {
        if record.label != Label::Normal {
            continue;
        }
        let delta = state.features().sub(record.state.features())?;
        let dist = metric.magnitude(delta.values());
        best = Some(match best {
            None => dist,
            Some(b) => b.min(dist),
        });
    }
    best.ok_or(Error::EmptyHistory)
}

/// Flags a state whose nearest-history distance strictly exceeds η.
pub fn detect_history<S: Real>(
    state: &StateRecord<S>,
    store: &HistoryStore<S>,
    eta: S,
    metric: Norm,
) -> Result<AnomalyVerdict<S>> {
    check_nonnegative(eta)?;
    let d = nearest_history_distance(state, store, metric)?;
    Ok(AnomalyVerdict {
        abnormal: d > eta,
        statistic: d,
        bound: eta,
        method: DetectionMethod::History,
    })
}
