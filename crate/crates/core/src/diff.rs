//! The difference algebra: pairwise differences, temporal deltas, latest
//! differences, impact scoring, top-n selection, and spatial variability.
//!
//! Two sign conventions coexist deliberately. [`DiffSession::compute_difference`]
//! subtracts *first minus second* — the symmetric, order-of-mention
//! convention. [`DiffSession::temporal_delta`] subtracts *later minus
//! earlier* — the direction-of-time convention, so a shrinking quantity
//! yields a negative delta. They are exact negations of one another on the
//! same pair, and the test suite pins that identity; unifying them would
//! quietly flip signs somewhere downstream.

use std::str::FromStr;

use serde::{de, Deserialize, Deserializer, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::feature::{FeatureVector, StateRecord};
use crate::scalar::Real;

/// Vector norm used to turn a delta into a scalar magnitude.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Norm {
    L1,
    #[default]
    L2,
    Linf,
}

impl Norm {
    /// Applies the norm to a value sequence. Empty input has magnitude 0.
    pub fn magnitude<S: Real>(&self, values: impl Iterator<Item = S>) -> S {
        match self {
            Norm::L1 => values.fold(S::zero(), |acc, v| acc + v.abs()),
            Norm::L2 => values.fold(S::zero(), |acc, v| acc + v * v).sqrt(),
            Norm::Linf => values.fold(S::zero(), |acc, v| acc.max(v.abs())),
        }
    }
}

impl FromStr for Norm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "l1" => Ok(Norm::L1),
            "l2" => Ok(Norm::L2),
            "linf" => Ok(Norm::Linf),
            other => Err(Error::Config {
                detail: format!("unknown norm `{other}` (expected l1, l2, or linf)"),
            }),
        }
    }
}

/// How the two compared states relate to each other.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiffKind {
    /// Same object at two time points.
    Temporal,
    /// Two sub-objects of one partitioned object.
    Spatial,
    /// A current state against a historical reference.
    History,
    /// Evidence-fused vectors at two time points.
    External,
}

/// A computed difference between two states: the componentwise delta, its
/// magnitude under the recorded norm, and a session-scoped detection index.
///
/// `from_id`/`to_id` name the two operands in the order of the originating
/// operation's notation; each operation documents which side is subtracted.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(bound = "S: Real")]
pub struct Difference<S: Real> {
    pub from_id: String,
    pub to_id: String,
    pub kind: DiffKind,
    pub norm: Norm,
    /// Detection order within the producing session; ties in impact are
    /// broken by smaller `seq` (earlier detection wins).
    pub seq: u64,
    #[serde(rename = "dims")]
    pub delta: FeatureVector<S>,
    pub magnitude: S,
}

impl<S: Real> Difference<S> {
    /// Builds a difference, deriving the magnitude from the delta.
    pub fn new(
        from_id: impl Into<String>,
        to_id: impl Into<String>,
        kind: DiffKind,
        norm: Norm,
        seq: u64,
        delta: FeatureVector<S>,
    ) -> Self {
        let magnitude = norm.magnitude(delta.values());
        Difference {
            from_id: from_id.into(),
            to_id: to_id.into(),
            kind,
            norm,
            seq,
            delta,
            magnitude,
        }
    }

    /// True when every delta component is exactly zero (equivalently, when
    /// the magnitude is zero under any norm).
    pub fn is_zero(&self) -> bool {
        self.delta.values().all(|v| v == S::zero())
    }

    fn check_magnitude(&self) -> Result<()> {
        let expect = self.norm.magnitude(self.delta.values());
        let tol = S::from_f64_const(1e-9) * expect.abs().max(S::one());
        if (self.magnitude - expect).abs() > tol {
            return Err(Error::UnparseablePayload {
                detail: format!(
                    "difference magnitude {} does not match its delta (expected {})",
                    self.magnitude, expect
                ),
            });
        }
        Ok(())
    }
}

/// Mirror of [`Difference`] used to validate untrusted input on the way in.
#[derive(Deserialize)]
#[serde(deny_unknown_fields, bound = "S: Real")]
struct DifferenceWire<S: Real> {
    from_id: String,
    to_id: String,
    kind: DiffKind,
    norm: Norm,
    seq: u64,
    dims: FeatureVector<S>,
    magnitude: S,
}

impl<'de, S: Real> Deserialize<'de> for Difference<S> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let wire = DifferenceWire::<S>::deserialize(deserializer)?;
        let diff = Difference {
            from_id: wire.from_id,
            to_id: wire.to_id,
            kind: wire.kind,
            norm: wire.norm,
            seq: wire.seq,
            delta: wire.dims,
            magnitude: wire.magnitude,
        };
        diff.check_magnitude().map_err(de::Error::custom)?;
        Ok(diff)
    }
}

/// Per-dimension nonnegative weights for impact scoring. Dimensions not
/// listed weigh 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct WeightProfile<S: Real> {
    pub id: String,
    pub weights: BTreeMap<String, S>,
}

impl<S: Real> WeightProfile<S> {
    /// Validates that no weight is negative.
    pub fn new(id: impl Into<String>, weights: BTreeMap<String, S>) -> Result<Self> {
        let profile = WeightProfile {
            id: id.into(),
            weights,
        };
        profile.check()?;
        Ok(profile)
    }

    /// Uniform unit weights.
    pub fn unit() -> Self {
        WeightProfile {
            id: "unit".into(),
            weights: BTreeMap::new(),
        }
    }

    pub fn check(&self) -> Result<()> {
        for (name, w) in &self.weights {
            if *w < S::zero() {
                return Err(Error::NegativeWeight { name: name.clone() });
            }
        }
        Ok(())
    }

    fn weight_for(&self, name: &str) -> S {
        self.weights.get(name).copied().unwrap_or_else(S::one)
    }
}

/// A difference's impact under a weight profile. References the scored
/// difference by its session `seq`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "S: Real")]
pub struct ImpactScore<S: Real> {
    pub diff_seq: u64,
    pub score: S,
    pub weights_id: String,
}

/// Impact of a difference: the weighted L1 of its delta,
/// `Σ_k w_k · |delta_k|`. Nonnegative by construction; with unit weights
/// and a single dimension it equals the L1 magnitude.
pub fn impact<S: Real>(diff: &Difference<S>, weights: &WeightProfile<S>) -> Result<ImpactScore<S>> {
    weights.check()?;
    let score = diff
        .delta
        .dims()
        .iter()
        .fold(S::zero(), |acc, d| acc + weights.weight_for(&d.name) * d.value.abs());
    Ok(ImpactScore {
        diff_seq: diff.seq,
        score,
        weights_id: weights.id.clone(),
    })
}

/// Picks the size-`min(n, len)` subset of differences with the maximum
/// total impact, returned in descending score order (ties by ascending
/// `seq` — the earliest detection wins).
///
/// Because impacts are nonnegative and add independently, the optimal
/// subset is exactly the top `n` individually scored differences; the
/// test suite checks this against exhaustive subset enumeration. `n`
/// larger than the input returns everything, sorted; `n = 0` selects the
/// empty subset.
pub fn select_main_differences<S: Real>(
    diffs: &[Difference<S>],
    n: usize,
    weights: &WeightProfile<S>,
) -> Result<Vec<Difference<S>>> {
    let mut scored = diffs
        .iter()
        .map(|d| Ok((impact(d, weights)?.score, d)))
        .collect::<Result<Vec<(S, &Difference<S>)>>>()?;
    scored.sort_by(|(sa, da), (sb, db)| {
        sb.partial_cmp(sa)
            .expect("impact scores are finite")
            .then(da.seq.cmp(&db.seq))
    });
    Ok(scored
        .into_iter()
        .take(n)
        .map(|(_, d)| d.clone())
        .collect())
}

/// Mean pairwise difference magnitude over the sub-objects of a partitioned
/// object: `V = (1/(m(m−1))) · Σ_{i≠j} ‖z_i − z_j‖`. Zero exactly when all
/// sub-objects share one feature vector.
pub fn spatial_variability<S: Real>(subs: &[StateRecord<S>], norm: Norm) -> Result<S> {
    if subs.len() < 2 {
        return Err(Error::TooFewSubObjects { got: subs.len() });
    }
    for sub in subs {
        if !sub.is_spatial() {
            return Err(Error::MixedLocation);
        }
    }
    let mut total = S::zero();
    for (i, zi) in subs.iter().enumerate() {
        for (j, zj) in subs.iter().enumerate() {
            if i == j {
                continue;
            }
            let delta = zi.features().sub(zj.features())?;
            total = total + norm.magnitude(delta.values());
        }
    }
    let m = S::from_usize(subs.len()).expect("sub-object count representable");
    Ok(total / (m * (m - S::one())))
}

/// Stateful difference-detection context: owns the norm choice and the
/// monotone `seq` counter that stamps detection order onto differences.
///
/// One session per logical thread of control; the operations themselves
/// have no other state.
#[derive(Clone, Debug)]
pub struct DiffSession<S: Real> {
    norm: Norm,
    next_seq: u64,
    _marker: std::marker::PhantomData<S>,
}

impl<S: Real> DiffSession<S> {
    pub fn new(norm: Norm) -> Self {
        DiffSession {
            norm,
            next_seq: 0,
            _marker: std::marker::PhantomData,
        }
    }

    pub fn norm(&self) -> Norm {
        self.norm
    }

    fn next_seq(&mut self) -> u64 {
        let seq = self.next_seq;
        self.next_seq += 1;
        seq
    }

    /// The symmetric difference operation: `delta = features(x_i) −
    /// features(x_j)` (first minus second). The kind is inferred from how
    /// the states are located: both in time → temporal, otherwise both in
    /// space → spatial.
    pub fn compute_difference(
        &mut self,
        x_i: &StateRecord<S>,
        x_j: &StateRecord<S>,
    ) -> Result<Difference<S>> {
        let kind = if x_i.is_temporal() && x_j.is_temporal() {
            DiffKind::Temporal
        } else if x_i.is_spatial() && x_j.is_spatial() {
            DiffKind::Spatial
        } else {
            return Err(Error::MixedLocation);
        };
        let delta = x_i.features().sub(x_j.features())?;
        let seq = self.next_seq();
        Ok(Difference::new(
            x_i.id(),
            x_j.id(),
            kind,
            self.norm,
            seq,
            delta,
        ))
    }

    /// The direction-of-time difference: `delta = features(later) −
    /// features(earlier)`, requiring strictly increasing timestamps.
    /// Exactly the negation of [`Self::compute_difference`] on the same
    /// pair.
    pub fn temporal_delta(
        &mut self,
        earlier: &StateRecord<S>,
        later: &StateRecord<S>,
    ) -> Result<Difference<S>> {
        let (t_earlier, t_later) = match (earlier.timestamp(), later.timestamp()) {
            (Some(a), Some(b)) => (a, b),
            _ => return Err(Error::MixedLocation),
        };
        if t_later <= t_earlier {
            return Err(Error::NotOrdered {
                earlier: t_earlier,
                later: t_later,
            });
        }
        let delta = later.features().sub(earlier.features())?;
        let seq = self.next_seq();
        Ok(Difference::new(
            earlier.id(),
            later.id(),
            DiffKind::Temporal,
            self.norm,
            seq,
            delta,
        ))
    }

    /// The most recent change in a time-ordered stream: the temporal delta
    /// over its last two states. The whole stream must be strictly
    /// increasing in time.
    pub fn latest_difference(&mut self, stream: &[StateRecord<S>]) -> Result<Difference<S>> {
        if stream.len() < 2 {
            return Err(Error::InsufficientHistory {
                needed: 2,
                got: stream.len(),
            });
        }
        for pair in stream.windows(2) {
            let (a, b) = match (pair[0].timestamp(), pair[1].timestamp()) {
                (Some(a), Some(b)) => (a, b),
                _ => return Err(Error::MixedLocation),
            };
            if b <= a {
                return Err(Error::NotOrdered {
                    earlier: a,
                    later: b,
                });
            }
        }
        self.temporal_delta(&stream[stream.len() - 2], &stream[stream.len() - 1])
    }

    /// All ordered pairwise differences `z_i − z_j`, `i ≠ j`, over the
    /// sub-objects of one partitioned object — `m(m−1)` results in
    /// row-major pair order.
    pub fn pairwise_spatial_differences(
        &mut self,
        subs: &[StateRecord<S>],
    ) -> Result<Vec<Difference<S>>> {
        if subs.len() < 2 {
            return Err(Error::TooFewSubObjects { got: subs.len() });
        }
        for sub in subs {
            if !sub.is_spatial() {
                return Err(Error::MixedLocation);
            }
        }
        let mut out = Vec::with_capacity(subs.len() * (subs.len() - 1));
        for (i, zi) in subs.iter().enumerate() {
            for (j, zj) in subs.iter().enumerate() {
                if i == j {
                    continue;
                }
                let delta = zi.features().sub(zj.features())?;
                let seq = self.next_seq();
                out.push(Difference::new(
                    zi.id(),
                    zj.id(),
                    DiffKind::Spatial,
                    self.norm,
                    seq,
                    delta,
                ));
            }
        }
        Ok(out)
    }

    /// Stamps an externally computed delta with this session's norm and the
    /// next `seq`. Used by the fusion and history modules, which derive
    /// their deltas from vectors rather than plain state pairs.
    pub(crate) fn stamp(
        &mut self,
        from_id: &str,
        to_id: &str,
        kind: DiffKind,
        delta: FeatureVector<S>,
    ) -> Difference<S> {
        let seq = self.next_seq();
        Difference::new(from_id, to_id, kind, self.norm, seq, delta)
    }
}
