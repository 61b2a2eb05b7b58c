//! Property tests over the difference algebra, selection, variability,
//! fusion, statistics, and serialization layers. Each oracle here is an
//! independent re-derivation (double sums, exhaustive subset enumeration,
//! direct formulas), never a call back into the code under test.

use std::collections::BTreeMap;

use diffguide_core::diff::{
    impact, select_main_differences, spatial_variability, DiffSession, Difference, Norm,
    WeightProfile,
};
use diffguide_core::eval::{EmbeddingProvider, HashEmbedding};
use diffguide_core::feature::{Dim, EvidenceRecord, EvidenceSource, FeatureVector, StateRecord};
use diffguide_core::fusion::{external_difference, fuse, internal_difference};
use diffguide_core::stats::{cosine_similarity, welch_t_test};
use proptest::prelude::*;

const DIM_POOL: [&str; 8] = ["a", "b", "c", "d", "e", "f", "g", "h"];

fn finite_value() -> impl Strategy<Value = f64> {
    prop_oneof![
        -100.0..100.0f64,
        Just(0.0),
        -1e6..1e6f64,
    ]
}

/// A feature vector over the first `width` pool dimensions, so any two
/// vectors of equal width are compatible.
fn vector(width: usize) -> impl Strategy<Value = FeatureVector<f64>> {
    prop::collection::vec(finite_value(), width).prop_map(move |values| {
        FeatureVector::new(
            values
                .into_iter()
                .enumerate()
                .map(|(i, v)| Dim::new(DIM_POOL[i], v))
                .collect(),
        )
        .expect("pool dims are unique and finite")
    })
}

fn temporal_state(id: &str, t: i64, dims: FeatureVector<f64>) -> StateRecord<f64> {
    StateRecord::temporal(id, t, "identity", None, dims)
}

fn spatial_state(id: &str, region: &str, dims: FeatureVector<f64>) -> StateRecord<f64> {
    StateRecord::spatial(id, region, "identity", None, dims)
}

proptest! {
    /// Δ(x, x) = 0 and the magnitude is zero exactly for the zero delta.
    #[test]
    fn difference_zero_law(width in 1usize..=8, dims in (1usize..=8).prop_flat_map(vector)) {
        prop_assume!(dims.len() <= width || width <= dims.len()); // widths already tied below
        let x = temporal_state("x", 0, dims.clone());
        let mut session = DiffSession::new(Norm::L2);
        let d = session.compute_difference(&x, &x).unwrap();
        prop_assert!(d.is_zero());
        prop_assert_eq!(d.magnitude, 0.0);
        prop_assert!(d.delta.values().all(|v| v == 0.0));
    }

    /// Δ(x_i, x_j) = −Δ(x_j, x_i) componentwise, with equal magnitudes.
    #[test]
    fn difference_antisymmetry(
        width in 1usize..=8,
        seed in proptest::collection::vec((finite_value(), finite_value()), 1..=8),
    ) {
        let n = width.min(seed.len());
        let (va, vb): (Vec<f64>, Vec<f64>) = seed[..n].iter().copied().unzip();
        let fa = FeatureVector::new(
            va.iter().enumerate().map(|(i, &v)| Dim::new(DIM_POOL[i], v)).collect()
        ).unwrap();
        let fb = FeatureVector::new(
            vb.iter().enumerate().map(|(i, &v)| Dim::new(DIM_POOL[i], v)).collect()
        ).unwrap();
        let xi = temporal_state("xi", 0, fa);
        let xj = temporal_state("xj", 1, fb);

        let mut session = DiffSession::new(Norm::L2);
        let forward = session.compute_difference(&xi, &xj).unwrap();
        let backward = session.compute_difference(&xj, &xi).unwrap();
        for (f, b) in forward.delta.dims().iter().zip(backward.delta.dims()) {
            prop_assert_eq!(f.value, -b.value);
        }
        prop_assert_eq!(forward.magnitude, backward.magnitude);

        // Temporal delta is the same subtraction with a fixed direction:
        // later minus earlier, i.e. −Δ(earlier, later).
        let temporal = session.temporal_delta(&xi, &xj).unwrap();
        for (t, f) in temporal.delta.dims().iter().zip(forward.delta.dims()) {
            prop_assert_eq!(t.value, -f.value);
        }
    }

    /// Top-n selection matches exhaustive subset enumeration, including
    /// ties broken by the stable seq rule.
    #[test]
    fn top_n_matches_enumeration(
        deltas in prop::collection::vec(
            prop::collection::vec(prop_oneof![-5.0..5.0f64, Just(1.0), Just(-1.0)], 1..=3),
            1..=6,
        ),
        n in 0usize..=7,
    ) {
        let mut session = DiffSession::new(Norm::L2);
        let diffs: Vec<Difference<f64>> = deltas
            .iter()
            .enumerate()
            .map(|(i, values)| {
                let from = temporal_state(
                    &format!("s{i}"),
                    i as i64,
                    FeatureVector::new(
                        values.iter().enumerate().map(|(k, &v)| Dim::new(DIM_POOL[k], v)).collect()
                    ).unwrap(),
                );
                let zero = FeatureVector::new(
                    values.iter().enumerate().map(|(k, _)| Dim::new(DIM_POOL[k], 0.0)).collect()
                ).unwrap();
                let to = temporal_state(&format!("s{i}b"), i as i64 + 1000, zero);
                session.compute_difference(&from, &to).unwrap()
            })
            .collect();
        let weights = WeightProfile::unit();

        let selected = select_main_differences(&diffs, n, &weights).unwrap();

        // Oracle: enumerate every size-k subset, maximize total impact,
        // break exact ties toward lexicographically smallest seq set.
        let k = n.min(diffs.len());
        let scores: Vec<f64> = diffs.iter().map(|d| impact(d, &weights).unwrap().score).collect();
        let mut best: Option<(f64, Vec<u64>)> = None;
        let indices: Vec<usize> = (0..diffs.len()).collect();
        let mut combo = Vec::new();
        fn enumerate(
            rest: &[usize],
            k: usize,
            combo: &mut Vec<usize>,
            scores: &[f64],
            diffs: &[Difference<f64>],
            best: &mut Option<(f64, Vec<u64>)>,
        ) {
            if combo.len() == k {
                let total: f64 = combo.iter().map(|&i| scores[i]).sum();
                let seqs: Vec<u64> = combo.iter().map(|&i| diffs[i].seq).collect();
                let better = match best {
                    None => true,
                    Some((bt, bseqs)) => total > *bt + 1e-9
                        || ((total - *bt).abs() <= 1e-9 && seqs < *bseqs),
                };
                if better {
                    *best = Some((total, seqs));
                }
                return;
            }
            if rest.len() < k - combo.len() {
                return;
            }
            combo.push(rest[0]);
            enumerate(&rest[1..], k, combo, scores, diffs, best);
            combo.pop();
            enumerate(&rest[1..], k, combo, scores, diffs, best);
        }
        enumerate(&indices, k, &mut combo, &scores, &diffs, &mut best);

        let selected_total: f64 = selected
            .iter()
            .map(|d| impact(d, &weights).unwrap().score)
            .sum();
        let (best_total, _) = best.unwrap();
        prop_assert_eq!(selected.len(), k);
        prop_assert!((selected_total - best_total).abs() <= 1e-9,
            "selected {} vs enumerated optimum {}", selected_total, best_total);

        // Descending score, ties by ascending seq.
        for pair in selected.windows(2) {
            let sa = impact(&pair[0], &weights).unwrap().score;
            let sb = impact(&pair[1], &weights).unwrap().score;
            prop_assert!(sa > sb || (sa == sb && pair[0].seq < pair[1].seq));
        }
    }

    /// Variability equals the direct double sum, for every norm.
    #[test]
    fn variability_matches_double_sum(
        rows in prop::collection::vec(
            prop::collection::vec(-50.0..50.0f64, 1..=4),
            2..=6,
        ),
        norm_pick in 0usize..3,
    ) {
        let width = rows.iter().map(Vec::len).min().unwrap();
        let norm = [Norm::L1, Norm::L2, Norm::Linf][norm_pick];
        let subs: Vec<StateRecord<f64>> = rows
            .iter()
            .enumerate()
            .map(|(i, row)| {
                spatial_state(
                    &format!("sub{i}"),
                    &format!("region {i}"),
                    FeatureVector::new(
                        row[..width].iter().enumerate().map(|(k, &v)| Dim::new(DIM_POOL[k], v)).collect()
                    ).unwrap(),
                )
            })
            .collect();

        let got = spatial_variability(&subs, norm).unwrap();

        let m = subs.len();
        let mut total = 0.0;
        for i in 0..m {
            for j in 0..m {
                if i == j { continue; }
                let deltas: Vec<f64> = subs[i].features().values()
                    .zip(subs[j].features().values())
                    .map(|(a, b)| a - b)
                    .collect();
                total += match norm {
                    Norm::L1 => deltas.iter().map(|v| v.abs()).sum(),
                    Norm::L2 => deltas.iter().map(|v| v * v).sum::<f64>().sqrt(),
                    Norm::Linf => deltas.iter().fold(0.0f64, |acc, v| acc.max(v.abs())),
                };
            }
        }
        let expected = total / (m * (m - 1)) as f64;
        prop_assert!((got - expected).abs() <= 1e-12 * expected.max(1.0));
    }

    /// Cosine similarity is bounded, symmetric, and scale-invariant.
    #[test]
    fn cosine_properties(
        pairs in prop::collection::vec((-1e3..1e3f64, -1e3..1e3f64), 1..=16),
        scale in 0.001..1000.0f64,
    ) {
        let (a, b): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        prop_assume!(a.iter().any(|&v| v != 0.0) && b.iter().any(|&v| v != 0.0));
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
        prop_assert!((ab - ba).abs() <= 1e-12);

        let scaled: Vec<f64> = a.iter().map(|v| v * scale).collect();
        let self_sim = cosine_similarity(&a, &scaled).unwrap();
        prop_assert!((self_sim - 1.0).abs() <= 1e-9);
    }

    /// Swapping Welch's samples negates t and preserves dof and p.
    #[test]
    fn welch_antisymmetry(
        a in prop::collection::vec(-10.0..10.0f64, 2..=12),
        b in prop::collection::vec(-10.0..10.0f64, 2..=12),
    ) {
        let spread = |s: &[f64]| s.iter().any(|&v| (v - s[0]).abs() > 1e-9);
        prop_assume!(spread(&a) || spread(&b));
        let ab = welch_t_test(&a, &b, 0.05).unwrap();
        let ba = welch_t_test(&b, &a, 0.05).unwrap();
        prop_assert!((ab.t + ba.t).abs() <= 1e-9 * (1.0 + ab.t.abs()));
        prop_assert!((ab.dof - ba.dof).abs() <= 1e-9 * (1.0 + ab.dof));
        prop_assert!((ab.p - ba.p).abs() <= 1e-9);
        prop_assert_eq!(ab.reject, ba.reject);
    }

    /// Fusion output is ordered base-then-evidence regardless of value
    /// content, and the external difference restricted to base dimensions
    /// equals the internal difference exactly.
    #[test]
    fn fusion_projection_consistency(
        base_prev in (1usize..=4).prop_flat_map(vector),
        base_step in prop::collection::vec(-10.0..10.0f64, 1..=4),
        evidence_prev in prop::collection::vec(-10.0..10.0f64, 0..=3),
        evidence_step in prop::collection::vec(-10.0..10.0f64, 0..=3),
    ) {
        let width = base_prev.len().min(base_step.len());
        let prev_dims = FeatureVector::new(
            base_prev.dims()[..width].to_vec()
        ).unwrap();
        let curr_dims = FeatureVector::new(
            prev_dims.dims().iter().zip(&base_step)
                .map(|(d, &s)| Dim::new(&d.name, d.value + s))
                .collect()
        ).unwrap();
        let prev = temporal_state("prev", 0, prev_dims);
        let curr = temporal_state("curr", 1, curr_dims);

        let ewidth = evidence_prev.len().min(evidence_step.len());
        let mk_evidence = |values: &[f64]| -> Vec<EvidenceRecord<f64>> {
            if values.is_empty() { return Vec::new(); }
            vec![EvidenceRecord {
                source: EvidenceSource::Sensor,
                timestamp: 0,
                dims: FeatureVector::new(
                    values.iter().enumerate()
                        .map(|(i, &v)| Dim::new(format!("x{i}"), v)).collect()
                ).unwrap(),
            }]
        };
        let mut prev_ev = mk_evidence(&evidence_prev[..ewidth]);
        let mut curr_ev = mk_evidence(
            &evidence_prev[..ewidth].iter().zip(&evidence_step[..ewidth])
                .map(|(a, b)| a + b).collect::<Vec<f64>>()
        );
        for ev in prev_ev.iter_mut() { ev.timestamp = 0; }
        for ev in curr_ev.iter_mut() { ev.timestamp = 1; }

        let mut session = DiffSession::new(Norm::L2);
        let internal = internal_difference(&curr, &prev, &mut session).unwrap();
        let external = external_difference(&curr, &curr_ev, &prev, &prev_ev, &mut session).unwrap();

        // Base projection: the first `width` dims of the external delta are
        // exactly the internal delta.
        let base_names: Vec<&str> = internal.delta.dims().iter().map(|d| d.name.as_str()).collect();
        for (name, int_dim) in base_names.iter().zip(internal.delta.dims()) {
            let ext_dim = external.delta.get(name).expect("base dim present in external");
            prop_assert_eq!(ext_dim.value, int_dim.value);
        }
        // And the fused norm dominates the projected norm.
        let proj_sq: f64 = internal.delta.values().map(|v| v * v).sum();
        let ext_sq: f64 = external.delta.values().map(|v| v * v).sum();
        prop_assert!(ext_sq + 1e-12 >= proj_sq);

        // Fused layout: base dims first, in order, then prefixed evidence.
        let fused = fuse(&curr, &curr_ev).unwrap();
        let names: Vec<&str> = fused.fused.dims().iter().map(|d| d.name.as_str()).collect();
        prop_assert_eq!(&names[..width], &base_names[..]);
        for name in &names[width..] {
            prop_assert!(name.starts_with("sensor."));
        }
    }

    /// Canonical JSON round-trips preserve every record exactly.
    #[test]
    fn serialization_round_trips(
        dims in (1usize..=8).prop_flat_map(vector),
        t in -1_000_000i64..1_000_000,
        raw in prop::collection::vec(any::<u8>(), 0..=32),
    ) {
        let state = StateRecord::temporal(
            "s0", t, "identity",
            Some(diffguide_core::feature::RawRef::Inline(raw)),
            dims,
        );
        let json = serde_json::to_string(&state).unwrap();
        let back: StateRecord<f64> = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &state);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), json);

        let mut session = DiffSession::new(Norm::Linf);
        let other = StateRecord::temporal("s1", t + 1, "identity", None, state.features().clone());
        let diff = session.temporal_delta(&state, &other).unwrap();
        let json = serde_json::to_string(&diff).unwrap();
        let back: Difference<f64> = serde_json::from_str(&json).unwrap();
        prop_assert_eq!(&back, &diff);
        prop_assert_eq!(serde_json::to_string(&back).unwrap(), json);
    }

    /// The hash embedding is deterministic and insensitive to token order
    /// counts only through the bag it builds.
    #[test]
    fn hash_embedding_determinism(words in prop::collection::vec("[a-z]{1,8}", 0..=20)) {
        let provider = HashEmbedding::default();
        let text = words.join(" ");
        let a: Vec<f64> = provider.embed(&text).unwrap();
        let b: Vec<f64> = provider.embed(&text).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn weighted_impact_matches_hand_sum() {
    let mut session = DiffSession::new(Norm::L2);
    let from = StateRecord::temporal(
        "a",
        0,
        "identity",
        None,
        FeatureVector::new(vec![Dim::new("a", 3.0f64), Dim::new("b", -4.0)]).unwrap(),
    );
    let to = StateRecord::temporal(
        "b",
        1,
        "identity",
        None,
        FeatureVector::new(vec![Dim::new("a", 0.0f64), Dim::new("b", 0.0)]).unwrap(),
    );
    let d = session.compute_difference(&from, &to).unwrap();
    let weights = WeightProfile::new(
        "w",
        BTreeMap::from([("a".to_string(), 2.0f64), ("b".to_string(), 0.5)]),
    )
    .unwrap();
    let score = impact(&d, &weights).unwrap().score;
    assert_eq!(score, 2.0 * 3.0 + 0.5 * 4.0);
}
