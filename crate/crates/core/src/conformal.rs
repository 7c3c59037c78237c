//! Nonconformity scores, calibration pools, conformal p-values and quantiles,
//! cross-layer stability, and the fusion-weight computation.
//!
//! The nonconformity of an aligned feature is its distance to a feature
//! impression, `nc = ‖h − w*‖`. Calibration scores use the ground-truth
//! class's impression; online scores use the nearest (top-1) impression.
//! Against a calibration pool, the p-value of an online score is the fraction
//! of pool scores at least as large — high means typical, hence certain.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::FeatureImpressionSet;
use crate::numerics::{NumericsError, Vector};

#[derive(Debug, Error)]
pub enum ConformalError {
    #[error("calibration pool is empty")]
    EmptyPool,
    #[error("significance level {alpha} infeasible for pool size {pool_size}: needs alpha >= {min_alpha}")]
    InfeasibleAlpha {
        alpha: f64,
        pool_size: usize,
        min_alpha: f64,
    },
    #[error("nonconformity score must be finite and non-negative, got {value}")]
    InvalidScore { value: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Sorted pool of calibration nonconformity scores for one decoder layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NcPool {
    layer: usize,
    scores: Vec<f64>,
}

impl NcPool {
    /// Sorts and validates the scores (finite, non-negative, non-empty).
    pub fn from_scores(mut scores: Vec<f64>, layer: usize) -> Result<Self, ConformalError> {
        if scores.is_empty() {
            return Err(ConformalError::EmptyPool);
        }
        for &s in &scores {
            if !s.is_finite() || s < 0.0 {
                return Err(ConformalError::InvalidScore { value: s });
            }
        }
        scores.sort_by(|a, b| a.partial_cmp(b).expect("finite scores"));
        Ok(Self { layer, scores })
    }

    pub fn layer(&self) -> usize {
        self.layer
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }

    /// Ascending scores.
    pub fn scores(&self) -> &[f64] {
        &self.scores
    }

    /// Fraction of pool scores at least as large as `nc`:
    /// `|{x : x >= nc}| / n`. Monotone non-increasing in `nc`.
    pub fn p_value(&self, nc: f64) -> f64 {
        let below = self.scores.partition_point(|&x| x < nc);
        (self.scores.len() - below) as f64 / self.scores.len() as f64
    }

    /// Smoothed variant `(|{x : x >= nc}| + 1) / (n + 1)`, which carries the
    /// finite-sample super-uniformity guarantee exactly.
    pub fn p_value_smoothed(&self, nc: f64) -> f64 {
        let below = self.scores.partition_point(|&x| x < nc);
        (self.scores.len() - below + 1) as f64 / (self.scores.len() + 1) as f64
    }

    /// The `⌈(n+1)(1−alpha)⌉`-th smallest score (the split-conformal
    /// calibration quantile). Errors when the rank exceeds the pool size,
    /// i.e. when `alpha < 1/(n+1)`.
    pub fn quantile(&self, alpha: f64) -> Result<f64, ConformalError> {
        let n = self.scores.len();
        if !(0.0..1.0).contains(&alpha) || alpha <= 0.0 {
            return Err(ConformalError::InfeasibleAlpha {
                alpha,
                pool_size: n,
                min_alpha: 1.0 / (n as f64 + 1.0),
            });
        }
        let rank = ((n as f64 + 1.0) * (1.0 - alpha)).ceil() as usize;
        if rank > n {
            return Err(ConformalError::InfeasibleAlpha {
                alpha,
                pool_size: n,
                min_alpha: 1.0 / (n as f64 + 1.0),
            });
        }
        Ok(self.scores[rank - 1])
    }
}

/// A nonconformity score together with the impression that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NcScore {
    pub score: f64,
    pub fi_index: usize,
}

/// Which impression the score is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NcTarget {
    /// Ground-truth class (calibration-time usage).
    Class(usize),
    /// Nearest impression, lowest index on ties (online usage).
    Nearest,
}

/// `‖aligned − w*_target‖`. For [`NcTarget::Nearest`] the index is the argmin
/// over all impressions with a deterministic lowest-index tie-break.
pub fn nc_score(
    aligned: &[f64],
    fis: &FeatureImpressionSet,
    target: NcTarget,
) -> Result<NcScore, ConformalError> {
    if aligned.len() != fis.dim() {
        return Err(ConformalError::Numerics(NumericsError::DimensionMismatch {
            context: "aligned feature vs impression",
            expected: fis.dim(),
            found: aligned.len(),
        }));
    }
    match target {
        NcTarget::Class(c) => {
            let score = crate::numerics::dist(aligned, fis.node(c).as_slice());
            Ok(NcScore { score, fi_index: c })
        }
        NcTarget::Nearest => {
            let mut best = NcScore {
                score: f64::INFINITY,
                fi_index: 0,
            };
            for (c, node) in fis.nodes().iter().enumerate() {
                let d = crate::numerics::dist(aligned, node.as_slice());
                if d < best.score {
                    best = NcScore {
                        score: d,
                        fi_index: c,
                    };
                }
            }
            Ok(best)
        }
    }
}

/// Builds the calibration pool for one layer from labeled aligned features,
/// scoring each sample against its ground-truth class's impression.
pub fn build_nc_pool(
    samples: &[(Vector, usize)],
    fis: &FeatureImpressionSet,
    layer: usize,
) -> Result<NcPool, ConformalError> {
    if samples.is_empty() {
        return Err(ConformalError::EmptyPool);
    }
    let mut scores = Vec::with_capacity(samples.len());
    for (aligned, class) in samples {
        let nc = nc_score(aligned.as_slice(), fis, NcTarget::Class(*class))?;
        scores.push(nc.score);
    }
    NcPool::from_scores(scores, layer)
}

/// Per-layer top-1 impression index and score for one query and modality.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerTrace {
    entries: Vec<NcScore>,
}

impl LayerTrace {
    pub fn new(entries: Vec<NcScore>) -> Self {
        assert!(!entries.is_empty(), "layer trace needs at least one layer");
        Self { entries }
    }

    pub fn num_layers(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[NcScore] {
        &self.entries
    }

    /// Top-1 score at the final layer.
    pub fn final_layer(&self) -> NcScore {
        *self.entries.last().expect("non-empty")
    }
}

/// Fraction of adjacent layers whose top-1 impression did not change:
/// `S = 1 − transitions/(L−1)`, and `S = 1` for a single layer.
pub fn stability_score(trace: &LayerTrace) -> f64 {
    let l = trace.num_layers();
    if l == 1 {
        return 1.0;
    }
    let transitions = trace
        .entries
        .windows(2)
        .filter(|w| w[0].fi_index != w[1].fi_index)
        .count();
    1.0 - transitions as f64 / (l as f64 - 1.0)
}

/// Which weight the clipping threshold monitors.
///
/// The default watches modality A only, reverting a query to static fusion
/// when `W_A` exceeds the threshold; that is where meaningless queries pile
/// up. [`ClipPolicy::MaxWeight`] monitors both sides symmetrically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipPolicy {
    ModalityA,
    MaxWeight,
}

/// Intermediate and final weights for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightDecision {
    pub q_a: f64,
    pub q_b: f64,
    pub w_a: f64,
    pub w_b: f64,
    /// The monitored weight exceeded the clip threshold; weights reverted to
    /// the static (0.5, 0.5).
    pub clipped: bool,
    /// A degenerate denominator (both p-values zero, or both Q·S products
    /// zero) forced the equal split.
    pub degenerate: bool,
}

/// Convex pair of per-modality weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_a: f64,
    pub w_b: f64,
}

impl WeightDecision {
    pub fn weights(&self) -> FusionWeights {
        FusionWeights {
            w_a: self.w_a,
            w_b: self.w_b,
        }
    }
}

pub const DEFAULT_CLIP_THRESHOLD: f64 = 0.7;

/// Combines p-values and stability scores into fusion weights:
/// `Q_m = P_m/(P_A+P_B)`, `W_m = Q_m S_m/(Q_A S_A + Q_B S_B)`, then clips the
/// monitored weight above `clip_threshold` back to the static (0.5, 0.5).
/// Degenerate denominators fall back to the equal split with a flag.
pub fn fusion_weights(
    p_a: f64,
    p_b: f64,
    s_a: f64,
    s_b: f64,
    clip_threshold: f64,
) -> WeightDecision {
    fusion_weights_with_policy(p_a, p_b, s_a, s_b, clip_threshold, ClipPolicy::ModalityA)
}

pub fn fusion_weights_with_policy(
    p_a: f64,
    p_b: f64,
    s_a: f64,
    s_b: f64,
    clip_threshold: f64,
    policy: ClipPolicy,
) -> WeightDecision {
    debug_assert!((0.0..=1.0).contains(&p_a) && (0.0..=1.0).contains(&p_b));
    debug_assert!((0.0..=1.0).contains(&s_a) && (0.0..=1.0).contains(&s_b));
    let equal = |clipped: bool, degenerate: bool| WeightDecision {
        q_a: 0.5,
        q_b: 0.5,
        w_a: 0.5,
        w_b: 0.5,
        clipped,
        degenerate,
    };
    let p_sum = p_a + p_b;
    if p_sum <= 0.0 {
        return equal(false, true);
    }
    let q_a = p_a / p_sum;
    let q_b = p_b / p_sum;
    let qs_sum = q_a * s_a + q_b * s_b;
    if qs_sum <= 0.0 {
        return WeightDecision {
            q_a,
            q_b,
            ..equal(false, true)
        };
    }
    let w_a = q_a * s_a / qs_sum;
    let w_b = q_b * s_b / qs_sum;
    let monitored = match policy {
        ClipPolicy::ModalityA => w_a,
        ClipPolicy::MaxWeight => w_a.max(w_b),
    };
    if monitored > clip_threshold {
        return WeightDecision {
            q_a,
            q_b,
            ..equal(true, false)
        };
    }
    WeightDecision {
        q_a,
        q_b,
        w_a,
        w_b,
        clipped: false,
        degenerate: false,
    }
}

/// Linear combination `2·(w_a·f_a + w_b·f_b)`; at (0.5, 0.5) this reproduces
/// the static element-wise sum `f_a + f_b` bit-exactly.
pub fn fuse_features(
    f_a: &[f64],
    f_b: &[f64],
    w: &FusionWeights,
) -> Result<Vector, ConformalError> {
    if f_a.len() != f_b.len() {
        return Err(ConformalError::Numerics(NumericsError::DimensionMismatch {
            context: "fuse features",
            expected: f_a.len(),
            found: f_b.len(),
        }));
    }
    let fused: Vec<f64> = f_a
        .iter()
        .zip(f_b)
        .map(|(&a, &b)| 2.0 * (w.w_a * a + w.w_b * b))
        .collect();
    Ok(Vector::from(fused))
}

/// Per-modality uncertainty record for one query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModalityUncertainty {
    /// Final-layer top-1 nonconformity score.
    pub nc: f64,
    /// Conformal p-value of that score.
    pub p: f64,
    /// Relative typicalness `P_m / (P_A + P_B)`.
    pub q: f64,
    /// Cross-layer stability.
    pub s: f64,
    /// Final fusion weight.
    pub w: f64,
}

/// Full uncertainty record for one query: both modalities plus flags.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryUncertainty {
    pub modality_a: ModalityUncertainty,
    pub modality_b: ModalityUncertainty,
    pub clipped: bool,
    pub degenerate: bool,
}

impl QueryUncertainty {
    /// Assembles the record from per-modality scores, p-values, stability
    /// scores, and the weight decision.
    pub fn new(
        nc_a: f64,
        nc_b: f64,
        p_a: f64,
        p_b: f64,
        s_a: f64,
        s_b: f64,
        decision: WeightDecision,
    ) -> Self {
        Self {
            modality_a: ModalityUncertainty {
                nc: nc_a,
                p: p_a,
                q: decision.q_a,
                s: s_a,
                w: decision.w_a,
            },
            modality_b: ModalityUncertainty {
                nc: nc_b,
                p: p_b,
                q: decision.q_b,
                s: s_b,
                w: decision.w_b,
            },
            clipped: decision.clipped,
            degenerate: decision.degenerate,
        }
    }

    pub fn weights(&self) -> FusionWeights {
        FusionWeights {
            w_a: self.modality_a.w,
            w_b: self.modality_b.w,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;
    use proptest::prelude::*;
    use rand::Rng;

    fn fis(nodes: Vec<Vec<f64>>) -> FeatureImpressionSet {
        FeatureImpressionSet::new(nodes.into_iter().map(Vector::from).collect()).unwrap()
    }

    #[test]
    fn nc_score_zero_at_exact_node() {
        let f = fis(vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![5.0, 5.0], vec![3.0, -3.0]]);
        let s = nc_score(&[3.0, -3.0], &f, NcTarget::Nearest).unwrap();
        assert_eq!(s.score, 0.0);
        assert_eq!(s.fi_index, 3);
    }

    #[test]
    fn nc_score_picks_nearer_node() {
        let f = fis(vec![vec![0.0], vec![10.0]]);
        let s = nc_score(&[4.0], &f, NcTarget::Nearest).unwrap();
        assert_eq!(s.score, 4.0);
        assert_eq!(s.fi_index, 0);
    }

    #[test]
    fn nc_score_matches_exhaustive_search() {
        let mut rng = stream_rng(3, "nc-exhaustive");
        let nodes: Vec<Vec<f64>> = (0..8)
            .map(|_| (0..5).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let f = fis(nodes.clone());
        for _ in 0..50 {
            let x: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let s = nc_score(&x, &f, NcTarget::Nearest).unwrap();
            let brute = nodes
                .iter()
                .map(|n| crate::numerics::dist(&x, n))
                .fold(f64::INFINITY, f64::min);
            assert_eq!(s.score, brute);
        }
    }

    #[test]
    fn nc_score_tie_breaks_to_lowest_index() {
        let f = fis(vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        let s = nc_score(&[0.0, 0.0], &f, NcTarget::Nearest).unwrap();
        assert_eq!(s.fi_index, 0);
    }

    #[test]
    fn pool_from_exact_positions_is_zero() {
        let f = fis(vec![vec![0.0, 1.0], vec![2.0, 0.0]]);
        let samples = vec![
            (Vector::from(vec![0.0, 1.0]), 0),
            (Vector::from(vec![2.0, 0.0]), 1),
            (Vector::from(vec![0.0, 1.0]), 0),
        ];
        let pool = build_nc_pool(&samples, &f, 0).unwrap();
        assert_eq!(pool.scores(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn pool_sorts_scores() {
        let f = fis(vec![vec![0.0]]);
        let samples = vec![
            (Vector::from(vec![1.0]), 0),
            (Vector::from(vec![3.0]), 0),
            (Vector::from(vec![2.0]), 0),
        ];
        let pool = build_nc_pool(&samples, &f, 2).unwrap();
        assert_eq!(pool.scores(), &[1.0, 2.0, 3.0]);
        assert_eq!(pool.layer(), 2);
    }

    #[test]
    fn pool_matches_per_sample_recomputation() {
        let mut rng = stream_rng(7, "pool-recompute");
        let nodes: Vec<Vec<f64>> = (0..4)
            .map(|_| (0..3).map(|_| rng.random_range(-2.0..2.0)).collect())
            .collect();
        let f = fis(nodes);
        let samples: Vec<(Vector, usize)> = (0..100)
            .map(|_| {
                let class = rng.random_range(0..4);
                let x: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
                (Vector::from(x), class)
            })
            .collect();
        let pool = build_nc_pool(&samples, &f, 0).unwrap();
        let mut expected: Vec<f64> = samples
            .iter()
            .map(|(x, c)| {
                nc_score(x.as_slice(), &f, NcTarget::Class(*c))
                    .unwrap()
                    .score
            })
            .collect();
        expected.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(pool.scores(), expected.as_slice());
    }

    #[test]
    fn empty_calibration_set_is_rejected() {
        let f = fis(vec![vec![0.0]]);
        assert!(matches!(
            build_nc_pool(&[], &f, 0),
            Err(ConformalError::EmptyPool)
        ));
    }

    #[test]
    fn p_value_counts_at_least_as_large() {
        let pool = NcPool::from_scores(vec![1.0, 2.0, 3.0, 4.0], 0).unwrap();
        assert_eq!(pool.p_value(2.5), 0.5);
        assert_eq!(pool.p_value(0.0), 1.0);
        assert_eq!(pool.p_value(4.5), 0.0);
    }

    #[test]
    fn quantile_examples() {
        let pool = NcPool::from_scores((1..=9).map(f64::from).collect(), 0).unwrap();
        // rank = ceil(10 * 0.9) = 9 → 9th smallest = 9.
        assert_eq!(pool.quantile(0.1).unwrap(), 9.0);

        let single = NcPool::from_scores(vec![5.0], 0).unwrap();
        assert_eq!(single.quantile(0.5).unwrap(), 5.0);
    }

    #[test]
    fn quantile_infeasible_alpha() {
        let pool = NcPool::from_scores(vec![1.0, 2.0], 0).unwrap();
        let err = pool.quantile(0.01).unwrap_err();
        assert!(matches!(err, ConformalError::InfeasibleAlpha { .. }));
    }

    #[test]
    fn quantile_matches_sort_and_index_oracle() {
        let mut rng = stream_rng(11, "quantile-oracle");
        let scores: Vec<f64> = (0..500).map(|_| rng.random_range(0.0..1.0)).collect();
        let pool = NcPool::from_scores(scores.clone(), 0).unwrap();
        let mut sorted = scores;
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for alpha in [0.05, 0.1, 0.25, 0.5] {
            let rank = (501.0_f64 * (1.0 - alpha)).ceil() as usize;
            assert_eq!(pool.quantile(alpha).unwrap(), sorted[rank - 1]);
        }
    }

    #[test]
    fn stability_reproduces_reported_sequences() {
        // Steady trace: six layers all on node 8.
        let steady = LayerTrace::new(
            [8, 8, 8, 8, 8, 8]
                .iter()
                .map(|&i| NcScore {
                    score: 0.1,
                    fi_index: i,
                })
                .collect(),
        );
        assert_eq!(stability_score(&steady), 1.0);

        // Fully unstable: every adjacent pair changes.
        let unstable = LayerTrace::new(
            [8, 2, 3, 1, 3, 1]
                .iter()
                .map(|&i| NcScore {
                    score: 1.0,
                    fi_index: i,
                })
                .collect(),
        );
        assert_eq!(stability_score(&unstable), 0.0);

        // Three transitions out of five: S = 0.4.
        let partial = LayerTrace::new(
            [8, 6, 8, 8, 8, 9]
                .iter()
                .map(|&i| NcScore {
                    score: 0.3,
                    fi_index: i,
                })
                .collect(),
        );
        assert!((stability_score(&partial) - 0.4).abs() < 1e-12);
    }

    #[test]
    fn single_layer_is_fully_stable() {
        let t = LayerTrace::new(vec![NcScore {
            score: 2.0,
            fi_index: 4,
        }]);
        assert_eq!(stability_score(&t), 1.0);
    }

    #[test]
    fn fusion_weight_examples() {
        // Q_A = 0.75 → W_A = 0.75 > 0.7 → clipped.
        let d = fusion_weights(0.6, 0.2, 1.0, 1.0, 0.7);
        assert!(d.clipped);
        assert_eq!((d.w_a, d.w_b), (0.5, 0.5));
        assert!((d.q_a - 0.75).abs() < 1e-12);

        // Stability pushes W_A to 0.75 → clipped.
        let d = fusion_weights(0.6, 0.4, 1.0, 0.5, 0.7);
        assert!(d.clipped);
        assert_eq!((d.w_a, d.w_b), (0.5, 0.5));

        // Symmetric: no clip.
        let d = fusion_weights(0.5, 0.5, 1.0, 1.0, 0.7);
        assert!(!d.clipped && !d.degenerate);
        assert_eq!((d.w_a, d.w_b), (0.5, 0.5));

        // Degenerate p-values: equal split with the flag.
        let d = fusion_weights(0.0, 0.0, 1.0, 1.0, 0.7);
        assert!(d.degenerate && !d.clipped);
        assert_eq!((d.w_a, d.w_b), (0.5, 0.5));
    }

    #[test]
    fn zero_stability_is_degenerate() {
        let d = fusion_weights(0.5, 0.5, 0.0, 0.0, 0.7);
        assert!(d.degenerate);
        assert_eq!((d.w_a, d.w_b), (0.5, 0.5));
    }

    #[test]
    fn max_policy_clips_either_side() {
        let a_heavy = fusion_weights_with_policy(0.9, 0.1, 1.0, 1.0, 0.7, ClipPolicy::MaxWeight);
        assert!(a_heavy.clipped);
        let b_heavy = fusion_weights_with_policy(0.1, 0.9, 1.0, 1.0, 0.7, ClipPolicy::MaxWeight);
        assert!(b_heavy.clipped);
        // The default policy leaves the B-heavy query alone.
        let b_heavy_default = fusion_weights(0.1, 0.9, 1.0, 1.0, 0.7);
        assert!(!b_heavy_default.clipped);
        assert!(b_heavy_default.w_b > 0.7);
    }

    #[test]
    fn fuse_feature_examples() {
        let e1 = [1.0, 0.0];
        let e2 = [0.0, 1.0];
        let sum = fuse_features(&e1, &e2, &FusionWeights { w_a: 0.5, w_b: 0.5 }).unwrap();
        assert_eq!(sum.as_slice(), &[1.0, 1.0]);

        let only_a = fuse_features(&e1, &e2, &FusionWeights { w_a: 1.0, w_b: 0.0 }).unwrap();
        assert_eq!(only_a.as_slice(), &[2.0, 0.0]);

        let mixed = fuse_features(&e1, &e2, &FusionWeights { w_a: 0.7, w_b: 0.3 }).unwrap();
        assert!((mixed[0] - 1.4).abs() < 1e-15);
        assert!((mixed[1] - 0.6).abs() < 1e-15);
    }

    #[test]
    fn static_weights_reproduce_elementwise_sum_bit_exactly() {
        let mut rng = stream_rng(13, "fuse-bit-exact");
        for _ in 0..200 {
            let a: Vec<f64> = (0..6).map(|_| rng.random_range(-1e3..1e3)).collect();
            let b: Vec<f64> = (0..6).map(|_| rng.random_range(-1e3..1e3)).collect();
            let fused = fuse_features(&a, &b, &FusionWeights { w_a: 0.5, w_b: 0.5 }).unwrap();
            for i in 0..6 {
                assert_eq!(fused[i].to_bits(), (a[i] + b[i]).to_bits());
            }
        }
    }

    proptest! {
        #[test]
        fn p_value_is_monotone(nc1 in 0.0..10.0f64, nc2 in 0.0..10.0f64, raw in proptest::collection::vec(0.0..10.0f64, 1..200)) {
            let pool = NcPool::from_scores(raw, 0).unwrap();
            let (lo, hi) = if nc1 <= nc2 { (nc1, nc2) } else { (nc2, nc1) };
            prop_assert!(pool.p_value(lo) >= pool.p_value(hi));
        }

        #[test]
        fn p_value_scale_invariant_power_of_two(raw in proptest::collection::vec(0.0..10.0f64, 1..100), nc in 0.0..10.0f64) {
            let pool = NcPool::from_scores(raw.clone(), 0).unwrap();
            let scaled = NcPool::from_scores(raw.iter().map(|x| x * 4.0).collect(), 0).unwrap();
            prop_assert_eq!(pool.p_value(nc), scaled.p_value(nc * 4.0));
        }

        #[test]
        fn weights_sum_to_one_unless_clipped(
            p_a in 0.0..1.0f64, p_b in 0.0..1.0f64,
            s_a in 0.0..1.0f64, s_b in 0.0..1.0f64,
        ) {
            let d = fusion_weights(p_a, p_b, s_a, s_b, 0.7);
            prop_assert!((d.w_a + d.w_b - 1.0).abs() < 1e-12);
            if d.clipped || d.degenerate {
                prop_assert_eq!((d.w_a, d.w_b), (0.5, 0.5));
            }
        }

        #[test]
        fn fuse_is_linear_in_scale(
            s in -4.0..4.0f64,
            w_a in 0.0..1.0f64,
            f_a in proptest::collection::vec(-10.0..10.0f64, 4),
            f_b in proptest::collection::vec(-10.0..10.0f64, 4),
        ) {
            let w = FusionWeights { w_a, w_b: 1.0 - w_a };
            let direct = fuse_features(
                &f_a.iter().map(|x| s * x).collect::<Vec<_>>(),
                &f_b.iter().map(|x| s * x).collect::<Vec<_>>(),
                &w,
            ).unwrap();
            let scaled = fuse_features(&f_a, &f_b, &w).unwrap().scaled(s);
            for i in 0..4 {
                prop_assert!((direct[i] - scaled[i]).abs() <= 1e-9 * (1.0 + scaled[i].abs()));
            }
        }
    }
}
