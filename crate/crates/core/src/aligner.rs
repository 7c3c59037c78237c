//! Feature impressions and the feature aligner, trained jointly.
//!
//! A feature impression (FI) is a learnable vector in the aligned space, one
//! per class, acting as a surrogate ground truth. The aligner is a small MLP
//! projecting raw per-modality features into that space. Both are trained
//! together under a three-term objective:
//!
//! ```text
//! L = a·Σ_c Σ_i (‖w_c − h_ci‖ + ‖w_c − h_li‖)                    (center)
//!   + b·Σ_c ‖Σ_i ((h_ci − w_c)/(‖h_ci − w_c‖+ε)
//!             + (h_li − w_c)/(‖h_li − w_c‖+ε))‖²                 (geomed)
//!   − g·Σ_{j<k} ‖w_j − w_k‖²                                     (separate)
//! ```
//!
//! The center term pulls each class's aligned features toward its impression,
//! the geomed term penalizes violation of the geometric-median optimality
//! condition (the unit-vector sum), and the separate term keeps distinct
//! impressions apart. The ε guard keeps loss and gradients finite even for
//! features coinciding with their impression.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{Mlp, MlpGradients, NumericsError, Optimizer, Vector};
use crate::rng::stream_rng;

/// Denominator guard used throughout the normalized terms.
pub const DEFAULT_EPS: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum AlignerError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error("class {class} out of range for {num_classes} feature impressions")]
    InvalidClass { class: usize, num_classes: usize },
    #[error("dimension mismatch in {context}: expected {expected}, got {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("training set has no scenes or no features")]
    EmptyTrainingSet,
    #[error("training diverged at step {step}: loss became non-finite")]
    Diverged { step: usize, trace: Vec<LossTerms> },
}

/// The learnable per-class surrogate ground truths `w*_1..w*_C`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureImpressionSet {
    nodes: Vec<Vector>,
}

impl FeatureImpressionSet {
    pub fn new(nodes: Vec<Vector>) -> Result<Self, AlignerError> {
        if nodes.is_empty() {
            return Err(AlignerError::EmptyTrainingSet);
        }
        let dim = nodes[0].dim();
        for n in &nodes {
            if n.dim() != dim {
                return Err(AlignerError::DimensionMismatch {
                    context: "feature impression node",
                    expected: dim,
                    found: n.dim(),
                });
            }
        }
        Ok(Self { nodes })
    }

    /// Draws `num_classes` nodes uniformly on the sphere of the given radius,
    /// giving distinct, well-spread starting positions.
    pub fn init_on_sphere(
        num_classes: usize,
        dim: usize,
        radius: f64,
        rng: &mut ChaCha12Rng,
    ) -> Self {
        assert!(num_classes > 0 && dim > 0);
        let normal = rand_distr::StandardNormal;
        let nodes = (0..num_classes)
            .map(|_| {
                let mut v: Vec<f64> = (0..dim).map(|_| rng.sample(normal)).collect();
                let n = crate::numerics::norm(&v).max(1e-12);
                for x in v.iter_mut() {
                    *x *= radius / n;
                }
                Vector::from(v)
            })
            .collect();
        Self { nodes }
    }

    pub fn num_classes(&self) -> usize {
        self.nodes.len()
    }

    pub fn dim(&self) -> usize {
        self.nodes[0].dim()
    }

    pub fn node(&self, class: usize) -> &Vector {
        &self.nodes[class]
    }

    pub fn nodes(&self) -> &[Vector] {
        &self.nodes
    }

    /// Smallest distance between two nodes; infinity for a single node.
    pub fn min_pairwise_distance(&self) -> f64 {
        let mut min = f64::INFINITY;
        for j in 0..self.nodes.len() {
            for k in j + 1..self.nodes.len() {
                min = min.min(self.nodes[j].dist(&self.nodes[k]));
            }
        }
        min
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .flat_map(|n| n.as_slice().iter().copied())
            .collect()
    }

    pub fn set_flattened(&mut self, values: &[f64]) -> Result<(), AlignerError> {
        let expected = self.num_classes() * self.dim();
        if values.len() != expected {
            return Err(AlignerError::DimensionMismatch {
                context: "flattened feature impressions",
                expected,
                found: values.len(),
            });
        }
        let dim = self.dim();
        for (c, chunk) in values.chunks(dim).enumerate() {
            self.nodes[c].as_mut_slice().copy_from_slice(chunk);
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), AlignerError> {
        for n in &self.nodes {
            Vector::new(n.as_slice().to_vec()).map_err(AlignerError::Numerics)?;
            if n.dim() != self.dim() {
                return Err(AlignerError::DimensionMismatch {
                    context: "feature impression node",
                    expected: self.dim(),
                    found: n.dim(),
                });
            }
        }
        Ok(())
    }
}

/// Weights of the three loss terms. The defaults follow the number of
/// queries: `a = 5/N`, `b = 3/N`, `g = 1/(7N)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossCoefficients {
    pub center: f64,
    pub geomed: f64,
    pub separate: f64,
}

impl LossCoefficients {
    pub fn for_num_queries(num_queries: usize) -> Self {
        assert!(num_queries > 0);
        let n = num_queries as f64;
        Self {
            center: 5.0 / n,
            geomed: 3.0 / n,
            separate: 1.0 / (7.0 * n),
        }
    }
}

/// Features of one class, split by modality. Whether the vectors are raw
/// (training input) or aligned (loss input) depends on context; the loss
/// pools both modality lists, so uneven or empty lists are fine.
#[derive(Debug, Clone)]
pub struct ClassFeatures {
    pub class: usize,
    pub modality_a: Vec<Vector>,
    pub modality_b: Vec<Vector>,
}

impl ClassFeatures {
    pub fn features(&self) -> impl Iterator<Item = &Vector> {
        self.modality_a.iter().chain(self.modality_b.iter())
    }

    pub fn num_features(&self) -> usize {
        self.modality_a.len() + self.modality_b.len()
    }
}

/// Loss value broken into its three terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub total: f64,
    pub center: f64,
    pub geomed: f64,
    pub separate: f64,
    /// Set when the batch contributed no features (center and geomed are then
    /// zero by convention).
    pub empty_batch: bool,
}

fn check_batch(
    batch: &[ClassFeatures],
    fis: &FeatureImpressionSet,
) -> Result<(), AlignerError> {
    for group in batch {
        if group.class >= fis.num_classes() {
            return Err(AlignerError::InvalidClass {
                class: group.class,
                num_classes: fis.num_classes(),
            });
        }
        for f in group.features() {
            if f.dim() != fis.dim() {
                return Err(AlignerError::DimensionMismatch {
                    context: "aligned feature",
                    expected: fis.dim(),
                    found: f.dim(),
                });
            }
        }
    }
    Ok(())
}

fn separate_term(fis: &FeatureImpressionSet) -> f64 {
    let mut sum = 0.0;
    for j in 0..fis.num_classes() {
        for k in j + 1..fis.num_classes() {
            let d = fis.nodes[j].dist(&fis.nodes[k]);
            sum += d * d;
        }
    }
    sum
}

/// Evaluates the three-term objective on an aligned batch.
pub fn loss_total(
    batch: &[ClassFeatures],
    fis: &FeatureImpressionSet,
    coeffs: &LossCoefficients,
    eps: f64,
) -> Result<LossTerms, AlignerError> {
    assert!(eps > 0.0, "eps must be positive");
    check_batch(batch, fis)?;
    let mut center = 0.0;
    let mut geomed = 0.0;
    let mut any_feature = false;
    for group in batch {
        let w = fis.node(group.class);
        let mut unit_sum = vec![0.0; fis.dim()];
        for h in group.features() {
            any_feature = true;
            let d = h.dist(w);
            center += d;
            let guard = d + eps;
            for ((s, &hi), &wi) in unit_sum.iter_mut().zip(h.as_slice()).zip(w.as_slice()) {
                *s += (hi - wi) / guard;
            }
        }
        let s_norm = crate::numerics::norm(&unit_sum);
        geomed += s_norm * s_norm;
    }
    let separate = separate_term(fis);
    let total = coeffs.center * center + coeffs.geomed * geomed - coeffs.separate * separate;
    Ok(LossTerms {
        total,
        center,
        geomed,
        separate,
        empty_batch: !any_feature,
    })
}

/// Gradients of the total loss w.r.t. each aligned feature and each FI node.
#[derive(Debug, Clone)]
pub struct BatchGradients {
    /// Parallel to the batch: per class group, per modality, per feature.
    pub per_class: Vec<ClassFeatureGradients>,
    /// One gradient per FI node, for every class (zero where untouched by
    /// center/geomed; the separate term touches all nodes).
    pub fi_nodes: Vec<Vector>,
}

#[derive(Debug, Clone)]
pub struct ClassFeatureGradients {
    pub modality_a: Vec<Vector>,
    pub modality_b: Vec<Vector>,
}

/// Evaluates the loss and its gradients w.r.t. aligned features and FI nodes
/// in one pass. The geomed gradient flows through the normalization chain
/// rule; all denominators carry the ε guard, so the result is finite for any
/// input, including features coinciding with their impression.
pub fn loss_gradients(
    batch: &[ClassFeatures],
    fis: &FeatureImpressionSet,
    coeffs: &LossCoefficients,
    eps: f64,
) -> Result<(LossTerms, BatchGradients), AlignerError> {
    assert!(eps > 0.0, "eps must be positive");
    check_batch(batch, fis)?;
    let dim = fis.dim();
    let mut fi_grads = vec![Vector::zeros(dim); fis.num_classes()];
    let mut per_class = Vec::with_capacity(batch.len());
    let mut center = 0.0;
    let mut geomed = 0.0;
    let mut any_feature = false;

    for group in batch {
        let w = fis.node(group.class);
        // First pass: unit-vector sum S_c and the center term.
        let mut unit_sum = vec![0.0; dim];
        for h in group.features() {
            any_feature = true;
            let d = h.dist(w);
            center += d;
            let guard = d + eps;
            for ((s, &hi), &wi) in unit_sum.iter_mut().zip(h.as_slice()).zip(w.as_slice()) {
                *s += (hi - wi) / guard;
            }
        }
        let s_norm = crate::numerics::norm(&unit_sum);
        geomed += s_norm * s_norm;

        // Second pass: per-feature gradients.
        let mut grads = ClassFeatureGradients {
            modality_a: Vec::with_capacity(group.modality_a.len()),
            modality_b: Vec::with_capacity(group.modality_b.len()),
        };
        let fi_grad = &mut fi_grads[group.class];
        for (idx, h) in group.features().enumerate() {
            let v: Vec<f64> = h
                .as_slice()
                .iter()
                .zip(w.as_slice())
                .map(|(&hi, &wi)| hi - wi)
                .collect();
            let n = crate::numerics::norm(&v);
            let guard = n + eps;

            let mut g = Vector::zeros(dim);
            // Center: d‖v‖/dh = v/‖v‖, ε-guarded.
            g.axpy(coeffs.center / guard, &v);

            // Geomed: u = v/(‖v‖+ε); dL/du = 2 S_c per class term;
            // (∂u/∂v)ᵀ x = x/(‖v‖+ε) − v (v·x)/(‖v‖ (‖v‖+ε)²).
            let v_dot_s = crate::numerics::dot(&v, &unit_sum);
            g.axpy(2.0 * coeffs.geomed / guard, &unit_sum);
            if n > 1e-30 {
                g.axpy(-2.0 * coeffs.geomed * v_dot_s / (n * guard * guard), &v);
            }

            // ∂v/∂w = −I: the FI node receives the negated center+geomed pull.
            fi_grad.axpy(-coeffs.center / guard, &v);
            fi_grad.axpy(-2.0 * coeffs.geomed / guard, &unit_sum);
            if n > 1e-30 {
                fi_grad.axpy(2.0 * coeffs.geomed * v_dot_s / (n * guard * guard), &v);
            }

            if idx < group.modality_a.len() {
                grads.modality_a.push(g);
            } else {
                grads.modality_b.push(g);
            }
        }
        per_class.push(grads);
    }

    // Separate term enters the total with a minus sign:
    // d(total)/dw_j = −g_sep · Σ_{k≠j} 2 (w_j − w_k).
    for j in 0..fis.num_classes() {
        for k in 0..fis.num_classes() {
            if j == k {
                continue;
            }
            let diff: Vec<f64> = fis.nodes[j]
                .as_slice()
                .iter()
                .zip(fis.nodes[k].as_slice())
                .map(|(&a, &b)| a - b)
                .collect();
            fi_grads[j].axpy(-2.0 * coeffs.separate, &diff);
        }
    }

    let separate = separate_term(fis);
    let total = coeffs.center * center + coeffs.geomed * geomed - coeffs.separate * separate;
    Ok((
        LossTerms {
            total,
            center,
            geomed,
            separate,
            empty_batch: !any_feature,
        },
        BatchGradients {
            per_class,
            fi_nodes: fi_grads,
        },
    ))
}

/// Projects a raw feature into the aligned space. Delegates to the MLP
/// forward pass bit-for-bit.
pub fn align(aligner: &Mlp, raw_feature: &[f64]) -> Result<Vector, NumericsError> {
    aligner.forward(raw_feature)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Adam,
    Sgd,
}

/// Joint-training configuration. Defaults: 500 epochs at 1e-3 with Adam,
/// followed by a short settling phase that refines the impression nodes
/// against the frozen aligner with plain small-step gradient descent (the
/// adaptive optimizer's per-coordinate jitter would otherwise keep the nodes
/// hovering near, but not on, their geometric-median positions).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub eps: f64,
    pub optimizer: OptimizerKind,
    pub shuffle_scenes: bool,
    /// Impression-only descent steps after the joint phase (0 disables).
    pub settle_steps: usize,
    pub settle_learning_rate: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 500,
            learning_rate: 1e-3,
            eps: DEFAULT_EPS,
            optimizer: OptimizerKind::Adam,
            shuffle_scenes: true,
            settle_steps: 300,
            settle_learning_rate: 1e-3,
        }
    }
}

/// Result of [`train_joint`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub aligner: Mlp,
    pub fis: FeatureImpressionSet,
    /// One entry per optimization step (one scene per step).
    pub loss_trace: Vec<LossTerms>,
    pub initial_min_fi_distance: f64,
    pub final_min_fi_distance: f64,
}

/// Jointly trains the aligner and the feature impressions on raw features.
/// Each element of `scenes` is the per-class feature grouping of one scene;
/// every optimization step processes a single scene (batch size one), with
/// scene order reshuffled each epoch when configured.
///
/// The raw features are fixed; only aligner parameters and FI nodes move.
/// Training aborts with the loss trace if the loss turns non-finite.
pub fn train_joint(
    scenes: &[Vec<ClassFeatures>],
    aligner: Mlp,
    fis: FeatureImpressionSet,
    coeffs: &LossCoefficients,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainOutcome, AlignerError> {
    if scenes.is_empty() || scenes.iter().all(|s| s.iter().all(|g| g.num_features() == 0)) {
        return Err(AlignerError::EmptyTrainingSet);
    }
    for scene in scenes {
        for group in scene {
            if group.class >= fis.num_classes() {
                return Err(AlignerError::InvalidClass {
                    class: group.class,
                    num_classes: fis.num_classes(),
                });
            }
            for f in group.features() {
                if f.dim() != aligner.input_dim() {
                    return Err(AlignerError::DimensionMismatch {
                        context: "raw feature vs aligner input",
                        expected: aligner.input_dim(),
                        found: f.dim(),
                    });
                }
            }
        }
    }
    if aligner.output_dim() != fis.dim() {
        return Err(AlignerError::DimensionMismatch {
            context: "aligner output vs feature impression",
            expected: fis.dim(),
            found: aligner.output_dim(),
        });
    }

    let mut aligner = aligner;
    let mut fis = fis;
    let initial_min_fi_distance = fis.min_pairwise_distance();
    let aligner_param_count = aligner.param_count();
    let total_params = aligner_param_count + fis.num_classes() * fis.dim();
    let mut optimizer = match cfg.optimizer {
        OptimizerKind::Adam => Optimizer::adam(cfg.learning_rate, total_params),
        OptimizerKind::Sgd => Optimizer::sgd(cfg.learning_rate),
    };
    let mut shuffle_rng = stream_rng(seed, "train-joint-shuffle");
    let mut order: Vec<usize> = (0..scenes.len()).collect();
    let mut trace: Vec<LossTerms> = Vec::with_capacity(cfg.epochs * scenes.len());

    for _epoch in 0..cfg.epochs {
        if cfg.shuffle_scenes {
            // Fisher-Yates on the scene order.
            for i in (1..order.len()).rev() {
                let j = shuffle_rng.random_range(0..=i);
                order.swap(i, j);
            }
        }
        for &scene_idx in &order {
            let scene = &scenes[scene_idx];
            // Align the scene, keeping forward traces for backprop.
            let mut aligned_batch = Vec::with_capacity(scene.len());
            let mut traces = Vec::new();
            for group in scene {
                let mut aligned = ClassFeatures {
                    class: group.class,
                    modality_a: Vec::with_capacity(group.modality_a.len()),
                    modality_b: Vec::with_capacity(group.modality_b.len()),
                };
                for (idx, raw) in group.features().enumerate() {
                    let t = aligner.forward_traced(raw.as_slice())?;
                    let h = t.output().clone();
                    traces.push(t);
                    if idx < group.modality_a.len() {
                        aligned.modality_a.push(h);
                    } else {
                        aligned.modality_b.push(h);
                    }
                }
                aligned_batch.push(aligned);
            }

            let (loss, grads) = loss_gradients(&aligned_batch, &fis, coeffs, cfg.eps)?;
            if !loss.total.is_finite() {
                trace.push(loss);
                return Err(AlignerError::Diverged {
                    step: trace.len(),
                    trace,
                });
            }

            // Chain feature gradients through the aligner.
            let mut aligner_grads = MlpGradients::zeros_like(&aligner);
            let mut trace_iter = traces.iter();
            for class_grads in &grads.per_class {
                for g in class_grads
                    .modality_a
                    .iter()
                    .chain(class_grads.modality_b.iter())
                {
                    let t = trace_iter.next().expect("trace per feature");
                    let (pg, _) = aligner.backward_from_trace(t, g.as_slice())?;
                    aligner_grads.accumulate(&pg);
                }
            }

            let mut flat_params = aligner.flatten_params();
            flat_params.extend(fis.flatten());
            let mut flat_grads = aligner_grads.flatten();
            flat_grads.extend(grads.fi_nodes.iter().flat_map(|g| g.as_slice().iter().copied()));
            optimizer
                .step(&mut flat_params, &flat_grads)
                .map_err(AlignerError::Numerics)?;
            aligner.set_params(&flat_params[..aligner_param_count])?;
            fis.set_flattened(&flat_params[aligner_param_count..])?;

            trace.push(loss);
        }
    }

    // Settling phase: aligner frozen, impressions alone descend the full
    // loss over the pooled aligned features until they sit on their
    // per-class geometric medians (up to the separate-term pull).
    if cfg.settle_steps > 0 {
        let mut pooled: Vec<ClassFeatures> = (0..fis.num_classes())
            .map(|class| ClassFeatures {
                class,
                modality_a: Vec::new(),
                modality_b: Vec::new(),
            })
            .collect();
        for scene in scenes {
            for group in scene {
                for raw in &group.modality_a {
                    pooled[group.class]
                        .modality_a
                        .push(aligner.forward(raw.as_slice())?);
                }
                for raw in &group.modality_b {
                    pooled[group.class]
                        .modality_b
                        .push(aligner.forward(raw.as_slice())?);
                }
            }
        }
        pooled.retain(|g| g.num_features() > 0);
        let mut step_size = cfg.settle_learning_rate;
        let mut current = loss_total(&pooled, &fis, coeffs, cfg.eps)?.total;
        let mut probe = fis.clone();
        for _ in 0..cfg.settle_steps {
            let (loss, grads) = loss_gradients(&pooled, &fis, coeffs, cfg.eps)?;
            if !loss.total.is_finite() {
                return Err(AlignerError::Diverged {
                    step: trace.len(),
                    trace,
                });
            }
            let flat = fis.flatten();
            let flat_grads: Vec<f64> = grads
                .fi_nodes
                .iter()
                .flat_map(|g| g.as_slice().iter().copied())
                .collect();
            // Backtracking descent: the cluster-tightness-dependent curvature
            // makes any fixed step size unsafe.
            let mut trial_size = step_size * 2.0;
            let mut accepted = false;
            for _ in 0..40 {
                let trial: Vec<f64> = flat
                    .iter()
                    .zip(&flat_grads)
                    .map(|(p, g)| p - trial_size * g)
                    .collect();
                probe.set_flattened(&trial)?;
                let trial_loss = loss_total(&pooled, &probe, coeffs, cfg.eps)?.total;
                if trial_loss < current {
                    fis.set_flattened(&trial)?;
                    current = trial_loss;
                    step_size = trial_size;
                    accepted = true;
                    break;
                }
                trial_size *= 0.5;
            }
            if !accepted {
                break;
            }
        }
    }

    let final_min_fi_distance = fis.min_pairwise_distance();
    Ok(TrainOutcome {
        aligner,
        fis,
        loss_trace: trace,
        initial_min_fi_distance,
        final_min_fi_distance,
    })
}

/// Trailing moving average of the total-loss trace, for convergence checks.
pub fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    assert!(window > 0);
    if values.len() < window {
        return Vec::new();
    }
    let mut out = Vec::with_capacity(values.len() - window + 1);
    let mut sum: f64 = values[..window].iter().sum();
    out.push(sum / window as f64);
    for i in window..values.len() {
        sum += values[i] - values[i - window];
        out.push(sum / window as f64);
    }
    out
}
