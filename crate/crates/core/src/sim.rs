//! Synthetic two-modality fusion simulator.
//!
//! Stands in for a frozen query-based detector: each scene carries a fixed
//! number of queries, each with one feature vector per modality per
//! pseudo-decoder layer. Matched queries draw class-conditional features
//! (class mean plus per-layer noise, partially shared across modalities);
//! background queries draw from a broad null distribution. Corruptions
//! perturb one modality's features in feature space.
//!
//! The pipeline aligns both modalities per layer, scores them against the
//! feature impressions, turns final-layer p-values and cross-layer stability
//! into fusion weights, fuses the raw final-layer features, and classifies
//! with a linear head trained once under static fusion and then frozen, so
//! the fusion policy is the only thing that differs between modes.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{
    self, AlignerError, ClassFeatures, FeatureImpressionSet, LossCoefficients, LossTerms,
    TrainConfig,
};
use crate::artifact::{ArtifactError, CalibrationArtifact};
use crate::conformal::{
    build_nc_pool, fusion_weights_with_policy, fuse_features, nc_score, stability_score,
    ClipPolicy, ConformalError, LayerTrace, NcPool, NcScore, NcTarget, QueryUncertainty,
    WeightDecision, DEFAULT_CLIP_THRESHOLD,
};
use crate::numerics::{
    Activation, InitScheme, Matrix, Mlp, NumericsError, Optimizer, Vector,
};
use crate::rng::stream_rng;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Aligner(#[from] AlignerError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error(transparent)]
    Artifact(#[from] ArtifactError),
    #[error("artifact has {pools} pools but the scene has {layers} layers")]
    LayerMismatch { pools: usize, layers: usize },
    #[error("scene has no matched queries")]
    NoMatchedQueries,
}

/// Generative description of a scene family. Class means are pinned by
/// `family_seed`, so scenes from the same spec share their geometry and an
/// artifact trained on one batch of scenes transfers to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub num_queries: usize,
    pub num_classes: usize,
    pub num_layers: usize,
    /// Fraction of queries matched to objects; the rest are background.
    pub matched_fraction: f64,
    pub feature_dim: usize,
    /// Scale of the class-mean placement.
    pub class_mean_scale: f64,
    /// Constant added to every class-mean coordinate, placing the feature
    /// shell away from the origin (encoder features are not zero-centered;
    /// the zero vector should be off-distribution).
    pub mean_offset: f64,
    /// Fraction of class-mean variance shared between the two modalities.
    pub shared_mean_fraction: f64,
    /// Base per-layer noise scale (per coordinate, fresh each layer).
    pub cov_scale: f64,
    /// Per-class informativeness: the cleaner modality's noise is scaled by
    /// `1 − contrast`, the other by `1 + contrast`, alternating with class
    /// parity (even classes favor modality A).
    pub informativeness_contrast: f64,
    /// Fraction of per-layer noise variance common to both modalities
    /// (object-level difficulty affecting both sensors).
    pub common_noise_fraction: f64,
    /// Noise scale of background-query features.
    pub background_scale: f64,
    /// Pins class means for the whole family.
    pub family_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            num_queries: 60,
            num_classes: 10,
            num_layers: 6,
            matched_fraction: 0.75,
            feature_dim: 16,
            class_mean_scale: 0.65,
            mean_offset: 1.5,
            shared_mean_fraction: 0.85,
            cov_scale: 0.42,
            informativeness_contrast: 0.2,
            common_noise_fraction: 0.5,
            background_scale: 1.5,
            family_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn num_matched(&self) -> usize {
        ((self.num_queries as f64) * self.matched_fraction).round() as usize
    }

    /// Class means per (class, modality), derived from the family seed.
    pub fn class_means(&self) -> Vec<[Vector; 2]> {
        let mut rng = stream_rng(self.family_seed, "class-means");
        let normal = rand_distr::StandardNormal;
        let shared = self.shared_mean_fraction.clamp(0.0, 1.0);
        (0..self.num_classes)
            .map(|_| {
                let g: Vec<f64> = (0..self.feature_dim)
                    .map(|_| rng.sample::<f64, _>(normal))
                    .collect();
                let mut means: Vec<Vector> = Vec::with_capacity(2);
                for _m in 0..2 {
                    let mean: Vec<f64> = g
                        .iter()
                        .map(|&gi| {
                            let e: f64 = rng.sample(normal);
                            self.mean_offset
                                + self.class_mean_scale
                                    * (shared.sqrt() * gi + (1.0 - shared).sqrt() * e)
                        })
                        .collect();
                    means.push(Vector::from(mean));
                }
                [means[0].clone(), means[1].clone()]
            })
            .collect()
    }

    /// Per-layer noise scale for a class and modality.
    pub fn noise_scale(&self, class: usize, modality: usize) -> f64 {
        let a_clean = class % 2 == 0;
        let is_clean = (modality == 0) == a_clean;
        if is_clean {
            self.cov_scale * (1.0 - self.informativeness_contrast)
        } else {
            self.cov_scale * (1.0 + self.informativeness_contrast)
        }
    }
}

/// One query: optional class label and per-modality, per-layer features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Query {
    pub label: Option<usize>,
    /// `features[m][l]` is modality m's feature at layer l.
    pub features: [Vec<Vector>; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub num_layers: usize,
    pub feature_dim: usize,
    pub queries: Vec<Query>,
}

/// Draws one scene. Matched queries get a uniformly random class; every
/// (query, modality, layer) feature is the class mean plus a fresh noise
/// draw, partially shared between modalities at the same layer.
pub fn generate_scene(spec: &SceneSpec, seed: u64) -> Scene {
    let mut rng = stream_rng(seed, "scene");
    let normal = rand_distr::StandardNormal;
    let means = spec.class_means();
    let num_matched = spec.num_matched();
    let rho = spec.common_noise_fraction.clamp(0.0, 1.0);
    let mut queries = Vec::with_capacity(spec.num_queries);
    for q in 0..spec.num_queries {
        let label = if q < num_matched {
            Some(rng.random_range(0..spec.num_classes))
        } else {
            None
        };
        let mut features: [Vec<Vector>; 2] = [
            Vec::with_capacity(spec.num_layers),
            Vec::with_capacity(spec.num_layers),
        ];
        for _layer in 0..spec.num_layers {
            let common: Vec<f64> = (0..spec.feature_dim)
                .map(|_| rng.sample::<f64, _>(normal))
                .collect();
            for m in 0..2 {
                let feat: Vec<f64> = match label {
                    Some(class) => {
                        let sigma = spec.noise_scale(class, m);
                        means[class][m]
                            .as_slice()
                            .iter()
                            .zip(&common)
                            .map(|(&mu, &zc)| {
                                let zm: f64 = rng.sample(normal);
                                mu + sigma * (rho.sqrt() * zc + (1.0 - rho).sqrt() * zm)
                            })
                            .collect()
                    }
                    None => common
                        .iter()
                        .map(|&zc| {
                            let zm: f64 = rng.sample(normal);
                            spec.background_scale * (rho.sqrt() * zc + (1.0 - rho).sqrt() * zm)
                        })
                        .collect(),
                };
                features[m].push(Vector::from(feat));
            }
        }
        queries.push(Query { label, features });
    }
    Scene {
        num_layers: spec.num_layers,
        feature_dim: spec.feature_dim,
        queries,
    }
}

/// Feature-space corruption kinds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "severity")]
pub enum Corruption {
    None,
    /// Modality-A features become exactly zero at every layer.
    BlackoutA,
    /// Additive per-coordinate noise on modality A, fresh per layer.
    NoiseA(f64),
    /// Additive per-coordinate noise on modality B, fresh per layer.
    NoiseB(f64),
    /// Zeroes a random fraction of modality-B coordinates, fresh per layer.
    DropoutB(f64),
    /// A constant per-scene offset on modality-A features (systematic
    /// cross-sensor bias).
    Misalign(f64),
}

impl Corruption {
    pub fn name(&self) -> &'static str {
        match self {
            Corruption::None => "none",
            Corruption::BlackoutA => "blackout_a",
            Corruption::NoiseA(_) => "noise_a",
            Corruption::NoiseB(_) => "noise_b",
            Corruption::DropoutB(_) => "dropout_b",
            Corruption::Misalign(_) => "misalign",
        }
    }

    /// Parses a kind name (case-insensitive) with an external severity knob.
    pub fn parse(kind: &str, severity: f64) -> Option<Self> {
        match kind.to_ascii_lowercase().as_str() {
            "none" => Some(Corruption::None),
            "blackout_a" => Some(Corruption::BlackoutA),
            "noise_a" => Some(Corruption::NoiseA(severity)),
            "noise_b" => Some(Corruption::NoiseB(severity)),
            "dropout_b" => Some(Corruption::DropoutB(severity)),
            "misalign" => Some(Corruption::Misalign(severity)),
            _ => None,
        }
    }
}

/// Applies a corruption; only the targeted modality's features change.
pub fn corrupt(scene: &Scene, kind: Corruption, seed: u64) -> Scene {
    let mut out = scene.clone();
    let mut rng = stream_rng(seed, "corrupt");
    let normal = rand_distr::StandardNormal;
    match kind {
        Corruption::None => {}
        Corruption::BlackoutA => {
            for q in &mut out.queries {
                for layer in q.features[0].iter_mut() {
                    *layer = Vector::zeros(scene.feature_dim);
                }
            }
        }
        Corruption::NoiseA(sigma) | Corruption::NoiseB(sigma) => {
            let m = if matches!(kind, Corruption::NoiseA(_)) {
                0
            } else {
                1
            };
            for q in &mut out.queries {
                for layer in q.features[m].iter_mut() {
                    for v in layer.as_mut_slice() {
                        *v += sigma * rng.sample::<f64, _>(normal);
                    }
                }
            }
        }
        Corruption::DropoutB(rate) => {
            for q in &mut out.queries {
                for layer in q.features[1].iter_mut() {
                    for v in layer.as_mut_slice() {
                        if rng.random_range(0.0..1.0) < rate {
                            *v = 0.0;
                        }
                    }
                }
            }
        }
        Corruption::Misalign(sigma) => {
            let offset: Vec<f64> = (0..scene.feature_dim)
                .map(|_| sigma * rng.sample::<f64, _>(normal))
                .collect();
            for q in &mut out.queries {
                for layer in q.features[0].iter_mut() {
                    layer.axpy(1.0, &offset);
                }
            }
        }
    }
    out
}

/// Aligner/impression training budget for the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrainConfig {
    pub train_scenes: usize,
    pub calib_scenes: usize,
    pub aligner_hidden: usize,
    pub aligned_dim: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub fi_init_radius: f64,
}

impl Default for SimTrainConfig {
    fn default() -> Self {
        Self {
            train_scenes: 12,
            calib_scenes: 24,
            aligner_hidden: 128,
            aligned_dim: 128,
            epochs: 500,
            learning_rate: 1e-3,
            fi_init_radius: 1.0,
        }
    }
}

/// Groups a scene's matched queries into per-class feature lists, pooling
/// all layers (the aligner serves every layer).
fn scene_class_features(scene: &Scene, num_classes: usize) -> Vec<ClassFeatures> {
    let mut groups: Vec<ClassFeatures> = (0..num_classes)
        .map(|class| ClassFeatures {
            class,
            modality_a: Vec::new(),
            modality_b: Vec::new(),
        })
        .collect();
    for q in &scene.queries {
        if let Some(class) = q.label {
            groups[class].modality_a.extend(q.features[0].iter().cloned());
            groups[class].modality_b.extend(q.features[1].iter().cloned());
        }
    }
    groups.retain(|g| g.num_features() > 0);
    groups
}

/// Jointly trains the aligner and impressions on uncorrupted scenes from the
/// spec family. Returns the loss trace alongside the trained pieces.
pub fn train_scene_aligner(
    spec: &SceneSpec,
    cfg: &SimTrainConfig,
    seed: u64,
) -> Result<(Mlp, FeatureImpressionSet, Vec<LossTerms>), SimError> {
    let scenes: Vec<Vec<ClassFeatures>> = (0..cfg.train_scenes)
        .map(|i| {
            let scene_seed = derive_seed(seed, "train-scene", i as u64);
            let scene = generate_scene(spec, scene_seed);
            scene_class_features(&scene, spec.num_classes)
        })
        .collect();
    let mut init_rng = stream_rng(seed, "sim-aligner-init");
    let aligner = Mlp::new(
        &[spec.feature_dim, cfg.aligner_hidden, cfg.aligned_dim],
        Activation::Relu,
        InitScheme::FanInUniform,
        &mut init_rng,
    )?;
    let fis = FeatureImpressionSet::init_on_sphere(
        spec.num_classes,
        cfg.aligned_dim,
        cfg.fi_init_radius,
        &mut init_rng,
    );
    let coeffs = LossCoefficients::for_num_queries(spec.num_queries);
    let train_cfg = TrainConfig {
        epochs: cfg.epochs,
        learning_rate: cfg.learning_rate,
        ..TrainConfig::default()
    };
    let out = aligner::train_joint(&scenes, aligner, fis, &coeffs, &train_cfg, seed)?;
    Ok((out.aligner, out.fis, out.loss_trace))
}

/// Builds one global nonconformity pool per layer from fresh uncorrupted
/// calibration scenes, scoring matched queries of both modalities against
/// their ground-truth class's impression.
pub fn calibrate_scene_pools(
    spec: &SceneSpec,
    aligner_net: &Mlp,
    fis: &FeatureImpressionSet,
    calib_scenes: usize,
    seed: u64,
) -> Result<Vec<NcPool>, SimError> {
    let mut per_layer: Vec<Vec<(Vector, usize)>> = vec![Vec::new(); spec.num_layers];
    for i in 0..calib_scenes {
        let scene_seed = derive_seed(seed, "calib-scene", i as u64);
        let scene = generate_scene(spec, scene_seed);
        for q in &scene.queries {
            let Some(class) = q.label else { continue };
            for m in 0..2 {
                for (layer, feat) in q.features[m].iter().enumerate() {
                    let aligned = aligner_net.forward(feat.as_slice())?;
                    per_layer[layer].push((aligned, class));
                }
            }
        }
    }
    let mut pools = Vec::with_capacity(spec.num_layers);
    for (layer, samples) in per_layer.iter().enumerate() {
        pools.push(build_nc_pool(samples, fis, layer)?);
    }
    Ok(pools)
}

/// Trains and calibrates in one go, producing a persistable artifact.
pub fn train_sim_artifact(
    spec: &SceneSpec,
    cfg: &SimTrainConfig,
    config_snapshot: BTreeMap<String, String>,
    seed: u64,
) -> Result<CalibrationArtifact, SimError> {
    let (aligner_net, fis, _) = train_scene_aligner(spec, cfg, seed)?;
    let pools = calibrate_scene_pools(spec, &aligner_net, &fis, cfg.calib_scenes, seed)?;
    Ok(CalibrationArtifact::new(
        aligner_net,
        fis,
        pools,
        config_snapshot,
        seed,
    ))
}

use crate::rng::derive_indexed_seed as derive_seed;

/// Frozen linear classification head over fused features. Bias-free, so the
/// predicted class is invariant to the overall scale of the fused feature;
/// only the modality mix matters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearHead {
    weight: Matrix,
}

impl LinearHead {
    pub fn num_classes(&self) -> usize {
        self.weight.rows()
    }

    pub fn logits(&self, fused: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.weight.rows()];
        self.weight.matvec(fused, &mut out);
        out
    }

    pub fn predict(&self, fused: &[f64]) -> Result<usize, NumericsError> {
        if fused.len() != self.weight.cols() {
            return Err(NumericsError::DimensionMismatch {
                context: "head input",
                expected: self.weight.cols(),
                found: fused.len(),
            });
        }
        let logits = self.logits(fused);
        let mut best = 0;
        for i in 1..logits.len() {
            if logits[i] > logits[best] {
                best = i;
            }
        }
        Ok(best)
    }
}

/// Trains the linear head once under static fusion on uncorrupted scenes
/// (softmax cross-entropy over matched queries' fused final-layer features).
pub fn train_head(
    spec: &SceneSpec,
    train_scenes: usize,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
) -> Result<LinearHead, SimError> {
    let mut inputs: Vec<Vector> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let static_w = crate::conformal::FusionWeights { w_a: 0.5, w_b: 0.5 };
    for i in 0..train_scenes {
        let scene_seed = derive_seed(seed, "head-scene", i as u64);
        let scene = generate_scene(spec, scene_seed);
        for q in &scene.queries {
            let Some(class) = q.label else { continue };
            let last = scene.num_layers - 1;
            let fused = fuse_features(
                q.features[0][last].as_slice(),
                q.features[1][last].as_slice(),
                &static_w,
            )?;
            inputs.push(fused);
            labels.push(class);
        }
    }
    if inputs.is_empty() {
        return Err(SimError::NoMatchedQueries);
    }
    let mut init_rng = stream_rng(seed, "head-init");
    let dim = spec.feature_dim;
    let classes = spec.num_classes;
    let mut weight = Matrix::zeros(classes, dim);
    {
        let bound = 1.0 / (dim as f64).sqrt();
        for v in weight.data_mut() {
            *v = init_rng.random_range(-bound..bound);
        }
    }
    let mut optimizer = Optimizer::adam(learning_rate, classes * dim);
    let n = inputs.len() as f64;
    let head = |w: &Matrix, x: &[f64]| {
        let mut z = vec![0.0; w.rows()];
        w.matvec(x, &mut z);
        z
    };
    for _ in 0..epochs {
        let mut grads = Matrix::zeros(classes, dim);
        for (x, &label) in inputs.iter().zip(&labels) {
            let logits = head(&weight, x.as_slice());
            // Softmax cross-entropy gradient: p − onehot.
            let max = logits.iter().copied().fold(f64::MIN, f64::max);
            let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
            let sum: f64 = exps.iter().sum();
            let mut dlogits: Vec<f64> = exps.iter().map(|&e| e / sum / n).collect();
            dlogits[label] -= 1.0 / n;
            grads.add_outer(1.0, &dlogits, x.as_slice());
        }
        let mut params = weight.data().to_vec();
        optimizer.step(&mut params, grads.data())?;
        weight.data_mut().copy_from_slice(&params);
    }
    Ok(LinearHead { weight })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    Static,
    Adaptive,
}

/// Pipeline knobs; the clip threshold and policy follow the conformal
/// module's defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub mode: FusionMode,
    pub clip_threshold: f64,
    pub clip_policy: ClipPolicy,
}

impl PipelineConfig {
    pub fn static_fusion() -> Self {
        Self {
            mode: FusionMode::Static,
            clip_threshold: DEFAULT_CLIP_THRESHOLD,
            clip_policy: ClipPolicy::ModalityA,
        }
    }

    pub fn adaptive() -> Self {
        Self {
            mode: FusionMode::Adaptive,
            ..Self::static_fusion()
        }
    }
}

/// Uncertainty records and predictions for one pipeline run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub mode: FusionMode,
    pub records: Vec<QueryRecord>,
    /// Top-1 accuracy over matched queries.
    pub accuracy: f64,
    /// Mean fusion weights over matched queries.
    pub mean_weight_a: f64,
    pub mean_weight_b: f64,
    pub clip_rate_matched: f64,
    pub clip_rate_background: f64,
    pub degenerate_rate_matched: f64,
    pub degenerate_rate_background: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub query: usize,
    pub label: Option<usize>,
    pub predicted: usize,
    pub uncertainty: QueryUncertainty,
}

/// Runs the full per-query pipeline on a scene. The output is a pure
/// function of `(scene, artifact, head, cfg)`; labels are consulted only to
/// compute the reported accuracy, never to form weights or predictions.
pub fn run_pipeline(
    scene: &Scene,
    artifact: &CalibrationArtifact,
    head: &LinearHead,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput, SimError> {
    artifact.validate_for_inference()?;
    if artifact.nc_pools.len() != scene.num_layers {
        return Err(SimError::LayerMismatch {
            pools: artifact.nc_pools.len(),
            layers: scene.num_layers,
        });
    }
    let final_pool = &artifact.nc_pools[scene.num_layers - 1];
    let mut records = Vec::with_capacity(scene.queries.len());
    for (index, q) in scene.queries.iter().enumerate() {
        // Per-modality layer traces of top-1 impressions.
        let mut traces: Vec<LayerTrace> = Vec::with_capacity(2);
        for m in 0..2 {
            let entries: Vec<NcScore> = q.features[m]
                .iter()
                .map(|feat| {
                    let aligned = artifact.aligner.forward(feat.as_slice())?;
                    nc_score(aligned.as_slice(), &artifact.fis, NcTarget::Nearest)
                        .map_err(SimError::from)
                })
                .collect::<Result<_, SimError>>()?;
            traces.push(LayerTrace::new(entries));
        }
        let nc_a = traces[0].final_layer().score;
        let nc_b = traces[1].final_layer().score;
        let p_a = final_pool.p_value(nc_a);
        let p_b = final_pool.p_value(nc_b);
        let s_a = stability_score(&traces[0]);
        let s_b = stability_score(&traces[1]);
        let decision = match cfg.mode {
            FusionMode::Adaptive => fusion_weights_with_policy(
                p_a,
                p_b,
                s_a,
                s_b,
                cfg.clip_threshold,
                cfg.clip_policy,
            ),
            FusionMode::Static => WeightDecision {
                q_a: 0.5,
                q_b: 0.5,
                w_a: 0.5,
                w_b: 0.5,
                clipped: false,
                degenerate: false,
            },
        };
        let uncertainty = QueryUncertainty::new(nc_a, nc_b, p_a, p_b, s_a, s_b, decision);
        let last = scene.num_layers - 1;
        let fused = fuse_features(
            q.features[0][last].as_slice(),
            q.features[1][last].as_slice(),
            &decision.weights(),
        )?;
        let predicted = head.predict(fused.as_slice())?;
        records.push(QueryRecord {
            query: index,
            label: q.label,
            predicted,
            uncertainty,
        });
    }

    let matched: Vec<&QueryRecord> = records.iter().filter(|r| r.label.is_some()).collect();
    if matched.is_empty() {
        return Err(SimError::NoMatchedQueries);
    }
    let n_matched = matched.len() as f64;
    let accuracy = matched
        .iter()
        .filter(|r| r.label == Some(r.predicted))
        .count() as f64
        / n_matched;
    let mean_weight_a = matched
        .iter()
        .map(|r| r.uncertainty.modality_a.w)
        .sum::<f64>()
        / n_matched;
    let mean_weight_b = matched
        .iter()
        .map(|r| r.uncertainty.modality_b.w)
        .sum::<f64>()
        / n_matched;
    let background: Vec<&QueryRecord> = records.iter().filter(|r| r.label.is_none()).collect();
    let rate = |set: &[&QueryRecord], f: fn(&QueryRecord) -> bool| {
        if set.is_empty() {
            0.0
        } else {
            set.iter().filter(|r| f(r)).count() as f64 / set.len() as f64
        }
    };
    Ok(PipelineOutput {
        mode: cfg.mode,
        accuracy,
        mean_weight_a,
        mean_weight_b,
        clip_rate_matched: rate(&matched, |r| r.uncertainty.clipped),
        clip_rate_background: rate(&background, |r| r.uncertainty.clipped),
        degenerate_rate_matched: rate(&matched, |r| r.uncertainty.degenerate),
        degenerate_rate_background: rate(&background, |r| r.uncertainty.degenerate),
        records,
    })
}

/// Accuracy of a fixed global weight `(w_a, 1 − w_a)` on a scene.
pub fn fixed_weight_accuracy(
    scene: &Scene,
    head: &LinearHead,
    w_a: f64,
) -> Result<f64, SimError> {
    let w = crate::conformal::FusionWeights {
        w_a,
        w_b: 1.0 - w_a,
    };
    let last = scene.num_layers - 1;
    let mut correct = 0usize;
    let mut total = 0usize;
    for q in &scene.queries {
        let Some(label) = q.label else { continue };
        let fused = fuse_features(
            q.features[0][last].as_slice(),
            q.features[1][last].as_slice(),
            &w,
        )?;
        if head.predict(fused.as_slice())? == label {
            correct += 1;
        }
        total += 1;
    }
    if total == 0 {
        return Err(SimError::NoMatchedQueries);
    }
    Ok(correct as f64 / total as f64)
}

/// One grid point of a fixed-weight sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub weight_a: f64,
    /// Accuracy in percent.
    pub accuracy: f64,
}

/// Fixed-weight sweep over `{0.0, 0.1, …, 1.0}` with the optimal region
/// defined by an accuracy margin from the peak (in percentage points).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub peak_accuracy: f64,
    pub margin_pp: f64,
    /// Grid weights whose accuracy is within the margin of the peak.
    pub optimal_region: Vec<f64>,
}

pub const SWEEP_MARGIN_PP: f64 = 0.5;

impl SweepResult {
    /// Whether a (continuous) weight lies inside the region spanned by the
    /// qualifying grid points, padded by half a grid step.
    pub fn region_contains(&self, w_a: f64) -> bool {
        if self.optimal_region.is_empty() {
            return false;
        }
        let min = self.optimal_region.iter().copied().fold(f64::INFINITY, f64::min);
        let max = self
            .optimal_region
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        w_a >= min - 0.05 && w_a <= max + 0.05
    }
}

/// Sweeps the 11-point weight grid on a scene.
pub fn sweep_optimal_region(
    scene: &Scene,
    head: &LinearHead,
    margin_pp: f64,
) -> Result<SweepResult, SimError> {
    let mut points = Vec::with_capacity(11);
    for i in 0..=10 {
        let w_a = i as f64 / 10.0;
        let accuracy = fixed_weight_accuracy(scene, head, w_a)? * 100.0;
        points.push(SweepPoint { weight_a: w_a, accuracy });
    }
    let peak_accuracy = points.iter().map(|p| p.accuracy).fold(f64::MIN, f64::max);
    let optimal_region = points
        .iter()
        .filter(|p| p.accuracy >= peak_accuracy - margin_pp)
        .map(|p| p.weight_a)
        .collect();
    Ok(SweepResult {
        points,
        peak_accuracy,
        margin_pp,
        optimal_region,
    })
}

/// Per-condition summary emitted by the `simulate` command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    pub corruption: String,
    pub static_accuracy: f64,
    pub adaptive_accuracy: f64,
    pub mean_weight_a: f64,
    pub mean_weight_b: f64,
    pub clip_rate_matched: f64,
    pub clip_rate_background: f64,
    pub degenerate_rate_matched: f64,
    pub degenerate_rate_background: f64,
    pub per_query: Vec<QueryRecord>,
}

impl SimResult {
    pub fn from_runs(
        seed: u64,
        corruption: Corruption,
        static_run: &PipelineOutput,
        adaptive_run: PipelineOutput,
    ) -> Self {
        Self {
            seed,
            corruption: corruption.name().to_string(),
            static_accuracy: static_run.accuracy,
            adaptive_accuracy: adaptive_run.accuracy,
            mean_weight_a: adaptive_run.mean_weight_a,
            mean_weight_b: adaptive_run.mean_weight_b,
            clip_rate_matched: adaptive_run.clip_rate_matched,
            clip_rate_background: adaptive_run.clip_rate_background,
            degenerate_rate_matched: adaptive_run.degenerate_rate_matched,
            degenerate_rate_background: adaptive_run.degenerate_rate_background,
            per_query: adaptive_run.records,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sim result serializes")
    }
}

/// Sweep rows rendered as CSV (`weight_a, accuracy, in_optimal_region`),
/// with the seed in a leading comment.
pub fn sweep_to_csv(sweep: &SweepResult, seed: u64) -> String {
    let mut out = format!("# master_seed = {seed}\n");
    out.push_str("weight_a,accuracy,in_optimal_region\n");
    for p in &sweep.points {
        let inside = sweep
            .optimal_region
            .iter()
            .any(|&w| (w - p.weight_a).abs() < 1e-12);
        out.push_str(&format!("{},{},{}\n", p.weight_a, p.accuracy, inside));
    }
    out
}
