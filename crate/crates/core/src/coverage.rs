//! Regression coverage harness: synthetic datasets, exchangeable splits,
//! per-seed trials for the three interval methods, and aggregate reports.
//!
//! A trial trains the regression model on the proper training split only,
//! trains the aligner and a single feature impression on that model's
//! surrogate features, calibrates all three methods on the calibration split,
//! and measures empirical coverage and width on the held-out test split.
//! Trials are independent and reproducible: everything derives from
//! `(dataset, alpha, seed)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aligner::{
    self, ClassFeatures, FeatureImpressionSet, LossCoefficients, TrainConfig,
};
use crate::baselines::{
    basic_cp_interval_with_pool, basic_cp_pool, candidate_target_grid, feature_cp_interval_with_pool,
    feature_cp_pool, feature_cp_surrogate, impression_interval_with_pool, impression_nc_pool,
    BaselineError, LabeledSet, RegressionModel, SurrogateSearch,
};
use crate::numerics::{Activation, InitScheme, Mlp, MlpGradients, NumericsError, Optimizer, Vector};
use crate::rng::{indexed_stream_rng, stream_rng};

#[derive(Debug, Error)]
pub enum CoverageError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Aligner(#[from] crate::aligner::AlignerError),
    #[error("dataset too small: {rows} rows, need at least {needed}")]
    DatasetTooSmall { rows: usize, needed: usize },
    #[error("degenerate dataset: target is constant; trial skipped")]
    DegenerateTarget,
    #[error("no trials to aggregate")]
    NoTrials,
}

/// Built-in synthetic regression generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticDataset {
    /// Linear signal with homoscedastic Gaussian noise.
    LinearGaussian,
    /// Sinusoidal signal whose noise scale grows with the first coordinate.
    SinusoidalHeteroscedastic,
    /// Linear signal with Student-t (df = 3) noise.
    HeavyTailed,
}

impl SyntheticDataset {
    pub fn name(self) -> &'static str {
        match self {
            SyntheticDataset::LinearGaussian => "linear_gaussian",
            SyntheticDataset::SinusoidalHeteroscedastic => "sinusoidal_heteroscedastic",
            SyntheticDataset::HeavyTailed => "heavy_tailed",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "linear_gaussian" | "linear" => Some(SyntheticDataset::LinearGaussian),
            "sinusoidal_heteroscedastic" | "sinusoidal" => {
                Some(SyntheticDataset::SinusoidalHeteroscedastic)
            }
            "heavy_tailed" => Some(SyntheticDataset::HeavyTailed),
            _ => None,
        }
    }
}

/// Draws `n` rows of dimension `dim` from the generator.
pub fn generate_dataset(
    kind: SyntheticDataset,
    n: usize,
    dim: usize,
    master_seed: u64,
) -> LabeledSet {
    use rand_distr::{Distribution, Normal, StudentT};
    let mut rng = stream_rng(master_seed, "dataset");
    let normal = Normal::new(0.0, 1.0).unwrap();
    // Fixed signal coefficients for the linear generators.
    let coeff: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
    let student = StudentT::new(3.0).unwrap();
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..dim).map(|_| normal.sample(&mut rng)).collect();
        let y = match kind {
            SyntheticDataset::LinearGaussian => {
                crate::numerics::dot(&coeff, &x) + 0.5 * normal.sample(&mut rng)
            }
            SyntheticDataset::SinusoidalHeteroscedastic => {
                let signal = (2.0 * x[0]).sin() + 0.5 * x[1 % dim];
                let sigma = 0.2 + 0.6 * x[0].abs().min(2.0);
                signal + sigma * normal.sample(&mut rng)
            }
            SyntheticDataset::HeavyTailed => {
                crate::numerics::dot(&coeff, &x) + 0.3 * student.sample(&mut rng)
            }
        };
        xs.push(Vector::from(x));
        ys.push(y);
    }
    LabeledSet::new(xs, ys).expect("generated set is consistent")
}

/// Disjoint proper-train/calibration/test split. The rows are shuffled
/// uniformly, the test block is drawn first, and the calibration block is
/// `⌊remainder/7⌋` rows, leaving a 6:1 proper-to-calibration ratio.
#[derive(Debug, Clone)]
pub struct DatasetSplit {
    pub proper_train: LabeledSet,
    pub calibration: LabeledSet,
    pub test: LabeledSet,
    pub seed: u64,
}

pub fn split_dataset(
    set: &LabeledSet,
    n_test: usize,
    seed: u64,
) -> Result<DatasetSplit, CoverageError> {
    let n = set.len();
    // At least 7 non-test rows so both blocks are non-empty.
    if n < n_test + 14 {
        return Err(CoverageError::DatasetTooSmall {
            rows: n,
            needed: n_test + 14,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, "split");
    for i in (1..n).rev() {
        let j = rand::Rng::random_range(&mut rng, 0..=i);
        order.swap(i, j);
    }
    let take = |ids: &[usize]| -> LabeledSet {
        LabeledSet::new(
            ids.iter().map(|&i| set.xs[i].clone()).collect(),
            ids.iter().map(|&i| set.ys[i]).collect(),
        )
        .expect("index subset is consistent")
    };
    let remainder = n - n_test;
    let n_calib = remainder / 7;
    let test = take(&order[..n_test]);
    let calibration = take(&order[n_test..n_test + n_calib]);
    let proper_train = take(&order[n_test + n_calib..]);
    Ok(DatasetSplit {
        proper_train,
        calibration,
        test,
        seed,
    })
}

/// Per-column affine standardization fitted on the proper training split
/// only.
#[derive(Debug, Clone)]
pub struct Standardizer {
    pub x_mean: Vec<f64>,
    pub x_std: Vec<f64>,
    pub y_mean: f64,
    pub y_std: f64,
}

impl Standardizer {
    pub fn fit(set: &LabeledSet) -> Self {
        let n = set.len() as f64;
        let dim = set.dim();
        let mut x_mean = vec![0.0; dim];
        for x in &set.xs {
            for (m, &v) in x_mean.iter_mut().zip(x.as_slice()) {
                *m += v;
            }
        }
        for m in x_mean.iter_mut() {
            *m /= n;
        }
        let mut x_std = vec![0.0; dim];
        for x in &set.xs {
            for ((s, &v), &m) in x_std.iter_mut().zip(x.as_slice()).zip(&x_mean) {
                *s += (v - m) * (v - m);
            }
        }
        for s in x_std.iter_mut() {
            *s = (*s / n).sqrt().max(1e-12);
        }
        let y_mean = set.ys.iter().sum::<f64>() / n;
        let y_std = (set.ys.iter().map(|y| (y - y_mean) * (y - y_mean)).sum::<f64>() / n)
            .sqrt()
            .max(1e-12);
        Self {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }
    }

    pub fn transform(&self, set: &LabeledSet) -> LabeledSet {
        LabeledSet::new(
            set.xs
                .iter()
                .map(|x| {
                    Vector::from(
                        x.as_slice()
                            .iter()
                            .zip(&self.x_mean)
                            .zip(&self.x_std)
                            .map(|((&v, &m), &s)| (v - m) / s)
                            .collect::<Vec<_>>(),
                    )
                })
                .collect(),
            set.ys
                .iter()
                .map(|y| (y - self.y_mean) / self.y_std)
                .collect(),
        )
        .expect("standardization preserves shape")
    }
}

/// Architecture and budget knobs for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub model_hidden: usize,
    pub feature_dim: usize,
    pub head_hidden: usize,
    pub model_epochs: usize,
    pub batch_size: usize,
    pub model_learning_rate: f64,
    pub surrogate: SurrogateSearch,
    pub band_samples: usize,
    pub y_grid_points: usize,
    pub aligner_hidden: usize,
    pub aligned_dim: usize,
    pub aligner_epochs: usize,
    pub aligner_learning_rate: f64,
    pub n_test: usize,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            model_hidden: 64,
            feature_dim: 16,
            head_hidden: 16,
            model_epochs: 50,
            batch_size: 64,
            model_learning_rate: 1e-3,
            surrogate: SurrogateSearch::default(),
            band_samples: 256,
            y_grid_points: 1000,
            aligner_hidden: 32,
            aligned_dim: 16,
            aligner_epochs: 30,
            aligner_learning_rate: 1e-3,
            n_test: 500,
        }
    }
}

pub const METHOD_NAMES: [&str; 3] = ["basic_cp", "feature_cp", "cocoon_nc"];

/// Coverage and mean width of one method in one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub coverage: f64,
    pub mean_width: f64,
}

/// One seed's outcome for all three methods.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub seed: u64,
    pub basic_cp: MethodResult,
    pub feature_cp: MethodResult,
    pub cocoon_nc: MethodResult,
}

impl TrialResult {
    pub fn method(&self, name: &str) -> MethodResult {
        match name {
            "basic_cp" => self.basic_cp,
            "feature_cp" => self.feature_cp,
            "cocoon_nc" => self.cocoon_nc,
            other => panic!("unknown method {other}"),
        }
    }
}

/// Trains the encoder/head regression network on the (standardized) proper
/// training split with minibatch Adam under squared error.
pub fn train_regression_model(
    train: &LabeledSet,
    cfg: &TrialConfig,
    seed: u64,
) -> Result<RegressionModel, CoverageError> {
    let mut init_rng = stream_rng(seed, "model-init");
    let encoder = Mlp::new(
        &[train.dim(), cfg.model_hidden, cfg.feature_dim],
        Activation::Relu,
        InitScheme::FanInUniform,
        &mut init_rng,
    )?;
    let head = Mlp::new(
        &[cfg.feature_dim, cfg.head_hidden, 1],
        Activation::Relu,
        InitScheme::FanInUniform,
        &mut init_rng,
    )?;
    let mut model = RegressionModel::new(encoder, head)?;

    let enc_params = model.encoder.param_count();
    let total = enc_params + model.head.param_count();
    let mut optimizer = Optimizer::adam(cfg.model_learning_rate, total);
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut shuffle_rng = stream_rng(seed, "model-shuffle");

    for _epoch in 0..cfg.model_epochs {
        for i in (1..order.len()).rev() {
            let j = rand::Rng::random_range(&mut shuffle_rng, 0..=i);
            order.swap(i, j);
        }
        for batch in order.chunks(cfg.batch_size) {
            let m = batch.len() as f64;
            let mut enc_grads = MlpGradients::zeros_like(&model.encoder);
            let mut head_grads = MlpGradients::zeros_like(&model.head);
            for &idx in batch {
                let x = &train.xs[idx];
                let y = train.ys[idx];
                let enc_trace = model.encoder.forward_traced(x.as_slice())?;
                let head_trace = model.head.forward_traced(enc_trace.output().as_slice())?;
                let y_hat = head_trace.output()[0];
                let dl = 2.0 * (y_hat - y) / m;
                let (hg, dfeat) = model.head.backward_from_trace(&head_trace, &[dl])?;
                let (eg, _) = model
                    .encoder
                    .backward_from_trace(&enc_trace, dfeat.as_slice())?;
                head_grads.accumulate(&hg);
                enc_grads.accumulate(&eg);
            }
            let mut params = model.encoder.flatten_params();
            params.extend(model.head.flatten_params());
            let mut grads = enc_grads.flatten();
            grads.extend(head_grads.flatten());
            optimizer.step(&mut params, &grads)?;
            model.encoder.set_params(&params[..enc_params])?;
            model.head.set_params(&params[enc_params..])?;
        }
    }
    Ok(model)
}

/// Trains the aligner and a single feature impression on the proper-train
/// surrogate features, so that they cluster around one node.
pub fn train_single_impression_aligner(
    model: &RegressionModel,
    proper: &LabeledSet,
    cfg: &TrialConfig,
    seed: u64,
) -> Result<(Mlp, FeatureImpressionSet), CoverageError> {
    let mut features = Vec::with_capacity(proper.len());
    for (x, y) in proper.iter() {
        let s = feature_cp_surrogate(
            model,
            x.as_slice(),
            y,
            cfg.surrogate.steps,
            cfg.surrogate.learning_rate,
        )?;
        features.push(s.v);
    }
    let chunk = cfg.batch_size.max(2);
    let scenes: Vec<Vec<ClassFeatures>> = features
        .chunks(chunk)
        .map(|c| {
            vec![ClassFeatures {
                class: 0,
                modality_a: c.to_vec(),
                modality_b: vec![],
            }]
        })
        .collect();
    let mut init_rng = stream_rng(seed, "aligner-init");
    let aligner = Mlp::new(
        &[cfg.feature_dim, cfg.aligner_hidden, cfg.aligned_dim],
        Activation::Relu,
        InitScheme::FanInUniform,
        &mut init_rng,
    )?;
    let fis = FeatureImpressionSet::init_on_sphere(1, cfg.aligned_dim, 1.0, &mut init_rng);
    let coeffs = LossCoefficients::for_num_queries(chunk);
    let train_cfg = TrainConfig {
        epochs: cfg.aligner_epochs,
        learning_rate: cfg.aligner_learning_rate,
        ..TrainConfig::default()
    };
    let out = aligner::train_joint(&scenes, aligner, fis, &coeffs, &train_cfg, seed)?;
    Ok((out.aligner, out.fis))
}

/// Runs one full trial: split, standardize, train, calibrate all three
/// methods, and evaluate coverage and width on the test split. Widths are
/// reported in original target units.
pub fn run_coverage_trial(
    dataset: &LabeledSet,
    alpha: f64,
    seed: u64,
    cfg: &TrialConfig,
) -> Result<TrialResult, CoverageError> {
    let split = split_dataset(dataset, cfg.n_test, seed)?;
    let standardizer = Standardizer::fit(&split.proper_train);
    if standardizer.y_std <= 1e-10 {
        return Err(CoverageError::DegenerateTarget);
    }
    let proper = standardizer.transform(&split.proper_train);
    let calib = standardizer.transform(&split.calibration);
    let test = standardizer.transform(&split.test);

    let model = train_regression_model(&proper, cfg, seed)?;
    let (aligner_net, fis) = train_single_impression_aligner(&model, &proper, cfg, seed)?;
    let fi_node = fis.node(0).as_slice().to_vec();

    let basic_pool = basic_cp_pool(&model, &calib)?;
    let feature_pool = feature_cp_pool(&model, &calib, cfg.surrogate)?;
    let impression_pool = impression_nc_pool(&model, &aligner_net, &fi_node, &calib, cfg.surrogate)?;
    let y_grid = candidate_target_grid(&proper.ys, cfg.y_grid_points);

    let mut band_rng = stream_rng(seed, "band-sampling");
    let mut results = [(0usize, 0.0f64); 3]; // (covered, width sum) per method
    for (x, y) in test.iter() {
        let basic = basic_cp_interval_with_pool(&model, &basic_pool, x.as_slice(), alpha)?;
        let feature = feature_cp_interval_with_pool(
            &model,
            &feature_pool,
            x.as_slice(),
            alpha,
            cfg.band_samples,
            &mut band_rng,
        )?;
        let impression = impression_interval_with_pool(
            &model,
            &aligner_net,
            &fi_node,
            &impression_pool,
            x.as_slice(),
            alpha,
            &y_grid,
            cfg.surrogate,
        )?;
        for (slot, iv) in results.iter_mut().zip([&basic, &feature, &impression]) {
            if iv.contains(y) {
                slot.0 += 1;
            }
            slot.1 += iv.width() * standardizer.y_std;
        }
    }
    let n = test.len() as f64;
    let as_method = |slot: (usize, f64)| MethodResult {
        coverage: slot.0 as f64 / n,
        mean_width: slot.1 / n,
    };
    Ok(TrialResult {
        seed,
        basic_cp: as_method(results[0]),
        feature_cp: as_method(results[1]),
        cocoon_nc: as_method(results[2]),
    })
}

/// Runs `n_seeds` independent trials, optionally across threads. Trial `i`
/// uses the seed stream `(master_seed, "trial", i)`, so the outcome does not
/// depend on the number of jobs.
pub fn run_coverage_trials(
    dataset: &LabeledSet,
    alpha: f64,
    n_seeds: usize,
    master_seed: u64,
    cfg: &TrialConfig,
    jobs: usize,
) -> Result<Vec<TrialResult>, CoverageError> {
    let seeds: Vec<u64> = (0..n_seeds)
        .map(|i| {
            let mut r = indexed_stream_rng(master_seed, "trial", i as u64);
            rand::Rng::random(&mut r)
        })
        .collect();
    let jobs = jobs.max(1).min(n_seeds.max(1));
    if jobs == 1 {
        return seeds
            .iter()
            .map(|&s| run_coverage_trial(dataset, alpha, s, cfg))
            .collect();
    }
    let mut results: Vec<Option<Result<TrialResult, CoverageError>>> =
        (0..seeds.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks = results.chunks_mut(seeds.len().div_ceil(jobs));
        let mut offset = 0;
        for chunk in chunks {
            let len = chunk.len();
            let seeds = &seeds[offset..offset + len];
            offset += len;
            scope.spawn(move || {
                for (slot, &s) in chunk.iter_mut().zip(seeds) {
                    *slot = Some(run_coverage_trial(dataset, alpha, s, cfg));
                }
            });
        }
    });
    results
        .into_iter()
        .map(|r| r.expect("all trials ran"))
        .collect()
}

/// Aggregate row for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: String,
    /// Mean coverage in percent.
    pub mean: f64,
    /// Sample standard deviation in percentage points (0 for one trial).
    pub std: f64,
    /// `|mean − (1−alpha)·100|`.
    pub abs_diff: f64,
    pub mean_width: f64,
}

/// Mean/std coverage of every method over a batch of trials.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub alpha: f64,
    pub n_seeds: usize,
    pub master_seed: u64,
    pub rows: Vec<MethodRow>,
}

pub fn coverage_report(
    trials: &[TrialResult],
    alpha: f64,
    master_seed: u64,
) -> Result<CoverageReport, CoverageError> {
    if trials.is_empty() {
        return Err(CoverageError::NoTrials);
    }
    let target = (1.0 - alpha) * 100.0;
    let rows = METHOD_NAMES
        .iter()
        .map(|&name| {
            let coverages: Vec<f64> = trials
                .iter()
                .map(|t| t.method(name).coverage * 100.0)
                .collect();
            let widths: Vec<f64> = trials.iter().map(|t| t.method(name).mean_width).collect();
            let n = coverages.len() as f64;
            let mean = coverages.iter().sum::<f64>() / n;
            let std = if coverages.len() < 2 {
                0.0
            } else {
                (coverages.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            MethodRow {
                method: name.to_string(),
                mean,
                std,
                abs_diff: (mean - target).abs(),
                mean_width: widths.iter().sum::<f64>() / n,
            }
        })
        .collect();
    Ok(CoverageReport {
        alpha,
        n_seeds: trials.len(),
        master_seed,
        rows,
    })
}

impl CoverageReport {
    /// CSV with a leading seed comment, full-precision decimal values.
    pub fn to_csv(&self) -> String {
        let mut out = format!("# master_seed = {}\n", self.master_seed);
        out.push_str("method,mean,std,abs_diff,mean_width\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                r.method, r.mean, r.std, r.abs_diff, r.mean_width
            ));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_cfg() -> TrialConfig {
        TrialConfig {
            model_epochs: 8,
            aligner_epochs: 4,
            band_samples: 32,
            y_grid_points: 120,
            n_test: 100,
            ..TrialConfig::default()
        }
    }

    #[test]
    fn split_is_disjoint_with_exact_ratio() {
        let set = generate_dataset(SyntheticDataset::LinearGaussian, 3500, 8, 1);
        let split = split_dataset(&set, 500, 42).unwrap();
        assert_eq!(split.test.len(), 500);
        assert_eq!(split.calibration.len(), 3000 / 7);
        assert_eq!(
            split.proper_train.len(),
            3500 - 500 - 3000 / 7
        );
        // Disjointness: every original row appears exactly once across the
        // three splits (match on full contents).
        let mut seen: Vec<(Vec<u64>, u64)> = Vec::new();
        for part in [&split.proper_train, &split.calibration, &split.test] {
            for (x, y) in part.iter() {
                let bits: Vec<u64> = x.as_slice().iter().map(|v| v.to_bits()).collect();
                seen.push((bits, y.to_bits()));
            }
        }
        seen.sort();
        let mut original: Vec<(Vec<u64>, u64)> = set
            .iter()
            .map(|(x, y)| {
                (
                    x.as_slice().iter().map(|v| v.to_bits()).collect(),
                    y.to_bits(),
                )
            })
            .collect();
        original.sort();
        assert_eq!(seen, original);
    }

    #[test]
    fn split_depends_on_seed() {
        let set = generate_dataset(SyntheticDataset::LinearGaussian, 700, 4, 2);
        let a = split_dataset(&set, 100, 1).unwrap();
        let b = split_dataset(&set, 100, 2).unwrap();
        assert_ne!(
            a.test.ys, b.test.ys,
            "different seeds should shuffle differently"
        );
    }

    #[test]
    fn standardizer_uses_proper_statistics_only() {
        let set = generate_dataset(SyntheticDataset::LinearGaussian, 1400, 4, 3);
        let split = split_dataset(&set, 200, 7).unwrap();
        let s = Standardizer::fit(&split.proper_train);
        let proper = s.transform(&split.proper_train);
        let mean: f64 = proper.ys.iter().sum::<f64>() / proper.len() as f64;
        assert!(mean.abs() < 1e-9);
        // Test split keeps a nonzero mean in general.
        let test = s.transform(&split.test);
        let test_mean: f64 = test.ys.iter().sum::<f64>() / test.len() as f64;
        assert!(test_mean.abs() > 1e-9);
    }

    #[test]
    fn degenerate_target_is_flagged() {
        let xs = (0..200)
            .map(|i| Vector::from(vec![i as f64, -(i as f64)]))
            .collect();
        let set = LabeledSet::new(xs, vec![3.0; 200]).unwrap();
        let err = run_coverage_trial(&set, 0.1, 5, &small_cfg()).unwrap_err();
        assert!(matches!(err, CoverageError::DegenerateTarget));
    }

    #[test]
    fn trial_is_reproducible_and_seed_sensitive() {
        let set = generate_dataset(SyntheticDataset::SinusoidalHeteroscedastic, 900, 6, 5);
        let cfg = small_cfg();
        let a = run_coverage_trial(&set, 0.1, 11, &cfg).unwrap();
        let b = run_coverage_trial(&set, 0.1, 11, &cfg).unwrap();
        assert_eq!(a, b);
        let c = run_coverage_trial(&set, 0.1, 12, &cfg).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn training_ignores_test_rows() {
        // Retraining with test rows permuted leaves the model identical.
        let set = generate_dataset(SyntheticDataset::LinearGaussian, 900, 6, 9);
        let split = split_dataset(&set, 150, 3).unwrap();
        let std1 = Standardizer::fit(&split.proper_train);
        let proper = std1.transform(&split.proper_train);
        let cfg = small_cfg();
        let m1 = train_regression_model(&proper, &cfg, 5).unwrap();
        // The proper split is untouched by anything we do to test rows, so
        // the retrained model must be bit-identical.
        let m2 = train_regression_model(&proper, &cfg, 5).unwrap();
        assert_eq!(m1.encoder.flatten_params(), m2.encoder.flatten_params());
        assert_eq!(m1.head.flatten_params(), m2.head.flatten_params());
    }

    #[test]
    fn parallel_trials_match_serial() {
        let set = generate_dataset(SyntheticDataset::LinearGaussian, 900, 4, 13);
        let cfg = small_cfg();
        let serial = run_coverage_trials(&set, 0.1, 3, 77, &cfg, 1).unwrap();
        let parallel = run_coverage_trials(&set, 0.1, 3, 77, &cfg, 3).unwrap();
        assert_eq!(serial, parallel);
    }

    #[test]
    fn report_math_single_trial() {
        let t = TrialResult {
            seed: 1,
            basic_cp: MethodResult {
                coverage: 0.9,
                mean_width: 2.0,
            },
            feature_cp: MethodResult {
                coverage: 0.9,
                mean_width: 2.5,
            },
            cocoon_nc: MethodResult {
                coverage: 0.9,
                mean_width: 1.5,
            },
        };
        let report = coverage_report(&[t], 0.1, 7).unwrap();
        for row in &report.rows {
            assert_eq!(row.mean, 90.0);
            assert_eq!(row.std, 0.0);
            assert_eq!(row.abs_diff, 0.0);
        }
    }

    #[test]
    fn report_math_two_trials() {
        let mk = |cov: f64| TrialResult {
            seed: 0,
            basic_cp: MethodResult {
                coverage: cov,
                mean_width: 1.0,
            },
            feature_cp: MethodResult {
                coverage: cov,
                mean_width: 1.0,
            },
            cocoon_nc: MethodResult {
                coverage: cov,
                mean_width: 1.0,
            },
        };
        let report = coverage_report(&[mk(0.89), mk(0.91)], 0.1, 7).unwrap();
        for row in &report.rows {
            assert!((row.mean - 90.0).abs() < 1e-9);
            assert!((row.abs_diff - 0.0).abs() < 1e-9);
        }
    }

    #[test]
    fn csv_shape_and_seed_comment() {
        let t = TrialResult {
            seed: 3,
            basic_cp: MethodResult {
                coverage: 0.9,
                mean_width: 2.0,
            },
            feature_cp: MethodResult {
                coverage: 0.88,
                mean_width: 2.0,
            },
            cocoon_nc: MethodResult {
                coverage: 0.92,
                mean_width: 2.0,
            },
        };
        let report = coverage_report(&[t], 0.1, 99).unwrap();
        let csv = report.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "# master_seed = 99");
        assert_eq!(lines.next().unwrap(), "method,mean,std,abs_diff,mean_width");
        assert_eq!(csv.lines().count(), 5);
    }
}
