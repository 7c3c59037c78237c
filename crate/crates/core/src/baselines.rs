//! Split-conformal regression baselines and the impression-based interval.
//!
//! All three methods share the same recipe: score every calibration instance
//! with a nonconformity function, take the `⌈(n+1)(1−α)⌉`-th smallest score,
//! and invert the score at the test point.
//!
//! - Basic: residual scores `|y_i − ŷ_i|`, interval `ŷ ± Q`.
//! - Feature-space: surrogate scores `‖f(x_i) − v*_i‖` where `v*` is found by
//!   gradient descent on `(g(v) − y)²` from `f(x)`; the interval is the image
//!   of the feature-space ball of radius `Q` under `g`, estimated by
//!   sampling.
//! - Impression-based: scores `‖h(v*(x_i, y_i)) − w*‖` against a single
//!   trained impression; the prediction set thresholds `NC(x′, y)` over a
//!   grid of candidate targets and the interval is its hull.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::conformal::{ConformalError, NcPool};
use crate::numerics::{Mlp, NumericsError, Vector};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Conformal(#[from] ConformalError),
    #[error("labeled set is empty")]
    EmptySet,
    #[error("labeled set rows disagree: {xs} inputs vs {ys} targets")]
    RaggedSet { xs: usize, ys: usize },
    #[error("regression head must output a scalar, got dimension {found}")]
    NonScalarHead { found: usize },
    #[error("candidate target grid is empty")]
    EmptyGrid,
}

/// Inputs paired with scalar targets.
#[derive(Debug, Clone, Default)]
pub struct LabeledSet {
    pub xs: Vec<Vector>,
    pub ys: Vec<f64>,
}

impl LabeledSet {
    pub fn new(xs: Vec<Vector>, ys: Vec<f64>) -> Result<Self, BaselineError> {
        if xs.len() != ys.len() {
            return Err(BaselineError::RaggedSet {
                xs: xs.len(),
                ys: ys.len(),
            });
        }
        Ok(Self { xs, ys })
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.xs.first().map_or(0, Vector::dim)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Vector, f64)> {
        self.xs.iter().zip(self.ys.iter().copied())
    }
}

/// Encoder/head split of a regression network: `y = g(f(x))`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionModel {
    pub encoder: Mlp,
    pub head: Mlp,
}

impl RegressionModel {
    pub fn new(encoder: Mlp, head: Mlp) -> Result<Self, BaselineError> {
        if head.output_dim() != 1 {
            return Err(BaselineError::NonScalarHead {
                found: head.output_dim(),
            });
        }
        if encoder.output_dim() != head.input_dim() {
            return Err(BaselineError::Numerics(NumericsError::DimensionMismatch {
                context: "encoder output vs head input",
                expected: head.input_dim(),
                found: encoder.output_dim(),
            }));
        }
        Ok(Self { encoder, head })
    }

    pub fn feature(&self, x: &[f64]) -> Result<Vector, NumericsError> {
        self.encoder.forward(x)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64, NumericsError> {
        let v = self.encoder.forward(x)?;
        Ok(self.head.forward(v.as_slice())?[0])
    }

    fn head_value(&self, v: &[f64]) -> Result<f64, NumericsError> {
        Ok(self.head.forward(v)?[0])
    }
}

/// A `[lower, upper]` interval at significance level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PredictionInterval {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    /// Set when an empty prediction set forced the fallback point interval.
    pub fallback: bool,
}

impl PredictionInterval {
    pub fn contains(&self, y: f64) -> bool {
        self.lower <= y && y <= self.upper
    }

    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }
}

/// Residual pool `|y_i − ŷ_i|` over the calibration set.
pub fn basic_cp_pool(model: &RegressionModel, calib: &LabeledSet) -> Result<NcPool, BaselineError> {
    if calib.is_empty() {
        return Err(BaselineError::EmptySet);
    }
    let mut scores = Vec::with_capacity(calib.len());
    for (x, y) in calib.iter() {
        scores.push((y - model.predict(x.as_slice())?).abs());
    }
    Ok(NcPool::from_scores(scores, 0)?)
}

/// Split-conformal residual interval `ŷ(x′) ± Q`.
pub fn basic_cp_interval(
    model: &RegressionModel,
    calib: &LabeledSet,
    x_new: &[f64],
    alpha: f64,
) -> Result<PredictionInterval, BaselineError> {
    let pool = basic_cp_pool(model, calib)?;
    basic_cp_interval_with_pool(model, &pool, x_new, alpha)
}

pub fn basic_cp_interval_with_pool(
    model: &RegressionModel,
    pool: &NcPool,
    x_new: &[f64],
    alpha: f64,
) -> Result<PredictionInterval, BaselineError> {
    let q = pool.quantile(alpha)?;
    let y_hat = model.predict(x_new)?;
    Ok(PredictionInterval {
        lower: y_hat - q,
        upper: y_hat + q,
        alpha,
        fallback: false,
    })
}

/// Gradient-descent search configuration for the feature-space surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurrogateSearch {
    pub steps: usize,
    pub learning_rate: f64,
}

impl Default for SurrogateSearch {
    fn default() -> Self {
        Self {
            steps: 50,
            learning_rate: 0.05,
        }
    }
}

/// Result of the surrogate search: best iterate and its loss.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub v: Vector,
    pub initial_loss: f64,
    pub final_loss: f64,
    /// Set when the line search could not descend any further before the
    /// step budget was used.
    pub stalled: bool,
}

/// Searches feature space for `v*` minimizing `(g(v) − y)²`, starting from
/// `f(x)`. Steps that fail to descend halve the rate; only descents are
/// accepted, so the final loss never exceeds the initial one.
pub fn feature_cp_surrogate(
    model: &RegressionModel,
    x: &[f64],
    y: f64,
    steps: usize,
    learning_rate: f64,
) -> Result<Surrogate, BaselineError> {
    let v0 = model.feature(x)?;
    surrogate_from(model, v0, y, steps, learning_rate)
}

fn surrogate_from(
    model: &RegressionModel,
    v0: Vector,
    y: f64,
    steps: usize,
    learning_rate: f64,
) -> Result<Surrogate, BaselineError> {
    let loss_of = |value: f64| (value - y) * (value - y);
    let mut v = v0;
    let mut value = model.head_value(v.as_slice())?;
    let initial_loss = loss_of(value);
    let mut loss = initial_loss;
    let mut lr = learning_rate;
    let mut stalled = false;
    for _ in 0..steps {
        if loss == 0.0 {
            break;
        }
        // d/dv (g(v) − y)² = 2 (g(v) − y) ∇g(v).
        let (_, grad) = model.head.backward(v.as_slice(), &[2.0 * (value - y)])?;
        let mut accepted = false;
        let mut trial_lr = lr;
        for _ in 0..30 {
            let mut trial = v.clone();
            trial.axpy(-trial_lr, grad.as_slice());
            let trial_value = model.head_value(trial.as_slice())?;
            let trial_loss = loss_of(trial_value);
            if trial_loss < loss {
                v = trial;
                value = trial_value;
                loss = trial_loss;
                lr = trial_lr;
                accepted = true;
                break;
            }
            trial_lr *= 0.5;
        }
        if !accepted {
            stalled = true;
            break;
        }
    }
    Ok(Surrogate {
        v,
        initial_loss,
        final_loss: loss,
        stalled,
    })
}

/// Pool of surrogate distances `‖f(x_i) − v*_i‖`.
pub fn feature_cp_pool(
    model: &RegressionModel,
    calib: &LabeledSet,
    search: SurrogateSearch,
) -> Result<NcPool, BaselineError> {
    if calib.is_empty() {
        return Err(BaselineError::EmptySet);
    }
    let mut scores = Vec::with_capacity(calib.len());
    for (x, y) in calib.iter() {
        let feat = model.feature(x.as_slice())?;
        let s = feature_cp_surrogate(model, x.as_slice(), y, search.steps, search.learning_rate)?;
        scores.push(feat.dist(&s.v));
    }
    Ok(NcPool::from_scores(scores, 0)?)
}

/// Feature-space interval: the image under `g` of the ball of radius `Q`
/// around `f(x′)`, estimated from `band_samples` random sphere directions
/// plus the center and the two gradient-aligned extremes (exact for a linear
/// head).
pub fn feature_cp_interval(
    model: &RegressionModel,
    calib: &LabeledSet,
    x_new: &[f64],
    alpha: f64,
    band_samples: usize,
    search: SurrogateSearch,
    rng: &mut ChaCha12Rng,
) -> Result<PredictionInterval, BaselineError> {
    let pool = feature_cp_pool(model, calib, search)?;
    feature_cp_interval_with_pool(model, &pool, x_new, alpha, band_samples, rng)
}

pub fn feature_cp_interval_with_pool(
    model: &RegressionModel,
    pool: &NcPool,
    x_new: &[f64],
    alpha: f64,
    band_samples: usize,
    rng: &mut ChaCha12Rng,
) -> Result<PredictionInterval, BaselineError> {
    let q = pool.quantile(alpha)?;
    let center = model.feature(x_new)?;
    let y_hat = model.head_value(center.as_slice())?;
    if q == 0.0 {
        return Ok(PredictionInterval {
            lower: y_hat,
            upper: y_hat,
            alpha,
            fallback: false,
        });
    }
    let dim = center.dim();
    let mut lo = y_hat;
    let mut hi = y_hat;
    let probe = |v: &[f64], lo: &mut f64, hi: &mut f64| -> Result<(), BaselineError> {
        let val = model.head_value(v)?;
        if val < *lo {
            *lo = val;
        }
        if val > *hi {
            *hi = val;
        }
        Ok(())
    };
    // Gradient-aligned extremes.
    let (_, grad) = model.head.backward(center.as_slice(), &[1.0])?;
    let gnorm = grad.norm();
    if gnorm > 0.0 {
        for sign in [1.0, -1.0] {
            let mut v = center.clone();
            v.axpy(sign * q / gnorm, grad.as_slice());
            probe(v.as_slice(), &mut lo, &mut hi)?;
        }
    }
    // Random sphere directions.
    let normal = rand_distr::StandardNormal;
    for _ in 0..band_samples {
        let mut dir: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(normal)).collect();
        let n = crate::numerics::norm(&dir).max(1e-12);
        for d in dir.iter_mut() {
            *d *= q / n;
        }
        let mut v = center.clone();
        v.axpy(1.0, &dir);
        probe(v.as_slice(), &mut lo, &mut hi)?;
    }
    Ok(PredictionInterval {
        lower: lo,
        upper: hi,
        alpha,
        fallback: false,
    })
}

/// Pool of impression distances `‖h(v*(x_i, y_i)) − w*‖` over calibration.
pub fn impression_nc_pool(
    model: &RegressionModel,
    aligner: &Mlp,
    fi: &[f64],
    calib: &LabeledSet,
    search: SurrogateSearch,
) -> Result<NcPool, BaselineError> {
    if calib.is_empty() {
        return Err(BaselineError::EmptySet);
    }
    let mut scores = Vec::with_capacity(calib.len());
    for (x, y) in calib.iter() {
        scores.push(impression_nc(model, aligner, fi, x.as_slice(), y, search)?);
    }
    Ok(NcPool::from_scores(scores, 0)?)
}

/// `NC(x, y) = ‖h(v*(x, y)) − w*‖` with the surrogate search making the
/// score y-dependent, so thresholding it over candidate targets yields a
/// valid split-conformal prediction set.
pub fn impression_nc(
    model: &RegressionModel,
    aligner: &Mlp,
    fi: &[f64],
    x: &[f64],
    y: f64,
    search: SurrogateSearch,
) -> Result<f64, BaselineError> {
    let s = feature_cp_surrogate(model, x, y, search.steps, search.learning_rate)?;
    let aligned = aligner.forward(s.v.as_slice())?;
    Ok(crate::numerics::dist(aligned.as_slice(), fi))
}

/// Impression-based interval: the hull of `{y ∈ grid : NC(x′, y) ≤ Q}`. An
/// empty set falls back to the point interval at `ŷ` with the flag set.
pub fn impression_interval(
    model: &RegressionModel,
    aligner: &Mlp,
    fi: &[f64],
    calib: &LabeledSet,
    x_new: &[f64],
    alpha: f64,
    y_grid: &[f64],
    search: SurrogateSearch,
) -> Result<PredictionInterval, BaselineError> {
    let pool = impression_nc_pool(model, aligner, fi, calib, search)?;
    impression_interval_with_pool(model, aligner, fi, &pool, x_new, alpha, y_grid, search)
}

#[allow(clippy::too_many_arguments)]
pub fn impression_interval_with_pool(
    model: &RegressionModel,
    aligner: &Mlp,
    fi: &[f64],
    pool: &NcPool,
    x_new: &[f64],
    alpha: f64,
    y_grid: &[f64],
    search: SurrogateSearch,
) -> Result<PredictionInterval, BaselineError> {
    if y_grid.is_empty() {
        return Err(BaselineError::EmptyGrid);
    }
    let q = pool.quantile(alpha)?;
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &y in y_grid {
        let nc = impression_nc(model, aligner, fi, x_new, y, search)?;
        if nc <= q {
            lo = lo.min(y);
            hi = hi.max(y);
        }
    }
    if lo > hi {
        let y_hat = model.predict(x_new)?;
        return Ok(PredictionInterval {
            lower: y_hat,
            upper: y_hat,
            alpha,
            fallback: true,
        });
    }
    Ok(PredictionInterval {
        lower: lo,
        upper: hi,
        alpha,
        fallback: false,
    })
}

/// Evenly spaced candidate targets spanning the training range widened by
/// two standard deviations on each side.
pub fn candidate_target_grid(train_ys: &[f64], points: usize) -> Vec<f64> {
    assert!(points >= 2 && !train_ys.is_empty());
    let n = train_ys.len() as f64;
    let mean = train_ys.iter().sum::<f64>() / n;
    let var = train_ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    let min = train_ys.iter().copied().fold(f64::INFINITY, f64::min) - 2.0 * std;
    let max = train_ys.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 2.0 * std;
    let step = (max - min) / (points as f64 - 1.0);
    (0..points).map(|i| min + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{Activation, InitScheme, Matrix};
    use crate::rng::stream_rng;

    /// y = c·x exactly, with identity encoder and linear head.
    fn linear_model(c: &[f64]) -> RegressionModel {
        let dim = c.len();
        let encoder = Mlp::identity(dim);
        let head = Mlp::from_layers(
            vec![Matrix::from_rows(vec![c.to_vec()]).unwrap()],
            vec![Vector::zeros(1)],
            Activation::Identity,
        )
        .unwrap();
        RegressionModel::new(encoder, head).unwrap()
    }

    fn linear_set(c: &[f64], n: usize, noise: f64, seed: u64) -> LabeledSet {
        let mut rng = stream_rng(seed, "baseline-linear-set");
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for _ in 0..n {
            let x: Vec<f64> = (0..c.len()).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = crate::numerics::dot(c, &x)
                + if noise > 0.0 {
                    rng.random_range(-noise..noise)
                } else {
                    0.0
                };
            xs.push(Vector::from(x));
            ys.push(y);
        }
        LabeledSet::new(xs, ys).unwrap()
    }

    #[test]
    fn perfect_model_degenerate_interval() {
        let model = linear_model(&[2.0, -1.0]);
        let calib = linear_set(&[2.0, -1.0], 40, 0.0, 1);
        let iv = basic_cp_interval(&model, &calib, &[1.0, 1.0], 0.1).unwrap();
        assert_eq!(iv.lower, iv.upper);
        assert_eq!(iv.lower, 1.0);
    }

    #[test]
    fn residual_pool_quantile_interval() {
        // Pool {1..9}, alpha = 0.1 → Q = 9, interval = ŷ ± 9.
        let pool = NcPool::from_scores((1..=9).map(f64::from).collect(), 0).unwrap();
        let model = linear_model(&[1.0]);
        let iv = basic_cp_interval_with_pool(&model, &pool, &[10.0], 0.1).unwrap();
        assert_eq!((iv.lower, iv.upper), (1.0, 19.0));
    }

    #[test]
    fn surrogate_identity_decoder_hits_target() {
        // g = identity on a 1-D feature: v* converges to y itself.
        let model = linear_model(&[1.0]);
        let s = feature_cp_surrogate(&model, &[0.2], 3.0, 200, 0.4).unwrap();
        assert!((s.v[0] - 3.0).abs() <= 1e-6, "{}", s.v[0]);
        assert!(s.final_loss <= 1e-12);
    }

    #[test]
    fn surrogate_fixed_point_when_already_exact() {
        let model = linear_model(&[2.0]);
        let x = [1.5];
        let y = model.predict(&x).unwrap();
        let s = feature_cp_surrogate(&model, &x, y, 50, 0.05).unwrap();
        assert_eq!(s.v[0], 1.5);
        assert_eq!(s.final_loss, 0.0);
        assert_eq!(s.initial_loss, 0.0);
    }

    #[test]
    fn surrogate_descends_on_random_head() {
        let mut rng = stream_rng(5, "surrogate-random");
        let encoder = Mlp::new(
            &[3, 8, 4],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let head = Mlp::new(
            &[4, 8, 1],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let model = RegressionModel::new(encoder, head).unwrap();
        for i in 0..20 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..1.0)).collect();
            let y = rng.random_range(-1.0..1.0);
            let s = feature_cp_surrogate(&model, &x, y, 50, 0.05).unwrap();
            assert!(
                s.final_loss <= s.initial_loss,
                "case {i}: {} > {}",
                s.final_loss,
                s.initial_loss
            );
        }
    }

    #[test]
    fn feature_interval_zero_quantile_degenerates() {
        let model = linear_model(&[1.0, 1.0]);
        let pool = NcPool::from_scores(vec![0.0, 0.0, 0.0], 0).unwrap();
        let mut rng = stream_rng(9, "band");
        let iv =
            feature_cp_interval_with_pool(&model, &pool, &[1.0, 2.0], 0.25, 32, &mut rng).unwrap();
        assert_eq!(iv.lower, iv.upper);
        assert_eq!(iv.lower, 3.0);
    }

    #[test]
    fn feature_interval_width_matches_linear_oracle() {
        // For a linear head with coefficients c and ball radius Q, the exact
        // band is 2·Q·‖c‖ wide; the gradient-aligned probes recover it.
        let c = [0.8, -0.5, 1.2, 0.3];
        let model = linear_model(&c);
        let q = 0.7;
        let pool = NcPool::from_scores(vec![q; 9], 0).unwrap();
        let mut rng = stream_rng(10, "band-linear");
        let iv =
            feature_cp_interval_with_pool(&model, &pool, &[0.5, 0.5, 0.5, 0.5], 0.1, 64, &mut rng)
                .unwrap();
        let expected = 2.0 * q * crate::numerics::norm(&c);
        assert!(
            (iv.width() - expected).abs() <= 1e-9,
            "width {} vs oracle {}",
            iv.width(),
            expected
        );
    }

    #[test]
    fn impression_interval_self_inclusion_at_median() {
        // A calibration point whose score sits at the median is inside its
        // own prediction set at alpha = 0.5.
        let mut rng = stream_rng(21, "self-inclusion");
        let encoder = Mlp::new(
            &[2, 6, 3],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let head = Mlp::new(
            &[3, 6, 1],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let model = RegressionModel::new(encoder, head).unwrap();
        let aligner = Mlp::new(
            &[3, 6, 3],
            Activation::Tanh,
            InitScheme::FanInUniform,
            &mut rng,
        )
        .unwrap();
        let fi = [0.1, -0.2, 0.3];
        let calib = {
            let mut xs = Vec::new();
            let mut ys = Vec::new();
            for _ in 0..21 {
                let x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                ys.push(rng.random_range(-1.0..1.0));
                xs.push(Vector::from(x));
            }
            LabeledSet::new(xs, ys).unwrap()
        };
        let search = SurrogateSearch::default();
        let pool = impression_nc_pool(&model, &aligner, &fi, &calib, search).unwrap();

        // Locate the median-scored calibration point.
        let median_score = pool.scores()[pool.len() / 2];
        let (x_med, y_med) = calib
            .iter()
            .find(|(x, y)| {
                (impression_nc(&model, &aligner, &fi, x.as_slice(), *y, search).unwrap()
                    - median_score)
                    .abs()
                    < 1e-12
            })
            .expect("median point exists");

        // The prediction set is membership over the candidate grid, so the
        // grid must contain the target being tested.
        let mut grid = candidate_target_grid(&calib.ys, 400);
        grid.push(y_med);
        let iv = impression_interval_with_pool(
            &model,
            &aligner,
            &fi,
            &pool,
            x_med.as_slice(),
            0.5,
            &grid,
            search,
        )
        .unwrap();
        assert!(!iv.fallback);
        assert!(iv.contains(y_med), "{iv:?} vs y = {y_med}");
    }

    #[test]
    fn impression_interval_zero_pool_contains_prediction() {
        // All-zero pool: the set is {y : NC = 0}; with an identity-style
        // pipeline the hull contains the model prediction.
        let model = linear_model(&[1.0]);
        let aligner = Mlp::identity(1);
        let fi = [2.0];
        // NC(x, y) = |v*(x,y) − 2|; v* converges to y, so NC ≈ |y − 2| and
        // the accepted set is a small neighborhood of y = 2.
        let calib = LabeledSet::new(
            vec![Vector::from(vec![2.0]); 5],
            vec![2.0; 5],
        )
        .unwrap();
        let search = SurrogateSearch {
            steps: 400,
            learning_rate: 0.4,
        };
        let grid: Vec<f64> = (0..801).map(|i| i as f64 * 0.005).collect(); // [0, 4]
        let iv = impression_interval(&model, &aligner, &fi, &calib, &[2.0], 0.5, &grid, search)
            .unwrap();
        assert!(iv.contains(2.0), "{iv:?}");
    }

    #[test]
    fn intervals_nest_with_alpha() {
        let model = linear_model(&[1.5, -0.5]);
        let calib = linear_set(&[1.5, -0.5], 120, 0.4, 33);
        let x = [0.7, -0.3];
        let basic_wide = basic_cp_interval(&model, &calib, &x, 0.05).unwrap();
        let basic_narrow = basic_cp_interval(&model, &calib, &x, 0.4).unwrap();
        assert!(basic_wide.lower <= basic_narrow.lower);
        assert!(basic_wide.upper >= basic_narrow.upper);

        let pool = feature_cp_pool(&model, &calib, SurrogateSearch::default()).unwrap();
        let mut rng1 = stream_rng(44, "nest");
        let mut rng2 = stream_rng(44, "nest");
        let f_wide =
            feature_cp_interval_with_pool(&model, &pool, &x, 0.05, 64, &mut rng1).unwrap();
        let f_narrow =
            feature_cp_interval_with_pool(&model, &pool, &x, 0.4, 64, &mut rng2).unwrap();
        assert!(f_wide.lower <= f_narrow.lower && f_wide.upper >= f_narrow.upper);
    }

    #[test]
    fn basic_cp_coverage_on_noisy_linear_data() {
        // Small-scale coverage sanity; the full protocol runs in the
        // acceptance suite.
        let c = [1.0, 2.0];
        let model = linear_model(&c);
        let calib = linear_set(&c, 300, 1.0, 77);
        let test = linear_set(&c, 300, 1.0, 78);
        let pool = basic_cp_pool(&model, &calib).unwrap();
        let mut covered = 0;
        for (x, y) in test.iter() {
            let iv = basic_cp_interval_with_pool(&model, &pool, x.as_slice(), 0.1).unwrap();
            if iv.contains(y) {
                covered += 1;
            }
        }
        let coverage = covered as f64 / test.len() as f64;
        assert!((0.84..=0.97).contains(&coverage), "coverage {coverage}");
    }
}
