//! First-order optimizers over flattened parameter vectors.
//!
//! Callers flatten whatever they train (network parameters, feature
//! impression nodes, or both concatenated) into one `&mut [f64]`; the
//! optimizer state is allocated once against that length and stays shaped to
//! it. A step with any non-finite gradient entry is refused outright so a
//! diverging loss cannot poison the parameters.

use serde::{Deserialize, Serialize};

use super::NumericsError;

/// Optimizer with per-parameter state. Plain gradient descent or Adam.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd {
        learning_rate: f64,
        step: u64,
    },
    Adam {
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        first_moment: Vec<f64>,
        second_moment: Vec<f64>,
        step: u64,
    },
}

impl Optimizer {
    pub fn sgd(learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Optimizer::Sgd {
            learning_rate,
            step: 0,
        }
    }

    /// Adam with the customary (0.9, 0.999, 1e-8) moment constants.
    pub fn adam(learning_rate: f64, param_count: usize) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Optimizer::Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            first_moment: vec![0.0; param_count],
            second_moment: vec![0.0; param_count],
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        match self {
            Optimizer::Sgd { step, .. } | Optimizer::Adam { step, .. } => *step,
        }
    }

    pub fn learning_rate(&self) -> f64 {
        match self {
            Optimizer::Sgd { learning_rate, .. } | Optimizer::Adam { learning_rate, .. } => {
                *learning_rate
            }
        }
    }

    /// Applies one update in the descent direction. Refuses the whole step if
    /// any gradient entry is non-finite.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<(), NumericsError> {
        if params.len() != grads.len() {
            return Err(NumericsError::DimensionMismatch {
                context: "optimizer gradients",
                expected: params.len(),
                found: grads.len(),
            });
        }
        if let Some(index) = grads.iter().position(|g| !g.is_finite()) {
            return Err(NumericsError::NonFiniteGradient { index });
        }
        match self {
            Optimizer::Sgd {
                learning_rate,
                step,
            } => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= *learning_rate * g;
                }
                *step += 1;
            }
            Optimizer::Adam {
                learning_rate,
                beta1,
                beta2,
                epsilon,
                first_moment,
                second_moment,
                step,
            } => {
                if first_moment.len() != params.len() {
                    return Err(NumericsError::DimensionMismatch {
                        context: "optimizer state",
                        expected: first_moment.len(),
                        found: params.len(),
                    });
                }
                *step += 1;
                let t = *step as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for i in 0..params.len() {
                    let g = grads[i];
                    first_moment[i] = *beta1 * first_moment[i] + (1.0 - *beta1) * g;
                    second_moment[i] = *beta2 * second_moment[i] + (1.0 - *beta2) * g * g;
                    let m_hat = first_moment[i] / bc1;
                    let v_hat = second_moment[i] / bc2;
                    params[i] -= *learning_rate * m_hat / (v_hat.sqrt() + *epsilon);
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_single_step_matches_hand_arithmetic() {
        let mut opt = Optimizer::sgd(0.1);
        let mut p = [1.0];
        opt.step(&mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        assert_eq!(opt.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        for mut opt in [Optimizer::sgd(0.5), Optimizer::adam(0.5, 3)] {
            let mut p = [1.0, -2.0, 3.0];
            opt.step(&mut p, &[0.0, 0.0, 0.0]).unwrap();
            assert_eq!(p, [1.0, -2.0, 3.0]);
        }
    }

    #[test]
    fn non_finite_gradient_refused_with_diagnostic() {
        let mut opt = Optimizer::adam(0.1, 2);
        let mut p = [1.0, 2.0];
        let err = opt.step(&mut p, &[0.0, f64::NAN]).unwrap_err();
        assert!(matches!(err, NumericsError::NonFiniteGradient { index: 1 }));
        assert_eq!(p, [1.0, 2.0]);
        assert_eq!(opt.step_count(), 0);
    }

    #[test]
    fn converges_on_quadratic() {
        // 200 steps on ‖p − 3‖² from p = 0 should land within 1e-3.
        for mut opt in [Optimizer::sgd(0.1), Optimizer::adam(0.15, 1)] {
            let mut p = [0.0];
            for _ in 0..200 {
                let g = [2.0 * (p[0] - 3.0)];
                opt.step(&mut p, &g).unwrap();
            }
            assert!(
                (p[0] - 3.0).abs() <= 1e-3,
                "optimizer left residual {}",
                (p[0] - 3.0).abs()
            );
            assert_eq!(opt.step_count(), 200);
        }
    }
}
