//! Central finite-difference gradient verification.

use super::NumericsError;

/// Result of a gradient check: the worst coordinate and its relative error
/// `|analytic − fd| / max(1, |fd|)`.
#[derive(Debug, Clone, Copy)]
pub struct GradientCheck {
    pub max_rel_error: f64,
    pub worst_coordinate: usize,
}

/// Compares `analytic` against central finite differences of `loss` around
/// `point`, coordinate by coordinate. `step` is the half-width of the central
/// stencil (1e-5 is a good default for losses of order one).
pub fn gradient_check(
    loss: &mut dyn FnMut(&[f64]) -> f64,
    analytic: &[f64],
    point: &[f64],
    step: f64,
) -> Result<GradientCheck, NumericsError> {
    assert!(step > 0.0, "finite-difference step must be positive");
    if analytic.len() != point.len() {
        return Err(NumericsError::DimensionMismatch {
            context: "gradient check",
            expected: point.len(),
            found: analytic.len(),
        });
    }
    let mut probe = point.to_vec();
    let mut worst = GradientCheck {
        max_rel_error: 0.0,
        worst_coordinate: 0,
    };
    for i in 0..point.len() {
        probe[i] = point[i] + step;
        let plus = loss(&probe);
        probe[i] = point[i] - step;
        let minus = loss(&probe);
        probe[i] = point[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(NumericsError::NonFiniteProbe { coordinate: i });
        }
        let fd = (plus - minus) / (2.0 * step);
        let rel = (analytic[i] - fd).abs() / fd.abs().max(1.0);
        if rel > worst.max_rel_error {
            worst = GradientCheck {
                max_rel_error: rel,
                worst_coordinate: i,
            };
        }
    }
    Ok(worst)
}
