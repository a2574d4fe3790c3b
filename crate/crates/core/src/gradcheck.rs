//! Central finite-difference gradient checks.
//!
//! The check is only meaningful where the function is differentiable.
//! Functions with kinks (ReLU, `|x|`) give arbitrary results when a
//! perturbation straddles the kink; `|x|` at `x = 0` is the canonical
//! unsupported point.

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GradCheckError {
    #[error("function is not finite at coordinate {coord} (offset {offset:e})")]
    NonFinite { coord: usize, offset: f64 },
    #[error("analytic gradient has length {got}, expected {expected}")]
    Length { expected: usize, got: usize },
    #[error("finite-difference step must be positive, got {0}")]
    Step(f64),
}

/// Maximum over coordinates of `|analytic − fd| / max(1, |fd|)`.
///
/// `f` maps a point to its value; `analytic` is the gradient at `point`.
pub fn finite_diff_check(
    mut f: impl FnMut(&[f64]) -> f64,
    analytic: &[f64],
    point: &[f64],
    step: f64,
) -> Result<f64, GradCheckError> {
    if !(step > 0.0) {
        return Err(GradCheckError::Step(step));
    }
    if analytic.len() != point.len() {
        return Err(GradCheckError::Length {
            expected: point.len(),
            got: analytic.len(),
        });
    }
    let mut x = point.to_vec();
    let mut worst = 0.0f64;
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(&x);
        x[i] = orig - step;
        let minus = f(&x);
        x[i] = orig;
        if !plus.is_finite() {
            return Err(GradCheckError::NonFinite {
                coord: i,
                offset: step,
            });
        }
        if !minus.is_finite() {
            return Err(GradCheckError::NonFinite {
                coord: i,
                offset: -step,
            });
        }
        let fd = (plus - minus) / (2.0 * step);
        let err = (analytic[i] - fd).abs() / fd.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let err = finite_diff_check(|x| x[0] * x[0], &[6.0], &[3.0], 1e-5).unwrap();
        assert!(err <= 1e-6, "{err}");
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let err = finite_diff_check(|x| x[0] * x[0], &[5.0], &[3.0], 1e-5).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn abs_at_zero_is_not_a_valid_check_point() {
        // The symmetric difference of |x| at 0 is 0, so any subgradient other
        // than 0 "fails" and 0 "passes"; neither result means anything.
        let fd_says = finite_diff_check(|x| x[0].abs(), &[0.0], &[0.0], 1e-5).unwrap();
        let right_derivative = finite_diff_check(|x| x[0].abs(), &[1.0], &[0.0], 1e-5).unwrap();
        assert_eq!(fd_says, 0.0);
        assert_eq!(right_derivative, 1.0);
    }

    #[test]
    fn non_finite_values_are_reported() {
        let err = finite_diff_check(|x| x[0].ln(), &[1.0], &[0.0], 1e-5).unwrap_err();
        assert!(matches!(err, GradCheckError::NonFinite { coord: 0, .. }));
    }
}
