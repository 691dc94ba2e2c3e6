use crate::error::{shape_err, Error, Result};

/// `params + lr · grad`. Ascent by default; callers negate `grad` for descent.
pub fn sgd_step(params: &[f64], grad: &[f64], lr: f64) -> Result<Vec<f64>> {
    if params.len() != grad.len() {
        return Err(shape_err(format!(
            "params has {} entries, grad has {}",
            params.len(),
            grad.len()
        )));
    }
    if !(lr >= 0.0) {
        return Err(Error::Domain(format!("learning rate must be non-negative, got {lr}")));
    }
    if grad.iter().any(|g| g.is_nan()) {
        return Err(Error::Numeric("NaN in gradient".into()));
    }
    Ok(params.iter().zip(grad).map(|(p, g)| p + lr * g).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn basic_step() {
        let out = sgd_step(&[1.0, 2.0], &[1.0, -1.0], 0.1).unwrap();
        assert!((out[0] - 1.1).abs() < 1e-15 && (out[1] - 1.9).abs() < 1e-15);
    }

    #[test]
    fn zero_lr_is_identity() {
        assert_eq!(sgd_step(&[1.0, 2.0], &[5.0, 5.0], 0.0).unwrap(), vec![1.0, 2.0]);
    }

    #[test]
    fn two_steps_equal_one_summed_step() {
        let p = [0.3, -0.7, 1.1];
        let g1 = [0.5, 0.25, -1.0];
        let g2 = [-0.125, 0.5, 0.75];
        let two = sgd_step(&sgd_step(&p, &g1, 0.5).unwrap(), &g2, 0.5).unwrap();
        let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
        let one = sgd_step(&p, &sum, 0.5).unwrap();
        for (a, b) in two.iter().zip(&one) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn nan_gradient_rejected() {
        assert!(matches!(sgd_step(&[1.0], &[f64::NAN], 0.1), Err(Error::Numeric(_))));
        assert!(sgd_step(&[1.0], &[1.0, 2.0], 0.1).is_err());
    }
}
