use crate::error::{Error, Result};
use crate::features::FeatureVector;

/// Mean over pixels and channels of the squared difference.
pub fn mse_loss(rendered: &[[f64; 3]], truth: &[[f64; 3]]) -> Result<f64> {
    if rendered.is_empty() || rendered.len() != truth.len() {
        return Err(Error::Domain(format!(
            "mse needs equal non-empty pixel lists, got {} and {}",
            rendered.len(),
            truth.len()
        )));
    }
    let sum: f64 = rendered
        .iter()
        .zip(truth)
        .flat_map(|(a, b)| (0..3).map(move |k| (a[k] - b[k]).powi(2)))
        .sum();
    Ok(sum / (3 * rendered.len()) as f64)
}

/// `λ (1 - v_kᵀ v_u)` between a known-view feature and a rendered-view feature.
pub fn semantic_consistency_loss(v_known: &FeatureVector, v_rendered: &FeatureVector, lambda: f64) -> Result<f64> {
    Ok(lambda * (1.0 - v_known.dot(v_rendered)?))
}

/// `λ (1 - v_uᵀ v̂_u)` between a rendered-view feature and the interpolated target.
pub fn manifold_loss(v_rendered: &FeatureVector, v_interpolated: &FeatureVector, lambda: f64) -> Result<f64> {
    Ok(lambda * (1.0 - v_rendered.dot(v_interpolated)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn mse_examples() {
        let a = [[0.2, 0.4, 0.6], [0.1, 0.1, 0.9]];
        assert_eq!(mse_loss(&a, &a).unwrap(), 0.0);
        assert_eq!(mse_loss(&[[0.0; 3]; 4], &[[1.0; 3]; 4]).unwrap(), 1.0);
        let r = [[0.5, 0.0, 0.0], [0.0, 0.0, 0.0]];
        let t = [[0.0, 0.0, 0.0], [0.0, 0.5, 0.0]];
        assert_abs_diff_eq!(mse_loss(&r, &t).unwrap(), 0.25 / 3.0, epsilon = 1e-15);
        assert!(mse_loss(&r, &t[..1]).is_err());
        assert!(mse_loss(&[], &[]).is_err());
    }

    #[test]
    fn semantic_consistency_examples() {
        let v = FeatureVector(vec![0.6, 0.8]);
        assert_abs_diff_eq!(semantic_consistency_loss(&v, &v, 0.1).unwrap(), 0.0, epsilon = 1e-16);
        let x = FeatureVector(vec![1.0, 0.0]);
        let half = FeatureVector(vec![0.5, 0.75f64.sqrt()]);
        assert_abs_diff_eq!(semantic_consistency_loss(&x, &half, 0.1).unwrap(), 0.05, epsilon = 1e-15);
        let neg = FeatureVector(vec![-1.0, 0.0]);
        assert_abs_diff_eq!(semantic_consistency_loss(&x, &neg, 0.1).unwrap(), 0.2, epsilon = 1e-15);
        assert!(semantic_consistency_loss(&x, &FeatureVector(vec![1.0]), 0.1).is_err());
    }

    #[test]
    fn manifold_examples() {
        let v = FeatureVector(vec![0.6, 0.8]);
        assert_abs_diff_eq!(manifold_loss(&v, &v, 0.1).unwrap(), 0.0, epsilon = 1e-16);
        let shrunk = FeatureVector(vec![0.54, 0.72]);
        assert_abs_diff_eq!(manifold_loss(&v, &shrunk, 0.1).unwrap(), 0.01, epsilon = 1e-15);
        assert!(manifold_loss(&v, &FeatureVector(vec![1.0]), 0.1).is_err());
    }
}
