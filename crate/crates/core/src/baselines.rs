//! Reference similarity measures: global-embedding cosine (VSE), cross
//! attention (CAM), and the closed-form Wasserstein distance between diagonal
//! Gaussians (PEM).

use ndarray::{Array1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragments::FragmentSet;

/// Floor on the attended-vector norm in [`cam_similarity`].
pub const CAM_NORM_FLOOR: f64 = 1e-12;

/// Cosine of the two global embeddings.
pub fn vse_similarity(a: &FragmentSet, b: &FragmentSet) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("dimension {}", a.dim()), b.dim()));
    }
    Ok(a.global().dot(&b.global()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CamConfig {
    /// Softmax temperature of the attention weights.
    pub temperature: f64,
    /// Target fragments whose cosine to the query is below this are ignored.
    pub sparsity_threshold: f64,
}

impl Default for CamConfig {
    fn default() -> Self {
        CamConfig {
            temperature: 0.1,
            sparsity_threshold: 0.0,
        }
    }
}

/// Cross-attention similarity: every query fragment attends over the target
/// fragments.
///
/// For query fragment `t_j` the candidate set keeps targets with
/// `v_i . t_j >= sparsity_threshold` (all targets if none qualify). Weights are
/// `eta_ij = softmax_i(v_i . t_j / temperature) / L`, rescaled by the norm of
/// the attended vector `sum_i eta_ij v_i`, and the result is
/// `sum_ij w_ij v_i . t_j`. Not symmetric in its arguments.
pub fn cam_similarity(query: &FragmentSet, target: &FragmentSet, cfg: &CamConfig) -> Result<f64> {
    if query.dim() != target.dim() {
        return Err(Error::shape(format!("dimension {}", query.dim()), target.dim()));
    }
    if !(cfg.temperature.is_finite() && cfg.temperature > 0.0) {
        return Err(Error::invalid(format!(
            "attention temperature must be positive, got {}",
            cfg.temperature
        )));
    }
    let targets = target.unit();
    let sims = query.unit().dot(&targets.t());
    let l = query.len() as f64;

    let mut total = 0.0;
    for row in sims.outer_iter() {
        let mut candidates: Vec<usize> = (0..row.len()).filter(|&i| row[i] >= cfg.sparsity_threshold).collect();
        if candidates.is_empty() {
            candidates = (0..row.len()).collect();
        }
        let max = candidates.iter().map(|&i| row[i]).fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = candidates
            .iter()
            .map(|&i| ((row[i] - max) / cfg.temperature).exp())
            .collect();
        let z: f64 = exp.iter().sum();
        let eta: Vec<f64> = exp.iter().map(|e| e / z / l).collect();

        let mut attended = Array1::<f64>::zeros(target.dim());
        for (&i, &w) in candidates.iter().zip(&eta) {
            attended.scaled_add(w, &targets.row(i));
        }
        let norm = attended.dot(&attended).sqrt().max(CAM_NORM_FLOOR);
        total += candidates
            .iter()
            .zip(&eta)
            .map(|(&i, &w)| w / norm * row[i])
            .sum::<f64>();
    }
    Ok(total)
}

/// A Gaussian with diagonal covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianEmbedding {
    pub mean: Array1<f64>,
    pub covariance_diag: Array1<f64>,
}

impl GaussianEmbedding {
    pub fn new(mean: Array1<f64>, covariance_diag: Array1<f64>) -> Result<Self> {
        if mean.len() != covariance_diag.len() {
            return Err(Error::shape(
                format!("covariance of dimension {}", mean.len()),
                covariance_diag.len(),
            ));
        }
        if covariance_diag.iter().any(|c| !(c.is_finite() && *c >= 0.0)) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::invalid(
                "Gaussian parameters must be finite with non-negative variances",
            ));
        }
        Ok(GaussianEmbedding { mean, covariance_diag })
    }

    /// Moment fit over the unit fragments: their mean and per-coordinate
    /// population variance.
    pub fn from_fragments(set: &FragmentSet) -> Self {
        let unit = set.unit();
        let mean = unit.mean_axis(Axis(0)).expect("non-empty set");
        let var = unit.var_axis(Axis(0), 0.0);
        GaussianEmbedding {
            mean,
            covariance_diag: var,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// `sqrt(||mu_a - mu_b||^2 + ||sigma_a - sigma_b||^2)` over the diagonal entries.
pub fn pem_wasserstein(a: &GaussianEmbedding, b: &GaussianEmbedding) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::shape(format!("dimension {}", a.dim()), b.dim()));
    }
    let sq = |x: &Array1<f64>, y: &Array1<f64>| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>();
    Ok((sq(&a.mean, &b.mean) + sq(&a.covariance_diag, &b.covariance_diag)).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn set(rows: &[Vec<f64>]) -> FragmentSet {
        FragmentSet::from_rows(rows, None, 0).unwrap()
    }

    #[test]
    fn vse_examples() {
        let a = set(&[vec![1.0, 0.0], vec![1.0, 0.2]]);
        assert_abs_diff_eq!(vse_similarity(&a, &a).unwrap(), 1.0, epsilon = 1e-12);
        let x = set(&[vec![1.0, 0.0]]);
        let y = set(&[vec![0.0, 1.0]]);
        let z = set(&[vec![-1.0, 0.0]]);
        assert_eq!(vse_similarity(&x, &y).unwrap(), 0.0);
        assert_eq!(vse_similarity(&x, &z).unwrap(), -1.0);
    }

    #[test]
    fn cam_single_fragments_is_cosine() {
        let a = set(&[vec![0.6, 0.8]]);
        let b = set(&[vec![1.0, 0.0]]);
        assert_abs_diff_eq!(
            cam_similarity(&a, &b, &CamConfig::default()).unwrap(),
            0.6,
            epsilon = 1e-12
        );
    }

    #[test]
    fn cam_concentrates_on_exact_match() {
        let query = set(&[vec![0.0, 1.0, 0.0]]);
        let target = set(&[vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]]);
        let cfg = CamConfig {
            temperature: 1e-3,
            ..CamConfig::default()
        };
        assert_abs_diff_eq!(cam_similarity(&query, &target, &cfg).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn cam_straight_line_evaluation() {
        // one query token, two targets with cosines 0.8 and 0.2
        let t = array![1.0, 0.0, 0.0];
        let v1 = array![0.8, 0.6, 0.0];
        let v2 = array![0.2, 0.0, (1.0f64 - 0.04).sqrt()];
        let query = FragmentSet::ingest(t.clone().insert_axis(Axis(0)), None, 0).unwrap();
        let target = FragmentSet::ingest(ndarray::stack![Axis(0), v1, v2], None, 1).unwrap();

        let tau = 0.1;
        let e1 = (0.8f64 / tau).exp();
        let e2 = (0.2f64 / tau).exp();
        let (eta1, eta2) = (e1 / (e1 + e2), e2 / (e1 + e2));
        let u = &v1 * eta1 + &v2 * eta2;
        let norm = u.dot(&u).sqrt();
        let expected = eta1 / norm * 0.8 + eta2 / norm * 0.2;

        let got = cam_similarity(&query, &target, &CamConfig::default()).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn cam_threshold_falls_back_to_all_targets() {
        let query = set(&[vec![1.0, 0.0]]);
        let target = set(&[vec![-1.0, 0.1], vec![-0.5, -1.0]]);
        let strict = CamConfig {
            sparsity_threshold: 0.5,
            ..CamConfig::default()
        };
        let open = CamConfig {
            sparsity_threshold: -2.0,
            ..CamConfig::default()
        };
        assert_eq!(
            cam_similarity(&query, &target, &strict).unwrap(),
            cam_similarity(&query, &target, &open).unwrap()
        );
    }

    #[test]
    fn pem_examples() {
        let g = GaussianEmbedding::new(array![1.0, 2.0], array![0.5, 0.5]).unwrap();
        assert_eq!(pem_wasserstein(&g, &g).unwrap(), 0.0);
        let h = GaussianEmbedding::new(array![4.0, 6.0], array![0.5, 0.5]).unwrap();
        assert_abs_diff_eq!(pem_wasserstein(&g, &h).unwrap(), 5.0, epsilon = 1e-12);
        let p = GaussianEmbedding::new(array![0.0, 0.0, 0.0], array![1.0, 1.0, 1.0]).unwrap();
        let q = GaussianEmbedding::new(array![0.0, 0.0, 0.0], array![1.0, 1.0, 3.0]).unwrap();
        assert_abs_diff_eq!(pem_wasserstein(&p, &q).unwrap(), 2.0, epsilon = 1e-12);
        assert!(pem_wasserstein(&g, &p).is_err());
        assert!(GaussianEmbedding::new(array![0.0], array![-1.0]).is_err());
    }
}
