use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaProjection {
    /// One row per sample, `k` coordinates each.
    pub projected: Vec<Vec<f64>>,
    /// Unit principal directions, one per component.
    pub components: Vec<Vec<f64>>,
    /// Variance share of each component, nonincreasing.
    pub explained_variance_ratio: Vec<f64>,
    pub mean: Vec<f64>,
}

/// Rescales every column to zero mean and unit variance; constant columns
/// become all zeros.
pub fn standardize(samples: &[Vec<f64>]) -> Vec<Vec<f64>> {
    if samples.is_empty() {
        return Vec::new();
    }
    let n = samples.len() as f64;
    let dim = samples[0].len();
    let mean: Vec<f64> = (0..dim).map(|j| samples.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    let sd: Vec<f64> = (0..dim)
        .map(|j| (samples.iter().map(|r| (r[j] - mean[j]).powi(2)).sum::<f64>() / n).sqrt())
        .collect();
    samples
        .iter()
        .map(|r| {
            (0..dim)
                .map(|j| if sd[j] > 0.0 { (r[j] - mean[j]) / sd[j] } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Projects mean-centred samples onto their top `k` principal directions.
/// Each direction's sign is fixed so that its largest-magnitude entry is
/// positive.
pub fn pca_diagnostic(samples: &[Vec<f64>], k: usize) -> Result<PcaProjection> {
    if samples.len() < 2 {
        return Err(Error::InvalidInput(format!("PCA needs at least 2 samples, got {}", samples.len())));
    }
    let dim = samples[0].len();
    if samples.iter().any(|r| r.len() != dim) {
        return Err(Error::InvalidInput("PCA samples have differing feature counts".into()));
    }
    if k == 0 || dim < k {
        return Err(Error::InvalidInput(format!("cannot take {k} components of {dim}-dimensional data")));
    }
    if samples.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("PCA samples must be finite".into()));
    }
    let n = samples.len();
    let mean: Vec<f64> = (0..dim).map(|j| samples.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let centered = DMatrix::from_fn(n, dim, |i, j| samples[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n - 1) as f64;
    let total: f64 = cov.trace();
    let scale = samples.iter().flatten().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if !(total > 1e-24 * scale * scale) {
        return Err(Error::Degenerate("all samples are identical (rank 0)".into()));
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut components = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    for &c in &order[..k] {
        let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
        let lead = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        if lead < 0.0 {
            v.iter_mut().for_each(|x| *x = -*x);
        }
        components.push(v);
        ratios.push(eig.eigenvalues[c].max(0.0) / total);
    }
    let projected = (0..n)
        .map(|i| {
            components
                .iter()
                .map(|v| (0..dim).map(|j| centered[(i, j)] * v[j]).sum())
                .collect()
        })
        .collect();
    Ok(PcaProjection {
        projected,
        components,
        explained_variance_ratio: ratios,
        mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn rejects_bad_input() {
        assert!(pca_diagnostic(&[vec![1.0, 2.0]], 1).is_err());
        assert!(pca_diagnostic(&[vec![1.0], vec![2.0]], 2).is_err());
        assert!(matches!(
            pca_diagnostic(&[vec![3.0, 3.0], vec![3.0, 3.0], vec![3.0, 3.0]], 1),
            Err(Error::Degenerate(_))
        ));
        assert!(pca_diagnostic(&[vec![1.0, 2.0], vec![1.0]], 1).is_err());
    }

    #[test]
    fn axis_aligned_spread() {
        let pts: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, 0.5 * (i % 2) as f64, 7.0]).collect();
        let p = pca_diagnostic(&pts, 2).unwrap();
        assert!((p.components[0][0].abs() - 1.0).abs() < 1e-3);
        assert!(p.explained_variance_ratio[0] > p.explained_variance_ratio[1]);
        let s: f64 = p.explained_variance_ratio.iter().sum();
        assert!(s <= 1.0 + 1e-12);
    }

    #[test]
    fn standardize_gives_unit_columns() {
        let z = standardize(&[vec![1.0, 5.0], vec![3.0, 5.0]]);
        assert_eq!(z, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }

    fn cloud() -> impl Strategy<Value = Vec<Vec<f64>>> {
        (2usize..5).prop_flat_map(|d| proptest::collection::vec(proptest::collection::vec(-100.0f64..100.0, d), 3..25))
    }

    proptest! {
        #[test]
        fn projection_is_centered_and_ratios_descend(pts in cloud()) {
            let p = match pca_diagnostic(&pts, 2) {
                Ok(p) => p,
                Err(Error::Degenerate(_)) => return Ok(()),
                Err(e) => return Err(TestCaseError::fail(e.to_string())),
            };
            for c in 0..2 {
                let m = p.projected.iter().map(|r| r[c]).sum::<f64>() / pts.len() as f64;
                prop_assert!(m.abs() <= 1e-6, "column mean {}", m);
            }
            let r = &p.explained_variance_ratio;
            prop_assert!(r[0] >= r[1] && r[1] >= 0.0);
            prop_assert!(r[0] + r[1] <= 1.0 + 1e-9);
        }
    }
}
