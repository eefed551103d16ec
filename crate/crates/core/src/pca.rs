//! PCA fitted on normalized training features and applied as a fixed
//! linear layer: one matrix multiply, zero bias, no component discarded.
//! Subset selection downstream decides which transformed features a voter
//! consumes; this module only rotates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalues smaller than this clamp to exactly 0 and count as
/// zero-variance features for selection purposes.
const ZERO_VARIANCE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PcaDoc", into = "PcaDoc")]
pub struct PcaModel {
    /// N x N orthonormal matrix; column k is the k-th principal direction.
    components: DMatrix<f64>,
    /// Per-component variances (covariance eigenvalues), sorted descending.
    variances: Vec<f64>,
}

impl PcaModel {
    pub fn dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn components(&self) -> &DMatrix<f64> {
        &self.components
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    fn validate(&self) -> Result<()> {
        let n = self.components.nrows();
        if self.components.ncols() != n {
            return Err(Error::Dimension(format!(
                "PCA components must be square, got {}x{}",
                n,
                self.components.ncols()
            )));
        }
        if self.variances.len() != n {
            return Err(Error::Dimension(format!(
                "{} variances for {n} components",
                self.variances.len()
            )));
        }
        if self.components.iter().any(|v| !v.is_finite()) {
            return Err(Error::validation("pca", "non-finite component entry"));
        }
        if self.variances.windows(2).any(|w| w[0] < w[1]) || self.variances.iter().any(|&v| v < 0.0)
        {
            return Err(Error::validation(
                "pca",
                "variances must be nonnegative and sorted descending",
            ));
        }
        let gram = self.components.transpose() * &self.components;
        let id = DMatrix::identity(n, n);
        if (gram - id).amax() > 1e-9 {
            return Err(Error::validation("pca", "components are not orthonormal"));
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct PcaDoc {
    /// Row-major component matrix.
    components: Vec<Vec<f64>>,
    variances: Vec<f64>,
}

impl From<PcaModel> for PcaDoc {
    fn from(m: PcaModel) -> Self {
        PcaDoc {
            components: m
                .components
                .row_iter()
                .map(|r| r.iter().copied().collect())
                .collect(),
            variances: m.variances,
        }
    }
}

impl TryFrom<PcaDoc> for PcaModel {
    type Error = Error;

    fn try_from(doc: PcaDoc) -> Result<Self> {
        let nrows = doc.components.len();
        let ncols = doc.components.first().map_or(0, Vec::len);
        if doc.components.iter().any(|r| r.len() != ncols) {
            return Err(Error::validation("pca", "ragged component matrix"));
        }
        let components =
            DMatrix::from_row_iterator(nrows, ncols, doc.components.into_iter().flatten());
        let model = PcaModel {
            components,
            variances: doc.variances,
        };
        model.validate()?;
        Ok(model)
    }
}

/// Fit PCA by eigendecomposition of the population covariance (divide by n)
/// of `x` (rows = samples). Deterministic: eigenpairs sorted by descending
/// eigenvalue, each component's largest-magnitude entry made positive.
pub fn pca_fit(x: &DMatrix<f64>) -> Result<PcaModel> {
    let (n, dim) = (x.nrows(), x.ncols());
    if n < 2 {
        return Err(Error::validation(
            "pca",
            format!("need >= 2 samples, got {n}"),
        ));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::validation("pca", "non-finite input"));
    }

    let mut centered = x.clone();
    for j in 0..dim {
        let mean = centered.column(j).sum() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    let mut cov = centered.transpose() * &centered / n as f64;
    // Enforce exact symmetry before the symmetric eigensolver.
    for i in 0..dim {
        for j in 0..i {
            let s = (cov[(i, j)] + cov[(j, i)]) / 2.0;
            cov[(i, j)] = s;
            cov[(j, i)] = s;
        }
    }

    let eigen = cov.symmetric_eigen();
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .partial_cmp(&eigen.eigenvalues[a])
            .unwrap()
            .then(a.cmp(&b))
    });

    let mut components = DMatrix::zeros(dim, dim);
    let mut variances = Vec::with_capacity(dim);
    for (k, &src) in order.iter().enumerate() {
        let col = eigen.eigenvectors.column(src);
        // Sign convention: the entry of largest magnitude (lowest index on
        // ties) is positive.
        let mut pivot = 0;
        for i in 1..dim {
            if col[i].abs() > col[pivot].abs() {
                pivot = i;
            }
        }
        let flip = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..dim {
            components[(i, k)] = flip * col[i];
        }
        let lambda = eigen.eigenvalues[src];
        variances.push(if lambda < ZERO_VARIANCE_EPS { 0.0 } else { lambda });
    }

    let model = PcaModel {
        components,
        variances,
    };
    model.validate()?;
    Ok(model)
}

/// Apply the fitted transform: `x * components`. Used identically for
/// training, validation, and test data.
pub fn pca_transform(m: &PcaModel, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if x.ncols() != m.dim() {
        return Err(Error::Dimension(format!(
            "input has {} columns, PCA expects {}",
            x.ncols(),
            m.dim()
        )));
    }
    Ok(x * &m.components)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_matrix(n: usize, dim: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = crate::seeding::derive_rng(seed, "test/pca", 0);
        // Correlated columns so the spectrum is nontrivial.
        DMatrix::from_fn(n, dim, |i, j| {
            let base = (i as f64 * 0.37 + j as f64).sin();
            base + rng.gen_range(-1.0..1.0) * (1.0 + j as f64 / 4.0)
        })
    }

    fn column_variances(x: &DMatrix<f64>) -> Vec<f64> {
        (0..x.ncols())
            .map(|j| {
                let col = x.column(j);
                let mean = col.sum() / x.nrows() as f64;
                col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / x.nrows() as f64
            })
            .collect()
    }

    #[test]
    fn collinear_columns_give_zero_variance() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 5.0, 5.0]);
        let m = pca_fit(&x).unwrap();
        assert_eq!(m.variances()[1], 0.0);
        assert!(m.variances()[0] > 0.0);
    }

    #[test]
    fn identity_covariance_gives_unit_variances() {
        // The four (+-1, +-1) rows have exactly identity covariance.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, -1.0, 1.0, -1.0, -1.0]);
        let m = pca_fit(&x).unwrap();
        for &v in m.variances() {
            assert!((v - 1.0).abs() < 1e-12, "variance {v}");
        }
    }

    #[test]
    fn transformed_covariance_is_diagonal_and_trace_preserved() {
        let x = random_matrix(200, 10, 77);
        let m = pca_fit(&x).unwrap();
        let t = pca_transform(&m, &x).unwrap();

        let n = x.nrows() as f64;
        let mut centered = t.clone();
        for j in 0..t.ncols() {
            let mean = centered.column(j).sum() / n;
            for i in 0..t.nrows() {
                centered[(i, j)] -= mean;
            }
        }
        let cov = centered.transpose() * &centered / n;
        for i in 0..10 {
            for j in 0..10 {
                if i != j {
                    assert!(cov[(i, j)].abs() < 1e-9, "off-diagonal ({i},{j})");
                }
            }
        }
        // Transformed column variances match the model's, descending.
        let tv = column_variances(&t);
        for (a, b) in tv.iter().zip(m.variances()) {
            assert!((a - b).abs() < 1e-9);
        }
        let raw_trace: f64 = column_variances(&x).iter().sum();
        assert!((tv.iter().sum::<f64>() - raw_trace).abs() < 1e-8);
    }

    #[test]
    fn components_are_orthonormal_and_reconstruction_exact() {
        let x = random_matrix(120, 8, 5);
        let m = pca_fit(&x).unwrap();
        let gram = m.components().transpose() * m.components();
        assert!((gram - DMatrix::identity(8, 8)).amax() < 1e-9);

        let t = pca_transform(&m, &x).unwrap();
        let back = &t * m.components().transpose();
        assert!((back - &x).amax() < 1e-8);
    }

    #[test]
    fn fit_is_deterministic_and_sign_fixed() {
        let x = random_matrix(90, 6, 13);
        let a = pca_fit(&x).unwrap();
        let b = pca_fit(&x).unwrap();
        assert_eq!(a, b);
        for k in 0..6 {
            let col = a.components().column(k);
            let max = col.iter().cloned().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(col.iter().any(|&v| v.abs() == max && v > 0.0));
        }
    }

    #[test]
    fn zero_rows_transform_to_zero() {
        let x = random_matrix(50, 4, 21);
        let m = pca_fit(&x).unwrap();
        let zero = DMatrix::zeros(1, 4);
        let t = pca_transform(&m, &zero).unwrap();
        assert!(t.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        assert!(pca_fit(&DMatrix::from_row_slice(1, 2, &[1.0, 2.0])).is_err());
        let nan = DMatrix::from_row_slice(2, 1, &[f64::NAN, 0.0]);
        assert!(pca_fit(&nan).is_err());
        let m = pca_fit(&random_matrix(10, 3, 2)).unwrap();
        assert!(pca_transform(&m, &DMatrix::zeros(1, 4)).is_err());
    }

    #[test]
    fn serde_roundtrip_preserves_model() {
        let m = pca_fit(&random_matrix(60, 5, 3)).unwrap();
        let json = serde_json::to_string(&m).unwrap();
        let back: PcaModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, m);
    }
}
