use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Principal axes from an eigendecomposition of the sample covariance.
#[derive(Clone, Debug, PartialEq)]
pub struct PcaBasis {
    pub mean: Vec<f64>,
    /// `d × d'`, one orthonormal component per column.
    pub components: Matrix,
    /// Per-component share of total variance, descending.
    pub explained_variance_ratio: Vec<f64>,
}

impl PcaBasis {
    pub fn input_dim(&self) -> usize {
        self.components.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.components.cols()
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.input_dim() {
            return Err(Error::shape(format!(
                "pca transform of {} features, basis has {}",
                x.cols(),
                self.input_dim()
            )));
        }
        let mut centered = x.clone();
        for r in 0..centered.rows() {
            for (v, m) in centered.row_mut(r).iter_mut().zip(&self.mean) {
                *v -= m;
            }
        }
        centered.matmul(&self.components)
    }

    pub fn inverse_transform(&self, z: &Matrix) -> Result<Matrix> {
        let mut x = z.matmul(&self.components.transpose())?;
        for r in 0..x.rows() {
            for (v, m) in x.row_mut(r).iter_mut().zip(&self.mean) {
                *v += m;
            }
        }
        Ok(x)
    }
}

/// Fits a `dims`-component PCA and projects `x` onto it.
///
/// Each component's sign is fixed so its largest-magnitude entry is
/// positive.
pub fn pca_fit_transform(x: &Matrix, dims: usize) -> Result<(PcaBasis, Matrix)> {
    let (n, d) = x.shape();
    if dims == 0 || dims > n.min(d) {
        return Err(Error::invalid(format!(
            "pca output dimension {dims} outside 1..={}",
            n.min(d)
        )));
    }
    let mean = x.column_means().into_data();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for row in x.iter_rows() {
        for i in 0..d {
            let ci = row[i] - mean[i];
            for j in i..d {
                cov[(i, j)] += ci * (row[j] - mean[j]);
            }
        }
    }
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    for i in 0..d {
        for j in i..d {
            let v = cov[(i, j)] / denom;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let mut components = Matrix::zeros(d, dims);
    let mut ratios = Vec::with_capacity(dims);
    for (c, &idx) in order.iter().take(dims).enumerate() {
        let v = eig.eigenvectors.column(idx);
        let pivot = (0..d).fold(0, |best, i| if v[i].abs() > v[best].abs() { i } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..d {
            components.set(i, c, sign * v[i]);
        }
        let lambda = eig.eigenvalues[idx].max(0.0);
        ratios.push(if total > 0.0 { lambda / total } else { 0.0 });
    }
    let basis = PcaBasis { mean, components, explained_variance_ratio: ratios };
    let projected = basis.transform(x)?;
    Ok((basis, projected))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn collinear_points_have_one_component() {
        let x = Matrix::from_rows(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [-3.0, -3.0]]).unwrap();
        let (basis, _) = pca_fit_transform(&x, 1).unwrap();
        assert!((basis.explained_variance_ratio[0] - 1.0).abs() < 1e-12);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((basis.components.get(0, 0) - h).abs() < 1e-12);
        assert!((basis.components.get(1, 0) - h).abs() < 1e-12);
    }

    #[test]
    fn first_axis_of_elongated_cross() {
        let x = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0], [0.0, 0.1], [0.0, -0.1]]).unwrap();
        let (basis, _) = pca_fit_transform(&x, 1).unwrap();
        assert!((basis.components.get(0, 0) - 1.0).abs() < 1e-12);
        assert!(basis.components.get(1, 0).abs() < 1e-12);
    }

    #[test]
    fn full_rank_is_orthonormal_and_invertible() {
        let x = Matrix::from_rows(&[[1.0, 2.0, 0.5], [3.0, -1.0, 2.0], [0.0, 0.0, 1.0], [2.5, 1.0, -1.0]])
            .unwrap();
        let (basis, z) = pca_fit_transform(&x, 3).unwrap();
        let gram = basis.components.transpose().matmul(&basis.components).unwrap();
        assert!(gram.max_abs_diff(&Matrix::identity(3)) < 1e-8);
        assert!(basis.inverse_transform(&z).unwrap().max_abs_diff(&x) < 1e-8);
        let s: f64 = basis.explained_variance_ratio.iter().sum();
        assert!(s <= 1.0 + 1e-12);
        assert!(basis.explained_variance_ratio.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rejects_bad_dimension() {
        let x = Matrix::zeros(3, 2);
        assert!(pca_fit_transform(&x, 0).is_err());
        assert!(pca_fit_transform(&x, 3).is_err());
    }
}
