//! Dense symmetric eigendecomposition and singular value decomposition
//! through LAPACK.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues and orthonormal eigenvectors (as columns) of a symmetric
/// matrix. Only the lower triangle is read; an empty matrix yields empty
/// factors.
#[derive(Clone, Debug)]
pub struct SymmetricEigen {
    pub eigenvalues: DVector<f64>,
    pub eigenvectors: DMatrix<f64>,
}

impl SymmetricEigen {
    pub fn new(a: DMatrix<f64>) -> Self {
        let n = a.nrows();
        assert_eq!(
            n,
            a.ncols(),
            "symmetric eigendecomposition needs a square matrix"
        );
        if n == 0 {
            return Self {
                eigenvalues: DVector::zeros(0),
                eigenvectors: DMatrix::zeros(0, 0),
            };
        }
        let eig = nalgebra_lapack::SymmetricEigen::new(a);
        Self {
            eigenvalues: eig.eigenvalues,
            eigenvectors: eig.eigenvectors,
        }
    }

    pub fn recompose(&self) -> DMatrix<f64> {
        &self.eigenvectors
            * DMatrix::from_diagonal(&self.eigenvalues)
            * self.eigenvectors.transpose()
    }
}

/// Full singular value decomposition `A = U diag(s) V^T` with square
/// orthogonal `U` and `V^T`. Singular values are sorted in decreasing order.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: DMatrix<f64>,
    pub singular_values: DVector<f64>,
    pub v_t: DMatrix<f64>,
}

impl Svd {
    /// `None` when LAPACK does not converge.
    pub fn new(a: DMatrix<f64>) -> Option<Self> {
        let (m, n) = a.shape();
        if m == 0 || n == 0 {
            return Some(Self {
                u: DMatrix::identity(m, m),
                singular_values: DVector::zeros(0),
                v_t: DMatrix::identity(n, n),
            });
        }
        let svd = nalgebra_lapack::SVD::new(a)?;
        Some(Self {
            u: svd.u,
            singular_values: svd.singular_values,
            v_t: svd.vt,
        })
    }

    pub fn recompose(&self) -> DMatrix<f64> {
        let k = self.singular_values.len();
        self.u.columns(0, k) * DMatrix::from_diagonal(&self.singular_values) * self.v_t.rows(0, k)
    }
}

/// Largest singular value; zero for an empty matrix.
pub fn sigma_max(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    match Svd::new(a.clone()) {
        Some(svd) => svd.singular_values.max(),
        None => SymmetricEigen::new(a.transpose() * a)
            .eigenvalues
            .max()
            .max(0.0)
            .sqrt(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rank_three_product_is_reproduced() {
        let p = DMatrix::from_fn(8, 3, |i, j| ((i * 3 + j) as f64 * 0.7).sin());
        let q = DMatrix::from_fn(3, 8, |i, j| ((i + 5 * j) as f64 * 1.3).cos());
        let a = &p * &q;
        let svd = Svd::new(a.clone()).unwrap();
        assert!((svd.recompose() - &a).norm() < 1e-13 * a.norm());
        assert!((svd.u.transpose() * &svd.u - DMatrix::identity(8, 8)).norm() < 1e-13);
        assert!(svd.singular_values[3] < 1e-13 * svd.singular_values[0]);
        assert!((sigma_max(&a) - svd.singular_values[0]).abs() < 1e-13);
    }

    #[test]
    fn rectangular_and_empty_svd() {
        let a = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, 4.0, 0.0]);
        let svd = Svd::new(a.clone()).unwrap();
        assert_eq!(svd.u.shape(), (2, 2));
        assert_eq!(svd.v_t.shape(), (3, 3));
        assert!((svd.recompose() - a).norm() < 1e-14);
        assert_eq!(sigma_max(&DMatrix::zeros(0, 3)), 0.0);
        assert_eq!(Svd::new(DMatrix::zeros(0, 2)).unwrap().v_t.shape(), (2, 2));
    }

    #[test]
    fn sparse_rank_two_matrix_is_reproduced() {
        let mut g = DMatrix::zeros(8, 8);
        g[(0, 0)] = 1.0;
        for &i in &[2, 5, 7] {
            for &j in &[2, 5, 7] {
                g[(i, j)] = 0.3383;
            }
        }
        g[(1, 1)] = 2e-9;
        let eig = SymmetricEigen::new(g.clone());
        assert!((eig.recompose() - &g).norm() < 1e-14);
        let ortho = eig.eigenvectors.transpose() * &eig.eigenvectors;
        assert!((ortho - DMatrix::identity(8, 8)).norm() < 1e-13);
    }

    #[test]
    fn empty_matrix() {
        let eig = SymmetricEigen::new(DMatrix::zeros(0, 0));
        assert_eq!(eig.eigenvalues.len(), 0);
    }
}
