use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// For each column `a_r` of the `N × R` matrix `m`, the exact minimum of
/// `Σ_{r′≠r} ⟨a_{r′}, b⟩²` over `b` with `⟨a_r, b⟩ = 1`.
///
/// A zero column makes the constraint infeasible and yields `+∞`.
pub fn offdiag_energy_census(m: &Matrix) -> Result<Vec<f64>> {
    let (n, r) = m.shape();
    if r == 0 || n == 0 {
        return Err(Error::Shape("census needs at least one row and one column".into()));
    }
    let cols: Vec<DVector<f64>> = (0..r).map(|j| DVector::from_vec(m.col(j))).collect();
    let total: DMatrix<f64> = cols.iter().fold(DMatrix::zeros(n, n), |acc, c| acc + c * c.transpose());
    Ok(cols
        .iter()
        .map(|a| {
            let scale = a.norm_squared();
            if scale == 0.0 {
                return f64::INFINITY;
            }
            let c = &total - a * a.transpose();
            minimize_on_hyperplane(c, a)
        })
        .collect())
}

/// `min bᵀCb` subject to `aᵀb = 1` for symmetric PSD `C`: zero when `a` has a
/// component in the kernel of `C`, otherwise `1 / aᵀC⁺a`.
fn minimize_on_hyperplane(c: DMatrix<f64>, a: &DVector<f64>) -> f64 {
    let eig = SymmetricEigen::new(c);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
    let cutoff = 1e-10 * lmax.max(a.norm_squared());
    let mut quad = 0.0;
    for (i, &mu) in eig.eigenvalues.iter().enumerate() {
        let proj = eig.eigenvectors.column(i).dot(a);
        if mu <= cutoff {
            if proj.abs() > 1e-8 * a.norm() {
                return 0.0;
            }
        } else {
            quad += proj * proj / mu;
        }
    }
    1.0 / quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::gaussian_matrix;
    use crate::rng::RngStream;

    #[test]
    fn orthogonal_columns_have_zero_energy() {
        assert_eq!(offdiag_energy_census(&Matrix::identity(5)).unwrap(), vec![0.0; 5]);
    }

    #[test]
    fn duplicated_column_forces_unit_energy() {
        let mut rng = RngStream::new(1, 0);
        let g = gaussian_matrix(&mut rng, 4, 3, 1.0);
        let rows: Vec<Vec<f64>> = (0..4)
            .map(|i| vec![g[(i, 0)], g[(i, 1)], g[(i, 2)], g[(i, 0)]])
            .collect();
        let m = Matrix::from_rows(&rows).unwrap();
        let e = offdiag_energy_census(&m).unwrap();
        assert!(e[0] >= 1.0 - 1e-9 && e[3] >= 1.0 - 1e-9);
    }

    #[test]
    fn zero_column_is_infeasible() {
        let m = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]).unwrap();
        assert_eq!(offdiag_energy_census(&m).unwrap(), vec![0.0, f64::INFINITY]);
    }

    #[test]
    fn minimum_matches_explicit_minimizer() {
        // Full-rank C: b* = C⁻¹a / aᵀC⁻¹a attains the reported value.
        let mut rng = RngStream::new(2, 0);
        let m = gaussian_matrix(&mut rng, 3, 8, 1.0);
        let e = offdiag_energy_census(&m).unwrap();
        let a = m.col(0);
        let rest: Vec<Vec<f64>> = (1..8).map(|j| m.col(j)).collect();
        let mut c = Matrix::zeros(3, 3);
        for v in &rest {
            for i in 0..3 {
                for j in 0..3 {
                    c[(i, j)] += v[i] * v[j];
                }
            }
        }
        let cinv_a = crate::linalg::Cholesky::factor(&c).unwrap().solve(&a);
        let denom = crate::linalg::dot(&a, &cinv_a);
        let b: Vec<f64> = cinv_a.iter().map(|v| v / denom).collect();
        let value: f64 = rest.iter().map(|v| crate::linalg::dot(v, &b).powi(2)).sum();
        assert!((value - e[0]).abs() <= 1e-10 * value);
    }

    #[test]
    fn scaling_a_column_rescales_its_minimum() {
        let mut rng = RngStream::new(3, 0);
        let m = gaussian_matrix(&mut rng, 4, 9, 1.0);
        let before = offdiag_energy_census(&m).unwrap();
        let mut scaled = m.clone();
        for i in 0..4 {
            scaled[(i, 2)] *= 3.0;
        }
        let after = offdiag_energy_census(&scaled).unwrap();
        assert!((after[2] - before[2] / 9.0).abs() <= 1e-10 * before[2]);
    }
}
