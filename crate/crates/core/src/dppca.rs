//! PCA on the uncentered second-moment matrix, and its differentially private
//! variant that adds Wishart noise to that matrix before the eigensolve.
//!
//! For rows with `‖x_i‖₂ ≤ 1`, `A + W` with
//! `W ~ Wishart_d(d + 1, 3 / (2 n ε) · I)` is ε-differentially private, and
//! so is anything computed from it.

use std::path::Path;

use crate::binfmt::{self, Header};
use crate::error::{Error, Result};
use crate::randmat::{sym_eigendecompose, wishart_sample, Matrix, SeededRng};

#[derive(Clone, Debug, PartialEq)]
pub struct Projection {
    /// `d x k`, orthonormal columns.
    pub basis: Matrix,
    /// Top `k` eigenvalues of the (possibly noised) second-moment matrix.
    pub eigenvalues: Vec<f64>,
    /// `None` for a non-private projection.
    pub epsilon: Option<f64>,
}

impl Projection {
    pub fn dim(&self) -> usize {
        self.basis.rows()
    }

    pub fn k(&self) -> usize {
        self.basis.cols()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut payload = self.basis.as_slice().to_vec();
        payload.extend_from_slice(&self.eigenvalues);
        payload.push(self.epsilon.unwrap_or(f64::INFINITY));
        let header = Header::Projection {
            d: self.dim() as u32,
            k: self.k() as u32,
        };
        binfmt::write_file(path, header, &payload)
    }

    pub fn load(path: &Path) -> Result<Projection> {
        match binfmt::read_file(path)? {
            (Header::Projection { d, k }, payload) => {
                let (d, k) = (d as usize, k as usize);
                let basis = Matrix::new(d, k, payload[..d * k].to_vec())?;
                let eigenvalues = payload[d * k..d * k + k].to_vec();
                let eps = payload[d * k + k];
                Ok(Projection {
                    basis,
                    eigenvalues,
                    epsilon: eps.is_finite().then_some(eps),
                })
            }
            _ => Err(Error::arg(format!("{} is not a projection file", path.display()))),
        }
    }
}

/// `(1/n) XᵀX`.
pub fn second_moment(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let d = x.cols();
    let mut a = Matrix::zeros(d, d);
    for r in 0..n {
        let row = x.row(r);
        for i in 0..d {
            let xi = row[i];
            if xi == 0.0 {
                continue;
            }
            for (j, &xj) in row.iter().enumerate().take(i + 1) {
                a.set(i, j, a.get(i, j) + xi * xj);
            }
        }
    }
    let inv_n = 1.0 / n as f64;
    for i in 0..d {
        for j in 0..=i {
            let v = a.get(i, j) * inv_n;
            a.set(i, j, v);
            a.set(j, i, v);
        }
    }
    Ok(a)
}

/// Scales each row by `1 / max(1, ‖row‖₂)`.
pub fn normalize_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 1.0 {
            for v in row.iter_mut() {
                *v /= norm;
            }
        }
    }
    out
}

fn top_k(a: &Matrix, k: usize, epsilon: Option<f64>) -> Result<Projection> {
    let d = a.rows();
    if k == 0 || k > d {
        return Err(Error::arg(format!("k must lie in 1..={d}, got {k}")));
    }
    let eig = sym_eigendecompose(a)?;
    Ok(Projection {
        basis: eig.vectors.leading_cols(k),
        eigenvalues: eig.values[..k].to_vec(),
        epsilon,
    })
}

/// Noiseless top-`k` eigenvectors of the second moment of `x`.
pub fn pca(x: &Matrix, k: usize) -> Result<Projection> {
    top_k(&second_moment(x)?, k, None)
}

/// Subtracts each column's mean.
pub fn center_columns(x: &Matrix) -> Matrix {
    let n = x.rows();
    let means: Vec<f64> = (0..x.cols())
        .map(|j| (0..n).map(|r| x.get(r, j)).sum::<f64>() / n.max(1) as f64)
        .collect();
    let mut c = x.clone();
    for r in 0..n {
        for (v, m) in c.row_mut(r).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    c
}

/// [`pca`] of mean-centered data. Non-private baseline only.
pub fn pca_centered(x: &Matrix, k: usize) -> Result<Projection> {
    pca(&center_columns(x), k)
}

/// ε-DP principal subspace via Wishart noise on the second-moment matrix.
pub fn dp_pca(x: &Matrix, k: usize, epsilon: f64, rng: &mut SeededRng) -> Result<Projection> {
    if !(epsilon > 0.0) {
        return Err(Error::arg(format!("epsilon must be positive, got {epsilon}")));
    }
    if let Some(r) = (0..x.rows()).find(|&r| {
        x.row(r).iter().map(|v| v * v).sum::<f64>().sqrt() > 1.0 + 1e-9
    }) {
        return Err(Error::Precondition(format!(
            "row {r} has L2 norm above 1; normalize rows before private PCA"
        )));
    }
    let a = second_moment(x)?;
    let d = x.cols();
    let n = x.rows() as f64;
    let noise = wishart_sample(d, (d + 1) as f64, 3.0 / (2.0 * n * epsilon), rng)?;
    top_k(&a.add(&noise)?, k, Some(epsilon))
}

/// `X · basis`.
pub fn project(x: &Matrix, p: &Projection) -> Result<Matrix> {
    x.matmul(&p.basis)
}

/// Largest principal angle (radians) between the column spans of two
/// orthonormal bases of equal width.
pub fn max_principal_angle(a: &Matrix, b: &Matrix) -> Result<f64> {
    if a.rows() != b.rows() || a.cols() != b.cols() {
        return Err(Error::arg("bases must have equal shapes"));
    }
    // residual of b after projecting onto span(a); its top singular value is sin(θ_max)
    let coeff = a.transpose().matmul(b)?;
    let resid = b.add(&a.matmul(&coeff)?.scale(-1.0))?;
    let gram = resid.transpose().matmul(&resid)?;
    let top = sym_eigendecompose(&gram)?.values[0].max(0.0);
    Ok(top.sqrt().min(1.0).asin())
}

/// `tr(AᵀB BᵀA) / k`: 1 for identical subspaces, 0 for orthogonal ones.
pub fn subspace_affinity(a: &Matrix, b: &Matrix) -> Result<f64> {
    let c = a.transpose().matmul(b)?;
    Ok(c.as_slice().iter().map(|v| v * v).sum::<f64>() / a.cols() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::randmat::gaussian_matrix;

    #[test]
    fn second_moment_examples() {
        let x = Matrix::identity(2);
        assert_eq!(second_moment(&x).unwrap(), Matrix::identity(2).scale(0.5));
        assert_eq!(second_moment(&Matrix::zeros(3, 2)).unwrap(), Matrix::zeros(2, 2));
        assert!(matches!(second_moment(&Matrix::zeros(0, 2)), Err(Error::EmptyDataset)));
    }

    #[test]
    fn normalize_examples() {
        let x = Matrix::from_rows(&[vec![0.0, 2.0], vec![0.3, 0.4], vec![0.0, 0.0]]).unwrap();
        let n = normalize_rows(&x);
        assert_eq!(n.row(0), &[0.0, 1.0]);
        assert_eq!(n.row(1), &[0.3, 0.4]);
        assert_eq!(n.row(2), &[0.0, 0.0]);
    }

    #[test]
    fn dp_pca_rejects_bad_input() {
        let mut rng = SeededRng::new(0);
        let x = Matrix::from_rows(&[vec![2.0, 0.0]]).unwrap();
        assert!(matches!(dp_pca(&x, 1, 1.0, &mut rng), Err(Error::Precondition(_))));
        let x = normalize_rows(&x);
        assert!(dp_pca(&x, 1, 0.0, &mut rng).is_err());
        assert!(dp_pca(&x, 3, 1.0, &mut rng).is_err());
    }

    #[test]
    fn huge_epsilon_recovers_dominant_axis() {
        // rows come in pairs (a, b) and (a, -b), so e1 is an exact eigenvector
        let mut rng = SeededRng::new(3);
        let g = gaussian_matrix(200, 5, 0.1, &mut rng).unwrap();
        let mut rows = Vec::new();
        for r in 0..200 {
            let mut row = g.row(r).to_vec();
            row[0] *= 8.0;
            rows.push(row.clone());
            for v in &mut row[1..] {
                *v = -*v;
            }
            rows.push(row);
        }
        let x = normalize_rows(&Matrix::from_rows(&rows).unwrap());
        let p = dp_pca(&x, 1, 1e6, &mut rng).unwrap();
        let cos = p.basis.get(0, 0).abs();
        assert!(cos.min(1.0).acos() < 1e-3, "angle {}", cos.min(1.0).acos());
    }

    #[test]
    fn full_rank_basis_is_orthonormal() {
        let mut rng = SeededRng::new(8);
        let x = normalize_rows(&gaussian_matrix(50, 6, 1.0, &mut rng).unwrap());
        let p = dp_pca(&x, 6, 0.5, &mut rng).unwrap();
        let g = p.basis.transpose().matmul(&p.basis).unwrap();
        assert!(g.max_abs_diff(&Matrix::identity(6)) < 1e-8);
        let y = project(&x, &p).unwrap();
        for r in 0..50 {
            let a: f64 = x.row(r).iter().map(|v| v * v).sum();
            let b: f64 = y.row(r).iter().map(|v| v * v).sum();
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn subspace_data_reconstructs_exactly() {
        let mut rng = SeededRng::new(4);
        let coeffs = gaussian_matrix(60, 2, 1.0, &mut rng).unwrap();
        let mix = gaussian_matrix(2, 5, 1.0, &mut rng).unwrap();
        let x = coeffs.matmul(&mix).unwrap();
        let p = pca(&x, 2).unwrap();
        let recon = project(&x, &p).unwrap().matmul(&p.basis.transpose()).unwrap();
        assert!(recon.max_abs_diff(&x) < 1e-9);
    }

    #[test]
    fn reconstruction_error_nested() {
        let mut rng = SeededRng::new(5);
        let x = gaussian_matrix(100, 6, 1.0, &mut rng).unwrap();
        let err = |k| {
            let p = pca(&x, k).unwrap();
            let recon = project(&x, &p).unwrap().matmul(&p.basis.transpose()).unwrap();
            recon.add(&x.scale(-1.0)).unwrap().frobenius_norm()
        };
        for k in 1..6 {
            assert!(err(k) >= err(k + 1) - 1e-12);
        }
    }

    #[test]
    fn projected_coordinates_decorrelated() {
        let mut rng = SeededRng::new(6);
        let x = gaussian_matrix(200, 8, 1.0, &mut rng).unwrap();
        let p = pca_centered(&x, 8).unwrap();
        // projections of centered data have diagonal covariance
        let c = center_columns(&x);
        let y = project(&c, &p).unwrap();
        let cov = second_moment(&y).unwrap();
        for i in 0..8 {
            for j in 0..8 {
                if i != j {
                    assert!(cov.get(i, j).abs() < 1e-8);
                }
            }
        }
        let p_plain = pca(&x, 8).unwrap();
        let m = second_moment(&project(&x, &p_plain).unwrap()).unwrap();
        assert!((0..8).all(|i| (0..8).all(|j| i == j || m.get(i, j).abs() < 1e-8)));
    }

    #[test]
    fn project_identity_and_zero() {
        let x = Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let p = Projection {
            basis: Matrix::identity(2),
            eigenvalues: vec![1.0, 1.0],
            epsilon: None,
        };
        assert_eq!(project(&x, &p).unwrap(), x);
        assert_eq!(project(&Matrix::zeros(2, 2), &p).unwrap(), Matrix::zeros(2, 2));
    }

    #[test]
    fn projection_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("p.bin");
        let mut rng = SeededRng::new(1);
        let x = normalize_rows(&gaussian_matrix(30, 4, 1.0, &mut rng).unwrap());
        let p = dp_pca(&x, 2, 2.0, &mut rng).unwrap();
        p.save(&path).unwrap();
        assert_eq!(Projection::load(&path).unwrap(), p);
        let q = pca(&x, 3).unwrap();
        q.save(&path).unwrap();
        assert_eq!(Projection::load(&path).unwrap(), q);
    }

    #[test]
    fn principal_angle_basics() {
        let e = Matrix::identity(3);
        let a = e.leading_cols(2);
        assert!(max_principal_angle(&a, &a).unwrap() < 1e-12);
        let b = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let angle = max_principal_angle(&a, &b).unwrap();
        assert!((angle - std::f64::consts::FRAC_PI_2).abs() < 1e-9);
        assert!((subspace_affinity(&a, &b).unwrap() - 0.5).abs() < 1e-15);
    }
}
