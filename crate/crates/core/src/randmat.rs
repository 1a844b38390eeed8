//! Dense matrices, seeded random streams, Gaussian and Wishart sampling,
//! and a cyclic Jacobi eigensolver for symmetric matrices.
//!
//! Everything else in the crate draws randomness through [`SeededRng`], so a
//! seed plus a call sequence pins every sampled value on every platform.

use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};

/// Dense row-major matrix of `f64`.
#[derive(Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for r in 0..self.rows {
            writeln!(f, "  {:?}", self.row(r))?;
        }
        write!(f, "]")
    }
}

impl Matrix {
    /// Builds a matrix from row-major entries, rejecting non-finite values.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(Error::arg(format!(
                "matrix {rows}x{cols} needs {} entries, got {}",
                rows * cols,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::arg(format!(
                "non-finite matrix entry at ({}, {})",
                pos / cols.max(1),
                pos % cols.max(1)
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_diag(diag: &[f64]) -> Self {
        let n = diag.len();
        let mut m = Matrix::zeros(n, n);
        for (i, &v) in diag.iter().enumerate() {
            m.data[i * n + i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::arg("ragged rows"));
        }
        Matrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn col(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    /// Rows selected by index, in the given order.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    /// Leading `k` columns.
    pub fn leading_cols(&self, k: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, k);
        for r in 0..self.rows {
            out.row_mut(r).copy_from_slice(&self.row(r)[..k]);
        }
        out
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                t.data[c * self.rows + r] = self.get(r, c);
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::arg(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            let out_row = &mut out.data[r * other.cols..(r + 1) * other.cols];
            for (k, &a) in self.row(r).iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                for (o, &b) in out_row.iter_mut().zip(other.row(k)) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::arg("matrix shapes differ"));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn scale(&self, s: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    pub fn max_abs_diff(&self, other: &Matrix) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `(A + Aᵀ) / 2`.
    pub fn symmetrized(&self) -> Matrix {
        let mut out = self.clone();
        for r in 0..self.rows {
            for c in (r + 1)..self.cols {
                let v = 0.5 * (self.get(r, c) + self.get(c, r));
                out.set(r, c, v);
                out.set(c, r, v);
            }
        }
        out
    }
}

/// SplitMix64 finalizer. Used to derive independent child seeds.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Child seed for task `index` under `seed`: `mix64(seed ^ mix64(index))`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    mix64(seed ^ mix64(index))
}

/// Deterministic random stream (ChaCha8) identified by its seed.
///
/// Not `Sync`: parallel tasks take a [`SeededRng::child`] each.
#[derive(Clone, Debug)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fresh stream for task `index`, independent of this stream's position.
    pub fn child(&self, index: u64) -> SeededRng {
        SeededRng::new(derive_seed(self.seed, index))
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.inner.random::<f64>()
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.inner.random::<f64>() < p
    }

    /// Fisher-Yates shuffle.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.inner.random_range(0..=i);
            items.swap(i, j);
        }
    }

    /// Uniform random unit vector of length `d`.
    pub fn unit_vector(&mut self, d: usize) -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..d).map(|_| self.standard_normal()).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 1e-12 {
                return v.into_iter().map(|x| x / norm).collect();
            }
        }
    }

    fn chi_squared(&mut self, df: f64) -> f64 {
        ChiSquared::new(df)
            .expect("degrees of freedom are positive")
            .sample(&mut self.inner)
    }
}

impl RngCore for SeededRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// `rows x cols` matrix of i.i.d. `Normal(0, std²)` draws.
pub fn gaussian_matrix(rows: usize, cols: usize, std: f64, rng: &mut SeededRng) -> Result<Matrix> {
    if !(std >= 0.0) || !std.is_finite() {
        return Err(Error::arg(format!("standard deviation must be >= 0, got {std}")));
    }
    let data = (0..rows * cols).map(|_| std * rng.standard_normal()).collect();
    Ok(Matrix { rows, cols, data })
}

/// One draw from `Wishart_d(df, scale_diag * I)` via the Bartlett decomposition.
///
/// The lower-triangular factor has `sqrt(chi²(df - i))` on the diagonal and
/// standard normals below it; the product `L Lᵀ` is assembled from its lower
/// triangle and mirrored, so the result is exactly symmetric.
pub fn wishart_sample(d: usize, df: f64, scale_diag: f64, rng: &mut SeededRng) -> Result<Matrix> {
    if d == 0 {
        return Err(Error::arg("Wishart dimension must be positive"));
    }
    if !(df >= d as f64) {
        return Err(Error::arg(format!(
            "Wishart degrees of freedom {df} below dimension {d}"
        )));
    }
    if !(scale_diag >= 0.0) || !scale_diag.is_finite() {
        return Err(Error::arg(format!("Wishart scale must be >= 0, got {scale_diag}")));
    }
    let mut l = Matrix::zeros(d, d);
    for i in 0..d {
        l.set(i, i, rng.chi_squared(df - i as f64).sqrt());
        for j in 0..i {
            l.set(i, j, rng.standard_normal());
        }
    }
    let mut w = Matrix::zeros(d, d);
    for i in 0..d {
        for j in 0..=i {
            // L is lower triangular: (L Lᵀ)_ij = Σ_{k ≤ j} L_ik L_jk
            let s: f64 = (0..=j).map(|k| l.get(i, k) * l.get(j, k)).sum();
            let v = scale_diag * s;
            w.set(i, j, v);
            w.set(j, i, v);
        }
    }
    Ok(w)
}

/// Eigenpairs of a symmetric matrix, eigenvalues sorted descending.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    /// Column `i` is the eigenvector for `values[i]`.
    pub vectors: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
///
/// The input is symmetrized first. Ties keep the order the rotations left
/// them in (stable descending sort).
pub fn sym_eigendecompose(a: &Matrix) -> Result<SymEigen> {
    if !a.is_square() {
        return Err(Error::arg(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let n = a.rows;
    let mut m = a.symmetrized();
    let mut v = Matrix::identity(n);
    let scale = m.frobenius_norm();

    if scale > 0.0 {
        for _ in 0..JACOBI_MAX_SWEEPS {
            let off: f64 = (0..n)
                .flat_map(|p| ((p + 1)..n).map(move |q| (p, q)))
                .map(|(p, q)| m.get(p, q).powi(2))
                .sum::<f64>()
                .sqrt();
            if off <= 1e-15 * scale {
                break;
            }
            for p in 0..n {
                for q in (p + 1)..n {
                    let apq = m.get(p, q);
                    if apq.abs() <= f64::MIN_POSITIVE {
                        continue;
                    }
                    let theta = (m.get(q, q) - m.get(p, p)) / (2.0 * apq);
                    let t = if theta >= 0.0 {
                        1.0 / (theta + (theta * theta + 1.0).sqrt())
                    } else {
                        -1.0 / (-theta + (theta * theta + 1.0).sqrt())
                    };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    rotate(&mut m, &mut v, p, q, c, s);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<f64> = (0..n).map(|i| m.get(i, i)).collect();
    order.sort_by(|&i, &j| diag[j].total_cmp(&diag[i]));
    let values = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for r in 0..n {
            vectors.set(r, dst, v.get(r, src));
        }
    }
    Ok(SymEigen { values, vectors })
}

// A <- Jᵀ A J and V <- V J for the plane rotation in (p, q).
fn rotate(m: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let n = m.rows;
    for k in 0..n {
        let akp = m.get(k, p);
        let akq = m.get(k, q);
        m.set(k, p, c * akp - s * akq);
        m.set(k, q, s * akp + c * akq);
    }
    for k in 0..n {
        let apk = m.get(p, k);
        let aqk = m.get(q, k);
        m.set(p, k, c * apk - s * aqk);
        m.set(q, k, s * apk + c * aqk);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_symmetric(n: usize, seed: u64) -> Matrix {
        let mut rng = SeededRng::new(seed);
        let g = gaussian_matrix(n, n, 1.0, &mut rng).unwrap();
        g.symmetrized()
    }

    #[test]
    fn zero_std_gives_zero_matrix() {
        let mut rng = SeededRng::new(99);
        assert_eq!(gaussian_matrix(3, 2, 0.0, &mut rng).unwrap(), Matrix::zeros(3, 2));
    }

    #[test]
    fn negative_std_rejected() {
        let mut rng = SeededRng::new(1);
        assert!(matches!(
            gaussian_matrix(2, 2, -1.0, &mut rng),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn gaussian_moments() {
        let n = 100_000;
        let mut rng = SeededRng::new(7);
        let m = gaussian_matrix(1, n, 1.0, &mut rng).unwrap();
        let mean = m.as_slice().iter().sum::<f64>() / n as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");

        let mut rng = SeededRng::new(7);
        let m = gaussian_matrix(1, n, 2.0, &mut rng).unwrap();
        let xs = m.as_slice();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 4.0).abs() < 0.08, "var {var}");
    }

    #[test]
    fn equal_seeds_bit_identical() {
        let a = gaussian_matrix(4, 4, 1.0, &mut SeededRng::new(5)).unwrap();
        let b = gaussian_matrix(4, 4, 1.0, &mut SeededRng::new(5)).unwrap();
        assert_eq!(a.as_slice(), b.as_slice());
        let wa = wishart_sample(4, 6.0, 1.0, &mut SeededRng::new(5)).unwrap();
        let wb = wishart_sample(4, 6.0, 1.0, &mut SeededRng::new(5)).unwrap();
        assert_eq!(wa.as_slice(), wb.as_slice());
    }

    #[test]
    fn child_streams_differ() {
        let root = SeededRng::new(3);
        let mut a = root.child(0);
        let mut b = root.child(1);
        assert_ne!(a.next_u64(), b.next_u64());
    }

    #[test]
    fn wishart_zero_scale_is_zero() {
        let w = wishart_sample(3, 4.0, 0.0, &mut SeededRng::new(1)).unwrap();
        assert_eq!(w, Matrix::zeros(3, 3));
    }

    #[test]
    fn wishart_rejects_low_df() {
        assert!(wishart_sample(5, 4.0, 1.0, &mut SeededRng::new(1)).is_err());
    }

    #[test]
    fn wishart_symmetric_and_psd() {
        let mut rng = SeededRng::new(11);
        for _ in 0..50 {
            let w = wishart_sample(6, 6.0, 0.7, &mut rng).unwrap();
            assert_eq!(w, w.transpose());
            let e = sym_eigendecompose(&w).unwrap();
            assert!(e.values.iter().all(|&l| l >= -1e-10));
        }
    }

    #[test]
    fn eigen_identity_and_diagonal() {
        let e = sym_eigendecompose(&Matrix::identity(4)).unwrap();
        assert_eq!(e.values, vec![1.0; 4]);
        let e = sym_eigendecompose(&Matrix::from_diag(&[3.0, 1.0, 2.0])).unwrap();
        assert_eq!(e.values, vec![3.0, 2.0, 1.0]);
        assert_eq!(e.vectors.col(0), vec![1.0, 0.0, 0.0]);
        assert_eq!(e.vectors.col(1), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn eigen_rejects_non_square() {
        assert!(sym_eigendecompose(&Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn eigen_reconstruction_and_orthonormality() {
        for seed in 0..10 {
            let a = random_symmetric(8, seed);
            let e = sym_eigendecompose(&a).unwrap();
            let v = &e.vectors;
            let norm = a.frobenius_norm();

            let recon = v
                .matmul(&Matrix::from_diag(&e.values))
                .unwrap()
                .matmul(&v.transpose())
                .unwrap();
            assert!(recon.max_abs_diff(&a) < 1e-8 * norm.max(1.0));

            let vtv = v.transpose().matmul(v).unwrap();
            assert!(vtv.max_abs_diff(&Matrix::identity(8)) < 1e-9);

            for i in 0..8 {
                let vi = Matrix::new(8, 1, v.col(i)).unwrap();
                let av = a.matmul(&vi).unwrap();
                let lv = vi.scale(e.values[i]);
                assert!(av.max_abs_diff(&lv) < 1e-8 * norm);
            }
            let sum: f64 = e.values.iter().sum();
            assert!((sum - a.trace()).abs() < 1e-8 * norm);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
        }
    }
}
