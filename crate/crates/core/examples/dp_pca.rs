//! Wishart-noised PCA: how far the private subspace drifts from plain PCA as ε shrinks.

use dpfair::dppca::{dp_pca, normalize_rows, pca, subspace_affinity};
use dpfair::randmat::{Matrix, SeededRng};

fn main() -> dpfair::Result<()> {
    let mut rng = SeededRng::new(42);
    // 2000 rows in 16 dimensions with most of the energy in the first 4
    let rows: Vec<Vec<f64>> = (0..2000)
        .map(|_| (0..16).map(|j| rng.standard_normal() * if j < 4 { 3.0 } else { 0.5 }).collect())
        .collect();
    let x = normalize_rows(&Matrix::from_rows(&rows)?);
    let exact = pca(&x, 4)?;

    for epsilon in [0.01, 0.1, 1.0, 10.0, 1e9] {
        let mut total = 0.0;
        for rep in 0..10 {
            let private = dp_pca(&x, 4, epsilon, &mut rng.child(rep))?;
            total += subspace_affinity(&private.basis, &exact.basis)?;
        }
        println!("eps {epsilon:>6}: mean subspace affinity {:.4}", total / 10.0);
    }
    Ok(())
}
