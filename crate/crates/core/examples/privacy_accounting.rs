//! RDP accounting for DP-SGD: ε for a noise level, and the inverse calibration.

use dpfair::accountant::{self, account, calibrate_sigma_with_orders, DEFAULT_PHI};

fn main() -> dpfair::Result<()> {
    let (n, batch, epochs) = (9100usize, 256usize, 10usize);
    let steps = epochs * (n / batch);
    let q = batch as f64 / n as f64;
    let orders = accountant::extended_orders();

    println!("n={n} B={batch} epochs={epochs}: {steps} steps at q={q:.5}, phi={DEFAULT_PHI}");
    for sigma in [0.5, 1.0, 2.0, 4.0] {
        let report = account(sigma, q, steps, DEFAULT_PHI, &orders)?;
        println!("sigma {sigma:>4}: epsilon {:.4}", report.epsilon);
    }
    for target in [0.01, 0.1, 1.0, 10.0, 40.0] {
        let sigma = calibrate_sigma_with_orders(target, DEFAULT_PHI, steps, q, &orders)?;
        let back = account(sigma, q, steps, DEFAULT_PHI, &orders)?.epsilon;
        println!("target {target:>5}: sigma {sigma:.4} (accounts to {back:.6})");
    }
    Ok(())
}
