//! Rényi differential privacy accounting for the subsampled Gaussian
//! mechanism.
//!
//! A training run is summarized by its noise multiplier `sigma`, the sampling
//! rate `q = batch / n` and the number of steps. Per-step Rényi bounds are
//! evaluated on a fixed grid of orders, composed additively over steps and
//! converted to an `(epsilon, phi)` guarantee by minimizing over the grid.

use crate::error::{Error, Result};
use crate::special::ln_gamma;

/// Default additive slack for `(epsilon, phi)` conversion.
pub const DEFAULT_PHI: f64 = 1e-5;

/// Search range for [`calibrate_sigma`].
pub const SIGMA_RANGE: (f64, f64) = (1e-3, 1e6);

/// Integers 2..=64 plus 1.25, 1.5, 1.75, 128 and 256.
pub fn default_orders() -> Vec<f64> {
    let mut orders = vec![1.25, 1.5, 1.75];
    orders.extend((2..=64).map(f64::from));
    orders.extend([128.0, 256.0]);
    orders
}

/// The default grid extended with 512..=4096.
///
/// With the default grid the conversion floor is `ln(1/phi) / 255`, about
/// 0.045 at `phi = 1e-5`, so budgets below that need the larger orders.
pub fn extended_orders() -> Vec<f64> {
    let mut orders = default_orders();
    orders.extend([512.0, 1024.0, 2048.0, 4096.0]);
    orders
}

/// Rényi divergence bound per order.
#[derive(Clone, Debug, PartialEq)]
pub struct RdpCurve {
    orders: Vec<f64>,
    eps_rdp: Vec<f64>,
}

impl RdpCurve {
    pub fn new(orders: Vec<f64>, eps_rdp: Vec<f64>) -> Result<Self> {
        if orders.len() != eps_rdp.len() || orders.is_empty() {
            return Err(Error::arg("orders and bounds must be nonempty and equal in length"));
        }
        if orders.iter().any(|&a| !(a > 1.0)) {
            return Err(Error::arg("every Rényi order must exceed 1"));
        }
        if eps_rdp.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::arg("Rényi bounds must be nonnegative"));
        }
        Ok(RdpCurve { orders, eps_rdp })
    }

    pub fn zero(orders: Vec<f64>) -> Self {
        let eps_rdp = vec![0.0; orders.len()];
        RdpCurve { orders, eps_rdp }
    }

    /// One step of the subsampled Gaussian mechanism on `orders`.
    ///
    /// Fractional orders have no subsampled bound and are recorded as `+inf`
    /// (never selected by the conversion) unless `q` is 0 or 1, where the
    /// closed forms hold for every order.
    pub fn subsampled_gaussian(sigma: f64, q: f64, orders: &[f64]) -> Result<Self> {
        check_rate(q)?;
        let eps_rdp = orders
            .iter()
            .map(|&alpha| {
                if q == 0.0 {
                    Ok(0.0)
                } else if q == 1.0 {
                    gaussian_rdp(sigma, alpha)
                } else if alpha.fract() == 0.0 {
                    subsampled_gaussian_rdp(sigma, q, alpha as u32)
                } else {
                    Ok(f64::INFINITY)
                }
            })
            .collect::<Result<Vec<_>>>()?;
        RdpCurve::new(orders.to_vec(), eps_rdp)
    }

    pub fn orders(&self) -> &[f64] {
        &self.orders
    }

    pub fn eps_rdp(&self) -> &[f64] {
        &self.eps_rdp
    }

    /// Bound at `alpha`, if it is on the grid.
    pub fn at(&self, alpha: f64) -> Option<f64> {
        self.orders
            .iter()
            .position(|&a| a == alpha)
            .map(|i| self.eps_rdp[i])
    }
}

/// Outcome of accounting one training run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PrivacyReport {
    pub epsilon: f64,
    pub phi: f64,
    pub sigma: f64,
    pub steps: usize,
    pub sampling_rate: f64,
}

/// Rényi bound of the full-batch Gaussian mechanism: `alpha / (2 sigma²)`.
pub fn gaussian_rdp(sigma: f64, alpha: f64) -> Result<f64> {
    if sigma == 0.0 {
        return Err(Error::InfinitePrivacyLoss);
    }
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("noise multiplier must be positive, got {sigma}")));
    }
    if !(alpha > 1.0) {
        return Err(Error::arg(format!("Rényi order must exceed 1, got {alpha}")));
    }
    Ok(alpha / (2.0 * sigma * sigma))
}

/// Rényi bound at integer order `alpha` for one step of the Poisson-subsampled
/// Gaussian mechanism with rate `q`.
///
/// Uses the binomial expansion
/// `A = Σ_i C(alpha, i) q^i (1-q)^(alpha-i) exp((i² - i) / (2 sigma²))`
/// and returns `ln(A) / (alpha - 1)`. Because the binomial weights sum to one,
/// `A - 1` is accumulated directly from the nonnegative terms with
/// `expm1` in place of `exp`, all in log space, which keeps tiny values of
/// `A - 1` from cancelling.
pub fn subsampled_gaussian_rdp(sigma: f64, q: f64, alpha: u32) -> Result<f64> {
    check_rate(q)?;
    if alpha < 2 {
        return Err(Error::arg(format!(
            "subsampled bound needs an integer order >= 2, got {alpha}"
        )));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if q == 1.0 {
        return gaussian_rdp(sigma, f64::from(alpha));
    }
    if sigma == 0.0 {
        return Err(Error::InfinitePrivacyLoss);
    }
    if !(sigma > 0.0) {
        return Err(Error::arg(format!("noise multiplier must be positive, got {sigma}")));
    }

    let a = f64::from(alpha);
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let inv_two_var = 1.0 / (2.0 * sigma * sigma);
    let ln_fact_a = ln_gamma(a + 1.0);

    // terms i = 0, 1 vanish since i² - i = 0
    let log_terms: Vec<f64> = (2..=alpha)
        .map(|i| {
            let i = f64::from(i);
            let ln_binom = ln_fact_a - ln_gamma(i + 1.0) - ln_gamma(a - i + 1.0);
            ln_binom + i * ln_q + (a - i) * ln_1mq + ln_expm1((i * i - i) * inv_two_var)
        })
        .collect();
    let ln_a_minus_1 = log_sum_exp(&log_terms);
    let ln_a = if ln_a_minus_1 > 0.0 {
        ln_a_minus_1 + (-ln_a_minus_1).exp().ln_1p()
    } else {
        ln_a_minus_1.exp().ln_1p()
    };
    Ok(ln_a / (a - 1.0))
}

/// `steps`-fold composition: bounds add up at every order.
pub fn compose(curve: &RdpCurve, steps: usize) -> RdpCurve {
    let k = steps as f64;
    RdpCurve {
        orders: curve.orders.clone(),
        eps_rdp: curve
            .eps_rdp
            .iter()
            .map(|&e| if steps == 0 { 0.0 } else { e * k })
            .collect(),
    }
}

/// `min_alpha [ eps_rdp(alpha) + ln(1/phi) / (alpha - 1) ]`.
pub fn to_eps_phi(curve: &RdpCurve, phi: f64) -> Result<f64> {
    if !(phi > 0.0 && phi < 1.0) {
        return Err(Error::arg(format!("phi must lie in (0, 1), got {phi}")));
    }
    let ln_inv_phi = -phi.ln();
    Ok(curve
        .orders
        .iter()
        .zip(&curve.eps_rdp)
        .map(|(&a, &e)| e + ln_inv_phi / (a - 1.0))
        .fold(f64::INFINITY, f64::min))
}

/// Privacy of `steps` subsampled Gaussian steps, on the given order grid.
///
/// A zero noise multiplier yields `epsilon = +inf`.
pub fn account(sigma: f64, q: f64, steps: usize, phi: f64, orders: &[f64]) -> Result<PrivacyReport> {
    let epsilon = if steps == 0 || q == 0.0 {
        check_rate(q)?;
        to_eps_phi(&RdpCurve::zero(orders.to_vec()), phi)?
    } else if sigma == 0.0 {
        check_rate(q)?;
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::arg(format!("phi must lie in (0, 1), got {phi}")));
        }
        f64::INFINITY
    } else {
        let step = RdpCurve::subsampled_gaussian(sigma, q, orders)?;
        to_eps_phi(&compose(&step, steps), phi)?
    };
    Ok(PrivacyReport {
        epsilon,
        phi,
        sigma,
        steps,
        sampling_rate: q,
    })
}

/// Noise multiplier meeting `target_eps` on the default order grid.
pub fn calibrate_sigma(target_eps: f64, phi: f64, steps: usize, q: f64) -> Result<f64> {
    calibrate_sigma_with_orders(target_eps, phi, steps, q, &default_orders())
}

/// Bisection (in log sigma) for the smallest sigma whose accounted epsilon
/// does not exceed `target_eps`, to relative precision well below 1e-6.
pub fn calibrate_sigma_with_orders(
    target_eps: f64,
    phi: f64,
    steps: usize,
    q: f64,
    orders: &[f64],
) -> Result<f64> {
    if !(target_eps > 0.0) || !target_eps.is_finite() {
        return Err(Error::arg(format!("target epsilon must be positive, got {target_eps}")));
    }
    let (lo_bound, hi_bound) = SIGMA_RANGE;
    let eps_at = |sigma: f64| account(sigma, q, steps, phi, orders).map(|r| r.epsilon);
    let unreachable = Error::CalibrationRange {
        target: target_eps,
        lo: lo_bound,
        hi: hi_bound,
    };

    if eps_at(hi_bound)? > target_eps {
        return Err(unreachable);
    }
    if eps_at(lo_bound)? <= target_eps {
        // already private enough at the smallest admissible noise
        return Ok(lo_bound);
    }

    let (mut lo, mut hi) = (lo_bound.ln(), hi_bound.ln());
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if eps_at(mid.exp())? > target_eps {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 {
            break;
        }
    }
    Ok(hi.exp())
}

fn check_rate(q: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::arg(format!("sampling rate must lie in [0, 1], got {q}")));
    }
    Ok(())
}

fn ln_expm1(x: f64) -> f64 {
    if x > 50.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_closed_form() {
        assert_eq!(gaussian_rdp(1.0, 2.0).unwrap(), 1.0);
        assert_eq!(gaussian_rdp(2.0, 2.0).unwrap(), 0.25 * gaussian_rdp(1.0, 2.0).unwrap());
        assert!(gaussian_rdp(1e12, 2.0).unwrap() < 1e-20);
        assert!(matches!(gaussian_rdp(0.0, 2.0), Err(Error::InfinitePrivacyLoss)));
    }

    #[test]
    fn subsampled_boundaries() {
        assert_eq!(subsampled_gaussian_rdp(1.0, 0.0, 2).unwrap(), 0.0);
        assert_eq!(subsampled_gaussian_rdp(1.0, 1.0, 2).unwrap(), 1.0);
        assert!(subsampled_gaussian_rdp(1.0, 0.5, 1).is_err());
        assert!(subsampled_gaussian_rdp(1.0, 1.5, 2).is_err());
    }

    #[test]
    fn order_two_matches_direct_sum() {
        // A = (1-q)² + 2q(1-q) + q² e^{1/σ²} = 1 + q² (e^{1/σ²} - 1)
        let q: f64 = 0.01;
        let expected = (q * q * 1f64.exp_m1()).ln_1p();
        let got = subsampled_gaussian_rdp(1.0, q, 2).unwrap();
        assert!((got - expected).abs() < 1e-9);
    }

    #[test]
    fn fractional_orders_skipped_when_subsampled() {
        let c = RdpCurve::subsampled_gaussian(1.0, 0.1, &default_orders()).unwrap();
        assert_eq!(c.at(1.5), Some(f64::INFINITY));
        let c = RdpCurve::subsampled_gaussian(1.0, 1.0, &default_orders()).unwrap();
        assert_eq!(c.at(1.5), Some(0.75));
    }

    #[test]
    fn compose_examples() {
        let c = RdpCurve::new(vec![2.0, 3.0], vec![0.5, 0.7]).unwrap();
        assert_eq!(compose(&c, 0).eps_rdp(), &[0.0, 0.0]);
        assert_eq!(compose(&c, 4).at(2.0), Some(2.0));
    }

    #[test]
    fn conversion_examples() {
        let c = RdpCurve::new(vec![2.0], vec![1.0]).unwrap();
        let eps = to_eps_phi(&c, (-1f64).exp()).unwrap();
        assert!((eps - 2.0).abs() < 1e-12);

        let zero = RdpCurve::zero(default_orders());
        let brute = default_orders()
            .iter()
            .map(|a| 1e5f64.ln() / (a - 1.0))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(to_eps_phi(&zero, 1e-5).unwrap(), brute);
        assert_eq!(brute, 1e5f64.ln() / 255.0);

        assert!(to_eps_phi(&c, 0.0).is_err());
        assert!(to_eps_phi(&c, 1.0).is_err());
        assert!(to_eps_phi(&c, 0.1).unwrap() <= to_eps_phi(&c, 0.01).unwrap());
    }

    #[test]
    fn calibration_monotone() {
        let s1 = calibrate_sigma(1.0, 1e-5, 100, 0.01).unwrap();
        let s_half = calibrate_sigma(0.5, 1e-5, 100, 0.01).unwrap();
        let s_double = calibrate_sigma(1.0, 1e-5, 200, 0.01).unwrap();
        assert!(s_half > s1);
        assert!(s_double > s1);
    }

    #[test]
    fn calibration_unreachable_below_floor() {
        let err = calibrate_sigma(0.01, 1e-5, 100, 0.01).unwrap_err();
        assert!(matches!(err, Error::CalibrationRange { .. }));
        let sigma = calibrate_sigma_with_orders(0.01, 1e-5, 100, 0.01, &extended_orders()).unwrap();
        let eps = account(sigma, 0.01, 100, 1e-5, &extended_orders()).unwrap().epsilon;
        assert!((eps - 0.01).abs() / 0.01 < 1e-6);
    }

    #[test]
    fn zero_sigma_is_infinite() {
        let r = account(0.0, 0.1, 10, 1e-5, &default_orders()).unwrap();
        assert_eq!(r.epsilon, f64::INFINITY);
    }
}
