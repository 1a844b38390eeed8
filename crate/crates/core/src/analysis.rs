//! Least-squares fits of metric-versus-epsilon curves, slope significance,
//! and rank correlation.

use crate::error::{Error, Result};
use crate::special::student_t_two_sided;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitModel {
    /// `y = a ln(x) + b`
    Logarithmic,
    /// `y = a x + b`
    Linear,
}

impl FitModel {
    pub fn name(self) -> &'static str {
        match self {
            FitModel::Logarithmic => "logarithmic",
            FitModel::Linear => "linear",
        }
    }

    pub fn eval(self, slope: f64, intercept: f64, x: f64) -> f64 {
        match self {
            FitModel::Logarithmic => slope * x.ln() + intercept,
            FitModel::Linear => slope * x + intercept,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitReport {
    pub model: FitModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub slope_p_value: f64,
    pub n: usize,
}

/// OLS of `y` on `ln(x)`.
pub fn log_fit(xs: &[f64], ys: &[f64]) -> Result<FitReport> {
    if let Some(x) = xs.iter().find(|&&x| !(x > 0.0)) {
        return Err(Error::arg(format!("logarithmic fit needs x > 0, got {x}")));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let mut fit = ols(&lx, ys)?;
    fit.model = FitModel::Logarithmic;
    Ok(fit)
}

/// OLS of `y` on `x`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<FitReport> {
    ols(xs, ys)
}

fn ols(xs: &[f64], ys: &[f64]) -> Result<FitReport> {
    if xs.len() != ys.len() {
        return Err(Error::arg("x and y lengths differ"));
    }
    let n = xs.len();
    if n < 3 {
        return Err(Error::arg(format!("fit needs at least 3 points, got {n}")));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::arg("fit inputs must be finite"));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::arg("fit needs variation in x"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sst: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ssr: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - slope * x - intercept).powi(2))
        .sum();
    let r_squared = if sst == 0.0 {
        0.0
    } else {
        (1.0 - ssr / sst).clamp(0.0, 1.0)
    };
    let residual_variance = ssr / (nf - 2.0);
    Ok(FitReport {
        model: FitModel::Linear,
        slope,
        intercept,
        r_squared,
        slope_p_value: slope_p_value(slope, residual_variance, sxx, n)?,
        n,
    })
}

/// Two-sided p-value of the OLS slope t statistic with `n - 2` degrees of
/// freedom. `sxx` is `Σ (x - x̄)²`.
///
/// A zero slope gives 1. A nonzero slope with zero residual variance gives
/// the smallest positive double rather than 0.
pub fn slope_p_value(slope: f64, residual_variance: f64, sxx: f64, n: usize) -> Result<f64> {
    if n <= 2 {
        return Err(Error::arg(format!("slope test needs n > 2, got {n}")));
    }
    if slope == 0.0 {
        return Ok(1.0);
    }
    let se = (residual_variance / sxx).sqrt();
    let t = slope / se;
    let p = student_t_two_sided(t, (n - 2) as f64);
    Ok(p.clamp(f64::MIN_POSITIVE, 1.0))
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation (Pearson correlation of average ranks).
pub fn spearman(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return Err(Error::arg("spearman needs two equal-length series of length >= 2"));
    }
    pearson(&average_ranks(xs), &average_ranks(ys))
}

pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        sxy += (x - mx) * (y - my);
        sxx += (x - mx).powi(2);
        syy += (y - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::arg("correlation undefined for a constant series"));
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}
