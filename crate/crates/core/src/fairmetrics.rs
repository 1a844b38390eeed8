//! Per-group evaluation statistics and group fairness measures.
//!
//! Metrics are computed over the groups present in the evaluated split only.
//! Groups that are registered but absent are reported in
//! [`GroupStats::warnings`] and never imputed.

use crate::error::{Error, Result};

/// Statistics for one group.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupStat {
    pub group: usize,
    pub name: String,
    pub count: usize,
    /// Fraction of positive labels.
    pub label_prior: f64,
    /// Fraction of positive predictions.
    pub positive_rate: f64,
    /// 0-1 loss.
    pub risk: f64,
    /// F1 of the positive class, 0 when it is undefined.
    pub f1: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupStats {
    pub groups: Vec<GroupStat>,
    pub warnings: Vec<String>,
}

impl GroupStats {
    pub fn get(&self, group: usize) -> Option<&GroupStat> {
        self.groups.iter().find(|g| g.group == group)
    }
}

/// Which per-group risk enters [`unequal_risk`].
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RiskField {
    #[default]
    ZeroOne,
    OneMinusF1,
}

impl RiskField {
    fn of(self, g: &GroupStat) -> f64 {
        match self {
            RiskField::ZeroOne => g.risk,
            RiskField::OneMinusF1 => 1.0 - g.f1,
        }
    }
}

/// Counts predictions against labels per group.
///
/// `group_names[g]` names group id `g`; every id must be below its length.
pub fn group_stats(
    predictions: &[bool],
    labels: &[bool],
    groups: &[usize],
    group_names: &[String],
) -> Result<GroupStats> {
    if predictions.len() != labels.len() || labels.len() != groups.len() {
        return Err(Error::arg(format!(
            "length mismatch: {} predictions, {} labels, {} group ids",
            predictions.len(),
            labels.len(),
            groups.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyDataset);
    }

    #[derive(Clone, Copy, Default)]
    struct Tally {
        n: usize,
        tp: usize,
        fp: usize,
        fn_: usize,
        tn: usize,
    }
    let mut tallies = vec![Tally::default(); group_names.len()];
    for ((&p, &y), &g) in predictions.iter().zip(labels).zip(groups) {
        let t = tallies.get_mut(g).ok_or_else(|| {
            Error::arg(format!("group id {g} is not registered ({} groups)", group_names.len()))
        })?;
        t.n += 1;
        match (p, y) {
            (true, true) => t.tp += 1,
            (true, false) => t.fp += 1,
            (false, true) => t.fn_ += 1,
            (false, false) => t.tn += 1,
        }
    }

    let mut stats = GroupStats::default();
    for (g, t) in tallies.iter().enumerate() {
        let name = &group_names[g];
        if t.n == 0 {
            stats.warnings.push(format!("group '{name}' absent from evaluation data"));
            continue;
        }
        let n = t.n as f64;
        let f1 = if t.tp + t.fp == 0 || t.tp + t.fn_ == 0 {
            stats
                .warnings
                .push(format!("group '{name}': F1 undefined (no positives), set to 0"));
            0.0
        } else {
            2.0 * t.tp as f64 / (2 * t.tp + t.fp + t.fn_) as f64
        };
        stats.groups.push(GroupStat {
            group: g,
            name: name.clone(),
            count: t.n,
            label_prior: (t.tp + t.fn_) as f64 / n,
            positive_rate: (t.tp + t.fp) as f64 / n,
            risk: (t.fp + t.fn_) as f64 / n,
            f1,
        });
    }
    Ok(stats)
}

fn require_two(stats: &GroupStats) -> Result<()> {
    if stats.groups.len() < 2 {
        return Err(Error::arg(format!(
            "fairness metric needs at least 2 groups, got {}",
            stats.groups.len()
        )));
    }
    Ok(())
}

/// Largest pairwise risk gap, i.e. the smallest δ of δ-Unequal Risk.
pub fn unequal_risk(stats: &GroupStats, field: RiskField) -> Result<f64> {
    require_two(stats)?;
    // max |a - b| over pairs = max - min
    let (lo, hi) = stats
        .groups
        .iter()
        .map(|g| field.of(g))
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r), hi.max(r)));
    Ok(hi - lo)
}

/// Population variance of per-group F1.
pub fn delta_variance(stats: &GroupStats) -> Result<f64> {
    if stats.groups.is_empty() {
        return Err(Error::arg("delta variance needs at least one group"));
    }
    let n = stats.groups.len() as f64;
    // shifted by the first value so that identical scores give exactly 0
    let first = stats.groups[0].f1;
    let mean = first + stats.groups.iter().map(|g| g.f1 - first).sum::<f64>() / n;
    Ok(stats.groups.iter().map(|g| (g.f1 - mean).powi(2)).sum::<f64>() / n)
}

/// Smallest ratio between two rates; 0 if only some are zero, 1 if all are.
fn min_ratio(rates: impl Iterator<Item = f64> + Clone) -> f64 {
    let (lo, hi) = rates.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
        (lo.min(r), hi.max(r))
    });
    if hi == 0.0 {
        1.0
    } else {
        lo / hi
    }
}

/// p%-rule on positive prediction rates.
pub fn p_rule(stats: &GroupStats) -> Result<f64> {
    require_two(stats)?;
    Ok(min_ratio(stats.groups.iter().map(|g| g.positive_rate)))
}

/// p%-rule on positive prediction rates divided by each group's label prior.
pub fn modified_p_rule(stats: &GroupStats) -> Result<f64> {
    require_two(stats)?;
    if let Some(g) = stats.groups.iter().find(|g| g.label_prior == 0.0) {
        return Err(Error::UndefinedMetric {
            group: g.name.clone(),
        });
    }
    Ok(min_ratio(
        stats.groups.iter().map(|g| g.positive_rate / g.label_prior),
    ))
}

/// Overall fraction of correct predictions.
pub fn accuracy(predictions: &[bool], labels: &[bool]) -> f64 {
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    hits as f64 / labels.len().max(1) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("g{i}")).collect()
    }

    fn stats_from(risks: &[f64], f1s: &[f64], rates: &[f64], priors: &[f64]) -> GroupStats {
        GroupStats {
            groups: (0..risks.len())
                .map(|i| GroupStat {
                    group: i,
                    name: format!("g{i}"),
                    count: 10,
                    label_prior: priors[i],
                    positive_rate: rates[i],
                    risk: risks[i],
                    f1: f1s[i],
                })
                .collect(),
            warnings: vec![],
        }
    }

    #[test]
    fn perfect_predictions_zero_risk() {
        let labels = [true, false, true, false, true, true];
        let groups = [0, 0, 1, 1, 2, 2];
        let s = group_stats(&labels, &labels, &groups, &names(3)).unwrap();
        assert!(s.groups.iter().all(|g| g.risk == 0.0));
    }

    #[test]
    fn single_group_all_positive() {
        let preds = [true; 4];
        let labels = [true, true, false, false];
        let s = group_stats(&preds, &labels, &[0; 4], &names(1)).unwrap();
        let g = &s.groups[0];
        assert_eq!((g.positive_rate, g.label_prior, g.risk), (1.0, 0.5, 0.5));
    }

    #[test]
    fn absent_group_flagged() {
        let s = group_stats(&[true, false], &[true, false], &[0, 2], &names(3)).unwrap();
        assert_eq!(s.groups.len(), 2);
        assert!(s.get(1).is_none());
        assert!(s.warnings.iter().any(|w| w.contains("'g1' absent")));
    }

    #[test]
    fn group_stats_errors() {
        assert!(group_stats(&[true], &[true, false], &[0, 0], &names(1)).is_err());
        assert!(matches!(group_stats(&[], &[], &[], &names(1)), Err(Error::EmptyDataset)));
        assert!(group_stats(&[true], &[true], &[5], &names(2)).is_err());
    }

    #[test]
    fn unequal_risk_examples() {
        let z = [0.0; 3];
        assert_eq!(unequal_risk(&stats_from(&[0.4; 3], &z, &z, &z), RiskField::ZeroOne).unwrap(), 0.0);
        let r = unequal_risk(&stats_from(&[0.2, 0.5, 0.3], &z, &z, &z), RiskField::ZeroOne).unwrap();
        assert!((r - 0.3).abs() < 1e-15);
        let z2 = [0.0; 2];
        assert_eq!(unequal_risk(&stats_from(&[0.0, 1.0], &z2, &z2, &z2), RiskField::ZeroOne).unwrap(), 1.0);
        assert!(unequal_risk(&stats_from(&[0.1], &[0.0], &[0.0], &[0.0]), RiskField::ZeroOne).is_err());
        let r = unequal_risk(&stats_from(&z2, &[0.9, 0.6], &z2, &z2), RiskField::OneMinusF1).unwrap();
        assert!((r - 0.3).abs() < 1e-12);
    }

    #[test]
    fn delta_variance_examples() {
        let z = [0.0; 3];
        assert_eq!(delta_variance(&stats_from(&z, &[0.7; 3], &z, &z)).unwrap(), 0.0);
        let z2 = [0.0; 2];
        assert_eq!(delta_variance(&stats_from(&z2, &[0.0, 1.0], &z2, &z2)).unwrap(), 0.25);
        let v = delta_variance(&stats_from(&z, &[0.2, 0.4, 0.6], &z, &z)).unwrap();
        assert!((v - 0.08 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn p_rule_examples() {
        let z = [0.0; 2];
        assert_eq!(p_rule(&stats_from(&z, &z, &[0.3, 0.3], &z)).unwrap(), 1.0);
        assert!((p_rule(&stats_from(&z, &z, &[0.2, 0.5], &z)).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(p_rule(&stats_from(&z, &z, &[0.3, 0.0], &z)).unwrap(), 0.0);
        assert_eq!(p_rule(&stats_from(&z, &z, &[0.0, 0.0], &z)).unwrap(), 1.0);
    }

    #[test]
    fn modified_p_rule_examples() {
        let z = [0.0; 2];
        let s = stats_from(&z, &z, &[0.2, 0.5], &[0.2, 0.5]);
        assert_eq!(modified_p_rule(&s).unwrap(), 1.0);
        let s = stats_from(&z, &z, &[0.3, 0.2], &[0.1, 0.2]);
        assert!((modified_p_rule(&s).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let scaled = stats_from(&z, &z, &[0.15, 0.1], &[0.1, 0.2]);
        assert!((modified_p_rule(&scaled).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        let bad = stats_from(&z, &z, &[0.3, 0.2], &[0.0, 0.2]);
        assert!(matches!(
            modified_p_rule(&bad),
            Err(Error::UndefinedMetric { group }) if group == "g0"
        ));
    }
}
