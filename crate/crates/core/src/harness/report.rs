//! Fits over sweep results, SVG plots, and standalone prediction scoring.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::analysis::{linear_fit, log_fit, FitModel, FitReport};
use crate::datasets::civilcomments_groups;
use crate::error::{Error, Result};
use crate::fairmetrics::{self, group_stats, RiskField};
use crate::harness::run::parse_results_header;

pub const ANALYSIS_FILE: &str = "analysis.csv";
pub const ANALYSIS_HEADER: &str = "metric,model,slope,intercept,r_squared,p_value,n_points";

/// Data rows of a results CSV, by column name.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultsTable {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl ResultsTable {
    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.starts_with('#') && !l.is_empty());
        let (_, header) = lines.next().ok_or_else(|| Error::Parse {
            path: origin.into(),
            line: 1,
            message: "missing header".into(),
        })?;
        parse_results_header(header)?;
        let columns: Vec<String> = header.split(',').map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, line) in lines {
            let cells: Vec<&str> = line.split(',').collect();
            if cells.len() != columns.len() {
                return Err(Error::Parse {
                    path: origin.into(),
                    line: i + 1,
                    message: format!("{} cells, header has {}", cells.len(), columns.len()),
                });
            }
            let row = cells
                .iter()
                .enumerate()
                .map(|(c, v)| {
                    v.parse::<f64>().map_err(|_| Error::Parse {
                        path: origin.into(),
                        line: i + 1,
                        message: format!("column '{}' is not a number: '{v}'", columns[c]),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            rows.push(row);
        }
        Ok(ResultsTable { columns, rows })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        let c = self
            .columns
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::arg(format!("results have no column '{name}'")))?;
        Ok(self.rows.iter().map(|r| r[c]).collect())
    }
}

/// Both fits of one metric against ε.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricAnalysis {
    pub metric: String,
    pub log: FitReport,
    pub linear: FitReport,
    /// Rows left out because the metric was undefined.
    pub dropped: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
}

pub fn analyze_metric(table: &ResultsTable, metric: &str) -> Result<MetricAnalysis> {
    let eps = table.column("epsilon")?;
    let values = table.column(metric)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(&values)
        .filter(|(_, y)| y.is_finite())
        .map(|(&x, &y)| (x, y))
        .unzip();
    if xs.len() < 3 {
        return Err(Error::arg(format!(
            "metric '{metric}' has {} usable points, at least 3 are needed",
            xs.len()
        )));
    }
    Ok(MetricAnalysis {
        metric: metric.to_string(),
        log: log_fit(&xs, &ys)?,
        linear: linear_fit(&xs, &ys)?,
        dropped: values.len() - xs.len(),
        xs,
        ys,
    })
}

pub fn analysis_csv(analyses: &[MetricAnalysis]) -> String {
    let mut out = format!("{ANALYSIS_HEADER}\n");
    for a in analyses {
        for fit in [&a.log, &a.linear] {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                a.metric,
                fit.model.name(),
                fit.slope,
                fit.intercept,
                fit.r_squared,
                fit.slope_p_value,
                fit.n
            );
        }
    }
    out
}

const SAMPLES: usize = 200;

fn sample_xs(a: &MetricAnalysis) -> Vec<f64> {
    let lo = a.xs.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = a.xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..SAMPLES)
        .map(|i| lo + (hi - lo) * i as f64 / (SAMPLES - 1) as f64)
        .collect()
}

/// Fitted curves sampled on the ε range, whitespace separated.
pub fn fit_samples_text(a: &MetricAnalysis) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# metric {}", a.metric);
    for fit in [&a.log, &a.linear] {
        let _ = writeln!(
            out,
            "# {}: slope {} intercept {} r_squared {} p_value {} n {}",
            fit.model.name(),
            fit.slope,
            fit.intercept,
            fit.r_squared,
            fit.slope_p_value,
            fit.n
        );
    }
    let _ = writeln!(out, "# dropped {}", a.dropped);
    out.push_str("epsilon log_fit linear_fit\n");
    for x in sample_xs(a) {
        let _ = writeln!(
            out,
            "{x} {} {}",
            FitModel::Logarithmic.eval(a.log.slope, a.log.intercept, x),
            FitModel::Linear.eval(a.linear.slope, a.linear.intercept, x)
        );
    }
    out
}

/// Scatter of the metric against ε with both fitted curves.
pub fn render_svg(a: &MetricAnalysis) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const LEFT: f64 = 70.0;
    const RIGHT: f64 = 20.0;
    const TOP: f64 = 40.0;
    const BOTTOM: f64 = 50.0;

    let curve_x = sample_xs(a);
    let log_y: Vec<f64> = curve_x
        .iter()
        .map(|&x| FitModel::Logarithmic.eval(a.log.slope, a.log.intercept, x))
        .collect();
    let lin_y: Vec<f64> = curve_x
        .iter()
        .map(|&x| FitModel::Linear.eval(a.linear.slope, a.linear.intercept, x))
        .collect();
    let (x0, x1) = bounds(a.xs.iter());
    let (mut y0, mut y1) = bounds(a.ys.iter().chain(&log_y).chain(&lin_y));
    if y1 - y0 < 1e-12 {
        y0 -= 0.5;
        y1 += 0.5;
    }
    let x1 = if x1 - x0 < 1e-12 { x0 + 1.0 } else { x1 };
    let px = |x: f64| LEFT + (x - x0) / (x1 - x0) * (W - LEFT - RIGHT);
    let py = |y: f64| H - BOTTOM - (y - y0) / (y1 - y0) * (H - TOP - BOTTOM);

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        W / 2.0,
        escape(&a.metric)
    );
    let (bx, by) = (H - BOTTOM, LEFT);
    let _ = writeln!(
        svg,
        r#"<line x1="{by}" y1="{bx}" x2="{}" y2="{bx}" stroke="black"/><line x1="{by}" y1="{TOP}" x2="{by}" y2="{bx}" stroke="black"/>"#,
        W - RIGHT
    );
    for i in 0..=5 {
        let t = i as f64 / 5.0;
        let (xv, yv) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        let _ = writeln!(
            svg,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            px(xv),
            bx + 18.0,
            tick(xv),
            by - 6.0,
            py(yv) + 4.0,
            tick(yv)
        );
    }
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" text-anchor="middle">epsilon</text>"#,
        (LEFT + W - RIGHT) / 2.0,
        H - 12.0
    );
    for (&x, &y) in a.xs.iter().zip(&a.ys) {
        let _ = writeln!(
            svg,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="#4a4a4a" fill-opacity="0.6"/>"##,
            px(x),
            py(y)
        );
    }
    for (ys, colour, fit) in [(&log_y, "#c0392b", &a.log), (&lin_y, "#2471a3", &a.linear)] {
        let points: Vec<String> = curve_x
            .iter()
            .zip(ys.iter())
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        let _ = writeln!(
            svg,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            points.join(" ")
        );
        let row = if fit.model == FitModel::Logarithmic { 0.0 } else { 16.0 };
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{}" fill="{colour}">{} R²={:.3} p={:.2e}</text>"#,
            LEFT + 10.0,
            TOP + 12.0 + row,
            fit.model.name(),
            fit.r_squared,
            fit.slope_p_value
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn tick(v: f64) -> String {
    if v.abs() >= 100.0 || v == v.round() {
        format!("{v:.0}")
    } else {
        format!("{v:.3}")
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Fits every requested metric and writes `analysis.csv`, `<metric>.svg`
/// and `<metric>.fit.txt` into `out_dir`.
pub fn analyze(results: &Path, metrics: &[String], out_dir: &Path) -> Result<Vec<MetricAnalysis>> {
    if metrics.is_empty() {
        return Err(Error::arg("no metrics requested"));
    }
    let table = ResultsTable::read(results)?;
    let analyses = metrics
        .iter()
        .map(|m| analyze_metric(&table, m))
        .collect::<Result<Vec<_>>>()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let write = |name: String, text: String| -> Result<()> {
        let path = out_dir.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };
    write(ANALYSIS_FILE.to_string(), analysis_csv(&analyses))?;
    for a in &analyses {
        write(format!("{}.svg", a.metric), render_svg(a))?;
        write(format!("{}.fit.txt", a.metric), fit_samples_text(a))?;
    }
    Ok(analyses)
}

/// Scores a `prediction,label,group` CSV and returns `metric,group,value` lines.
pub fn score_predictions(text: &str, origin: &str) -> Result<String> {
    let registry = civilcomments_groups();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == "prediction,label,group" => {}
        _ => {
            return Err(Error::Parse {
                path: origin.into(),
                line: 1,
                message: "expected header 'prediction,label,group'".into(),
            })
        }
    }
    let (mut preds, mut labels, mut groups) = (Vec::new(), Vec::new(), Vec::new());
    for (i, line) in lines {
        let err = |message: String| Error::Parse {
            path: origin.into(),
            line: i + 1,
            message,
        };
        let mut cells = line.splitn(3, ',');
        let (p, l, g) = match (cells.next(), cells.next(), cells.next()) {
            (Some(p), Some(l), Some(g)) => (p.trim(), l.trim(), g),
            _ => return Err(err("expected 3 columns".into())),
        };
        let bit = |v: &str, what: &str| match v {
            "0" => Ok(false),
            "1" => Ok(true),
            _ => Err(err(format!("{what} must be 0 or 1, got '{v}'"))),
        };
        preds.push(bit(p, "prediction")?);
        labels.push(bit(l, "label")?);
        groups.push(
            registry
                .iter()
                .position(|n| n == g)
                .ok_or_else(|| err(format!("unknown group '{g}'")))?,
        );
    }
    if preds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let stats = group_stats(&preds, &labels, &groups, &registry)?;
    let mut out = String::from("metric,group,value\n");
    let _ = writeln!(out, "accuracy,,{}", fairmetrics::accuracy(&preds, &labels));
    let _ = writeln!(out, "unequal_risk,,{}", fairmetrics::unequal_risk(&stats, RiskField::ZeroOne)?);
    let _ = writeln!(out, "unequal_risk_f1,,{}", fairmetrics::unequal_risk(&stats, RiskField::OneMinusF1)?);
    let _ = writeln!(out, "delta_variance,,{}", fairmetrics::delta_variance(&stats)?);
    let _ = writeln!(out, "p_rule,,{}", fairmetrics::p_rule(&stats)?);
    let modified = fairmetrics::modified_p_rule(&stats).unwrap_or(f64::NAN);
    let _ = writeln!(out, "modified_p_rule,,{modified}");
    for g in &stats.groups {
        let _ = writeln!(out, "count,{},{}", g.name, g.count);
        let _ = writeln!(out, "label_prior,{},{}", g.name, g.label_prior);
        let _ = writeln!(out, "positive_rate,{},{}", g.name, g.positive_rate);
        let _ = writeln!(out, "risk,{},{}", g.name, g.risk);
        let _ = writeln!(out, "f1,{},{}", g.name, g.f1);
    }
    Ok(out)
}

pub fn score_predictions_file(predictions: &Path, out: &Path) -> Result<()> {
    let text = fs::read_to_string(predictions).map_err(|e| Error::io(predictions, e))?;
    let report = score_predictions(&text, &predictions.display().to_string())?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(out, report).map_err(|e| Error::io(out, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::run::results_header;

    fn table_with(metric_values: &[(f64, f64)]) -> ResultsTable {
        let groups = vec!["a".to_string(), "b".to_string()];
        let mut text = format!("{}\n", results_header(&groups));
        for (i, &(e, v)) in metric_values.iter().enumerate() {
            text.push_str(&format!("{e},{i},{v},0.1,0,1,NaN,0,1,0,1,0.00001,1,10,0.1,0\n"));
        }
        ResultsTable::parse(&text, "mem").unwrap()
    }

    #[test]
    fn planted_log_curve() {
        let pts: Vec<(f64, f64)> = [0.1, 0.5, 1.0, 2.0, 5.0, 10.0]
            .iter()
            .map(|&e: &f64| (e, 2.0 * e.ln() + 0.25))
            .collect();
        let a = analyze_metric(&table_with(&pts), "accuracy").unwrap();
        assert!((a.log.slope - 2.0).abs() < 1e-9);
        assert!((a.log.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_metric_and_dropped_points() {
        let pts: Vec<(f64, f64)> = [0.1, 1.0, 2.0, 3.0].iter().map(|&e| (e, 0.5)).collect();
        let table = table_with(&pts);
        let a = analyze_metric(&table, "accuracy").unwrap();
        assert_eq!(a.linear.slope, 0.0);
        assert_eq!(a.linear.slope_p_value, 1.0);
        let err = analyze_metric(&table, "modified_p_rule").unwrap_err();
        assert!(err.to_string().contains("0 usable points"));
        assert!(analyze_metric(&table, "no_such_metric").is_err());
        let csv = analysis_csv(&[a]);
        assert_eq!(csv.lines().count(), 3);
        assert!(csv.starts_with(ANALYSIS_HEADER));
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(ResultsTable::parse("epsilon,accuracy\n1,0.5\n", "mem").is_err());
    }

    #[test]
    fn svg_is_well_formed() {
        let pts: Vec<(f64, f64)> = [0.1, 1.0, 2.0].iter().map(|&e| (e, e)).collect();
        let a = analyze_metric(&table_with(&pts), "accuracy").unwrap();
        let svg = render_svg(&a);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<circle").count(), 3);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(fit_samples_text(&a).lines().filter(|l| !l.starts_with('#')).count(), SAMPLES + 1);
    }

    #[test]
    fn scores_prediction_file() {
        let text = "prediction,label,group\n1,1,male\n0,1,male\n1,0,other religions\n0,0,other religions\n";
        let out = score_predictions(text, "mem").unwrap();
        assert!(out.contains("accuracy,,0.5\n"));
        assert!(out.contains("risk,other religions,0.5\n"));
        assert!(out.contains("p_rule,,1\n"));
        assert!(score_predictions("prediction,label,group\n2,1,male\n", "mem").is_err());
        assert!(score_predictions("prediction,label,group\n1,1,martian\n", "mem").is_err());
    }
}
