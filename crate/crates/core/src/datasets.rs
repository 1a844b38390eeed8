//! Datasets of `(features, label, group)` triples, their CSV format, the
//! CivilComments target-group registry and a synthetic generator that stands
//! in for precomputed sentence embeddings.
//!
//! CSV layout: header `f0,f1,...,f{d-1},label,group`, one example per line,
//! label in `{0,1}`, group given by its registered name. The group column is
//! last, so names containing spaces are written verbatim.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::randmat::{Matrix, SeededRng};

/// The eight CivilComments target groups, in registry order.
pub fn civilcomments_groups() -> Vec<String> {
    [
        "LGBTQ",
        "male",
        "female",
        "Christian",
        "Muslim",
        "other religions",
        "Black",
        "White",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<bool>,
    pub group_ids: Vec<usize>,
    pub group_names: Vec<String>,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        features: Matrix,
        labels: Vec<bool>,
        group_ids: Vec<usize>,
        group_names: Vec<String>,
        split: Split,
    ) -> Result<Self> {
        if features.rows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if labels.len() != features.rows() || group_ids.len() != features.rows() {
            return Err(Error::arg(format!(
                "{} feature rows, {} labels, {} group ids",
                features.rows(),
                labels.len(),
                group_ids.len()
            )));
        }
        if let Some(g) = group_ids.iter().find(|&&g| g >= group_names.len()) {
            return Err(Error::arg(format!(
                "group id {g} out of range for {} groups",
                group_names.len()
            )));
        }
        Ok(Dataset {
            features,
            labels,
            group_ids,
            group_names,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_groups(&self) -> usize {
        self.group_names.len()
    }

    pub fn x(&self, i: usize) -> &[f64] {
        self.features.row(i)
    }

    pub fn y(&self, i: usize) -> f64 {
        if self.labels[i] {
            1.0
        } else {
            0.0
        }
    }

    /// Same examples with different features (e.g. a projection).
    pub fn with_features(&self, features: Matrix) -> Result<Dataset> {
        Dataset::new(
            features,
            self.labels.clone(),
            self.group_ids.clone(),
            self.group_names.clone(),
            self.split,
        )
    }

    /// Fraction of the most frequent label.
    pub fn majority_rate(&self) -> f64 {
        let pos = self.labels.iter().filter(|&&l| l).count() as f64;
        let n = self.len() as f64;
        pos.max(n - pos) / n
    }

    pub fn group_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_groups()];
        for &g in &self.group_ids {
            counts[g] += 1;
        }
        counts
    }
}

/// Reads a dataset whose group names come from the CivilComments registry.
pub fn load_csv(path: &Path, split: Split) -> Result<Dataset> {
    load_csv_with_groups(path, split, &civilcomments_groups())
}

pub fn load_csv_with_groups(path: &Path, split: Split, group_names: &[String]) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, &path.display().to_string(), split, group_names)
}

pub fn parse_csv(text: &str, origin: &str, split: Split, group_names: &[String]) -> Result<Dataset> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_string(),
        line,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "missing header".into()))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 || cols[cols.len() - 2] != "label" || cols[cols.len() - 1] != "group" {
        return Err(parse_err(1, "header must end with 'label,group'".into()));
    }
    let d = cols.len() - 2;
    for (j, c) in cols[..d].iter().enumerate() {
        if *c != format!("f{j}") {
            return Err(parse_err(1, format!("column {} must be named 'f{j}', found '{c}'", j + 1)));
        }
    }

    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut groups = Vec::new();
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != d + 2 {
            return Err(parse_err(
                line_no,
                format!("expected {} columns, found {}", d + 2, fields.len()),
            ));
        }
        for (j, f) in fields[..d].iter().enumerate() {
            let v: f64 = f.parse().map_err(|_| {
                parse_err(line_no, format!("column {} ('f{j}'): '{f}' is not a number", j + 1))
            })?;
            if !v.is_finite() {
                return Err(parse_err(line_no, format!("column {} ('f{j}'): value is not finite", j + 1)));
            }
            data.push(v);
        }
        labels.push(match fields[d] {
            "0" => false,
            "1" => true,
            other => {
                return Err(parse_err(
                    line_no,
                    format!("column {} ('label'): '{other}' is not 0 or 1", d + 1),
                ))
            }
        });
        let name = fields[d + 1];
        let g = group_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| parse_err(line_no, format!("column {} ('group'): unknown group '{name}'", d + 2)))?;
        groups.push(g);
    }
    if labels.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let features = Matrix::new(labels.len(), d, data)?;
    Dataset::new(features, labels, groups, group_names.to_vec(), split)
}

/// CSV text of `dataset`; features carry 17 significant digits.
pub fn to_csv_string(dataset: &Dataset) -> String {
    let d = dataset.dim();
    let mut out = String::with_capacity(dataset.len() * (d * 24 + 16));
    for j in 0..d {
        let _ = write!(out, "f{j},");
    }
    out.push_str("label,group\n");
    for i in 0..dataset.len() {
        for v in dataset.x(i) {
            let _ = write!(out, "{v:.16e},");
        }
        let _ = writeln!(
            out,
            "{},{}",
            u8::from(dataset.labels[i]),
            dataset.group_names[dataset.group_ids[i]]
        );
    }
    out
}

pub fn save_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    fs::write(path, to_csv_string(dataset)).map_err(|e| Error::io(path, e))
}

/// Synthetic group-structured data.
///
/// Features are `label · separation · u + offset_g + N(0, I)` where `u` is a
/// fixed random unit direction and `offset_g` has norm
/// `group_signal_strength` and lives in the first `group_signal_dims`
/// coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthConfig {
    pub dims: usize,
    pub counts: Vec<usize>,
    pub priors: Vec<f64>,
    pub separation: f64,
    pub group_signal_dims: usize,
    pub group_signal_strength: f64,
    pub group_names: Vec<String>,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            dims: 64,
            counts: vec![3000, 2500, 2500, 1500, 600, 400, 1200, 1200],
            priors: vec![0.5, 0.3, 0.3, 0.2, 0.35, 0.35, 0.45, 0.45],
            separation: 2.0,
            group_signal_dims: 8,
            group_signal_strength: 8.0,
            group_names: civilcomments_groups(),
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let g = self.group_names.len();
        if self.counts.len() != g || self.priors.len() != g {
            return Err(Error::arg(format!(
                "{} group names, {} counts, {} priors",
                g,
                self.counts.len(),
                self.priors.len()
            )));
        }
        if self.dims == 0 {
            return Err(Error::arg("dims must be positive"));
        }
        if let Some(p) = self.priors.iter().find(|&&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::arg(format!("label prior {p} outside (0, 1)")));
        }
        if !(self.separation >= 0.0) || !(self.group_signal_strength >= 0.0) {
            return Err(Error::arg("separation and group signal strength must be >= 0"));
        }
        if self.group_signal_dims > self.dims {
            return Err(Error::arg(format!(
                "group_signal_dims {} exceeds dims {}",
                self.group_signal_dims, self.dims
            )));
        }
        if self.group_signal_strength > 0.0 && self.group_signal_dims == 0 {
            return Err(Error::arg("group signal needs group_signal_dims >= 1"));
        }
        for (name, &count) in self.group_names.iter().zip(&self.counts) {
            if count < 10 {
                return Err(Error::TooSmallGroup {
                    group: name.clone(),
                    count,
                });
            }
        }
        Ok(())
    }
}

/// Train / validation / test splits.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub validation: Dataset,
    pub test: Dataset,
}

const SPLIT_TENTHS: [usize; 3] = [7, 1, 2];

/// `m` items split 70/10/20: floors first, leftover items to the largest
/// remainders (earlier split wins ties).
pub fn stratified_allocation(m: usize) -> [usize; 3] {
    let mut alloc = SPLIT_TENTHS.map(|t| m * t / 10);
    let rem = SPLIT_TENTHS.map(|t| m * t % 10);
    let mut left = m - alloc.iter().sum::<usize>();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| rem[b].cmp(&rem[a]));
    for &s in order.iter().cycle() {
        if left == 0 {
            break;
        }
        alloc[s] += 1;
        left -= 1;
    }
    alloc
}

pub fn synth_generate(config: &SynthConfig) -> Result<Splits> {
    config.validate()?;
    let d = config.dims;
    let root = SeededRng::new(config.seed);

    let direction = root.child(0).unit_vector(d);
    let mut offset_rng = root.child(1);
    let offsets: Vec<Vec<f64>> = (0..config.counts.len())
        .map(|_| {
            let mut off = vec![0.0; d];
            if config.group_signal_strength > 0.0 {
                let v = offset_rng.unit_vector(config.group_signal_dims);
                for (o, vi) in off.iter_mut().zip(v) {
                    *o = config.group_signal_strength * vi;
                }
            }
            off
        })
        .collect();

    let mut sample_rng = root.child(2);
    let mut split_rng = root.child(3);
    let mut parts: [(Vec<f64>, Vec<bool>, Vec<usize>); 3] = Default::default();

    for (g, (&count, &prior)) in config.counts.iter().zip(&config.priors).enumerate() {
        let mut cells: [Vec<Vec<f64>>; 2] = Default::default();
        for _ in 0..count {
            let label = sample_rng.bernoulli(prior);
            let shift = if label { config.separation } else { 0.0 };
            let x: Vec<f64> = (0..d)
                .map(|j| shift * direction[j] + offsets[g][j] + sample_rng.standard_normal())
                .collect();
            cells[usize::from(label)].push(x);
        }
        for (label, mut rows) in cells.into_iter().enumerate() {
            split_rng.shuffle(&mut rows);
            let alloc = stratified_allocation(rows.len());
            let mut it = rows.into_iter();
            for (s, &take) in alloc.iter().enumerate() {
                for x in it.by_ref().take(take) {
                    parts[s].0.extend(x);
                    parts[s].1.push(label == 1);
                    parts[s].2.push(g);
                }
            }
        }
    }

    let [train, validation, test] = parts;
    let build = |(data, labels, groups): (Vec<f64>, Vec<bool>, Vec<usize>), split| {
        let rows = labels.len();
        Dataset::new(
            Matrix::new(rows, d, data)?,
            labels,
            groups,
            config.group_names.clone(),
            split,
        )
    };
    Ok(Splits {
        train: build(train, Split::Train)?,
        validation: build(validation, Split::Validation)?,
        test: build(test, Split::Test)?,
    })
}
