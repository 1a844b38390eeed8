//! Single runs, ε sweeps, and the results CSV.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use rayon::prelude::*;

use crate::accountant;
use crate::datasets::{load_csv_with_groups, synth_generate, Dataset, Split, Splits};
use crate::dppca::{dp_pca, normalize_rows, project};
use crate::dpsgd::{predict_labels, train_private, DpSgdConfig, ModelSpec, OrderGrid};
use crate::error::{Error, Result};
use crate::fairmetrics::{self, group_stats, GroupStats};
use crate::harness::config::{DataSource, ExperimentConfig, Pipeline};
use crate::harness::ffn::train_ffn;
use crate::models::Model;
use crate::randmat::{derive_seed, SeededRng};

pub const RESULTS_FILE: &str = "results.csv";

const LEADING: [&str; 7] = [
    "epsilon",
    "repetition",
    "accuracy",
    "unequal_risk",
    "delta_variance",
    "p_rule",
    "modified_p_rule",
];
const TRAILING: [&str; 5] = ["phi", "sigma", "steps", "sampling_rate", "wall_time_s"];

/// Exact results header for a group registry.
pub fn results_header(group_names: &[String]) -> String {
    let mut cols: Vec<String> = LEADING.iter().map(|s| s.to_string()).collect();
    for g in group_names {
        cols.push(format!("risk_{g}"));
        cols.push(format!("f1_{g}"));
    }
    cols.extend(TRAILING.iter().map(|s| s.to_string()));
    cols.join(",")
}

/// Checks `header` against the contract and returns the group names it lists.
pub fn parse_results_header(header: &str) -> Result<Vec<String>> {
    let cols: Vec<&str> = header.split(',').collect();
    let bad = || Error::arg(format!("results header does not match the expected columns: '{header}'"));
    if cols.len() < LEADING.len() + TRAILING.len() || !(cols.len() - LEADING.len() - TRAILING.len()).is_multiple_of(2) {
        return Err(bad());
    }
    if cols[..LEADING.len()] != LEADING || cols[cols.len() - TRAILING.len()..] != TRAILING {
        return Err(bad());
    }
    let middle = &cols[LEADING.len()..cols.len() - TRAILING.len()];
    let mut groups = Vec::with_capacity(middle.len() / 2);
    for pair in middle.chunks(2) {
        let g = pair[0].strip_prefix("risk_").ok_or_else(bad)?;
        if pair[1].strip_prefix("f1_") != Some(g) {
            return Err(bad());
        }
        groups.push(g.to_string());
    }
    Ok(groups)
}

/// One row of the results CSV. Undefined metrics are NaN.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub epsilon: f64,
    pub repetition: usize,
    pub accuracy: f64,
    pub unequal_risk: f64,
    pub delta_variance: f64,
    pub p_rule: f64,
    pub modified_p_rule: f64,
    pub group_risk: Vec<f64>,
    pub group_f1: Vec<f64>,
    pub phi: f64,
    pub sigma: f64,
    pub steps: usize,
    pub sampling_rate: f64,
    pub wall_time_s: f64,
}

impl ResultRow {
    pub fn to_csv_line(&self) -> String {
        let mut cells = vec![
            self.epsilon.to_string(),
            self.repetition.to_string(),
            self.accuracy.to_string(),
            self.unequal_risk.to_string(),
            self.delta_variance.to_string(),
            self.p_rule.to_string(),
            self.modified_p_rule.to_string(),
        ];
        for (r, f) in self.group_risk.iter().zip(&self.group_f1) {
            cells.push(r.to_string());
            cells.push(f.to_string());
        }
        cells.push(self.phi.to_string());
        cells.push(self.sigma.to_string());
        cells.push(self.steps.to_string());
        cells.push(self.sampling_rate.to_string());
        cells.push(format!("{:.3}", self.wall_time_s));
        cells.join(",")
    }

    pub fn parse(line: &str, groups: usize) -> Result<ResultRow> {
        let cells: Vec<&str> = line.split(',').collect();
        let expected = LEADING.len() + 2 * groups + TRAILING.len();
        if cells.len() != expected {
            return Err(Error::arg(format!("row has {} cells, expected {expected}", cells.len())));
        }
        let f = |i: usize| -> Result<f64> {
            cells[i]
                .parse()
                .map_err(|_| Error::arg(format!("cell {} is not a number: '{}'", i + 1, cells[i])))
        };
        let u = |i: usize| -> Result<usize> {
            cells[i]
                .parse()
                .map_err(|_| Error::arg(format!("cell {} is not a count: '{}'", i + 1, cells[i])))
        };
        let t = LEADING.len() + 2 * groups;
        Ok(ResultRow {
            epsilon: f(0)?,
            repetition: u(1)?,
            accuracy: f(2)?,
            unequal_risk: f(3)?,
            delta_variance: f(4)?,
            p_rule: f(5)?,
            modified_p_rule: f(6)?,
            group_risk: (0..groups).map(|g| f(7 + 2 * g)).collect::<Result<_>>()?,
            group_f1: (0..groups).map(|g| f(8 + 2 * g)).collect::<Result<_>>()?,
            phi: f(t)?,
            sigma: f(t + 1)?,
            steps: u(t + 2)?,
            sampling_rate: f(t + 3)?,
            wall_time_s: f(t + 4)?,
        })
    }
}

/// A row that could not be produced, kept as a comment line in the results file.
#[derive(Clone, Debug, PartialEq)]
pub struct RowFailure {
    pub epsilon: f64,
    pub repetition: usize,
    pub code: String,
    pub message: String,
}

impl RowFailure {
    pub fn to_csv_line(&self) -> String {
        let message = self.message.replace(['\n', '\r'], " ");
        format!("#error,{},{},{},{}", self.epsilon, self.repetition, self.code, message)
    }
}

/// Seed of the row at (`epsilon`, `repetition`) under `master`.
pub fn row_seed(master: u64, epsilon: f64, repetition: usize) -> u64 {
    let key = (epsilon * 1e9).round() as u64;
    derive_seed(derive_seed(master, key), repetition as u64)
}

/// Loads or generates the splits a config refers to.
pub fn load_data(config: &ExperimentConfig) -> Result<Splits> {
    match &config.data {
        DataSource::Synthetic(s) => synth_generate(s),
        DataSource::Files { train, validation, test } => {
            let groups = config.group_names();
            let train = load_csv_with_groups(train, Split::Train, &groups)?;
            let test = load_csv_with_groups(test, Split::Test, &groups)?;
            let validation = match validation {
                Some(p) => load_csv_with_groups(p, Split::Validation, &groups)?,
                None => train.clone(),
            };
            Ok(Splits { train, validation, test })
        }
    }
}

/// Metrics of `predictions` against `data`'s labels.
pub fn evaluate(
    predictions: &[bool],
    data: &Dataset,
    risk_field: fairmetrics::RiskField,
) -> Result<(f64, GroupStats, [f64; 4])> {
    let stats = group_stats(predictions, &data.labels, &data.group_ids, &data.group_names)?;
    let metrics = [
        fairmetrics::unequal_risk(&stats, risk_field)?,
        fairmetrics::delta_variance(&stats)?,
        fairmetrics::p_rule(&stats)?,
        fairmetrics::modified_p_rule(&stats).unwrap_or(f64::NAN),
    ];
    Ok((fairmetrics::accuracy(predictions, &data.labels), stats, metrics))
}

struct Privacy {
    phi: f64,
    sigma: f64,
    steps: usize,
    sampling_rate: f64,
}

/// Trains the configured pipeline at `epsilon` and evaluates it on the test split.
pub fn run_single(config: &ExperimentConfig, data: &Splits, epsilon: f64, repetition: usize) -> Result<ResultRow> {
    run_single_saving(config, data, epsilon, repetition, None)
}

/// [`run_single`], also writing the trained artifacts into `save_dir`:
/// `model.bin` for DP-SGD pipelines, `projection.bin` and `ffn.bin` for
/// pca_ffn.
pub fn run_single_saving(
    config: &ExperimentConfig,
    data: &Splits,
    epsilon: f64,
    repetition: usize,
    save_dir: Option<&Path>,
) -> Result<ResultRow> {
    let start = Instant::now();
    let rng = SeededRng::new(row_seed(config.seed, epsilon, repetition));
    if let Some(dir) = save_dir {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let (predictions, privacy) = match config.pipeline {
        Pipeline::Logistic | Pipeline::GroupDroMlp => train_dpsgd(config, data, epsilon, &rng, save_dir)?,
        Pipeline::PcaFfn => train_pca_ffn(config, data, epsilon, &rng, save_dir)?,
    };
    let (accuracy, stats, [unequal_risk, delta_variance, p_rule, modified_p_rule]) =
        evaluate(&predictions, &data.test, config.risk_field)?;
    let groups = data.test.num_groups();
    let per_group = |f: fn(&fairmetrics::GroupStat) -> f64| -> Vec<f64> {
        (0..groups).map(|g| stats.get(g).map_or(f64::NAN, f)).collect()
    };
    Ok(ResultRow {
        epsilon,
        repetition,
        accuracy,
        unequal_risk,
        delta_variance,
        p_rule,
        modified_p_rule,
        group_risk: per_group(|s| s.risk),
        group_f1: per_group(|s| s.f1),
        phi: privacy.phi,
        sigma: privacy.sigma,
        steps: privacy.steps,
        sampling_rate: privacy.sampling_rate,
        wall_time_s: if config.record_wall_time {
            start.elapsed().as_secs_f64()
        } else {
            0.0
        },
    })
}

/// DP-SGD configuration for one row: σ calibrated to `epsilon` over the
/// actual number of steps on `n` training examples.
///
/// Targets below what the default order grid can certify within the σ
/// range are calibrated, and later accounted, on the extended grid.
pub fn calibrated_dpsgd(config: &ExperimentConfig, n: usize, epsilon: f64, seed: u64) -> Result<DpSgdConfig> {
    let mut dp = DpSgdConfig {
        seed,
        noise_multiplier: 0.0,
        ..config.dpsgd
    };
    let calibrate = |dp: &DpSgdConfig| {
        accountant::calibrate_sigma_with_orders(epsilon, config.phi, dp.steps(n), dp.sampling_rate(n), &dp.orders.orders())
    };
    dp.noise_multiplier = match calibrate(&dp) {
        Err(Error::CalibrationRange { .. }) if dp.orders == OrderGrid::Default => {
            dp.orders = OrderGrid::Extended;
            calibrate(&dp)?
        }
        other => other?,
    };
    Ok(dp)
}

fn train_dpsgd(
    config: &ExperimentConfig,
    data: &Splits,
    epsilon: f64,
    rng: &SeededRng,
    save_dir: Option<&Path>,
) -> Result<(Vec<bool>, Privacy)> {
    let train = &data.train;
    let dp = calibrated_dpsgd(config, train.len(), epsilon, rng.child(0).seed())?;
    let spec = match config.pipeline {
        Pipeline::GroupDroMlp => {
            let mut dims = vec![train.dim()];
            dims.extend(&config.mlp_hidden);
            dims.push(1);
            ModelSpec::GroupDroMlp {
                dims,
                loss: config.loss,
                eta: config.groupdro_eta,
            }
        }
        _ => ModelSpec::Logistic,
    };
    let trained = train_private(&spec, train, &dp, config.phi)?;
    if let Some(dir) = save_dir {
        trained.model.save(&dir.join("model.bin"))?;
    }
    let report = trained.privacy;
    Ok((
        trained.predict_labels(&data.test),
        Privacy {
            phi: report.phi,
            sigma: report.sigma,
            steps: report.steps,
            sampling_rate: report.sampling_rate,
        },
    ))
}

/// Private projection fitted on normalized train rows, applied to all splits.
pub(crate) fn private_projections(
    config: &ExperimentConfig,
    data: &Splits,
    epsilon: f64,
    rng: &SeededRng,
) -> Result<[crate::randmat::Matrix; 3]> {
    private_projections_saving(config, data, epsilon, rng, None)
}

fn private_projections_saving(
    config: &ExperimentConfig,
    data: &Splits,
    epsilon: f64,
    rng: &SeededRng,
    save_dir: Option<&Path>,
) -> Result<[crate::randmat::Matrix; 3]> {
    let train = normalize_rows(&data.train.features);
    let projection = dp_pca(&train, config.pca_k, epsilon, &mut rng.child(0))?;
    if let Some(dir) = save_dir {
        projection.save(&dir.join("projection.bin"))?;
    }
    Ok([
        project(&train, &projection)?,
        project(&normalize_rows(&data.validation.features), &projection)?,
        project(&normalize_rows(&data.test.features), &projection)?,
    ])
}

fn train_pca_ffn(
    config: &ExperimentConfig,
    data: &Splits,
    epsilon: f64,
    rng: &SeededRng,
    save_dir: Option<&Path>,
) -> Result<(Vec<bool>, Privacy)> {
    let [train, validation, test] = private_projections_saving(config, data, epsilon, rng, save_dir)?;
    let y = |d: &Dataset| -> Vec<f64> { d.labels.iter().map(|&l| f64::from(u8::from(l))).collect() };
    let (ty, vy) = (y(&data.train), y(&data.validation));
    let model = train_ffn(&train, &ty, Some((&validation, &vy)), &config.ffn, &mut rng.child(1))?;
    if let Some(dir) = save_dir {
        model.save(&dir.join("ffn.bin"))?;
    }
    let test_data = data.test.with_features(test)?;
    Ok((
        predict_labels(&model, &test_data),
        Privacy {
            phi: 0.0,
            sigma: 0.0,
            steps: 0,
            sampling_rate: 1.0,
        },
    ))
}

/// Outcome of [`run_sweep`].
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SweepResult {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<RowFailure>,
    /// Rows taken from an existing file by `--resume`.
    pub resumed: usize,
}

impl SweepResult {
    pub fn total(&self) -> usize {
        self.rows.len() + self.failures.len()
    }

    /// More than 10% of rows failed.
    pub fn partial_failure(&self) -> bool {
        self.failures.len() * 10 > self.total()
    }
}

enum Outcome {
    Row(ResultRow),
    Failed(RowFailure),
}

impl Outcome {
    fn line(&self) -> String {
        match self {
            Outcome::Row(r) => r.to_csv_line(),
            Outcome::Failed(f) => f.to_csv_line(),
        }
    }
}

/// Runs every (ε, repetition) of the grid into `out_dir/results.csv`.
///
/// Rows are appended as they finish; the file is rewritten in grid order at
/// the end. With `resume`, complete rows already present are kept and only
/// the missing or failed ones are run.
pub fn run_sweep(config: &ExperimentConfig, out_dir: &Path, resume: bool) -> Result<SweepResult> {
    config.validate()?;
    let data = load_data(config)?;
    let header = results_header(&data.test.group_names);
    let groups = data.test.num_groups();
    let grid = config.grid.values()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let path = out_dir.join(RESULTS_FILE);

    let tasks: Vec<(f64, usize)> = grid
        .iter()
        .flat_map(|&e| (0..config.repetitions).map(move |r| (e, r)))
        .collect();
    let mut done: HashMap<(String, usize), ResultRow> = HashMap::new();
    if resume && path.exists() {
        done = read_completed(&path, &header, groups)?;
        done.retain(|(e, r), _| tasks.iter().any(|&(te, tr)| te.to_string() == *e && tr == *r));
    }
    let resumed = done.len();

    // start the file over with the rows that are kept
    {
        let mut text = format!("{header}\n");
        for &(e, r) in &tasks {
            if let Some(row) = done.get(&(e.to_string(), r)) {
                text.push_str(&row.to_csv_line());
                text.push('\n');
            }
        }
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    }

    let pending: Vec<(f64, usize)> = tasks
        .iter()
        .copied()
        .filter(|&(e, r)| !done.contains_key(&(e.to_string(), r)))
        .collect();
    let sink = Mutex::new(
        OpenOptions::new()
            .append(true)
            .open(&path)
            .map_err(|e| Error::io(&path, e))?,
    );
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_threads())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let outcomes: Vec<Result<Outcome>> = pool.install(|| {
        pending
            .par_iter()
            .map(|&(epsilon, repetition)| {
                let outcome = match run_single(config, &data, epsilon, repetition) {
                    Ok(row) => Outcome::Row(row),
                    Err(e) => Outcome::Failed(RowFailure {
                        epsilon,
                        repetition,
                        code: e.code().to_string(),
                        message: e.to_string(),
                    }),
                };
                append_line(&sink, &path, &outcome.line())?;
                Ok(outcome)
            })
            .collect()
    });

    let mut finished: HashMap<(String, usize), Outcome> = HashMap::new();
    for outcome in outcomes {
        let outcome = outcome?;
        let key = match &outcome {
            Outcome::Row(r) => (r.epsilon.to_string(), r.repetition),
            Outcome::Failed(f) => (f.epsilon.to_string(), f.repetition),
        };
        finished.insert(key, outcome);
    }
    for (key, row) in done {
        finished.insert(key, Outcome::Row(row));
    }

    let mut result = SweepResult {
        resumed,
        ..SweepResult::default()
    };
    let mut text = format!("{header}\n");
    for &(e, r) in &tasks {
        let outcome = finished
            .remove(&(e.to_string(), r))
            .expect("every task has an outcome");
        text.push_str(&outcome.line());
        text.push('\n');
        match outcome {
            Outcome::Row(row) => result.rows.push(row),
            Outcome::Failed(f) => result.failures.push(f),
        }
    }
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(result)
}

fn append_line(sink: &Mutex<File>, path: &PathBuf, line: &str) -> Result<()> {
    let mut file = sink.lock().unwrap_or_else(|p| p.into_inner());
    writeln!(file, "{line}")
        .and_then(|_| file.flush())
        .map_err(|e| Error::io(path, e))
}

// Complete data rows of an earlier run, keyed by (ε as written, repetition).
// Error lines and a torn final line are dropped so that those rows run again.
fn read_completed(path: &Path, header: &str, groups: usize) -> Result<HashMap<(String, usize), ResultRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.split_inclusive('\n');
    match lines.next() {
        Some(first) if first.trim_end() == header => {}
        _ => {
            return Err(Error::Config(format!(
                "{} has a different header; cannot resume into it",
                path.display()
            )))
        }
    }
    let mut rows = HashMap::new();
    for line in lines {
        let Some(body) = line.strip_suffix('\n') else { continue };
        if body.starts_with('#') {
            continue;
        }
        if let Ok(row) = ResultRow::parse(body, groups) {
            let key = body.split(',').next().unwrap_or_default().to_string();
            rows.insert((key, row.repetition), row);
        }
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_contract() {
        let groups = crate::datasets::civilcomments_groups();
        let h = results_header(&groups);
        assert!(h.starts_with("epsilon,repetition,accuracy,unequal_risk,delta_variance,p_rule,modified_p_rule,risk_LGBTQ,f1_LGBTQ,risk_male,"));
        assert!(h.ends_with(",risk_White,f1_White,phi,sigma,steps,sampling_rate,wall_time_s"));
        assert!(h.contains("risk_other religions,f1_other religions"));
        assert_eq!(parse_results_header(&h).unwrap(), groups);
        assert!(parse_results_header("epsilon,accuracy").is_err());
        assert!(parse_results_header(&h.replace("f1_male", "f1_female")).is_err());
    }

    #[test]
    fn row_round_trip() {
        let row = ResultRow {
            epsilon: 0.3,
            repetition: 2,
            accuracy: 0.8125,
            unequal_risk: 0.1,
            delta_variance: 1e-3,
            p_rule: 0.5,
            modified_p_rule: f64::NAN,
            group_risk: vec![0.1, 0.2],
            group_f1: vec![0.9, f64::NAN],
            phi: 1e-5,
            sigma: 3.25,
            steps: 100,
            sampling_rate: 0.01,
            wall_time_s: 0.0,
        };
        let line = row.to_csv_line();
        assert!(line.starts_with("0.3,2,0.8125,0.1,0.001,0.5,NaN,0.1,0.9,0.2,NaN,0.00001,3.25,100,0.01,0.000"));
        let back = ResultRow::parse(&line, 2).unwrap();
        assert_eq!(back.sigma, 3.25);
        assert!(back.modified_p_rule.is_nan());
        assert!(ResultRow::parse(&line, 3).is_err());
    }

    #[test]
    fn seeds_differ_across_rows() {
        let a = row_seed(0, 0.1, 0);
        assert_ne!(a, row_seed(0, 0.1, 1));
        assert_ne!(a, row_seed(0, 0.2, 0));
        assert_ne!(a, row_seed(1, 0.1, 0));
        assert_eq!(a, row_seed(0, 0.1, 0));
    }
}
