//! Attribute inference from private PCA projections.
//!
//! The projection spends the whole ε; the attacker network that reads the
//! projected features is trained without noise.

use std::fs;
use std::path::Path;
use std::sync::Mutex;

use rayon::prelude::*;

use crate::datasets::{Dataset, Splits};
use crate::error::{Error, Result};
use crate::harness::config::{AttackTarget, ExperimentConfig, FfnConfig};
use crate::harness::ffn::train_ffn;
use crate::harness::run::{load_data, private_projections, row_seed};
use crate::models::Model;
use crate::randmat::{Matrix, SeededRng};

pub const ATTACK_FILE: &str = "attack.csv";
pub const ATTACK_HEADER: &str = "epsilon,repetition,target,attacker_accuracy,baseline,advantage";

#[derive(Clone, Debug, PartialEq)]
pub struct AttackRow {
    pub epsilon: f64,
    pub repetition: usize,
    pub target: AttackTarget,
    pub attacker_accuracy: f64,
    /// Test frequency of the most common training class.
    pub baseline: f64,
}

impl AttackRow {
    pub fn advantage(&self) -> f64 {
        self.attacker_accuracy - self.baseline
    }

    pub fn to_csv_line(&self) -> String {
        let target = match self.target {
            AttackTarget::Group => "group",
            AttackTarget::Label => "label",
        };
        format!(
            "{},{},{},{},{},{}",
            self.epsilon,
            self.repetition,
            target,
            self.attacker_accuracy,
            self.baseline,
            self.advantage()
        )
    }
}

/// Class ids the attacker tries to recover, with the number of classes.
pub fn attack_targets(data: &Dataset, target: AttackTarget) -> (Vec<usize>, usize) {
    match target {
        AttackTarget::Group => (data.group_ids.clone(), data.num_groups()),
        AttackTarget::Label => (data.labels.iter().map(|&l| usize::from(l)).collect(), 2),
    }
}

/// Test frequency of the class that is most common in training.
pub fn majority_baseline(train: &[usize], test: &[usize], classes: usize) -> f64 {
    let mut counts = vec![0usize; classes];
    for &c in train {
        counts[c] += 1;
    }
    let top = (0..classes).max_by_key(|&c| (counts[c], std::cmp::Reverse(c))).unwrap_or(0);
    test.iter().filter(|&&c| c == top).count() as f64 / test.len().max(1) as f64
}

/// Fits one network per class (one-vs-rest, or a single network for two
/// classes) on `train_x` and returns accuracy of the arg-max on `test_x`.
pub fn attacker_accuracy(
    features: [&Matrix; 3],
    targets: [&[usize]; 3],
    classes: usize,
    ffn: &FfnConfig,
    rng: &SeededRng,
) -> Result<f64> {
    let [train_x, val_x, test_x] = features;
    let [train_t, val_t, test_t] = targets;
    if test_t.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let indicator = |t: &[usize], c: usize| -> Vec<f64> { t.iter().map(|&v| f64::from(u8::from(v == c))).collect() };
    let scored: Vec<usize> = if classes == 2 { vec![1] } else { (0..classes).collect() };
    let mut scores = vec![vec![0.0; test_x.rows()]; classes];
    for &c in &scored {
        let (ty, vy) = (indicator(train_t, c), indicator(val_t, c));
        let model = train_ffn(train_x, &ty, Some((val_x, &vy)), ffn, &mut rng.child(c as u64))?;
        for (i, s) in scores[c].iter_mut().enumerate() {
            *s = model.predict(test_x.row(i));
        }
    }
    if classes == 2 {
        scores[0] = scores[1].iter().map(|p| 1.0 - p).collect();
    }
    let correct = (0..test_x.rows())
        .filter(|&i| {
            let guess = (0..classes)
                .max_by(|&a, &b| scores[a][i].total_cmp(&scores[b][i]).then(b.cmp(&a)))
                .unwrap_or(0);
            guess == test_t[i]
        })
        .count();
    Ok(correct as f64 / test_t.len() as f64)
}

/// Attack on the ε-private projection for one grid point.
pub fn attack_single(config: &ExperimentConfig, data: &Splits, epsilon: f64, repetition: usize) -> Result<AttackRow> {
    let rng = SeededRng::new(row_seed(config.seed, epsilon, repetition));
    let [train, validation, test] = private_projections(config, data, epsilon, &rng)?;
    let (train_t, classes) = attack_targets(&data.train, config.attack_target);
    let (val_t, _) = attack_targets(&data.validation, config.attack_target);
    let (test_t, _) = attack_targets(&data.test, config.attack_target);
    let attacker_accuracy = attacker_accuracy(
        [&train, &validation, &test],
        [&train_t, &val_t, &test_t],
        classes,
        &config.ffn,
        &rng.child(1),
    )?;
    Ok(AttackRow {
        epsilon,
        repetition,
        target: config.attack_target,
        attacker_accuracy,
        baseline: majority_baseline(&train_t, &test_t, classes),
    })
}

/// Runs the attack over the whole grid and writes `out_dir/attack.csv`.
pub fn run_attack(config: &ExperimentConfig, out_dir: &Path) -> Result<Vec<AttackRow>> {
    config.validate()?;
    let data = load_data(config)?;
    let tasks: Vec<(f64, usize)> = config
        .grid
        .values()?
        .into_iter()
        .flat_map(|e| (0..config.repetitions).map(move |r| (e, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.worker_threads())
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let first_error = Mutex::new(None);
    let rows: Vec<Option<AttackRow>> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(e, r)| match attack_single(config, &data, e, r) {
                Ok(row) => Some(row),
                Err(err) => {
                    first_error.lock().unwrap_or_else(|p| p.into_inner()).get_or_insert(err);
                    None
                }
            })
            .collect()
    });
    if let Some(err) = first_error.into_inner().unwrap_or_else(|p| p.into_inner()) {
        return Err(err);
    }
    let rows: Vec<AttackRow> = rows.into_iter().flatten().collect();

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut text = format!("{ATTACK_HEADER}\n");
    for row in &rows {
        text.push_str(&row.to_csv_line());
        text.push('\n');
    }
    let path = out_dir.join(ATTACK_FILE);
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(rows)
}
