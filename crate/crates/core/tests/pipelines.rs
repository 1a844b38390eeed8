use dpfair::accountant::{account, default_orders};
use dpfair::datasets::SynthConfig;
use dpfair::dppca::normalize_rows;
use dpfair::dpsgd::{train_private, ModelSpec};
use dpfair::fairmetrics::accuracy;
use dpfair::harness::attack::{attack_targets, attacker_accuracy};
use dpfair::harness::ffn::train_ffn;
use dpfair::harness::run::{calibrated_dpsgd, row_seed, RESULTS_FILE};
use dpfair::harness::{
    attack_single, load_data, run_single, run_sweep, DataSource, EpsilonGrid, ExperimentConfig, FfnConfig, Pipeline,
};
use dpfair::models::Model;
use dpfair::randmat::SeededRng;

fn small_synth(dims: usize, signal_dims: usize) -> DataSource {
    DataSource::Synthetic(SynthConfig {
        dims,
        counts: vec![400, 300, 300, 200, 150, 150, 200, 200],
        group_signal_dims: signal_dims,
        ..SynthConfig::default()
    })
}

fn quick_ffn() -> FfnConfig {
    FfnConfig {
        epochs: 80,
        ..FfnConfig::default()
    }
}

#[test]
fn logistic_matches_noiseless_training_at_huge_epsilon() {
    let config = ExperimentConfig::new(Pipeline::Logistic);
    let data = load_data(&config).unwrap();
    let row = run_single(&config, &data, 1e6, 0).unwrap();

    let seed = SeededRng::new(row_seed(config.seed, 1e6, 0)).child(0).seed();
    let mut dp = calibrated_dpsgd(&config, data.train.len(), 1e6, seed).unwrap();
    dp.noise_multiplier = 0.0;
    let baseline = train_private(&ModelSpec::Logistic, &data.train, &dp, config.phi).unwrap();
    let base_acc = accuracy(&baseline.predict_labels(&data.test), &data.test.labels);
    assert!((row.accuracy - base_acc).abs() <= 0.02, "{} vs {base_acc}", row.accuracy);
}

#[test]
fn lossless_projection_matches_raw_features() {
    let mut config = ExperimentConfig::new(Pipeline::PcaFfn);
    config.data = small_synth(16, 8);
    config.pca_k = 16;
    config.ffn = quick_ffn();
    let data = load_data(&config).unwrap();
    let row = run_single(&config, &data, 1e9, 0).unwrap();

    let label = |d: &dpfair::datasets::Dataset| -> Vec<f64> { d.labels.iter().map(|&l| f64::from(u8::from(l))).collect() };
    let (tx, vx, sx) = (
        normalize_rows(&data.train.features),
        normalize_rows(&data.validation.features),
        normalize_rows(&data.test.features),
    );
    let vy = label(&data.validation);
    let model = train_ffn(&tx, &label(&data.train), Some((&vx, &vy)), &config.ffn, &mut SeededRng::new(5)).unwrap();
    let preds: Vec<bool> = (0..sx.rows()).map(|i| model.predict(sx.row(i)) >= 0.5).collect();
    let raw = accuracy(&preds, &data.test.labels);
    assert!((row.accuracy - raw).abs() <= 0.02, "{} vs {raw}", row.accuracy);
    assert_eq!((row.sigma, row.steps), (0.0, 0));
}

#[test]
fn lossless_projection_attack_matches_raw_attack() {
    let mut config = ExperimentConfig::new(Pipeline::PcaFfn);
    config.data = small_synth(12, 12);
    config.pca_k = 12;
    config.ffn = quick_ffn();
    let data = load_data(&config).unwrap();
    let private = attack_single(&config, &data, 1e9, 0).unwrap();

    let (tt, classes) = attack_targets(&data.train, config.attack_target);
    let (vt, _) = attack_targets(&data.validation, config.attack_target);
    let (st, _) = attack_targets(&data.test, config.attack_target);
    let features = [
        normalize_rows(&data.train.features),
        normalize_rows(&data.validation.features),
        normalize_rows(&data.test.features),
    ];
    let raw = attacker_accuracy(
        [&features[0], &features[1], &features[2]],
        [&tt, &vt, &st],
        classes,
        &config.ffn,
        &SeededRng::new(9),
    )
    .unwrap();
    assert!((private.attacker_accuracy - raw).abs() <= 0.02, "{} vs {raw}", private.attacker_accuracy);
}

#[test]
fn rows_are_reproducible_and_repetitions_use_distinct_seeds() {
    let config = ExperimentConfig::new(Pipeline::Logistic);
    let data = load_data(&config).unwrap();
    let strip = |mut r: dpfair::harness::ResultRow| {
        r.wall_time_s = 0.0;
        r.to_csv_line()
    };
    let a = strip(run_single(&config, &data, 2.0, 0).unwrap());
    let b = strip(run_single(&config, &data, 2.0, 0).unwrap());
    assert_eq!(a, b);

    let seeds: Vec<u64> = (0..3).map(|r| row_seed(config.seed, 2.0, r)).collect();
    assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2] && seeds[0] != seeds[2]);
    let rows: Vec<String> = (0..3).map(|r| strip(run_single(&config, &data, 2.0, r).unwrap())).collect();
    assert!(rows[0] != rows[1]);
}

#[test]
fn reported_privacy_matches_the_accountant() {
    let config = ExperimentConfig::new(Pipeline::Logistic);
    let data = load_data(&config).unwrap();
    for eps in [0.5, 3.0, 25.0] {
        let row = run_single(&config, &data, eps, 0).unwrap();
        assert_eq!(row.epsilon, eps);
        assert_eq!(row.steps, 10 * (data.train.len() / 8));
        let recomputed = account(row.sigma, row.sampling_rate, row.steps, row.phi, &default_orders())
            .unwrap()
            .epsilon;
        assert!(recomputed <= eps && (eps - recomputed) / eps < 1e-6, "{recomputed} vs {eps}");
    }
}

#[test]
fn sweep_records_failed_rows_and_continues() {
    let mut config = ExperimentConfig::new(Pipeline::Logistic);
    // 1e-7 needs more noise than the calibration range allows
    config.grid = EpsilonGrid::List(vec![1e-7, 1.0, 4.0]);
    config.record_wall_time = false;
    let dir = tempfile::tempdir().unwrap();
    let result = run_sweep(&config, dir.path(), false).unwrap();
    assert_eq!((result.rows.len(), result.failures.len()), (2, 1));
    assert!(result.partial_failure());
    let text = std::fs::read_to_string(dir.path().join(RESULTS_FILE)).unwrap();
    assert!(text.lines().any(|l| l.starts_with("#error,") && l.contains("calibration_range")), "{text}");
    assert_eq!(text.lines().filter(|l| !l.starts_with('#')).count(), 3);
}

#[test]
fn groupdro_sweep_rows_are_complete() {
    let mut config = ExperimentConfig::new(Pipeline::GroupDroMlp);
    config.grid = EpsilonGrid::List(vec![5.0]);
    config.data = small_synth(16, 8);
    config.dpsgd.epochs = 3;
    let data = load_data(&config).unwrap();
    let row = run_single(&config, &data, 5.0, 0).unwrap();
    assert_eq!(row.group_risk.len(), 8);
    assert!(row.sigma > 0.0 && row.accuracy > 0.0);
}
