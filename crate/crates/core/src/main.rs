use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dpfair::datasets::{save_csv, synth_generate};
use dpfair::harness::run::RESULTS_FILE;
use dpfair::harness::{
    analyze, load_data, results_header, run_attack, run_single_saving, run_sweep, score_predictions_file,
    DataSource, ExperimentConfig, FfnConfig,
};
use dpfair::{Error, Result};

#[derive(Parser)]
#[command(name = "dpfair", version, about = "Privacy/fairness trade-off experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic train/validation/test CSVs of a config.
    Generate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train and evaluate one model at a single ε.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        epsilon: f64,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
    },
    /// Run the configured ε grid and write results.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        resume: bool,
        #[arg(long)]
        jobs: Option<usize>,
        /// 2979 FFN epochs at lr 1e-6 without early stopping.
        #[arg(long)]
        paper_faithful: bool,
    },
    /// Infer the protected attribute from private PCA projections.
    Attack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        paper_faithful: bool,
    },
    /// Fit log and linear curves of metrics against ε.
    Analyze {
        #[arg(long)]
        results: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        metrics: Vec<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fairness metrics of a `prediction,label,group` CSV.
    Metrics {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(path: &Path, jobs: Option<usize>, paper_faithful: bool) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::from_file(path)?;
    if jobs.is_some() {
        config.jobs = jobs;
    }
    if paper_faithful {
        config.ffn = FfnConfig::paper_faithful();
    }
    config.validate()?;
    Ok(config)
}

fn run(command: Command) -> Result<ExitCode> {
    match command {
        Command::Generate { config, out } => {
            let config = load_config(&config, None, false)?;
            let DataSource::Synthetic(synth) = &config.data else {
                return Err(Error::Config("generate needs a synthetic data source".into()));
            };
            let splits = synth_generate(synth)?;
            std::fs::create_dir_all(&out).map_err(|e| Error::Io { path: out.clone(), source: e })?;
            for (name, data) in [
                ("train.csv", &splits.train),
                ("validation.csv", &splits.validation),
                ("test.csv", &splits.test),
            ] {
                save_csv(data, &out.join(name))?;
            }
        }
        Command::Train {
            config,
            epsilon,
            repetition,
        } => {
            let config = load_config(&config, None, false)?;
            let data = load_data(&config)?;
            let row = run_single_saving(&config, &data, epsilon, repetition, config.output_dir.as_deref())?;
            let header = results_header(&config.group_names());
            println!("{header}");
            println!("{}", row.to_csv_line());
            if let Some(dir) = &config.output_dir {
                let path = dir.join(RESULTS_FILE);
                std::fs::write(&path, format!("{header}\n{}\n", row.to_csv_line()))
                    .map_err(|e| Error::Io { path, source: e })?;
            }
        }
        Command::Sweep {
            config,
            out,
            resume,
            jobs,
            paper_faithful,
        } => {
            let config = load_config(&config, jobs, paper_faithful)?;
            let result = run_sweep(&config, &out, resume)?;
            eprintln!(
                "{} rows ({} resumed), {} failed",
                result.rows.len(),
                result.resumed,
                result.failures.len()
            );
            if result.partial_failure() {
                return Ok(ExitCode::from(3));
            }
        }
        Command::Attack {
            config,
            out,
            jobs,
            paper_faithful,
        } => {
            let config = load_config(&config, jobs, paper_faithful)?;
            for row in run_attack(&config, &out)? {
                eprintln!(
                    "eps {} rep {}: attacker {:.4} baseline {:.4}",
                    row.epsilon, row.repetition, row.attacker_accuracy, row.baseline
                );
            }
        }
        Command::Analyze { results, metrics, out } => {
            for a in analyze(&results, &metrics, &out)? {
                eprintln!(
                    "{}: log slope {:.4} (p {:.3e}), linear slope {:.4} (p {:.3e}), {} dropped",
                    a.metric, a.log.slope, a.log.slope_p_value, a.linear.slope, a.linear.slope_p_value, a.dropped
                );
            }
        }
        Command::Metrics { predictions, out } => score_predictions_file(&predictions, &out)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.code());
            ExitCode::from(e.exit_code())
        }
    }
}
