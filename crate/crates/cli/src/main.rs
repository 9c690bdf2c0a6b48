use std::fmt::Display;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::warn;

use pvnet::gradcheck::{self, Corruption};
use pvnet::pipeline::{self, loss_line, DataBundle};
use pvnet::storage::{self, load_checkpoint, save_checkpoint, RunConfig};
use pvnet::Error;

/// Day-ahead PV power forecasting from gridded weather: synthetic data,
/// training, evaluation and occlusion maps.
#[derive(Parser, Debug)]
#[command(name = "pvnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic weather raster, power series and plant fleet.
    GenData {
        /// `key = value` run configuration; defaults apply to missing keys.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Existing directory to write weather.pvrs, power.csv and fleet.csv into.
        #[arg(long)]
        out_dir: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train on a generated dataset and save the best-validation checkpoint.
    Train {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        /// Checkpoint path.
        #[arg(long)]
        out: PathBuf,
        /// Loss log path, one line per epoch: epoch, train MSE, validation MSE.
        #[arg(long)]
        log: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Compare the model with 24 h persistence on the validation split.
    Eval {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Report path (`name,value,unit` lines); the table goes to stdout.
        #[arg(long)]
        report: PathBuf,
    },
    /// Occlusion sensitivity maps for every input channel plus the fleet density map.
    Occlude {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Validation windows to average over; defaults to the checkpoint's config.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Check every layer's gradients against central finite differences.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

/// Exit status 1 for bad input, 2 for failures inside the pipeline.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn user(message: impl Display) -> Self {
        Self {
            code: 1,
            message: message.to_string(),
        }
    }

    fn internal(message: impl Display) -> Self {
        Self {
            code: 2,
            message: message.to_string(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. } | Error::Numerical(_) | Error::Dimension(_) => Failure::internal(e),
            _ => Failure::user(e),
        }
    }
}

type CliResult = Result<(), Failure>;

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<RunConfig, Failure> {
    let mut config = match path {
        Some(p) => storage::parse_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        config.set_seed(s);
    }
    config.validate()?;
    Ok(config)
}

fn require_dir(dir: &Path) -> CliResult {
    if dir.is_dir() {
        Ok(())
    } else {
        Err(Failure::user(format!("{} is not an existing directory", dir.display())))
    }
}

fn shape(dims: &[usize]) -> String {
    let parts: Vec<String> = dims.iter().map(|d| d.to_string()).collect();
    format!("[{}]", parts.join(","))
}

fn gen_data(config: Option<&Path>, out_dir: &Path, seed: Option<u64>) -> CliResult {
    let config = load_config(config, seed)?;
    require_dir(out_dir)?;
    let b = pipeline::generate_dataset(&config, out_dir)?;
    println!(
        "raster {} power {} steps fleet {} plants capacity {:.3} MW -> {}",
        shape(b.raster.frames.shape()),
        b.power.len(),
        b.fleet.plants().len(),
        b.fleet.total_capacity(),
        out_dir.display()
    );
    Ok(())
}

fn load_data(dir: &Path) -> Result<DataBundle, Failure> {
    require_dir(dir)?;
    Ok(pipeline::load_bundle(dir)?)
}

fn train(data_dir: &Path, config: Option<&Path>, out: &Path, log_path: &Path, seed: Option<u64>) -> CliResult {
    let config = load_config(config, seed)?;
    let bundle = load_data(data_dir)?;
    let g = &bundle.raster.grid;
    if (g.n_rows, g.n_cols) != (config.synth.grid.n_rows, config.synth.grid.n_cols) {
        return Err(Failure::user(format!(
            "config expects a {}×{} grid, data has {}×{}",
            config.synth.grid.n_rows, config.synth.grid.n_cols, g.n_rows, g.n_cols
        )));
    }
    let mut log_file = fs::File::create(log_path).map_err(|e| Failure::user(format!("{}: {e}", log_path.display())))?;
    let mut write_err = None;
    let (_, run) = pipeline::train_bundle(&bundle, &config, |e| {
        if let Err(err) = writeln!(log_file, "{}", loss_line(e)) {
            write_err.get_or_insert(err);
        }
    })?;
    if let Some(err) = write_err {
        return Err(Failure::user(format!("{}: {err}", log_path.display())));
    }
    save_checkpoint(out, &run.checkpoint)?;
    let best = &run.history[run.best_epoch - 1];
    println!(
        "{} epochs, best epoch {} (train {:.6e}, val {}) -> {}",
        run.history.len(),
        run.best_epoch,
        best.train_mse,
        best.val_mse.map_or("-".to_string(), |v| format!("{v:.6e}")),
        out.display()
    );
    Ok(())
}

fn eval(data_dir: &Path, checkpoint: &Path, report: &Path) -> CliResult {
    let ckpt = load_checkpoint(checkpoint)?;
    let bundle = load_data(data_dir)?;
    let prepared = pipeline::prepare_for_checkpoint(&bundle, &ckpt)?;
    let e = pipeline::evaluate(&ckpt.params, &prepared, &bundle, &ckpt.config)?;
    storage::write_atomic(report, e.comparison.to_delimited().as_bytes())?;
    print!("{}", e.comparison.to_text());
    Ok(())
}

fn occlude(data_dir: &Path, checkpoint: &Path, out_dir: &Path, samples: Option<usize>) -> CliResult {
    let ckpt = load_checkpoint(checkpoint)?;
    let bundle = load_data(data_dir)?;
    let prepared = pipeline::prepare_for_checkpoint(&bundle, &ckpt)?;
    let mut samples = samples.unwrap_or(ckpt.config.occlusion_samples);
    if samples == 0 {
        return Err(Failure::user("--samples must be positive"));
    }
    if samples > prepared.val.len() {
        warn!(
            "{samples} samples requested, validation split has {}; using all of them",
            prepared.val.len()
        );
        samples = prepared.val.len();
    }
    fs::create_dir_all(out_dir).map_err(|e| Failure::user(format!("{}: {e}", out_dir.display())))?;
    let result = pipeline::run_occlusion(&ckpt.params, &prepared, &bundle, samples, ckpt.config.seed())?;
    let written = pipeline::write_occlusion(&result, &bundle.raster, out_dir)?;
    println!(
        "{} files -> {}; ranking: {}",
        written.len(),
        out_dir.display(),
        result.ranking.join(" > ")
    );
    Ok(())
}

fn run_gradcheck(seed: u64) -> CliResult {
    let corruption = match std::env::var("PVNET_GRADCHECK_CORRUPT").as_deref() {
        Ok("conv") => Corruption::Conv,
        _ => Corruption::None,
    };
    let report = gradcheck::run(&gradcheck::seeds_from(seed, gradcheck::DEFAULT_SEEDS), corruption)?;
    for l in &report.layers {
        println!(
            "{:<10} {:.3e} {}",
            l.layer,
            l.max_rel_error,
            if l.passed { "ok" } else { "FAIL" }
        );
    }
    if report.passed() {
        println!(
            "all {} checks passed over {} seeds",
            report.layers.len(),
            report.seeds.len()
        );
        Ok(())
    } else {
        Err(Failure::internal(format!(
            "gradient check failed for: {}",
            report.failing().join(", ")
        )))
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match &cli.command {
        Command::GenData { config, out_dir, seed } => gen_data(config.as_deref(), out_dir, *seed),
        Command::Train {
            data_dir,
            config,
            out,
            log,
            seed,
        } => train(data_dir, config.as_deref(), out, log, *seed),
        Command::Eval {
            data_dir,
            checkpoint,
            report,
        } => eval(data_dir, checkpoint, report),
        Command::Occlude {
            data_dir,
            checkpoint,
            out_dir,
            samples,
        } => occlude(data_dir, checkpoint, out_dir, *samples),
        Command::Gradcheck { seed } => run_gradcheck(*seed),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
