use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pcnet::checkpoint::Checkpoint;
use pcnet::config::{RawConfig, TrainConfig};
use pcnet::dataio::{load_split, DatasetSplit};
use pcnet::gradcheck::{gradcheck, GradcheckConfig};
use pcnet::train::{self, EpochMetrics, Split};
use pcnet::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_GRADCHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "pcnet", version, about = "Train and check predictive-coding networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model and write metrics.csv and checkpoint.pcck to the output directory.
    Train(ConfigArgs),
    /// Evaluate a saved checkpoint on a dataset split.
    Eval(EvalArgs),
    /// Compare network update directions with finite differences on a small net.
    Gradcheck(ConfigArgs),
}

/// Every configuration key as a flag. Unset flags fall through to the
/// config file, then to the built-in defaults.
#[derive(Args, Default)]
struct ConfigArgs {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_name = "mnist|fashion")]
    dataset: Option<String>,
    #[arg(long)]
    data_dir: Option<String>,
    #[arg(long, value_name = "pc|bp")]
    model: Option<String>,
    #[arg(long, value_name = "transpose|random|kp")]
    feedback: Option<String>,
    #[arg(long, value_name = "subtractive|threshold|division")]
    encoding: Option<String>,
    #[arg(long, value_name = "sigmoid|tanh|relu|identity")]
    hidden_activation: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    positive_activities: Option<String>,
    #[arg(long)]
    bias: Option<String>,
    #[arg(long)]
    epochs: Option<String>,
    #[arg(long)]
    batch_size: Option<String>,
    #[arg(long)]
    lr: Option<String>,
    /// Inference rate for the activity relaxation.
    #[arg(long)]
    beta: Option<String>,
    /// Activity steps per minibatch.
    #[arg(long)]
    n_updates: Option<String>,
    /// Kolen-Pollack decay rate.
    #[arg(long)]
    gamma: Option<String>,
    #[arg(long)]
    epsilon: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    e_min: Option<String>,
    #[arg(long)]
    e_max: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    out_dir: Option<String>,
    /// Comma-separated hidden layer widths.
    #[arg(long)]
    hidden_dims: Option<String>,
    #[arg(long, value_name = "adam|sgd")]
    optimizer: Option<String>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    encode_output: Option<String>,
    #[arg(long)]
    train_limit: Option<String>,
    #[arg(long)]
    test_limit: Option<String>,
    /// Record elapsed seconds in the metrics (false writes 0).
    #[arg(long, num_args = 0..=1, default_missing_value = "true", value_name = "BOOL")]
    wall_time: Option<String>,
}

impl ConfigArgs {
    fn flags(&self) -> Vec<(&'static str, &Option<String>)> {
        vec![
            ("dataset", &self.dataset),
            ("data_dir", &self.data_dir),
            ("model", &self.model),
            ("feedback", &self.feedback),
            ("encoding", &self.encoding),
            ("hidden_activation", &self.hidden_activation),
            ("positive_activities", &self.positive_activities),
            ("bias", &self.bias),
            ("epochs", &self.epochs),
            ("batch_size", &self.batch_size),
            ("lr", &self.lr),
            ("beta", &self.beta),
            ("n_updates", &self.n_updates),
            ("gamma", &self.gamma),
            ("epsilon", &self.epsilon),
            ("e_min", &self.e_min),
            ("e_max", &self.e_max),
            ("seed", &self.seed),
            ("out_dir", &self.out_dir),
            ("hidden_dims", &self.hidden_dims),
            ("optimizer", &self.optimizer),
            ("encode_output", &self.encode_output),
            ("train_limit", &self.train_limit),
            ("test_limit", &self.test_limit),
            ("wall_time", &self.wall_time),
        ]
    }

    fn resolve(&self) -> pcnet::Result<TrainConfig> {
        let file = match &self.config {
            Some(path) => RawConfig::from_file(path)?,
            None => RawConfig::new(),
        };
        let mut flags = RawConfig::new();
        for (key, value) in self.flags() {
            if let Some(v) = value {
                flags.set(key, v.clone())?;
            }
        }
        TrainConfig::resolve(&file.overlay(&flags))
    }
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// Directory holding the IDX files.
    #[arg(long)]
    data_dir: PathBuf,
    #[arg(long, default_value = "test", value_name = "train|test")]
    split: String,
    /// Evaluate only the first N samples.
    #[arg(long)]
    limit: Option<usize>,
}

enum Failure {
    Config(String),
    Data(String),
    Gradcheck,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) => Failure::Config(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

fn load(dir: &std::path::Path, train: bool, limit: Option<usize>) -> Result<DatasetSplit, Failure> {
    let split = load_split(dir, train).map_err(|e| Failure::Data(e.to_string()))?;
    Ok(match limit {
        Some(n) => split.truncated(n)?,
        None => split,
    })
}

fn run_train(args: &ConfigArgs) -> Result<(), Failure> {
    let config = args.resolve()?;
    let train_set = load(&config.data_dir, true, config.train_limit)?;
    let test_set = load(&config.data_dir, false, config.test_limit)?;
    fs::create_dir_all(&config.out_dir)
        .map_err(|e| Failure::Data(format!("creating {}: {e}", config.out_dir.display())))?;
    println!(
        "training {} ({} feedback, {} encoding) on {} train / {} test samples, dims {:?}",
        config.model,
        config.feedback,
        config.encoding,
        train_set.len(),
        test_set.len(),
        config.dims()
    );
    let outcome = train::run(&config, &train_set, &test_set, |m| {
        println!(
            "epoch {:>3} {:<5} error {:.4} objective {:.6} ({:.1}s)",
            m.epoch, m.split, m.error, m.objective, m.seconds
        );
    })?;
    let metrics_path = config.out_dir.join("metrics.csv");
    let ckpt_path = config.out_dir.join("checkpoint.pcck");
    train::write_metrics_csv(&metrics_path, &outcome.metrics)?;
    let epochs = u32::try_from(outcome.epochs).unwrap_or(u32::MAX);
    Checkpoint::new(epochs, outcome.learner.model.clone(), Some(outcome.learner.optimizer.clone()))
        .save(&ckpt_path)?;
    fs::write(config.out_dir.join("config.txt"), config.to_config_text())
        .map_err(|e| Failure::Data(format!("writing config: {e}")))?;
    let last = train::tail_test_error(&outcome.metrics, 1).unwrap_or(f64::NAN);
    let tail = train::tail_test_error(&outcome.metrics, 3).unwrap_or(f64::NAN);
    println!("final test error {last:.4}, mean of last 3 epochs {tail:.4}");
    if let train::Model::Pc(net) = &outcome.learner.model {
        if net.spec().feedback.has_matrices() {
            let cos: Vec<String> = net.feedback_alignment().iter().map(|c| format!("{c:.3}")).collect();
            println!("feedback alignment (cosine per layer): {}", cos.join(" "));
        }
    }
    println!("wrote {} and {}", metrics_path.display(), ckpt_path.display());
    Ok(())
}

fn run_eval(args: &EvalArgs) -> Result<(), Failure> {
    let split: Split = args.split.parse().map_err(|e: Error| Failure::Config(e.to_string()))?;
    let ckpt = Checkpoint::load(&args.checkpoint)?;
    let data = load(&args.data_dir, split == Split::Train, args.limit)?;
    let started = std::time::Instant::now();
    let (error, objective) = train::evaluate(&ckpt.model, &data)?;
    let row = EpochMetrics {
        epoch: ckpt.epoch as usize,
        split,
        error,
        objective,
        seconds: started.elapsed().as_secs_f64(),
    };
    println!("{}", train::METRICS_HEADER);
    println!("{}", row.csv_row());
    Ok(())
}

fn run_gradcheck(args: &ConfigArgs) -> Result<(), Failure> {
    let config = args.resolve()?;
    let spec = config.model_spec()?;
    let report = gradcheck(&GradcheckConfig::small(&spec, config.seed))?;
    println!("{report}");
    if report.passed() {
        Ok(())
    } else {
        Err(Failure::Gradcheck)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => run_train(a),
        Command::Eval(a) => run_eval(a),
        Command::Gradcheck(a) => run_gradcheck(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_DATA)
        }
        Err(Failure::Gradcheck) => ExitCode::from(EXIT_GRADCHECK),
    }
}
