use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use positnn::harness::verify::{self, Suite};
use positnn::harness::{self, presets, train, Distribution, ExperimentConfig};
use positnn::nn::{Ctx, StagePrecisions};
use positnn::tensor::Numeric;
use positnn::{Error, PositConfig};

/// Train and evaluate CNNs on emulated posit arithmetic.
#[derive(Parser)]
#[command(name = "positnn", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model, writing metrics.csv, model.pnn and config.txt
    Train(RunArgs),
    /// Train with float32 in every stage
    FloatRef(RunArgs),
    /// Test accuracy of a saved checkpoint
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Round checkpoint tensors into the configured kinds instead of requiring a match
        #[arg(long)]
        convert: bool,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Run a verification suite
    Verify {
        /// scalar-exhaustive, quire, gradcheck or determinism
        suite: String,
        /// Seeds for gradcheck, random dots per format for quire
        #[arg(long)]
        count: Option<u64>,
        #[command(flatten)]
        run: RunArgs,
    },
    /// Every finite value of a posit format as CSV
    Distribution {
        /// nbits:es
        #[arg(long, default_value = "8:0")]
        format: String,
        #[arg(long, default_value_t = 32)]
        buckets: usize,
        /// Write distribution.csv here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// List the named experiment presets
    Presets,
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// key = value configuration file
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named preset (see `positnn presets`)
    #[arg(long)]
    preset: Option<String>,
    /// Directory holding mnist/, fashion-mnist/ and cifar10/ for presets
    #[arg(long, env = "POSITNN_DATA", default_value = "data")]
    data_root: PathBuf,
    /// Extra `key=value` overrides, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    workers: Option<usize>,
    /// Train on the first N samples only
    #[arg(long)]
    subset: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write 0 in the seconds column so runs are byte-reproducible
    #[arg(long)]
    no_wallclock: bool,
}

impl RunArgs {
    fn resolve(&self) -> positnn::Result<ExperimentConfig> {
        let mut cfg = match &self.preset {
            Some(name) => presets::preset(name, &self.data_root)?,
            None => ExperimentConfig::default(),
        };
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
            cfg.apply_text(&text)?;
        }
        for kv in &self.sets {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Usage(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v)?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(w) = self.workers {
            cfg.workers = w.max(1);
        }
        if let Some(n) = self.subset {
            cfg.subset = Some(n);
        }
        if let Some(e) = self.epochs {
            cfg.epochs = e;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        if self.no_wallclock {
            cfg.wallclock = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Writes to stdout; a closed pipe (e.g. `| head`) is not an error.
fn emit(text: &str) -> Result<(), Failure> {
    use std::io::Write;
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::Usage(format!("stdout: {e}")).into()),
        _ => Ok(()),
    }
}

enum Failure {
    Error(Error),
    Verify(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidFormat { .. } => "invalid_format",
        Error::FormatMismatch { .. } | Error::KindMismatch { .. } => "kind_mismatch",
        Error::Shape { .. } => "shape",
        Error::Usage(_) => "usage",
        Error::Checkpoint { .. } => "checkpoint",
        Error::Dataset { .. } => "dataset",
        Error::Config { .. } => "config",
        Error::Io { .. } => "io",
    }
}

fn run_training(cfg: &ExperimentConfig) -> Result<(), Failure> {
    eprintln!("training {} on {} ({})", cfg.model, cfg.dataset, cfg.precisions);
    let out = train::train(cfg, |r| {
        let acc = r.test_acc.map_or_else(|| "-".into(), |a| format!("{a:.2}%"));
        eprintln!("epoch {:>3}  step {:>6}  loss {:.4}  test {acc}  {:.1}s", r.epoch, r.step, r.train_loss, r.seconds);
    })?;
    println!("test_acc = {:.2}", out.final_accuracy());
    println!("metrics = {}", out.metrics_path.display());
    println!("checkpoint = {}", out.checkpoint_path.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train(args) => run_training(&args.resolve()?),
        Command::FloatRef(args) => {
            let mut cfg = args.resolve()?;
            cfg.precisions = StagePrecisions::uniform(Numeric::F32, false);
            run_training(&cfg)
        }
        Command::Eval { checkpoint, convert, run } => {
            let cfg = run.resolve()?;
            let (_, test) = train::load_splits(&cfg)?;
            let mut net = train::build_model(&cfg);
            let mut records = positnn::nn::load_tensors(&checkpoint)?;
            if convert {
                let kinds: Vec<Numeric> = net.state().iter().map(|(_, t)| t.kind()).collect();
                for ((_, t), k) in records.iter_mut().zip(kinds) {
                    *t = t.convert(k);
                }
            }
            net.load_state(records, &cfg.precisions)
                .map_err(|e| Error::Checkpoint { path: checkpoint.clone(), reason: e.to_string() })?;
            let images = test.to_tensor(cfg.precisions.forward)?;
            let ctx = Ctx::new(cfg.precisions).with_workers(cfg.workers);
            let acc = harness::evaluate(&mut net, &images, test.labels(), &ctx, cfg.batch_size)?;
            println!("test_acc = {acc:.2}");
            Ok(())
        }
        Command::Verify { suite, count, run } => {
            let report = match suite.parse::<Suite>()? {
                Suite::ScalarExhaustive => verify::scalar_exhaustive()?,
                Suite::Quire => verify::quire_suite(count.unwrap_or(5000) as usize, 100, 1)?,
                Suite::Gradcheck => verify::gradcheck_suite(count.unwrap_or(100))?,
                Suite::Determinism => {
                    let mut base = run.resolve()?;
                    if run.subset.is_none() && base.subset.is_none() {
                        base.subset = Some(512);
                    }
                    if run.epochs.is_none() {
                        base.epochs = 1;
                    }
                    base.test_subset = base.test_subset.or(Some(512));
                    if run.out.is_none() {
                        base.out_dir = PathBuf::from("runs/determinism");
                    }
                    verify::determinism(&base, &[1, 2, 4])?
                }
            };
            println!("{report}");
            if report.passed() {
                Ok(())
            } else {
                Err(Failure::Verify(format!("suite {} failed", report.suite)))
            }
        }
        Command::Distribution { format, buckets, out } => {
            let cfg: PositConfig = format.parse()?;
            let csv = Distribution::new(cfg, buckets)?.to_csv();
            match out {
                Some(dir) => {
                    std::fs::create_dir_all(&dir).map_err(|e| Error::Usage(format!("{}: {e}", dir.display())))?;
                    let path = dir.join("distribution.csv");
                    std::fs::write(&path, csv).map_err(|e| Error::Usage(format!("{}: {e}", path.display())))?;
                    println!("{}", path.display());
                }
                None => emit(&csv)?,
            }
            Ok(())
        }
        Command::Presets => {
            let lines: String = harness::PRESETS
                .iter()
                .map(|p| format!("{:<28} {:>6.2}%  {}\n", p.name, p.target_accuracy, p.description))
                .collect();
            emit(&lines)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let rendered = e.render().to_string();
            let message = rendered.lines().next().unwrap_or_default().trim_start_matches("error: ");
            eprintln!("{}", serde_json::json!({ "status": "error", "kind": "usage", "message": message }));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Error(e)) => {
            let kind = error_kind(&e);
            eprintln!("{}", serde_json::json!({ "status": "error", "kind": kind, "message": e.to_string() }));
            ExitCode::from(if matches!(kind, "usage" | "config" | "invalid_format") { 2 } else { 1 })
        }
        Err(Failure::Verify(msg)) => {
            eprintln!("{}", serde_json::json!({ "status": "error", "kind": "verify_failed", "message": msg }));
            ExitCode::from(3)
        }
    }
}
