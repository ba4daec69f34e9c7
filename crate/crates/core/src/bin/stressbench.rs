use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stressbench::detect::DetectorModel;
use stressbench::runner::{
    self, fit_and_calibrate, load_config, prepare, read_results, summarize, validate_config, LoadedConfig, RunOptions,
};
use stressbench::synth::{generate, write_synthetic, SynthConfig};
use stressbench::Error;

/// Stress-calibrated robustness evaluation for multivariate time-series
/// anomaly detectors.
#[derive(Parser)]
#[command(name = "stressbench", version)]
struct Cli {
    /// Log pipeline progress (repeat for debug output).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config file; exits 1 on errors.
    Validate(ConfigArgs),
    /// Generate a synthetic dataset from a generator config.
    Synth {
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the detector and select its threshold; writes model.json and threshold.json.
    Fit {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the clean baseline, the stress grid and optional probing.
    Sweep(RunArgs),
    /// Run the clean baseline and sensor probing only.
    Probe(RunArgs),
    /// Summarise a run directory.
    Report { run_dir: PathBuf },
}

#[derive(Args)]
struct ConfigArgs {
    config: PathBuf,
    /// Override a config value, e.g. `--set stress.seeds=[1,2,3]`. Recorded in the run manifest.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    config: ConfigArgs,
    /// Worker threads (0 = all cores). Not part of the config hash.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Output root; defaults to $STRESSBENCH_OUTPUT_ROOT, then the config's output_dir, then ./runs.
    #[arg(long)]
    output_root: Option<PathBuf>,
    /// Use a persisted model instead of fitting.
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long, hide = true)]
    inject_threshold_mutation: bool,
}

enum Failure {
    Validation(String),
    Runtime(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e)
    }
}

fn load_valid(args: &ConfigArgs) -> Result<LoadedConfig, Failure> {
    let loaded = load_config(&args.config, &args.sets).map_err(|e| Failure::Validation(e.to_string()))?;
    let report = validate_config(&loaded);
    for d in &report.diagnostics {
        eprintln!("{d}");
    }
    if report.has_errors() {
        return Err(Failure::Validation(format!(
            "{} has {} error(s)",
            args.config.display(),
            report.errors().count()
        )));
    }
    Ok(loaded)
}

fn run(args: RunArgs, probe_only: bool) -> Result<(), Failure> {
    let mut cfg = args.config;
    if probe_only {
        cfg.sets.extend([
            "probing.enabled=true".to_string(),
            "stress.kinds=[]".into(),
            "stress.compositions=[]".into(),
        ]);
    }
    let loaded = load_valid(&cfg)?;
    let opts = RunOptions {
        workers: args.workers,
        output_root: args.output_root,
        dry_run: false,
        model_path: args.model,
        inject_threshold_mutation: args.inject_threshold_mutation,
    };
    let result = runner::run_experiment(&loaded, &opts)?;
    println!("config hash: {}", result.config_hash);
    println!(
        "clean: window F1 {:.4}, event recall {:.4}, threshold {}",
        result.clean.report.window.f1, result.clean.report.event.event_recall, result.clean.report.provenance.threshold
    );
    println!("cells: {}", result.cells.len());
    if let Some(p) = &result.probing {
        println!(
            "probing: vetted channels {:?}, {:?} {:.4} -> {:.4}",
            p.vetted_channels, p.metric, p.clean_metric, p.vetted_metric
        );
    }
    if let Some(dir) = &result.run_dir {
        println!("run directory: {}", dir.display());
    }
    Ok(())
}

fn report(dir: &Path) -> Result<(), Failure> {
    let rows = read_results(&dir.join("results.csv"))?;
    println!(
        "{:<20} {:>8} {:>4} {:>8} {:>8} {:>8}  note",
        "stressor", "severity", "n", "mean_f1", "std_f1", "delta"
    );
    for s in summarize(&rows) {
        println!(
            "{:<20} {:>8} {:>4} {:>8.4} {:>8.4} {:>+8.4}  {}",
            s.stressor, s.severity, s.n, s.mean_f1, s.std_f1, s.delta_f1, s.note
        );
    }
    let comp = dir.join("compositions.csv");
    if comp.is_file() {
        let mut r = csv::Reader::from_path(&comp).map_err(Error::from)?;
        println!();
        for rec in r.records() {
            let rec = rec.map_err(Error::from)?;
            println!("{:<20} {}", &rec[1], &rec[5]);
        }
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Validate(args) => {
            load_valid(&args)?;
            println!("{}: ok", args.config.display());
            Ok(())
        }
        Command::Synth { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| Failure::Validation(format!("{}: {e}", config.display())))?;
            let cfg: SynthConfig =
                serde_json::from_str(&text).map_err(|e| Failure::Validation(format!("{}: {e}", config.display())))?;
            cfg.validate().map_err(|e| Failure::Validation(e.to_string()))?;
            let (train, test) = generate(&cfg)?;
            write_synthetic(&out, &train, &test)?;
            println!(
                "wrote {} train and {} test rows, {} events, to {}",
                train.len(),
                test.len(),
                test.label_intervals().len(),
                out.display()
            );
            Ok(())
        }
        Command::Fit { config, out } => {
            let loaded = load_valid(&config)?;
            let prepared = prepare(&loaded)?;
            let (model, selection) = fit_and_calibrate(&loaded, &prepared, None)?;
            std::fs::create_dir_all(&out).map_err(|e| {
                Failure::Runtime(Error::Io {
                    path: out.clone(),
                    source: e,
                })
            })?;
            model.save(&out.join("model.json"))?;
            let text = serde_json::to_string_pretty(&selection).map_err(Error::from)?;
            std::fs::write(out.join("threshold.json"), text).map_err(|e| {
                Failure::Runtime(Error::Io {
                    path: out.join("threshold.json"),
                    source: e,
                })
            })?;
            println!(
                "{} model {} threshold {:?} {}",
                model.kind_name(),
                model_fingerprint(&model)?,
                selection.method,
                selection.threshold
            );
            Ok(())
        }
        Command::Sweep(args) => run(args, false),
        Command::Probe(args) => run(args, true),
        Command::Report { run_dir } => report(&run_dir),
    }
}

fn model_fingerprint(model: &DetectorModel) -> Result<String, Failure> {
    Ok(model.fingerprint()?[..12].to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation(msg)) => {
            eprintln!("validation failed: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
