use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use replaycl::config::{ExperimentConfig, Variant};
use replaycl::datasets::{make_synthetic, Dataset, Format, SyntheticSpec};
use replaycl::experiment::{completed, execute, run_dir_name};
use replaycl::metrics::ExperimentReport;
use replaycl::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser)]
#[command(name = "replaycl", version, about = "Class-incremental learning with generative replay")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario under one seed.
    Run(RunArgs),
    /// Run every scenario under every seed and aggregate the results.
    Sweep(SweepArgs),
    /// Dataset utilities.
    #[command(subcommand)]
    Dataset(DatasetCommand),
}

#[derive(Args)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; defaults to the config's `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config value, e.g. `--set gan.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    /// Scenario, optionally with scheme and loss (`malcl/l2_labels/bce`).
    #[arg(long)]
    scenario: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated seeds, e.g. "10,20,30,40,50".
    #[arg(long)]
    seeds: Option<String>,
    /// Comma-separated scenarios, e.g. "none,joint,malcl/l1_cmean/fml".
    #[arg(long)]
    scenarios: Option<String>,
    /// Skip runs whose directory already holds a finished run of the same config.
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum DatasetCommand {
    /// Draw a Gaussian-mixture dataset.
    MakeSynthetic {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long, default_value_t = 8.0)]
        separation: f64,
        #[arg(long, default_value_t = 1.0)]
        std: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; `.csv` writes CSV, anything else the binary format.
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert between CSV and the binary format (direction from extensions).
    ConvertCsv { input: PathBuf, output: PathBuf },
    /// Print dimensions and per-class counts.
    Inspect { path: PathBuf },
}

/// An error plus the exit code it maps to.
struct Failure(u8, String);

impl Failure {
    fn config(e: impl std::fmt::Display) -> Self {
        Failure(EXIT_CONFIG, e.to_string())
    }

    fn classify(e: Error) -> Self {
        let code = if e.is_user_error() { EXIT_CONFIG } else { EXIT_RUNTIME };
        Failure(code, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| match cli.command {
        Command::Run(a) => run(a),
        Command::Sweep(a) => sweep(a),
        Command::Dataset(c) => dataset(c),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

/// Sizes the worker pool from `REPLAYCL_THREADS` when set.
fn init_threads() -> Result<(), Failure> {
    let Ok(v) = std::env::var("REPLAYCL_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::config(format!("REPLAYCL_THREADS={v:?} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure(EXIT_RUNTIME, e.to_string()))
}

fn load_config(c: &Common, extra: Vec<String>) -> Result<(ExperimentConfig, PathBuf), Failure> {
    let mut overrides = c.overrides.clone();
    overrides.extend(extra);
    let cfg = ExperimentConfig::from_path(&c.config, &overrides).map_err(Failure::config)?;
    let out = c.out.clone().unwrap_or_else(|| cfg.out_dir.clone());
    Ok((cfg, out))
}

/// Quotes a flag value as a TOML string.
fn toml_string(s: &str) -> String {
    serde_json::Value::String(s.to_string()).to_string()
}

fn run(a: RunArgs) -> Result<(), Failure> {
    let mut extra = Vec::new();
    if let Some(s) = &a.scenario {
        extra.push(format!("scenario={}", toml_string(s)));
    }
    if let Some(seed) = a.seed {
        extra.push(format!("seed={seed}"));
    }
    let (cfg, out) = load_config(&a.common, extra)?;
    let resolved = cfg.resolve_single();
    let record = execute(&resolved, cfg.outputs, &out).map_err(Failure::classify)?;
    println!(
        "{} seed {}: mean {:.1} min {:.1} -> {}",
        resolved.run.label(),
        record.seed,
        100.0 * record.mean_accuracy(),
        100.0 * record.min_accuracy(),
        out.display()
    );
    Ok(())
}

fn parse_list<T>(s: &str, f: impl Fn(&str) -> Result<T, String>) -> Result<Vec<T>, Failure> {
    let items: Vec<T> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(f)
        .collect::<Result<_, _>>()
        .map_err(Failure::config)?;
    if items.is_empty() {
        return Err(Failure::config(format!("empty list {s:?}")));
    }
    Ok(items)
}

fn sweep(a: SweepArgs) -> Result<(), Failure> {
    let (cfg, out) = load_config(&a.common, Vec::new())?;
    let seeds = match &a.seeds {
        Some(s) => parse_list(s, |t| t.parse::<u64>().map_err(|_| format!("bad seed {t:?}")))?,
        None => cfg.seeds.clone(),
    };
    let variants = match &a.scenarios {
        Some(s) => parse_list(s, |t| Variant::parse(t).map_err(|e| e.to_string()))?,
        None => cfg.scenarios.clone(),
    };
    for v in &variants {
        v.apply(&cfg.run).validate().map_err(Failure::config)?;
    }

    let mut records = Vec::new();
    let mut failures = Vec::new();
    let mut index = Vec::new();
    for v in &variants {
        for &seed in &seeds {
            let resolved = cfg.resolve(*v, seed);
            let dir = out.join(run_dir_name(&resolved.run));
            let hash = resolved.hash();
            let label = format!("{} seed {seed}", resolved.run.label());
            let record = match a.resume.then(|| completed(&dir, &hash)).flatten() {
                Some(r) => {
                    println!("{label}: already complete, skipped");
                    r
                }
                None => match execute(&resolved, cfg.outputs, &dir) {
                    Ok(r) => {
                        println!("{label}: mean {:.1} min {:.1}", 100.0 * r.mean_accuracy(), 100.0 * r.min_accuracy());
                        r
                    }
                    Err(e) => {
                        eprintln!("{label}: failed: {e}");
                        failures.push(serde_json::json!({"run": resolved.run.label(), "seed": seed, "error": e.to_string()}));
                        continue;
                    }
                },
            };
            index.push(serde_json::json!({
                "run": resolved.run.label(),
                "seed": seed,
                "dir": run_dir_name(&resolved.run),
                "config_hash": hash,
            }));
            records.push(record);
        }
    }

    std::fs::create_dir_all(&out).map_err(|e| Failure(EXIT_RUNTIME, format!("{}: {e}", out.display())))?;
    if !failures.is_empty() {
        write_json(&out.join("failures.json"), &serde_json::Value::Array(failures.clone()))?;
    }
    if !records.is_empty() {
        let echo = serde_json::json!({"seeds": seeds, "scenarios": variants, "runs": index});
        let report = ExperimentReport::build(echo, records).map_err(Failure::classify)?;
        report.emit(&out).map_err(Failure::classify)?;
        print!("{}", report.summary_csv());
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(Failure(EXIT_RUNTIME, format!("{} run(s) failed; see failures.json", failures.len())))
    }
}

fn write_json(path: &Path, v: &serde_json::Value) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(v).expect("json value serializes");
    std::fs::write(path, text).map_err(|e| Failure(EXIT_RUNTIME, format!("{}: {e}", path.display())))
}

/// Reading input is a user-facing failure (missing or malformed file);
/// anything after that is a runtime failure.
fn read_dataset(path: &Path) -> Result<Dataset, Failure> {
    Dataset::load(path, Format::from_path(path)).map_err(Failure::config)
}

fn save_dataset(ds: &Dataset, path: &Path) -> Result<(), Failure> {
    ds.save(path, Format::from_path(path)).map_err(Failure::classify)
}

fn dataset(c: DatasetCommand) -> Result<(), Failure> {
    match c {
        DatasetCommand::MakeSynthetic {
            classes,
            dim,
            per_class,
            separation,
            std,
            seed,
            out,
        } => {
            let mut spec = SyntheticSpec::new(classes, dim, per_class, separation, seed);
            spec.cluster_std = std;
            let ds = make_synthetic(&spec).map_err(Failure::classify)?;
            save_dataset(&ds, &out)?;
            println!("wrote {} samples ({} classes, dimension {}) to {}", ds.len(), classes, dim, out.display());
        }
        DatasetCommand::ConvertCsv { input, output } => {
            if Format::from_path(&input) == Format::from_path(&output) {
                return Err(Failure::config("input and output have the same format; use .csv for one side"));
            }
            let ds = read_dataset(&input)?;
            save_dataset(&ds, &output)?;
            println!("converted {} samples to {}", ds.len(), output.display());
        }
        DatasetCommand::Inspect { path } => {
            let ds = read_dataset(&path)?;
            println!("path: {}", path.display());
            println!("samples: {}", ds.len());
            println!("feature_dim: {}", ds.feature_dim());
            println!("classes: {}", ds.class_count());
            println!("digest: {}", ds.digest());
            println!("class,name,count");
            for (c, n) in ds.class_sizes().iter().enumerate() {
                let name = ds.class_names.as_ref().and_then(|v| v.get(c)).map_or("", String::as_str);
                println!("{c},{name},{n}");
            }
        }
    }
    Ok(())
}
