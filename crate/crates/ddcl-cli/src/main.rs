//! Experiment CLI: reproduction blocks, gradient checks, the reduced-flow
//! certificate, dataset generation, and label-file metrics.
//!
//! Exit codes: 0 success, 2 config error, 3 data error, 4 numerical abort,
//! 5 check failure under --check.

use clap::{Parser, Subcommand};
use ddcl_cli::commands::{block1, block2, block3, block5, block6, tools};
use ddcl_cli::common::{ensure_out_dir, write_text};
use ddcl_core::error::DdclError;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "ddcl",
    about = "Differentiable prototype-based clustering experiments",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Clone)]
struct CommonArgs {
    /// Output directory for traces, summaries, and plots.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of independent seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Base seed offset applied to every run.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Enforce the block's acceptance thresholds (exit 5 on failure).
    #[arg(long, default_value_t = false)]
    check: bool,
    /// Optional flat-JSON config echoed (with overrides applied) to out/.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Structural verification on synthetic 2-D datasets.
    Block1 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Digits benchmark on standardized principal components.
    Block2 {
        /// Digits CSV (64 features + label column); see scripts/fetch_digits.py.
        #[arg(long, default_value = "data/digits.csv")]
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// High-dimensional sweep over ambient noise dimensions.
    Block3 {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// End-to-end training with the MLP feature extractor.
    Block5 {
        #[arg(long, default_value = "data/digits.csv")]
        data: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Single-pass streaming comparison.
    Block6 {
        /// Digits CSV; omit --data and pass --blobs to run data-free.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Use the synthetic blobs stream instead of digits.
        #[arg(long, default_value_t = false)]
        blobs: bool,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Finite-difference verification of every analytic gradient.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reduced-flow run emitting a certificate JSON and energy CSV.
    Flow {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, default_value_t = 2000)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = false)]
        check: bool,
    },
    /// Generate a synthetic dataset CSV (labels in the last column).
    GenData {
        /// moons | circles | spiral | blobs | madelon
        name: String,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        k: usize,
        #[arg(long, default_value_t = 2)]
        d: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "dataset.csv")]
        out: PathBuf,
    },
    /// Clustering metrics between two label files.
    Metrics { truth: PathBuf, pred: PathBuf },
}

fn init_threads() {
    #[cfg(feature = "parallel")]
    if let Ok(value) = std::env::var("DDCL_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(threads.max(1))
                .build_global();
        }
    }
}

fn echo_config(common: &CommonArgs, defaults: serde_json::Value) -> Result<(), DdclError> {
    ensure_out_dir(&common.out)?;
    let mut resolved = defaults;
    if let Some(path) = &common.config {
        let text = std::fs::read_to_string(path).map_err(|e| DdclError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let overrides: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| DdclError::InvalidConfig(format!("config file: {e}")))?;
        if let (Some(base), Some(extra)) = (resolved.as_object_mut(), overrides.as_object()) {
            for (k, v) in extra {
                base.insert(k.clone(), v.clone());
            }
        }
    }
    if let Some(obj) = resolved.as_object_mut() {
        obj.insert("seeds".into(), serde_json::json!(common.seeds));
        obj.insert("seed_offset".into(), serde_json::json!(common.seed));
    }
    write_text(
        &common.out.join("config.json"),
        &serde_json::to_string_pretty(&resolved).unwrap(),
    )
}

fn exit_code_for(err: &DdclError) -> u8 {
    match err {
        DdclError::InvalidConfig(_) => 2,
        DdclError::NonFinite { .. } => 4,
        _ => 3,
    }
}

fn run() -> Result<u8, DdclError> {
    let cli = Cli::parse();
    init_threads();
    match cli.command {
        Command::Block1 { common } => {
            let seeds = common.seeds.unwrap_or(10);
            echo_config(
                &common,
                serde_json::to_value(block1::sweep_config(2, 0.5, common.seed, ddcl_core::batch_trainer::LossKind::Quantization)).unwrap(),
            )?;
            let out = block1::run(&common.out, seeds)?;
            out.summary.print_checks();
            if common.check && !out.summary.all_checks_pass() {
                return Ok(5);
            }
        }
        Command::Block2 { data, common } => {
            let seeds = common.seeds.unwrap_or(5);
            echo_config(
                &common,
                serde_json::to_value(block2::ddcl_config(common.seed, ddcl_core::batch_trainer::LossKind::Quantization)).unwrap(),
            )?;
            let out = block2::run(&data, &common.out, seeds)?;
            out.summary.print_checks();
            if common.check && !out.summary.all_checks_pass() {
                return Ok(5);
            }
        }
        Command::Block3 { common } => {
            let seeds = common.seeds.unwrap_or(5);
            echo_config(
                &common,
                serde_json::to_value(block3::ddcl_config(common.seed, ddcl_core::batch_trainer::LossKind::Quantization, 500.0)).unwrap(),
            )?;
            let out = block3::run(&common.out, seeds)?;
            out.summary.print_checks();
            if common.check && !out.summary.all_checks_pass() {
                return Ok(5);
            }
        }
        Command::Block5 { data, common } => {
            let seeds = common.seeds.unwrap_or(3);
            echo_config(
                &common,
                serde_json::to_value(block5::e2e_config(common.seed, ddcl_core::batch_trainer::LossKind::Quantization)).unwrap(),
            )?;
            let out = block5::run(&data, &common.out, seeds)?;
            out.summary.print_checks();
            if common.check && !out.summary.all_checks_pass() {
                return Ok(5);
            }
        }
        Command::Block6 {
            data,
            blobs,
            common,
        } => {
            let seeds = common.seeds.unwrap_or(5);
            echo_config(&common, serde_json::json!({"block": "block6"}))?;
            let path = if blobs { None } else { data };
            let out = block6::run(path.as_deref(), &common.out, seeds)?;
            out.summary.print_checks();
            if common.check && !out.summary.all_checks_pass() {
                return Ok(5);
            }
        }
        Command::Gradcheck { seed } => {
            let worst = tools::gradcheck(seed)?;
            println!("gradcheck passed; worst relative error {worst:.3e}");
        }
        Command::Flow {
            data,
            out,
            steps,
            seed,
            check,
        } => {
            let ok = tools::flow(data.as_deref(), &out, steps, seed)?;
            if check && !ok {
                return Ok(5);
            }
        }
        Command::GenData {
            name,
            n,
            k,
            d,
            noise,
            seed,
            out,
        } => {
            tools::gen_data(&name, n, k, d, noise, seed, &out)?;
        }
        Command::Metrics { truth, pred } => {
            tools::compare_metrics(&truth, &pred)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code_for(&err))
        }
    }
}
