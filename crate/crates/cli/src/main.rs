use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::Ordering;

use anyhow::Context;
use clap::{Parser, Subcommand};

use neuralrank::config::{parse_config, ExperimentConfig};
use neuralrank::data::Dataset;
use neuralrank::erm::evaluate;
use neuralrank::harness::{
    grid_search, mask_sweep, prepare_dataset, run_cross_validation, write_grid_outputs, write_single_outputs,
    write_sweep_outputs, RunContext, FAILED_MARKER,
};
use neuralrank::metrics::{report_rows, MetricKey, REPORT_CSV_HEADER};
use neuralrank::nn::load_checkpoint;
use neuralrank::Error;

/// Env var naming the output directory when `--out` is absent.
const OUT_ENV: &str = "LTR_OUT_DIR";
const DEFAULT_OUT: &str = "out";
const ERROR_LOG: &str = "error.log";
const EVAL_CSV: &str = "evaluation.csv";

#[derive(Debug, Parser)]
#[command(name = "neuralrank", version, about = "Neural learning-to-rank experiments")]
struct Cli {
    /// JSON config file; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set optimizer.lr=0.01`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Output directory. Falls back to the config's `output_dir`, then
    /// `$LTR_OUT_DIR`, then `./out`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Parallel (config, fold) jobs. Defaults to the available cores.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Top-level seed; every other seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// More logging (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    /// Only log errors.
    #[arg(short, long, global = true, conflicts_with = "verbose")]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print query, document, feature and label counts of a dataset.
    Datastats {
        /// LETOR file; defaults to `data.path` (or the synthetic data).
        path: Option<PathBuf>,
    },
    /// Cross-validate one configuration.
    Train,
    /// Score a saved checkpoint on every query of the configured dataset.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Cross-validate every cell of the configured grid.
    Gridsearch,
    /// Cross-validate at each masking ratio of the configured sweep.
    Masksweep,
}

/// How a command ended, mapped onto the exit status.
enum Status {
    Ok,
    Partial,
}

/// Errors that stem from the config or the input data rather than the run.
fn is_usage_error(err: &anyhow::Error) -> bool {
    err.chain().any(|e| {
        matches!(
            e.downcast_ref::<Error>(),
            Some(
                Error::Config { .. }
                    | Error::Parse { .. }
                    | Error::Dataset { .. }
                    | Error::InvalidArgument(_)
                    | Error::Json(_)
                    | Error::Checkpoint(_)
                    | Error::Dimension(_)
            )
        )
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match (cli.quiet, cli.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .format_timestamp(None)
        .init();

    let out = output_dir(&cli, None);
    let cfg = match resolve_config(&cli) {
        Ok(cfg) => cfg,
        Err(err) => {
            report_error(&out, &err, false);
            return ExitCode::from(2);
        }
    };
    let out = output_dir(&cli, Some(&cfg));
    let writes_outputs = !matches!(cli.command, Command::Datastats { .. });
    match run(&cli, cfg, &out) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => {
            log::error!("some folds failed; see {}", out.join(FAILED_MARKER).display());
            ExitCode::from(1)
        }
        Err(err) => {
            let usage = is_usage_error(&err);
            report_error(&out, &err, writes_outputs && !usage);
            ExitCode::from(if usage { 2 } else { 1 })
        }
    }
}

fn resolve_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut overrides = cli.overrides.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    let mut cfg = parse_config(cli.config.as_deref(), &overrides)?;
    if let Command::Datastats { path: Some(p) } = &cli.command {
        cfg.data.path = Some(p.clone());
    }
    Ok(cfg)
}

fn output_dir(cli: &Cli, cfg: Option<&ExperimentConfig>) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.output_dir.clone()))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Prints the error, appends it to the error log and, when the command
/// had started writing artifacts, leaves a failure marker.
fn report_error(out: &Path, err: &anyhow::Error, mark_failed: bool) {
    log::error!("{err:#}");
    if fs::create_dir_all(out).is_err() {
        return;
    }
    if let Ok(mut f) = fs::OpenOptions::new()
        .create(true)
        .append(true)
        .open(out.join(ERROR_LOG))
    {
        let _ = writeln!(f, "{err:#}");
    }
    if mark_failed {
        let _ = fs::write(out.join(FAILED_MARKER), format!("{err:#}\n"));
    }
}

fn run(cli: &Cli, mut cfg: ExperimentConfig, out: &Path) -> anyhow::Result<Status> {
    if let Command::Datastats { .. } = cli.command {
        let data = prepare_dataset(&cfg)?.dataset;
        print!("{}", datastats(&data));
        return Ok(Status::Ok);
    }

    cfg.output_dir = Some(out.to_path_buf());
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let echo = cfg.write_resolved(out)?;
    log::info!("resolved config written to {}", echo.display());

    let workers = cli
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let ctx = RunContext::new(workers);
    let cancel = ctx.cancel.clone();
    if let Err(e) = ctrlc::set_handler(move || {
        log::warn!("interrupt received; finishing running folds");
        cancel.store(true, Ordering::SeqCst);
    }) {
        log::warn!("cannot install interrupt handler: {e}");
    }

    let data = prepare_dataset(&cfg)?.dataset;
    log::info!(
        "data: {} [{}]",
        data.provenance.source,
        data.provenance.steps.join(", ")
    );
    let partial = match &cli.command {
        Command::Datastats { .. } => unreachable!("handled above"),
        Command::Train => {
            let cv = run_cross_validation(&cfg, &data, &ctx)?;
            let dir = write_single_outputs(out, &cv)?;
            let key = MetricKey::ndcg(cfg.train.selection_cutoff);
            println!(
                "{}: mean test {key} {} over {} folds ({})",
                cfg.ranker_label(),
                fmt_opt(cv.mean(key)),
                cv.folds.len(),
                dir.display()
            );
            cv.is_partial()
        }
        Command::Evaluate { checkpoint } => {
            let ck = load_checkpoint(checkpoint)?;
            let report = evaluate(&ck.net, &data, &cfg.eval_options(data.label_max))?;
            let rows = report_rows("all", "eval", &report);
            let mut csv = format!("{REPORT_CSV_HEADER}\n");
            for r in rows {
                csv.push_str(&r);
                csv.push('\n');
            }
            fs::write(out.join(EVAL_CSV), &csv)?;
            for (key, v) in report.means() {
                println!("{key} {v:.4}");
            }
            false
        }
        Command::Gridsearch => {
            let grid = grid_search(&cfg, &data, &ctx)?;
            write_grid_outputs(out, &grid)?;
            if let Some(best) = grid.best() {
                println!(
                    "{} cells; best cell {} ({}) vali {}",
                    grid.rows.len(),
                    best.cell,
                    best.outcome.hash,
                    fmt_opt(best.selection())
                );
            }
            grid.is_partial()
        }
        Command::Masksweep => {
            let sweep = mask_sweep(&cfg, &data, &ctx)?;
            write_sweep_outputs(out, &sweep)?;
            for row in &sweep.rows {
                let vals: Vec<String> = row.values.iter().map(|v| fmt_opt(*v)).collect();
                println!("{} {} {}", row.ranker, row.player, vals.join(" "));
            }
            sweep.is_partial()
        }
    };
    Ok(if partial { Status::Partial } else { Status::Ok })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".into(), |v| format!("{v:.4}"))
}

fn fmt_label(y: f64) -> String {
    if y.fract() == 0.0 {
        format!("{y:.0}")
    } else {
        y.to_string()
    }
}

/// Summary of a dataset, e.g. `2 queries, 3 documents, d=3, labels {0:1, 2:2}`
/// followed by the per-query document counts.
fn datastats(data: &Dataset) -> String {
    let mut hist: BTreeMap<u64, (f64, usize)> = BTreeMap::new();
    let mut masked = 0;
    for g in &data.groups {
        for (&y, &m) in g.labels.iter().zip(&g.masked) {
            if m {
                masked += 1;
            } else {
                hist.entry(y.to_bits()).or_insert((y, 0)).1 += 1;
            }
        }
    }
    let mut labels: Vec<(f64, usize)> = hist.into_values().collect();
    labels.sort_by(|a, b| a.0.total_cmp(&b.0));
    let labels: Vec<String> = labels.iter().map(|(y, n)| format!("{}:{n}", fmt_label(*y))).collect();
    let sizes: Vec<usize> = data.groups.iter().map(|g| g.len()).collect();
    let (min, max) = (
        sizes.iter().copied().min().unwrap_or(0),
        sizes.iter().copied().max().unwrap_or(0),
    );
    let mean = if sizes.is_empty() {
        0.0
    } else {
        data.num_documents() as f64 / sizes.len() as f64
    };
    let mut s = format!(
        "{} queries, {} documents, d={}, labels {{{}}}\n",
        data.len(),
        data.num_documents(),
        data.feature_dim,
        labels.join(", ")
    );
    s.push_str(&format!("documents per query: min {min}, mean {mean:.2}, max {max}\n"));
    if masked > 0 {
        s.push_str(&format!("masked documents: {masked}\n"));
    }
    s
}
