//! Argument parsing and subcommand dispatch with the contractual exit codes:
//! 0 success, 1 usage or config error, 2 data error, 3 NaN-aborted run.

use std::path::PathBuf;

use crate::baseline_cmd::{run_baseline, run_discard};
use crate::config::{BaselineKind, ConfigTree};
use crate::gradcheck::{run_gradient_suite, DEFAULT_TRIALS};
use crate::manifest::RunStatus;
use crate::report::emit_report;
use crate::runner::{build_dataset, dataset_classes, rerun_probe, run_experiment, RunOptions, RunSummary};
use crate::sweep::run_sweep;
use crate::{CliFailure, CliResult, EXIT_ABORTED, EXIT_OK};

pub const USAGE: &str = "\
rdprobe - train rate-distortion VAEs and measure label information

usage: rdprobe <command> [flags]

commands:
  train                 train the configured VAE, then probe its encoder
  probe                 recompute probe.csv for an already trained run
  baseline <kind>       run a reference encoder: pca | random-encoder |
                        supervised | discard-line
  sweep                 run the beta x seed grid from the config
  report                collect completed runs into report CSVs
  check-grads           finite-difference check of every graph primitive

flags:
  --config PATH         JSON config file (required except for check-grads)
  --out DIR             output directory, overrides config \"out\" (default runs)
  --seed N              override train.seed
  --force               redo runs that already have a directory
  --threads N           sweep-level parallelism (default 1)
  -h, --help            this text

exit codes: 0 success, 1 usage/config error, 2 data error, 3 run aborted (NaN)";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Train,
    Probe,
    Baseline(BaselineKind),
    Sweep,
    Report,
    CheckGrads,
    Help,
}

#[derive(Debug, Clone)]
pub struct Cli {
    pub command: Command,
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub force: bool,
    pub threads: usize,
}

pub fn parse_args(args: &[String]) -> CliResult<Cli> {
    let mut cli = Cli {
        command: Command::Help,
        config: None,
        out: None,
        seed: None,
        force: false,
        threads: 1,
    };
    let mut command: Option<Command> = None;
    let mut iter = args.iter().peekable();
    let flag_value = |iter: &mut std::iter::Peekable<std::slice::Iter<String>>,
                      flag: &str|
     -> CliResult<String> {
        iter.next()
            .map(|s| s.to_string())
            .ok_or_else(|| CliFailure::usage(format!("{flag} needs a value")))
    };
    while let Some(arg) = iter.next() {
        match arg.as_str() {
            "-h" | "--help" => return Ok(Cli { command: Command::Help, ..cli }),
            "--config" => cli.config = Some(PathBuf::from(flag_value(&mut iter, "--config")?)),
            "--out" => cli.out = Some(PathBuf::from(flag_value(&mut iter, "--out")?)),
            "--seed" => {
                let v = flag_value(&mut iter, "--seed")?;
                cli.seed = Some(
                    v.parse::<u64>()
                        .map_err(|_| CliFailure::usage(format!("--seed must be an integer, got {v:?}")))?,
                );
            }
            "--force" => cli.force = true,
            "--threads" => {
                let v = flag_value(&mut iter, "--threads")?;
                let n = v
                    .parse::<usize>()
                    .map_err(|_| CliFailure::usage(format!("--threads must be an integer, got {v:?}")))?;
                if n == 0 {
                    return Err(CliFailure::usage("--threads must be at least 1"));
                }
                cli.threads = n;
            }
            s if s.starts_with('-') => {
                return Err(CliFailure::usage(format!("unknown flag {s:?}; see --help")));
            }
            s => {
                if command.is_some() {
                    return Err(CliFailure::usage(format!("unexpected argument {s:?}")));
                }
                command = Some(match s {
                    "train" => Command::Train,
                    "probe" => Command::Probe,
                    "sweep" => Command::Sweep,
                    "report" => Command::Report,
                    "check-grads" => Command::CheckGrads,
                    "baseline" => {
                        let kind = iter
                            .next()
                            .ok_or_else(|| {
                                CliFailure::usage(
                                    "baseline needs a kind: pca | random-encoder | supervised | discard-line",
                                )
                            })?;
                        Command::Baseline(match kind.as_str() {
                            "pca" => BaselineKind::Pca,
                            "random-encoder" => BaselineKind::RandomEncoder,
                            "supervised" => BaselineKind::Supervised,
                            "discard-line" => BaselineKind::DiscardLine,
                            other => {
                                return Err(CliFailure::usage(format!(
                                    "unknown baseline kind {other:?}"
                                )))
                            }
                        })
                    }
                    other => return Err(CliFailure::usage(format!("unknown command {other:?}"))),
                });
            }
        }
    }
    cli.command = command.ok_or_else(|| CliFailure::usage("no command given; see --help"))?;
    Ok(cli)
}

/// Load the config named by --config and fold in the flag overrides. The
/// --seed override also retargets a defaulted sweep seed list.
fn load_config(cli: &Cli) -> CliResult<ConfigTree> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliFailure::usage("this command needs --config PATH"))?;
    let mut cfg = ConfigTree::from_path(path).map_err(CliFailure::config)?;
    if let Some(seed) = cli.seed {
        let seed_was_default = cfg.sweep.seeds == vec![cfg.train.seed];
        cfg.train.seed = seed;
        if seed_was_default {
            cfg.sweep.seeds = vec![seed];
        }
    }
    if let Some(out) = &cli.out {
        cfg.out = out.clone();
    }
    Ok(cfg)
}

fn describe(summary: &RunSummary, what: &str) -> String {
    let verb = match (summary.reused, summary.status) {
        (true, _) => "reused",
        (false, RunStatus::Completed) => "completed",
        (false, RunStatus::AbortedNan) => "aborted (non-finite loss)",
        (false, RunStatus::Failed) => "failed",
    };
    format!("{what} {} {verb}: {}", summary.run_id, summary.dir.display())
}

fn exit_for(summary: &RunSummary) -> i32 {
    match summary.status {
        RunStatus::AbortedNan => EXIT_ABORTED,
        _ => EXIT_OK,
    }
}

fn dispatch(cli: &Cli) -> CliResult<i32> {
    let opts = RunOptions { force: cli.force };
    match cli.command {
        Command::Help => {
            println!("{USAGE}");
            Ok(EXIT_OK)
        }
        Command::CheckGrads => {
            let seed = cli.seed.unwrap_or(0);
            let lines = run_gradient_suite(DEFAULT_TRIALS, seed).map_err(CliFailure::config)?;
            let mut all_ok = true;
            for line in &lines {
                all_ok &= line.passed;
                println!(
                    "{} {:<20} trials {:>3}  max rel err {:.3e}",
                    if line.passed { "ok  " } else { "FAIL" },
                    line.name,
                    line.trials,
                    line.max_rel_err,
                );
            }
            println!("{}", if all_ok { "all gradients verified" } else { "gradient check FAILED" });
            Ok(if all_ok { EXIT_OK } else { 1 })
        }
        Command::Train => {
            let cfg = load_config(cli)?;
            let data = build_dataset(&cfg.dataset).map_err(CliFailure::data)?;
            let summary = run_experiment(&cfg, &data, &opts).map_err(CliFailure::config)?;
            println!("{}", describe(&summary, "run"));
            Ok(exit_for(&summary))
        }
        Command::Probe => {
            let cfg = load_config(cli)?;
            let data = build_dataset(&cfg.dataset).map_err(CliFailure::data)?;
            let summary = rerun_probe(&cfg, &data, &opts).map_err(CliFailure::config)?;
            println!("{}", describe(&summary, "probe for run"));
            Ok(EXIT_OK)
        }
        Command::Baseline(kind) => {
            let cfg = load_config(cli)?;
            let summary = if kind == BaselineKind::DiscardLine {
                let classes = dataset_classes(&cfg.dataset).map_err(CliFailure::data)?;
                run_discard(&cfg, classes, &opts).map_err(CliFailure::config)?
            } else {
                let data = build_dataset(&cfg.dataset).map_err(CliFailure::data)?;
                run_baseline(kind, &cfg, &data, &opts).map_err(CliFailure::config)?
            };
            println!("{}", describe(&summary, &format!("baseline {}", kind.as_str())));
            Ok(EXIT_OK)
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let data = build_dataset(&cfg.dataset).map_err(CliFailure::data)?;
            let (path, rows) =
                run_sweep(&cfg, &data, cli.threads, &opts).map_err(CliFailure::config)?;
            for row in &rows {
                match &row.error {
                    Some(msg) => println!(
                        "run {} beta={} seed={} failed: {msg}",
                        row.run_id, row.beta, row.seed
                    ),
                    None => println!(
                        "run {} beta={} seed={} {}",
                        row.run_id,
                        row.beta,
                        row.seed,
                        row.status.as_str()
                    ),
                }
            }
            println!("sweep: {} run(s) -> {}", rows.len(), path.display());
            Ok(EXIT_OK)
        }
        Command::Report => {
            let cfg = load_config(cli)?;
            let dir = emit_report(&cfg).map_err(CliFailure::config)?;
            println!("report written to {}", dir.display());
            Ok(EXIT_OK)
        }
    }
}

/// Parse and run; prints errors to stderr and returns the process exit code.
pub fn run_cli(args: &[String]) -> i32 {
    let cli = match parse_args(args) {
        Ok(cli) => cli,
        Err(f) => {
            eprintln!("error: {}", f.error);
            eprintln!("{USAGE}");
            return f.exit;
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.error);
            f.exit
        }
    }
}
