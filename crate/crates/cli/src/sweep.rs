//! Beta/seed sweeps: the Cartesian product of the configured lists, run as
//! independent experiments (concurrently when asked) and summarized in one
//! sweep.csv with a final-epoch row per run.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rdprobe_core::{Error, Result};

use crate::artifacts::{fmt6, read_metrics_csv, METRICS_FILE};
use crate::config::ConfigTree;
use crate::manifest::{run_id_for, RunStatus};
use crate::runner::{run_experiment, DatasetPair, RunOptions};

pub const SWEEP_FILE: &str = "sweep.csv";
pub const SWEEP_HEADER: &str = "run_id,beta,seed,status,epoch,rate_nats,distortion_nats,loss_nats";

/// Outcome of one sweep cell. Failed cells keep their error text for the
/// console; their metric cells stay empty in the CSV.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub run_id: String,
    pub beta: f64,
    pub seed: u64,
    pub status: RunStatus,
    pub epoch: Option<u32>,
    pub rate_nats: Option<f64>,
    pub distortion_nats: Option<f64>,
    pub loss_nats: Option<f64>,
    pub error: Option<String>,
}

impl SweepRow {
    fn csv_line(&self) -> String {
        let opt_u32 = |v: Option<u32>| v.map(|x| x.to_string()).unwrap_or_default();
        let opt_f64 = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{}",
            self.run_id,
            fmt6(self.beta),
            self.seed,
            self.status.as_str(),
            opt_u32(self.epoch),
            opt_f64(self.rate_nats),
            opt_f64(self.distortion_nats),
            opt_f64(self.loss_nats),
        )
    }
}

/// Run the full grid and write <out>/sweep.csv. Individual failures are
/// recorded as rows and do not stop the sweep. Rows are ordered by
/// (beta, seed) regardless of worker scheduling, so reruns are
/// byte-identical.
pub fn run_sweep(
    cfg: &ConfigTree,
    data: &DatasetPair,
    threads: usize,
    opts: &RunOptions,
) -> Result<(PathBuf, Vec<SweepRow>)> {
    let mut cells: Vec<(f64, u64)> = Vec::new();
    for &beta in &cfg.sweep.betas {
        for &seed in &cfg.sweep.seeds {
            // Duplicate cells would race on one run directory; keep the first.
            if !cells.iter().any(|&(b, s)| b == beta && s == seed) {
                cells.push((beta, seed));
            }
        }
    }
    cells.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let workers = threads.max(1).min(cells.len());
    let next = AtomicUsize::new(0);
    let collected: Mutex<Vec<(usize, SweepRow)>> = Mutex::new(Vec::with_capacity(cells.len()));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let mut local = Vec::new();
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= cells.len() {
                        break;
                    }
                    let (beta, seed) = cells[i];
                    local.push((i, run_cell(cfg, data, beta, seed, opts)));
                }
                collected.lock().expect("sweep worker panicked").extend(local);
            });
        }
    });
    let mut rows = collected.into_inner().expect("sweep worker panicked");
    rows.sort_by_key(|(i, _)| *i);
    let rows: Vec<SweepRow> = rows.into_iter().map(|(_, row)| row).collect();

    let mut text = String::from(SWEEP_HEADER);
    text.push('\n');
    for row in &rows {
        text.push_str(&row.csv_line());
        text.push('\n');
    }
    let path = cfg.out.join(SWEEP_FILE);
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok((path, rows))
}

fn run_cell(cfg: &ConfigTree, data: &DatasetPair, beta: f64, seed: u64, opts: &RunOptions) -> SweepRow {
    let child = cfg.with_beta_seed(beta, seed);
    let mut row = SweepRow {
        run_id: run_id_for("train", &child),
        beta,
        seed,
        status: RunStatus::Failed,
        epoch: None,
        rate_nats: None,
        distortion_nats: None,
        loss_nats: None,
        error: None,
    };
    let summary = match run_experiment(&child, data, opts) {
        Ok(s) => s,
        Err(e) => {
            row.error = Some(e.to_string());
            return row;
        }
    };
    match read_metrics_csv(&summary.dir.join(METRICS_FILE)) {
        Ok(metrics) => {
            // read_metrics_csv guarantees at least one row.
            let last = metrics.last().expect("metrics nonempty");
            row.status = summary.status;
            row.epoch = Some(last.epoch);
            row.rate_nats = Some(last.rate_nats);
            row.distortion_nats = Some(last.distortion_nats);
            row.loss_nats = Some(last.loss_nats);
        }
        Err(e) => row.error = Some(e.to_string()),
    }
    row
}
