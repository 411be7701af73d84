//! Report bundle: collects completed run directories into rate/distortion
//! CSVs plus the reference curves. A pure function of the directories it
//! reads, so regenerating the report is byte-identical.

use std::path::{Path, PathBuf};

use rdprobe_core::{Error, Result};

use crate::artifacts::{fmt6, read_metrics_csv, read_probe_csv, METRICS_FILE, PROBE_FILE};
use crate::baseline_cmd::{discard_csv, BASELINE_FILE, DISCARD_FILE, PCA_FRONTIER_FILE, PCA_FRONTIER_HEADER};
use crate::config::ConfigTree;
use crate::manifest::{RunManifest, RunStatus};

pub const REPORT_DIR: &str = "report";
pub const C_VS_R_FILE: &str = "c_vs_r.csv";
pub const C_VS_D_FILE: &str = "c_vs_d.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const FRONTIER_HEADER: &str =
    "source,run_id,beta,R_nats,D_nats,C_nats,C_bits,accuracy,compression_factor";

/// One encoder measured at one operating point.
#[derive(Debug, Clone)]
struct FrontRow {
    source: String,
    run_id: String,
    beta: Option<f64>,
    r_nats: Option<f64>,
    d_nats: Option<f64>,
    c_nats: f64,
    c_bits: f64,
    accuracy: f64,
    compression: Option<f64>,
}

impl FrontRow {
    fn csv_line(&self) -> String {
        let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.source,
            self.run_id,
            opt(self.beta),
            opt(self.r_nats),
            opt(self.d_nats),
            fmt6(self.c_nats),
            fmt6(self.c_bits),
            fmt6(self.accuracy),
            opt(self.compression),
        )
    }
}

/// What the scan found under the output directory.
struct Scan {
    rows: Vec<FrontRow>,
    pca_lines: Vec<PcaLine>,
    classes: usize,
    vae_runs: usize,
    pca_runs: usize,
    random_runs: usize,
    supervised_runs: usize,
    skipped: usize,
}

/// A pca_frontier.csv data line with its sort keys.
struct PcaLine {
    sigma: f64,
    k: usize,
    line: String,
}

/// Write <out>/report/ with c_vs_r.csv, c_vs_d.csv, pca_frontier.csv,
/// discard_line.csv, and summary.txt. Requires at least one completed run
/// directory; completed directories with missing files are an error naming
/// the file.
pub fn emit_report(cfg: &ConfigTree) -> Result<PathBuf> {
    let mut scan = scan_runs(&cfg.out, cfg.baselines.h_x)?;
    let report_dir = cfg.out.join(REPORT_DIR);
    std::fs::create_dir_all(&report_dir).map_err(|e| Error::io(&report_dir, e))?;

    let write = |name: &str, text: &str| -> Result<()> {
        let path = report_dir.join(name);
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    };

    // c-versus-R orders by rate; c-versus-D by distortion. Rows without the
    // sort value (uncompressed references) sink to the bottom.
    let sorted = |key: fn(&FrontRow) -> Option<f64>| -> Vec<&FrontRow> {
        let mut rows: Vec<&FrontRow> = scan.rows.iter().collect();
        rows.sort_by(|a, b| {
            match (key(a), key(b)) {
                (Some(x), Some(y)) => x.total_cmp(&y),
                (Some(_), None) => std::cmp::Ordering::Less,
                (None, Some(_)) => std::cmp::Ordering::Greater,
                (None, None) => std::cmp::Ordering::Equal,
            }
            .then_with(|| a.source.cmp(&b.source))
            .then_with(|| a.run_id.cmp(&b.run_id))
        });
        rows
    };
    let csv_of = |rows: &[&FrontRow]| -> String {
        let mut text = String::from(FRONTIER_HEADER);
        text.push('\n');
        for row in rows {
            text.push_str(&row.csv_line());
            text.push('\n');
        }
        text
    };
    let by_rate = sorted(|r| r.r_nats);
    write(C_VS_R_FILE, &csv_of(&by_rate))?;
    write(C_VS_D_FILE, &csv_of(&sorted(|r| r.d_nats)))?;

    let mut pca_text = String::from(PCA_FRONTIER_HEADER);
    pca_text.push('\n');
    let mut pca_lines = std::mem::take(&mut scan.pca_lines);
    pca_lines.sort_by(|a, b| {
        a.k.cmp(&b.k).then(a.sigma.total_cmp(&b.sigma)).then_with(|| a.line.cmp(&b.line))
    });
    for entry in &pca_lines {
        pca_text.push_str(&entry.line);
        pca_text.push('\n');
    }
    write(PCA_FRONTIER_FILE, &pca_text)?;

    write(DISCARD_FILE, &discard_csv(cfg, scan.classes)?)?;
    write(SUMMARY_FILE, &summary_text(cfg, &scan, &by_rate, pca_lines.len()))?;
    Ok(report_dir)
}

fn scan_runs(out: &Path, h_x: f64) -> Result<Scan> {
    let mut scan = Scan {
        rows: Vec::new(),
        pca_lines: Vec::new(),
        classes: 0,
        vae_runs: 0,
        pca_runs: 0,
        random_runs: 0,
        supervised_runs: 0,
        skipped: 0,
    };
    let mut dirs: Vec<PathBuf> = Vec::new();
    let entries = std::fs::read_dir(out).map_err(|e| Error::io(out, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(out, e))?;
        if entry.path().is_dir() {
            dirs.push(entry.path());
        }
    }
    // Directory order is filesystem-dependent; scan deterministically.
    dirs.sort();

    for dir in dirs {
        let manifest = match RunManifest::read(&dir)? {
            Some(m) => m,
            None => continue,
        };
        if manifest.status != RunStatus::Completed {
            scan.skipped += 1;
            continue;
        }
        if scan.classes == 0 {
            scan.classes = manifest.classes;
        } else if scan.classes != manifest.classes {
            return Err(Error::InvalidArg(format!(
                "runs disagree on class count ({} vs {})",
                scan.classes, manifest.classes
            )));
        }
        match manifest.command.as_str() {
            "train" => {
                scan.vae_runs += 1;
                scan.rows.push(vae_row(&dir, &manifest, h_x)?);
            }
            "baseline-pca" => {
                scan.pca_runs += 1;
                collect_pca_lines(&dir, &manifest, &mut scan.pca_lines)?;
            }
            "baseline-random-encoder" => {
                scan.random_runs += 1;
                scan.rows.push(reference_row(&dir, &manifest, h_x)?);
            }
            "baseline-supervised" => {
                scan.supervised_runs += 1;
                scan.rows.push(reference_row(&dir, &manifest, h_x)?);
            }
            // Discard-line directories carry no measurements; the report
            // regenerates the curve from config constants.
            _ => {}
        }
    }
    if scan.classes == 0 {
        return Err(Error::InvalidArg(format!(
            "no completed runs under {}; train or run a baseline first",
            out.display()
        )));
    }
    Ok(scan)
}

fn require_file(dir: &Path, name: &str, run_id: &str) -> Result<PathBuf> {
    let path = dir.join(name);
    if !path.exists() {
        return Err(Error::InvalidArg(format!(
            "run {run_id} is marked completed but is missing {}",
            path.display()
        )));
    }
    Ok(path)
}

fn vae_row(dir: &Path, manifest: &RunManifest, h_x: f64) -> Result<FrontRow> {
    let metrics = read_metrics_csv(&require_file(dir, METRICS_FILE, &manifest.run_id)?)?;
    let probe = read_probe_csv(&require_file(dir, PROBE_FILE, &manifest.run_id)?)?;
    let last = metrics.last().expect("metrics nonempty");
    let compression = if last.rate_nats > 0.0 { Some(h_x / last.rate_nats) } else { None };
    Ok(FrontRow {
        source: "vae".into(),
        run_id: manifest.run_id.clone(),
        beta: Some(last.beta),
        r_nats: Some(last.rate_nats),
        d_nats: Some(last.distortion_nats),
        c_nats: probe.c_nats,
        c_bits: probe.c_bits,
        accuracy: probe.accuracy,
        compression,
    })
}

/// Random and supervised encoders work on raw images: an uncompressed
/// setting, recorded at R = H_X with compression factor 1.
fn reference_row(dir: &Path, manifest: &RunManifest, h_x: f64) -> Result<FrontRow> {
    let path = require_file(dir, BASELINE_FILE, &manifest.run_id)?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let line = text
        .lines()
        .nth(1)
        .ok_or_else(|| Error::parse(&path, "baseline file has no data row"))?;
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != 4 {
        return Err(Error::parse(&path, format!("expected 4 fields, got {}", cells.len())));
    }
    let num = |i: usize, what: &str| -> Result<f64> {
        cells[i]
            .parse::<f64>()
            .map_err(|_| Error::parse(&path, format!("bad {what} value {:?}", cells[i])))
    };
    Ok(FrontRow {
        source: cells[0].to_string(),
        run_id: manifest.run_id.clone(),
        beta: None,
        r_nats: Some(h_x),
        d_nats: None,
        c_nats: num(1, "c_nats")?,
        c_bits: num(2, "c_bits")?,
        accuracy: num(3, "accuracy")?,
        compression: Some(1.0),
    })
}

fn collect_pca_lines(dir: &Path, manifest: &RunManifest, out: &mut Vec<PcaLine>) -> Result<()> {
    let path = require_file(dir, PCA_FRONTIER_FILE, &manifest.run_id)?;
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == PCA_FRONTIER_HEADER => {}
        other => return Err(Error::parse(&path, format!("unexpected frontier header {other:?}"))),
    }
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 7 {
            return Err(Error::parse(&path, format!("expected 7 fields, got {}", cells.len())));
        }
        let sigma = cells[0]
            .parse::<f64>()
            .map_err(|_| Error::parse(&path, format!("bad sigma value {:?}", cells[0])))?;
        let k = cells[1]
            .parse::<usize>()
            .map_err(|_| Error::parse(&path, format!("bad k value {:?}", cells[1])))?;
        out.push(PcaLine { sigma, k, line: line.to_string() });
    }
    Ok(())
}

fn summary_text(cfg: &ConfigTree, scan: &Scan, by_rate: &[&FrontRow], pca_points: usize) -> String {
    let mut text = String::new();
    text.push_str("rate-distortion report\n");
    text.push_str("======================\n\n");
    text.push_str(&format!(
        "completed: {} vae run(s), {} pca frontier run(s) ({} points), {} random-encoder, {} supervised; skipped {} non-completed\n",
        scan.vae_runs, scan.pca_runs, pca_points, scan.random_runs, scan.supervised_runs, scan.skipped
    ));
    text.push_str(&format!(
        "classes: {} (H_Y = {} nats); H_X = {} nats; discard floor = {} nats\n\n",
        scan.classes,
        fmt6((scan.classes as f64).ln()),
        fmt6(cfg.baselines.h_x),
        fmt6(cfg.baselines.discard_floor),
    ));
    text.push_str(&format!(
        "{:<22} {:<18} {:>10} {:>12} {:>12} {:>10} {:>10} {:>8}\n",
        "source", "run_id", "beta", "R_nats", "D_nats", "C_nats", "C_bits", "acc"
    ));
    let opt = |v: Option<f64>| v.map(fmt6).unwrap_or_else(|| "-".into());
    for row in by_rate {
        text.push_str(&format!(
            "{:<22} {:<18} {:>10} {:>12} {:>12} {:>10} {:>10} {:>8}\n",
            row.source,
            row.run_id,
            opt(row.beta),
            opt(row.r_nats),
            opt(row.d_nats),
            fmt6(row.c_nats),
            fmt6(row.c_bits),
            format!("{:.4}", row.accuracy),
        ));
    }
    text
}
