//! Run-directory files: metrics.csv, probe.csv, and the shared numeric
//! rendering. All floats print with six decimal places so reruns are
//! byte-comparable.

use std::path::Path;

use rdprobe_core::{Error, Result};
use rdprobe_objectives::RunMetrics;

pub const METRICS_FILE: &str = "metrics.csv";
pub const PROBE_FILE: &str = "probe.csv";
pub const WEIGHTS_FILE: &str = "weights.ipw";

pub const METRICS_HEADER: &str = "run_id,beta,epoch,rate_nats,distortion_nats,loss_nats";
pub const PROBE_HEADER: &str = "run_id,c_nats,c_bits,accuracy,samples";

/// Fixed six-decimal rendering used by every report cell.
pub fn fmt6(v: f64) -> String {
    format!("{v:.6}")
}

/// One metrics.csv line; epoch 0 is the initialization snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub run_id: String,
    pub beta: f64,
    pub epoch: u32,
    pub rate_nats: f64,
    pub distortion_nats: f64,
    pub loss_nats: f64,
}

/// The probe.csv line: label distortion of the trained encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub run_id: String,
    pub c_nats: f64,
    pub c_bits: f64,
    pub accuracy: f64,
    pub samples: usize,
}

pub fn write_metrics_csv(path: &Path, rows: &[RunMetrics]) -> Result<()> {
    let mut text = String::from(METRICS_HEADER);
    text.push('\n');
    for row in rows {
        text.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.run_id,
            fmt6(row.beta),
            row.epoch,
            fmt6(row.rate_nats),
            fmt6(row.distortion_nats),
            fmt6(row.loss_nats),
        ));
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn write_probe_csv(path: &Path, row: &ProbeRow) -> Result<()> {
    let text = format!(
        "{PROBE_HEADER}\n{},{},{},{},{}\n",
        row.run_id,
        fmt6(row.c_nats),
        fmt6(row.c_bits),
        fmt6(row.accuracy),
        row.samples,
    );
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn split_line<'a>(line: &'a str, fields: usize, path: &Path) -> Result<Vec<&'a str>> {
    let cells: Vec<&str> = line.split(',').collect();
    if cells.len() != fields {
        return Err(Error::parse(
            path,
            format!("expected {fields} fields, got {} in line {line:?}", cells.len()),
        ));
    }
    Ok(cells)
}

fn parse_f64(cell: &str, what: &str, path: &Path) -> Result<f64> {
    cell.parse::<f64>().map_err(|_| Error::parse(path, format!("bad {what} value {cell:?}")))
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == METRICS_HEADER => {}
        other => {
            return Err(Error::parse(path, format!("unexpected metrics header {other:?}")));
        }
    }
    let mut rows = Vec::new();
    for line in lines {
        if line.is_empty() {
            continue;
        }
        let c = split_line(line, 6, path)?;
        rows.push(MetricsRow {
            run_id: c[0].to_string(),
            beta: parse_f64(c[1], "beta", path)?,
            epoch: c[2]
                .parse::<u32>()
                .map_err(|_| Error::parse(path, format!("bad epoch value {:?}", c[2])))?,
            rate_nats: parse_f64(c[3], "rate", path)?,
            distortion_nats: parse_f64(c[4], "distortion", path)?,
            loss_nats: parse_f64(c[5], "loss", path)?,
        });
    }
    if rows.is_empty() {
        return Err(Error::parse(path, "metrics file has no rows"));
    }
    Ok(rows)
}

pub fn read_probe_csv(path: &Path) -> Result<ProbeRow> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == PROBE_HEADER => {}
        other => {
            return Err(Error::parse(path, format!("unexpected probe header {other:?}")));
        }
    }
    let line = lines
        .find(|l| !l.is_empty())
        .ok_or_else(|| Error::parse(path, "probe file has no rows"))?;
    let c = split_line(line, 5, path)?;
    Ok(ProbeRow {
        run_id: c[0].to_string(),
        c_nats: parse_f64(c[1], "c_nats", path)?,
        c_bits: parse_f64(c[2], "c_bits", path)?,
        accuracy: parse_f64(c[3], "accuracy", path)?,
        samples: c[4]
            .parse::<usize>()
            .map_err(|_| Error::parse(path, format!("bad samples value {:?}", c[4])))?,
    })
}
