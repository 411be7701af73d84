//! Plain-text binary image matrices: one example per line, 784 space-separated
//! values, each exactly 0 or 1. An optional sidecar file carries one integer
//! label per line, aligned with the image rows.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use rdprobe_core::{Error, Result, Tensor};

pub const AMAT_COLUMNS: usize = 784;

pub fn load_amat(path: &Path) -> Result<Tensor<f32>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut data: Vec<f32> = Vec::new();
    let mut rows = 0usize;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut count = 0usize;
        for tok in line.split_whitespace() {
            // Accept integer or float renderings of exactly 0 and 1.
            let v: f64 = tok.parse().map_err(|_| {
                Error::parse(path, format!("line {}: unparseable value {tok:?}", lineno + 1))
            })?;
            if v != 0.0 && v != 1.0 {
                return Err(Error::parse(path, format!("line {}: non-binary value {tok}", lineno + 1)));
            }
            data.push(v as f32);
            count += 1;
        }
        if count != AMAT_COLUMNS {
            return Err(Error::parse(
                path,
                format!("line {}: {count} values, expected {AMAT_COLUMNS}", lineno + 1),
            ));
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::parse(path, "no examples".to_string()));
    }
    Tensor::new(vec![rows, AMAT_COLUMNS], data)
}

pub fn write_amat(path: &Path, images: &Tensor<f32>) -> Result<()> {
    if images.cols() != AMAT_COLUMNS {
        return Err(Error::InvalidArg(format!(
            "amat rows must have {AMAT_COLUMNS} columns, got {}",
            images.cols()
        )));
    }
    if images.data().iter().any(|&v| v != 0.0 && v != 1.0) {
        return Err(Error::InvalidArg("amat output must be binary".into()));
    }
    let mut out = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut line = String::with_capacity(AMAT_COLUMNS * 2);
    for r in 0..images.rows() {
        line.clear();
        for (i, &v) in images.data()[r * AMAT_COLUMNS..(r + 1) * AMAT_COLUMNS].iter().enumerate() {
            if i > 0 {
                line.push(' ');
            }
            line.push(if v == 1.0 { '1' } else { '0' });
        }
        line.push('\n');
        out.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Sidecar label file: one class index per line.
pub fn load_labels_txt(path: &Path) -> Result<Vec<usize>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut labels = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        labels.push(t.parse::<usize>().map_err(|_| {
            Error::parse(path, format!("line {}: bad label {t:?}", lineno + 1))
        })?);
    }
    Ok(labels)
}

pub fn write_labels_txt(path: &Path, labels: &[usize]) -> Result<()> {
    let mut body = String::with_capacity(labels.len() * 2);
    for l in labels {
        body.push_str(&l.to_string());
        body.push('\n');
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_line_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("z.amat");
        let line = vec!["0"; AMAT_COLUMNS].join(" ");
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let t = load_amat(&path).unwrap();
        assert_eq!(t.shape(), &[1, AMAT_COLUMNS]);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn short_line_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.amat");
        let line = vec!["1"; AMAT_COLUMNS - 1].join(" ");
        std::fs::write(&path, format!("{line}\n")).unwrap();
        let err = load_amat(&path).unwrap_err();
        assert!(err.to_string().contains("783 values"), "{err}");
    }

    #[test]
    fn non_binary_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("gray.amat");
        let mut vals = vec!["0"; AMAT_COLUMNS];
        vals[3] = "0.5";
        std::fs::write(&path, format!("{}\n", vals.join(" "))).unwrap();
        let err = load_amat(&path).unwrap_err();
        assert!(err.to_string().contains("non-binary"), "{err}");
    }

    #[test]
    fn write_read_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rt.amat");
        let mut data = vec![0.0f32; 2 * AMAT_COLUMNS];
        for i in (0..data.len()).step_by(3) {
            data[i] = 1.0;
        }
        let t = Tensor::new(vec![2, AMAT_COLUMNS], data).unwrap();
        write_amat(&path, &t).unwrap();
        let back = load_amat(&path).unwrap();
        assert_eq!(back.shape(), t.shape());
        assert_eq!(back.data(), t.data());
    }

    #[test]
    fn labels_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("labels.txt");
        write_labels_txt(&path, &[0, 9, 3]).unwrap();
        assert_eq!(load_labels_txt(&path).unwrap(), vec![0, 9, 3]);
    }
}
