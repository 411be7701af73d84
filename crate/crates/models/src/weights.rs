//! Parameter serialization.
//!
//! Layout, all integers little-endian u32:
//!   magic "IPW1" | tensor count | per tensor: name len, UTF-8 name,
//!   rank, dims, raw f32 data.
//! Values are stored as f32 regardless of the in-memory scalar type, so an
//! f32 round trip is bit-exact.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rdprobe_core::{Error, Real, Result, Tensor};

use crate::params::ParamSet;

const MAGIC: &[u8; 4] = b"IPW1";
const MAX_NAME_LEN: u32 = 1 << 16;
const MAX_RANK: u32 = 8;

pub fn save_params<F: Real>(params: &ParamSet<F>, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io_err = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&(params.len() as u32).to_le_bytes()).map_err(io_err)?;
    for (name, t) in params.entries() {
        let name_bytes = name.as_bytes();
        w.write_all(&(name_bytes.len() as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(name_bytes).map_err(io_err)?;
        w.write_all(&(t.shape().len() as u32).to_le_bytes()).map_err(io_err)?;
        for &d in t.shape() {
            w.write_all(&(d as u32).to_le_bytes()).map_err(io_err)?;
        }
        for v in t.data() {
            w.write_all(&(v.to_f64_() as f32).to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

struct Reader<'p, R: Read> {
    inner: R,
    path: &'p Path,
    offset: u64,
    file_len: u64,
}

impl<'p, R: Read> Reader<'p, R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|_| {
            Error::parse(self.path, format!("weight file truncated at byte {}", self.offset))
        })?;
        self.offset += buf.len() as u64;
        Ok(())
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    /// Bounds-check before allocating, so a corrupt length cannot force a
    /// huge allocation.
    fn ensure_remaining(&self, bytes: u64, what: &str) -> Result<()> {
        if self.offset + bytes > self.file_len {
            return Err(Error::parse(
                self.path,
                format!(
                    "weight file truncated: {what} needs {bytes} bytes at offset {} but the file ends at {}",
                    self.offset, self.file_len
                ),
            ));
        }
        Ok(())
    }
}

/// Read raw named tensors without checking them against any architecture.
pub fn load_raw(path: &Path) -> Result<Vec<(String, Tensor<f32>)>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let file_len = file.metadata().map_err(|e| Error::io(path, e))?.len();
    let mut r = Reader { inner: BufReader::new(file), path, offset: 0, file_len };

    let mut magic = [0u8; 4];
    r.fill(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::parse(path, format!("bad magic {magic:?}, expected \"IPW1\"")));
    }
    let count = r.u32()?;
    let mut entries = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let name_len = r.u32()?;
        if name_len > MAX_NAME_LEN {
            return Err(Error::parse(path, format!("tensor name length {name_len} is implausible")));
        }
        let mut name_bytes = vec![0u8; name_len as usize];
        r.fill(&mut name_bytes)?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::parse(path, "tensor name is not valid UTF-8"))?;
        let rank = r.u32()?;
        if rank > MAX_RANK {
            return Err(Error::parse(path, format!("tensor {name} has implausible rank {rank}")));
        }
        let mut shape = Vec::with_capacity(rank as usize);
        for _ in 0..rank {
            shape.push(r.u32()? as usize);
        }
        let n: usize = shape.iter().product();
        r.ensure_remaining(4 * n as u64, &format!("tensor {name}"))?;
        let mut data = vec![0f32; n];
        for v in data.iter_mut() {
            let mut b = [0u8; 4];
            r.fill(&mut b)?;
            *v = f32::from_le_bytes(b);
        }
        let tensor = Tensor::new(shape, data)
            .map_err(|e| Error::parse(path, format!("tensor {name}: {e}")))?;
        entries.push((name, tensor));
    }
    Ok(entries)
}

/// Load weights that must line up, tensor for tensor, with `template`
/// (normally a freshly initialized set for the intended architecture).
/// Returns a set with the template's provenance and the file's values.
pub fn load_params_matching<F: Real>(path: &Path, template: &ParamSet<F>) -> Result<ParamSet<F>> {
    let raw = load_raw(path)?;
    if raw.len() != template.len() {
        return Err(Error::ShapeMismatch {
            op: "load_params",
            detail: format!(
                "{} holds {} tensors but the architecture has {}",
                path.display(),
                raw.len(),
                template.len()
            ),
        });
    }
    let mut entries = Vec::with_capacity(raw.len());
    for ((name, tensor), (want_name, want)) in raw.into_iter().zip(template.entries()) {
        if &name != want_name {
            return Err(Error::ShapeMismatch {
                op: "load_params",
                detail: format!("expected tensor {want_name}, found {name}"),
            });
        }
        if tensor.shape() != want.shape() {
            return Err(Error::ShapeMismatch {
                op: "load_params",
                detail: format!(
                    "shape mismatch for tensor {name}: file has {:?}, architecture needs {:?}",
                    tensor.shape(),
                    want.shape()
                ),
            });
        }
        entries.push((name, tensor.cast::<F>()));
    }
    ParamSet::new(entries, template.spec_hash(), template.init_seed())
}
