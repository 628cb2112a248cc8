//! The FGM1 dense matrix format.
//!
//! Layout (little-endian): the four bytes `FGM1`, a `u64` row count, a `u64` column
//! count, then `rows * cols` `f32` values in row-major order. Values are held as `f64`
//! in memory and narrowed to `f32` on write.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"FGM1";

/// Byte length of an encoded `rows x cols` matrix record.
pub fn encoded_len(rows: usize, cols: usize) -> usize {
    4 + 8 + 8 + 4 * rows * cols
}

pub fn write_matrix<W: Write>(mut w: W, m: &ArrayView2<'_, f64>) -> std::io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&(m.nrows() as u64).to_le_bytes())?;
    w.write_all(&(m.ncols() as u64).to_le_bytes())?;
    for &v in m.iter() {
        w.write_all(&(v as f32).to_le_bytes())?;
    }
    Ok(())
}

/// Reads one matrix record. `what` names the source in error messages.
pub fn read_matrix<R: Read>(mut r: R, what: &Path) -> Result<Array2<f64>> {
    let fmt_err = |msg: String| Error::Format {
        path: what.to_path_buf(),
        msg,
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)
        .map_err(|e| fmt_err(format!("reading magic: {e}")))?;
    if &magic != MAGIC {
        return Err(fmt_err(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 8];
    r.read_exact(&mut word)
        .map_err(|e| fmt_err(format!("reading row count: {e}")))?;
    let rows = u64::from_le_bytes(word) as usize;
    r.read_exact(&mut word)
        .map_err(|e| fmt_err(format!("reading column count: {e}")))?;
    let cols = u64::from_le_bytes(word) as usize;
    let n = rows
        .checked_mul(cols)
        .ok_or_else(|| fmt_err(format!("dimensions {rows}x{cols} overflow")))?;
    let mut raw = vec![0u8; n * 4];
    r.read_exact(&mut raw)
        .map_err(|e| fmt_err(format!("expected {n} f32 values: {e}")))?;
    let data = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Array2::from_shape_vec((rows, cols), data).map_err(|e| fmt_err(e.to_string()))
}

pub fn save(path: impl AsRef<Path>, m: &ArrayView2<'_, f64>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(f);
    write_matrix(&mut w, m).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_matrix(BufReader::new(f), path)
}

/// True when the file starts with the FGM1 magic.
pub fn sniff(path: impl AsRef<Path>) -> Result<bool> {
    let path = path.as_ref();
    let mut f = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut magic = [0u8; 4];
    match f.read_exact(&mut magic) {
        Ok(()) => Ok(&magic == MAGIC),
        Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => Ok(false),
        Err(e) => Err(Error::io(path, e)),
    }
}
