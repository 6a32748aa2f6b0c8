//! Field dumps, CSV output, and atomic file writes.
//!
//! Dump layout, little endian: magic `BLF1`, `dim: u32`, `n_cells: u32`,
//! `extent: f64`, then the cell values as `f64` in row-major order (x
//! fastest).

use std::fs;
use std::io::{self, Write};
use std::path::Path;

use thiserror::Error;

use crate::grid::{Grid, GridError, ScalarField};

pub const MAGIC: &[u8; 4] = b"BLF1";
const HEADER_LEN: usize = 4 + 4 + 4 + 8;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a field dump (bad magic)")]
    BadMagic,
    #[error("dump truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// Writes `bytes` to `path` through a temporary sibling and a rename, so
/// readers never see a partial file.
pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> io::Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let name = path
        .file_name()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}

pub fn encode_field(f: &ScalarField) -> Vec<u8> {
    let grid = f.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * grid.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(grid.dim() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.n_cells() as u32).to_le_bytes());
    out.extend_from_slice(&grid.extent().to_le_bytes());
    for v in f.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_field(bytes: &[u8]) -> Result<ScalarField, DumpError> {
    if bytes.len() < HEADER_LEN {
        return Err(DumpError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    if &bytes[..4] != MAGIC {
        return Err(DumpError::BadMagic);
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let dim = u32_at(4) as usize;
    let n = u32_at(8) as usize;
    let extent = f64::from_le_bytes(bytes[12..20].try_into().unwrap());
    let grid = Grid::new(dim, extent, n)?;
    let expected = HEADER_LEN + 8 * grid.len();
    if bytes.len() != expected {
        return Err(DumpError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ScalarField::new(grid, values)?)
}

pub fn write_field(path: impl AsRef<Path>, f: &ScalarField) -> io::Result<()> {
    write_atomic(path, &encode_field(f))
}

pub fn read_field(path: impl AsRef<Path>) -> Result<ScalarField, DumpError> {
    decode_field(&fs::read(path)?)
}

/// One line per cell: coordinates then value.
pub fn field_csv(f: &ScalarField) -> String {
    let grid = f.grid();
    let mut out = String::from(if grid.dim() == 1 { "x,value\n" } else { "x,y,value\n" });
    for (i, v) in f.values().iter().enumerate() {
        let c = grid.center(i);
        if grid.dim() == 1 {
            out.push_str(&format!("{},{v:e}\n", c[0]));
        } else {
            out.push_str(&format!("{},{},{v:e}\n", c[0], c[1]));
        }
    }
    out
}

pub fn write_field_csv(path: impl AsRef<Path>, f: &ScalarField) -> io::Result<()> {
    write_atomic(path, field_csv(f).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dump_round_trip() {
        let g = Grid::new(2, 3.5, 8).unwrap();
        let f = ScalarField::from_fn(g, |p| p[0] * 10.0 + p[1]);
        let bytes = encode_field(&f);
        assert_eq!(&bytes[..4], b"BLF1");
        assert_eq!(bytes.len(), 20 + 8 * 64);
        // row-major: the second value is the next x cell
        let second = f64::from_le_bytes(bytes[28..36].try_into().unwrap());
        assert_eq!(second, f.get(1));
        assert_eq!(decode_field(&bytes).unwrap(), f);
    }

    #[test]
    fn corrupt_dumps_rejected() {
        let g = Grid::new(1, 1.0, 8).unwrap();
        let mut bytes = encode_field(&ScalarField::zeros(g));
        bytes.pop();
        assert!(matches!(decode_field(&bytes), Err(DumpError::Truncated { .. })));
        bytes[0] = b'X';
        assert!(matches!(decode_field(&bytes), Err(DumpError::BadMagic)));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sub").join("a.csv");
        write_atomic(&path, b"one").unwrap();
        write_atomic(&path, b"two").unwrap();
        assert_eq!(fs::read(&path).unwrap(), b"two");
        assert_eq!(fs::read_dir(path.parent().unwrap()).unwrap().count(), 1);
    }

    #[test]
    fn csv_lines() {
        let g = Grid::new(1, 8.0, 8).unwrap();
        let text = field_csv(&ScalarField::constant(g, 2.0));
        assert_eq!(text.lines().count(), 9);
        assert_eq!(text.lines().nth(1).unwrap(), "0.5,2e0");
    }
}
