//! Field snapshots.
//!
//! Binary layout (little endian): a 32-byte header
//!
//! | offset | bytes | content            |
//! |--------|-------|--------------------|
//! | 0      | 4     | magic `LLF1`       |
//! | 4      | 4     | `N` (u32)          |
//! | 8      | 4     | `n_max` (u32)      |
//! | 12     | 4     | reserved, zero     |
//! | 16     | 8     | seed (u64)         |
//! | 24     | 8     | reserved, zero     |
//!
//! followed by `n_max` layers `Y_1..Y_n`, each `N*N` f64 values row-major.

use std::io::{Read, Write};

use super::{FieldSynthesizer, LayeredField, Resolution};
use crate::error::{Error, Result};
use crate::grid::GridSpec;

pub const MAGIC: &[u8; 4] = b"LLF1";
pub const HEADER_LEN: usize = 32;

pub fn write_snapshot<W: Write>(field: &LayeredField, mut out: W) -> Result<()> {
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&(field.grid().size() as u32).to_le_bytes());
    header[8..12].copy_from_slice(&(field.n_max() as u32).to_le_bytes());
    header[16..24].copy_from_slice(&field.seed().to_le_bytes());
    out.write_all(&header)?;
    for layer in &field.layers {
        let mut buf = Vec::with_capacity(layer.len() * 8);
        for v in layer {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        out.write_all(&buf)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_snapshot<R: Read>(mut input: R) -> Result<LayeredField> {
    let mut header = [0u8; HEADER_LEN];
    input.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(Error::Snapshot("bad magic".into()));
    }
    let size = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let n_max = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let seed = u64::from_le_bytes(header[16..24].try_into().unwrap());
    let grid = GridSpec::new(size).map_err(|e| Error::Snapshot(e.to_string()))?;
    let mut layers = Vec::with_capacity(n_max);
    let mut buf = vec![0u8; grid.cells() * 8];
    for k in 1..=n_max {
        input
            .read_exact(&mut buf)
            .map_err(|e| Error::Snapshot(format!("layer {k}: {e}")))?;
        layers.push(
            buf.chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect(),
        );
    }
    // lattice covariances come from the (deterministic) spectra
    let synth = FieldSynthesizer::with_resolution(grid, n_max, Resolution::Relaxed)?;
    let cov = synth.layers.iter().map(|s| s.implied).collect();
    Ok(LayeredField::from_layers(grid, seed, layers, cov))
}

/// One cumulative level as CSV with columns `i, j, x, y, value`.
pub fn write_level_csv<W: Write>(field: &LayeredField, n: usize, out: W) -> Result<()> {
    let values = field.values(n)?;
    let grid = field.grid();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["i", "j", "x", "y", "value"])?;
    for (k, v) in values.iter().enumerate() {
        let (i, j) = grid.coords(k);
        let c = grid.cell_center(i, j);
        w.write_record(&[
            i.to_string(),
            j.to_string(),
            c.x.to_string(),
            c.y.to_string(),
            v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
