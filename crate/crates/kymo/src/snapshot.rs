//! Field snapshot files: a 32-byte header (magic "KSF1", dim, cells per
//! axis, time stamp) followed by the cell values as little-endian f64, plus
//! a plain CSV export with one row per cell.

use crate::error::{KymoError, Result};
use crate::grid::{Field, GridSpec};
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 4] = b"KSF1";
const HEADER_LEN: usize = 32;

pub fn write_snapshot(path: &Path, field: &Field, t: f64) -> Result<()> {
    let mut file = std::fs::File::create(path)?;
    let g = &field.grid;
    let mut header = [0u8; HEADER_LEN];
    header[0..4].copy_from_slice(MAGIC);
    header[4..8].copy_from_slice(&(g.dim as u32).to_le_bytes());
    header[8..12].copy_from_slice(&(g.cells[0] as u32).to_le_bytes());
    header[12..16].copy_from_slice(&(g.cells[1] as u32).to_le_bytes());
    // bytes 16..24 reserved
    header[24..32].copy_from_slice(&t.to_le_bytes());
    file.write_all(&header)?;
    let mut payload = Vec::with_capacity(field.values().len() * 8);
    for v in field.values() {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    file.write_all(&payload)?;
    Ok(())
}

/// Read a snapshot back. Domain lengths are not stored in the header, so the
/// caller supplies them (they live in the run manifest).
pub fn read_snapshot(path: &Path, lengths: [f64; 2]) -> Result<(Field, f64)> {
    let mut file = std::fs::File::open(path)?;
    let mut header = [0u8; HEADER_LEN];
    file.read_exact(&mut header)?;
    if &header[0..4] != MAGIC {
        return Err(KymoError::ParseError(format!(
            "{} is not a KSF1 snapshot",
            path.display()
        )));
    }
    let dim = u32::from_le_bytes(header[4..8].try_into().unwrap()) as usize;
    let nx = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
    let ny = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
    let t = f64::from_le_bytes(header[24..32].try_into().unwrap());
    let grid = if dim == 1 {
        GridSpec::new_1d(nx, lengths[0])?
    } else {
        GridSpec::new_2d(nx, ny, lengths[0], lengths[1])?
    };
    let mut payload = Vec::new();
    file.read_to_end(&mut payload)?;
    if payload.len() != grid.cell_count() * 8 {
        return Err(KymoError::ParseError(format!(
            "snapshot payload is {} bytes, expected {}",
            payload.len(),
            grid.cell_count() * 8
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((Field::from_values(grid, values)?, t))
}

/// CSV export: one row per cell with index coordinates and value.
pub fn write_field_csv(out: &mut impl Write, field: &Field) -> Result<()> {
    let g = &field.grid;
    if g.dim == 1 {
        writeln!(out, "i,value")?;
        for (i, v) in field.values().iter().enumerate() {
            writeln!(out, "{i},{v:.17e}")?;
        }
    } else {
        writeln!(out, "i,j,value")?;
        for j in 0..g.cells[1] {
            for i in 0..g.cells[0] {
                writeln!(out, "{i},{j},{:.17e}", field.values()[g.idx(i, j)])?;
            }
        }
    }
    Ok(())
}
