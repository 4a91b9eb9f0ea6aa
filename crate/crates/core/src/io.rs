//! Binary signal serialization.
//!
//! Layout (little-endian): magic `CZSG`, format version u8, `d` u8, `n` u8,
//! reserved u8, resolution u32, domain center (2 x f64), domain side f64,
//! then `res^d * n` cell values in row-major cell order, components
//! interleaved per cell. Values round-trip bit-exactly.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{Cube, Grid, ScalarSignal, VectorSignal};

const MAGIC: &[u8; 4] = b"CZSG";
const VERSION: u8 = 1;

pub fn write_signal(w: &mut impl Write, sig: &VectorSignal) -> Result<()> {
    let g = &sig.grid;
    w.write_all(MAGIC)?;
    w.write_all(&[VERSION, g.dim() as u8, sig.n, 0])?;
    w.write_all(&(g.res as u32).to_le_bytes())?;
    w.write_all(&g.domain.center[0].to_le_bytes())?;
    w.write_all(&g.domain.center[1].to_le_bytes())?;
    w.write_all(&g.domain.side.to_le_bytes())?;
    for v in &sig.values {
        for k in 0..sig.n as usize {
            w.write_all(&v[k].to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_signal(r: &mut impl Read) -> Result<VectorSignal> {
    let mut head = [0u8; 8];
    r.read_exact(&mut head)?;
    if &head[0..4] != MAGIC {
        return Err(Error::Parse("bad signal magic".into()));
    }
    if head[4] != VERSION {
        return Err(Error::Parse(format!("unsupported signal version {}", head[4])));
    }
    let (d, n) = (head[5], head[6]);
    if !(d == 1 || d == 2) || !(1..=3).contains(&n) {
        return Err(Error::Parse(format!("bad dimensions d={d} n={n}")));
    }
    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)?;
    let res = u32::from_le_bytes(buf4) as usize;
    let mut f = [0u8; 8];
    let mut next = |r: &mut dyn Read| -> Result<f64> {
        r.read_exact(&mut f)?;
        Ok(f64::from_le_bytes(f))
    };
    let cx = next(r)?;
    let cy = next(r)?;
    let side = next(r)?;
    let grid = Grid::new(Cube::new([cx, cy], side, 0, d)?, res)?;
    let mut values = vec![[0.0f64; 3]; grid.num_cells()];
    for v in values.iter_mut() {
        for k in 0..n as usize {
            v[k] = next(r)?;
        }
    }
    VectorSignal::new(grid, n, values)
}

pub fn write_scalar(w: &mut impl Write, sig: &ScalarSignal) -> Result<()> {
    let vec = VectorSignal::from_components(std::slice::from_ref(sig))?;
    write_signal(w, &vec)
}

pub fn read_scalar(r: &mut impl Read) -> Result<ScalarSignal> {
    let sig = read_signal(r)?;
    if sig.n != 1 {
        return Err(Error::Parse(format!("expected scalar signal, found n={}", sig.n)));
    }
    Ok(sig.component(0))
}
