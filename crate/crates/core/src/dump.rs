//! Binary field dumps: a fixed header, the node radii, then one block of
//! samples per field, all little-endian.

use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::grid::{RadialGrid, Spacing};

pub const MAGIC: &[u8; 4] = b"NLSF";
pub const VERSION: u32 = 1;

pub fn write_fields<W: Write>(mut w: W, grid: &RadialGrid<f64>, fields: &[&[f64]]) -> Result<()> {
    let n = grid.len();
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(grid.dim() as u32).to_le_bytes())?;
    w.write_all(&(n as u64).to_le_bytes())?;
    w.write_all(&grid.r_max().to_le_bytes())?;
    for &r in grid.nodes() {
        w.write_all(&r.to_le_bytes())?;
    }
    for f in fields {
        if f.len() != n {
            return Err(Error::Format(format!(
                "field of length {} on a {n}-node grid",
                f.len()
            )));
        }
        for &x in f.iter() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_fields<R: Read>(mut r: R) -> Result<(RadialGrid<f64>, Vec<Vec<f64>>)> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() < 28 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing NLSF header".into()));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f64_at = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let version = u32_at(4);
    if version != VERSION {
        return Err(Error::Format(format!("unsupported dump version {version}")));
    }
    let dim = u32_at(8) as usize;
    let n = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let r_max = f64_at(20);
    let body = bytes.len() - 28;
    if n == 0 || body % (8 * n) != 0 || body < 8 * n {
        return Err(Error::Format(
            "payload size does not match node count".into(),
        ));
    }
    let nodes: Vec<f64> = (0..n).map(|j| f64_at(28 + 8 * j)).collect();
    let count = body / (8 * n) - 1;
    let fields = (0..count)
        .map(|k| {
            (0..n)
                .map(|j| f64_at(28 + 8 * n * (k + 1) + 8 * j))
                .collect()
        })
        .collect();
    let grid = recover_grid(dim, n, r_max, &nodes)?;
    Ok((grid, fields))
}

fn recover_grid(dim: usize, n: usize, r_max: f64, nodes: &[f64]) -> Result<RadialGrid<f64>> {
    let uniform = RadialGrid::uniform(dim, r_max, n)?;
    if matches_nodes(&uniform, nodes) {
        return Ok(uniform);
    }
    // Graded layout: r_0 / r_max = sinh(s / 2n) / sinh(s) decreases in s.
    let target = nodes[0] / r_max;
    let ratio = |s: f64| (s / (2.0 * n as f64)).sinh() / s.sinh();
    let (mut lo, mut hi) = (1e-9, 300.0);
    if !(target < ratio(lo) && target > ratio(hi)) {
        return Err(Error::Format(
            "node layout is neither uniform nor sinh-graded".into(),
        ));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if ratio(mid) > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let grid = RadialGrid::new(
        dim,
        r_max,
        n,
        Spacing::Graded {
            stretch: 0.5 * (lo + hi),
        },
    )?;
    if matches_nodes(&grid, nodes) {
        Ok(grid)
    } else {
        Err(Error::Format(
            "node layout is neither uniform nor sinh-graded".into(),
        ))
    }
}

fn matches_nodes(grid: &RadialGrid<f64>, nodes: &[f64]) -> bool {
    grid.nodes()
        .iter()
        .zip(nodes)
        .all(|(a, b)| (a - b).abs() <= 1e-10 * b.abs().max(1e-300))
}
