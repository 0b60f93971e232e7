//! Binary field format and its JSON sidecar.
//!
//! Layout: magic "BRKORB1\0", u32 version = 1, u32 m, u64 nx, u64 ny
//! (ny = 0 for 1D paths), f64 x_lo, x_hi, y_lo, y_hi, then row-major
//! little-endian f64 values (x-major rows; nx * max(ny,1) * m entries).

use brakeorb_core::{Field2D, Grid1D, Grid2D, Path1D, PotentialSpec};
use serde::{Deserialize, Serialize};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

pub const MAGIC: &[u8; 8] = b"BRKORB1\0";
pub const VERSION: u32 = 1;

#[derive(Debug)]
pub enum IoError {
    Io(std::io::Error),
    Magic,
    Version(u32),
    Dimension(String),
    Sidecar(String),
}

impl std::fmt::Display for IoError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IoError::Io(e) => write!(f, "io error: {e}"),
            IoError::Magic => write!(f, "bad magic: not a field file"),
            IoError::Version(v) => write!(f, "unsupported field version {v}"),
            IoError::Dimension(s) => write!(f, "dimension mismatch: {s}"),
            IoError::Sidecar(s) => write!(f, "sidecar mismatch: {s}"),
        }
    }
}

impl std::error::Error for IoError {}

impl From<std::io::Error> for IoError {
    fn from(e: std::io::Error) -> Self {
        IoError::Io(e)
    }
}

/// Provenance and grid metadata stored next to the binary values.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub object: String,
    pub role: String,
    pub potential: PotentialSpec,
    pub m: usize,
    pub nx: usize,
    pub ny: usize,
    #[serde(default)]
    pub sign: Option<String>,
    #[serde(default)]
    pub action: Option<f64>,
    #[serde(default)]
    pub tail_k: Option<f64>,
    #[serde(default)]
    pub tail_big_k: Option<f64>,
    #[serde(default)]
    pub t_period: Option<f64>,
    #[serde(default)]
    pub period_l: Option<f64>,
    #[serde(default)]
    pub grid_1d: Option<Grid1D>,
    #[serde(default)]
    pub grid_2d: Option<Grid2D>,
}

pub enum Stored {
    Path(Path1D, Sidecar),
    Field(Field2D, Sidecar),
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    path.with_extension("json")
}

fn write_header(
    out: &mut impl Write,
    m: u32,
    nx: u64,
    ny: u64,
    extents: [f64; 4],
) -> Result<(), IoError> {
    out.write_all(MAGIC)?;
    out.write_all(&VERSION.to_le_bytes())?;
    out.write_all(&m.to_le_bytes())?;
    out.write_all(&nx.to_le_bytes())?;
    out.write_all(&ny.to_le_bytes())?;
    for e in extents {
        out.write_all(&e.to_le_bytes())?;
    }
    Ok(())
}

pub fn save_path(path_obj: &Path1D, file: &Path, sidecar: &Sidecar) -> Result<(), IoError> {
    let mut buf = Vec::with_capacity(64 + 8 * path_obj.values.len());
    write_header(
        &mut buf,
        path_obj.m as u32,
        path_obj.grid.n as u64,
        0,
        [path_obj.grid.lo, path_obj.grid.hi(), 0.0, 0.0],
    )?;
    for v in &path_obj.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(file, &buf)?;
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| IoError::Sidecar(e.to_string()))?;
    fs::write(sidecar_path(file), json)?;
    Ok(())
}

pub fn save_field(field: &Field2D, file: &Path, sidecar: &Sidecar) -> Result<(), IoError> {
    let mut buf = Vec::with_capacity(64 + 8 * field.values.len());
    write_header(
        &mut buf,
        field.m as u32,
        field.grid.x.n as u64,
        field.grid.y.n as u64,
        [
            field.grid.x.lo,
            field.grid.x.hi(),
            field.grid.y.lo,
            field.grid.y.hi(),
        ],
    )?;
    for v in &field.values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(file, &buf)?;
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| IoError::Sidecar(e.to_string()))?;
    fs::write(sidecar_path(file), json)?;
    Ok(())
}

pub fn load(file: &Path) -> Result<Stored, IoError> {
    let mut f = fs::File::open(file)?;
    let mut data = Vec::new();
    f.read_to_end(&mut data)?;
    if data.len() < 64 {
        return Err(IoError::Magic);
    }
    if &data[0..8] != MAGIC {
        return Err(IoError::Magic);
    }
    let rd_u32 = |o: usize| u32::from_le_bytes(data[o..o + 4].try_into().unwrap());
    let rd_u64 = |o: usize| u64::from_le_bytes(data[o..o + 8].try_into().unwrap());
    let rd_f64 = |o: usize| f64::from_le_bytes(data[o..o + 8].try_into().unwrap());
    let version = rd_u32(8);
    if version != VERSION {
        return Err(IoError::Version(version));
    }
    let m = rd_u32(12) as usize;
    let nx = rd_u64(16) as usize;
    let ny = rd_u64(24) as usize;
    let x_lo = rd_f64(32);
    let x_hi = rd_f64(40);
    let y_lo = rd_f64(48);
    let y_hi = rd_f64(56);
    let count = nx * ny.max(1) * m;
    if data.len() != 64 + 8 * count {
        return Err(IoError::Dimension(format!(
            "expected {} values, file holds {} bytes past the header",
            count,
            data.len() - 64
        )));
    }
    let mut values = Vec::with_capacity(count);
    for k in 0..count {
        values.push(rd_f64(64 + 8 * k));
    }
    let sc_text = fs::read_to_string(sidecar_path(file))
        .map_err(|e| IoError::Sidecar(format!("cannot read sidecar: {e}")))?;
    let sidecar: Sidecar =
        serde_json::from_str(&sc_text).map_err(|e| IoError::Sidecar(e.to_string()))?;
    if sidecar.m != m || sidecar.nx != nx || sidecar.ny != ny {
        return Err(IoError::Dimension(format!(
            "sidecar grid ({}, {}, m={}) disagrees with header ({}, {}, m={})",
            sidecar.nx, sidecar.ny, sidecar.m, nx, ny, m
        )));
    }
    if ny == 0 {
        let grid = Grid1D::with_min_nodes(x_lo, x_hi, nx, 2).map_err(|e| {
            IoError::Dimension(format!("bad 1d grid: {e}"))
        })?;
        Ok(Stored::Path(Path1D { grid, m, values }, sidecar))
    } else {
        let period_l = sidecar.period_l.unwrap_or(4.0 * x_hi);
        let grid = Grid2D {
            x: Grid1D::with_min_nodes(x_lo, x_hi, nx, 2)
                .map_err(|e| IoError::Dimension(format!("bad x grid: {e}")))?,
            y: Grid1D::with_min_nodes(y_lo, y_hi, ny, 2)
                .map_err(|e| IoError::Dimension(format!("bad y grid: {e}")))?,
            period_l,
        };
        Ok(Stored::Field(Field2D { grid, m, values }, sidecar))
    }
}
