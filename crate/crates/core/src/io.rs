//! Snapshot files.
//!
//! A field is stored as raw little-endian `f64` values, `x₁` fastest, then
//! `x₂`, then `z`, components one after another; a sidecar JSON header
//! `{nx, ny, nz, b, arity, time}` sits next to it. A state is a directory
//! holding one such pair per unknown plus `manifest.json`.

use crate::error::{Error, Result};
use crate::grid::{Field, Grid};
use crate::scalar::{lit, to_f64, Real};
use crate::state::{Model, State};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FieldHeader {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub b: f64,
    /// Number of scalar components stored back to back.
    pub arity: usize,
    pub time: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub t: f64,
    pub sigma: f64,
    pub kappa: f64,
    pub b: f64,
    pub delta0: f64,
    pub grid: GridShape,
}

fn sidecar(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes `components` (all of one shape) to `path` and its sidecar.
pub fn write_field<T: Real>(path: &Path, components: &[&Field<T>], b: T, time: T) -> Result<()> {
    let first = components.first().ok_or_else(|| Error::InvalidArgument("no components to write".into()))?;
    let mut bytes = Vec::with_capacity(components.len() * first.data.len() * 8);
    for c in components {
        if (c.nx, c.ny, c.nz) != (first.nx, first.ny, first.nz) {
            return Err(Error::ShapeMismatch("components of one snapshot differ in shape".into()));
        }
        for &x in &c.data {
            bytes.extend_from_slice(&to_f64(x).to_le_bytes());
        }
    }
    let header =
        FieldHeader { nx: first.nx, ny: first.ny, nz: first.nz, b: to_f64(b), arity: components.len(), time: to_f64(time) };
    fs::write(path, bytes)?;
    fs::write(sidecar(path), serde_json::to_string_pretty(&header)?)?;
    Ok(())
}

/// Reads a field file and its sidecar.
pub fn read_field<T: Real>(path: &Path) -> Result<(FieldHeader, Vec<Field<T>>)> {
    let header: FieldHeader = serde_json::from_str(&fs::read_to_string(sidecar(path))?)?;
    let bytes = fs::read(path)?;
    let n = header.nx * header.ny * header.nz;
    if bytes.len() != 8 * n * header.arity {
        return Err(Error::ShapeMismatch(format!(
            "{}: {} bytes, header promises {}",
            path.display(),
            bytes.len(),
            8 * n * header.arity
        )));
    }
    let values: Vec<T> =
        bytes.chunks_exact(8).map(|c| lit(f64::from_le_bytes(c.try_into().expect("chunk of 8")))).collect();
    let fields = values
        .chunks_exact(n)
        .map(|d| Field { nx: header.nx, ny: header.ny, nz: header.nz, data: d.to_vec() })
        .collect();
    Ok((header, fields))
}

/// Writes a state into `dir` (created if needed).
pub fn write_state<T: Real>(dir: &Path, model: &Model<T>, s: &State<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    let b = model.grid.b;
    write_field(&dir.join("v.bin"), &s.v.iter().collect::<Vec<_>>(), b, s.t)?;
    write_field(&dir.join("F.bin"), &s.f.iter().flatten().collect::<Vec<_>>(), b, s.t)?;
    write_field(&dir.join("q.bin"), &[&s.q], b, s.t)?;
    write_field(&dir.join("psi.bin"), &[&s.psi], b, s.t)?;
    write_field(&dir.join("psi_t.bin"), &[&s.psi_t], b, s.t)?;
    let p = &model.params;
    let g = &model.grid;
    let manifest = Manifest {
        t: to_f64(s.t),
        sigma: to_f64(p.sigma),
        kappa: to_f64(p.kappa),
        b: to_f64(p.b),
        delta0: to_f64(p.delta0),
        grid: GridShape { nx: g.nx, ny: g.ny, nz: g.nz },
    };
    fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(())
}

pub fn read_manifest(dir: &Path) -> Result<Manifest> {
    Ok(serde_json::from_str(&fs::read_to_string(dir.join("manifest.json"))?)?)
}

/// Reads a state written by [`write_state`], checking it against `grid`.
pub fn read_state<T: Real>(dir: &Path, grid: &Grid<T>) -> Result<State<T>> {
    let manifest = read_manifest(dir)?;
    if (manifest.grid.nx, manifest.grid.ny, manifest.grid.nz) != (grid.nx, grid.ny, grid.nz) {
        return Err(Error::ShapeMismatch(format!(
            "snapshot grid {}x{}x{} differs from {}x{}x{}",
            manifest.grid.nx, manifest.grid.ny, manifest.grid.nz, grid.nx, grid.ny, grid.nz
        )));
    }
    let load = |name: &str, arity: usize, nz: usize| -> Result<Vec<Field<T>>> {
        let (h, f) = read_field(&dir.join(name))?;
        if h.arity != arity || h.nz != nz {
            return Err(Error::ShapeMismatch(format!("{name}: arity {} nz {}", h.arity, h.nz)));
        }
        Ok(f)
    };
    let nz = grid.nz;
    let v = load("v.bin", 3, nz)?;
    let f = load("F.bin", 9, nz)?;
    let q = load("q.bin", 1, nz)?;
    let psi = load("psi.bin", 1, 1)?;
    let psi_t = load("psi_t.bin", 1, 1)?;
    let col = |k: usize| [f[3 * k].clone(), f[3 * k + 1].clone(), f[3 * k + 2].clone()];
    Ok(State {
        t: lit(manifest.t),
        v: [v[0].clone(), v[1].clone(), v[2].clone()],
        f: [col(0), col(1), col(2)],
        q: q[0].clone(),
        psi: psi[0].clone(),
        psi_t: psi_t[0].clone(),
    })
}
