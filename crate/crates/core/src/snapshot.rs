//! Snapshot persistence: a flat binary file plus a JSON manifest.
//!
//! Binary layout, all little-endian:
//!
//! ```text
//! b"LMSNAP01"  nx:u64 ny:u64 nz:u64 ncomp:u64  ncomp blocks of nx*ny*nz f64
//! ```
//!
//! Each block is stored row-major with `x3` fastest, matching the in-memory
//! cell order. 2D fields use `nz = 1`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::compressible3d::{FluidState3D, FluxKind, SCHEME_VERSION};
use crate::domain::{Grid2D, Grid3D, ScalarField2D, ScalarField3D, VectorField3D};
use crate::error::{Error, Result};
use crate::incompressible2d::IncompressibleState2D;
use crate::pressure::{LawConfig, PressureLaw};

const MAGIC: &[u8; 8] = b"LMSNAP01";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SnapshotKind {
    Compressible3d,
    Incompressible2d,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotManifest {
    pub kind: SnapshotKind,
    pub time: f64,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub law: Option<LawConfig>,
    pub scheme: String,
    pub flux: Option<FluxKind>,
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub length: f64,
    pub components: Vec<String>,
}

fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

fn encode(dims: [usize; 3], blocks: &[&[f64]]) -> Vec<u8> {
    let n: usize = dims.iter().product();
    let mut out = Vec::with_capacity(40 + 8 * n * blocks.len());
    out.extend_from_slice(MAGIC);
    for d in dims.into_iter().chain([blocks.len()]) {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for b in blocks {
        debug_assert_eq!(b.len(), n);
        for v in *b {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn decode(bytes: &[u8]) -> Result<([usize; 3], Vec<Vec<f64>>)> {
    let bad = |msg: &str| Error::InvalidArgument(format!("snapshot file: {msg}"));
    if bytes.len() < 40 || &bytes[..8] != MAGIC {
        return Err(bad("missing header"));
    }
    let word = |k: usize| u64::from_le_bytes(bytes[8 + 8 * k..16 + 8 * k].try_into().expect("8 bytes")) as usize;
    let dims = [word(0), word(1), word(2)];
    let ncomp = word(3);
    let n = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| bad("dimension overflow"))?;
    if bytes.len() != 40 + 8 * n * ncomp {
        return Err(bad("length does not match header"));
    }
    let blocks = (0..ncomp)
        .map(|c| {
            bytes[40 + 8 * n * c..40 + 8 * n * (c + 1)]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect()
        })
        .collect();
    Ok((dims, blocks))
}

fn write_pair(stem: &Path, bytes: &[u8], manifest: &SnapshotManifest) -> Result<()> {
    let (bin, json) = paths(stem);
    if let Some(dir) = bin.parent() {
        fs::create_dir_all(dir)?;
    }
    fs::write(bin, bytes)?;
    fs::write(json, serde_json::to_vec_pretty(manifest)?)?;
    Ok(())
}

fn read_pair(stem: &Path, kind: SnapshotKind) -> Result<(SnapshotManifest, [usize; 3], Vec<Vec<f64>>)> {
    let (bin, json) = paths(stem);
    let manifest: SnapshotManifest = serde_json::from_slice(&fs::read(json)?)?;
    if manifest.kind != kind {
        return Err(Error::InvalidArgument(format!("expected a {kind:?} snapshot, found {:?}", manifest.kind)));
    }
    let (dims, blocks) = decode(&fs::read(bin)?)?;
    if dims != [manifest.nx, manifest.ny, manifest.nz] || blocks.len() != manifest.components.len() {
        return Err(Error::InvalidArgument("snapshot binary disagrees with its manifest".into()));
    }
    Ok((manifest, dims, blocks))
}

/// Writes `<stem>.bin` and `<stem>.json`.
pub fn write_compressible(
    stem: &Path,
    state: &FluidState3D,
    law: &PressureLaw,
    epsilon: f64,
    flux: FluxKind,
) -> Result<()> {
    let g = *state.grid();
    let m = state.mom.components();
    let bytes = encode([g.nx, g.ny, g.nz], &[state.rho.values(), &m[0], &m[1], &m[2]]);
    let manifest = SnapshotManifest {
        kind: SnapshotKind::Compressible3d,
        time: state.time,
        epsilon: Some(epsilon),
        delta: Some(g.delta),
        law: law.to_config(),
        scheme: SCHEME_VERSION.to_string(),
        flux: Some(flux),
        nx: g.nx,
        ny: g.ny,
        nz: g.nz,
        length: g.length,
        components: ["rho", "m1", "m2", "m3"].map(String::from).to_vec(),
    };
    write_pair(stem, &bytes, &manifest)
}

pub fn read_compressible(stem: &Path) -> Result<(FluidState3D, SnapshotManifest)> {
    let (mf, [nx, ny, nz], blocks) = read_pair(stem, SnapshotKind::Compressible3d)?;
    let delta = mf.delta.ok_or_else(|| Error::InvalidArgument("manifest lacks delta".into()))?;
    let g = Grid3D::new(nx, ny, nz, mf.length, delta)?;
    let [rho, m1, m2, m3]: [Vec<f64>; 4] =
        blocks.try_into().map_err(|_| Error::InvalidArgument("expected four components".into()))?;
    let state = FluidState3D::new(ScalarField3D::new(g, rho)?, VectorField3D::new(g, [m1, m2, m3])?, mf.time)?;
    Ok((state, mf))
}

/// Stores the vorticity; velocity and streamfunction follow from it.
pub fn write_incompressible(stem: &Path, state: &IncompressibleState2D) -> Result<()> {
    let g = *state.grid();
    let w = state.omega();
    let bytes = encode([g.nx, g.ny, 1], &[w.values()]);
    let manifest = SnapshotManifest {
        kind: SnapshotKind::Incompressible2d,
        time: state.time,
        epsilon: None,
        delta: None,
        law: None,
        scheme: "spectral-rk4/1".to_string(),
        flux: None,
        nx: g.nx,
        ny: g.ny,
        nz: 1,
        length: g.length,
        components: vec!["omega".to_string()],
    };
    write_pair(stem, &bytes, &manifest)
}

pub fn read_incompressible(stem: &Path) -> Result<(IncompressibleState2D, SnapshotManifest)> {
    let (mf, [nx, ny, _], mut blocks) = read_pair(stem, SnapshotKind::Incompressible2d)?;
    let g = Grid2D::new(nx, ny, mf.length)?;
    let w = ScalarField2D::new(g, blocks.remove(0))?;
    Ok((IncompressibleState2D::new(&w, mf.time)?, mf))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn law() -> PressureLaw {
        PressureLaw::power(2.0, 1.0, 1.0).unwrap()
    }

    #[test]
    fn compressible_round_trip_is_bitwise() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid3D::new(5, 3, 2, 2.0, 0.25).unwrap();
        let rho = ScalarField3D::from_fn(g, |x| 1.0 + 0.1 * x[0].sin() + x[2]).unwrap();
        let m =
            VectorField3D::new(g, [0, 1, 2].map(|c| (0..30).map(|n| (n * (c + 1)) as f64 / 7.0).collect())).unwrap();
        let s = FluidState3D::new(rho, m, 0.375).unwrap();
        let stem = dir.path().join("snap/t0");
        write_compressible(&stem, &s, &law(), 0.125, FluxKind::LowMachRusanov).unwrap();
        let (back, mf) = read_compressible(&stem).unwrap();
        assert_eq!(back.rho, s.rho);
        assert_eq!(back.mom, s.mom);
        assert_eq!(back.time, s.time);
        assert_eq!(mf.epsilon, Some(0.125));
        assert_eq!(mf.law, law().to_config());
        assert_eq!(mf.flux, Some(FluxKind::LowMachRusanov));
    }

    #[test]
    fn layout_is_x3_fastest_little_endian() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid3D::new(2, 1, 3, 1.0, 1.0).unwrap();
        let rho = ScalarField3D::new(g, (1..=6).map(f64::from).collect()).unwrap();
        let s = FluidState3D::new(rho, VectorField3D::zeros(g), 0.0).unwrap();
        let stem = dir.path().join("s");
        write_compressible(&stem, &s, &law(), 1.0, FluxKind::Rusanov).unwrap();
        let bytes = fs::read(stem.with_extension("bin")).unwrap();
        assert_eq!(&bytes[..8], b"LMSNAP01");
        assert_eq!(u64::from_le_bytes(bytes[8..16].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 3);
        assert_eq!(u64::from_le_bytes(bytes[32..40].try_into().unwrap()), 4);
        // cell (i=0, k=1) is the second value
        assert_eq!(f64::from_le_bytes(bytes[48..56].try_into().unwrap()), 2.0);
        assert_eq!(g.index(0, 0, 1), 1);
        assert_eq!(bytes.len(), 40 + 4 * 6 * 8);
    }

    #[test]
    fn incompressible_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid2D::new(8, 8, std::f64::consts::TAU).unwrap();
        let w = ScalarField2D::from_fn(g, |x| x[0].sin() * x[1].cos()).unwrap();
        let s = IncompressibleState2D::new(&w, 1.5).unwrap();
        let stem = dir.path().join("w");
        write_incompressible(&stem, &s).unwrap();
        let (back, mf) = read_incompressible(&stem).unwrap();
        assert_eq!(mf.kind, SnapshotKind::Incompressible2d);
        assert_eq!(back.time, 1.5);
        for (a, b) in back.omega().values().iter().zip(s.omega().values()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn corrupted_files_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let g = Grid3D::new(2, 2, 1, 1.0, 1.0).unwrap();
        let s = FluidState3D::uniform(g, 1.0, [0.0; 3]).unwrap();
        let stem = dir.path().join("s");
        write_compressible(&stem, &s, &law(), 1.0, FluxKind::Rusanov).unwrap();
        let bin = stem.with_extension("bin");
        let mut bytes = fs::read(&bin).unwrap();
        bytes.pop();
        fs::write(&bin, &bytes).unwrap();
        assert!(read_compressible(&stem).is_err());
        assert!(read_incompressible(&stem).is_err());
    }
}
