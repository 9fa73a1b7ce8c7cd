//! Scalar voxel volumes, NIfTI-1 I/O and resampling onto reference grids.

mod nifti;

use std::str::FromStr;

use nalgebra::Vector4;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use nifti::{parse_nifti, read_nifti, write_nifti, NiftiDatatype, NIFTI1_HEADER_SIZE};

use crate::grid::Grid;
use crate::transform::RigidTransform;

#[derive(Debug, Error)]
pub enum VolumeError {
    #[error("not a NIfTI-1 single-file volume: {0}")]
    Format(String),
    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),
    #[error("truncated file: expected at least {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("invalid grid geometry: {0}")]
    InvalidGeometry(String),
    #[error("data length {found} does not match grid size {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Sampling kernel used when reslicing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Nearest,
    #[default]
    Trilinear,
}

impl FromStr for Interpolation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "nearest" => Ok(Self::Nearest),
            "trilinear" | "linear" => Ok(Self::Trilinear),
            other => Err(format!("unknown interpolation {other:?} (expected nearest|trilinear)")),
        }
    }
}

/// A 3D scalar grid in x-fastest order with its voxel-to-world affine.
///
/// Intensities are canonicalised to `f32` whatever the on-disk datatype was.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelVolume {
    grid: Grid,
    data: Vec<f32>,
    range: (f32, f32),
}

fn finite_range(data: &[f32]) -> (f32, f32) {
    let mut lo = f32::INFINITY;
    let mut hi = f32::NEG_INFINITY;
    for &v in data {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if lo > hi {
        (0.0, 0.0)
    } else {
        (lo, hi)
    }
}

impl VoxelVolume {
    pub fn new(grid: Grid, data: Vec<f32>) -> Result<Self, VolumeError> {
        if data.len() != grid.len() {
            return Err(VolumeError::LengthMismatch {
                expected: grid.len(),
                found: data.len(),
            });
        }
        let range = finite_range(&data);
        Ok(Self { grid, data, range })
    }

    pub fn from_fn(grid: Grid, f: impl Fn([usize; 3]) -> f32 + Sync) -> Self {
        let data: Vec<f32> = (0..grid.len()).into_par_iter().map(|i| f(grid.coords(i))).collect();
        let range = finite_range(&data);
        Self { grid, data, range }
    }

    /// Same grid, new intensities.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self, VolumeError> {
        Self::new(self.grid.clone(), data)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims()
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.grid.spacing()
    }

    pub fn affine(&self) -> &nalgebra::Matrix4<f64> {
        self.grid.affine()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn intensity_range(&self) -> (f32, f32) {
        self.range
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.grid.index(x, y, z)]
    }

    pub fn voxel_to_world(&self, index: [f64; 3]) -> [f64; 3] {
        self.grid.voxel_to_world(index)
    }

    /// Samples at fractional voxel coordinates; `None` outside the grid.
    #[inline]
    pub fn sample(&self, p: [f64; 3], interp: Interpolation) -> Option<f64> {
        match interp {
            Interpolation::Nearest => self.sample_nearest(p),
            Interpolation::Trilinear => self.sample_trilinear(p),
        }
    }

    #[inline]
    fn sample_nearest(&self, p: [f64; 3]) -> Option<f64> {
        let dims = self.grid.dims();
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let r = (p[a] + 0.5).floor();
            if r < 0.0 || r >= dims[a] as f64 || r.is_nan() {
                return None;
            }
            idx[a] = r as usize;
        }
        Some(self.get(idx[0], idx[1], idx[2]) as f64)
    }

    #[inline]
    fn sample_trilinear(&self, p: [f64; 3]) -> Option<f64> {
        let dims = self.grid.dims();
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        let mut frac = [0f64; 3];
        for a in 0..3 {
            let mut x = p[a];
            let nearest = x.round();
            if (x - nearest).abs() < 1e-9 {
                x = nearest;
            }
            let max = (dims[a] - 1) as f64;
            if !(0.0..=max).contains(&x) {
                return None;
            }
            let f = x.floor();
            let i = f as usize;
            if i + 1 >= dims[a] {
                lo[a] = i;
                hi[a] = i;
                frac[a] = 0.0;
            } else {
                lo[a] = i;
                hi[a] = i + 1;
                frac[a] = x - f;
            }
        }
        let v = |x: usize, y: usize, z: usize| self.get(x, y, z) as f64;
        let [fx, fy, fz] = frac;
        if fx == 0.0 && fy == 0.0 && fz == 0.0 {
            return Some(v(lo[0], lo[1], lo[2]));
        }
        let c00 = v(lo[0], lo[1], lo[2]) * (1.0 - fx) + v(hi[0], lo[1], lo[2]) * fx;
        let c10 = v(lo[0], hi[1], lo[2]) * (1.0 - fx) + v(hi[0], hi[1], lo[2]) * fx;
        let c01 = v(lo[0], lo[1], hi[2]) * (1.0 - fx) + v(hi[0], lo[1], hi[2]) * fx;
        let c11 = v(lo[0], hi[1], hi[2]) * (1.0 - fx) + v(hi[0], hi[1], hi[2]) * fx;
        let c0 = c00 * (1.0 - fy) + c10 * fy;
        let c1 = c01 * (1.0 - fy) + c11 * fy;
        Some(c0 * (1.0 - fz) + c1 * fz)
    }
}

/// Maps a (possibly fractional or out-of-range) voxel index to world millimetres.
pub fn voxel_to_world(volume: &VoxelVolume, index: [f64; 3]) -> [f64; 3] {
    volume.voxel_to_world(index)
}

/// Reslices `moving` onto `reference`'s grid.
///
/// `transform` maps moving world coordinates to reference world coordinates, so
/// each output voxel samples `moving` at `transform⁻¹(reference_world)`.
/// Samples falling outside the moving grid are 0.
pub fn resample(
    moving: &VoxelVolume,
    reference: &VoxelVolume,
    transform: &RigidTransform,
    interp: Interpolation,
) -> VoxelVolume {
    resample_onto(moving, reference.grid(), transform, interp)
}

pub(crate) fn resample_onto(
    moving: &VoxelVolume,
    grid: &Grid,
    transform: &RigidTransform,
    interp: Interpolation,
) -> VoxelVolume {
    let to_moving_voxel =
        moving.grid().inverse_affine() * transform.inverse().matrix() * grid.affine();
    let [nx, ny, _] = grid.dims();
    let mut data = vec![0f32; grid.len()];
    data.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            for x in 0..nx {
                let p = to_moving_voxel * Vector4::new(x as f64, y as f64, z as f64, 1.0);
                slab[x + nx * y] = moving.sample([p.x, p.y, p.z], interp).unwrap_or(0.0) as f32;
            }
        }
    });
    VoxelVolume::new(grid.clone(), data).expect("length matches grid")
}
