//! Sampling grid shared by scalar volumes and label masks.

use std::fmt;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use sha2::{Digest, Sha256};

use crate::volume::VolumeError;

/// Voxel lattice geometry: dimensions plus the voxel-index to world (mm) affine.
///
/// Spacing is always derived from the affine's column norms so the two can
/// never disagree.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    spacing: [f64; 3],
    affine: Matrix4<f64>,
}

impl Grid {
    pub fn new(dims: [usize; 3], affine: Matrix4<f64>) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::InvalidGeometry(format!(
                "dimensions must be positive, got {dims:?}"
            )));
        }
        let linear: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into_owned();
        let det = linear.determinant();
        if !det.is_finite() || det == 0.0 {
            return Err(VolumeError::InvalidGeometry(
                "affine rotation/scale block is singular".into(),
            ));
        }
        if affine.iter().any(|v| !v.is_finite()) {
            return Err(VolumeError::InvalidGeometry("affine has non-finite entries".into()));
        }
        let spacing = [
            linear.column(0).norm(),
            linear.column(1).norm(),
            linear.column(2).norm(),
        ];
        Ok(Self { dims, spacing, affine })
    }

    /// Axis-aligned grid with the given spacing and the world origin at voxel 0.
    pub fn with_spacing(dims: [usize; 3], spacing: [f64; 3]) -> Result<Self, VolumeError> {
        if spacing.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
            return Err(VolumeError::InvalidGeometry(format!(
                "spacing must be positive, got {spacing:?}"
            )));
        }
        let affine = Matrix4::new(
            spacing[0], 0.0, 0.0, 0.0, //
            0.0, spacing[1], 0.0, 0.0, //
            0.0, 0.0, spacing[2], 0.0, //
            0.0, 0.0, 0.0, 1.0,
        );
        Self::new(dims, affine)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn affine(&self) -> &Matrix4<f64> {
        &self.affine
    }

    pub fn len(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Linear offset of voxel `(x, y, z)` in x-fastest order.
    #[inline]
    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.dims[0];
        let rest = index / self.dims[0];
        [x, rest % self.dims[1], rest / self.dims[1]]
    }

    #[inline]
    pub fn contains(&self, voxel: [i64; 3]) -> bool {
        (0..3).all(|a| voxel[a] >= 0 && (voxel[a] as usize) < self.dims[a])
    }

    pub fn voxel_to_world(&self, index: [f64; 3]) -> [f64; 3] {
        let p = self.affine * Vector4::new(index[0], index[1], index[2], 1.0);
        [p.x, p.y, p.z]
    }

    pub fn world_to_voxel(&self, point: [f64; 3]) -> [f64; 3] {
        let inv = self.inverse_affine();
        let p = inv * Vector4::new(point[0], point[1], point[2], 1.0);
        [p.x, p.y, p.z]
    }

    pub fn inverse_affine(&self) -> Matrix4<f64> {
        // Checked non-singular at construction.
        self.affine.try_inverse().expect("grid affine is invertible")
    }

    /// World-space centre of the voxel-centre bounding box.
    pub fn center(&self) -> Vector3<f64> {
        let c = self.voxel_to_world([
            (self.dims[0] - 1) as f64 / 2.0,
            (self.dims[1] - 1) as f64 / 2.0,
            (self.dims[2] - 1) as f64 / 2.0,
        ]);
        Vector3::new(c[0], c[1], c[2])
    }

    /// True when both grids have the same dimensions and affines agree to 1e-6 mm.
    pub fn is_aligned_with(&self, other: &Grid) -> bool {
        self.dims == other.dims
            && self
                .affine
                .iter()
                .zip(other.affine.iter())
                .all(|(a, b)| (a - b).abs() <= 1e-6 * (1.0 + a.abs().max(b.abs())))
    }

    /// Stable identifier of this grid, insensitive to sub-float32 noise in the affine.
    pub fn id(&self) -> GridId {
        let mut hasher = Sha256::new();
        for d in self.dims {
            hasher.update((d as u64).to_le_bytes());
        }
        for v in self.affine.iter() {
            hasher.update((*v as f32).to_le_bytes());
        }
        let digest = hasher.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        GridId(u64::from_le_bytes(bytes))
    }
}

/// Identifier of the grid a mask was produced on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridId(pub u64);

impl fmt::Display for GridId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}
