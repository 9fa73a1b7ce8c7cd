//! Binary dilation and erosion with millimetre radii on anisotropic grids.

use rayon::prelude::*;

use super::{LabelMask, SegmentationError};
use crate::grid::Grid;

fn semi_axes(spacing: [f64; 3], radius_mm: f64) -> [i64; 3] {
    spacing.map(|s| (((radius_mm / s) + 0.5 + 1e-9).floor() as i64).max(1))
}

/// Half-width along x of each `(dy, dz)` row of the ellipsoid, or `None` if the row is empty.
///
/// A voxel offset belongs to the element iff
/// `dx²·ry²·rz² + dy²·rx²·rz² + dz²·rx²·ry² ≤ rx²·ry²·rz²`, evaluated in integers.
fn row_spans(axes: [i64; 3]) -> Vec<(i64, i64, i64)> {
    let [rx, ry, rz] = axes;
    let (rx2, ry2, rz2) = (rx * rx, ry * ry, rz * rz);
    let bound = rx2 * ry2 * rz2;
    let mut spans = Vec::new();
    for dz in -rz..=rz {
        for dy in -ry..=ry {
            let used = dy * dy * rx2 * rz2 + dz * dz * rx2 * ry2;
            if used > bound {
                continue;
            }
            let mut w = 0;
            while (w + 1) * (w + 1) * ry2 * rz2 + used <= bound {
                w += 1;
            }
            spans.push((dy, dz, w));
        }
    }
    spans
}

/// Offsets of the discrete ellipsoid whose semi-axes are `radius_mm / spacing`
/// voxels (rounded half-up, at least 1). Empty when the radius is 0.
pub fn structuring_element(spacing: [f64; 3], radius_mm: f64) -> Vec<[i64; 3]> {
    if radius_mm <= 0.0 {
        return Vec::new();
    }
    row_spans(semi_axes(spacing, radius_mm))
        .into_iter()
        .flat_map(|(dy, dz, w)| (-w..=w).map(move |dx| [dx, dy, dz]))
        .collect()
}

fn check_radius(radius_mm: f64) -> Result<(), SegmentationError> {
    if radius_mm.is_finite() && radius_mm >= 0.0 {
        Ok(())
    } else {
        Err(SegmentationError::InvalidRadius(radius_mm))
    }
}

pub(crate) fn dilate_bits(grid: &Grid, bits: &[bool], radius_mm: f64) -> Vec<bool> {
    if radius_mm <= 0.0 {
        return bits.to_vec();
    }
    let [nx, ny, nz] = grid.dims();
    let spans = row_spans(semi_axes(grid.spacing(), radius_mm));

    // Per-row prefix counts: prefix[row * (nx + 1) + x] = set voxels in [0, x).
    let mut prefix = vec![0u32; (nx + 1) * ny * nz];
    for row in 0..ny * nz {
        let base = row * (nx + 1);
        for x in 0..nx {
            prefix[base + x + 1] = prefix[base + x] + bits[row * nx + x] as u32;
        }
    }
    let row_total = |row: usize| prefix[row * (nx + 1) + nx];

    let mut out = vec![false; bits.len()];
    out.par_chunks_mut(nx * ny).enumerate().for_each(|(z, slab)| {
        for y in 0..ny {
            let line = &mut slab[y * nx..(y + 1) * nx];
            for &(dy, dz, w) in &spans {
                let sy = y as i64 + dy;
                let sz = z as i64 + dz;
                if sy < 0 || sz < 0 || sy >= ny as i64 || sz >= nz as i64 {
                    continue;
                }
                let row = sy as usize + ny * sz as usize;
                if row_total(row) == 0 {
                    continue;
                }
                let base = row * (nx + 1);
                for (x, cell) in line.iter_mut().enumerate() {
                    if *cell {
                        continue;
                    }
                    let lo = (x as i64 - w).max(0) as usize;
                    let hi = ((x as i64 + w) as usize).min(nx - 1);
                    if prefix[base + hi + 1] > prefix[base + lo] {
                        *cell = true;
                    }
                }
            }
        }
    });
    out
}

/// Dilates the non-zero voxels of `mask` by an ellipsoid of `radius_mm`.
pub fn dilate(mask: &LabelMask, radius_mm: f64) -> Result<LabelMask, SegmentationError> {
    check_radius(radius_mm)?;
    if radius_mm == 0.0 {
        return Ok(mask.clone());
    }
    let bits = dilate_bits(mask.grid(), &mask.bits(), radius_mm);
    Ok(LabelMask::from_bits(mask.grid(), &bits))
}

/// Erosion as the dual of dilation: complement, dilate, complement. Voxels
/// beyond the grid therefore never erode the mask.
pub fn erode(mask: &LabelMask, radius_mm: f64) -> Result<LabelMask, SegmentationError> {
    check_radius(radius_mm)?;
    if radius_mm == 0.0 {
        return Ok(mask.clone());
    }
    let complement: Vec<bool> = mask.data().iter().map(|&v| v == 0).collect();
    let grown = dilate_bits(mask.grid(), &complement, radius_mm);
    let bits: Vec<bool> = grown.into_iter().map(|b| !b).collect();
    Ok(LabelMask::from_bits(mask.grid(), &bits))
}
