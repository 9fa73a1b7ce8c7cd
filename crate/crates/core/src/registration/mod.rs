//! Rigid co-registration of a moving volume onto a fixed reference.
//!
//! The search runs Nelder–Mead over three Euler angles (degrees) and three
//! translations (mm), rotating about the fixed volume's centre, on a
//! coarse-to-fine pyramid. Each level starts from the previous optimum.

mod metric;
mod simplex;

use nalgebra::{Matrix4, Vector3, Vector4};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use metric::{similarity, Metric};

use crate::filter::{block_mean, gaussian_smooth};
use crate::grid::Grid;
use crate::transform::RigidTransform;
use crate::volume::VoxelVolume;

#[derive(Debug, Error, PartialEq)]
pub enum RegistrationError {
    #[error("volumes do not overlap at the identity transform")]
    NoOverlap,
    #[error("intensity variance is zero; correlation is undefined")]
    UndefinedVariance,
    #[error("volumes are not on the same grid")]
    GridMismatch,
    #[error("invalid registration config: {0}")]
    InvalidConfig(String),
}

/// Search settings. Level `l` of `pyramid_levels` downsamples by
/// `2^(pyramid_levels - 1 - l)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RegistrationConfig {
    pub metric: Metric,
    pub histogram_bins: usize,
    pub pyramid_levels: usize,
    /// Gaussian pre-smoothing per level, coarsest first.
    pub smoothing_sigma_voxels: Vec<f64>,
    pub max_iterations: usize,
    pub tolerance: f64,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self {
            metric: Metric::Nmi,
            histogram_bins: 32,
            pyramid_levels: 3,
            smoothing_sigma_voxels: vec![2.0, 1.0, 0.0],
            max_iterations: 400,
            tolerance: 1e-4,
        }
    }
}

impl RegistrationConfig {
    pub fn validate(&self) -> Result<(), RegistrationError> {
        let bad = |m: String| Err(RegistrationError::InvalidConfig(m));
        if self.histogram_bins < 8 {
            return bad(format!("histogram_bins must be >= 8, got {}", self.histogram_bins));
        }
        if self.pyramid_levels < 1 {
            return bad("pyramid_levels must be >= 1".into());
        }
        if self.smoothing_sigma_voxels.len() != self.pyramid_levels {
            return bad(format!(
                "{} smoothing sigmas for {} pyramid levels",
                self.smoothing_sigma_voxels.len(),
                self.pyramid_levels
            ));
        }
        if self.smoothing_sigma_voxels.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad("smoothing sigmas must be finite and non-negative".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be positive".into());
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return bad("tolerance must be positive".into());
        }
        Ok(())
    }

    /// Default schedule for `levels` levels: sigma halves per level, 0 at full resolution.
    pub fn with_levels(levels: usize) -> Self {
        let smoothing_sigma_voxels = (0..levels)
            .map(|l| {
                let factor = 1usize << (levels - 1 - l);
                if factor == 1 {
                    0.0
                } else {
                    factor as f64 / 2.0
                }
            })
            .collect();
        Self {
            pyramid_levels: levels,
            smoothing_sigma_voxels,
            ..Self::default()
        }
    }
}

/// Initial simplex step: 2° per angle, 2 mm per translation.
const SIMPLEX_STEPS: [f64; 6] = [2.0, 2.0, 2.0, 2.0, 2.0, 2.0];

/// Fewer overlapping samples than this fraction of the fixed grid scores as the worst value.
const MIN_OVERLAP_FRACTION: f64 = 0.05;

/// Per-level search statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelReport {
    pub downsample: usize,
    pub iterations: usize,
    pub score: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Registration {
    /// Maps moving world points onto fixed world points.
    pub transform: RigidTransform,
    /// `[α, β, γ]` degrees about `center`, then `[tx, ty, tz]` mm.
    pub parameters: [f64; 6],
    pub center: [f64; 3],
    pub score: f64,
    pub converged: bool,
    pub levels: Vec<LevelReport>,
}

impl Registration {
    pub fn angles_deg(&self) -> [f64; 3] {
        [self.parameters[0], self.parameters[1], self.parameters[2]]
    }

    pub fn shift_mm(&self) -> [f64; 3] {
        [self.parameters[3], self.parameters[4], self.parameters[5]]
    }
}

pub(crate) fn params_to_transform(p: &[f64; 6], center: Vector3<f64>) -> RigidTransform {
    RigidTransform::about_center([p[0], p[1], p[2]], [p[3], p[4], p[5]], center)
}

fn downsample(volume: &VoxelVolume, factor: usize, sigma: f64) -> VoxelVolume {
    let smoothed = gaussian_smooth(volume.data(), volume.dims(), sigma);
    if factor <= 1 {
        return volume.with_data(smoothed).expect("same grid");
    }
    let (data, dims) = block_mean(&smoothed, volume.dims(), factor);
    // Coarse voxel i covers fine voxels factor·i .. factor·i + factor - 1.
    let f = factor as f64;
    let offset = (f - 1.0) / 2.0;
    let to_fine = Matrix4::new(
        f, 0.0, 0.0, offset, //
        0.0, f, 0.0, offset, //
        0.0, 0.0, f, offset, //
        0.0, 0.0, 0.0, 1.0,
    );
    let grid = Grid::new(dims, volume.affine() * to_fine).expect("scaled affine stays regular");
    VoxelVolume::new(grid, data).expect("length matches")
}

/// Trilinear sample without the grid-snapping used for exact reslicing.
#[inline]
fn trilinear(volume: &VoxelVolume, p: [f64; 3]) -> Option<f32> {
    let [nx, ny, nz] = volume.dims();
    let max = [(nx - 1) as f64, (ny - 1) as f64, (nz - 1) as f64];
    if !(p[0] >= 0.0 && p[1] >= 0.0 && p[2] >= 0.0 && p[0] <= max[0] && p[1] <= max[1] && p[2] <= max[2]) {
        return None;
    }
    // Clamp the base corner so the +1 neighbour stays in range on the last plane.
    let base = |c: f64, n: usize| -> (usize, f64) {
        let i = (c.floor() as usize).min(n.saturating_sub(2));
        (i, c - i as f64)
    };
    let (x0, fx) = base(p[0], nx);
    let (y0, fy) = base(p[1], ny);
    let (z0, fz) = base(p[2], nz);
    let data = volume.data();
    let sx = usize::from(nx > 1);
    let sy = if ny > 1 { nx } else { 0 };
    let sz = if nz > 1 { nx * ny } else { 0 };
    let i = x0 + nx * (y0 + ny * z0);
    let v = |o: usize| data[i + o] as f64;
    let c00 = v(0) + fx * (v(sx) - v(0));
    let c10 = v(sy) + fx * (v(sy + sx) - v(sy));
    let c01 = v(sz) + fx * (v(sz + sx) - v(sz));
    let c11 = v(sz + sy) + fx * (v(sz + sy + sx) - v(sz + sy));
    let c0 = c00 + fy * (c10 - c00);
    let c1 = c01 + fy * (c11 - c01);
    Some((c0 + fz * (c1 - c0)) as f32)
}

/// Paired (fixed, moving) samples where the moving sample falls inside its grid.
fn sample_pairs(fixed: &VoxelVolume, moving: &VoxelVolume, transform: &RigidTransform) -> (Vec<f32>, Vec<f32>) {
    let to_moving = moving.grid().inverse_affine() * transform.inverse().matrix() * fixed.affine();
    let [nx, ny, nz] = fixed.dims();
    let slabs: Vec<(Vec<f32>, Vec<f32>)> = (0..nz)
        .into_par_iter()
        .map(|z| {
            let mut a = Vec::with_capacity(nx * ny);
            let mut b = Vec::with_capacity(nx * ny);
            for y in 0..ny {
                let row = to_moving * Vector4::new(0.0, y as f64, z as f64, 1.0);
                let dx = to_moving.column(0);
                for x in 0..nx {
                    let xf = x as f64;
                    let p = [row.x + dx[0] * xf, row.y + dx[1] * xf, row.z + dx[2] * xf];
                    if let Some(v) = trilinear(moving, p) {
                        a.push(fixed.get(x, y, z));
                        b.push(v);
                    }
                }
            }
            (a, b)
        })
        .collect();
    let total: usize = slabs.iter().map(|s| s.0.len()).sum();
    let mut a = Vec::with_capacity(total);
    let mut b = Vec::with_capacity(total);
    for (sa, sb) in slabs {
        a.extend(sa);
        b.extend(sb);
    }
    (a, b)
}

fn overlap_count(fixed: &Grid, moving: &Grid, transform: &RigidTransform) -> usize {
    let to_moving = moving.inverse_affine() * transform.inverse().matrix() * fixed.affine();
    let md = moving.dims();
    (0..fixed.len())
        .into_par_iter()
        .filter(|&i| {
            let [x, y, z] = fixed.coords(i);
            let p = to_moving * Vector4::new(x as f64, y as f64, z as f64, 1.0);
            [p.x, p.y, p.z]
                .iter()
                .zip(md)
                .all(|(&c, n)| c >= -1e-9 && c <= (n - 1) as f64 + 1e-9)
        })
        .count()
}

/// Estimates the rigid transform taking `moving` world coordinates onto `fixed`.
pub fn register_rigid(
    moving: &VoxelVolume,
    fixed: &VoxelVolume,
    config: &RegistrationConfig,
) -> Result<Registration, RegistrationError> {
    config.validate()?;
    if overlap_count(fixed.grid(), moving.grid(), &RigidTransform::identity()) == 0 {
        return Err(RegistrationError::NoOverlap);
    }
    let center = fixed.grid().center();
    let mut params = [0.0f64; 6];
    let mut levels = Vec::with_capacity(config.pyramid_levels);
    let mut last_score = f64::NAN;
    let mut converged = false;

    for level in 0..config.pyramid_levels {
        let factor = 1usize << (config.pyramid_levels - 1 - level);
        let sigma = config.smoothing_sigma_voxels[level];
        let fixed_l = downsample(fixed, factor, sigma);
        let moving_l = downsample(moving, factor, sigma);
        let range_f = fixed_l.intensity_range();
        let range_m = moving_l.intensity_range();
        let min_samples = ((fixed_l.grid().len() as f64 * MIN_OVERLAP_FRACTION).ceil() as usize).max(8);

        let objective = |p: &[f64; 6]| -> f64 {
            let t = params_to_transform(p, center);
            let (a, b) = sample_pairs(&fixed_l, &moving_l, &t);
            if a.len() < min_samples {
                return f64::INFINITY;
            }
            match metric::score(config.metric, &a, &b, range_f, range_m, config.histogram_bins) {
                Ok(s) => -s,
                Err(_) => f64::INFINITY,
            }
        };

        let mut outcome = simplex::minimize(objective, params, SIMPLEX_STEPS, config.max_iterations, config.tolerance);
        let mut iterations = outcome.iterations;
        // One restart from the optimum guards against a collapsed simplex.
        if outcome.converged && iterations < config.max_iterations {
            let again = simplex::minimize(
                objective,
                outcome.best,
                SIMPLEX_STEPS,
                config.max_iterations - iterations,
                config.tolerance,
            );
            iterations += again.iterations;
            if again.value <= outcome.value {
                outcome = simplex::SimplexOutcome {
                    converged: again.converged,
                    ..again
                };
            }
        }
        params = outcome.best;
        last_score = -outcome.value;
        converged = outcome.converged;
        log::debug!(
            "registration level {level} (x{factor}): score {last_score:.6} after {iterations} iterations, params {params:?}"
        );
        levels.push(LevelReport {
            downsample: factor,
            iterations,
            score: last_score,
            converged,
        });
    }

    Ok(Registration {
        transform: params_to_transform(&params, center),
        parameters: params,
        center: [center.x, center.y, center.z],
        score: last_score,
        converged,
        levels,
    })
}
