//! Analytic synthetic volumes for testing and benchmarking.

use crate::grid::Grid;
use crate::transform::RigidTransform;
use crate::volume::VoxelVolume;

/// Isotropic Gaussian bump in world coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Blob {
    pub center: [f64; 3],
    pub sigma_mm: f64,
    pub amplitude: f64,
}

impl Blob {
    pub fn value(&self, p: [f64; 3]) -> f64 {
        let d2: f64 = (0..3).map(|k| (p[k] - self.center[k]).powi(2)).sum();
        self.amplitude * (-0.5 * d2 / (self.sigma_mm * self.sigma_mm)).exp()
    }
}

/// Three asymmetrically placed blobs around the grid centre, so that every
/// rotation and translation changes the image.
pub fn three_blobs(grid: &Grid) -> [Blob; 3] {
    let c = grid.center();
    let extent = grid
        .dims()
        .iter()
        .zip(grid.spacing())
        .map(|(&n, s)| n as f64 * s)
        .fold(f64::INFINITY, f64::min);
    let u = extent / 64.0;
    [
        Blob {
            center: [c.x - 8.0 * u, c.y - 4.0 * u, c.z - 2.0 * u],
            sigma_mm: 6.0 * u,
            amplitude: 1000.0,
        },
        Blob {
            center: [c.x + 8.0 * u, c.y + 4.0 * u, c.z - 4.0 * u],
            sigma_mm: 5.0 * u,
            amplitude: 700.0,
        },
        Blob {
            center: [c.x + 1.0 * u, c.y - 9.0 * u, c.z + 8.0 * u],
            sigma_mm: 4.0 * u,
            amplitude: 500.0,
        },
    ]
}

/// Samples `Σ blobs(T·p)` at every voxel's world point `p`; `T` defaults to identity.
///
/// With `T` given, registering the result onto the untransformed field recovers `T`.
pub fn blob_volume(grid: &Grid, blobs: &[Blob], transform: Option<&RigidTransform>) -> VoxelVolume {
    VoxelVolume::from_fn(grid.clone(), |[x, y, z]| {
        let mut p = grid.voxel_to_world([x as f64, y as f64, z as f64]);
        if let Some(t) = transform {
            p = t.apply(p);
        }
        blobs.iter().map(|b| b.value(p)).sum::<f64>() as f32
    })
}

/// `radius − |p − center|`: positive inside the sphere, zero on it.
pub fn sphere_field(grid: &Grid, center: [f64; 3], radius: f64) -> VoxelVolume {
    VoxelVolume::from_fn(grid.clone(), |[x, y, z]| {
        let p = grid.voxel_to_world([x as f64, y as f64, z as f64]);
        let d = ((p[0] - center[0]).powi(2) + (p[1] - center[1]).powi(2) + (p[2] - center[2]).powi(2)).sqrt();
        (radius - d) as f32
    })
}

/// Voxel values of [`head_phantom`]'s structures.
pub const SKULL_VALUE: f32 = 1000.0;
pub const VESSEL_VALUE: f32 = 600.0;
pub const TUMOR_VALUE: f32 = 400.0;

/// Smooth inside indicator for a signed distance in mm (positive inside),
/// mimicking the partial-volume blur of a real scan.
fn soft_inside(d: f64) -> f64 {
    0.5 * (1.0 + (d / 0.75).tanh())
}

/// Toy head on any grid, in mm around the grid centre: an ellipsoidal skull
/// shell with outer semi-axes (21, 18, 16), a straight vessel of radius 2.5
/// along x, and a tumor ball of radius 5. Soft tissue is the blob field scaled
/// below 350, so every structure is separable by thresholds alone. The skull
/// is deliberately not spherical so that rotations are visible to registration,
/// and all boundaries are soft, since hard steps bias intensity-based
/// registration toward grid-aligned poses.
pub fn head_phantom(grid: &Grid, transform: Option<&RigidTransform>) -> VoxelVolume {
    let c = grid.center();
    let blobs = three_blobs(grid);
    let tumor = [c.x - 4.0, c.y - 6.0, c.z - 3.0];
    VoxelVolume::from_fn(grid.clone(), |[x, y, z]| {
        let mut p = grid.voxel_to_world([x as f64, y as f64, z as f64]);
        if let Some(t) = transform {
            p = t.apply(p);
        }
        let r = (((p[0] - c.x) / 21.0).powi(2) + ((p[1] - c.y) / 18.0).powi(2) + ((p[2] - c.z) / 16.0).powi(2)).sqrt();
        let skull = soft_inside((1.0 - r).min(r - 0.84) * 17.0);
        let off_axis = ((p[1] - c.y - 5.0).powi(2) + (p[2] - c.z).powi(2)).sqrt();
        let vessel = soft_inside((2.5 - off_axis).min(12.0 - (p[0] - c.x).abs()));
        let d = ((p[0] - tumor[0]).powi(2) + (p[1] - tumor[1]).powi(2) + (p[2] - tumor[2]).powi(2)).sqrt();
        let ball = soft_inside(5.0 - d);
        let tissue = 0.3 * blobs.iter().map(|b| b.value(p)).sum::<f64>();
        [
            tissue,
            SKULL_VALUE as f64 * skull,
            VESSEL_VALUE as f64 * vessel,
            TUMOR_VALUE as f64 * ball,
        ]
        .into_iter()
        .fold(0.0, f64::max) as f32
    })
}

/// Decimation targets of the layers in [`write_demo_case`]'s config.
pub const DEMO_TARGETS: [(&str, usize); 3] = [("skull", 2000), ("vessels", 600), ("tumor", 300)];

/// Writes a 48³ three-structure case into `dir`: `reference.nii`, a rigidly
/// displaced `cta.nii` that the config registers back, and `pipeline.json`.
/// Returns the config path.
pub fn write_demo_case(dir: &std::path::Path) -> std::io::Result<std::path::PathBuf> {
    let grid = Grid::with_spacing([48, 48, 48], [1.0; 3]).expect("valid grid");
    let reference = head_phantom(&grid, None);
    let displaced = RigidTransform::about_center([2.0, -1.5, 3.0], [1.5, -1.0, 2.0], grid.center());
    let cta = head_phantom(&grid, Some(&displaced));
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("reference.nii"), crate::volume::write_nifti(&reference))?;
    std::fs::write(dir.join("cta.nii"), crate::volume::write_nifti(&cta))?;
    let [skull, vessels, tumor] = DEMO_TARGETS.map(|(_, t)| t);
    let config = serde_json::json!({
        "scene_name": "demo head",
        "reference_volume": "reference.nii",
        "output_dir": "scene",
        "inputs": [{ "name": "cta", "path": "cta.nii", "register": true, "interpolation": "trilinear" }],
        "structures": [
            {
                "name": "skull", "source": "reference", "seeds": [[43, 23, 23]],
                "stages": [{ "low": 800, "connectivity": 6 }],
                "postprocess": { "largest_component": true, "decimate_target": skull },
                "color": [0.93, 0.9, 0.82, 1.0], "category": "skull"
            },
            {
                "name": "vessels", "source": "cta", "seeds": [[23, 28, 23]],
                "stages": [{ "low": 450, "high": 800, "connectivity": 26 }],
                "domain": { "mask": "skull", "dilate_mm": 2.0, "mode": "keep_outside" },
                "postprocess": { "decimate_target": vessels, "smoothing_iterations": 2 },
                "color": [0.8, 0.1, 0.1, 1.0], "category": "vessels"
            },
            {
                "name": "tumor", "source": "reference", "seeds": [[19, 17, 20]],
                "stages": [
                    { "low": 380, "high": 560, "connectivity": 6 },
                    { "low": 300, "high": 560, "connectivity": 26, "band_radius_mm": 1.0 }
                ],
                "postprocess": { "decimate_target": tumor },
                "color": [0.3, 0.8, 0.3, 0.8], "category": "tumor", "visible_default": false
            }
        ]
    });
    let path = dir.join("pipeline.json");
    std::fs::write(&path, serde_json::to_string_pretty(&config).expect("json") + "\n")?;
    Ok(path)
}
