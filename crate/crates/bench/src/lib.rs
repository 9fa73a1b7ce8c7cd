//! Shared inputs for the criterion benches, built once per size so the
//! measured closures only time the operation itself.

use cranioforge::phantom::{blob_volume, head_phantom, sphere_field, three_blobs};
use cranioforge::{Grid, RigidTransform, VoxelVolume};

pub fn cube_grid(n: usize) -> Grid {
    Grid::with_spacing([n, n, n], [1.0; 3]).expect("positive spacing")
}

/// Head phantom on an `n³` grid.
pub fn head(n: usize) -> VoxelVolume {
    head_phantom(&cube_grid(n), None)
}

/// Fixed and moving blob phantoms; the moving one is displaced by a small rigid motion.
pub fn blob_pair(n: usize) -> (VoxelVolume, VoxelVolume) {
    let grid = cube_grid(n);
    let blobs = three_blobs(&grid);
    let motion = RigidTransform::about_center([3.0, -2.0, 4.0], [1.5, -1.0, 2.0], grid.center());
    (blob_volume(&grid, &blobs, Some(&motion)), blob_volume(&grid, &blobs, None))
}

/// Signed distance to a centred sphere filling about a third of the grid.
pub fn sphere(n: usize) -> VoxelVolume {
    let grid = cube_grid(n);
    let c = grid.center();
    sphere_field(&grid, [c.x, c.y, c.z], n as f64 / 3.0)
}
