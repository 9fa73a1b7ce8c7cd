//! Marching tetrahedra over voxel-centre nodes.
//!
//! Every cube of eight neighbouring nodes is split into six tetrahedra that
//! share the cube's main diagonal. Neighbouring cubes then triangulate their
//! shared faces identically, and each surface vertex is keyed by the grid edge
//! it lies on, so the output is closed without any ambiguous-case handling.
//! The field is padded with one layer of background nodes so surfaces touching
//! the grid border are closed too.

use std::collections::HashMap;

use nalgebra::{Matrix3, Vector3, Vector4};

use super::{normals::area_weighted, MeshError, MeshingConfig, SurfaceMesh};
use crate::filter::gaussian_smooth;
use crate::grid::Grid;
use crate::segmentation::LabelMask;
use crate::volume::VoxelVolume;

/// Input to isosurface extraction.
#[derive(Debug, Clone, Copy)]
pub enum ScalarField<'a> {
    /// Scalar intensities; the surface separates values above `iso_value`.
    Volume(&'a VoxelVolume),
    /// Label mask, meshed as a 0/1 indicator of its non-zero voxels.
    Mask(&'a LabelMask),
}

impl<'a> From<&'a VoxelVolume> for ScalarField<'a> {
    fn from(v: &'a VoxelVolume) -> Self {
        Self::Volume(v)
    }
}

impl<'a> From<&'a LabelMask> for ScalarField<'a> {
    fn from(m: &'a LabelMask) -> Self {
        Self::Mask(m)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryWarning {
    /// Every node is inside; there is no surface within the grid.
    AllForeground,
    /// Foreground reaches the grid border and was closed against the padding.
    ClosedAtGridBoundary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub mesh: SurfaceMesh,
    pub warning: Option<BoundaryWarning>,
    /// Set by [`super::build_surface`] when decimation ran.
    pub decimation_reached_target: Option<bool>,
}

/// Cube corner `c` sits at offset `(c & 1, (c >> 1) & 1, (c >> 2) & 1)`.
fn corner_offset(c: u8) -> [i64; 3] {
    [(c & 1) as i64, ((c >> 1) & 1) as i64, ((c >> 2) & 1) as i64]
}

/// The six diagonal-sharing tetrahedra, each positively oriented in index space.
fn cube_tetrahedra() -> [[u8; 4]; 6] {
    const AXIS_BIT: [u8; 3] = [1, 2, 4];
    const PERMS: [[usize; 3]; 6] = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let mut tets = [[0u8; 4]; 6];
    for (slot, p) in PERMS.iter().enumerate() {
        let a = AXIS_BIT[p[0]];
        let b = a | AXIS_BIT[p[1]];
        let mut tet = [0, a, b, 7];
        let o: Vec<Vector3<f64>> = tet
            .iter()
            .map(|&c| {
                let [x, y, z] = corner_offset(c);
                Vector3::new(x as f64, y as f64, z as f64)
            })
            .collect();
        let det = Matrix3::from_columns(&[o[1] - o[0], o[2] - o[0], o[3] - o[0]]).determinant();
        if det < 0.0 {
            tet.swap(1, 2);
        }
        tets[slot] = tet;
    }
    tets
}

fn is_odd(perm: &[usize; 4]) -> bool {
    let mut inversions = 0;
    for i in 0..4 {
        for j in i + 1..4 {
            if perm[i] > perm[j] {
                inversions += 1;
            }
        }
    }
    inversions % 2 == 1
}

/// Node values on the grid padded by one background layer per side.
struct PaddedField {
    dims: [usize; 3],
    values: Vec<f64>,
}

impl PaddedField {
    #[inline]
    fn id(&self, p: [i64; 3]) -> usize {
        // p is in unpadded index coordinates, -1..=n.
        let [px, py, pz] = self.dims;
        debug_assert!(p[0] >= -1 && p[1] >= -1 && p[2] >= -1);
        let _ = pz;
        (p[0] + 1) as usize + px * ((p[1] + 1) as usize + py * (p[2] + 1) as usize)
    }

    fn position(&self, id: usize) -> [f64; 3] {
        let [px, py, _] = self.dims;
        let x = id % px;
        let y = (id / px) % py;
        let z = id / (px * py);
        [x as f64 - 1.0, y as f64 - 1.0, z as f64 - 1.0]
    }
}

struct Builder<'a> {
    field: &'a PaddedField,
    iso: f64,
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    edge_vertex: HashMap<(usize, usize), u32>,
}

impl Builder<'_> {
    fn edge(&mut self, a: usize, b: usize) -> u32 {
        let key = (a.min(b), a.max(b));
        if let Some(&i) = self.edge_vertex.get(&key) {
            return i;
        }
        let (va, vb) = (self.field.values[key.0], self.field.values[key.1]);
        let t = (self.iso - va) / (vb - va);
        let pa = self.field.position(key.0);
        let pb = self.field.position(key.1);
        let p = Vector3::new(
            pa[0] + t * (pb[0] - pa[0]),
            pa[1] + t * (pb[1] - pa[1]),
            pa[2] + t * (pb[2] - pa[2]),
        );
        let index = self.vertices.len() as u32;
        self.vertices.push(p);
        self.edge_vertex.insert(key, index);
        index
    }

    /// Emits the surface piece of one positively oriented tetrahedron, wound so
    /// its normal points from inside (above iso) to outside.
    fn tetrahedron(&mut self, nodes: [usize; 4]) {
        let inside: Vec<usize> = (0..4).filter(|&k| self.field.values[nodes[k]] > self.iso).collect();
        let outside: Vec<usize> = (0..4).filter(|&k| self.field.values[nodes[k]] <= self.iso).collect();
        let mut perm = [0usize; 4];
        match inside.len() {
            1 => {
                perm = [inside[0], outside[0], outside[1], outside[2]];
                if is_odd(&perm) {
                    perm.swap(2, 3);
                }
                let n = perm.map(|k| nodes[k]);
                let (a, b, c) = (self.edge(n[0], n[1]), self.edge(n[0], n[2]), self.edge(n[0], n[3]));
                self.triangles.push([a, b, c]);
            }
            3 => {
                perm = [outside[0], inside[0], inside[1], inside[2]];
                if is_odd(&perm) {
                    perm.swap(2, 3);
                }
                let n = perm.map(|k| nodes[k]);
                let (a, b, c) = (self.edge(n[0], n[1]), self.edge(n[0], n[2]), self.edge(n[0], n[3]));
                self.triangles.push([a, c, b]);
            }
            2 => {
                perm[..2].copy_from_slice(&inside);
                perm[2..].copy_from_slice(&outside);
                if is_odd(&perm) {
                    perm.swap(2, 3);
                }
                let n = perm.map(|k| nodes[k]);
                let ac = self.edge(n[0], n[2]);
                let ad = self.edge(n[0], n[3]);
                let bd = self.edge(n[1], n[3]);
                let bc = self.edge(n[1], n[2]);
                self.triangles.push([ac, ad, bd]);
                self.triangles.push([ac, bd, bc]);
            }
            _ => {}
        }
    }
}

fn field_values(field: ScalarField<'_>, config: &MeshingConfig) -> (Grid, Vec<f32>) {
    match field {
        ScalarField::Volume(v) => {
            let sigma = config.presmooth_sigma_voxels.unwrap_or(0.0);
            (v.grid().clone(), gaussian_smooth(v.data(), v.dims(), sigma))
        }
        ScalarField::Mask(m) => {
            let sigma = config.presmooth_sigma_voxels.unwrap_or(1.0);
            let indicator: Vec<f32> = m.data().iter().map(|&l| (l != 0) as u8 as f32).collect();
            (m.grid().clone(), gaussian_smooth(&indicator, m.dims(), sigma))
        }
    }
}

/// Extracts the closed surface `{field = iso_value}` in world millimetres.
pub fn extract_isosurface(field: ScalarField<'_>, config: &MeshingConfig) -> Result<Extraction, MeshError> {
    config.validate()?;
    let (grid, data) = field_values(field, config);
    let iso = config.iso_value;
    let [nx, ny, nz] = grid.dims();

    let (lo, hi) = data
        .iter()
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v as f64), hi.max(v as f64)));
    let range = if hi > lo { hi - lo } else { 1.0 };
    let nudge = 1e-9 * range;
    let background = iso - range.max(1.0);

    let pdims = [nx + 2, ny + 2, nz + 2];
    let mut values = vec![background; pdims[0] * pdims[1] * pdims[2]];
    let mut any_inside = false;
    let mut all_inside = true;
    let mut touches_border = false;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let mut v = data[grid.index(x, y, z)] as f64;
                if !v.is_finite() {
                    v = background;
                }
                if v == iso {
                    v += nudge;
                }
                let inside = v > iso;
                any_inside |= inside;
                all_inside &= inside;
                if inside && (x == 0 || y == 0 || z == 0 || x == nx - 1 || y == ny - 1 || z == nz - 1) {
                    touches_border = true;
                }
                values[(x + 1) + pdims[0] * ((y + 1) + pdims[1] * (z + 1))] = v;
            }
        }
    }
    if all_inside {
        return Ok(Extraction {
            mesh: SurfaceMesh::empty(),
            warning: Some(BoundaryWarning::AllForeground),
            decimation_reached_target: None,
        });
    }
    if !any_inside {
        return Ok(Extraction {
            mesh: SurfaceMesh::empty(),
            warning: None,
            decimation_reached_target: None,
        });
    }

    let padded = PaddedField { dims: pdims, values };
    let tets = cube_tetrahedra();
    let mut builder = Builder {
        field: &padded,
        iso,
        vertices: Vec::new(),
        triangles: Vec::new(),
        edge_vertex: HashMap::new(),
    };
    for cz in -1..nz as i64 {
        for cy in -1..ny as i64 {
            for cx in -1..nx as i64 {
                let mut corners = [0usize; 8];
                let mut n_inside = 0;
                for c in 0..8u8 {
                    let o = corner_offset(c);
                    let id = padded.id([cx + o[0], cy + o[1], cz + o[2]]);
                    corners[c as usize] = id;
                    n_inside += (padded.values[id] > iso) as usize;
                }
                if n_inside == 0 || n_inside == 8 {
                    continue;
                }
                for tet in &tets {
                    builder.tetrahedron(tet.map(|c| corners[c as usize]));
                }
            }
        }
    }

    let affine = grid.affine();
    let mut vertices: Vec<Vector3<f64>> = builder
        .vertices
        .iter()
        .map(|p| (affine * Vector4::new(p.x, p.y, p.z, 1.0)).xyz())
        .collect();
    let mut triangles = builder.triangles;
    let linear: Matrix3<f64> = affine.fixed_view::<3, 3>(0, 0).into_owned();
    if linear.determinant() < 0.0 {
        // A reflecting affine turns index-space outward winding inward.
        for t in &mut triangles {
            t.swap(1, 2);
        }
    }
    vertices.shrink_to_fit();
    let normals = area_weighted(&vertices, &triangles).0;
    let mesh = SurfaceMesh::from_parts(vertices, triangles, normals, false)?;
    Ok(Extraction {
        mesh,
        warning: touches_border.then_some(BoundaryWarning::ClosedAtGridBoundary),
        decimation_reached_target: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::{edge_report, enclosed_volume, euler_characteristic};
    use nalgebra::Matrix4;

    fn grid(n: usize) -> Grid {
        Grid::with_spacing([n, n, n], [1.0; 3]).unwrap()
    }

    fn raw() -> MeshingConfig {
        MeshingConfig {
            presmooth_sigma_voxels: Some(0.0),
            ..Default::default()
        }
    }

    #[test]
    fn tetrahedra_tile_the_cube_positively() {
        let tets = cube_tetrahedra();
        let mut total = 0.0;
        for t in tets {
            let o: Vec<Vector3<f64>> = t
                .iter()
                .map(|&c| {
                    let [x, y, z] = corner_offset(c);
                    Vector3::new(x as f64, y as f64, z as f64)
                })
                .collect();
            let det = Matrix3::from_columns(&[o[1] - o[0], o[2] - o[0], o[3] - o[0]]).determinant();
            assert!(det > 0.0);
            total += det / 6.0;
            assert!(t.contains(&0) && t.contains(&7));
        }
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_field_is_empty() {
        let v = VoxelVolume::new(grid(5), vec![0.0; 125]).unwrap();
        let out = extract_isosurface((&v).into(), &raw()).unwrap();
        assert!(out.mesh.is_empty());
        assert_eq!(out.warning, None);
    }

    #[test]
    fn all_foreground_is_empty_with_warning() {
        let v = VoxelVolume::new(grid(4), vec![1.0; 64]).unwrap();
        let out = extract_isosurface((&v).into(), &raw()).unwrap();
        assert!(out.mesh.is_empty());
        assert_eq!(out.warning, Some(BoundaryWarning::AllForeground));
    }

    #[test]
    fn single_voxel_is_a_closed_sphere() {
        let g = grid(5);
        let mut bits = vec![false; 125];
        bits[g.index(2, 2, 2)] = true;
        let m = LabelMask::from_bits(&g, &bits);
        let out = extract_isosurface((&m).into(), &raw()).unwrap();
        let report = edge_report(&out.mesh);
        assert!(report.is_watertight(), "{report:?}");
        assert_eq!(euler_characteristic(&out.mesh), 2);
        assert!(enclosed_volume(&out.mesh) > 0.0);
        assert_eq!(out.warning, None);
    }

    #[test]
    fn border_touching_foreground_closed() {
        let g = grid(4);
        let bits: Vec<bool> = (0..64).map(|i| g.coords(i)[0] < 2).collect();
        let m = LabelMask::from_bits(&g, &bits);
        let out = extract_isosurface((&m).into(), &raw()).unwrap();
        assert!(edge_report(&out.mesh).is_watertight());
        assert_eq!(euler_characteristic(&out.mesh), 2);
        assert_eq!(out.warning, Some(BoundaryWarning::ClosedAtGridBoundary));
    }

    #[test]
    fn exact_iso_values_are_nudged() {
        // Values equal to the iso level at many nodes.
        let g = grid(6);
        let v = VoxelVolume::from_fn(g, |[x, y, z]| ((x + y + z) % 3) as f32 * 0.25);
        let out = extract_isosurface((&v).into(), &MeshingConfig { iso_value: 0.25, ..raw() }).unwrap();
        assert!(!out.mesh.is_empty());
        assert!(edge_report(&out.mesh).is_watertight());
    }

    #[test]
    fn reflecting_affine_keeps_outward_winding() {
        let mut affine = Matrix4::identity();
        affine[(0, 0)] = -1.0;
        let g = Grid::new([5, 5, 5], affine).unwrap();
        let mut bits = vec![false; 125];
        bits[g.index(2, 2, 2)] = true;
        bits[g.index(3, 2, 2)] = true;
        let m = LabelMask::from_bits(&g, &bits);
        let out = extract_isosurface((&m).into(), &raw()).unwrap();
        assert!(enclosed_volume(&out.mesh) > 0.0);
    }

    #[test]
    fn mask_presmoothing_default() {
        let g = grid(12);
        let bits: Vec<bool> = (0..g.len())
            .map(|i| {
                let [x, y, z] = g.coords(i);
                (3..9).contains(&x) && (3..9).contains(&y) && (3..9).contains(&z)
            })
            .collect();
        let m = LabelMask::from_bits(&g, &bits);
        let smooth = extract_isosurface((&m).into(), &MeshingConfig::default()).unwrap();
        let blocky = extract_isosurface((&m).into(), &raw()).unwrap();
        assert!(edge_report(&smooth.mesh).is_watertight());
        // Smoothing rounds the cube's corners, changing the triangulation.
        assert_ne!(smooth.mesh.vertex_count(), blocky.mesh.vertex_count());
        assert!(enclosed_volume(&smooth.mesh) > 150.0);
    }

    #[test]
    fn analytic_sphere_geometry() {
        use crate::meshing::surface_area;
        let g = grid(64);
        let c = g.center();
        let field = crate::phantom::sphere_field(&g, [c.x, c.y, c.z], 10.0);
        let config = MeshingConfig { iso_value: 0.0, ..raw() };
        let mesh = extract_isosurface((&field).into(), &config).unwrap().mesh;
        assert!(edge_report(&mesh).is_watertight());
        assert_eq!(euler_characteristic(&mesh), 2);
        let exact_v = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
        let exact_a = 4.0 * std::f64::consts::PI * 100.0;
        let v = enclosed_volume(&mesh);
        let a = surface_area(&mesh);
        assert!((v - exact_v).abs() / exact_v < 0.02, "volume {v}");
        assert!((a - exact_a).abs() / exact_a < 0.03, "area {a}");

        let verts = mesh.vertices();
        let outward = mesh
            .triangles()
            .iter()
            .filter(|t| {
                let (p, q, r) = (verts[t[0] as usize], verts[t[1] as usize], verts[t[2] as usize]);
                let n = (q - p).cross(&(r - p));
                n.dot(&((p + q + r) / 3.0 - c)) > 0.0
            })
            .count();
        assert!(outward as f64 >= 0.99 * mesh.triangle_count() as f64);
    }
}
