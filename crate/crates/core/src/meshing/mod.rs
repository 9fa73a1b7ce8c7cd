//! Watertight isosurface extraction and presentation-side mesh processing.

mod decimate;
mod measure;
mod normals;
pub mod shapes;
mod smooth;
mod tetra;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use decimate::{decimate, Decimation, DECIMATION_METHOD};
pub use measure::{bounding_box, edge_report, enclosed_volume, euler_characteristic, surface_area, EdgeReport};
pub use normals::{compute_vertex_normals, make_two_sided, VertexNormals};
pub use smooth::laplacian_smooth;
pub use tetra::{extract_isosurface, BoundaryWarning, Extraction, ScalarField};

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange { triangle: usize, index: u32, count: usize },
    #[error("triangle {0} repeats a vertex index")]
    DegenerateTriangle(usize),
    #[error("{normals} normals for {vertices} vertices")]
    NormalCount { normals: usize, vertices: usize },
    #[error("normal {0} is not unit length")]
    NonUnitNormal(usize),
    #[error("mesh is already two-sided")]
    AlreadyTwoSided,
    #[error("mesh is not watertight: {0}")]
    NotWatertight(String),
    #[error("decimation target must be at least 4 vertices, got {0}")]
    TargetTooSmall(usize),
    #[error("invalid meshing config: {0}")]
    InvalidConfig(String),
}

/// Indexed triangle mesh in world millimetres. Counter-clockwise winding faces outward.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceMesh {
    vertices: Vec<Vector3<f64>>,
    triangles: Vec<[u32; 3]>,
    normals: Vec<Vector3<f64>>,
    layer_name: String,
    two_sided: bool,
}

fn check_triangles(triangles: &[[u32; 3]], count: usize) -> Result<(), MeshError> {
    for (t, tri) in triangles.iter().enumerate() {
        for &index in tri {
            if index as usize >= count {
                return Err(MeshError::IndexOutOfRange { triangle: t, index, count });
            }
        }
        if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
            return Err(MeshError::DegenerateTriangle(t));
        }
    }
    Ok(())
}

impl SurfaceMesh {
    /// Validates indices and computes area-weighted vertex normals.
    pub fn new(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        check_triangles(&triangles, vertices.len())?;
        let normals = normals::area_weighted(&vertices, &triangles).0;
        Ok(Self {
            vertices,
            triangles,
            normals,
            layer_name: String::new(),
            two_sided: false,
        })
    }

    pub fn from_parts(
        vertices: Vec<Vector3<f64>>,
        triangles: Vec<[u32; 3]>,
        normals: Vec<Vector3<f64>>,
        two_sided: bool,
    ) -> Result<Self, MeshError> {
        check_triangles(&triangles, vertices.len())?;
        if normals.len() != vertices.len() {
            return Err(MeshError::NormalCount {
                normals: normals.len(),
                vertices: vertices.len(),
            });
        }
        if let Some(i) = normals.iter().position(|n| (n.norm() - 1.0).abs() > 1e-6) {
            return Err(MeshError::NonUnitNormal(i));
        }
        Ok(Self {
            vertices,
            triangles,
            normals,
            layer_name: String::new(),
            two_sided,
        })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            normals: Vec::new(),
            layer_name: String::new(),
            two_sided: false,
        }
    }

    pub fn with_layer_name(mut self, name: impl Into<String>) -> Self {
        self.layer_name = name.into();
        self
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[u32; 3]] {
        &self.triangles
    }

    pub fn normals(&self) -> &[Vector3<f64>] {
        &self.normals
    }

    pub fn layer_name(&self) -> &str {
        &self.layer_name
    }

    pub fn two_sided(&self) -> bool {
        self.two_sided
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    /// Reverses every triangle's winding and negates normals.
    pub fn flipped(&self) -> Self {
        let mut out = self.clone();
        for t in &mut out.triangles {
            t.swap(1, 2);
        }
        for n in &mut out.normals {
            *n = -*n;
        }
        out
    }

    /// Relabels vertex `i` as `perm[i]`.
    pub fn permuted(&self, perm: &[u32]) -> Self {
        assert_eq!(perm.len(), self.vertices.len());
        let mut vertices = vec![Vector3::zeros(); self.vertices.len()];
        let mut normals = vec![Vector3::zeros(); self.vertices.len()];
        for (old, &new) in perm.iter().enumerate() {
            vertices[new as usize] = self.vertices[old];
            normals[new as usize] = self.normals[old];
        }
        let triangles = self.triangles.iter().map(|t| t.map(|i| perm[i as usize])).collect();
        Self {
            vertices,
            triangles,
            normals,
            layer_name: self.layer_name.clone(),
            two_sided: self.two_sided,
        }
    }
}

/// Per-layer meshing parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeshingConfig {
    /// Gaussian pre-smoothing in voxels. `None` means 1.0 for label masks and
    /// 0 for scalar fields.
    pub presmooth_sigma_voxels: Option<f64>,
    pub iso_value: f64,
    pub smoothing_iterations: usize,
    pub smoothing_lambda: f64,
    pub target_vertices: Option<usize>,
}

impl Default for MeshingConfig {
    fn default() -> Self {
        Self {
            presmooth_sigma_voxels: None,
            iso_value: 0.5,
            smoothing_iterations: 0,
            smoothing_lambda: 0.5,
            target_vertices: None,
        }
    }
}

impl MeshingConfig {
    pub fn validate(&self) -> Result<(), MeshError> {
        let bad = |m: String| Err(MeshError::InvalidConfig(m));
        if let Some(s) = self.presmooth_sigma_voxels {
            if !(s.is_finite() && s >= 0.0) {
                return bad(format!("presmooth_sigma_voxels must be >= 0, got {s}"));
            }
        }
        if !self.iso_value.is_finite() {
            return bad("iso_value must be finite".into());
        }
        if !(self.smoothing_lambda > 0.0 && self.smoothing_lambda < 1.0) {
            return bad(format!("smoothing_lambda must lie in (0, 1), got {}", self.smoothing_lambda));
        }
        if let Some(t) = self.target_vertices {
            if t < 4 {
                return bad(format!("target_vertices must be >= 4, got {t}"));
            }
        }
        Ok(())
    }
}

/// Extraction followed by the optional smoothing and decimation steps of `config`.
pub fn build_surface(field: ScalarField<'_>, config: &MeshingConfig) -> Result<Extraction, MeshError> {
    let mut extraction = extract_isosurface(field, config)?;
    if extraction.mesh.is_empty() {
        return Ok(extraction);
    }
    if config.smoothing_iterations > 0 {
        extraction.mesh = laplacian_smooth(&extraction.mesh, config.smoothing_iterations, config.smoothing_lambda);
    }
    if let Some(target) = config.target_vertices {
        let result = decimate(&extraction.mesh, target)?;
        extraction.mesh = result.mesh;
        extraction.decimation_reached_target = Some(result.reached_target);
    }
    Ok(extraction)
}
