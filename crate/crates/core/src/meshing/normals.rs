use nalgebra::Vector3;

use super::{MeshError, SurfaceMesh};

/// Normalised sum of unnormalised face normals (twice the face area) around
/// each vertex. Vertices with no incident area get `+z` and are listed.
pub(crate) fn area_weighted(vertices: &[Vector3<f64>], triangles: &[[u32; 3]]) -> (Vec<Vector3<f64>>, Vec<u32>) {
    let mut acc = vec![Vector3::zeros(); vertices.len()];
    for t in triangles {
        let (a, b, c) = (vertices[t[0] as usize], vertices[t[1] as usize], vertices[t[2] as usize]);
        let n = (b - a).cross(&(c - a));
        for &i in t {
            acc[i as usize] += n;
        }
    }
    let mut fallback = Vec::new();
    let normals = acc
        .into_iter()
        .enumerate()
        .map(|(i, n)| {
            let len = n.norm();
            if len > 0.0 && len.is_finite() {
                n / len
            } else {
                fallback.push(i as u32);
                Vector3::z()
            }
        })
        .collect();
    (normals, fallback)
}

/// Mesh with recomputed smooth-shading normals; geometry and topology untouched.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexNormals {
    pub mesh: SurfaceMesh,
    /// Vertices without incident area that received the `+z` placeholder.
    pub fallback_vertices: Vec<u32>,
}

pub fn compute_vertex_normals(mesh: &SurfaceMesh) -> VertexNormals {
    let (normals, fallback_vertices) = area_weighted(&mesh.vertices, &mesh.triangles);
    let mut out = mesh.clone();
    out.normals = normals;
    VertexNormals {
        mesh: out,
        fallback_vertices,
    }
}

/// Appends a back-facing copy: duplicated vertices, negated normals and
/// reversed winding, so both sides of the surface shade correctly.
pub fn make_two_sided(mesh: &SurfaceMesh) -> Result<SurfaceMesh, MeshError> {
    if mesh.two_sided {
        return Err(MeshError::AlreadyTwoSided);
    }
    let n = mesh.vertex_count() as u32;
    let mut out = mesh.clone();
    out.vertices.extend_from_slice(&mesh.vertices);
    out.normals.extend(mesh.normals.iter().map(|v| -v));
    out.triangles
        .extend(mesh.triangles.iter().map(|t| [t[0] + n, t[2] + n, t[1] + n]));
    out.two_sided = true;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::{edge_report, measure::edge_report_of, shapes};

    #[test]
    fn single_triangle_normals_equal_face_normal() {
        let v = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(2.0, 0.0, 0.0), Vector3::new(0.0, 3.0, 0.0)];
        let mesh = SurfaceMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let out = compute_vertex_normals(&mesh);
        assert!(out.fallback_vertices.is_empty());
        assert!(out.mesh.normals().iter().all(|n| *n == Vector3::z()));
    }

    #[test]
    fn octahedron_normals_along_axes() {
        let out = compute_vertex_normals(&shapes::octahedron(2.0)).mesh;
        for (p, n) in out.vertices().iter().zip(out.normals()) {
            assert!((n - p.normalize()).norm() < 1e-9);
        }
    }

    #[test]
    fn icosphere_normals_near_radial() {
        let out = compute_vertex_normals(&shapes::icosphere(3, 1.0)).mesh;
        for (p, n) in out.vertices().iter().zip(out.normals()) {
            let angle = n.dot(&p.normalize()).clamp(-1.0, 1.0).acos().to_degrees();
            assert!(angle < 5.0, "{angle}");
        }
    }

    #[test]
    fn isolated_vertex_flagged() {
        let v = vec![
            Vector3::new(0.0, 0.0, 0.0),
            Vector3::new(1.0, 0.0, 0.0),
            Vector3::new(0.0, 1.0, 0.0),
            Vector3::new(5.0, 5.0, 5.0),
        ];
        let mesh = SurfaceMesh::new(v, vec![[0, 1, 2]]).unwrap();
        let out = compute_vertex_normals(&mesh);
        assert_eq!(out.fallback_vertices, vec![3]);
        assert_eq!(out.mesh.normals()[3], Vector3::z());
    }

    #[test]
    fn two_sided_doubles_and_negates() {
        let mesh = shapes::icosphere(1, 1.0);
        let two = make_two_sided(&mesh).unwrap();
        let (v, t) = (mesh.vertex_count(), mesh.triangle_count());
        assert_eq!(two.vertex_count(), 2 * v);
        assert_eq!(two.triangle_count(), 2 * t);
        assert!(two.two_sided());
        for i in 0..v {
            assert_eq!(two.normals()[v + i], -mesh.normals()[i]);
            assert_eq!(two.vertices()[v + i], mesh.vertices()[i]);
        }
        assert!(edge_report_of(&two.triangles()[..t]).is_watertight());
        assert!(edge_report_of(&two.triangles()[t..]).is_watertight());
        // Two disjoint closed shells of opposite orientation.
        assert!(edge_report(&two).is_watertight());
        assert!(crate::meshing::enclosed_volume(&two).abs() < 1e-9);
        assert_eq!(make_two_sided(&two), Err(MeshError::AlreadyTwoSided));
    }
}
