use std::collections::HashMap;

use nalgebra::Vector3;

use super::SurfaceMesh;

/// Edge incidence summary used to check closed, consistently oriented meshes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EdgeReport {
    pub edges: usize,
    /// Edges used by a single triangle.
    pub boundary_edges: usize,
    /// Edges used by three or more triangles.
    pub nonmanifold_edges: usize,
    /// Edges used twice but traversed in the same direction both times.
    pub misoriented_edges: usize,
}

impl EdgeReport {
    /// Every edge in exactly two triangles, traversed once in each direction.
    pub fn is_watertight(&self) -> bool {
        self.boundary_edges == 0 && self.nonmanifold_edges == 0 && self.misoriented_edges == 0
    }
}

pub fn edge_report(mesh: &SurfaceMesh) -> EdgeReport {
    edge_report_of(mesh.triangles())
}

pub(crate) fn edge_report_of(triangles: &[[u32; 3]]) -> EdgeReport {
    // (uses, uses in ascending direction)
    let mut edges: HashMap<(u32, u32), (u32, u32)> = HashMap::with_capacity(triangles.len() * 2);
    for t in triangles {
        for k in 0..3 {
            let (a, b) = (t[k], t[(k + 1) % 3]);
            let e = edges.entry((a.min(b), a.max(b))).or_default();
            e.0 += 1;
            if a < b {
                e.1 += 1;
            }
        }
    }
    let mut report = EdgeReport {
        edges: edges.len(),
        ..Default::default()
    };
    for &(uses, forward) in edges.values() {
        match uses {
            1 => report.boundary_edges += 1,
            2 if forward != 1 => report.misoriented_edges += 1,
            2 => {}
            _ => report.nonmanifold_edges += 1,
        }
    }
    report
}

/// `V − E + F` over all stored vertices.
pub fn euler_characteristic(mesh: &SurfaceMesh) -> i64 {
    let e = edge_report(mesh).edges as i64;
    mesh.vertex_count() as i64 - e + mesh.triangle_count() as i64
}

/// Signed volume from tetrahedra to the origin; positive for outward winding.
pub fn enclosed_volume(mesh: &SurfaceMesh) -> f64 {
    let v = mesh.vertices();
    mesh.triangles()
        .iter()
        .map(|t| {
            let (a, b, c) = (v[t[0] as usize], v[t[1] as usize], v[t[2] as usize]);
            a.dot(&b.cross(&c)) / 6.0
        })
        .sum()
}

pub fn surface_area(mesh: &SurfaceMesh) -> f64 {
    let v = mesh.vertices();
    mesh.triangles()
        .iter()
        .map(|t| {
            let (a, b, c) = (v[t[0] as usize], v[t[1] as usize], v[t[2] as usize]);
            (b - a).cross(&(c - a)).norm() / 2.0
        })
        .sum()
}

pub fn bounding_box(mesh: &SurfaceMesh) -> Option<(Vector3<f64>, Vector3<f64>)> {
    let first = *mesh.vertices().first()?;
    Some(mesh.vertices().iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::shapes;

    #[test]
    fn cube_measures() {
        let cube = shapes::cube(2.0);
        assert!(edge_report(&cube).is_watertight());
        assert_eq!(euler_characteristic(&cube), 2);
        assert!((enclosed_volume(&cube) - 8.0).abs() < 1e-12);
        assert!((surface_area(&cube) - 24.0).abs() < 1e-12);
        assert!((enclosed_volume(&cube.flipped()) + 8.0).abs() < 1e-12);
        let (lo, hi) = bounding_box(&cube).unwrap();
        assert_eq!((lo, hi), (Vector3::new(-1.0, -1.0, -1.0), Vector3::new(1.0, 1.0, 1.0)));
    }

    #[test]
    fn open_and_misoriented_detected() {
        let cube = shapes::cube(1.0);
        let mut tris = cube.triangles().to_vec();
        tris.pop();
        let open = edge_report_of(&tris);
        assert_eq!(open.boundary_edges, 3);
        let mut tris = cube.triangles().to_vec();
        tris[0].swap(1, 2);
        let bad = edge_report_of(&tris);
        assert_eq!(bad.misoriented_edges, 3);
        assert!(!bad.is_watertight());
    }
}
