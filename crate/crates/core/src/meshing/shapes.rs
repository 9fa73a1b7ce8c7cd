//! Closed reference solids centred on the origin.

use std::collections::HashMap;

use nalgebra::Vector3;

use super::SurfaceMesh;

fn build(vertices: Vec<Vector3<f64>>, triangles: Vec<[u32; 3]>) -> SurfaceMesh {
    SurfaceMesh::new(vertices, triangles).expect("reference solid is valid")
}

/// Axis-aligned cube of edge length `size`, 12 triangles.
pub fn cube(size: f64) -> SurfaceMesh {
    let h = size / 2.0;
    let v = (0..8)
        .map(|i| {
            Vector3::new(
                if i & 1 != 0 { h } else { -h },
                if i & 2 != 0 { h } else { -h },
                if i & 4 != 0 { h } else { -h },
            )
        })
        .collect();
    let t = vec![
        [0, 2, 3], [0, 3, 1], // -z
        [4, 5, 7], [4, 7, 6], // +z
        [0, 1, 5], [0, 5, 4], // -y
        [2, 6, 7], [2, 7, 3], // +y
        [0, 4, 6], [0, 6, 2], // -x
        [1, 3, 7], [1, 7, 5], // +x
    ];
    build(v, t)
}

/// Regular tetrahedron with vertices at distance `radius` from the origin.
pub fn tetrahedron(radius: f64) -> SurfaceMesh {
    let s = radius / 3f64.sqrt();
    let v = vec![
        Vector3::new(s, s, s),
        Vector3::new(s, -s, -s),
        Vector3::new(-s, s, -s),
        Vector3::new(-s, -s, s),
    ];
    build(v, vec![[0, 1, 2], [0, 3, 1], [0, 2, 3], [1, 3, 2]])
}

/// Regular octahedron with vertices on the axes at distance `radius`.
pub fn octahedron(radius: f64) -> SurfaceMesh {
    let r = radius;
    let v = vec![
        Vector3::new(r, 0.0, 0.0),
        Vector3::new(-r, 0.0, 0.0),
        Vector3::new(0.0, r, 0.0),
        Vector3::new(0.0, -r, 0.0),
        Vector3::new(0.0, 0.0, r),
        Vector3::new(0.0, 0.0, -r),
    ];
    let t = vec![
        [0, 2, 4], [2, 1, 4], [1, 3, 4], [3, 0, 4],
        [2, 0, 5], [1, 2, 5], [3, 1, 5], [0, 3, 5],
    ];
    build(v, t)
}

/// Subdivided icosahedron projected onto a sphere; `10·4^s + 2` vertices.
pub fn icosphere(subdivisions: u32, radius: f64) -> SurfaceMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vector3<f64>> = [
        [-1.0, phi, 0.0], [1.0, phi, 0.0], [-1.0, -phi, 0.0], [1.0, -phi, 0.0],
        [0.0, -1.0, phi], [0.0, 1.0, phi], [0.0, -1.0, -phi], [0.0, 1.0, -phi],
        [phi, 0.0, -1.0], [phi, 0.0, 1.0], [-phi, 0.0, -1.0], [-phi, 0.0, 1.0],
    ]
    .iter()
    .map(|p| Vector3::new(p[0], p[1], p[2]).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
        [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
        [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
        [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(triangles.len() * 4);
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vector3<f64>>| -> u32 {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = ((vertices[a as usize] + vertices[b as usize]) / 2.0).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        for &[a, b, c] in &triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    build(vertices, triangles)
}
