use nalgebra::Vector3;

use super::{normals::area_weighted, SurfaceMesh};

pub(crate) fn vertex_neighbours(vertex_count: usize, triangles: &[[u32; 3]]) -> Vec<Vec<u32>> {
    let mut nbrs: Vec<Vec<u32>> = vec![Vec::new(); vertex_count];
    for t in triangles {
        for k in 0..3 {
            nbrs[t[k] as usize].push(t[(k + 1) % 3]);
            nbrs[t[k] as usize].push(t[(k + 2) % 3]);
        }
    }
    for n in &mut nbrs {
        n.sort_unstable();
        n.dedup();
    }
    nbrs
}

/// Uniform-weight Laplacian smoothing: each iteration moves every vertex by
/// `lambda · (neighbour centroid − vertex)`. Connectivity is unchanged and
/// normals are recomputed; zero iterations returns the input.
pub fn laplacian_smooth(mesh: &SurfaceMesh, iterations: usize, lambda: f64) -> SurfaceMesh {
    if iterations == 0 {
        return mesh.clone();
    }
    let nbrs = vertex_neighbours(mesh.vertex_count(), mesh.triangles());
    let mut pos = mesh.vertices().to_vec();
    let mut next = pos.clone();
    for _ in 0..iterations {
        for (i, n) in nbrs.iter().enumerate() {
            if n.is_empty() {
                next[i] = pos[i];
                continue;
            }
            let centroid = n.iter().fold(Vector3::zeros(), |acc, &j| acc + pos[j as usize]) / n.len() as f64;
            next[i] = pos[i] + lambda * (centroid - pos[i]);
        }
        std::mem::swap(&mut pos, &mut next);
    }
    let mut out = mesh.clone();
    out.normals = area_weighted(&pos, mesh.triangles()).0;
    out.vertices = pos;
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::shapes;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_iterations_identity() {
        let m = shapes::icosphere(1, 2.0);
        assert_eq!(laplacian_smooth(&m, 0, 0.5), m);
    }

    #[test]
    fn tetrahedron_shrinks_uniformly() {
        let m = shapes::tetrahedron(3.0);
        let out = laplacian_smooth(&m, 1, 0.5);
        // Each vertex moves halfway to the centroid of the other three, which
        // is -p/3, so p -> p/3.
        for (a, b) in m.vertices().iter().zip(out.vertices()) {
            assert!((b - a / 3.0).norm() < 1e-12);
        }
        assert_eq!(out.triangles(), m.triangles());
    }

    #[test]
    fn noisy_sphere_radial_spread_drops() {
        let m = shapes::icosphere(3, 10.0);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let noisy: Vec<_> = m
            .vertices()
            .iter()
            .map(|p| {
                // Box-Muller, sigma = 0.1 r
                let (u1, u2): (f64, f64) = (rng.gen::<f64>().max(1e-12), rng.gen());
                let g = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
                p * (1.0 + 0.1 * g)
            })
            .collect();
        let noisy = SurfaceMesh::new(noisy, m.triangles().to_vec()).unwrap();
        let spread = |mesh: &SurfaceMesh| {
            let r: Vec<f64> = mesh.vertices().iter().map(|p| p.norm()).collect();
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            (r.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r.len() as f64).sqrt()
        };
        let smoothed = laplacian_smooth(&noisy, 10, 0.5);
        assert!(spread(&smoothed) < spread(&noisy));
    }

    fn shuffled(n: usize, seed: u64) -> Vec<u32> {
        use rand::seq::SliceRandom;
        let mut perm: Vec<u32> = (0..n as u32).collect();
        perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        perm
    }

    fn close(a: &SurfaceMesh, b: &SurfaceMesh) -> bool {
        a.triangles() == b.triangles()
            && a.vertices().iter().zip(b.vertices()).all(|(p, q)| (p - q).norm() < 1e-9)
            && a.normals().iter().zip(b.normals()).all(|(p, q)| (p - q).norm() < 1e-9)
    }

    proptest::proptest! {
        #[test]
        fn smoothing_and_normals_commute_with_relabeling(seed in 0u64..1000, iterations in 0usize..4) {
            let m = shapes::icosphere(2, 5.0);
            let perm = shuffled(m.vertex_count(), seed);
            let a = laplacian_smooth(&m.permuted(&perm), iterations, 0.3);
            let b = laplacian_smooth(&m, iterations, 0.3).permuted(&perm);
            proptest::prop_assert!(close(&a, &b));
            let na = crate::meshing::compute_vertex_normals(&m.permuted(&perm)).mesh;
            let nb = crate::meshing::compute_vertex_normals(&m).mesh.permuted(&perm);
            proptest::prop_assert!(close(&na, &nb));
        }
    }
}
