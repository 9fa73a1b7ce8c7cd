//! Quadric error metric edge collapse.
//!
//! Each vertex accumulates the squared-distance quadrics of its incident face
//! planes. Edges are collapsed cheapest first to the position minimising the
//! summed quadric. A collapse is refused when it would make the surface
//! non-manifold (link condition), turn any surviving face by more than 90
//! degrees, or leave a zero-area face.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};

use super::{edge_report, normals::area_weighted, MeshError, SurfaceMesh};

/// Identifier recorded in scene provenance.
pub const DECIMATION_METHOD: &str = "quadric-edge-collapse";

#[derive(Debug, Clone, PartialEq)]
pub struct Decimation {
    pub mesh: SurfaceMesh,
    /// False when no further collapse was legal before reaching the target.
    pub reached_target: bool,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    u: u32,
    v: u32,
    stamp: (u32, u32),
    position: Vector3<f64>,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    // Reversed so the max-heap pops the cheapest edge; ties go to lower indices.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| (other.u, other.v).cmp(&(self.u, self.v)))
    }
}

struct State {
    pos: Vec<Vector3<f64>>,
    quadric: Vec<Matrix4<f64>>,
    faces: Vec<[u32; 3]>,
    face_alive: Vec<bool>,
    incident: Vec<Vec<u32>>,
    vertex_alive: Vec<bool>,
    version: Vec<u32>,
}

fn plane_quadric(a: &Vector3<f64>, b: &Vector3<f64>, c: &Vector3<f64>) -> Matrix4<f64> {
    let n = (b - a).cross(&(c - a));
    let len = n.norm();
    if len == 0.0 {
        return Matrix4::zeros();
    }
    let n = n / len;
    let p = Vector4::new(n.x, n.y, n.z, -n.dot(a));
    p * p.transpose()
}

fn quadric_cost(q: &Matrix4<f64>, p: &Vector3<f64>) -> f64 {
    let h = Vector4::new(p.x, p.y, p.z, 1.0);
    (h.transpose() * q * h)[0].max(0.0)
}

impl State {
    fn neighbours(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self.incident[v as usize]
            .iter()
            .flat_map(|&f| self.faces[f as usize])
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn candidate(&self, u: u32, v: u32) -> Candidate {
        let (u, v) = (u.min(v), u.max(v));
        let q = self.quadric[u as usize] + self.quadric[v as usize];
        let (pu, pv) = (self.pos[u as usize], self.pos[v as usize]);
        let a: Matrix3<f64> = q.fixed_view::<3, 3>(0, 0).into_owned();
        let b = -q.fixed_view::<3, 1>(0, 3).into_owned();
        let mut options = vec![pu, pv, (pu + pv) / 2.0];
        // Accept the optimum only when the system is well conditioned enough
        // that it stays near the edge.
        if let Some(inv) = a.try_inverse() {
            let opt = inv * b;
            let scale = (pu - pv).norm().max(1e-12);
            if opt.iter().all(|x| x.is_finite()) && (opt - (pu + pv) / 2.0).norm() <= 2.0 * scale {
                options.insert(0, opt);
            }
        }
        let (position, cost) = options
            .into_iter()
            .map(|p| (p, quadric_cost(&q, &p)))
            .min_by(|x, y| x.1.total_cmp(&y.1))
            .expect("non-empty");
        Candidate {
            cost,
            u,
            v,
            stamp: (self.version[u as usize], self.version[v as usize]),
            position,
        }
    }

    /// Whether collapsing `v` into `u` at `p` keeps a valid closed 2-manifold.
    fn collapse_is_legal(&self, u: u32, v: u32, p: &Vector3<f64>) -> bool {
        let nu = self.neighbours(u);
        let nv = self.neighbours(v);
        let shared = nu.iter().filter(|w| nv.binary_search(w).is_ok()).count();
        if shared != 2 {
            return false;
        }
        for &moving in &[u, v] {
            for &f in &self.incident[moving as usize] {
                let tri = self.faces[f as usize];
                if tri.contains(&u) && tri.contains(&v) {
                    continue;
                }
                let corners = tri.map(|i| self.pos[i as usize]);
                let moved = tri.map(|i| if i == u || i == v { *p } else { self.pos[i as usize] });
                let before = (corners[1] - corners[0]).cross(&(corners[2] - corners[0]));
                let after = (moved[1] - moved[0]).cross(&(moved[2] - moved[0]));
                let scale = before.norm();
                if after.norm() <= 1e-12 * scale.max(f64::MIN_POSITIVE) || before.dot(&after) <= 0.0 {
                    return false;
                }
            }
        }
        true
    }

    fn collapse(&mut self, u: u32, v: u32, p: Vector3<f64>) {
        self.pos[u as usize] = p;
        let qv = self.quadric[v as usize];
        self.quadric[u as usize] += qv;
        let v_faces = std::mem::take(&mut self.incident[v as usize]);
        for f in v_faces {
            let tri = self.faces[f as usize];
            if tri.contains(&u) {
                self.face_alive[f as usize] = false;
                for w in tri {
                    if w != v {
                        self.incident[w as usize].retain(|&g| g != f);
                    }
                }
            } else {
                self.faces[f as usize] = tri.map(|w| if w == v { u } else { w });
                self.incident[u as usize].push(f);
            }
        }
        self.vertex_alive[v as usize] = false;
        self.version[u as usize] += 1;
        self.version[v as usize] += 1;
    }
}

/// Collapses edges until at most `target_vertices` remain or no legal collapse is left.
pub fn decimate(mesh: &SurfaceMesh, target_vertices: usize) -> Result<Decimation, MeshError> {
    if target_vertices < 4 {
        return Err(MeshError::TargetTooSmall(target_vertices));
    }
    if mesh.two_sided() {
        return Err(MeshError::AlreadyTwoSided);
    }
    let report = edge_report(mesh);
    if !report.is_watertight() {
        return Err(MeshError::NotWatertight(format!("{report:?}")));
    }
    if mesh.vertex_count() <= target_vertices {
        return Ok(Decimation {
            mesh: mesh.clone(),
            reached_target: true,
        });
    }

    let n = mesh.vertex_count();
    let mut state = State {
        pos: mesh.vertices().to_vec(),
        quadric: vec![Matrix4::zeros(); n],
        faces: mesh.triangles().to_vec(),
        face_alive: vec![true; mesh.triangle_count()],
        incident: vec![Vec::new(); n],
        vertex_alive: vec![true; n],
        version: vec![0; n],
    };
    for (f, tri) in mesh.triangles().iter().enumerate() {
        let q = plane_quadric(&state.pos[tri[0] as usize], &state.pos[tri[1] as usize], &state.pos[tri[2] as usize]);
        for &w in tri {
            state.quadric[w as usize] += q;
            state.incident[w as usize].push(f as u32);
        }
    }

    let mut heap = BinaryHeap::new();
    for tri in mesh.triangles() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            // Each undirected edge appears once in each direction; keep one.
            if a < b {
                heap.push(state.candidate(a, b));
            }
        }
    }

    let mut alive = n;
    while alive > target_vertices {
        let Some(c) = heap.pop() else { break };
        let (u, v) = (c.u as usize, c.v as usize);
        if !state.vertex_alive[u] || !state.vertex_alive[v] || c.stamp != (state.version[u], state.version[v]) {
            continue;
        }
        if !state.collapse_is_legal(c.u, c.v, &c.position) {
            continue;
        }
        state.collapse(c.u, c.v, c.position);
        alive -= 1;
        for w in state.neighbours(c.u) {
            heap.push(state.candidate(c.u, w));
        }
    }

    let mut remap = vec![u32::MAX; n];
    let mut vertices = Vec::with_capacity(alive);
    for (i, keep) in state.vertex_alive.iter().enumerate() {
        if *keep {
            remap[i] = vertices.len() as u32;
            vertices.push(state.pos[i]);
        }
    }
    let triangles: Vec<[u32; 3]> = state
        .faces
        .iter()
        .zip(&state.face_alive)
        .filter(|(_, a)| **a)
        .map(|(t, _)| t.map(|w| remap[w as usize]))
        .collect();
    let normals = area_weighted(&vertices, &triangles).0;
    let out = SurfaceMesh::from_parts(vertices, triangles, normals, false)?.with_layer_name(mesh.layer_name());
    Ok(Decimation {
        reached_target: out.vertex_count() <= target_vertices,
        mesh: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::{enclosed_volume, euler_characteristic, shapes};

    #[test]
    fn rejects_small_targets_and_open_meshes() {
        let m = shapes::icosphere(1, 1.0);
        assert_eq!(decimate(&m, 3), Err(MeshError::TargetTooSmall(3)));
        let mut tris = m.triangles().to_vec();
        tris.pop();
        let open = SurfaceMesh::new(m.vertices().to_vec(), tris).unwrap();
        assert!(matches!(decimate(&open, 10), Err(MeshError::NotWatertight(_))));
    }

    #[test]
    fn target_above_count_is_identity() {
        let m = shapes::icosphere(1, 1.0);
        let out = decimate(&m, 1000).unwrap();
        assert!(out.reached_target);
        assert_eq!(out.mesh, m);
    }

    #[test]
    fn icosphere_2562_to_162() {
        let m = shapes::icosphere(4, 10.0);
        let v0 = enclosed_volume(&m);
        let out = decimate(&m, 162).unwrap();
        assert!(out.reached_target);
        assert!(out.mesh.vertex_count() <= 162);
        assert!(edge_report(&out.mesh).is_watertight());
        assert_eq!(euler_characteristic(&out.mesh), 2);
        let v1 = enclosed_volume(&out.mesh);
        assert!((v1 - v0).abs() / v0 < 0.10, "{v0} -> {v1}");
    }

    #[test]
    fn tetrahedron_cannot_shrink() {
        let m = shapes::tetrahedron(1.0);
        let out = decimate(&m, 4).unwrap();
        assert!(out.reached_target);
        let oct = shapes::octahedron(1.0);
        let out = decimate(&oct, 4).unwrap();
        assert!(edge_report(&out.mesh).is_watertight());
        assert!(out.mesh.vertex_count() >= 4);
    }
}
