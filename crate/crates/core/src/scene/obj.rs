use std::fmt::Write;

use super::{DecodedMesh, SceneError};
use crate::meshing::SurfaceMesh;

/// Wavefront OBJ with `v`, `vn` and `f a//a b//b c//c` records. Coordinates are
/// written as float32 so both export formats carry identical geometry.
pub(crate) fn encode(mesh: &SurfaceMesh) -> Vec<u8> {
    let mut out = String::with_capacity(64 * mesh.vertex_count() + 32 * mesh.triangle_count());
    if !mesh.layer_name().is_empty() {
        let _ = writeln!(out, "o {}", mesh.layer_name());
    }
    for v in mesh.vertices() {
        let _ = writeln!(out, "v {} {} {}", v.x as f32, v.y as f32, v.z as f32);
    }
    for n in mesh.normals() {
        let _ = writeln!(out, "vn {} {} {}", n.x as f32, n.y as f32, n.z as f32);
    }
    for t in mesh.triangles() {
        let [a, b, c] = t.map(|i| i + 1);
        let _ = writeln!(out, "f {a}//{a} {b}//{b} {c}//{c}");
    }
    out.into_bytes()
}

fn floats(line: usize, parts: &mut std::str::SplitWhitespace<'_>) -> Result<[f32; 3], SceneError> {
    let mut xyz = [0f32; 3];
    for x in &mut xyz {
        *x = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| SceneError::Malformed(format!("obj line {line}: expected three numbers")))?;
    }
    Ok(xyz)
}

/// Reads triangle OBJ files whose face corners reference matching position
/// and normal indices (`a`, `a//a` or `a/t/a`).
pub fn decode_obj(bytes: &[u8]) -> Result<DecodedMesh, SceneError> {
    let text = std::str::from_utf8(bytes).map_err(|e| SceneError::Malformed(format!("obj is not utf-8: {e}")))?;
    let mut mesh = DecodedMesh::default();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("v") => mesh.positions.push(floats(line_no, &mut parts)?),
            Some("vn") => mesh.normals.push(floats(line_no, &mut parts)?),
            Some("f") => {
                let corners: Vec<&str> = parts.collect();
                if corners.len() != 3 {
                    return Err(SceneError::Malformed(format!(
                        "obj line {line_no}: expected a triangle, got {} corners",
                        corners.len()
                    )));
                }
                let mut tri = [0u32; 3];
                for (slot, corner) in tri.iter_mut().zip(corners) {
                    let mut fields = corner.split('/');
                    let parse = |s: Option<&str>| -> Result<Option<u32>, SceneError> {
                        match s {
                            None | Some("") => Ok(None),
                            Some(s) => match s.parse::<u32>() {
                                Ok(k) if k >= 1 => Ok(Some(k - 1)),
                                _ => Err(SceneError::Malformed(format!("obj line {line_no}: bad index {s:?}"))),
                            },
                        }
                    };
                    let v = parse(fields.next())?
                        .ok_or_else(|| SceneError::Malformed(format!("obj line {line_no}: missing vertex index")))?;
                    let _texture = fields.next();
                    if let Some(n) = parse(fields.next())? {
                        if n != v {
                            return Err(SceneError::Malformed(format!(
                                "obj line {line_no}: normal index {} differs from vertex index {}",
                                n + 1,
                                v + 1
                            )));
                        }
                    }
                    *slot = v;
                }
                mesh.triangles.push(tri);
            }
            _ => {}
        }
    }
    mesh.check()?;
    Ok(mesh)
}
