use std::borrow::Cow;

use gltf::binary::{Glb, Header};
use serde_json::json;

use super::{DecodedMesh, SceneError};
use crate::meshing::SurfaceMesh;

const ARRAY_BUFFER: u32 = 34962;
const ELEMENT_ARRAY_BUFFER: u32 = 34963;
const FLOAT: u32 = 5126;
const UNSIGNED_INT: u32 = 5125;
const TRIANGLES: u32 = 4;

fn push_vec3s(bin: &mut Vec<u8>, values: &[nalgebra::Vector3<f64>]) -> ([f32; 3], [f32; 3]) {
    let mut lo = [f32::INFINITY; 3];
    let mut hi = [f32::NEG_INFINITY; 3];
    for v in values {
        for k in 0..3 {
            let x = v[k] as f32;
            lo[k] = lo[k].min(x);
            hi[k] = hi[k].max(x);
            bin.extend_from_slice(&x.to_le_bytes());
        }
    }
    (lo, hi)
}

/// Single-buffer binary glTF 2.0: one node, one mesh, one indexed triangle
/// primitive with float32 POSITION and NORMAL. An empty mesh yields a scene
/// with no nodes, since accessors may not be empty.
pub(crate) fn encode(mesh: &SurfaceMesh) -> Vec<u8> {
    let name = mesh.layer_name();
    let asset = json!({ "version": "2.0", "generator": concat!("cranioforge ", env!("CARGO_PKG_VERSION")) });
    let (document, bin) = if mesh.is_empty() {
        (json!({ "asset": asset, "scene": 0, "scenes": [{ "nodes": [] }] }), None)
    } else {
        let n = mesh.vertex_count();
        let mut bin = Vec::with_capacity(24 * n + 12 * mesh.triangle_count());
        let (lo, hi) = push_vec3s(&mut bin, mesh.vertices());
        push_vec3s(&mut bin, mesh.normals());
        let index_offset = bin.len();
        for t in mesh.triangles() {
            for &i in t {
                bin.extend_from_slice(&i.to_le_bytes());
            }
        }
        let index_len = bin.len() - index_offset;
        let document = json!({
            "asset": asset,
            "scene": 0,
            "scenes": [{ "nodes": [0] }],
            "nodes": [{ "mesh": 0, "name": name }],
            "meshes": [{
                "name": name,
                "primitives": [{
                    "attributes": { "POSITION": 0, "NORMAL": 1 },
                    "indices": 2,
                    "mode": TRIANGLES,
                }],
            }],
            "buffers": [{ "byteLength": bin.len() }],
            "bufferViews": [
                { "buffer": 0, "byteOffset": 0, "byteLength": 12 * n, "target": ARRAY_BUFFER },
                { "buffer": 0, "byteOffset": 12 * n, "byteLength": 12 * n, "target": ARRAY_BUFFER },
                { "buffer": 0, "byteOffset": index_offset, "byteLength": index_len, "target": ELEMENT_ARRAY_BUFFER },
            ],
            "accessors": [
                { "bufferView": 0, "componentType": FLOAT, "count": n, "type": "VEC3", "min": lo, "max": hi },
                { "bufferView": 1, "componentType": FLOAT, "count": n, "type": "VEC3" },
                { "bufferView": 2, "componentType": UNSIGNED_INT, "count": 3 * mesh.triangle_count(), "type": "SCALAR" },
            ],
        });
        (document, Some(bin))
    };
    let json = serde_json::to_vec(&document).expect("json values serialize");
    let glb = Glb {
        header: Header {
            magic: *b"glTF",
            version: 2,
            // Recomputed with padding by the writer.
            length: 0,
        },
        json: Cow::Owned(json),
        bin: bin.map(Cow::Owned),
    };
    glb.to_vec().expect("in-memory glb write")
}

/// Decodes every triangle primitive of a binary glTF into one mesh.
pub fn decode_glb(bytes: &[u8]) -> Result<DecodedMesh, SceneError> {
    let malformed = |e: gltf::Error| SceneError::Malformed(format!("glb: {e}"));
    let gltf = gltf::Gltf::from_slice(bytes).map_err(malformed)?;
    let blob = gltf.blob.as_deref();
    let mut out = DecodedMesh::default();
    for mesh in gltf.meshes() {
        for primitive in mesh.primitives() {
            if primitive.mode() != gltf::mesh::Mode::Triangles {
                return Err(SceneError::Malformed("glb: only triangle primitives are supported".into()));
            }
            let reader = primitive.reader(|buffer| match buffer.source() {
                gltf::buffer::Source::Bin => blob,
                gltf::buffer::Source::Uri(_) => None,
            });
            let base = out.positions.len() as u32;
            let positions: Vec<[f32; 3]> = reader
                .read_positions()
                .ok_or_else(|| SceneError::Malformed("glb: primitive without POSITION".into()))?
                .collect();
            let normals: Vec<[f32; 3]> = reader
                .read_normals()
                .ok_or_else(|| SceneError::Malformed("glb: primitive without NORMAL".into()))?
                .collect();
            let indices: Vec<u32> = match reader.read_indices() {
                Some(ix) => ix.into_u32().collect(),
                None => (0..positions.len() as u32).collect(),
            };
            if !indices.len().is_multiple_of(3) {
                return Err(SceneError::Malformed("glb: index count is not a multiple of 3".into()));
            }
            out.positions.extend(positions);
            out.normals.extend(normals);
            out.triangles
                .extend(indices.chunks_exact(3).map(|c| [c[0] + base, c[1] + base, c[2] + base]));
        }
    }
    out.check()?;
    Ok(out)
}
