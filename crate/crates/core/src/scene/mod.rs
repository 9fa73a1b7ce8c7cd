//! Layered scene export: one mesh file per layer plus a JSON manifest.
//!
//! A scene is a self-contained directory:
//!
//! ```text
//! scene/
//!   manifest.json
//!   meshes/00_skull.glb
//!   meshes/01_vessels.glb
//! ```
//!
//! Mesh URIs in the manifest are relative to the directory holding it. Colors
//! live only in the manifest so a viewer can restyle layers without re-export.

mod glb;
mod obj;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Component, Path};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use glb::decode_glb;
pub use obj::decode_obj;

use crate::meshing::SurfaceMesh;

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const MESH_DIR: &str = "meshes";

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("unsupported mesh format {0:?} (expected \"obj\" or \"gltf_binary\")")]
    UnsupportedFormat(String),
    #[error("duplicate layer name {name:?} at positions {first} and {second}")]
    DuplicateLayer { name: String, first: usize, second: usize },
    #[error("layer {0} has an empty name")]
    EmptyLayerName(usize),
    #[error("layer {name:?}: color component {component} is {value}, expected a value in [0, 1]")]
    InvalidColor { name: String, component: usize, value: f64 },
    #[error("malformed mesh file: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MeshFormat {
    Obj,
    #[default]
    GltfBinary,
}

impl MeshFormat {
    pub fn extension(self) -> &'static str {
        match self {
            Self::Obj => "obj",
            Self::GltfBinary => "glb",
        }
    }
}

impl FromStr for MeshFormat {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "obj" => Ok(Self::Obj),
            "gltf_binary" | "glb" => Ok(Self::GltfBinary),
            _ => Err(SceneError::UnsupportedFormat(s.to_string())),
        }
    }
}

pub fn export_mesh(mesh: &SurfaceMesh, format: MeshFormat) -> Vec<u8> {
    match format {
        MeshFormat::Obj => obj::encode(mesh),
        MeshFormat::GltfBinary => glb::encode(mesh),
    }
}

/// Mesh arrays as stored in a file, at float32 precision.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecodedMesh {
    pub positions: Vec<[f32; 3]>,
    pub normals: Vec<[f32; 3]>,
    pub triangles: Vec<[u32; 3]>,
}

impl DecodedMesh {
    /// The arrays `mesh` is expected to decode to.
    pub fn from_mesh(mesh: &SurfaceMesh) -> Self {
        let f = |v: &nalgebra::Vector3<f64>| [v.x as f32, v.y as f32, v.z as f32];
        Self {
            positions: mesh.vertices().iter().map(f).collect(),
            normals: mesh.normals().iter().map(f).collect(),
            triangles: mesh.triangles().to_vec(),
        }
    }

    fn check(&self) -> Result<(), SceneError> {
        if self.normals.len() != self.positions.len() {
            return Err(SceneError::Malformed(format!(
                "{} normals for {} positions",
                self.normals.len(),
                self.positions.len()
            )));
        }
        let n = self.positions.len() as u32;
        if let Some(t) = self.triangles.iter().position(|t| t.iter().any(|&i| i >= n)) {
            return Err(SceneError::Malformed(format!("triangle {t} indexes past {n} vertices")));
        }
        Ok(())
    }
}

/// Decodes by file extension (`.obj` or `.glb`).
pub fn decode_mesh_file(path: &Path) -> Result<DecodedMesh, SceneError> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or_default();
    let format: MeshFormat = ext.parse()?;
    let bytes = std::fs::read(path)?;
    match format {
        MeshFormat::Obj => decode_obj(&bytes),
        MeshFormat::GltfBinary => decode_glb(&bytes),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerEntry {
    pub name: String,
    pub mesh_uri: String,
    /// Linear RGBA in [0, 1].
    pub color: [f64; 4],
    pub visible_default: bool,
    pub vertex_count: usize,
    pub triangle_count: usize,
    pub category: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub version: u32,
    pub scene_name: String,
    pub units: String,
    pub layers: Vec<LayerEntry>,
    pub provenance: BTreeMap<String, String>,
}

impl SceneManifest {
    /// Pretty JSON with a trailing newline. Key order is fixed by the struct
    /// definitions and the sorted provenance map.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }
}

/// One layer to export. The layer name is taken from the mesh.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneLayer {
    pub mesh: SurfaceMesh,
    pub color: [f64; 4],
    pub category: String,
    pub visible_default: bool,
}

fn slug(name: &str) -> String {
    let mut out = String::with_capacity(name.len());
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    let trimmed = out.trim_matches('_');
    if trimmed.is_empty() {
        "layer".to_string()
    } else {
        trimmed.to_string()
    }
}

/// Fills a manifest from `layers` in input order. URIs are
/// `meshes/NN_<slug>.<ext>`; the index prefix keeps them unique even when two
/// names share a slug.
pub fn build_manifest(layers: &[SceneLayer], scene_name: &str, format: MeshFormat) -> Result<SceneManifest, SceneError> {
    let mut seen: HashMap<&str, usize> = HashMap::new();
    let mut entries = Vec::with_capacity(layers.len());
    for (i, layer) in layers.iter().enumerate() {
        let name = layer.mesh.layer_name();
        if name.is_empty() {
            return Err(SceneError::EmptyLayerName(i));
        }
        if let Some(&first) = seen.get(name) {
            return Err(SceneError::DuplicateLayer {
                name: name.to_string(),
                first,
                second: i,
            });
        }
        seen.insert(name, i);
        if let Some((component, &value)) = layer.color.iter().enumerate().find(|(_, c)| !(0.0..=1.0).contains(*c)) {
            return Err(SceneError::InvalidColor {
                name: name.to_string(),
                component,
                value,
            });
        }
        entries.push(LayerEntry {
            name: name.to_string(),
            mesh_uri: format!("{MESH_DIR}/{i:02}_{}.{}", slug(name), format.extension()),
            color: layer.color,
            visible_default: layer.visible_default,
            vertex_count: layer.mesh.vertex_count(),
            triangle_count: layer.mesh.triangle_count(),
            category: layer.category.clone(),
        });
    }
    Ok(SceneManifest {
        version: MANIFEST_VERSION,
        scene_name: scene_name.to_string(),
        units: "mm".to_string(),
        layers: entries,
        provenance: BTreeMap::new(),
    })
}

/// Writes every layer's mesh file and then `manifest.json` under `dir`.
/// `manifest` must come from [`build_manifest`] over the same layers.
pub fn write_scene(dir: &Path, manifest: &SceneManifest, layers: &[SceneLayer], format: MeshFormat) -> Result<(), SceneError> {
    assert_eq!(manifest.layers.len(), layers.len(), "manifest and layers disagree");
    std::fs::create_dir_all(dir.join(MESH_DIR))?;
    for (entry, layer) in manifest.layers.iter().zip(layers) {
        std::fs::write(dir.join(&entry.mesh_uri), export_mesh(&layer.mesh, format))?;
    }
    std::fs::write(dir.join(MANIFEST_FILE), manifest.to_json())?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Schema(String),
    UnsupportedVersion(u32),
    Units(String),
    EmptyName { layer: usize },
    DuplicateName { name: String, first: usize, second: usize },
    InvalidUri { layer: String, uri: String },
    MissingFile { layer: String, uri: String },
    UnreadableMesh { layer: String, reason: String },
    CountMismatch { layer: String, field: &'static str, declared: usize, actual: usize },
    InvalidColor { layer: String, component: usize, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Schema(e) => write!(f, "schema: {e}"),
            Self::UnsupportedVersion(v) => write!(f, "unsupported manifest version {v}"),
            Self::Units(u) => write!(f, "units must be \"mm\", got {u:?}"),
            Self::EmptyName { layer } => write!(f, "layer {layer} has an empty name"),
            Self::DuplicateName { name, first, second } => {
                write!(f, "layer name {name:?} used at positions {first} and {second}")
            }
            Self::InvalidUri { layer, uri } => write!(f, "layer {layer:?}: mesh_uri {uri:?} must be a relative path inside the scene"),
            Self::MissingFile { layer, uri } => write!(f, "layer {layer:?}: mesh file {uri:?} does not exist"),
            Self::UnreadableMesh { layer, reason } => write!(f, "layer {layer:?}: {reason}"),
            Self::CountMismatch { layer, field, declared, actual } => {
                write!(f, "layer {layer:?}: {field} is {declared} but the file holds {actual}")
            }
            Self::InvalidColor { layer, component, value } => {
                write!(f, "layer {layer:?}: color component {component} = {value} outside [0, 1]")
            }
        }
    }
}

fn uri_is_contained(uri: &str) -> bool {
    if uri.is_empty() || uri.contains('\\') || uri.contains(':') {
        return false;
    }
    Path::new(uri).components().all(|c| matches!(c, Component::Normal(_)))
}

/// Checks a manifest document against the scene directory holding its mesh files.
pub fn validate_manifest(document: &[u8], dir: &Path) -> Vec<Violation> {
    let manifest: SceneManifest = match serde_json::from_slice(document) {
        Ok(m) => m,
        Err(e) => return vec![Violation::Schema(e.to_string())],
    };
    let mut out = Vec::new();
    if manifest.version != MANIFEST_VERSION {
        out.push(Violation::UnsupportedVersion(manifest.version));
    }
    if manifest.units != "mm" {
        out.push(Violation::Units(manifest.units.clone()));
    }
    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, layer) in manifest.layers.iter().enumerate() {
        if layer.name.is_empty() {
            out.push(Violation::EmptyName { layer: i });
        } else if let Some(&first) = seen.get(layer.name.as_str()) {
            out.push(Violation::DuplicateName {
                name: layer.name.clone(),
                first,
                second: i,
            });
        } else {
            seen.insert(&layer.name, i);
        }
        for (component, &value) in layer.color.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                out.push(Violation::InvalidColor {
                    layer: layer.name.clone(),
                    component,
                    value,
                });
            }
        }
        if !uri_is_contained(&layer.mesh_uri) {
            out.push(Violation::InvalidUri {
                layer: layer.name.clone(),
                uri: layer.mesh_uri.clone(),
            });
            continue;
        }
        let path = dir.join(&layer.mesh_uri);
        if !path.is_file() {
            out.push(Violation::MissingFile {
                layer: layer.name.clone(),
                uri: layer.mesh_uri.clone(),
            });
            continue;
        }
        match decode_mesh_file(&path) {
            Err(e) => out.push(Violation::UnreadableMesh {
                layer: layer.name.clone(),
                reason: e.to_string(),
            }),
            Ok(mesh) => {
                for (field, declared, actual) in [
                    ("vertex_count", layer.vertex_count, mesh.positions.len()),
                    ("triangle_count", layer.triangle_count, mesh.triangles.len()),
                ] {
                    if declared != actual {
                        out.push(Violation::CountMismatch {
                            layer: layer.name.clone(),
                            field,
                            declared,
                            actual,
                        });
                    }
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshing::shapes;
    use nalgebra::Vector3;

    fn triangle() -> SurfaceMesh {
        SurfaceMesh::new(
            vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0), Vector3::new(0.0, 1.0, 0.0)],
            vec![[0, 1, 2]],
        )
        .unwrap()
        .with_layer_name("tri")
    }

    fn layer(name: &str, mesh: SurfaceMesh) -> SceneLayer {
        SceneLayer {
            mesh: mesh.with_layer_name(name),
            color: [0.8, 0.2, 0.2, 1.0],
            category: "test".into(),
            visible_default: true,
        }
    }

    #[test]
    fn obj_single_triangle_records() {
        let text = String::from_utf8(export_mesh(&triangle(), MeshFormat::Obj)).unwrap();
        let count = |tag: &str| text.lines().filter(|l| l.split_whitespace().next() == Some(tag)).count();
        assert_eq!((count("v"), count("vn"), count("f")), (3, 3, 1));
        assert!(text.contains("f 1//1 2//2 3//3"));
    }

    #[test]
    fn glb_header() {
        let bytes = export_mesh(&triangle(), MeshFormat::GltfBinary);
        assert_eq!(&bytes[..4], b"glTF");
        assert_eq!(u32::from_le_bytes(bytes[4..8].try_into().unwrap()), 2);
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize, bytes.len());
        assert_eq!(bytes.len() % 4, 0);
    }

    #[test]
    fn round_trips_match_float32() {
        let mesh = shapes::icosphere(2, 7.3).with_layer_name("ball");
        let expected = DecodedMesh::from_mesh(&mesh);
        let obj = decode_obj(&export_mesh(&mesh, MeshFormat::Obj)).unwrap();
        let glb = decode_glb(&export_mesh(&mesh, MeshFormat::GltfBinary)).unwrap();
        assert_eq!(obj, expected);
        assert_eq!(glb, expected);
    }

    #[test]
    fn empty_mesh_exports() {
        for format in [MeshFormat::Obj, MeshFormat::GltfBinary] {
            let bytes = export_mesh(&SurfaceMesh::empty(), format);
            let decoded = match format {
                MeshFormat::Obj => decode_obj(&bytes),
                MeshFormat::GltfBinary => decode_glb(&bytes),
            };
            assert_eq!(decoded.unwrap(), DecodedMesh::default());
        }
    }

    #[test]
    fn format_tags() {
        assert_eq!("obj".parse::<MeshFormat>().unwrap(), MeshFormat::Obj);
        assert_eq!("gltf_binary".parse::<MeshFormat>().unwrap(), MeshFormat::GltfBinary);
        assert!(matches!("stl".parse::<MeshFormat>(), Err(SceneError::UnsupportedFormat(_))));
    }

    #[test]
    fn manifest_building() {
        let empty = build_manifest(&[], "none", MeshFormat::GltfBinary).unwrap();
        assert!(empty.layers.is_empty());
        assert_eq!((empty.version, empty.units.as_str()), (1, "mm"));

        let layers = vec![
            layer("Skull", shapes::cube(1.0)),
            layer("Vessels", shapes::octahedron(1.0)),
            layer("Tumor", shapes::tetrahedron(1.0)),
        ];
        let m = build_manifest(&layers, "p1", MeshFormat::Obj).unwrap();
        let names: Vec<_> = m.layers.iter().map(|l| l.name.as_str()).collect();
        assert_eq!(names, ["Skull", "Vessels", "Tumor"]);
        assert_eq!(m.layers[1].mesh_uri, "meshes/01_vessels.obj");
        assert_eq!((m.layers[0].vertex_count, m.layers[0].triangle_count), (8, 12));

        let dup = vec![layer("a", shapes::cube(1.0)), layer("b", shapes::cube(1.0)), layer("a", shapes::cube(1.0))];
        match build_manifest(&dup, "x", MeshFormat::Obj) {
            Err(SceneError::DuplicateLayer { name, first, second }) => assert_eq!((name.as_str(), first, second), ("a", 0, 2)),
            other => panic!("{other:?}"),
        }
        let mut bad = layer("c", shapes::cube(1.0));
        bad.color[3] = 1.5;
        assert!(matches!(build_manifest(&[bad], "x", MeshFormat::Obj), Err(SceneError::InvalidColor { component: 3, .. })));
    }

    #[test]
    fn slugs() {
        assert_eq!(slug("Left ICA / M1"), "left_ica_m1");
        assert_eq!(slug("***"), "layer");
    }

    #[test]
    fn uri_containment() {
        assert!(uri_is_contained("meshes/00_a.glb"));
        for bad in ["", "/etc/passwd", "../x.obj", "meshes/../../x.obj", "C:\\x.obj", "./x.obj"] {
            assert!(!uri_is_contained(bad), "{bad}");
        }
    }

    #[test]
    fn build_write_validate_clean_and_tampering() {
        for format in [MeshFormat::Obj, MeshFormat::GltfBinary] {
            let dir = tempfile::tempdir().unwrap();
            let layers = vec![layer("one", shapes::icosphere(1, 2.0)), layer("two", shapes::cube(3.0))];
            let m = build_manifest(&layers, "scene", format).unwrap();
            write_scene(dir.path(), &m, &layers, format).unwrap();
            let doc = std::fs::read(dir.path().join(MANIFEST_FILE)).unwrap();
            assert_eq!(validate_manifest(&doc, dir.path()), vec![]);

            // Counts in the manifest match the decoded files.
            for entry in &m.layers {
                let decoded = decode_mesh_file(&dir.path().join(&entry.mesh_uri)).unwrap();
                assert_eq!(decoded.positions.len(), entry.vertex_count);
                assert_eq!(decoded.triangles.len(), entry.triangle_count);
            }

            let mut tampered = m.clone();
            tampered.layers[0].vertex_count += 1;
            let v = validate_manifest(tampered.to_json().as_bytes(), dir.path());
            assert_eq!(v.len(), 1);
            assert!(matches!(v[0], Violation::CountMismatch { field: "vertex_count", .. }));

            std::fs::remove_file(dir.path().join(&m.layers[1].mesh_uri)).unwrap();
            let v = validate_manifest(&doc, dir.path());
            assert_eq!(v.len(), 1);
            assert!(matches!(v[0], Violation::MissingFile { .. }));
        }
    }

    #[test]
    fn schema_violations() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(validate_manifest(b"{", dir.path())[..], [Violation::Schema(_)]));
        let doc = br#"{"version":2,"scene_name":"s","units":"cm","layers":[
            {"name":"a","mesh_uri":"../a.obj","color":[0,0,0,1],"visible_default":true,"vertex_count":0,"triangle_count":0,"category":""},
            {"name":"a","mesh_uri":"meshes/a.obj","color":[0,0,2,1],"visible_default":true,"vertex_count":0,"triangle_count":0,"category":""}
        ],"provenance":{}}"#;
        let v = validate_manifest(doc, dir.path());
        assert!(v.contains(&Violation::UnsupportedVersion(2)));
        assert!(v.contains(&Violation::Units("cm".into())));
        assert!(v.iter().any(|x| matches!(x, Violation::DuplicateName { first: 0, second: 1, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::InvalidUri { .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::InvalidColor { component: 2, .. })));
        assert!(v.iter().any(|x| matches!(x, Violation::MissingFile { .. })));
        let extra = br#"{"version":1,"scene_name":"s","units":"mm","layers":[],"provenance":{},"extra":1}"#;
        assert!(matches!(validate_manifest(extra, dir.path())[..], [Violation::Schema(_)]));
    }
}
