use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::str::FromStr;

use cranioforge::phantom::{blob_volume, three_blobs, write_demo_case};
use cranioforge::volume::write_nifti;
use cranioforge::{Grid, RigidTransform, VoxelVolume};
use nalgebra::Matrix4;

fn cranioforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cranioforge"))
        .args(args)
        .env("CRANIOFORGE_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write(dir: &Path, name: &str, v: &VoxelVolume) -> String {
    let p = dir.join(name);
    std::fs::write(&p, write_nifti(v)).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn info_prints_geometry() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::with_spacing([8, 6, 4], [0.5, 0.5, 1.0]).unwrap();
    let file = write(dir.path(), "t.nii", &VoxelVolume::from_fn(grid, |[x, _, _]| x as f32));
    let out = cranioforge(&["info", &file]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.lines().any(|l| l == "spacing: 0.5 0.5 1.0"), "{text}");
    assert!(text.lines().any(|l| l == "dims: 8 6 4"), "{text}");
    assert!(text.lines().any(|l| l == "intensity range: 0.0 7.0"), "{text}");
}

#[test]
fn info_rejects_bad_files() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::with_spacing([4, 4, 4], [1.0; 3]).unwrap();
    let bytes = write_nifti(&VoxelVolume::from_fn(grid, |_| 1.0));
    let truncated = dir.path().join("cut.nii");
    std::fs::write(&truncated, &bytes[..bytes.len() - 1]).unwrap();
    assert_eq!(cranioforge(&["info", path(&truncated)]).status.code(), Some(2));
    assert_eq!(cranioforge(&["info", path(&dir.path().join("missing.nii"))]).status.code(), Some(2));
    assert_eq!(cranioforge(&["info"]).status.code(), Some(2));
}

#[test]
fn register_self_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::with_spacing([24, 24, 24], [1.0; 3]).unwrap();
    let file = write(dir.path(), "a.nii", &blob_volume(&grid, &three_blobs(&grid), None));
    let out_dir = dir.path().join("out");
    let out = cranioforge(&["register", &file, &file, "--levels", "2", "--output", path(&out_dir)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).lines().any(|l| l.starts_with("score: ")));
    let text = std::fs::read_to_string(out_dir.join("transform.txt")).unwrap();
    assert_eq!(text.split_whitespace().count(), 16);
    let t = RigidTransform::from_str(&text).unwrap();
    assert!(t.is_identity(1e-3), "{text}");
    assert!(out_dir.join("resliced.nii").is_file());
}

#[test]
fn register_recovers_phantom_shift() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::with_spacing([48, 48, 48], [1.0; 3]).unwrap();
    let blobs = three_blobs(&grid);
    let truth = RigidTransform::about_center([0.0, 0.0, 0.0], [2.0, -1.5, 1.0], grid.center());
    let fixed = write(dir.path(), "fixed.nii", &blob_volume(&grid, &blobs, None));
    let moving = write(dir.path(), "moving.nii", &blob_volume(&grid, &blobs, Some(&truth)));
    let out = cranioforge(&["register", &moving, &fixed, "--output", path(dir.path())]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let found = RigidTransform::from_str(&std::fs::read_to_string(dir.path().join("transform.txt")).unwrap()).unwrap();
    let shift = found.matrix().fixed_view::<3, 1>(0, 3).into_owned();
    let expected = truth.matrix().fixed_view::<3, 1>(0, 3).into_owned();
    assert!((shift - expected).norm() < 0.5, "{shift} vs {expected}");
    assert!(found.rotation_angle_deg() < 0.5, "{}", found.rotation_angle_deg());
}

#[test]
fn register_without_overlap_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let grid = Grid::with_spacing([8, 8, 8], [1.0; 3]).unwrap();
    let mut far = Matrix4::identity();
    far[(0, 3)] = 1000.0;
    let far_grid = Grid::new([8, 8, 8], far).unwrap();
    let a = write(dir.path(), "a.nii", &VoxelVolume::from_fn(grid, |[x, y, z]| (x * y + z) as f32));
    let b = write(dir.path(), "b.nii", &VoxelVolume::from_fn(far_grid, |[x, y, z]| (x + y * z) as f32));
    let out = cranioforge(&["register", &a, &b, "--output", path(dir.path())]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let missing = cranioforge(&["register", &a, path(&dir.path().join("nope.nii"))]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn run_demo_case_and_reject_duplicates() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo_case(dir.path()).unwrap();
    let scene = dir.path().join("custom_out");
    let out = cranioforge(&["run", path(&config), "--output", path(&scene)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("step timings:"));
    for step in ["register cta", "grow skull", "mesh tumor", "export"] {
        assert!(text.contains(step), "missing {step}: {text}");
    }
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(scene.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["layers"].as_array().unwrap().len(), 3);
    assert!(!dir.path().join("scene").exists(), "--output overrides output_dir");

    let mut v: serde_json::Value = serde_json::from_slice(&std::fs::read(&config).unwrap()).unwrap();
    v["structures"][2]["name"] = "skull".into();
    v["output_dir"] = "dup_scene".into();
    let dup = dir.path().join("dup.json");
    std::fs::write(&dup, v.to_string()).unwrap();
    let out = cranioforge(&["run", path(&dup)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate layer name"));
    assert!(!dir.path().join("dup_scene").exists(), "no work before config validation");
}

struct Server(Child);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn get(addr: &str, target: &str) -> (u16, String, Vec<u8>) {
    let mut stream = TcpStream::connect(addr).unwrap();
    write!(stream, "GET {target} HTTP/1.0\r\nHost: {addr}\r\n\r\n").unwrap();
    let mut raw = Vec::new();
    stream.read_to_end(&mut raw).unwrap();
    let split = raw.windows(4).position(|w| w == b"\r\n\r\n").expect("header end");
    let head = String::from_utf8_lossy(&raw[..split]).into_owned();
    let status = head.split_whitespace().nth(1).unwrap().parse().unwrap();
    (status, head, raw[split + 4..].to_vec())
}

#[test]
fn serve_scene_files() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_demo_case(dir.path()).unwrap();
    let scene = dir.path().join("scene");
    assert_eq!(cranioforge(&["run", path(&config)]).status.code(), Some(0));

    let mut child = Command::new(env!("CARGO_BIN_EXE_cranioforge"))
        .args(["serve", path(&scene), "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let _server = Server(child);
    let addr = line.split("http://").nth(1).unwrap().split('/').next().unwrap().to_string();

    let (status, head, body) = get(&addr, "/manifest.json");
    assert_eq!(status, 200);
    assert!(head.to_ascii_lowercase().contains("access-control-allow-origin: *"), "{head}");
    assert!(head.to_ascii_lowercase().contains("content-type: application/json"), "{head}");
    assert_eq!(body, std::fs::read(scene.join("manifest.json")).unwrap());

    let manifest: serde_json::Value = serde_json::from_slice(&body).unwrap();
    let uri = manifest["layers"][0]["mesh_uri"].as_str().unwrap();
    let (status, head, body) = get(&addr, &format!("/{uri}"));
    assert_eq!(status, 200);
    assert!(head.to_ascii_lowercase().contains("content-type: model/gltf-binary"), "{head}");
    assert_eq!(body, std::fs::read(scene.join(uri)).unwrap());

    assert_eq!(get(&addr, "/meshes/nothing.glb").0, 404);
    assert_eq!(get(&addr, "/../pipeline.json").0, 404);
    assert_eq!(get(&addr, "/%2e%2e/pipeline.json").0, 404);
}

#[test]
fn serve_refuses_invalid_scene() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(cranioforge(&["serve", path(dir.path()), "--port", "0"]).status.code(), Some(4));
    std::fs::write(
        dir.path().join("manifest.json"),
        r#"{"version":1,"scene_name":"s","units":"mm","provenance":{},"layers":[
            {"name":"a","mesh_uri":"meshes/a.obj","color":[1,1,1,1],"visible_default":true,
             "vertex_count":3,"triangle_count":1,"category":""}]}"#,
    )
    .unwrap();
    let out = cranioforge(&["serve", path(dir.path()), "--port", "0"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("does not exist"));
}
