use std::io::Write;
use std::path::{Component, Path, PathBuf};

use anyhow::{Context, Result};
use cranioforge::pipeline::EXIT_INVALID_SCENE;
use cranioforge::scene::{validate_manifest, MANIFEST_FILE};
use tiny_http::{Header, Method, Request, Response, Server, StatusCode};

use crate::Exit;

fn content_type(path: &Path) -> &'static str {
    match path.extension().and_then(|e| e.to_str()) {
        Some("json") => "application/json",
        Some("glb") => "model/gltf-binary",
        Some("gltf") => "model/gltf+json",
        Some("obj") => "model/obj",
        Some("html") => "text/html; charset=utf-8",
        Some("js") => "text/javascript",
        Some("css") => "text/css",
        _ => "application/octet-stream",
    }
}

/// Maps a request target onto a file under `root`, refusing anything that
/// could escape it.
pub(crate) fn resolve(root: &Path, target: &str) -> Option<PathBuf> {
    let path = target.split(['?', '#']).next().unwrap_or_default();
    let relative = path.trim_start_matches('/');
    let relative = if relative.is_empty() { MANIFEST_FILE } else { relative };
    if relative.contains('\\') || relative.contains('%') {
        return None;
    }
    let rel = Path::new(relative);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return None;
    }
    Some(root.join(rel))
}

fn header(name: &str, value: &str) -> Header {
    Header::from_bytes(name.as_bytes(), value.as_bytes()).expect("static header is valid")
}

fn cors<R: std::io::Read>(response: Response<R>) -> Response<R> {
    response
        .with_header(header("Access-Control-Allow-Origin", "*"))
        .with_header(header("Access-Control-Allow-Methods", "GET, HEAD, OPTIONS"))
        .with_header(header("Access-Control-Allow-Headers", "*"))
}

fn respond(root: &Path, request: Request) -> std::io::Result<()> {
    let method = request.method().clone();
    if method == Method::Options {
        return request.respond(cors(Response::empty(StatusCode(204))));
    }
    if method != Method::Get && method != Method::Head {
        return request.respond(cors(Response::from_string("method not allowed").with_status_code(405)));
    }
    let file = resolve(root, request.url()).filter(|p| p.is_file());
    let Some(path) = file else {
        log::info!("404 {}", request.url());
        return request.respond(cors(Response::from_string("not found").with_status_code(404)));
    };
    match std::fs::read(&path) {
        Ok(bytes) => {
            log::info!("200 {}", request.url());
            let response = Response::from_data(bytes).with_header(header("Content-Type", content_type(&path)));
            request.respond(cors(response))
        }
        Err(e) => request.respond(cors(Response::from_string(e.to_string()).with_status_code(500))),
    }
}

/// Validates the scene, then serves it until interrupted.
pub(crate) fn serve(scene: &Path, port: u16) -> Result<()> {
    let manifest_path = scene.join(MANIFEST_FILE);
    let document = std::fs::read(&manifest_path).map_err(|e| {
        anyhow::Error::new(Exit(EXIT_INVALID_SCENE)).context(format!("reading {}: {e}", manifest_path.display()))
    })?;
    let violations = validate_manifest(&document, scene);
    if !violations.is_empty() {
        for v in &violations {
            eprintln!("invalid scene: {v}");
        }
        return Err(anyhow::Error::new(Exit(EXIT_INVALID_SCENE)).context(format!(
            "{} has {} manifest violation(s)",
            scene.display(),
            violations.len()
        )));
    }
    let server = Server::http(("127.0.0.1", port)).map_err(|e| anyhow::anyhow!("binding port {port}: {e}"))?;
    let ip = server
        .server_addr()
        .to_ip()
        .context("server is not bound to an IP address")?;
    let url = format!("http://{ip}/");
    println!("serving {} at {url}{MANIFEST_FILE}", scene.display());
    std::io::stdout().flush().ok();
    for request in server.incoming_requests() {
        if let Err(e) = respond(scene, request) {
            log::warn!("response failed: {e}");
        }
    }
    Ok(())
}
