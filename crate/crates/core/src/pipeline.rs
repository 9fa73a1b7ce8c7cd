//! Declarative end-to-end runs: registration, masking, growing, meshing and
//! scene export, in dependency order.
//!
//! A run is described by a JSON [`PipelineConfig`]. Relative paths in it are
//! resolved against the directory holding the config file. Structures may use
//! another layer (dilated, then kept inside or outside) as their growth domain;
//! independent structures run concurrently, but every output follows config
//! order so repeated runs produce byte-identical scenes apart from the
//! `created_at` timestamp.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::meshing::{build_surface, make_two_sided, MeshError, MeshingConfig, DECIMATION_METHOD};
use crate::registration::{register_rigid, Registration, RegistrationConfig, RegistrationError};
use crate::scene::{
    build_manifest, validate_manifest, write_scene, MeshFormat, SceneError, SceneLayer, SceneManifest, Violation,
    MANIFEST_FILE,
};
use crate::segmentation::{
    dilate, largest_component, region_grow, validate_stages, GrowthStage, LabelMask, MaskMode, SeedSet,
    SegmentationError,
};
use crate::transform::RigidTransform;
use crate::volume::{read_nifti, resample_onto, Interpolation, VolumeError, VoxelVolume};

/// Source name that always refers to the reference volume.
pub const REFERENCE: &str = "reference";

pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_INVALID_SCENE: i32 = 4;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{}: {source}", path.display())]
    Volume { path: PathBuf, source: VolumeError },
    #[error("registering input {input:?}: {source}")]
    Registration { input: String, source: RegistrationError },
    #[error("layer {name:?}: {source}")]
    Segmentation { name: String, source: SegmentationError },
    #[error("meshing layer {name:?}: {source}")]
    Meshing { name: String, source: MeshError },
    #[error("scene export: {0}")]
    Scene(#[from] SceneError),
    #[error("scene failed validation: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidScene(Vec<Violation>),
}

impl PipelineError {
    /// 2 for unusable input, 3 for numerical failure, 4 for an invalid scene.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) | Self::Io { .. } | Self::Volume { .. } => EXIT_INPUT,
            Self::Registration { source, .. } => match source {
                RegistrationError::InvalidConfig(_) => EXIT_INPUT,
                _ => EXIT_NUMERICAL,
            },
            Self::Segmentation { source, .. } => match source {
                SegmentationError::GridMismatch { .. } | SegmentationError::EmptyMask => EXIT_NUMERICAL,
                _ => EXIT_INPUT,
            },
            Self::Meshing { source, .. } => match source {
                MeshError::InvalidConfig(_) | MeshError::TargetTooSmall(_) => EXIT_INPUT,
                _ => EXIT_NUMERICAL,
            },
            Self::Scene(SceneError::Io(_)) => EXIT_INPUT,
            Self::Scene(_) | Self::InvalidScene(_) => EXIT_INVALID_SCENE,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_scene_name() -> String {
    "scene".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    pub name: String,
    pub path: PathBuf,
    /// Rigidly register onto the reference before reslicing.
    #[serde(default)]
    pub register: bool,
    #[serde(default)]
    pub interpolation: Interpolation,
}

/// Restricts growth to (or away from) another layer, dilated by `dilate_mm`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub mask: String,
    #[serde(default)]
    pub dilate_mm: f64,
    #[serde(default = "keep_inside")]
    pub mode: MaskMode,
}

fn keep_inside() -> MaskMode {
    MaskMode::KeepInside
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Postprocess {
    pub largest_component: bool,
    pub smoothing_iterations: usize,
    pub smoothing_lambda: f64,
    pub decimate_target: Option<usize>,
    /// Mask pre-smoothing in voxels; unset means 1.0.
    pub presmooth_sigma: Option<f64>,
    pub two_sided: bool,
}

impl Default for Postprocess {
    fn default() -> Self {
        Self {
            largest_component: false,
            smoothing_iterations: 0,
            smoothing_lambda: 0.5,
            decimate_target: None,
            presmooth_sigma: None,
            two_sided: false,
        }
    }
}

impl Postprocess {
    fn meshing(&self) -> MeshingConfig {
        MeshingConfig {
            presmooth_sigma_voxels: self.presmooth_sigma,
            smoothing_iterations: self.smoothing_iterations,
            smoothing_lambda: self.smoothing_lambda,
            target_vertices: self.decimate_target,
            ..MeshingConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StructureSpec {
    pub name: String,
    /// An input name, or `"reference"`.
    pub source: String,
    pub seeds: Vec<[i64; 3]>,
    pub stages: Vec<GrowthStage>,
    #[serde(default)]
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub postprocess: Postprocess,
    pub color: [f64; 4],
    #[serde(default)]
    pub category: String,
    #[serde(default = "default_true")]
    pub visible_default: bool,
}

/// A label volume produced elsewhere, meshed as its own layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalMaskSpec {
    pub name: String,
    pub path: PathBuf,
    /// Keep only this label; unset keeps every non-zero voxel.
    #[serde(default)]
    pub label: Option<u32>,
    pub color: [f64; 4],
    #[serde(default)]
    pub category: String,
    #[serde(default = "default_true")]
    pub visible_default: bool,
    #[serde(default)]
    pub postprocess: Postprocess,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    #[serde(default = "default_scene_name")]
    pub scene_name: String,
    pub reference_volume: PathBuf,
    #[serde(default)]
    pub inputs: Vec<InputSpec>,
    #[serde(default)]
    pub structures: Vec<StructureSpec>,
    #[serde(default)]
    pub external_masks: Vec<ExternalMaskSpec>,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub mesh_format: MeshFormat,
    #[serde(default)]
    pub registration: RegistrationConfig,
}

fn check_color(name: &str, color: &[f64; 4]) -> Result<(), PipelineError> {
    if color.iter().all(|c| (0.0..=1.0).contains(c)) {
        Ok(())
    } else {
        Err(PipelineError::Config(format!("layer {name:?}: color components must lie in [0, 1]")))
    }
}

impl PipelineConfig {
    pub fn from_json(bytes: &[u8]) -> Result<Self, PipelineError> {
        serde_json::from_slice(bytes).map_err(|e| PipelineError::Config(e.to_string()))
    }

    /// Parses and validates a config file, returning it with the directory
    /// its relative paths are resolved against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), PipelineError> {
        let bytes = std::fs::read(path).map_err(|source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config = Self::from_json(&bytes)?;
        config.validate()?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((config, base))
    }

    /// sha256 of the canonical JSON serialization.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical))
    }

    /// Layer names in manifest order: structures, then external masks.
    pub fn layer_names(&self) -> Vec<&str> {
        self.structures
            .iter()
            .map(|s| s.name.as_str())
            .chain(self.external_masks.iter().map(|m| m.name.as_str()))
            .collect()
    }

    /// Checks everything that can be checked without reading volumes.
    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        if self.scene_name.trim().is_empty() {
            return bad("scene_name is empty".into());
        }
        self.registration
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;

        let mut inputs: HashMap<&str, usize> = HashMap::new();
        for (i, input) in self.inputs.iter().enumerate() {
            if input.name.is_empty() || input.name == REFERENCE {
                return bad(format!("input {i}: name must be non-empty and not {REFERENCE:?}"));
            }
            if let Some(first) = inputs.insert(&input.name, i) {
                return bad(format!("duplicate input name {:?} at positions {first} and {i}", input.name));
            }
        }

        let names = self.layer_names();
        let mut layers: HashMap<&str, usize> = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if name.is_empty() {
                return bad(format!("layer {i} has an empty name"));
            }
            if let Some(first) = layers.insert(name, i) {
                return bad(format!("duplicate layer name {name:?} at positions {first} and {i}"));
            }
        }

        for s in &self.structures {
            if s.source != REFERENCE && !inputs.contains_key(s.source.as_str()) {
                return bad(format!("structure {:?}: unknown source {:?}", s.name, s.source));
            }
            if s.seeds.is_empty() {
                return bad(format!("structure {:?}: no seeds", s.name));
            }
            validate_stages(&s.stages).map_err(|e| PipelineError::Config(format!("structure {:?}: {e}", s.name)))?;
            if let Some(d) = &s.domain {
                if !layers.contains_key(d.mask.as_str()) {
                    return bad(format!("structure {:?}: unknown domain mask {:?}", s.name, d.mask));
                }
                if !(d.dilate_mm.is_finite() && d.dilate_mm >= 0.0) {
                    return bad(format!("structure {:?}: dilate_mm must be >= 0", s.name));
                }
            }
            check_color(&s.name, &s.color)?;
            s.postprocess
                .meshing()
                .validate()
                .map_err(|e| PipelineError::Config(format!("structure {:?}: {e}", s.name)))?;
        }
        for m in &self.external_masks {
            check_color(&m.name, &m.color)?;
            m.postprocess
                .meshing()
                .validate()
                .map_err(|e| PipelineError::Config(format!("mask {:?}: {e}", m.name)))?;
        }
        self.structure_waves().map(|_| ())
    }

    /// Structures grouped so each group depends only on earlier groups.
    fn structure_waves(&self) -> Result<Vec<Vec<usize>>, PipelineError> {
        let index: HashMap<&str, usize> = self.structures.iter().enumerate().map(|(i, s)| (s.name.as_str(), i)).collect();
        let dependency = |i: usize| {
            self.structures[i]
                .domain
                .as_ref()
                .and_then(|d| index.get(d.mask.as_str()).copied())
        };
        let mut done: HashSet<usize> = HashSet::new();
        let mut waves = Vec::new();
        while done.len() < self.structures.len() {
            let wave: Vec<usize> = (0..self.structures.len())
                .filter(|i| !done.contains(i) && dependency(*i).is_none_or(|d| done.contains(&d)))
                .collect();
            if wave.is_empty() {
                let stuck: Vec<&str> = (0..self.structures.len())
                    .filter(|i| !done.contains(i))
                    .map(|i| self.structures[i].name.as_str())
                    .collect();
                return Err(PipelineError::Config(format!("domain masks form a cycle among {stuck:?}")));
            }
            done.extend(&wave);
            waves.push(wave);
        }
        Ok(waves)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepTiming {
    pub step: String,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub output_dir: PathBuf,
    pub manifest: SceneManifest,
    pub registrations: Vec<(String, Registration)>,
    /// Segmented voxels per layer, in manifest order.
    pub voxel_counts: Vec<(String, usize)>,
    pub timings: Vec<StepTiming>,
}

fn timed<T>(step: String, timings: &mut Vec<StepTiming>, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    let seconds = start.elapsed().as_secs_f64();
    log::info!("{step}: {seconds:.3} s");
    timings.push(StepTiming { step, seconds });
    out
}

fn load_volume(path: &Path) -> Result<VoxelVolume, PipelineError> {
    read_nifti(path).map_err(|source| PipelineError::Volume {
        path: path.to_path_buf(),
        source,
    })
}

fn fmt3(v: [f64; 3]) -> String {
    format!("[{:.6}, {:.6}, {:.6}]", v[0], v[1], v[2])
}

type Timed<T> = (T, Vec<StepTiming>);

/// Executes `config`. Relative paths resolve against `base_dir`; `output_dir`
/// overrides the config's output directory.
pub fn run_pipeline(
    config: &PipelineConfig,
    base_dir: &Path,
    output_dir: Option<&Path>,
) -> Result<RunReport, PipelineError> {
    config.validate()?;
    let waves = config.structure_waves()?;
    let resolve = |p: &Path| base_dir.join(p);
    let out_dir = output_dir.map(Path::to_path_buf).unwrap_or_else(|| resolve(&config.output_dir));
    let mut timings = Vec::new();

    let reference = timed("load reference".into(), &mut timings, || load_volume(&resolve(&config.reference_volume)))?;
    let grid = reference.grid().clone();

    // Registration and reslicing onto the reference grid.
    let inputs: Vec<Result<Timed<(VoxelVolume, Option<Registration>)>, PipelineError>> = config
        .inputs
        .par_iter()
        .map(|spec| {
            let mut t = Vec::new();
            let moving = timed(format!("load {}", spec.name), &mut t, || load_volume(&resolve(&spec.path)))?;
            let registration = if spec.register {
                let r = timed(format!("register {}", spec.name), &mut t, || {
                    register_rigid(&moving, &reference, &config.registration)
                })
                .map_err(|source| PipelineError::Registration {
                    input: spec.name.clone(),
                    source,
                })?;
                Some(r)
            } else {
                None
            };
            let resliced = match &registration {
                None if moving.grid().is_aligned_with(&grid) => moving,
                _ => {
                    let transform = registration.as_ref().map(|r| r.transform.clone()).unwrap_or_else(RigidTransform::identity);
                    timed(format!("reslice {}", spec.name), &mut t, || {
                        resample_onto(&moving, &grid, &transform, spec.interpolation)
                    })
                }
            };
            Ok(((resliced, registration), t))
        })
        .collect();
    let mut volumes: HashMap<&str, VoxelVolume> = HashMap::new();
    let mut registrations = Vec::new();
    for (spec, result) in config.inputs.iter().zip(inputs) {
        let ((volume, registration), t) = result?;
        timings.extend(t);
        if let Some(r) = registration {
            registrations.push((spec.name.clone(), r));
        }
        volumes.insert(&spec.name, volume);
    }
    volumes.insert(REFERENCE, reference);

    let mut masks: HashMap<&str, LabelMask> = HashMap::new();
    for spec in &config.external_masks {
        let mask = timed(format!("load mask {}", spec.name), &mut timings, || -> Result<_, PipelineError> {
            let mut volume = load_volume(&resolve(&spec.path))?;
            if !volume.grid().is_aligned_with(&grid) {
                volume = resample_onto(&volume, &grid, &RigidTransform::identity(), Interpolation::Nearest);
            }
            let labels = LabelMask::from_volume(&volume).map_err(|source| PipelineError::Segmentation {
                name: spec.name.clone(),
                source,
            })?;
            Ok(match spec.label {
                Some(l) => labels.select(l),
                None => LabelMask::from_bits(labels.grid(), &labels.bits()),
            })
        })?;
        masks.insert(&spec.name, mask);
    }

    for wave in waves {
        let grown: Vec<Result<Timed<LabelMask>, PipelineError>> = wave
            .par_iter()
            .map(|&i| grow_structure(&config.structures[i], &volumes, &masks))
            .collect();
        for (&i, result) in wave.iter().zip(grown) {
            let (mask, t) = result?;
            timings.extend(t);
            masks.insert(&config.structures[i].name, mask);
        }
    }

    // Meshing, one layer per structure then per external mask.
    let layer_specs: Vec<(&str, &Postprocess, [f64; 4], &str, bool)> = config
        .structures
        .iter()
        .map(|s| (s.name.as_str(), &s.postprocess, s.color, s.category.as_str(), s.visible_default))
        .chain(
            config
                .external_masks
                .iter()
                .map(|m| (m.name.as_str(), &m.postprocess, m.color, m.category.as_str(), m.visible_default)),
        )
        .collect();
    let meshed: Vec<Result<Timed<(SceneLayer, BTreeMap<String, String>)>, PipelineError>> = layer_specs
        .par_iter()
        .map(|&(name, post, color, category, visible_default)| {
            let mut t = Vec::new();
            let mut notes = BTreeMap::new();
            let err = |source| PipelineError::Meshing {
                name: name.to_string(),
                source,
            };
            let extraction = timed(format!("mesh {name}"), &mut t, || build_surface((&masks[name]).into(), &post.meshing()))
                .map_err(err)?;
            if let Some(w) = extraction.warning {
                log::warn!("layer {name}: {w:?}");
                notes.insert(format!("layer.{name}.warning"), format!("{w:?}"));
            }
            if let Some(reached) = extraction.decimation_reached_target {
                if !reached {
                    log::warn!("layer {name}: decimation stopped above its target");
                }
                notes.insert(format!("layer.{name}.decimation_reached_target"), reached.to_string());
            }
            let mut mesh = extraction.mesh;
            if post.two_sided {
                mesh = make_two_sided(&mesh).map_err(err)?;
            }
            let layer = SceneLayer {
                mesh: mesh.with_layer_name(name),
                color,
                category: category.to_string(),
                visible_default,
            };
            Ok(((layer, notes), t))
        })
        .collect();
    let voxel_counts = layer_specs.iter().map(|(name, ..)| (name.to_string(), masks[name].count())).collect();
    let mut layers = Vec::with_capacity(meshed.len());
    let mut notes = BTreeMap::new();
    for result in meshed {
        let ((layer, n), t) = result?;
        timings.extend(t);
        notes.extend(n);
        layers.push(layer);
    }

    let manifest = timed("export".into(), &mut timings, || -> Result<_, PipelineError> {
        let mut manifest = build_manifest(&layers, &config.scene_name, config.mesh_format)?;
        let p = &mut manifest.provenance;
        p.insert("generator".into(), concat!("cranioforge ", env!("CARGO_PKG_VERSION")).into());
        p.insert("created_at".into(), chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true));
        p.insert("config_hash".into(), config.hash());
        p.insert("decimation_method".into(), DECIMATION_METHOD.into());
        p.insert("reference_grid".into(), grid.id().to_string());
        for (name, r) in &registrations {
            p.insert(
                format!("registration.{name}"),
                format!(
                    "score={:.6} angles_deg={} shift_mm={}",
                    r.score,
                    fmt3(r.angles_deg()),
                    fmt3(r.shift_mm())
                ),
            );
        }
        p.extend(notes);
        write_scene(&out_dir, &manifest, &layers, config.mesh_format)?;
        let document = std::fs::read(out_dir.join(MANIFEST_FILE)).map_err(|source| PipelineError::Io {
            path: out_dir.join(MANIFEST_FILE),
            source,
        })?;
        let violations = validate_manifest(&document, &out_dir);
        if !violations.is_empty() {
            return Err(PipelineError::InvalidScene(violations));
        }
        Ok(manifest)
    })?;

    Ok(RunReport {
        output_dir: out_dir,
        manifest,
        registrations,
        voxel_counts,
        timings,
    })
}

fn grow_structure(
    spec: &StructureSpec,
    volumes: &HashMap<&str, VoxelVolume>,
    masks: &HashMap<&str, LabelMask>,
) -> Result<Timed<LabelMask>, PipelineError> {
    let mut t = Vec::new();
    let err = |source| PipelineError::Segmentation {
        name: spec.name.clone(),
        source,
    };
    let volume = &volumes[spec.source.as_str()];
    let domain = match &spec.domain {
        None => None,
        Some(d) => {
            let base = &masks[d.mask.as_str()];
            let region = timed(format!("domain {}", spec.name), &mut t, || dilate(base, d.dilate_mm)).map_err(err)?;
            Some(match d.mode {
                MaskMode::KeepInside => region,
                MaskMode::KeepOutside => region.complement(),
            })
        }
    };
    let seeds = SeedSet::new(spec.seeds.clone()).map_err(err)?;
    let mut mask = timed(format!("grow {}", spec.name), &mut t, || {
        region_grow(volume, &seeds, &spec.stages, domain.as_ref())
    })
    .map_err(err)?;
    if spec.postprocess.largest_component {
        let connectivity = spec.stages.last().expect("validated non-empty").connectivity;
        mask = timed(format!("largest component {}", spec.name), &mut t, || {
            largest_component(&mask, connectivity)
        })
        .map_err(err)?;
    }
    Ok((mask, t))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "reference_volume": "ref.nii",
            "output_dir": "out",
            "inputs": [{ "name": "cta", "path": "cta.nii", "register": true }],
            "structures": [
                { "name": "skull", "source": "reference", "seeds": [[1, 1, 1]],
                  "stages": [{ "low": 100, "connectivity": 6 }], "color": [1, 1, 1, 1] },
                { "name": "vessels", "source": "cta", "seeds": [[2, 2, 2]],
                  "stages": [{ "low": 10, "high": 50, "connectivity": 26 }],
                  "domain": { "mask": "skull", "dilate_mm": 2, "mode": "keep_outside" },
                  "postprocess": { "decimate_target": 500 },
                  "color": [1, 0, 0, 1], "category": "vessels" }
            ]
        })
    }

    fn parse(v: &serde_json::Value) -> Result<PipelineConfig, PipelineError> {
        let c = PipelineConfig::from_json(v.to_string().as_bytes())?;
        c.validate()?;
        Ok(c)
    }

    #[test]
    fn defaults_and_waves() {
        let c = parse(&minimal()).unwrap();
        assert_eq!(c.scene_name, "scene");
        assert_eq!(c.mesh_format, MeshFormat::GltfBinary);
        assert_eq!(c.inputs[0].interpolation, Interpolation::Trilinear);
        assert_eq!(c.structures[0].stages[0].high, f64::INFINITY);
        assert!(c.structures[0].visible_default);
        assert_eq!(c.structure_waves().unwrap(), vec![vec![0], vec![1]]);
    }

    #[test]
    fn rejects_bad_configs() {
        let cases: Vec<(&str, Box<dyn Fn(&mut serde_json::Value)>)> = vec![
            ("duplicate layer", Box::new(|v| v["structures"][1]["name"] = "skull".into())),
            ("unknown source", Box::new(|v| v["structures"][0]["source"] = "mra".into())),
            ("unknown domain", Box::new(|v| v["structures"][1]["domain"]["mask"] = "brain".into())),
            ("cycle", Box::new(|v| v["structures"][0]["domain"] = serde_json::json!({ "mask": "vessels" }))),
            ("self cycle", Box::new(|v| v["structures"][1]["domain"]["mask"] = "vessels".into())),
            ("no seeds", Box::new(|v| v["structures"][0]["seeds"] = serde_json::json!([]))),
            ("color", Box::new(|v| v["structures"][0]["color"][0] = 2.into())),
            ("target", Box::new(|v| v["structures"][1]["postprocess"]["decimate_target"] = 3.into())),
            ("unknown field", Box::new(|v| v["bogus"] = 1.into())),
            ("reserved input", Box::new(|v| v["inputs"][0]["name"] = "reference".into())),
            ("band", Box::new(|v| {
                v["structures"][0]["stages"] = serde_json::json!([
                    { "low": 1, "connectivity": 6 }, { "low": 0, "connectivity": 6 }
                ])
            })),
        ];
        for (label, edit) in cases {
            let mut v = minimal();
            edit(&mut v);
            let err = parse(&v).expect_err(label);
            assert!(matches!(err, PipelineError::Config(_)), "{label}: {err}");
            assert_eq!(err.exit_code(), EXIT_INPUT);
        }
    }

    #[test]
    fn duplicate_error_names_both_positions() {
        let mut v = minimal();
        v["structures"][1]["name"] = "skull".into();
        let msg = parse(&v).unwrap_err().to_string();
        assert!(msg.contains("\"skull\"") && msg.contains("0 and 1"), "{msg}");
    }

    #[test]
    fn hash_is_stable_and_sensitive() {
        let a = parse(&minimal()).unwrap();
        assert_eq!(a.hash(), parse(&minimal()).unwrap().hash());
        let mut v = minimal();
        v["structures"][0]["seeds"][0][0] = 2.into();
        assert_ne!(a.hash(), parse(&v).unwrap().hash());
    }

    #[test]
    fn exit_codes() {
        let numeric = PipelineError::Registration {
            input: "x".into(),
            source: RegistrationError::NoOverlap,
        };
        assert_eq!(numeric.exit_code(), EXIT_NUMERICAL);
        assert_eq!(PipelineError::InvalidScene(vec![]).exit_code(), EXIT_INVALID_SCENE);
    }
}
