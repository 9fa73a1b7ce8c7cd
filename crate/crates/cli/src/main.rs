//! `cranioforge`: inspect volumes, register them, run declarative pipelines and
//! serve finished scenes to the viewer.
//!
//! Exit codes: 0 success, 2 input or parse error, 3 numerical failure,
//! 4 invalid scene.

mod serve;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use cranioforge::pipeline::{run_pipeline, PipelineConfig, PipelineError, EXIT_INPUT, EXIT_INVALID_SCENE, EXIT_NUMERICAL};
use cranioforge::registration::{register_rigid, Metric, RegistrationConfig, RegistrationError};
use cranioforge::volume::{read_nifti, resample, write_nifti, Interpolation};

#[derive(Parser, Debug)]
#[command(name = "cranioforge", version, about = "Volume-to-scene pipeline for layered anatomical surface models")]
struct Cli {
    /// Output directory (register: where results go; run: overrides the config's output_dir).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, env = "CRANIOFORGE_THREADS", default_value_t = 0)]
    threads: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Print a NIfTI-1 volume's geometry and intensity range.
    Info { volume: PathBuf },

    /// Rigidly register MOVING onto FIXED and reslice it onto FIXED's grid.
    Register {
        moving: PathBuf,
        fixed: PathBuf,
        #[arg(long, default_value = "nmi")]
        metric: Metric,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value_t = 32)]
        bins: usize,
        #[arg(long, default_value = "trilinear")]
        interpolation: Interpolation,
    },

    /// Execute a pipeline config and write its scene directory.
    Run { config: PathBuf },

    /// Serve a scene directory over HTTP after validating its manifest.
    Serve {
        scene: PathBuf,
        /// 0 binds any free port.
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

/// Marks an error that must exit with a specific code.
#[derive(Debug)]
struct Exit(i32);

impl std::fmt::Display for Exit {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let kind = match self.0 {
            EXIT_NUMERICAL => "numerical failure",
            EXIT_INVALID_SCENE => "invalid scene",
            _ => "input error",
        };
        f.write_str(kind)
    }
}

impl std::error::Error for Exit {}

fn exit_code(err: &anyhow::Error) -> i32 {
    if let Some(Exit(code)) = err.downcast_ref::<Exit>() {
        return *code;
    }
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<PipelineError>() {
            return e.exit_code();
        }
        if let Some(e) = cause.downcast_ref::<RegistrationError>() {
            return match e {
                RegistrationError::InvalidConfig(_) => EXIT_INPUT,
                _ => EXIT_NUMERICAL,
            };
        }
    }
    EXIT_INPUT
}

fn fmt_row(values: impl IntoIterator<Item = f64>) -> String {
    values.into_iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(" ")
}

fn info(path: &Path) -> Result<()> {
    let volume = read_nifti(path).with_context(|| format!("reading {}", path.display()))?;
    let [nx, ny, nz] = volume.dims();
    let a = volume.affine();
    let rows: Vec<String> = (0..4).map(|r| fmt_row((0..4).map(|c| a[(r, c)]))).collect();
    let (lo, hi) = volume.intensity_range();
    println!("dims: {nx} {ny} {nz}");
    println!("spacing: {}", fmt_row(volume.spacing()));
    println!("affine: {}", rows.join(" | "));
    println!("intensity range: {lo:?} {hi:?}");
    println!("grid id: {}", volume.grid().id());
    Ok(())
}

fn register(
    moving: &Path,
    fixed: &Path,
    config: RegistrationConfig,
    interpolation: Interpolation,
    output: &Path,
) -> Result<()> {
    let moving_volume = read_nifti(moving).with_context(|| format!("reading {}", moving.display()))?;
    let fixed_volume = read_nifti(fixed).with_context(|| format!("reading {}", fixed.display()))?;
    let result = register_rigid(&moving_volume, &fixed_volume, &config).context("registration failed")?;
    let resliced = resample(&moving_volume, &fixed_volume, &result.transform, interpolation);
    std::fs::create_dir_all(output).with_context(|| format!("creating {}", output.display()))?;
    let transform_path = output.join("transform.txt");
    let resliced_path = output.join("resliced.nii");
    std::fs::write(&transform_path, result.transform.to_text())
        .with_context(|| format!("writing {}", transform_path.display()))?;
    std::fs::write(&resliced_path, write_nifti(&resliced)).with_context(|| format!("writing {}", resliced_path.display()))?;
    for level in &result.levels {
        println!(
            "level x{}: {} iterations, score {:.6}{}",
            level.downsample,
            level.iterations,
            level.score,
            if level.converged { "" } else { " (not converged)" }
        );
    }
    println!("angles_deg: {}", fmt_row(result.angles_deg()));
    println!("shift_mm: {}", fmt_row(result.shift_mm()));
    println!("score: {:.6}", result.score);
    println!("wrote {} and {}", transform_path.display(), resliced_path.display());
    Ok(())
}

fn run(config_path: &Path, output: Option<&Path>) -> Result<()> {
    let (config, base) = PipelineConfig::load(config_path)?;
    let report = run_pipeline(&config, &base, output)?;
    println!("step timings:");
    for t in &report.timings {
        println!("  {:>9.3} s  {}", t.seconds, t.step);
    }
    let total: f64 = report.timings.iter().map(|t| t.seconds).sum();
    println!("  {total:>9.3} s  total (sum of steps)");
    for (name, r) in &report.registrations {
        println!("registered {name}: score {:.6}, angles_deg {}, shift_mm {}", r.score, fmt_row(r.angles_deg()), fmt_row(r.shift_mm()));
    }
    for (layer, (_, voxels)) in report.manifest.layers.iter().zip(&report.voxel_counts) {
        println!(
            "layer {}: {voxels} voxels, {} vertices, {} triangles -> {}",
            layer.name, layer.vertex_count, layer.triangle_count, layer.mesh_uri
        );
    }
    println!("scene written to {}", report.output_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
        log::warn!("thread pool already initialised: {e}");
    }
    let result = match &cli.command {
        Command::Info { volume } => info(volume),
        Command::Register {
            moving,
            fixed,
            metric,
            levels,
            bins,
            interpolation,
        } => {
            let config = RegistrationConfig {
                metric: *metric,
                histogram_bins: *bins,
                ..RegistrationConfig::with_levels(*levels)
            };
            let output = cli.output.clone().unwrap_or_else(|| PathBuf::from("."));
            register(moving, fixed, config, *interpolation, &output)
        }
        Command::Run { config } => run(config, cli.output.as_deref()),
        Command::Serve { scene, port } => serve::serve(scene, *port),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        assert_eq!(exit_code(&anyhow::Error::new(RegistrationError::NoOverlap)), EXIT_NUMERICAL);
        let invalid = anyhow::Error::new(Exit(EXIT_INVALID_SCENE)).context("2 violations");
        assert_eq!(exit_code(&invalid), EXIT_INVALID_SCENE);
        let wrapped = anyhow::Error::new(RegistrationError::NoOverlap).context("registration failed");
        assert_eq!(exit_code(&wrapped), EXIT_NUMERICAL);
        assert_eq!(exit_code(&anyhow::anyhow!("io")), EXIT_INPUT);
    }

    #[test]
    fn threads_flag_and_env() {
        let cli = Cli::try_parse_from(["cranioforge", "--threads", "3", "info", "x.nii"]).unwrap();
        assert_eq!(cli.threads, 3);
        let cli = Cli::try_parse_from(["cranioforge", "serve", "scene"]).unwrap();
        assert!(matches!(cli.command, Command::Serve { port: 8080, .. }));
    }
}
