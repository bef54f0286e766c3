//! `lebeaus` — synthesize gas-plume scenes, segment them, estimate local
//! backgrounds, and sweep hyperparameters against ground truth.

mod files;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lebeaus::cube::HsiCube;
use lebeaus::error::{Error, Result};
use lebeaus::io;
use lebeaus::pipeline::{
    evaluate_mse, global_baseline, lebeaus_run, sweep, whitened_background_mse, LebeausConfig,
    SweepGrid,
};
use lebeaus::report::{best_record, emit_report};
use lebeaus::segment::{segment_stats, spectral_gradient, watershed};
use lebeaus::sim::{run_simulation, SceneConfig};

#[derive(Parser)]
#[command(
    name = "lebeaus",
    version,
    about = "Local background estimation for gas-plume hyperspectral imagery"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic radiance cube plus ground truth from a scene JSON
    Simulate {
        /// Scene description (JSON)
        scene: PathBuf,
        /// Output directory: cube.img(+.hdr), roi.pgm, materials.csv, truth/
        out_dir: PathBuf,
    },
    /// Segment a cube into spectrally homogeneous regions
    Segment {
        /// Radiance cube (.img with .hdr alongside)
        cube: PathBuf,
        /// Prefix of the outputs: <prefix>labels.pgm and <prefix>labels.csv
        out_prefix: String,
        /// Outlier pixel pairs removed per 3x3 neighborhood by the gradient
        #[arg(long, default_value_t = 1)]
        pairs_removed: usize,
    },
    /// Estimate local backgrounds over a region of interest and whiten it
    Run {
        cube: PathBuf,
        /// Region-of-interest mask (binary PGM)
        roi: PathBuf,
        /// Run configuration (JSON)
        config: PathBuf,
        out_dir: PathBuf,
    },
    /// Whiten the same region against the global background mean
    Baseline {
        cube: PathBuf,
        roi: PathBuf,
        out_dir: PathBuf,
        /// Eigenvalue floor relative to the largest covariance eigenvalue
        #[arg(long, default_value_t = 1e-6)]
        ridge_scale: f64,
    },
    /// Score a result directory against a truth directory
    Evaluate {
        result_dir: PathBuf,
        truth_dir: PathBuf,
    },
    /// Evaluate a hyperparameter grid and write CSV/JSON/SVG reports
    Sweep {
        cube: PathBuf,
        roi: PathBuf,
        truth_dir: PathBuf,
        /// Grid specification (JSON)
        grid: PathBuf,
        out_dir: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lebeaus: {e}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::Simulate { scene, out_dir } => simulate(&scene, &out_dir),
        Cmd::Segment { cube, out_prefix, pairs_removed } => {
            segment_cmd(&cube, &out_prefix, pairs_removed)
        }
        Cmd::Run { cube, roi, config, out_dir } => run_cmd(&cube, &roi, &config, &out_dir),
        Cmd::Baseline { cube, roi, out_dir, ridge_scale } => {
            baseline_cmd(&cube, &roi, &out_dir, ridge_scale)
        }
        Cmd::Evaluate { result_dir, truth_dir } => evaluate_cmd(&result_dir, &truth_dir),
        Cmd::Sweep { cube, roi, truth_dir, grid, out_dir } => {
            sweep_cmd(&cube, &roi, &truth_dir, &grid, &out_dir)
        }
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn simulate(scene_path: &Path, out_dir: &Path) -> Result<()> {
    let config = SceneConfig::from_json(&read_text(scene_path)?)?;
    let scene = run_simulation::<f64>(&config)?;
    make_dir(out_dir)?;
    io::save_cube(&scene.cube, &out_dir.join("cube.img"))?;
    io::save_mask_pgm(&scene.truth.mask, &out_dir.join("roi.pgm"))?;
    let labels_f64: Vec<f64> = scene.material_labels.iter().map(|&l| l as f64).collect();
    io::save_pixel_values_csv(
        scene.cube.rows(),
        scene.cube.cols(),
        &labels_f64,
        "material",
        &out_dir.join("materials.csv"),
    )?;
    files::save_truth(&out_dir.join("truth"), &scene.truth)?;
    println!(
        "scene {}x{}x{} | plume pixels {} | max column density {}",
        scene.cube.rows(),
        scene.cube.cols(),
        scene.cube.channels(),
        scene.truth.mask.count(),
        scene.truth.max_column_density,
    );
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn segment_cmd(cube_path: &Path, out_prefix: &str, pairs_removed: usize) -> Result<()> {
    let cube: HsiCube = io::load_cube(cube_path)?;
    let gradient = spectral_gradient(&cube, pairs_removed)?;
    let map = segment_stats(&cube, &watershed(&gradient)?)?;
    let prefix = PathBuf::from(format!("{out_prefix}labels"));
    if let Some(parent) = prefix.parent() {
        if !parent.as_os_str().is_empty() {
            make_dir(parent)?;
        }
    }
    io::save_labels_pgm(&map, &prefix.with_extension("pgm"))?;
    io::save_labels_csv(&map, &prefix.with_extension("csv"))?;
    println!("segments {}", map.num_segments());
    println!("wrote {} and {}", prefix.with_extension("pgm").display(), prefix.with_extension("csv").display());
    Ok(())
}

fn run_cmd(cube_path: &Path, roi_path: &Path, config_path: &Path, out_dir: &Path) -> Result<()> {
    let cube: HsiCube = io::load_cube(cube_path)?;
    let roi = io::load_mask_pgm(roi_path)?;
    let config = LebeausConfig::from_json(&read_text(config_path)?)?;
    let result = lebeaus_run(&cube, &roi, &config)?;
    let config_echo = serde_json::to_value(&config).expect("config serializes");
    files::save_result(out_dir, &result, cube.wavelengths(), Some(config_echo))?;
    println!("segments {} | region pixels {}", result.segments.len(), result.pixels.len());
    for s in result.segments.iter().filter(|s| s.fallback.is_some()) {
        println!("segment {} fallback: {}", s.label, s.fallback.as_deref().unwrap());
    }
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn baseline_cmd(cube_path: &Path, roi_path: &Path, out_dir: &Path, ridge_scale: f64) -> Result<()> {
    let cube: HsiCube = io::load_cube(cube_path)?;
    let roi = io::load_mask_pgm(roi_path)?;
    let result = global_baseline(&cube, &roi, ridge_scale)?;
    files::save_result(out_dir, &result, cube.wavelengths(), None)?;
    println!("region pixels {} | global mean background", result.pixels.len());
    println!("wrote {}", out_dir.display());
    Ok(())
}

fn evaluate_cmd(result_dir: &Path, truth_dir: &Path) -> Result<()> {
    let loaded = files::load_result(result_dir)?;
    let truth = files::load_truth(truth_dir)?;
    let backgrounds: Vec<(u32, &lebeaus::cube::Spectrum<f64>)> =
        loaded.backgrounds.iter().map(|(l, s)| (*l, s)).collect();
    let mse = whitened_background_mse(
        &loaded.assignments,
        &backgrounds,
        &truth.background,
        &loaded.whitener,
    )?;
    println!("mse {mse}");
    Ok(())
}

fn sweep_cmd(
    cube_path: &Path,
    roi_path: &Path,
    truth_dir: &Path,
    grid_path: &Path,
    out_dir: &Path,
) -> Result<()> {
    let cube: HsiCube = io::load_cube(cube_path)?;
    let roi = io::load_mask_pgm(roi_path)?;
    let truth = files::load_truth(truth_dir)?;
    let grid = SweepGrid::from_json(&read_text(grid_path)?)?;
    let records = sweep(&cube, &roi, &truth, &grid)?;
    let baseline = global_baseline(&cube, &roi, grid.ridge_scale)?;
    let baseline_mse = evaluate_mse(&baseline, &truth, baseline.transform.inv_sqrt())?;
    let report = emit_report(&records, baseline_mse, out_dir)?;
    let best = best_record(&records)?;
    println!("cells {}", records.len());
    println!(
        "best gamma={} beta={} min_k={} ibate={} mse={}",
        best.gamma, best.beta, best.min_k, best.ibate, best.mse
    );
    println!("baseline mse={baseline_mse}");
    println!("wrote {}", report.csv.parent().unwrap_or(out_dir).display());
    Ok(())
}
