//! On-disk layout of the two directory formats the CLI exchanges:
//!
//! * **truth directory** (written by `simulate`, read by `evaluate`/`sweep`):
//!   `background.img(+.hdr)`, `mask.pgm`, `column_density.csv`,
//!   `plume_temp_k.csv`, `truth.json`.
//! * **result directory** (written by `run`/`baseline`, read by `evaluate`):
//!   `result.json`, `z.csv` (one row per whitened region pixel),
//!   `segments.csv` (per-segment background estimates), `whitening.csv`,
//!   `mean.csv`, `covariance.csv`.

use std::fs;
use std::path::Path;

use lebeaus::cube::Spectrum;
use lebeaus::error::{Error, Result};
use lebeaus::io;
use lebeaus::linalg::SquareMatrix;
use lebeaus::pipeline::LocalWhitenResult;
use lebeaus::sim::SimulationTruth;

pub const BACKGROUND_FILE: &str = "background.img";
pub const MASK_FILE: &str = "mask.pgm";
pub const COLUMN_DENSITY_FILE: &str = "column_density.csv";
pub const PLUME_TEMP_FILE: &str = "plume_temp_k.csv";
pub const TRUTH_META_FILE: &str = "truth.json";

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.into(), source: e })
}

pub fn save_truth(dir: &Path, truth: &SimulationTruth<f64>) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    let (rows, cols) = (truth.background.rows(), truth.background.cols());
    io::save_cube(&truth.background, &dir.join(BACKGROUND_FILE))?;
    io::save_mask_pgm(&truth.mask, &dir.join(MASK_FILE))?;
    io::save_pixel_values_csv(
        rows,
        cols,
        &truth.column_density,
        "column_density_ppm_m",
        &dir.join(COLUMN_DENSITY_FILE),
    )?;
    io::save_pixel_values_csv(
        rows,
        cols,
        &truth.plume_temp_k,
        "plume_temp_k",
        &dir.join(PLUME_TEMP_FILE),
    )?;
    let meta = serde_json::json!({ "max_column_density": truth.max_column_density });
    write_text(&dir.join(TRUTH_META_FILE), &format!("{meta:#}\n"))
}

pub fn load_truth(dir: &Path) -> Result<SimulationTruth<f64>> {
    let background = io::load_cube(&dir.join(BACKGROUND_FILE))?;
    let mask = io::load_mask_pgm(&dir.join(MASK_FILE))?;
    let (cd_rows, cd_cols, column_density) =
        io::load_pixel_values_csv::<f64>(&dir.join(COLUMN_DENSITY_FILE))?;
    let (t_rows, t_cols, plume_temp_k) =
        io::load_pixel_values_csv::<f64>(&dir.join(PLUME_TEMP_FILE))?;
    for (name, r, c) in
        [("column density", cd_rows, cd_cols), ("plume temperature", t_rows, t_cols)]
    {
        if r != background.rows() || c != background.cols() {
            return Err(Error::Dimension(format!(
                "{name} table is {r}x{c} but the background cube is {}x{}",
                background.rows(),
                background.cols()
            )));
        }
    }
    let meta_path = dir.join(TRUTH_META_FILE);
    let meta: serde_json::Value = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| Error::Format { path: meta_path.clone(), reason: e.to_string() })?;
    let max_column_density = meta["max_column_density"].as_f64().ok_or_else(|| Error::Format {
        path: meta_path,
        reason: "missing numeric max_column_density".into(),
    })?;
    Ok(SimulationTruth { background, column_density, plume_temp_k, mask, max_column_density })
}

pub const RESULT_META_FILE: &str = "result.json";
pub const Z_FILE: &str = "z.csv";
pub const SEGMENTS_FILE: &str = "segments.csv";
pub const WHITENING_FILE: &str = "whitening.csv";
pub const MEAN_FILE: &str = "mean.csv";
pub const COVARIANCE_FILE: &str = "covariance.csv";

pub fn save_result(
    dir: &Path,
    result: &LocalWhitenResult<f64>,
    wavelengths: &[f64],
    config: Option<serde_json::Value>,
) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io { path: dir.into(), source: e })?;
    let channels = result.stats.mean.len();

    let mut meta = result.summary_json();
    if let Some(cfg) = config {
        meta["config"] = cfg;
    }
    write_text(&dir.join(RESULT_META_FILE), &format!("{meta:#}\n"))?;

    let mut z = String::from("index,row,col,segment,alpha");
    for k in 0..channels {
        z.push_str(&format!(",z_{k}"));
    }
    z.push('\n');
    for p in &result.pixels {
        let (r, c) = (p.index as usize / result.cols, p.index as usize % result.cols);
        z.push_str(&format!("{},{r},{c},{},{}", p.index, p.segment, p.alpha));
        for v in p.z.values() {
            z.push_str(&format!(",{v}"));
        }
        z.push('\n');
    }
    write_text(&dir.join(Z_FILE), &z)?;

    let mut seg = String::from("label,roi_pixels,own_clean,fallback");
    for k in 0..channels {
        seg.push_str(&format!(",b_{k}"));
    }
    seg.push('\n');
    for s in &result.segments {
        // Fallback descriptions are fixed comma-free phrases.
        seg.push_str(&format!(
            "{},{},{},{}",
            s.label,
            s.roi_pixels,
            s.own_clean,
            s.fallback.as_deref().unwrap_or("")
        ));
        for v in s.background.values() {
            seg.push_str(&format!(",{v}"));
        }
        seg.push('\n');
    }
    write_text(&dir.join(SEGMENTS_FILE), &seg)?;

    io::save_matrix_csv(result.transform.inv_sqrt(), &dir.join(WHITENING_FILE))?;
    result.stats.export_csv(wavelengths, &dir.join(MEAN_FILE), &dir.join(COVARIANCE_FILE))?;
    Ok(())
}

/// The parts of a result directory that scoring needs.
pub struct LoadedResult {
    /// (pixel index, segment label), one entry per whitened pixel.
    pub assignments: Vec<(u32, u32)>,
    pub backgrounds: Vec<(u32, Spectrum<f64>)>,
    pub whitener: SquareMatrix<f64>,
}

pub fn load_result(dir: &Path) -> Result<LoadedResult> {
    let z_path = dir.join(Z_FILE);
    let mut assignments = Vec::new();
    for (lineno, line) in read_text(&z_path)?.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Format {
            path: z_path.clone(),
            reason: format!("line {}: bad {what}", lineno + 1),
        };
        if fields.len() < 5 {
            return Err(bad("pixel row (needs index,row,col,segment,alpha,...)"));
        }
        let index: u32 = fields[0].trim().parse().map_err(|_| bad("pixel index"))?;
        let segment: u32 = fields[3].trim().parse().map_err(|_| bad("segment label"))?;
        assignments.push((index, segment));
    }

    let seg_path = dir.join(SEGMENTS_FILE);
    let mut backgrounds = Vec::new();
    for (lineno, line) in read_text(&seg_path)?.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let bad = |what: &str| Error::Format {
            path: seg_path.clone(),
            reason: format!("line {}: bad {what}", lineno + 1),
        };
        if fields.len() < 5 {
            return Err(bad("segment row (needs label,roi_pixels,own_clean,fallback,b_0,...)"));
        }
        let label: u32 = fields[0].trim().parse().map_err(|_| bad("segment label"))?;
        let mut b = Vec::with_capacity(fields.len() - 4);
        for f in &fields[4..] {
            b.push(f.trim().parse::<f64>().map_err(|_| bad("background value"))?);
        }
        backgrounds.push((label, Spectrum::new(b)));
    }

    let whitener = io::load_matrix_csv(&dir.join(WHITENING_FILE))?;
    Ok(LoadedResult { assignments, backgrounds, whitener })
}
