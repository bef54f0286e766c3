//! Scene-level statistics and the whitening transform.
//!
//! The detection-side consumers of this toolkit operate on whitened spectra
//! `z = C^{-1/2} (x - b)`. The covariance `C` is always estimated globally
//! (excluding the plume region); what the rest of the crate varies is the
//! background `b` subtracted per pixel. This module computes the global
//! statistics, the symmetric inverse square root with eigenvalue clamping,
//! and the whitening map itself.

use std::path::Path;

use crate::cube::{HsiCube, PixelMask, Spectrum};
use crate::error::{Error, Result};
use crate::io;
use crate::linalg::{sym_eigen, SquareMatrix};
use crate::real::Real;

/// Mean spectrum and channel covariance of the included pixels.
#[derive(Debug, Clone)]
pub struct SceneStats<R = f64> {
    pub mean: Spectrum<R>,
    pub covariance: SquareMatrix<R>,
    /// Number of pixels that went into the estimate (0 when imported from
    /// CSV, which does not record it).
    pub pixel_count: usize,
}

/// Symmetric whitening matrix `C^{-1/2}` plus the regularization it used.
#[derive(Debug, Clone)]
pub struct WhiteningTransform<R = f64> {
    inv_sqrt: SquareMatrix<R>,
    regularized: SquareMatrix<R>,
    ridge_scale: f64,
}

impl<R: Real> WhiteningTransform<R> {
    /// The whitening matrix itself.
    pub fn inv_sqrt(&self) -> &SquareMatrix<R> {
        &self.inv_sqrt
    }

    /// The covariance after eigenvalue clamping; `inv_sqrt` is exactly its
    /// inverse square root.
    pub fn regularized_covariance(&self) -> &SquareMatrix<R> {
        &self.regularized
    }

    pub fn ridge_scale(&self) -> f64 {
        self.ridge_scale
    }

    pub fn channels(&self) -> usize {
        self.inv_sqrt.size()
    }
}

/// Mean and channel covariance over every pixel **not** covered by `exclude`.
///
/// Runs in two passes (mean first, then centered outer products) in fixed
/// row-major pixel order, with the conventional `N - 1` divisor. At least
/// `channels + 1` pixels must remain outside the mask.
pub fn global_stats<R: Real>(cube: &HsiCube<R>, exclude: &PixelMask) -> Result<SceneStats<R>> {
    if exclude.rows() != cube.rows() || exclude.cols() != cube.cols() {
        return Err(Error::Dimension(format!(
            "exclusion mask is {}x{} but cube is {}x{}",
            exclude.rows(),
            exclude.cols(),
            cube.rows(),
            cube.cols()
        )));
    }
    let ch = cube.channels();
    let n_inc = cube.num_pixels() - exclude.count();
    if n_inc < ch + 1 {
        return Err(Error::Degenerate(format!(
            "{n_inc} pixels outside the exclusion mask cannot support a {ch}-channel covariance \
             (need at least {})",
            ch + 1
        )));
    }

    // Pass 1: mean, accumulated plane by plane for cache friendliness.
    let count = R::of(n_inc as f64);
    let mut mean = vec![R::zero(); ch];
    for k in 0..ch {
        let plane = cube.plane(k);
        let mut acc = R::zero();
        for (i, v) in plane.iter().enumerate() {
            if !exclude.get_linear(i) {
                acc = acc + *v;
            }
        }
        mean[k] = acc / count;
    }

    // Pass 2: centered outer products over the included pixels.
    let table = cube.to_pixel_major();
    let mut cov = vec![R::zero(); ch * ch];
    let mut centered = vec![R::zero(); ch];
    for i in 0..cube.num_pixels() {
        if exclude.get_linear(i) {
            continue;
        }
        let row = table.row(i);
        for k in 0..ch {
            centered[k] = row[k] - mean[k];
        }
        for a in 0..ch {
            let ca = centered[a];
            let dst = &mut cov[a * ch + a..(a + 1) * ch];
            for (d, cb) in dst.iter_mut().zip(&centered[a..]) {
                *d = *d + ca * *cb;
            }
        }
    }
    let denom = R::of((n_inc - 1) as f64);
    for a in 0..ch {
        for b in a..ch {
            let v = cov[a * ch + b] / denom;
            cov[a * ch + b] = v;
            cov[b * ch + a] = v;
        }
    }

    Ok(SceneStats {
        mean: Spectrum::new(mean),
        covariance: SquareMatrix::from_flat(ch, cov)?,
        pixel_count: n_inc,
    })
}

/// Symmetric inverse square root of the covariance with eigenvalue clamping.
///
/// Each eigenvalue is raised to at least `ridge_scale` times the largest one
/// before inversion, so near-singular covariances stay usable. With
/// `ridge_scale = 0` a rank-deficient (or all-zero) covariance is an error
/// rather than an infinite transform.
pub fn inverse_sqrt<R: Real>(stats: &SceneStats<R>, ridge_scale: f64) -> Result<WhiteningTransform<R>> {
    if !ridge_scale.is_finite() || ridge_scale < 0.0 {
        return Err(Error::InvalidParam(format!(
            "ridge_scale must be finite and non-negative, got {ridge_scale}"
        )));
    }
    let eigen = sym_eigen(&stats.covariance)?;
    let lambda_max = *eigen
        .values
        .last()
        .expect("covariance has at least one channel");
    if lambda_max <= R::zero() {
        return Err(Error::Degenerate(
            "covariance has no positive eigenvalue (constant scene?); \
             whitening is undefined"
                .into(),
        ));
    }
    let floor = R::of(ridge_scale) * lambda_max;
    let clamped: Vec<R> = eigen.values.iter().map(|l| if *l < floor { floor } else { *l }).collect();
    if clamped.iter().any(|l| *l <= R::zero()) {
        return Err(Error::Degenerate(
            "covariance is singular and ridge_scale is 0; raise ridge_scale to regularize".into(),
        ));
    }
    let mut idx = 0;
    let regularized = eigen.recompose(|_| {
        let v = clamped[idx];
        idx += 1;
        v
    });
    let mut idx = 0;
    let inv_sqrt = eigen.recompose(|_| {
        let v = R::one() / clamped[idx].sqrt();
        idx += 1;
        v
    });
    Ok(WhiteningTransform { inv_sqrt, regularized, ridge_scale })
}

/// Applies the whitening map: `inv_sqrt * (x - background)`.
pub fn whiten<R: Real>(
    x: &Spectrum<R>,
    background: &Spectrum<R>,
    transform: &WhiteningTransform<R>,
) -> Spectrum<R> {
    assert_eq!(x.len(), transform.channels(), "spectrum/transform channel mismatch");
    assert_eq!(x.len(), background.len(), "spectrum/background channel mismatch");
    let centered: Vec<R> = x
        .values()
        .iter()
        .zip(background.values())
        .map(|(a, b)| *a - *b)
        .collect();
    Spectrum::new(transform.inv_sqrt.mul_vec(&centered))
}

impl<R: Real> SceneStats<R> {
    /// Writes the mean (as a `wavelength_um,value` table) and the covariance
    /// (as a plain square CSV) for inspection or fixtures.
    pub fn export_csv(&self, wavelengths: &[R], mean_path: &Path, cov_path: &Path) -> Result<()> {
        io::save_spectrum_csv(wavelengths, self.mean.values(), mean_path)?;
        io::save_matrix_csv(&self.covariance, cov_path)
    }

    /// Reads statistics written by [`SceneStats::export_csv`]. The pixel
    /// count is not stored in the CSV form and comes back as 0.
    pub fn import_csv(mean_path: &Path, cov_path: &Path) -> Result<Self> {
        let (_, mean) = io::load_spectrum_csv::<R>(mean_path)?;
        let covariance = io::load_matrix_csv::<R>(cov_path)?;
        if covariance.size() != mean.len() {
            return Err(Error::Dimension(format!(
                "mean has {} channels but covariance is {}x{}",
                mean.len(),
                covariance.size(),
                covariance.size()
            )));
        }
        Ok(SceneStats { mean: Spectrum::new(mean), covariance, pixel_count: 0 })
    }
}
