//! In-memory hyperspectral data model: cubes, per-pixel spectra, and masks.
//!
//! Cubes are stored band-sequential (one full spatial plane per channel), the
//! same layout as the on-disk payload, so saving and loading is a straight
//! byte copy. The value of pixel `(r, c)` in channel `k` lives at flat offset
//! `k * rows * cols + r * cols + c`.

use crate::error::{Error, Result};
use crate::real::Real;

/// One pixel's radiance (or whitened) values across all channels.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum<R = f64> {
    values: Vec<R>,
}

impl<R: Real> Spectrum<R> {
    pub fn new(values: Vec<R>) -> Self {
        Spectrum { values }
    }

    pub fn zeros(channels: usize) -> Self {
        Spectrum { values: vec![R::zero(); channels] }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[R] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [R] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<R> {
        self.values
    }

    /// Euclidean inner product with another spectrum of the same length.
    pub fn dot(&self, other: &Self) -> R {
        assert_eq!(self.len(), other.len(), "spectrum length mismatch");
        let mut acc = R::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            acc = acc + *a * *b;
        }
        acc
    }

    /// Squared Euclidean norm.
    pub fn squared_norm(&self) -> R {
        self.dot(self)
    }

    /// Element-wise difference `self - other`.
    pub fn minus(&self, other: &Self) -> Self {
        assert_eq!(self.len(), other.len(), "spectrum length mismatch");
        Spectrum {
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| *a - *b)
                .collect(),
        }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, R> {
        self.values.iter()
    }
}

/// Hyperspectral radiance cube with `rows x cols` pixels and `channels` bands.
#[derive(Debug, Clone, PartialEq)]
pub struct HsiCube<R = f64> {
    rows: usize,
    cols: usize,
    channels: usize,
    wavelengths: Vec<R>,
    data: Vec<R>,
}

impl<R: Real> HsiCube<R> {
    /// Builds a cube from band-sequential data. The wavelength grid must be
    /// strictly increasing and match the channel count; `data` must hold
    /// exactly `rows * cols * channels` values.
    pub fn new(rows: usize, cols: usize, wavelengths: Vec<R>, data: Vec<R>) -> Result<Self> {
        let channels = wavelengths.len();
        if rows == 0 || cols == 0 || channels == 0 {
            return Err(Error::Dimension(format!(
                "cube dimensions must be positive, got {rows}x{cols}x{channels}"
            )));
        }
        if data.len() != rows * cols * channels {
            return Err(Error::Dimension(format!(
                "cube {rows}x{cols}x{channels} needs {} values, got {}",
                rows * cols * channels,
                data.len()
            )));
        }
        validate_wavelengths(&wavelengths)?;
        Ok(HsiCube { rows, cols, channels, wavelengths, data })
    }

    /// All-zero cube over the given wavelength grid.
    pub fn zeros(rows: usize, cols: usize, wavelengths: Vec<R>) -> Result<Self> {
        let n = rows * cols * wavelengths.len();
        Self::new(rows, cols, wavelengths, vec![R::zero(); n])
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn num_pixels(&self) -> usize {
        self.rows * self.cols
    }

    pub fn wavelengths(&self) -> &[R] {
        &self.wavelengths
    }

    /// Flat band-sequential offset of pixel `(r, c)` in channel `k`.
    #[inline]
    pub fn offset(&self, r: usize, c: usize, k: usize) -> usize {
        k * self.rows * self.cols + r * self.cols + c
    }

    #[inline]
    pub fn value(&self, r: usize, c: usize, k: usize) -> R {
        self.data[self.offset(r, c, k)]
    }

    #[inline]
    pub fn set_value(&mut self, r: usize, c: usize, k: usize, v: R) {
        let off = self.offset(r, c, k);
        self.data[off] = v;
    }

    /// Raw band-sequential values.
    pub fn data(&self) -> &[R] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [R] {
        &mut self.data
    }

    /// One channel's full spatial plane.
    pub fn plane(&self, k: usize) -> &[R] {
        let px = self.num_pixels();
        &self.data[k * px..(k + 1) * px]
    }

    /// Gathers the spectrum of pixel `(r, c)` across all channels.
    pub fn pixel_spectrum(&self, r: usize, c: usize) -> Spectrum<R> {
        let px = self.num_pixels();
        let base = r * self.cols + c;
        let mut values = Vec::with_capacity(self.channels);
        for k in 0..self.channels {
            values.push(self.data[k * px + base]);
        }
        Spectrum::new(values)
    }

    /// Rearranges the cube into a pixel-major table (all channels of a pixel
    /// contiguous), which is what the distance kernels and estimators want.
    pub fn to_pixel_major(&self) -> PixelTable<R> {
        let px = self.num_pixels();
        let ch = self.channels;
        let mut data = vec![R::zero(); px * ch];
        for k in 0..ch {
            let plane = self.plane(k);
            for (i, v) in plane.iter().enumerate() {
                data[i * ch + k] = *v;
            }
        }
        PixelTable { pixels: px, channels: ch, data }
    }

    /// Errors if any stored value is NaN or infinite.
    pub fn check_finite(&self) -> Result<()> {
        for (i, v) in self.data.iter().enumerate() {
            if !v.is_finite() {
                let px = self.num_pixels();
                let k = i / px;
                let r = (i % px) / self.cols;
                let c = (i % px) % self.cols;
                return Err(Error::NonFinite(format!(
                    "cube value at pixel ({r}, {c}) channel {k} is {v}"
                )));
            }
        }
        Ok(())
    }
}

pub(crate) fn validate_wavelengths<R: Real>(wavelengths: &[R]) -> Result<()> {
    for w in wavelengths {
        if !w.is_finite() || *w <= R::zero() {
            return Err(Error::InvalidParam(format!("wavelength {w} must be finite and positive")));
        }
    }
    for pair in wavelengths.windows(2) {
        if pair[1] <= pair[0] {
            return Err(Error::InvalidParam(format!(
                "wavelength grid must be strictly increasing, got {} then {}",
                pair[0], pair[1]
            )));
        }
    }
    Ok(())
}

/// Pixel-major copy of a cube: row `i` holds all channels of pixel `i`
/// (linear index `r * cols + c`).
#[derive(Debug, Clone)]
pub struct PixelTable<R = f64> {
    pixels: usize,
    channels: usize,
    data: Vec<R>,
}

impl<R: Real> PixelTable<R> {
    pub fn pixels(&self) -> usize {
        self.pixels
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[R] {
        &self.data[i * self.channels..(i + 1) * self.channels]
    }
}

/// Boolean pixel mask over the same spatial grid as a cube.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMask {
    rows: usize,
    cols: usize,
    flags: Vec<bool>,
}

impl PixelMask {
    /// All-false mask.
    pub fn new(rows: usize, cols: usize) -> Self {
        PixelMask { rows, cols, flags: vec![false; rows * cols] }
    }

    pub fn from_flags(rows: usize, cols: usize, flags: Vec<bool>) -> Result<Self> {
        if flags.len() != rows * cols {
            return Err(Error::Dimension(format!(
                "mask {rows}x{cols} needs {} flags, got {}",
                rows * cols,
                flags.len()
            )));
        }
        Ok(PixelMask { rows, cols, flags })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.flags[r * self.cols + c]
    }

    #[inline]
    pub fn get_linear(&self, i: usize) -> bool {
        self.flags[i]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: bool) {
        self.flags[r * self.cols + c] = v;
    }

    pub fn flags(&self) -> &[bool] {
        &self.flags
    }

    /// Number of `true` pixels.
    pub fn count(&self) -> usize {
        self.flags.iter().filter(|f| **f).count()
    }

    /// Linear indices of all `true` pixels in row-major order.
    pub fn true_indices(&self) -> Vec<usize> {
        self.flags
            .iter()
            .enumerate()
            .filter_map(|(i, f)| if *f { Some(i) } else { None })
            .collect()
    }
}
