//! Synthetic scene and gas-plume simulator with exact ground truth.
//!
//! A scene is a grid of materials, each with an emissivity curve and a
//! surface-temperature range. Per-pixel background radiance follows the
//! three-layer model `L_bg = τ_a [ε B(T_bg) + ρ L_d] + noise`, with Planck
//! blackbody radiance `B`, flat-or-curved atmospheric transmittance `τ_a`,
//! and downwelling radiance `L_d`. A Gaussian dispersion model turns a stack
//! location, emission rate, and wind into a per-pixel gas column density;
//! the plume temperature blends linearly from stack to ambient with relative
//! concentration; and the gas signal is implanted per pixel as
//! `L = L_bg + τ_a (1 − τ_g) [B(T_p) − ε B(T_bg) − ρ L_d]` with Beer–Lambert
//! gas transmittance `τ_g = exp(−k · CL)`. Every intermediate quantity is
//! kept, so estimators can be scored against exact truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cube::{HsiCube, PixelMask};
use crate::error::{Error, Result};
use crate::real::Real;

// ---------------------------------------------------------------------------
// Planck radiometry
// ---------------------------------------------------------------------------

/// CODATA 2018 Planck constant, J·s.
const PLANCK_H: f64 = 6.626_070_15e-34;
/// Exact speed of light, m/s.
const LIGHT_C: f64 = 299_792_458.0;
/// CODATA 2018 Boltzmann constant, J/K.
const BOLTZMANN_K: f64 = 1.380_649e-23;

/// Planck spectral radiance `B(λ, T)` in W·m⁻²·sr⁻¹·µm⁻¹ for a wavelength
/// in micrometers and a temperature in kelvin.
pub fn planck(wavelength_um: f64, temp_k: f64) -> Result<f64> {
    if !(wavelength_um.is_finite() && wavelength_um > 0.0) {
        return Err(Error::InvalidParam(format!(
            "wavelength must be positive, got {wavelength_um} um"
        )));
    }
    if !(temp_k.is_finite() && temp_k > 0.0) {
        return Err(Error::InvalidParam(format!("temperature must be positive, got {temp_k} K")));
    }
    let lambda_m = wavelength_um * 1e-6;
    let exponent = PLANCK_H * LIGHT_C / (lambda_m * BOLTZMANN_K * temp_k);
    // exp_m1 keeps precision at long wavelengths / high temperatures; the
    // 1e-6 converts per-meter spectral density to per-micrometer.
    let radiance_m = 2.0 * PLANCK_H * LIGHT_C * LIGHT_C / lambda_m.powi(5) / exponent.exp_m1();
    Ok(radiance_m * 1e-6)
}

// ---------------------------------------------------------------------------
// Gaussian plume dispersion
// ---------------------------------------------------------------------------

/// Validated runtime dispersion/radiometry parameters of one plume.
#[derive(Debug, Clone, PartialEq)]
pub struct PlumeParams {
    /// Stack location as fractional (row, col) pixel coordinates.
    pub source: [f64; 2],
    /// Emission rate Q, ppm·m³/s.
    pub emission_rate: f64,
    /// Wind speed u, m/s (must be positive).
    pub wind_speed: f64,
    /// Direction the wind blows toward, radians; 0 points along +col and
    /// π/2 along +row.
    pub wind_direction_rad: f64,
    /// Crosswind spread growth: σ_y = sigma_y_coeff · x^sigma_exponent.
    pub sigma_y_coeff: f64,
    /// Vertical spread growth: σ_z = sigma_z_coeff · x^sigma_exponent.
    pub sigma_z_coeff: f64,
    pub sigma_exponent: f64,
    /// Stack height H, m.
    pub stack_height: f64,
    /// Ground distance covered by one pixel, m.
    pub pixel_size: f64,
    pub stack_temp_k: f64,
    pub ambient_temp_k: f64,
}

impl PlumeParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            (self.wind_speed, "wind_speed"),
            (self.sigma_y_coeff, "sigma_y_coeff"),
            (self.sigma_z_coeff, "sigma_z_coeff"),
            (self.sigma_exponent, "sigma_exponent"),
            (self.pixel_size, "pixel_size"),
            (self.stack_temp_k, "stack_temp_k"),
            (self.ambient_temp_k, "ambient_temp_k"),
        ];
        for (v, name) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParam(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.emission_rate.is_finite() && self.emission_rate >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "emission_rate must be nonnegative, got {}",
                self.emission_rate
            )));
        }
        if !(self.stack_height.is_finite() && self.stack_height >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "stack_height must be nonnegative, got {}",
                self.stack_height
            )));
        }
        if !(self.source[0].is_finite()
            && self.source[1].is_finite()
            && self.wind_direction_rad.is_finite())
        {
            return Err(Error::NonFinite("plume source and wind direction must be finite".into()));
        }
        Ok(())
    }
}

/// Closed-form `∫₀^∞ [exp(−(z−H)²/2σ²) + exp(−(z+H)²/2σ²)] dz`: the direct
/// plume layer plus its ground reflection, each an error-function term.
pub fn vertical_integral(sigma_z: f64, stack_height: f64) -> f64 {
    let half_gauss = sigma_z * (std::f64::consts::PI / 2.0).sqrt();
    let e = libm::erf(stack_height / (sigma_z * std::f64::consts::SQRT_2));
    half_gauss * (1.0 + e) + half_gauss * (1.0 - e)
}

/// Nadir-integrated gas column density (ppm·m) a sensor sees at a pixel.
///
/// The pixel offset from the source is rotated into the wind frame
/// (downwind `x`, crosswind `y`); pixels at or upwind of the stack get 0.
pub fn column_density(row: usize, col: usize, params: &PlumeParams) -> f64 {
    let dr = (row as f64 - params.source[0]) * params.pixel_size;
    let dc = (col as f64 - params.source[1]) * params.pixel_size;
    let (sin_d, cos_d) = params.wind_direction_rad.sin_cos();
    let x = dr * sin_d + dc * cos_d;
    let y = dr * cos_d - dc * sin_d;
    if x <= 0.0 {
        return 0.0;
    }
    let sigma_y = params.sigma_y_coeff * x.powf(params.sigma_exponent);
    let sigma_z = params.sigma_z_coeff * x.powf(params.sigma_exponent);
    let norm = params.emission_rate
        / (2.0 * std::f64::consts::PI * params.wind_speed * sigma_y * sigma_z);
    norm * (-y * y / (2.0 * sigma_y * sigma_y)).exp() * vertical_integral(sigma_z, params.stack_height)
}

/// Plume temperature: linear blend from ambient (no gas) to stack
/// temperature (peak concentration). Returns the ambient temperature when
/// there is no concentration to blend with.
pub fn plume_temperature(cl: f64, max_cl: f64, params: &PlumeParams) -> f64 {
    if max_cl <= 0.0 || cl <= 0.0 {
        return params.ambient_temp_k;
    }
    params.ambient_temp_k + (params.stack_temp_k - params.ambient_temp_k) * (cl / max_cl)
}

// ---------------------------------------------------------------------------
// Gas spectra and per-scene surface/atmosphere state
// ---------------------------------------------------------------------------

/// Per-channel gas absorption coefficients, (ppm·m)⁻¹, on the cube's grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GasSpectrum {
    pub wavelengths_um: Vec<f64>,
    pub absorption: Vec<f64>,
}

impl GasSpectrum {
    /// Builds the absorption curve as a sum of Gaussian bands.
    pub fn from_bands(wavelengths_um: &[f64], bands: &[GasBand]) -> Result<Self> {
        for b in bands {
            if !(b.width_um.is_finite() && b.width_um > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "gas band width must be positive, got {}",
                    b.width_um
                )));
            }
            if !(b.peak.is_finite() && b.peak >= 0.0) {
                return Err(Error::InvalidParam(format!(
                    "gas band peak must be nonnegative, got {}",
                    b.peak
                )));
            }
            if !(b.center_um.is_finite() && b.center_um > 0.0) {
                return Err(Error::InvalidParam(format!(
                    "gas band center must be positive, got {}",
                    b.center_um
                )));
            }
        }
        let absorption = wavelengths_um
            .iter()
            .map(|&w| {
                bands
                    .iter()
                    .map(|b| {
                        let d = (w - b.center_um) / b.width_um;
                        b.peak * (-0.5 * d * d).exp()
                    })
                    .sum()
            })
            .collect();
        Ok(GasSpectrum { wavelengths_um: wavelengths_um.to_vec(), absorption })
    }

    pub fn validate_against(&self, wavelengths_um: &[f64]) -> Result<()> {
        if self.absorption.len() != wavelengths_um.len()
            || self.wavelengths_um.len() != wavelengths_um.len()
        {
            return Err(Error::Dimension(format!(
                "gas spectrum has {} channels but the cube has {}",
                self.absorption.len(),
                wavelengths_um.len()
            )));
        }
        if self.absorption.iter().any(|k| !k.is_finite() || *k < 0.0) {
            return Err(Error::InvalidParam(
                "gas absorption coefficients must be finite and nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Per-scene surface and atmosphere state used by the implant equation.
#[derive(Debug, Clone)]
pub struct AtmoSurfaceParams {
    /// Atmospheric transmittance per channel, in [0, 1].
    pub transmittance: Vec<f64>,
    /// Downwelling radiance per channel, W·m⁻²·sr⁻¹·µm⁻¹.
    pub downwelling: Vec<f64>,
    /// Surface emissivity, pixel-major (`pixel * channels + channel`).
    pub emissivity: Vec<f64>,
    /// Surface temperature per pixel, K. Reflectance is `1 − emissivity`.
    pub surface_temp_k: Vec<f64>,
}

impl AtmoSurfaceParams {
    fn validate(&self, pixels: usize, channels: usize) -> Result<()> {
        if self.transmittance.len() != channels || self.downwelling.len() != channels {
            return Err(Error::Dimension(
                "atmosphere curves must have one entry per channel".into(),
            ));
        }
        if self.emissivity.len() != pixels * channels || self.surface_temp_k.len() != pixels {
            return Err(Error::Dimension(
                "surface emissivity/temperature must cover every pixel".into(),
            ));
        }
        if self.transmittance.iter().any(|t| !t.is_finite() || !(0.0..=1.0).contains(t)) {
            return Err(Error::InvalidParam("transmittance must lie in [0, 1]".into()));
        }
        if self.emissivity.iter().any(|e| !e.is_finite() || !(0.0..=1.0).contains(e)) {
            return Err(Error::InvalidParam("emissivity must lie in [0, 1]".into()));
        }
        if self.downwelling.iter().any(|l| !l.is_finite() || *l < 0.0) {
            return Err(Error::InvalidParam("downwelling radiance must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Exact per-pixel truth recorded by the simulator.
#[derive(Debug, Clone)]
pub struct SimulationTruth<R = f64> {
    /// Pre-implant background radiance (sensor noise included).
    pub background: HsiCube<R>,
    /// Gas column density per pixel, ppm·m, row-major.
    pub column_density: Vec<f64>,
    /// Plume temperature per pixel, K (ambient wherever there is no gas).
    pub plume_temp_k: Vec<f64>,
    /// Pixels whose column density exceeds the configured fraction of the
    /// scene maximum.
    pub mask: PixelMask,
    pub max_column_density: f64,
}

// ---------------------------------------------------------------------------
// Implanting
// ---------------------------------------------------------------------------

/// Implants the gas signal into a background-radiance cube:
/// `L = L_bg + τ_a (1 − τ_g) [B(T_p) − ε B(T_bg) − ρ L_d]` per channel with
/// `τ_g = exp(−k · CL)`. Pixels with zero column density are returned
/// bit-unchanged.
pub fn implant<R: Real>(
    cube: &HsiCube<R>,
    truth: &SimulationTruth<R>,
    gas: &GasSpectrum,
    atmo: &AtmoSurfaceParams,
) -> Result<HsiCube<R>> {
    let pixels = cube.num_pixels();
    let channels = cube.channels();
    if truth.column_density.len() != pixels || truth.plume_temp_k.len() != pixels {
        return Err(Error::Dimension("truth maps must cover every pixel of the cube".into()));
    }
    let wavelengths: Vec<f64> = cube.wavelengths().iter().map(|w| w.as_f64()).collect();
    gas.validate_against(&wavelengths)?;
    atmo.validate(pixels, channels)?;
    if truth.column_density.iter().any(|cl| !cl.is_finite() || *cl < 0.0) {
        return Err(Error::InvalidParam("column density must be finite and nonnegative".into()));
    }

    let mut out = cube.clone();
    let cols = cube.cols();
    for p in 0..pixels {
        let cl = truth.column_density[p];
        if cl == 0.0 {
            continue;
        }
        let (r, c) = (p / cols, p % cols);
        let t_plume = truth.plume_temp_k[p];
        let t_surface = atmo.surface_temp_k[p];
        for k in 0..channels {
            let absorb = gas.absorption[k];
            if absorb == 0.0 {
                continue;
            }
            let gas_transmittance = (-absorb * cl).exp();
            let eps = atmo.emissivity[p * channels + k];
            let bracket = planck(wavelengths[k], t_plume)?
                - eps * planck(wavelengths[k], t_surface)?
                - (1.0 - eps) * atmo.downwelling[k];
            let delta = atmo.transmittance[k] * (1.0 - gas_transmittance) * bracket;
            let l = out.value(r, c, k).as_f64() + delta;
            out.set_value(r, c, k, R::of(l));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Scene configuration (JSON) and synthesis
// ---------------------------------------------------------------------------

/// Evenly spaced wavelength grid, micrometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavelengthGrid {
    pub min_um: f64,
    pub max_um: f64,
    pub channels: usize,
}

impl WavelengthGrid {
    pub fn build(&self) -> Result<Vec<f64>> {
        if self.channels < 2 {
            return Err(Error::InvalidParam("a wavelength grid needs at least 2 channels".into()));
        }
        if !(self.min_um.is_finite() && self.max_um.is_finite())
            || self.min_um <= 0.0
            || self.max_um <= self.min_um
        {
            return Err(Error::InvalidParam(format!(
                "wavelength bounds must satisfy 0 < min < max, got [{}, {}]",
                self.min_um, self.max_um
            )));
        }
        let step = (self.max_um - self.min_um) / (self.channels - 1) as f64;
        Ok((0..self.channels).map(|i| self.min_um + step * i as f64).collect())
    }
}

/// Flat atmosphere with optional per-channel overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtmosphereConfig {
    /// Flat transmittance used when no curve is supplied.
    #[serde(default = "default_transmittance")]
    pub transmittance: f64,
    /// Blackbody temperature generating the flat downwelling radiance.
    #[serde(default = "default_sky_temp")]
    pub sky_temp_k: f64,
    #[serde(default)]
    pub transmittance_curve: Option<Vec<f64>>,
    #[serde(default)]
    pub downwelling_curve: Option<Vec<f64>>,
}

fn default_transmittance() -> f64 {
    0.85
}
fn default_sky_temp() -> f64 {
    260.0
}

impl Default for AtmosphereConfig {
    fn default() -> Self {
        AtmosphereConfig {
            transmittance: default_transmittance(),
            sky_temp_k: default_sky_temp(),
            transmittance_curve: None,
            downwelling_curve: None,
        }
    }
}

/// Gaussian dip (positive depth) or bump (negative depth) in an emissivity
/// curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmissivityFeature {
    pub center_um: f64,
    pub width_um: f64,
    pub depth: f64,
}

/// One material: emissivity curve, temperature range, and footprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialConfig {
    pub name: String,
    pub base_emissivity: f64,
    #[serde(default)]
    pub features: Vec<EmissivityFeature>,
    /// Per-pixel surface temperature is drawn uniformly from [lo, hi].
    pub temp_k: [f64; 2],
    /// Half-open rectangles `[row0, col0, row1, col1]`; the rectangles of
    /// all materials must partition the grid exactly.
    pub regions: Vec<[usize; 4]>,
}

impl MaterialConfig {
    /// The material's emissivity at one wavelength.
    pub fn emissivity_at(&self, wavelength_um: f64) -> f64 {
        let mut e = self.base_emissivity;
        for f in &self.features {
            let d = (wavelength_um - f.center_um) / f.width_um;
            e -= f.depth * (-0.5 * d * d).exp();
        }
        e
    }
}

/// One Gaussian absorption band of the synthetic gas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasBand {
    pub center_um: f64,
    pub width_um: f64,
    /// Peak absorption coefficient, (ppm·m)⁻¹.
    pub peak: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GasConfig {
    pub name: String,
    pub bands: Vec<GasBand>,
}

/// Plume section of the scene configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlumeConfig {
    pub gas: GasConfig,
    /// Fractional (row, col) stack location.
    pub source: [f64; 2],
    pub emission_rate: f64,
    pub wind_speed: f64,
    pub wind_direction_rad: f64,
    #[serde(default = "default_sigma_y")]
    pub sigma_y_coeff: f64,
    #[serde(default = "default_sigma_z")]
    pub sigma_z_coeff: f64,
    #[serde(default = "default_sigma_exponent")]
    pub sigma_exponent: f64,
    pub stack_height: f64,
    #[serde(default = "default_pixel_size")]
    pub pixel_size: f64,
    pub stack_temp_k: f64,
    pub ambient_temp_k: f64,
    /// A pixel belongs to the plume mask when its column density exceeds
    /// this fraction of the scene maximum.
    #[serde(default = "default_mask_threshold")]
    pub mask_threshold_rel: f64,
}

fn default_sigma_y() -> f64 {
    0.08
}
fn default_sigma_z() -> f64 {
    0.06
}
fn default_sigma_exponent() -> f64 {
    0.9
}
fn default_pixel_size() -> f64 {
    1.0
}
fn default_mask_threshold() -> f64 {
    0.01
}

impl PlumeConfig {
    pub fn params(&self) -> Result<PlumeParams> {
        let params = PlumeParams {
            source: self.source,
            emission_rate: self.emission_rate,
            wind_speed: self.wind_speed,
            wind_direction_rad: self.wind_direction_rad,
            sigma_y_coeff: self.sigma_y_coeff,
            sigma_z_coeff: self.sigma_z_coeff,
            sigma_exponent: self.sigma_exponent,
            stack_height: self.stack_height,
            pixel_size: self.pixel_size,
            stack_temp_k: self.stack_temp_k,
            ambient_temp_k: self.ambient_temp_k,
        };
        params.validate()?;
        if !(self.mask_threshold_rel.is_finite() && (0.0..1.0).contains(&self.mask_threshold_rel))
        {
            return Err(Error::InvalidParam(format!(
                "mask_threshold_rel must lie in [0, 1), got {}",
                self.mask_threshold_rel
            )));
        }
        Ok(params)
    }
}

/// Complete scene description, serialized as JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub rows: usize,
    pub cols: usize,
    pub wavelengths: WavelengthGrid,
    /// Standard deviation of the additive per-channel sensor noise.
    pub noise_sigma: f64,
    #[serde(default)]
    pub atmosphere: AtmosphereConfig,
    pub materials: Vec<MaterialConfig>,
    #[serde(default)]
    pub plume: Option<PlumeConfig>,
}

impl SceneConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text)
            .map_err(|e| Error::InvalidParam(format!("scene config does not parse: {e}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene config serializes")
    }

    fn validate(&self, wavelengths: &[f64]) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(Error::InvalidParam("scene grid must be nonempty".into()));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::InvalidParam(format!(
                "noise_sigma must be nonnegative, got {}",
                self.noise_sigma
            )));
        }
        if self.materials.is_empty() {
            return Err(Error::InvalidParam("the scene needs at least one material".into()));
        }
        let atmo = &self.atmosphere;
        if !(atmo.transmittance.is_finite() && (0.0..=1.0).contains(&atmo.transmittance)) {
            return Err(Error::InvalidParam("transmittance must lie in [0, 1]".into()));
        }
        if !(atmo.sky_temp_k.is_finite() && atmo.sky_temp_k > 0.0) {
            return Err(Error::InvalidParam("sky_temp_k must be positive".into()));
        }
        for (curve, name) in [
            (&atmo.transmittance_curve, "transmittance_curve"),
            (&atmo.downwelling_curve, "downwelling_curve"),
        ] {
            if let Some(c) = curve {
                if c.len() != wavelengths.len() {
                    return Err(Error::Dimension(format!(
                        "{name} has {} entries but the grid has {} channels",
                        c.len(),
                        wavelengths.len()
                    )));
                }
            }
        }
        for m in &self.materials {
            if !(m.temp_k[0].is_finite() && m.temp_k[1].is_finite())
                || m.temp_k[0] <= 0.0
                || m.temp_k[1] < m.temp_k[0]
            {
                return Err(Error::InvalidParam(format!(
                    "material '{}' needs 0 < temp lo <= hi, got [{}, {}]",
                    m.name, m.temp_k[0], m.temp_k[1]
                )));
            }
            if m.regions.is_empty() {
                return Err(Error::InvalidParam(format!(
                    "material '{}' covers no region",
                    m.name
                )));
            }
            for f in &m.features {
                if !(f.width_um.is_finite() && f.width_um > 0.0) || !f.center_um.is_finite() {
                    return Err(Error::InvalidParam(format!(
                        "material '{}' has a malformed emissivity feature",
                        m.name
                    )));
                }
            }
            for &w in wavelengths {
                let e = m.emissivity_at(w);
                if !(0.0..=1.0).contains(&e) {
                    return Err(Error::InvalidParam(format!(
                        "material '{}' leaves emissivity range [0, 1] at {w} um (value {e})",
                        m.name
                    )));
                }
            }
        }
        Ok(())
    }

    /// Paints material indices onto the grid, rejecting overlapping
    /// rectangles and uncovered pixels.
    fn material_labels(&self) -> Result<Vec<u32>> {
        const UNSET: u32 = u32::MAX;
        let mut labels = vec![UNSET; self.rows * self.cols];
        for (idx, m) in self.materials.iter().enumerate() {
            for &[r0, c0, r1, c1] in &m.regions {
                if r0 >= r1 || c0 >= c1 || r1 > self.rows || c1 > self.cols {
                    return Err(Error::InvalidParam(format!(
                        "material '{}' region [{r0},{c0},{r1},{c1}] does not fit a {}x{} grid",
                        m.name, self.rows, self.cols
                    )));
                }
                for r in r0..r1 {
                    for c in c0..c1 {
                        let cell = &mut labels[r * self.cols + c];
                        if *cell != UNSET {
                            return Err(Error::InvalidParam(format!(
                                "materials '{}' and '{}' overlap at pixel ({r}, {c})",
                                self.materials[*cell as usize].name, m.name
                            )));
                        }
                        *cell = idx as u32;
                    }
                }
            }
        }
        if let Some(p) = labels.iter().position(|&l| l == UNSET) {
            return Err(Error::InvalidParam(format!(
                "no material covers pixel ({}, {})",
                p / self.cols,
                p % self.cols
            )));
        }
        Ok(labels)
    }
}

/// Everything the simulator produces for one scene.
#[derive(Debug, Clone)]
pub struct SceneRealization<R = f64> {
    /// Final radiance cube (plume implanted when configured).
    pub cube: HsiCube<R>,
    pub truth: SimulationTruth<R>,
    /// Absorption curve of the implanted gas, when a plume was configured.
    pub gas: Option<GasSpectrum>,
    pub atmo: AtmoSurfaceParams,
    /// Material index per pixel, row-major.
    pub material_labels: Vec<u32>,
}

/// Fills `out` with standard normal draws (Box–Muller over the generator's
/// uniform stream).
fn fill_standard_normal(rng: &mut ChaCha8Rng, out: &mut [f64]) {
    let mut i = 0;
    while i < out.len() {
        let u1: f64 = 1.0 - rng.gen::<f64>(); // (0, 1]: keeps ln() finite
        let u2: f64 = rng.gen::<f64>();
        let radius = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (2.0 * std::f64::consts::PI * u2).sin_cos();
        out[i] = radius * c;
        i += 1;
        if i < out.len() {
            out[i] = radius * s;
            i += 1;
        }
    }
}

/// Synthesizes the background scene: per-pixel radiance from the material
/// map plus seeded sensor noise. The returned truth has zero column density
/// everywhere (no plume yet).
pub fn synth_scene<R: Real>(config: &SceneConfig) -> Result<(HsiCube<R>, SimulationTruth<R>)> {
    let full = synth_scene_full::<R>(config)?;
    Ok((full.0.clone(), zero_truth(full.0)))
}

fn zero_truth<R: Real>(background: HsiCube<R>) -> SimulationTruth<R> {
    let pixels = background.num_pixels();
    let (rows, cols) = (background.rows(), background.cols());
    SimulationTruth {
        background,
        column_density: vec![0.0; pixels],
        plume_temp_k: vec![0.0; pixels],
        mask: PixelMask::new(rows, cols),
        max_column_density: 0.0,
    }
}

fn synth_scene_full<R: Real>(
    config: &SceneConfig,
) -> Result<(HsiCube<R>, AtmoSurfaceParams, Vec<u32>)> {
    let wavelengths = config.wavelengths.build()?;
    config.validate(&wavelengths)?;
    let labels = config.material_labels()?;
    let channels = wavelengths.len();
    let pixels = config.rows * config.cols;

    let transmittance: Vec<f64> = match &config.atmosphere.transmittance_curve {
        Some(c) => c.clone(),
        None => vec![config.atmosphere.transmittance; channels],
    };
    if transmittance.iter().any(|t| !t.is_finite() || !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidParam("transmittance curve must lie in [0, 1]".into()));
    }
    let downwelling: Vec<f64> = match &config.atmosphere.downwelling_curve {
        Some(c) => c.clone(),
        None => wavelengths
            .iter()
            .map(|&w| planck(w, config.atmosphere.sky_temp_k))
            .collect::<Result<_>>()?,
    };
    if downwelling.iter().any(|l| !l.is_finite() || *l < 0.0) {
        return Err(Error::InvalidParam("downwelling curve must be nonnegative".into()));
    }

    // Per-material emissivity curves, evaluated once.
    let curves: Vec<Vec<f64>> = config
        .materials
        .iter()
        .map(|m| wavelengths.iter().map(|&w| m.emissivity_at(w)).collect())
        .collect();

    let mut emissivity = vec![0.0f64; pixels * channels];
    let mut surface_temp = vec![0.0f64; pixels];
    let mut cube = HsiCube::<R>::zeros(
        config.rows,
        config.cols,
        wavelengths.iter().map(|&w| R::of(w)).collect(),
    )?;

    // One independent generator stream per pixel: the draw sequence of a
    // pixel never depends on any other pixel's draws.
    let base_rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut noise = vec![0.0f64; channels];
    for p in 0..pixels {
        let mut rng = base_rng.clone();
        rng.set_stream(p as u64);
        let material = &config.materials[labels[p] as usize];
        let [lo, hi] = material.temp_k;
        let t_bg = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        surface_temp[p] = t_bg;
        if config.noise_sigma > 0.0 {
            fill_standard_normal(&mut rng, &mut noise);
        } else {
            noise.iter_mut().for_each(|n| *n = 0.0);
        }
        let curve = &curves[labels[p] as usize];
        let (r, c) = (p / config.cols, p % config.cols);
        for k in 0..channels {
            let eps = curve[k];
            emissivity[p * channels + k] = eps;
            let thermal = eps * planck(wavelengths[k], t_bg)?;
            let reflected = (1.0 - eps) * downwelling[k];
            let radiance =
                transmittance[k] * (thermal + reflected) + config.noise_sigma * noise[k];
            cube.set_value(r, c, k, R::of(radiance));
        }
    }

    let atmo = AtmoSurfaceParams {
        transmittance,
        downwelling,
        emissivity,
        surface_temp_k: surface_temp,
    };
    Ok((cube, atmo, labels))
}

/// Synthesizes the scene and, when a plume is configured, disperses and
/// implants the gas. The truth always describes the returned cube exactly:
/// re-running [`implant`] on `truth.background` reproduces `cube`
/// bit-for-bit.
pub fn run_simulation<R: Real>(config: &SceneConfig) -> Result<SceneRealization<R>> {
    let (background, atmo, material_labels) = synth_scene_full::<R>(config)?;
    let Some(plume) = &config.plume else {
        return Ok(SceneRealization {
            cube: background.clone(),
            truth: zero_truth(background),
            gas: None,
            atmo,
            material_labels,
        });
    };

    let params = plume.params()?;
    let wavelengths: Vec<f64> = background.wavelengths().iter().map(|w| w.as_f64()).collect();
    let gas = GasSpectrum::from_bands(&wavelengths, &plume.gas.bands)?;
    gas.validate_against(&wavelengths)?;

    let (rows, cols) = (background.rows(), background.cols());
    let pixels = rows * cols;
    let mut column = vec![0.0f64; pixels];
    let mut max_cl = 0.0f64;
    for r in 0..rows {
        for c in 0..cols {
            let cl = column_density(r, c, &params);
            column[r * cols + c] = cl;
            max_cl = max_cl.max(cl);
        }
    }

    let plume_temp: Vec<f64> =
        column.iter().map(|&cl| plume_temperature(cl, max_cl, &params)).collect();
    let mut mask = PixelMask::new(rows, cols);
    if max_cl > 0.0 {
        for p in 0..pixels {
            if column[p] > plume.mask_threshold_rel * max_cl {
                mask.set(p / cols, p % cols, true);
            }
        }
    }

    let truth = SimulationTruth {
        background,
        column_density: column,
        plume_temp_k: plume_temp,
        mask,
        max_column_density: max_cl,
    };
    let cube = implant(&truth.background, &truth, &gas, &atmo)?;
    Ok(SceneRealization { cube, truth, gas: Some(gas), atmo, material_labels })
}
