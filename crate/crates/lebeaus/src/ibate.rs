//! Alternating estimation of the per-segment additive model `y = b + α t`.
//!
//! Each contaminated pixel is modeled as a shared background spectrum `b`
//! plus a nonnegative strength `α` times a shared signal spectrum `t`. The
//! objective is the mean squared residual over the segment's pixels, and the
//! estimator alternates the three closed-form coordinate updates
//! (strengths → background → signal), each of which can only lower the
//! objective. Pixels known to be clean keep their strength pinned at zero,
//! which anchors `b` to the true background even when most of the segment is
//! contaminated.

use serde_json::json;

use crate::cube::Spectrum;
use crate::error::{Error, Result};
use crate::real::Real;

/// Default sweep cap; in practice the estimator settles far earlier.
pub const DEFAULT_MAX_ITER: usize = 100;
/// Default relative-decrease threshold that declares convergence.
pub const DEFAULT_REL_TOL: f64 = 1e-8;

/// One segment's fitting problem: the pixel spectra, the clean flags, and
/// the initial iterate.
#[derive(Debug, Clone)]
pub struct IbateProblem<R = f64> {
    pixels: Vec<Vec<R>>,
    clean: Vec<bool>,
    init_background: Vec<R>,
    init_target: Vec<R>,
    init_alpha: Vec<R>,
}

/// Result of the alternating fit.
#[derive(Debug, Clone)]
pub struct AdditiveFit<R = f64> {
    pub background: Spectrum<R>,
    pub target: Spectrum<R>,
    /// Per-pixel signal strengths, zero wherever the pixel was clean.
    pub alpha: Vec<R>,
    /// Objective value at the initialization and after every completed
    /// sweep; non-increasing.
    pub objective_trace: Vec<R>,
    /// Number of full sweeps performed.
    pub iterations: usize,
    pub converged: bool,
}

impl<R: Real> AdditiveFit<R> {
    pub fn initial_objective(&self) -> R {
        self.objective_trace[0]
    }

    pub fn final_objective(&self) -> R {
        *self.objective_trace.last().expect("trace always holds the initial objective")
    }

    /// JSON rendering used by the pipeline's result files.
    pub fn to_json(&self) -> serde_json::Value {
        let vec_f64 = |v: &[R]| v.iter().map(|x| x.as_f64()).collect::<Vec<f64>>();
        json!({
            "background": vec_f64(self.background.values()),
            "target": vec_f64(self.target.values()),
            "alpha": vec_f64(&self.alpha),
            "objective_trace": vec_f64(&self.objective_trace),
            "iterations": self.iterations,
            "converged": self.converged,
        })
    }
}

impl<R: Real> IbateProblem<R> {
    /// Builds a problem with an explicit initial iterate. Clean pixels must
    /// come with a zero initial strength.
    pub fn with_init(
        pixels: Vec<Vec<R>>,
        clean: Vec<bool>,
        init_background: Vec<R>,
        init_target: Vec<R>,
        init_alpha: Vec<R>,
    ) -> Result<Self> {
        let n = pixels.len();
        if n < 2 {
            return Err(Error::InvalidParam(format!(
                "the additive fit needs at least 2 pixels, got {n}"
            )));
        }
        let c = pixels[0].len();
        if c == 0 {
            return Err(Error::Dimension("pixel spectra must have at least one channel".into()));
        }
        if pixels.iter().any(|p| p.len() != c) {
            return Err(Error::Dimension("pixel spectra disagree on channel count".into()));
        }
        if clean.len() != n || init_alpha.len() != n {
            return Err(Error::Dimension(format!(
                "clean flags ({}) and strengths ({}) must both cover {n} pixels",
                clean.len(),
                init_alpha.len()
            )));
        }
        if init_background.len() != c || init_target.len() != c {
            return Err(Error::Dimension(format!(
                "initial background ({}) and signal ({}) must have {c} channels",
                init_background.len(),
                init_target.len()
            )));
        }
        for (i, p) in pixels.iter().enumerate() {
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("pixel {i} contains a non-finite value")));
            }
        }
        if init_background.iter().chain(init_target.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("initial background/signal must be finite".into()));
        }
        for (i, (&a, &is_clean)) in init_alpha.iter().zip(&clean).enumerate() {
            if !a.is_finite() || a < R::zero() {
                return Err(Error::InvalidParam(format!(
                    "initial strength of pixel {i} must be finite and nonnegative"
                )));
            }
            if is_clean && a != R::zero() {
                return Err(Error::InvalidParam(format!(
                    "pixel {i} is clean but has a nonzero initial strength"
                )));
            }
        }
        Ok(IbateProblem { pixels, clean, init_background, init_target, init_alpha })
    }

    /// The initialization used by the pipeline when clean pixels are known:
    /// background = mean of the clean pixels, signal = mean of the
    /// contaminated pixels minus that background, strengths = 1 on
    /// contaminated pixels. With no contaminated pixels the signal starts at
    /// zero.
    pub fn with_clean_init(pixels: Vec<Vec<R>>, clean: Vec<bool>) -> Result<Self> {
        if pixels.len() != clean.len() {
            return Err(Error::Dimension(format!(
                "clean flags ({}) must cover {} pixels",
                clean.len(),
                pixels.len()
            )));
        }
        if !clean.iter().any(|&f| f) {
            return Err(Error::Degenerate(
                "clean-pixel initialization needs at least one clean pixel".into(),
            ));
        }
        let c = pixels.first().map(|p| p.len()).unwrap_or(0);
        let mut clean_mean = vec![R::zero(); c];
        let mut contam_mean = vec![R::zero(); c];
        let mut n_clean = 0usize;
        let mut n_contam = 0usize;
        for (p, &is_clean) in pixels.iter().zip(&clean) {
            if p.len() != c {
                return Err(Error::Dimension("pixel spectra disagree on channel count".into()));
            }
            let (acc, count) = if is_clean {
                (&mut clean_mean, &mut n_clean)
            } else {
                (&mut contam_mean, &mut n_contam)
            };
            for (s, v) in acc.iter_mut().zip(p) {
                *s = *s + *v;
            }
            *count += 1;
        }
        for s in clean_mean.iter_mut() {
            *s = *s / R::of(n_clean as f64);
        }
        let init_target: Vec<R> = if n_contam > 0 {
            contam_mean
                .iter()
                .zip(&clean_mean)
                .map(|(s, b)| *s / R::of(n_contam as f64) - *b)
                .collect()
        } else {
            vec![R::zero(); c]
        };
        let init_alpha: Vec<R> =
            clean.iter().map(|&f| if f { R::zero() } else { R::one() }).collect();
        Self::with_init(pixels, clean, clean_mean, init_target, init_alpha)
    }

    /// Fallback initialization when no clean pixels are known: background =
    /// a caller-supplied scene mean, signal = mean of the problem's pixels
    /// minus it, strengths = 1 everywhere (no pixel marked clean).
    pub fn with_global_init(pixels: Vec<Vec<R>>, scene_mean: &[R]) -> Result<Self> {
        let n = pixels.len().max(1);
        let c = pixels.first().map(|p| p.len()).unwrap_or(0);
        if scene_mean.len() != c {
            return Err(Error::Dimension(format!(
                "scene mean has {} channels but pixels have {c}",
                scene_mean.len()
            )));
        }
        let mut mean = vec![R::zero(); c];
        for p in &pixels {
            for (s, v) in mean.iter_mut().zip(p) {
                *s = *s + *v;
            }
        }
        let init_target: Vec<R> =
            mean.iter().zip(scene_mean).map(|(s, m)| *s / R::of(n as f64) - *m).collect();
        let clean = vec![false; pixels.len()];
        let init_alpha = vec![R::one(); pixels.len()];
        Self::with_init(pixels, clean, scene_mean.to_vec(), init_target, init_alpha)
    }

    pub fn num_pixels(&self) -> usize {
        self.pixels.len()
    }

    pub fn channels(&self) -> usize {
        self.pixels[0].len()
    }

    pub fn pixels(&self) -> &[Vec<R>] {
        &self.pixels
    }

    pub fn clean(&self) -> &[bool] {
        &self.clean
    }

    fn check_dims(&self, b: &[R], t: &[R], alpha: Option<&[R]>) -> Result<()> {
        let c = self.channels();
        if b.len() != c || t.len() != c {
            return Err(Error::Dimension(format!(
                "background ({}) and signal ({}) must have {c} channels",
                b.len(),
                t.len()
            )));
        }
        if let Some(a) = alpha {
            if a.len() != self.num_pixels() {
                return Err(Error::Dimension(format!(
                    "strengths ({}) must cover {} pixels",
                    a.len(),
                    self.num_pixels()
                )));
            }
        }
        Ok(())
    }

    /// Mean squared residual `(1/N) Σ_i ‖y_i − (b + α_i t)‖²`.
    pub fn objective(&self, b: &[R], t: &[R], alpha: &[R]) -> Result<R> {
        self.check_dims(b, t, Some(alpha))?;
        let mut acc = R::zero();
        for (y, &a) in self.pixels.iter().zip(alpha) {
            for ((yk, bk), tk) in y.iter().zip(b).zip(t) {
                let r = *yk - (*bk + a * *tk);
                acc = acc + r * r;
            }
        }
        Ok(acc / R::of(self.num_pixels() as f64))
    }

    /// Strength update: `α_i = max(0, (y_i − b)ᵀ t / tᵀt)`, with clean
    /// pixels pinned at zero. Errors when the signal is the zero vector and
    /// a contaminated pixel actually needs the projection.
    pub fn update_alpha(&self, b: &[R], t: &[R]) -> Result<Vec<R>> {
        self.check_dims(b, t, None)?;
        let tt: R = t.iter().map(|v| *v * *v).sum();
        let mut alpha = Vec::with_capacity(self.num_pixels());
        for (y, &is_clean) in self.pixels.iter().zip(&self.clean) {
            if is_clean {
                alpha.push(R::zero());
                continue;
            }
            if tt == R::zero() {
                return Err(Error::Degenerate(
                    "strength update needs a nonzero signal spectrum".into(),
                ));
            }
            let mut num = R::zero();
            for ((yk, bk), tk) in y.iter().zip(b).zip(t) {
                num = num + (*yk - *bk) * *tk;
            }
            let a = num / tt;
            alpha.push(if a > R::zero() { a } else { R::zero() });
        }
        Ok(alpha)
    }

    /// Background update: `b = (1/N) Σ_i (y_i − α_i t)`.
    pub fn update_background(&self, t: &[R], alpha: &[R]) -> Result<Vec<R>> {
        self.check_dims(t, t, Some(alpha))?;
        let c = self.channels();
        let mut b = vec![R::zero(); c];
        for (y, &a) in self.pixels.iter().zip(alpha) {
            for ((bk, yk), tk) in b.iter_mut().zip(y).zip(t) {
                *bk = *bk + (*yk - a * *tk);
            }
        }
        let n = R::of(self.num_pixels() as f64);
        for bk in b.iter_mut() {
            *bk = *bk / n;
        }
        Ok(b)
    }

    /// Signal update: `t = Σ_i α_i (y_i − b) / Σ_i α_i²`. Errors when every
    /// strength is zero — the segment carries no detectable signal and the
    /// caller should fall back to `b` = clean mean, `t` = 0.
    pub fn update_target(&self, b: &[R], alpha: &[R]) -> Result<Vec<R>> {
        self.check_dims(b, b, Some(alpha))?;
        let denom: R = alpha.iter().map(|a| *a * *a).sum();
        if denom == R::zero() {
            return Err(Error::Degenerate(
                "signal update is undefined when every strength is zero".into(),
            ));
        }
        let c = self.channels();
        let mut t = vec![R::zero(); c];
        for (y, &a) in self.pixels.iter().zip(alpha) {
            if a == R::zero() {
                continue;
            }
            for ((tk, yk), bk) in t.iter_mut().zip(y).zip(b) {
                *tk = *tk + a * (*yk - *bk);
            }
        }
        for tk in t.iter_mut() {
            *tk = *tk / denom;
        }
        Ok(t)
    }

    fn mean_of_all(&self) -> Vec<R> {
        let c = self.channels();
        let mut m = vec![R::zero(); c];
        for y in &self.pixels {
            for (mk, yk) in m.iter_mut().zip(y) {
                *mk = *mk + *yk;
            }
        }
        let n = R::of(self.num_pixels() as f64);
        for mk in m.iter_mut() {
            *mk = *mk / n;
        }
        m
    }
}

/// Runs the alternating fit: sweeps of (strengths → background → signal)
/// from the problem's initialization until the relative objective decrease
/// drops below `rel_tol`, the objective reaches the floating-point noise
/// floor of the data, or `max_iter` sweeps have run.
///
/// Degenerate outcomes are handled without error: if every strength
/// collapses to zero (or the signal becomes the zero vector), the fit
/// terminates with `b` = mean of all pixels, `t` = 0, `α` = 0 and
/// `converged = true` — the model then says "no signal present". A problem
/// whose pixels are all clean performs exactly one sweep and leaves the
/// signal at its initial value.
pub fn run_ibate<R: Real>(
    problem: &IbateProblem<R>,
    max_iter: usize,
    rel_tol: f64,
) -> Result<AdditiveFit<R>> {
    if max_iter == 0 {
        return Err(Error::InvalidParam("max_iter must be at least 1".into()));
    }
    if !rel_tol.is_finite() || rel_tol <= 0.0 {
        return Err(Error::InvalidParam(format!("rel_tol must be positive, got {rel_tol}")));
    }
    let rel_tol = R::of(rel_tol);
    let n = problem.num_pixels();
    let c = problem.channels();
    let has_contaminated = problem.clean.iter().any(|&f| !f);

    // Absolute floor below which the objective is indistinguishable from
    // rounding noise: each of the c·N squared residuals carries relative
    // error on the order of machine epsilon against the data's magnitude.
    let second_moment: R = problem
        .pixels
        .iter()
        .flat_map(|y| y.iter().map(|v| *v * *v))
        .sum::<R>()
        / R::of(n as f64);
    let noise_floor = R::of((c * n) as f64) * R::epsilon() * R::epsilon() * second_moment;

    let mut b = problem.init_background.clone();
    let mut t = problem.init_target.clone();
    let mut alpha = problem.init_alpha.clone();
    let mut trace = vec![problem.objective(&b, &t, &alpha)?];
    let mut iterations = 0usize;
    let mut converged = false;

    for sweep in 1..=max_iter {
        let snapshot = (b.clone(), t.clone(), alpha.clone());
        iterations = sweep;

        let mut no_signal = false;
        if has_contaminated {
            let tt: R = t.iter().map(|v| *v * *v).sum();
            if tt == R::zero() {
                no_signal = true;
            } else {
                alpha = problem.update_alpha(&b, &t)?;
            }
        } else {
            alpha = vec![R::zero(); n];
        }

        if !no_signal {
            b = problem.update_background(&t, &alpha)?;
            let strength: R = alpha.iter().map(|a| *a * *a).sum();
            if has_contaminated {
                if strength == R::zero() {
                    no_signal = true;
                } else {
                    t = problem.update_target(&b, &alpha)?;
                    let tt: R = t.iter().map(|v| *v * *v).sum();
                    if tt == R::zero() {
                        no_signal = true;
                    }
                }
            }
        }

        if no_signal {
            // The model found no expressible signal: the best remaining fit
            // sets every strength to zero and the background to the plain
            // mean. This never increases the objective.
            alpha = vec![R::zero(); n];
            b = problem.mean_of_all();
            t = vec![R::zero(); c];
        }

        let prev = *trace.last().expect("trace is never empty");
        let cur = problem.objective(&b, &t, &alpha)?;
        if cur > prev {
            // A sweep can only fail to descend through floating-point
            // wobble at stagnation; restore the better iterate and stop.
            let (pb, pt, pa) = snapshot;
            b = pb;
            t = pt;
            alpha = pa;
            converged = true;
            break;
        }
        trace.push(cur);

        if no_signal || !has_contaminated {
            converged = true;
            break;
        }
        if cur <= noise_floor || prev - cur < rel_tol * prev {
            converged = true;
            break;
        }
    }

    Ok(AdditiveFit {
        background: Spectrum::new(b),
        target: Spectrum::new(t),
        alpha,
        objective_trace: trace,
        iterations,
        converged,
    })
}
