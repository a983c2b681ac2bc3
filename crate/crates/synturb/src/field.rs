//! Finite-mode synthesis of the incompressible Gaussian velocity field.
//!
//! A realization is a sum over wavevector cells of transverse Gaussian
//! amplitudes with exact per-mode Ornstein-Uhlenbeck time evolution. The
//! field is represented directly in increment form,
//!
//! ```text
//! U(t, x) = sum_m [ zc_m (cos(k_m.x) - 1) + zs_m sin(k_m.x) ]
//! ```
//!
//! with zc, zs independent stationary Gaussian vectors orthogonal to k_m.
//! This vanishes identically at x = 0 and reproduces the band-limited
//! two-time increment covariance exactly in expectation: each mode
//! contributes weight * (I - khat khat^T) * 2(1 - cos(k.r)) * exp(-rate tau).

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::DynMat;
use crate::params::SpectrumParams;
use crate::quad::{self, OuFactor};
use crate::rng::{self, role};

/// Relative tolerance for the deterministic reference quadrature.
pub const QUAD_REL_TOL: f64 = 1e-6;

/// Shell/direction discretization of the spectral band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ModeLayout {
    pub n_shells: usize,
    pub n_dirs: usize,
}

impl ModeLayout {
    pub fn default_for(dim: usize) -> Self {
        match dim {
            2 => ModeLayout { n_shells: 64, n_dirs: 16 },
            _ => ModeLayout { n_shells: 64, n_dirs: 32 },
        }
    }

    pub fn n_modes(&self) -> usize {
        self.n_shells * self.n_dirs
    }
}

/// Fixed wavevector cells with their variance weights and OU rates.
#[derive(Debug, Clone)]
pub struct ModeSet {
    pub dim: usize,
    /// Flattened n x dim wavevectors, one representative per cell.
    pub wavevectors: Vec<f64>,
    /// Per-cell stationary variance of each transverse amplitude component.
    pub weights: Vec<f64>,
    /// Per-cell decorrelation rate a |k|^{2 beta}.
    pub ou_rates: Vec<f64>,
    /// Discretization this set was built with, kept for serialization.
    pub layout: ModeLayout,
    /// Wavenumber band the shells cover.
    pub band: (f64, f64),
}

/// int_a^b rho^p drho, with the log branch at p = -1.
fn band_mass(p: f64, a: f64, b: f64) -> f64 {
    let q = p + 1.0;
    if q.abs() < 1e-12 {
        (b / a).ln()
    } else {
        (b.powf(q) - a.powf(q)) / q
    }
}

const GOLDEN_FRAC: f64 = 0.618_033_988_749_894_9;

impl ModeSet {
    pub fn len(&self) -> usize {
        self.ou_rates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ou_rates.is_empty()
    }

    pub fn wavevector(&self, m: usize) -> &[f64] {
        &self.wavevectors[m * self.dim..(m + 1) * self.dim]
    }

    /// Discretize the band into log-spaced magnitude shells times a fixed
    /// direction set (uniform angles in d = 2, a Fibonacci sphere in d = 3),
    /// with a golden-ratio azimuthal offset per shell so shells do not share
    /// directions. Weights carry the exact spectral mass of each cell.
    pub fn build(
        params: &SpectrumParams,
        layout: ModeLayout,
        band_override: Option<(f64, f64)>,
    ) -> Result<Self> {
        let (lo, hi) = band_override.unwrap_or_else(|| params.band());
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "mode band must satisfy 0 < lo < hi < inf, got ({lo}, {hi})"
            )));
        }
        if layout.n_shells == 0 || layout.n_dirs < 2 {
            return Err(Error::InvalidInput(
                "mode layout needs at least 1 shell and 2 directions".into(),
            ));
        }
        let d = params.dim;
        let n = layout.n_modes();
        let mut wavevectors = Vec::with_capacity(n * d);
        let mut weights = Vec::with_capacity(n);
        let mut ou_rates = Vec::with_capacity(n);
        let log_step = (hi / lo).ln() / layout.n_shells as f64;
        let solid_angle = match d {
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        };
        let cell_angle = solid_angle / layout.n_dirs as f64;
        let two_pi_pow = (2.0 * std::f64::consts::PI).powi(d as i32);
        for shell in 0..layout.n_shells {
            let r0 = lo * (shell as f64 * log_step).exp();
            let r1 = lo * ((shell + 1) as f64 * log_step).exp();
            let mass = band_mass(1.0 - 2.0 * params.alpha, r0, r1);
            // energy centroid of the cell, so the representative magnitude
            // is first-order exact against the continuum radial measure
            let rho = band_mass(2.0 - 2.0 * params.alpha, r0, r1) / mass;
            let sigma2 = params.e0 / two_pi_pow * mass * cell_angle;
            let rate = params.a * rho.powf(2.0 * params.beta);
            let spin = (shell as f64 * GOLDEN_FRAC).fract();
            for dir in 0..layout.n_dirs {
                match d {
                    2 => {
                        let th = (dir as f64 + spin) / layout.n_dirs as f64
                            * 2.0
                            * std::f64::consts::PI;
                        wavevectors.push(rho * th.cos());
                        wavevectors.push(rho * th.sin());
                    }
                    _ => {
                        // Fibonacci sphere point dir of n_dirs, spun per shell
                        let z = 1.0 - (2.0 * dir as f64 + 1.0) / layout.n_dirs as f64;
                        let ring = (1.0 - z * z).max(0.0).sqrt();
                        let phi = (dir as f64 * GOLDEN_FRAC + spin)
                            * 2.0
                            * std::f64::consts::PI;
                        wavevectors.push(rho * ring * phi.cos());
                        wavevectors.push(rho * ring * phi.sin());
                        wavevectors.push(rho * z);
                    }
                }
                weights.push(sigma2);
                ou_rates.push(rate);
            }
        }
        Ok(ModeSet { dim: d, wavevectors, weights, ou_rates, layout, band: (lo, hi) })
    }

    /// Sum over cells of the full amplitude variance, tr included:
    /// (d - 1) sum_m weight_m. Matches `band_energy` exactly because the
    /// weights carry the exact cell masses.
    pub fn total_variance(&self) -> f64 {
        (self.dim as f64 - 1.0) * self.weights.iter().sum::<f64>()
    }

    /// Closed-form band-integrated energy density (trace of the one-point
    /// increment covariance at infinite separation, per unit 2(1-cos) -> 2).
    pub fn band_energy(params: &SpectrumParams, band: (f64, f64)) -> f64 {
        let solid_angle = match params.dim {
            2 => 2.0 * std::f64::consts::PI,
            _ => 4.0 * std::f64::consts::PI,
        };
        (params.dim as f64 - 1.0) * params.e0
            / (2.0 * std::f64::consts::PI).powi(params.dim as i32)
            * band_mass(1.0 - 2.0 * params.alpha, band.0, band.1)
            * solid_angle
    }

    /// Slowest and fastest OU rates, for step-size policies.
    pub fn rate_range(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = 0.0f64;
        for &r in &self.ou_rates {
            lo = lo.min(r);
            hi = hi.max(r);
        }
        (lo, hi)
    }

    /// Evaluate the increment field for an explicit amplitude state, e.g. a
    /// stored snapshot of a realization at an earlier time.
    pub fn eval_increment_with(
        &self,
        amp_cos: &[f64],
        amp_sin: &[f64],
        x: &[f64],
        out: &mut [f64],
    ) {
        match self.dim {
            2 => eval_state::<2>(self, amp_cos, amp_sin, x, out),
            _ => eval_state::<3>(self, amp_cos, amp_sin, x, out),
        }
    }
}

fn eval_state<const D: usize>(
    modes: &ModeSet,
    ac: &[f64],
    asn: &[f64],
    x: &[f64],
    out: &mut [f64],
) {
    let n = modes.len();
    let k = &modes.wavevectors;
    let mut acc = [0.0; D];
    for m in 0..n {
        let base = m * D;
        let mut phase = 0.0;
        for i in 0..D {
            phase += k[base + i] * x[i];
        }
        let (s, c) = phase.sin_cos();
        let cm = c - 1.0;
        for i in 0..D {
            acc[i] += ac[base + i] * cm + asn[base + i] * s;
        }
    }
    out[..D].copy_from_slice(&acc);
}

/// Orthonormal basis of the plane orthogonal to khat (d - 1 vectors).
fn transverse_basis(dim: usize, khat: &[f64], out: &mut [[f64; 3]; 2]) {
    match dim {
        2 => {
            out[0] = [-khat[1], khat[0], 0.0];
        }
        _ => {
            // seed with the axis least aligned with khat, then Gram-Schmidt
            let ax = khat[0].abs();
            let ay = khat[1].abs();
            let az = khat[2].abs();
            let e = if ax <= ay && ax <= az {
                [1.0, 0.0, 0.0]
            } else if ay <= az {
                [0.0, 1.0, 0.0]
            } else {
                [0.0, 0.0, 1.0]
            };
            let mut t1 = [
                e[0] - khat[0] * (e[0] * khat[0] + e[1] * khat[1] + e[2] * khat[2]),
                e[1] - khat[1] * (e[0] * khat[0] + e[1] * khat[1] + e[2] * khat[2]),
                e[2] - khat[2] * (e[0] * khat[0] + e[1] * khat[1] + e[2] * khat[2]),
            ];
            let n1 = (t1[0] * t1[0] + t1[1] * t1[1] + t1[2] * t1[2]).sqrt();
            for v in &mut t1 {
                *v /= n1;
            }
            let t2 = [
                khat[1] * t1[2] - khat[2] * t1[1],
                khat[2] * t1[0] - khat[0] * t1[2],
                khat[0] * t1[1] - khat[1] * t1[0],
            ];
            out[0] = t1;
            out[1] = t2;
        }
    }
}

/// One realization of the field: per-mode transverse amplitudes plus the
/// stream that drives their OU refresh noise.
#[derive(Debug, Clone)]
pub struct SpectralField {
    pub modes: Arc<ModeSet>,
    /// Flattened n x dim cosine-branch amplitudes (sigma included).
    amp_cos: Vec<f64>,
    /// Flattened n x dim sine-branch amplitudes.
    amp_sin: Vec<f64>,
    pub time: f64,
    advance_rng: ChaCha8Rng,
    /// (dt bit pattern, per-mode (decay, noise sigma factor)) for the last dt.
    decay_cache: Option<(u64, Vec<(f64, f64)>)>,
}

/// Draw a stationary transverse amplitude vector: sum over the transverse
/// basis of sigma * xi_i * t_i. Exactly orthogonal to k up to rounding of
/// the basis itself.
fn draw_transverse(
    dim: usize,
    basis: &[[f64; 3]; 2],
    sigma: f64,
    rng: &mut ChaCha8Rng,
    out: &mut [f64],
) {
    for v in out.iter_mut() {
        *v = 0.0;
    }
    for b in basis.iter().take(dim - 1) {
        let xi: f64 = StandardNormal.sample(rng);
        for i in 0..dim {
            out[i] += sigma * xi * b[i];
        }
    }
}

impl SpectralField {
    /// Stationary draw over a prebuilt mode set.
    pub fn from_modes(modes: Arc<ModeSet>, seed: u64) -> Self {
        let dim = modes.dim;
        let n = modes.len();
        let mut amp_cos = vec![0.0; n * dim];
        let mut amp_sin = vec![0.0; n * dim];
        let mut init_rng = rng::stream(seed, &[role::MODE_INIT]);
        let mut basis = [[0.0; 3]; 2];
        for m in 0..n {
            let k = modes.wavevector(m);
            let kn = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut khat = [0.0; 3];
            for i in 0..dim {
                khat[i] = k[i] / kn;
            }
            transverse_basis(dim, &khat[..dim], &mut basis);
            let sigma = modes.weights[m].sqrt();
            draw_transverse(dim, &basis, sigma, &mut init_rng, &mut amp_cos[m * dim..(m + 1) * dim]);
            draw_transverse(dim, &basis, sigma, &mut init_rng, &mut amp_sin[m * dim..(m + 1) * dim]);
        }
        SpectralField {
            modes,
            amp_cos,
            amp_sin,
            time: 0.0,
            advance_rng: rng::stream(seed, &[role::MODE_ADVANCE]),
            decay_cache: None,
        }
    }

    /// Build the mode set and draw a stationary realization.
    pub fn synthesize(
        params: &SpectrumParams,
        layout: ModeLayout,
        band_override: Option<(f64, f64)>,
        seed: u64,
    ) -> Result<Self> {
        let modes = Arc::new(ModeSet::build(params, layout, band_override)?);
        Ok(Self::from_modes(modes, seed))
    }

    pub fn dim(&self) -> usize {
        self.modes.dim
    }

    /// Per-mode amplitude state (cosine branch, sine branch).
    pub fn amplitude(&self, m: usize) -> (&[f64], &[f64]) {
        let d = self.modes.dim;
        (&self.amp_cos[m * d..(m + 1) * d], &self.amp_sin[m * d..(m + 1) * d])
    }

    /// Exact OU update coefficients for a step dt: amplitude decay e^{-r dt}
    /// and refresh noise standard-deviation factor sqrt(1 - e^{-2 r dt}).
    pub fn step_coefficients(rate: f64, dt: f64) -> (f64, f64) {
        let decay = (-rate * dt).exp();
        (decay, (1.0 - decay * decay).max(0.0).sqrt())
    }

    fn decay_table(&mut self, dt: f64) -> &[(f64, f64)] {
        let key = dt.to_bits();
        let stale = match &self.decay_cache {
            Some((k, _)) => *k != key,
            None => true,
        };
        if stale {
            let table = self
                .modes
                .ou_rates
                .iter()
                .map(|&r| Self::step_coefficients(r, dt))
                .collect();
            self.decay_cache = Some((key, table));
        }
        &self.decay_cache.as_ref().unwrap().1
    }

    /// Advance the field time by dt with the exact per-mode OU transition:
    /// amp <- decay * amp + noise_sigma * fresh stationary draw. Marginal law
    /// is unchanged for any dt >= 0.
    pub fn advance(&mut self, dt: f64) {
        if dt == 0.0 {
            return;
        }
        let dim = self.modes.dim;
        let n = self.modes.len();
        let modes = Arc::clone(&self.modes);
        self.decay_table(dt);
        let table = &self.decay_cache.as_ref().unwrap().1;
        let mut basis = [[0.0; 3]; 2];
        let mut fresh = [0.0; 3];
        for m in 0..n {
            let (decay, noise) = table[m];
            let k = modes.wavevector(m);
            let kn = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            let mut khat = [0.0; 3];
            for i in 0..dim {
                khat[i] = k[i] / kn;
            }
            transverse_basis(dim, &khat[..dim], &mut basis);
            let sigma = modes.weights[m].sqrt();
            for branch in 0..2 {
                draw_transverse(dim, &basis, sigma, &mut self.advance_rng, &mut fresh[..dim]);
                let amp = if branch == 0 {
                    &mut self.amp_cos[m * dim..(m + 1) * dim]
                } else {
                    &mut self.amp_sin[m * dim..(m + 1) * dim]
                };
                for i in 0..dim {
                    amp[i] = decay * amp[i] + noise * fresh[i];
                }
            }
        }
        self.time += dt;
    }

    /// Velocity increment U(t, x) relative to the origin. Exactly zero at
    /// x = 0 and linear in the amplitude state.
    pub fn eval_increment(&self, x: &[f64]) -> Vec<f64> {
        let dim = self.modes.dim;
        let mut out = vec![0.0; dim];
        match dim {
            2 => self.eval_into::<2>(x, &mut out),
            _ => self.eval_into::<3>(x, &mut out),
        }
        out
    }

    fn eval_into<const D: usize>(&self, x: &[f64], out: &mut [f64]) {
        eval_state::<D>(&self.modes, &self.amp_cos, &self.amp_sin, x, out);
    }

    /// Amplitude state of the cosine branch, flattened mode-major.
    pub fn amp_cos(&self) -> &[f64] {
        &self.amp_cos
    }

    /// Amplitude state of the sine branch, flattened mode-major.
    pub fn amp_sin(&self) -> &[f64] {
        &self.amp_sin
    }

    /// Rebuild a field from a stored amplitude state. Amplitudes and time
    /// match the stored realization exactly; further advancing draws from a
    /// fresh stream derived from `reseed`.
    pub fn restore(
        modes: Arc<ModeSet>,
        amp_cos: Vec<f64>,
        amp_sin: Vec<f64>,
        time: f64,
        reseed: u64,
    ) -> Result<Self> {
        let expect = modes.len() * modes.dim;
        if amp_cos.len() != expect || amp_sin.len() != expect {
            return Err(Error::InvalidInput(format!(
                "amplitude state has {}/{} entries, expected {expect}",
                amp_cos.len(),
                amp_sin.len()
            )));
        }
        Ok(SpectralField {
            modes,
            amp_cos,
            amp_sin,
            time,
            advance_rng: rng::stream(reseed, &[role::MODE_ADVANCE]),
            decay_cache: None,
        })
    }

    /// Worst-case relative longitudinal leakage |k.amp| / (|k| |amp|) over
    /// all modes and both branches; zero-amplitude modes are skipped.
    pub fn incompressibility_residual(&self) -> f64 {
        let dim = self.modes.dim;
        let mut worst = 0.0f64;
        for m in 0..self.modes.len() {
            let k = self.modes.wavevector(m);
            let kn = k.iter().map(|v| v * v).sum::<f64>().sqrt();
            let (a, b) = self.amplitude(m);
            for amp in [a, b] {
                let an = amp.iter().map(|v| v * v).sum::<f64>().sqrt();
                if an == 0.0 {
                    continue;
                }
                let dot: f64 = (0..dim).map(|i| k[i] * amp[i]).sum();
                worst = worst.max(dot.abs() / (kn * an));
            }
        }
        worst
    }
}

/// Deterministic band-limited two-time increment covariance.
pub fn structure_function_exact(
    params: &SpectrumParams,
    r: &[f64],
    tau: f64,
    band: (f64, f64),
) -> Result<DynMat> {
    if tau < 0.0 {
        return Err(Error::InvalidInput(format!("time lag must be >= 0, got {tau}")));
    }
    quad::spectral_tensor(
        params.dim,
        params.alpha,
        params.e0,
        band,
        Some(OuFactor { a: params.a, beta: params.beta, tau }),
        r,
        QUAD_REL_TOL,
    )
}

/// Sample tensor with per-entry standard errors.
#[derive(Debug, Clone)]
pub struct TensorEstimate {
    pub mean: DynMat,
    pub stderr: DynMat,
    pub n: usize,
}

/// Monte Carlo estimate of the two-time increment covariance at separation r
/// and lag tau over independent stationary realizations. Deterministic given
/// the seed, independent of how the samples are scheduled.
pub fn structure_function_estimate(
    params: &SpectrumParams,
    layout: ModeLayout,
    band: (f64, f64),
    r: &[f64],
    tau: f64,
    n_samples: usize,
    seed: u64,
) -> Result<TensorEstimate> {
    use rayon::prelude::*;
    if n_samples < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 samples, got {n_samples}"
        )));
    }
    if r.len() != params.dim {
        return Err(Error::InvalidInput(format!(
            "separation has {} components, expected {}",
            r.len(),
            params.dim
        )));
    }
    let modes = Arc::new(ModeSet::build(params, layout, Some(band))?);
    let dim = params.dim;
    // per-sample symmetrized outer products, ordered by sample index so the
    // final reduction is schedule-independent
    let samples: Vec<Vec<f64>> = (0..n_samples)
        .into_par_iter()
        .map(|s| {
            let mut field =
                SpectralField::from_modes(Arc::clone(&modes), rng::derive_key(seed, &[s as u64]));
            let w1 = field.eval_increment(r);
            let w2 = if tau > 0.0 {
                field.advance(tau);
                field.eval_increment(r)
            } else {
                w1.clone()
            };
            let mut outer = vec![0.0; dim * dim];
            for i in 0..dim {
                for j in 0..dim {
                    outer[i * dim + j] = 0.5 * (w1[i] * w2[j] + w2[i] * w1[j]);
                }
            }
            outer
        })
        .collect();
    let mut mean = vec![0.0; dim * dim];
    let mut m2 = vec![0.0; dim * dim];
    for (idx, sample) in samples.iter().enumerate() {
        let count = (idx + 1) as f64;
        for e in 0..dim * dim {
            let delta = sample[e] - mean[e];
            mean[e] += delta / count;
            m2[e] += delta * (sample[e] - mean[e]);
        }
    }
    let n = n_samples as f64;
    let mut stderr = vec![0.0; dim * dim];
    for e in 0..dim * dim {
        stderr[e] = (m2[e] / (n - 1.0) / n).sqrt();
    }
    Ok(TensorEstimate {
        mean: DynMat { dim, data: mean },
        stderr: DynMat { dim, data: stderr },
        n: n_samples,
    })
}
