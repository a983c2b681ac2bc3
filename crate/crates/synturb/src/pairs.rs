//! Pair-separation ensembles in the synthesized colored-noise field.
//!
//! The physical dynamics and the rescaled family share one integrator:
//!
//! ```text
//! dx = drift_pref * U(time_speed * t, x) dt + sqrt(kappa_eff) dw
//! ```
//!
//! with U the band-limited increment field. The physical case is
//! drift_pref = time_speed = 1; the rescaled case uses eps^{2q + alpha - 2}
//! and eps^{2(q - beta)} with the band (1/L, K). Each pair owns an
//! independent field realization (annealed average) unless the quenched
//! mode is selected, in which case every pair replays one shared
//! realization and only the Brownian streams differ.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ModeLayout, ModeSet, SpectralField};
use crate::params::SpectrumParams;
use crate::rng::{self, role};
use crate::stats::{self, Series};

/// Default stability margin: dt * fastest effective OU rate <= C_DT.
pub const C_DT: f64 = 0.1;
/// Default minimum per-bin population for diffusivity estimates.
pub const MIN_BIN_COUNT: usize = 200;

/// Rescaled-dynamics parameters for one sweep member.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct RescaleSpec {
    pub epsilon: f64,
    pub q: f64,
    pub kappa_tilde: f64,
    /// Wavenumber band (1/L, K) of the rescaled field.
    pub band: (f64, f64),
}

impl RescaleSpec {
    /// Build a sweep member with q taken from the configured scaling branch.
    pub fn from_params(
        params: &SpectrumParams,
        epsilon: f64,
        kappa_tilde: f64,
        l_cutoff: f64,
        k_cutoff: f64,
    ) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::ParamDomain(format!(
                "epsilon must lie in (0, 1], got {epsilon}"
            )));
        }
        if !(kappa_tilde >= 0.0) {
            return Err(Error::ParamDomain(format!(
                "molecular diffusivity must be >= 0, got {kappa_tilde}"
            )));
        }
        if !(l_cutoff > 0.0 && k_cutoff > 1.0 / l_cutoff) {
            return Err(Error::InvalidInput(format!(
                "cutoffs must satisfy 1/L < K, got L = {l_cutoff}, K = {k_cutoff}"
            )));
        }
        Ok(RescaleSpec {
            epsilon,
            q: params.exponents().q,
            kappa_tilde,
            band: (1.0 / l_cutoff, k_cutoff),
        })
    }

    /// Drift prefactor eps^{2q + alpha - 2}.
    pub fn drift_prefactor(&self, alpha: f64) -> f64 {
        self.epsilon.powf(2.0 * self.q + alpha - 2.0)
    }

    /// Field-time speed-up eps^{2(q - beta)}.
    pub fn time_speed(&self, beta: f64) -> f64 {
        self.epsilon.powf(2.0 * (self.q - beta))
    }

    /// Molecular diffusivity in physical variables, eps^{2 - 2q} kappa_tilde.
    pub fn physical_kappa(&self) -> f64 {
        self.epsilon.powf(2.0 - 2.0 * self.q) * self.kappa_tilde
    }
}

/// How ensembles are generated beyond the required arguments.
#[derive(Debug, Clone)]
pub struct SimOptions {
    pub layout: ModeLayout,
    /// Sample times; 0 is always included first. Defaults to a log grid.
    pub sample_times: Option<Vec<f64>>,
    /// One shared field realization across pairs instead of one per pair.
    pub quenched: bool,
    /// Record the drift vector at sample times (autocorrelation studies).
    pub record_drift: bool,
}

impl SimOptions {
    pub fn default_for(dim: usize) -> Self {
        SimOptions {
            layout: ModeLayout::default_for(dim),
            sample_times: None,
            quenched: false,
            record_drift: false,
        }
    }
}

/// Log-spaced sample grid over [t_end/10^decades, t_end], with t = 0 first.
pub fn log_sample_grid(t_end: f64, n_points: usize, decades: f64) -> Vec<f64> {
    let mut times = Vec::with_capacity(n_points + 1);
    times.push(0.0);
    let lo = t_end * 10f64.powf(-decades);
    for i in 0..n_points {
        let f = i as f64 / (n_points - 1) as f64;
        times.push(lo * (t_end / lo).powf(f));
    }
    times
}

/// A set of pair-separation trajectories on a shared sample-time grid.
#[derive(Debug, Clone)]
pub struct PairEnsemble {
    pub dim: usize,
    pub x0: Vec<f64>,
    pub times: Vec<f64>,
    /// Flattened n_pairs x n_times x dim separations.
    pub trajectories: Vec<f64>,
    /// Flattened drift samples with the same shape, when recorded.
    pub drifts: Option<Vec<f64>>,
    pub seed: u64,
    pub model: String,
}

impl PairEnsemble {
    pub fn n_pairs(&self) -> usize {
        if self.times.is_empty() {
            0
        } else {
            self.trajectories.len() / (self.times.len() * self.dim)
        }
    }

    pub fn position(&self, pair: usize, time_idx: usize) -> &[f64] {
        let d = self.dim;
        let base = (pair * self.times.len() + time_idx) * d;
        &self.trajectories[base..base + d]
    }

    fn sq_norm(&self, pair: usize, time_idx: usize) -> f64 {
        self.position(pair, time_idx).iter().map(|v| v * v).sum()
    }
}

fn validate_step(dt: f64, t_end: f64, fastest_rate: f64) -> Result<usize> {
    if !(dt > 0.0 && t_end >= dt) {
        return Err(Error::InvalidInput(format!(
            "need 0 < dt <= t_end, got dt = {dt}, t_end = {t_end}"
        )));
    }
    let bound = C_DT / fastest_rate.max(f64::MIN_POSITIVE);
    if dt > bound {
        return Err(Error::StepStability { dt, bound });
    }
    Ok((t_end / dt).round().max(1.0) as usize)
}

/// Map sample times to step indices (nearest step, clamped, deduplicated
/// upward) so every recorded time is an exact integrator time.
fn snap_times(times: &[f64], dt: f64, n_steps: usize) -> (Vec<f64>, Vec<usize>) {
    let mut idx = Vec::with_capacity(times.len() + 1);
    let mut snapped = Vec::with_capacity(times.len() + 1);
    idx.push(0usize);
    snapped.push(0.0);
    for &t in times {
        if t <= 0.0 {
            continue;
        }
        let mut i = (t / dt).round() as usize;
        i = i.clamp(1, n_steps);
        if i > *idx.last().unwrap() {
            idx.push(i);
            snapped.push(i as f64 * dt);
        }
    }
    (snapped, idx)
}

struct Integration<'a> {
    params: &'a SpectrumParams,
    band: (f64, f64),
    drift_pref: f64,
    time_speed: f64,
    kappa: f64,
    x0: &'a [f64],
    t_end: f64,
    dt: f64,
    n_pairs: usize,
    seed: u64,
    options: &'a SimOptions,
    model: &'a str,
}

fn integrate(cfg: Integration<'_>) -> Result<PairEnsemble> {
    let d = cfg.params.dim;
    if cfg.x0.len() != d {
        return Err(Error::InvalidInput(format!(
            "initial separation has {} components, expected {d}",
            cfg.x0.len()
        )));
    }
    if cfg.n_pairs == 0 {
        return Err(Error::InvalidInput("need at least one pair".into()));
    }
    let fastest = cfg.params.a * cfg.band.1.powf(2.0 * cfg.params.beta) * cfg.time_speed;
    let n_steps = validate_step(cfg.dt, cfg.t_end, fastest)?;
    let default_times;
    let times = match &cfg.options.sample_times {
        Some(t) => t.as_slice(),
        None => {
            default_times = log_sample_grid(cfg.t_end, 32, 2.0);
            &default_times
        }
    };
    let (sample_times, sample_idx) = snap_times(times, cfg.dt, n_steps);
    let n_times = sample_times.len();
    let modes = std::sync::Arc::new(ModeSet::build(cfg.params, cfg.options.layout, Some(cfg.band))?);
    let dt_field = cfg.time_speed * cfg.dt;
    let noise_sigma = (cfg.kappa * cfg.dt).sqrt();
    let quenched_seed = rng::derive_key(cfg.seed, &[role::MODE_INIT, u64::MAX]);

    let per_pair: Vec<(Vec<f64>, Vec<f64>)> = (0..cfg.n_pairs)
        .into_par_iter()
        .map(|pair| {
            let field_seed = if cfg.options.quenched {
                quenched_seed
            } else {
                rng::derive_key(cfg.seed, &[role::MODE_INIT, pair as u64])
            };
            let mut field = SpectralField::from_modes(std::sync::Arc::clone(&modes), field_seed);
            let mut brownian = rng::stream(cfg.seed, &[role::PAIR_BROWNIAN, pair as u64]);
            let mut x = cfg.x0.to_vec();
            let mut traj = vec![0.0; n_times * d];
            let mut drifts = if cfg.options.record_drift {
                vec![0.0; n_times * d]
            } else {
                Vec::new()
            };
            traj[..d].copy_from_slice(&x);
            let mut next_sample = 1usize;
            for step in 0..n_steps {
                let u = field.eval_increment(&x);
                for i in 0..d {
                    let mut dx = cfg.drift_pref * u[i] * cfg.dt;
                    if noise_sigma > 0.0 {
                        let g: f64 = StandardNormal.sample(&mut brownian);
                        dx += noise_sigma * g;
                    }
                    x[i] += dx;
                }
                field.advance(dt_field);
                let done = step + 1;
                if next_sample < n_times && sample_idx[next_sample] == done {
                    traj[next_sample * d..(next_sample + 1) * d].copy_from_slice(&x);
                    if cfg.options.record_drift {
                        let du = field.eval_increment(&x);
                        for i in 0..d {
                            drifts[next_sample * d + i] = cfg.drift_pref * du[i];
                        }
                    }
                    next_sample += 1;
                }
            }
            (traj, drifts)
        })
        .collect();

    let mut trajectories = Vec::with_capacity(cfg.n_pairs * n_times * d);
    let mut drift_flat = if cfg.options.record_drift {
        Some(Vec::with_capacity(cfg.n_pairs * n_times * d))
    } else {
        None
    };
    for (traj, drifts) in per_pair {
        trajectories.extend_from_slice(&traj);
        if let Some(df) = drift_flat.as_mut() {
            df.extend_from_slice(&drifts);
        }
    }
    Ok(PairEnsemble {
        dim: d,
        x0: cfg.x0.to_vec(),
        times: sample_times,
        trajectories,
        drifts: drift_flat,
        seed: cfg.seed,
        model: cfg.model.to_string(),
    })
}

/// Physical-variable pair dispersion: dx = U(t, x) dt + sqrt(kappa) dw.
#[allow(clippy::too_many_arguments)]
pub fn simulate_pairs(
    params: &SpectrumParams,
    x0: &[f64],
    kappa: f64,
    t_end: f64,
    dt: f64,
    n_pairs: usize,
    seed: u64,
    options: &SimOptions,
) -> Result<PairEnsemble> {
    if kappa < 0.0 {
        return Err(Error::ParamDomain(format!("kappa must be >= 0, got {kappa}")));
    }
    integrate(Integration {
        params,
        band: params.band(),
        drift_pref: 1.0,
        time_speed: 1.0,
        kappa,
        x0,
        t_end,
        dt,
        n_pairs,
        seed,
        options,
        model: "colored",
    })
}

/// Rescaled-family pair dispersion on the band (1/L, K):
/// dx = eps^{2q + alpha - 2} U(eps^{2(q - beta)} t, x) dt + sqrt(kappa_tilde) dw.
#[allow(clippy::too_many_arguments)]
pub fn simulate_rescaled(
    params: &SpectrumParams,
    spec: &RescaleSpec,
    x0: &[f64],
    t_end: f64,
    dt: f64,
    n_pairs: usize,
    seed: u64,
    options: &SimOptions,
) -> Result<PairEnsemble> {
    integrate(Integration {
        params,
        band: spec.band,
        drift_pref: spec.drift_prefactor(params.alpha),
        time_speed: spec.time_speed(params.beta),
        kappa: spec.kappa_tilde,
        x0,
        t_end,
        dt,
        n_pairs,
        seed,
        options,
        model: "rescaled",
    })
}

/// Mean-square separation over time with jackknife standard errors.
pub fn msd(ensemble: &PairEnsemble) -> Result<Series> {
    let n = ensemble.n_pairs();
    if n == 0 {
        return Err(Error::InsufficientData("empty ensemble".into()));
    }
    let nt = ensemble.times.len();
    let mut y = Vec::with_capacity(nt);
    let mut se = Vec::with_capacity(nt);
    let mut buf = vec![0.0; n];
    for ti in 0..nt {
        for (p, slot) in buf.iter_mut().enumerate() {
            *slot = ensemble.sq_norm(p, ti);
        }
        y.push(buf.iter().sum::<f64>() / n as f64);
        se.push(stats::jackknife_se_mean(&buf));
    }
    // drop t = 0 so the series is usable on log axes; callers know x0
    Series::new(ensemble.times[1..].to_vec(), y[1..].to_vec(), se[1..].to_vec())
}

/// Squared separation at t = 0 is exact with zero error by construction.
pub fn msd_at_zero(ensemble: &PairEnsemble) -> f64 {
    ensemble.x0.iter().map(|v| v * v).sum()
}

/// Per-bin longitudinal relative diffusivity.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct DiffusivityProfile {
    pub bin_centers: Vec<f64>,
    /// (estimate, standard error, sample count); None when under-populated.
    pub bins: Vec<Option<(f64, f64, usize)>>,
    pub min_count: usize,
}

impl DiffusivityProfile {
    /// Populated bins as a series for power-law fitting.
    pub fn to_series(&self) -> Result<Series> {
        let mut t = Vec::new();
        let mut y = Vec::new();
        let mut se = Vec::new();
        for (c, b) in self.bin_centers.iter().zip(&self.bins) {
            if let Some((est, s, _)) = b {
                if *est > 0.0 {
                    t.push(*c);
                    y.push(*est);
                    se.push(*s);
                }
            }
        }
        Series::new(t, y, se)
    }
}

/// Estimate (1/2) d<(xhat . dx)^2>/dt conditioned on |x| per log-spaced bin:
/// each consecutive sample pair contributes lambda^2 / (2 dt) at the bin of
/// its starting radius. Under-populated bins are reported missing.
pub fn relative_diffusivity(
    ensemble: &PairEnsemble,
    bin_edges: &[f64],
    min_count: usize,
) -> Result<DiffusivityProfile> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("bin edges must be increasing, 2+ of them".into()));
    }
    let nb = bin_edges.len() - 1;
    let mut acc: Vec<Vec<f64>> = vec![Vec::new(); nb];
    let nt = ensemble.times.len();
    let d = ensemble.dim;
    for p in 0..ensemble.n_pairs() {
        for ti in 0..nt - 1 {
            let x = ensemble.position(p, ti);
            let rn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn == 0.0 || rn < bin_edges[0] || rn >= bin_edges[nb] {
                continue;
            }
            let bin = match bin_edges[1..].iter().position(|e| rn < *e) {
                Some(b) => b,
                None => continue,
            };
            let xn = ensemble.position(p, ti + 1);
            let dtau = ensemble.times[ti + 1] - ensemble.times[ti];
            let mut lambda = 0.0;
            for i in 0..d {
                lambda += (xn[i] - x[i]) * x[i] / rn;
            }
            acc[bin].push(lambda * lambda / (2.0 * dtau));
        }
    }
    let mut centers = Vec::with_capacity(nb);
    let mut bins = Vec::with_capacity(nb);
    for b in 0..nb {
        centers.push((bin_edges[b] * bin_edges[b + 1]).sqrt());
        let samples = &acc[b];
        if samples.len() < min_count {
            bins.push(None);
        } else {
            let n = samples.len() as f64;
            let mean = samples.iter().sum::<f64>() / n;
            let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
            bins.push(Some((mean, (var / n).sqrt(), samples.len())));
        }
    }
    Ok(DiffusivityProfile { bin_centers: centers, bins, min_count })
}

/// Empirical autocorrelation of the recorded drift at a fixed sample-index
/// lag, averaged over pairs and base times.
pub fn drift_autocorrelation(ensemble: &PairEnsemble, lag: usize) -> Result<f64> {
    let drifts = ensemble
        .drifts
        .as_ref()
        .ok_or_else(|| Error::InvalidInput("ensemble carries no drift record".into()))?;
    let nt = ensemble.times.len();
    if lag == 0 || lag >= nt {
        return Err(Error::InvalidInput(format!("lag must lie in [1, {})", nt)));
    }
    let d = ensemble.dim;
    let n = ensemble.n_pairs();
    let mut num = 0.0;
    let mut den = 0.0;
    for p in 0..n {
        for ti in 1..nt - lag {
            let base = (p * nt + ti) * d;
            let fut = (p * nt + ti + lag) * d;
            for i in 0..d {
                num += drifts[base + i] * drifts[fut + i];
                den += drifts[base + i] * drifts[base + i];
            }
        }
    }
    if den == 0.0 {
        return Err(Error::InsufficientData("drift record is identically zero".into()));
    }
    Ok(num / den)
}
