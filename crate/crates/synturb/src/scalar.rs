//! Passive-scalar transport diagnostics via backward characteristics.
//!
//! The scalar solves dT/dt + U . grad T = (kappa/2) Lap T and is sampled by
//! running characteristics backward from each evaluation point:
//!
//! ```text
//! Y(s - h) = Y(s) - h U(s, Y(s)) + sqrt(kappa h) xi
//! ```
//!
//! so T(t, x) = E[T_0(Y(0))]. Every path value is one of the initial values,
//! which makes the maximum principle hold exactly for the Monte Carlo mean
//! and makes kappa = 0 transport a rearrangement of initial values.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{ModeLayout, ModeSet, SpectralField};
use crate::kraichnan::KraichnanOracle;
use crate::params::SpectrumParams;
use crate::rng::{self, role};
use crate::stats::{self, TwoSampleReport};

/// Initial scalar profiles with analytically known bounds.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub enum Profile {
    /// amplitude * exp(-|x - center|^2 / (2 width^2))
    GaussianBump { center: Vec<f64>, width: f64, amplitude: f64 },
    /// amplitude inside |x - center| <= radius, zero outside
    Indicator { center: Vec<f64>, radius: f64, amplitude: f64 },
    /// Nearest-neighbor interpolation of tabulated values; `sup` must bound
    /// |values| and is recorded rather than inferred.
    Table { points: Vec<Vec<f64>>, values: Vec<f64>, sup: f64 },
}

impl Profile {
    pub fn dim(&self) -> usize {
        match self {
            Profile::GaussianBump { center, .. } | Profile::Indicator { center, .. } => {
                center.len()
            }
            Profile::Table { points, .. } => points.first().map_or(0, |p| p.len()),
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        match self {
            Profile::GaussianBump { center, width, amplitude } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                amplitude * (-d2 / (2.0 * width * width)).exp()
            }
            Profile::Indicator { center, radius, amplitude } => {
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                if d2 <= radius * radius {
                    *amplitude
                } else {
                    0.0
                }
            }
            Profile::Table { points, values, .. } => {
                let mut best = 0usize;
                let mut best_d = f64::INFINITY;
                for (i, p) in points.iter().enumerate() {
                    let d2: f64 = x.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum();
                    if d2 < best_d {
                        best_d = d2;
                        best = i;
                    }
                }
                values.get(best).copied().unwrap_or(0.0)
            }
        }
    }

    /// Exact supremum of |T_0|.
    pub fn sup(&self) -> f64 {
        match self {
            Profile::GaussianBump { amplitude, .. } | Profile::Indicator { amplitude, .. } => {
                amplitude.abs()
            }
            Profile::Table { sup, .. } => *sup,
        }
    }

    /// Closed-form squared L2 norm when the profile admits one.
    pub fn l2_norm_sq(&self) -> Option<f64> {
        let d = self.dim() as f64;
        match self {
            Profile::GaussianBump { width, amplitude, .. } => {
                Some(amplitude * amplitude * (std::f64::consts::PI * width * width).powf(d / 2.0))
            }
            Profile::Indicator { radius, amplitude, .. } => {
                let vol = match self.dim() {
                    2 => std::f64::consts::PI * radius * radius,
                    3 => 4.0 * std::f64::consts::PI * radius.powi(3) / 3.0,
                    _ => return None,
                };
                Some(amplitude * amplitude * vol)
            }
            Profile::Table { .. } => None,
        }
    }

    /// Radius of a ball (about the profile center) containing the support,
    /// up to the tail cut for the Gaussian bump.
    pub fn support_radius(&self) -> f64 {
        match self {
            Profile::GaussianBump { width, .. } => 8.0 * width,
            Profile::Indicator { radius, .. } => *radius,
            Profile::Table { points, .. } => points
                .iter()
                .map(|p| p.iter().map(|v| v * v).sum::<f64>().sqrt())
                .fold(0.0, f64::max),
        }
    }

    /// Heat-semigroup evolution exp((kappa t / 2) Lap) T_0 in closed form
    /// (Gaussian bump only): the squared width grows by kappa t.
    pub fn heat_evolved(&self, x: &[f64], kappa_t: f64) -> Option<f64> {
        match self {
            Profile::GaussianBump { center, width, amplitude } => {
                let w2 = width * width + kappa_t;
                let d2: f64 = x.iter().zip(center).map(|(a, b)| (a - b) * (a - b)).sum();
                let d = center.len() as f64;
                Some(amplitude * (width * width / w2).powf(d / 2.0) * (-d2 / (2.0 * w2)).exp())
            }
            _ => None,
        }
    }
}

/// Uniform Cartesian evaluation lattice.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub spacing: f64,
    pub shape: Vec<usize>,
}

impl GridSpec {
    pub fn n_points(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing.powi(self.shape.len() as i32)
    }

    pub fn point(&self, flat: usize) -> Vec<f64> {
        let mut rem = flat;
        let mut x = vec![0.0; self.shape.len()];
        for (i, n) in self.shape.iter().enumerate().rev() {
            x[i] = self.origin[i] + (rem % n) as f64 * self.spacing;
            rem /= n;
        }
        x
    }

    /// Half-diagonal extent of the lattice box about its center.
    pub fn covers_ball(&self, center: &[f64], radius: f64) -> bool {
        for (i, n) in self.shape.iter().enumerate() {
            let lo = self.origin[i];
            let hi = self.origin[i] + (*n as f64 - 1.0) * self.spacing;
            if center[i] - radius < lo || center[i] + radius > hi {
                return false;
            }
        }
        true
    }

    /// Centered cube helper: `n` points per axis spanning [-half, half]^dim.
    pub fn centered(dim: usize, half: f64, n: usize) -> Self {
        let spacing = 2.0 * half / (n as f64 - 1.0);
        GridSpec { origin: vec![-half; dim], spacing, shape: vec![n; dim] }
    }
}

/// What to evaluate: initial profile, lattice, molecular diffusivity,
/// Monte Carlo width, and integrator step cap.
#[derive(Debug, Clone)]
pub struct ScalarProbe {
    pub initial: Profile,
    pub grid: GridSpec,
    pub kappa_tilde: f64,
    pub n_paths: usize,
    pub dt_max: f64,
}

/// Velocity driving the characteristics.
pub enum VelocitySource<'a> {
    /// One shared realization of the synthesized colored field (quenched).
    Colored { params: &'a SpectrumParams, layout: ModeLayout },
    /// White-in-time limit motion with the oracle's diffusion matrix.
    Limit(&'a KraichnanOracle),
    /// No advection; pure molecular diffusion (controls).
    Still { dim: usize },
}

impl VelocitySource<'_> {
    fn dim(&self) -> usize {
        match self {
            VelocitySource::Colored { params, .. } => params.dim,
            VelocitySource::Limit(o) => o.dim,
            VelocitySource::Still { dim } => *dim,
        }
    }
}

/// Scalar values over the probe lattice at one time.
#[derive(Debug, Clone)]
pub struct ScalarSample {
    pub t: f64,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Per-point sum of squared path values, kept for unbiased quadratics.
    pub sum_sq: Vec<f64>,
    pub n_paths: usize,
}

/// Replayed history of one colored-field realization at the step times.
struct FieldHistory {
    modes: std::sync::Arc<ModeSet>,
    /// Per step: the mode amplitudes after `step` advances of size dt.
    states: Vec<(Vec<f64>, Vec<f64>)>,
}

fn build_history(
    params: &SpectrumParams,
    layout: ModeLayout,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<FieldHistory> {
    let modes = std::sync::Arc::new(ModeSet::build(params, layout, None)?);
    let field_seed = rng::derive_key(seed, &[role::MODE_INIT, u64::MAX]);
    let mut field = SpectralField::from_modes(std::sync::Arc::clone(&modes), field_seed);
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push((field.amp_cos().to_vec(), field.amp_sin().to_vec()));
    for _ in 0..n_steps {
        field.advance(dt);
        states.push((field.amp_cos().to_vec(), field.amp_sin().to_vec()));
    }
    Ok(FieldHistory { modes, states })
}

impl FieldHistory {
    fn eval(&self, step: usize, x: &[f64], out: &mut [f64]) {
        let (cos_amp, sin_amp) = &self.states[step];
        self.modes.eval_increment_with(cos_amp, sin_amp, x, out);
    }
}

fn check_probe(source: &VelocitySource<'_>, probe: &ScalarProbe) -> Result<usize> {
    let d = source.dim();
    if probe.initial.dim() != d || probe.grid.origin.len() != d || probe.grid.shape.len() != d {
        return Err(Error::InvalidInput(format!(
            "profile, grid, and velocity dimensions must agree (velocity is {d})"
        )));
    }
    if probe.kappa_tilde < 0.0 {
        return Err(Error::ParamDomain(format!(
            "kappa must be >= 0, got {}",
            probe.kappa_tilde
        )));
    }
    if probe.n_paths == 0 {
        return Err(Error::InvalidInput("need at least one path".into()));
    }
    if !(probe.dt_max > 0.0) {
        return Err(Error::InvalidInput(format!("dt_max must be positive, got {}", probe.dt_max)));
    }
    Ok(d)
}

/// Evaluate the scalar over the probe lattice at time t by backward
/// characteristics, using the probe's initial profile.
pub fn evaluate_scalar(
    source: &VelocitySource<'_>,
    probe: &ScalarProbe,
    t: f64,
    seed: u64,
) -> Result<ScalarSample> {
    let initial = probe.initial.clone();
    evaluate_with_initial(source, probe, t, seed, &move |x| initial.eval(x))
}

/// Backward evaluation with an arbitrary initial condition (used by the
/// composition check; the probe's profile supplies bounds only).
pub fn evaluate_with_initial(
    source: &VelocitySource<'_>,
    probe: &ScalarProbe,
    t: f64,
    seed: u64,
    initial: &(dyn Fn(&[f64]) -> f64 + Sync),
) -> Result<ScalarSample> {
    let d = check_probe(source, probe)?;
    if t < 0.0 {
        return Err(Error::InvalidInput(format!("time must be >= 0, got {t}")));
    }
    let n_points = probe.grid.n_points();
    if t == 0.0 {
        let values: Vec<f64> = (0..n_points).map(|i| initial(&probe.grid.point(i))).collect();
        return Ok(ScalarSample {
            t,
            sum_sq: values.iter().map(|v| v * v).collect(),
            stderr: vec![0.0; n_points],
            values,
            n_paths: 1,
        });
    }

    // colored sources replay one shared realization from a stored table
    let (history, n_steps, dt) = match source {
        VelocitySource::Colored { params, layout } => {
            let bound = crate::pairs::C_DT
                / (params.a * params.band().1.powf(2.0 * params.beta));
            let dt_req = probe.dt_max.min(bound);
            let n_steps = (t / dt_req).ceil().max(1.0) as usize;
            let dt = t / n_steps as f64;
            (Some(build_history(params, *layout, n_steps, dt, seed)?), n_steps, dt)
        }
        _ => {
            let n_steps = (t / probe.dt_max).ceil().max(1.0) as usize;
            (None, n_steps, t / n_steps as f64)
        }
    };

    let kappa = probe.kappa_tilde;
    let results: Vec<(f64, f64, f64)> = (0..n_points)
        .into_par_iter()
        .map(|pi| {
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for path in 0..probe.n_paths {
                let mut rng =
                    rng::stream(seed, &[role::SCALAR_BROWNIAN, pi as u64, path as u64]);
                let mut y = probe.grid.point(pi);
                match (&history, source) {
                    (Some(h), _) => {
                        let mut u = vec![0.0; d];
                        // walk the stored field states from time t down to 0
                        for step in (1..=n_steps).rev() {
                            h.eval(step, &y, &mut u);
                            for i in 0..d {
                                let mut dy = -u[i] * dt;
                                if kappa > 0.0 {
                                    let g: f64 = StandardNormal.sample(&mut rng);
                                    dy += (kappa * dt).sqrt() * g;
                                }
                                y[i] += dy;
                            }
                        }
                    }
                    (None, VelocitySource::Limit(oracle)) => {
                        limit_backward_path(oracle, &mut y, t, dt, kappa, &mut rng);
                    }
                    (None, _) => {
                        if kappa > 0.0 {
                            // the zero-field path is exactly Gaussian; one
                            // draw covers the whole interval
                            for slot in y.iter_mut() {
                                let g: f64 = StandardNormal.sample(&mut rng);
                                *slot += (kappa * t).sqrt() * g;
                            }
                        }
                    }
                }
                let v = initial(&y);
                sum += v;
                sum_sq += v * v;
            }
            let n = probe.n_paths as f64;
            let mean = sum / n;
            let var = if probe.n_paths > 1 {
                ((sum_sq - sum * sum / n) / (n - 1.0)).max(0.0)
            } else {
                0.0
            };
            (mean, (var / n).sqrt(), sum_sq)
        })
        .collect();

    let mut values = Vec::with_capacity(n_points);
    let mut stderr = Vec::with_capacity(n_points);
    let mut sum_sq = Vec::with_capacity(n_points);
    for (m, s, q) in results {
        values.push(m);
        stderr.push(s);
        sum_sq.push(q);
    }
    Ok(ScalarSample { t, values, stderr, sum_sq, n_paths: probe.n_paths })
}

/// One backward path under the white-in-time limit motion: steps are
/// Gaussian with covariance h [kappa I + (2/a) Gamma(y, y)], taken in the
/// eigenframe of the isotropic tensor. The limit generator carries no
/// drift, so forward and backward motion share one law.
fn limit_backward_path(
    oracle: &KraichnanOracle,
    y: &mut [f64],
    t: f64,
    dt_cap: f64,
    kappa: f64,
    rng: &mut impl rand::Rng,
) {
    let d = y.len();
    let pref = 2.0 / oracle.a;
    let mut remaining = t;
    let mut draws = vec![0.0; d];
    while remaining > 0.0 {
        let rn = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        let (lg, tg) = oracle.radial_profile(rn).expect("validated geometry");
        let g_trace = pref * (lg + (d as f64 - 1.0) * tg);
        let mut h = if rn == 0.0 || (kappa > 0.0 && g_trace < 0.1 * d as f64 * kappa) {
            dt_cap
        } else {
            dt_cap.min(crate::kraichnan::STEP_FRACTION * rn * rn
                / g_trace.max(f64::MIN_POSITIVE))
        };
        h = h.min(remaining).max(1e-300);
        let lam_long = kappa + pref * lg;
        let lam_trans = kappa + pref * tg;
        let sl = (lam_long.max(0.0) * h).sqrt();
        let st = (lam_trans.max(0.0) * h).sqrt();
        let mut par = 0.0;
        for (i, slot) in draws.iter_mut().enumerate() {
            let g: f64 = StandardNormal.sample(rng);
            *slot = g;
            if rn > 0.0 {
                par += g * y[i] / rn;
            }
        }
        for i in 0..d {
            let e = if rn > 0.0 { y[i] / rn } else { 0.0 };
            y[i] += sl * par * e + st * (draws[i] - par * e);
        }
        remaining -= h;
    }
}

/// Norm and dissipation summary of one scalar sample.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct EnergyReport {
    pub t: f64,
    pub l2_sq_estimate: f64,
    pub l2_sq_stderr: f64,
    pub linf_estimate: f64,
    pub initial_l2_sq: f64,
    /// ||T_0||^2 - ||T_t||^2, nonnegative in expectation.
    pub dissipation_estimate: f64,
    pub dissipation_stderr: f64,
    /// kappa > 0: dissipation should be strictly positive at t > 0.
    pub expect_positive_dissipation: bool,
    /// kappa = 0: the L2 norm should be conserved.
    pub expect_conservation: bool,
    /// Set when the lattice box cannot contain the transported support.
    pub truncation_warning: bool,
}

/// Quadrature the sample into norm estimates. The squared point values use
/// the unbiased pair estimator (S^2 - Q)/(R(R-1)) so Monte Carlo noise does
/// not inflate the L2 norm. `drift_bound` is the caller's bound on the
/// transport displacement over [0, t].
pub fn energy_report(
    sample: &ScalarSample,
    probe: &ScalarProbe,
    drift_bound: f64,
    profile_center: &[f64],
) -> Result<EnergyReport> {
    let n_points = probe.grid.n_points();
    if sample.values.len() != n_points {
        return Err(Error::InvalidInput(format!(
            "sample has {} values for a lattice of {n_points}",
            sample.values.len()
        )));
    }
    let initial_l2 = match probe.initial.l2_norm_sq() {
        Some(v) => v,
        None => {
            // fall back to lattice quadrature of the initial profile
            let vol = probe.grid.cell_volume();
            (0..n_points)
                .map(|i| {
                    let v = probe.initial.eval(&probe.grid.point(i));
                    v * v * vol
                })
                .sum()
        }
    };
    let vol = probe.grid.cell_volume();
    let r = sample.n_paths as f64;
    let mut l2 = 0.0;
    let mut var = 0.0;
    for i in 0..n_points {
        let s = sample.values[i] * r;
        let q = sample.sum_sq[i];
        let t2 = if sample.n_paths > 1 {
            (s * s - q) / (r * (r - 1.0))
        } else {
            s * s
        };
        l2 += vol * t2;
        // propagate the mean's uncertainty through d(T^2) ~ 2 T dT
        let se = 2.0 * sample.values[i].abs() * sample.stderr[i];
        var += vol * vol * se * se;
    }
    let reach = probe.initial.support_radius()
        + drift_bound
        + 6.0 * (probe.kappa_tilde * sample.t).sqrt();
    Ok(EnergyReport {
        t: sample.t,
        l2_sq_estimate: l2,
        l2_sq_stderr: var.sqrt(),
        linf_estimate: sample.values.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        initial_l2_sq: initial_l2,
        dissipation_estimate: initial_l2 - l2,
        dissipation_stderr: var.sqrt(),
        expect_positive_dissipation: probe.kappa_tilde > 0.0 && sample.t > 0.0,
        expect_conservation: probe.kappa_tilde == 0.0,
        truncation_warning: !probe.grid.covers_ball(profile_center, reach),
    })
}

/// Outcome of the exact maximum-principle comparison.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct MaxPrincipleOutcome {
    pub bound: f64,
    pub observed: f64,
    pub pass: bool,
}

/// Every Monte Carlo mean is a convex combination of initial values, so the
/// sup bound holds with no tolerance at all.
pub fn max_principle_check(sample: &ScalarSample, probe: &ScalarProbe) -> MaxPrincipleOutcome {
    let bound = probe.initial.sup();
    let observed = sample.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    MaxPrincipleOutcome { bound, observed, pass: observed <= bound }
}

/// Distribution comparison between the transported values and the initial
/// values on the same lattice: with kappa = 0 the flow only rearranges
/// values, so the two samples should be indistinguishable.
pub fn measure_preservation_check(
    source: &VelocitySource<'_>,
    probe: &ScalarProbe,
    t: f64,
    seed: u64,
) -> Result<TwoSampleReport> {
    if probe.kappa_tilde != 0.0 {
        return Err(Error::InvalidInput(
            "value-rearrangement comparison requires kappa = 0".into(),
        ));
    }
    let sample = evaluate_scalar(source, probe, t, seed)?;
    let initial: Vec<f64> =
        (0..probe.grid.n_points()).map(|i| probe.initial.eval(&probe.grid.point(i))).collect();
    stats::two_sample_match(&initial, &sample.values, rng::derive_key(seed, &[role::PERMUTATION]))
}

/// Check that pointwise composition commutes with transport at kappa = 0:
/// evaluating phi(T_0) along the same backward paths must equal applying
/// phi to the evaluated scalar. Returns the largest absolute discrepancy.
pub fn function_of_scalar_check(
    source: &VelocitySource<'_>,
    probe: &ScalarProbe,
    phi: &(dyn Fn(f64) -> f64 + Sync),
    t: f64,
    seed: u64,
) -> Result<f64> {
    if probe.kappa_tilde != 0.0 {
        return Err(Error::InvalidInput(
            "composition commutes with transport only at kappa = 0".into(),
        ));
    }
    let mut single = probe.clone();
    single.n_paths = 1;
    let direct = evaluate_scalar(source, &single, t, seed)?;
    let initial = probe.initial.clone();
    let composed = evaluate_with_initial(source, &single, t, seed, &move |x| {
        phi(initial.eval(x))
    })?;
    let mut worst = 0.0f64;
    for (a, b) in direct.values.iter().zip(&composed.values) {
        worst = worst.max((phi(*a) - b).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::make_params;
    use approx::assert_relative_eq;

    fn bump(dim: usize) -> Profile {
        Profile::GaussianBump { center: vec![0.0; dim], width: 0.3, amplitude: 1.5 }
    }

    fn still_probe(dim: usize, kappa: f64, n_paths: usize) -> ScalarProbe {
        ScalarProbe {
            initial: bump(dim),
            grid: GridSpec::centered(dim, 2.0, 41),
            kappa_tilde: kappa,
            n_paths,
            dt_max: 0.02,
        }
    }

    #[test]
    fn time_zero_reproduces_initial_exactly() {
        let probe = still_probe(2, 0.1, 8);
        let s = evaluate_scalar(&VelocitySource::Still { dim: 2 }, &probe, 0.0, 5).unwrap();
        for i in 0..probe.grid.n_points() {
            assert_eq!(s.values[i], probe.initial.eval(&probe.grid.point(i)));
            assert_eq!(s.stderr[i], 0.0);
        }
    }

    #[test]
    fn still_diffusion_matches_heat_kernel() {
        let kappa = 0.12;
        let t = 0.5;
        let probe = still_probe(2, kappa, 4000);
        let mut small = probe.clone();
        // a handful of check points keeps the path count affordable
        small.grid = GridSpec { origin: vec![0.0, 0.0], spacing: 0.35, shape: vec![3, 1] };
        let s = evaluate_scalar(&VelocitySource::Still { dim: 2 }, &small, t, 11).unwrap();
        for i in 0..small.grid.n_points() {
            let x = small.grid.point(i);
            let expect = small.initial.heat_evolved(&x, kappa * t).unwrap();
            let diff = (s.values[i] - expect).abs();
            assert!(
                diff <= 3.0 * s.stderr[i].max(1e-4),
                "point {x:?}: {} vs {expect} (se {})",
                s.values[i],
                s.stderr[i]
            );
        }
    }

    #[test]
    fn max_principle_holds_exactly_and_detects_corruption() {
        let p = make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let probe = ScalarProbe {
            initial: bump(2),
            grid: GridSpec::centered(2, 1.5, 17),
            kappa_tilde: 0.05,
            n_paths: 4,
            dt_max: 0.02,
        };
        let src = VelocitySource::Colored {
            params: &p,
            layout: ModeLayout { n_shells: 8, n_dirs: 8 },
        };
        let s = evaluate_scalar(&src, &probe, 0.3, 7).unwrap();
        let ok = max_principle_check(&s, &probe);
        assert!(ok.pass, "observed {} above bound {}", ok.observed, ok.bound);
        // corrupted estimator must be flagged
        let mut bad = s.clone();
        bad.values[0] = probe.initial.sup() * 1.01;
        assert!(!max_principle_check(&bad, &probe).pass);
    }

    #[test]
    fn zero_kappa_transport_preserves_value_distribution() {
        let p = make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let probe = ScalarProbe {
            initial: bump(2),
            grid: GridSpec::centered(2, 3.0, 51),
            kappa_tilde: 0.0,
            n_paths: 1,
            dt_max: 0.02,
        };
        let src = VelocitySource::Colored {
            params: &p,
            layout: ModeLayout { n_shells: 8, n_dirs: 8 },
        };
        let rep = measure_preservation_check(&src, &probe, 0.25, 3).unwrap();
        assert!(
            rep.pass,
            "KS statistic {} above permutation threshold {}",
            rep.statistic, rep.threshold
        );
    }

    #[test]
    fn composition_commutes_at_zero_kappa() {
        let p = make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let probe = ScalarProbe {
            initial: bump(2),
            grid: GridSpec::centered(2, 1.5, 15),
            kappa_tilde: 0.0,
            n_paths: 1,
            dt_max: 0.02,
        };
        let src = VelocitySource::Colored {
            params: &p,
            layout: ModeLayout { n_shells: 8, n_dirs: 8 },
        };
        // a discontinuous composition is fine: paths are shared pointwise
        let step = |v: f64| if v > 0.4 { 1.0 } else { -0.25 };
        let worst = function_of_scalar_check(&src, &probe, &step, 0.3, 9).unwrap();
        assert!(worst <= 1e-10, "worst discrepancy {worst}");
        let mut diffusive = probe.clone();
        diffusive.kappa_tilde = 0.1;
        assert!(function_of_scalar_check(&src, &diffusive, &step, 0.3, 9).is_err());
    }

    #[test]
    fn dissipation_nonnegative_and_grows_with_molecular_noise() {
        let kappa = 0.2;
        let probe = ScalarProbe {
            initial: bump(2),
            grid: GridSpec::centered(2, 5.0, 41),
            kappa_tilde: kappa,
            n_paths: 48,
            dt_max: 0.05,
        };
        let src = VelocitySource::Still { dim: 2 };
        let early = evaluate_scalar(&src, &probe, 0.2, 13).unwrap();
        let late = evaluate_scalar(&src, &probe, 0.8, 13).unwrap();
        let re = energy_report(&early, &probe, 0.0, &[0.0, 0.0]).unwrap();
        let rl = energy_report(&late, &probe, 0.0, &[0.0, 0.0]).unwrap();
        assert!(re.expect_positive_dissipation);
        assert!(!re.truncation_warning);
        assert!(
            re.dissipation_estimate > -3.0 * re.dissipation_stderr,
            "dissipation {} (se {})",
            re.dissipation_estimate,
            re.dissipation_stderr
        );
        assert!(
            rl.dissipation_estimate > re.dissipation_estimate - 3.0 * rl.dissipation_stderr,
            "dissipation should grow: {} -> {}",
            re.dissipation_estimate,
            rl.dissipation_estimate
        );
        assert!(rl.l2_sq_estimate < re.l2_sq_estimate);
    }

    #[test]
    fn truncation_flag_raised_for_small_boxes() {
        let probe = ScalarProbe {
            initial: bump(2),
            grid: GridSpec::centered(2, 0.5, 11),
            kappa_tilde: 0.3,
            n_paths: 4,
            dt_max: 0.05,
        };
        let s = evaluate_scalar(&VelocitySource::Still { dim: 2 }, &probe, 1.0, 3).unwrap();
        let rep = energy_report(&s, &probe, 0.0, &[0.0, 0.0]).unwrap();
        assert!(rep.truncation_warning);
    }

    #[test]
    fn linearity_in_the_initial_condition() {
        let p = make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let src = VelocitySource::Colored {
            params: &p,
            layout: ModeLayout { n_shells: 8, n_dirs: 8 },
        };
        let probe = ScalarProbe {
            initial: bump(2),
            grid: GridSpec::centered(2, 1.0, 9),
            kappa_tilde: 0.08,
            n_paths: 6,
            dt_max: 0.02,
        };
        let t = 0.25;
        let seed = 17;
        let base = probe.initial.clone();
        let a = evaluate_with_initial(&src, &probe, t, seed, &|x| base.eval(x)).unwrap();
        let b = evaluate_with_initial(&src, &probe, t, seed, &|x| {
            0.25 * base.eval(x) + 0.1
        }).unwrap();
        for i in 0..a.values.len() {
            assert_relative_eq!(
                b.values[i],
                0.25 * a.values[i] + 0.1,
                epsilon = 1e-12,
                max_relative = 1e-12
            );
        }
    }

    #[test]
    fn limit_source_spreads_the_bump() {
        let p = make_params(1.2, 0.45, 1.0, 1.0, 1.0, 0.1, 2).unwrap();
        let oracle = KraichnanOracle::from_params(&p, 0.0).unwrap();
        let src = VelocitySource::Limit(&oracle);
        let probe = ScalarProbe {
            initial: bump(2),
            grid: GridSpec { origin: vec![1.2, 0.0], spacing: 0.3, shape: vec![2, 1] },
            kappa_tilde: 0.0,
            n_paths: 400,
            dt_max: 0.01,
        };
        let s = evaluate_scalar(&src, &probe, 0.4, 21).unwrap();
        // far in the initial tail the mean can only be raised by transport
        let x0 = probe.grid.point(0);
        let t0 = probe.initial.eval(&x0);
        assert!(
            s.values[0] > t0 + 3.0 * s.stderr[0],
            "no spreading observed: {} vs initial {t0} (se {})",
            s.values[0],
            s.stderr[0]
        );
        let mp = max_principle_check(&s, &probe);
        assert!(mp.pass);
    }

    #[test]
    fn table_profile_round_trip() {
        let prof = Profile::Table {
            points: vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]],
            values: vec![2.0, -1.0, 0.5],
            sup: 2.0,
        };
        assert_eq!(prof.eval(&[0.1, 0.1]), 2.0);
        assert_eq!(prof.eval(&[0.9, 0.1]), -1.0);
        assert_eq!(prof.sup(), 2.0);
        assert!(prof.l2_norm_sq().is_none());
    }
}
