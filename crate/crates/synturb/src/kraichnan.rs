//! White-noise limit diffusion for pair separations.
//!
//! In the rapid-decorrelation limit a pair separation diffuses with matrix
//!
//! ```text
//! D(x) = kappa0 I + (2/a) Gamma(x, x)
//! ```
//!
//! where Gamma(x, y) is the once-integrated covariance of velocity
//! increments. Gamma is isotropic, so D has a longitudinal eigenvalue along
//! x and a degenerate transverse one; simulation never needs a matrix
//! factorization except for the coupled two-point motion. With the infrared
//! cutoff removed Gamma has a scale-invariant closed form with exponent
//! 2 eta = 2(s - 1), s = alpha + beta.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::linalg::{self, DynMat};
use crate::pairs::{log_sample_grid, PairEnsemble};
use crate::params::{c_alpha, SpectrumParams};
use crate::quad;
use crate::rng::{self, role};

/// Default relative tolerance for quadrature-backed evaluations.
pub const DEFAULT_REL_TOL: f64 = 1e-6;
/// Trajectories are frozen once |x| drops below this fraction of |x0|
/// (kappa0 = 0 only; with molecular noise the origin is not absorbing).
pub const ABSORB_FRACTION: f64 = 1e-6;
/// Adaptive-step control: dt <= STEP_FRACTION |x|^2 / tr D.
pub const STEP_FRACTION: f64 = 0.01;

/// Limit-diffusion evaluator for one spectral configuration.
#[derive(Debug, Clone)]
pub struct KraichnanOracle {
    pub dim: usize,
    /// Spectral exponent s = alpha + beta of the limiting covariance.
    pub s: f64,
    pub e0: f64,
    /// Decorrelation-rate amplitude of the underlying colored field.
    pub a: f64,
    /// Wavenumber band (lo, hi); lo = 0 selects the scale-invariant mode.
    pub band: (f64, f64),
    pub kappa0: f64,
    pub rel_tol: f64,
}

impl KraichnanOracle {
    pub fn new(
        dim: usize,
        s: f64,
        e0: f64,
        a: f64,
        band: (f64, f64),
        kappa0: f64,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDim(dim));
        }
        if !(e0 > 0.0 && a > 0.0) {
            return Err(Error::ParamDomain(format!(
                "amplitudes must be positive, got e0 = {e0}, a = {a}"
            )));
        }
        if !(kappa0 >= 0.0) {
            return Err(Error::ParamDomain(format!("kappa0 must be >= 0, got {kappa0}")));
        }
        if !(band.0 >= 0.0 && band.1 > band.0) {
            return Err(Error::InvalidInput(format!("bad band ({}, {})", band.0, band.1)));
        }
        if !(s > 1.0 && s < 2.0) {
            return Err(Error::ParamDomain(format!(
                "limit covariance requires alpha + beta in (1, 2), got {s}"
            )));
        }
        Ok(KraichnanOracle { dim, s, e0, a, band, kappa0, rel_tol: DEFAULT_REL_TOL })
    }

    /// Scale-invariant oracle: no infrared cutoff.
    pub fn from_params(params: &SpectrumParams, kappa0: f64) -> Result<Self> {
        Self::new(
            params.dim,
            params.s_limit(),
            params.e0,
            params.a,
            (0.0, f64::INFINITY),
            kappa0,
        )
    }

    /// Oracle with modes below 1/l_cutoff removed.
    pub fn with_ir_cutoff(
        params: &SpectrumParams,
        l_cutoff: f64,
        kappa0: f64,
    ) -> Result<Self> {
        if !(l_cutoff > 0.0 && l_cutoff.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "outer length must be positive and finite, got {l_cutoff}"
            )));
        }
        Self::new(
            params.dim,
            params.s_limit(),
            params.e0,
            params.a,
            (1.0 / l_cutoff, f64::INFINITY),
            kappa0,
        )
    }

    pub fn with_rel_tol(mut self, rel_tol: f64) -> Self {
        self.rel_tol = rel_tol;
        self
    }

    pub fn is_scale_invariant(&self) -> bool {
        self.band.0 == 0.0 && self.band.1.is_infinite()
    }

    /// Separation-growth exponent of the limit: <|x|^2> ~ t^{1/(2-s)}.
    pub fn dispersion_exponent(&self) -> f64 {
        1.0 / (2.0 - self.s)
    }

    /// Scaling exponent of the covariance, 2 eta = 2(s - 1).
    pub fn eta(&self) -> f64 {
        self.s - 1.0
    }

    /// Quadrature-backed structure tensor G(v) (vanishes at v = 0).
    fn structure_tensor(&self, v: &[f64]) -> Result<DynMat> {
        quad::spectral_tensor(self.dim, self.s, self.e0, self.band, None, v, self.rel_tol)
    }

    /// Covariance coefficient Gamma(x, y) by quadrature, via the identity
    /// Gamma(x, y) = (G(x) + G(y) - G(x - y)) / 2.
    pub fn gamma1(&self, x: &[f64], y: &[f64]) -> Result<DynMat> {
        if x.len() != self.dim || y.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "points must have {} components, got {} and {}",
                self.dim,
                x.len(),
                y.len()
            )));
        }
        if x.iter().all(|v| *v == 0.0) || y.iter().all(|v| *v == 0.0) {
            return Ok(DynMat::zeros(self.dim));
        }
        if x == y {
            return self.structure_tensor(x);
        }
        let gx = self.structure_tensor(x)?;
        let gy = self.structure_tensor(y)?;
        let diff: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| xi - yi).collect();
        let gd = self.structure_tensor(&diff)?;
        let mut out = DynMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                out.set(i, j, 0.5 * (gx.get(i, j) + gy.get(i, j) - gd.get(i, j)));
            }
        }
        Ok(out)
    }

    /// Closed-form Gamma(x, x) in the scale-invariant mode:
    /// pref |x|^{2 eta} [(1 + 2 eta/(d-1)) I - (2 eta/(d-1)) xhat xhat].
    pub fn gamma1_closed(&self, x: &[f64]) -> Result<DynMat> {
        if !self.is_scale_invariant() {
            return Err(Error::InvalidInput(
                "closed form requires the scale-invariant mode (no infrared cutoff)".into(),
            ));
        }
        if x.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "point must have {} components, got {}",
                self.dim,
                x.len()
            )));
        }
        let rn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn == 0.0 {
            return Ok(DynMat::zeros(self.dim));
        }
        let (long, trans) = self.closed_components(rn)?;
        let rhat: Vec<f64> = x.iter().map(|v| v / rn).collect();
        Ok(DynMat::from_axis(self.dim, &rhat, long, trans))
    }

    /// (longitudinal, transverse) closed-form components at radius r.
    fn closed_components(&self, r: f64) -> Result<(f64, f64)> {
        let h = self.eta();
        let pref = self.e0 * r.powf(2.0 * h) / c_alpha(self.s, self.dim)?;
        Ok((pref, pref * (1.0 + 2.0 * h / (self.dim as f64 - 1.0))))
    }

    /// Pair-coefficient tensor at coincident points, Gamma(x, x).
    pub fn b_bar(&self, x: &[f64]) -> Result<DynMat> {
        self.gamma1(x, x)
    }

    /// Limit diffusion matrix D(x) = kappa0 I + (2/a) Gamma(x, x).
    pub fn diffusion(&self, x: &[f64]) -> Result<DynMat> {
        let g = self.b_bar(x)?;
        let mut out = DynMat::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                let mut v = (2.0 / self.a) * g.get(i, j);
                if i == j {
                    v += self.kappa0;
                }
                out.set(i, j, v);
            }
        }
        Ok(out)
    }

    /// Longitudinal relative diffusivity kappa0/2 + xhat . Gamma(x,x) xhat / a.
    pub fn longitudinal_diffusivity(&self, x: &[f64]) -> Result<f64> {
        let rn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if rn == 0.0 {
            return Ok(self.kappa0 / 2.0);
        }
        let g = self.b_bar(x)?;
        let rhat: Vec<f64> = x.iter().map(|v| v / rn).collect();
        Ok(self.kappa0 / 2.0 + g.quad_form(&rhat) / self.a)
    }

    /// (longitudinal, transverse) components of Gamma(x, x) at radius r:
    /// the closed form when available, otherwise one quadrature call.
    pub fn radial_profile(&self, r: f64) -> Result<(f64, f64)> {
        self.radial_components(r)
    }

    fn radial_components(&self, r: f64) -> Result<(f64, f64)> {
        if r == 0.0 {
            return Ok((0.0, 0.0));
        }
        if self.is_scale_invariant() {
            return self.closed_components(r);
        }
        let mut v = vec![0.0; self.dim];
        v[0] = r;
        let g = self.structure_tensor(&v)?;
        Ok((g.get(0, 0), g.get(1, 1)))
    }

    /// Simulate limit-diffusion separations. `dt` caps the adaptive step;
    /// the effective step also respects t_end/1000 and the local scale rule
    /// STEP_FRACTION |x|^2 / tr[(2/a) Gamma(x,x)].
    pub fn simulate_limit_pairs(
        &self,
        x0: &[f64],
        t_end: f64,
        dt: f64,
        n_pairs: usize,
        seed: u64,
        sample_times: Option<&[f64]>,
    ) -> Result<PairEnsemble> {
        let d = self.dim;
        if x0.len() != d {
            return Err(Error::InvalidInput(format!(
                "initial separation has {} components, expected {d}",
                x0.len()
            )));
        }
        if !(t_end > 0.0 && dt > 0.0) {
            return Err(Error::InvalidInput(format!(
                "need positive t_end and dt, got {t_end}, {dt}"
            )));
        }
        if n_pairs == 0 {
            return Err(Error::InvalidInput("need at least one pair".into()));
        }
        let r0 = x0.iter().map(|v| v * v).sum::<f64>().sqrt();
        let table = if self.is_scale_invariant() {
            None
        } else {
            Some(RadialTable::build(self, r0.max(1.0 / self.band.0))?)
        };
        let default_grid;
        let times: Vec<f64> = {
            let raw = match sample_times {
                Some(t) => t,
                None => {
                    default_grid = log_sample_grid(t_end, 32, 2.0);
                    &default_grid
                }
            };
            let mut ts: Vec<f64> = raw.iter().copied().filter(|t| *t > 0.0 && *t <= t_end).collect();
            ts.sort_by(|p, q| p.partial_cmp(q).unwrap());
            ts.dedup();
            let mut full = Vec::with_capacity(ts.len() + 1);
            full.push(0.0);
            full.extend(ts);
            full
        };
        let n_times = times.len();
        let cap = dt.min(t_end / 1000.0);
        let absorb = ABSORB_FRACTION * r0;
        let pref = 2.0 / self.a;

        let per_pair: Vec<Vec<f64>> = (0..n_pairs)
            .into_par_iter()
            .map(|pair| {
                let mut rng = rng::stream(seed, &[role::LIMIT_TRAJ, pair as u64]);
                let mut x = x0.to_vec();
                let mut traj = vec![0.0; n_times * d];
                traj[..d].copy_from_slice(&x);
                let mut t = 0.0;
                let mut next = 1usize;
                let mut frozen = false;
                while next < n_times {
                    let target = times[next];
                    if frozen {
                        traj[next * d..(next + 1) * d].copy_from_slice(&x);
                        next += 1;
                        continue;
                    }
                    let rn = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if self.kappa0 == 0.0 && rn < absorb {
                        frozen = true;
                        continue;
                    }
                    let (long_g, trans_g) = match &table {
                        Some(tab) => tab.lookup(rn),
                        None => self.closed_components(rn).expect("validated exponent"),
                    };
                    let lam_long = self.kappa0 + pref * long_g;
                    let lam_trans = self.kappa0 + pref * trans_g;
                    let g_trace = pref * (long_g + (d as f64 - 1.0) * trans_g);
                    // the kappa0 part is exact at any step; adapt only to the
                    // scale-dependent part, and coast when it is negligible
                    let mut h = if self.kappa0 > 0.0 && g_trace < 0.1 * d as f64 * self.kappa0
                    {
                        cap
                    } else {
                        cap.min(STEP_FRACTION * rn * rn / g_trace.max(f64::MIN_POSITIVE))
                    };
                    h = h.min(target - t).max(1e-300);
                    let mut par = 0.0;
                    let mut draws = vec![0.0; d];
                    for (i, slot) in draws.iter_mut().enumerate() {
                        let g: f64 = StandardNormal.sample(&mut rng);
                        *slot = g;
                        par += g * x[i] / rn.max(f64::MIN_POSITIVE);
                    }
                    let sl = (lam_long.max(0.0) * h).sqrt();
                    let st = (lam_trans.max(0.0) * h).sqrt();
                    for i in 0..d {
                        let e = x[i] / rn.max(f64::MIN_POSITIVE);
                        x[i] += sl * par * e + st * (draws[i] - par * e);
                    }
                    t += h;
                    if t >= target - 1e-12 * target {
                        t = target;
                        traj[next * d..(next + 1) * d].copy_from_slice(&x);
                        next += 1;
                    }
                }
                traj
            })
            .collect();

        let mut trajectories = Vec::with_capacity(n_pairs * n_times * d);
        for traj in per_pair {
            trajectories.extend_from_slice(&traj);
        }
        Ok(PairEnsemble {
            dim: d,
            x0: x0.to_vec(),
            times,
            trajectories,
            drifts: None,
            seed,
            model: "limit".to_string(),
        })
    }

    /// Monte Carlo second-moment functional for the coupled two-point
    /// motion: for each initial pair (x1, x2) evolve
    /// d(x1, x2) with block diffusion
    /// D_ij = kappa0 delta_ij I + (2/a) Gamma(x_i, x_j)
    /// and average phi at time t. Returns (estimate, standard error) per
    /// initial pair. Scale-invariant mode only.
    pub fn two_point_moment<F>(
        &self,
        initial: &[(Vec<f64>, Vec<f64>)],
        phi: F,
        t: f64,
        dt: f64,
        n_paths: usize,
        seed: u64,
    ) -> Result<Vec<(f64, f64)>>
    where
        F: Fn(&[f64], &[f64]) -> f64 + Sync,
    {
        if !self.is_scale_invariant() {
            return Err(Error::InvalidInput(
                "two-point evolution is implemented in the scale-invariant mode only".into(),
            ));
        }
        if !(t >= 0.0 && dt > 0.0) {
            return Err(Error::InvalidInput(format!("need t >= 0 and dt > 0, got {t}, {dt}")));
        }
        if n_paths == 0 {
            return Err(Error::InvalidInput("need at least one path".into()));
        }
        let d = self.dim;
        for (x1, x2) in initial {
            if x1.len() != d || x2.len() != d {
                return Err(Error::InvalidInput(format!(
                    "grid points must have {d} components"
                )));
            }
        }
        let cap = if t > 0.0 { dt.min(t / 200.0) } else { dt };
        let results: Vec<(f64, f64)> = initial
            .par_iter()
            .enumerate()
            .map(|(pi, (x1_0, x2_0))| {
                let samples: Vec<f64> = (0..n_paths)
                    .into_par_iter()
                    .map(|path| {
                        let mut rng = rng::stream(
                            seed,
                            &[role::TWO_POINT, pi as u64, path as u64],
                        );
                        let mut x1 = x1_0.clone();
                        let mut x2 = x2_0.clone();
                        let mut time = 0.0;
                        while time < t {
                            let h = self
                                .two_point_step_bound(&x1, &x2, cap)
                                .min(t - time)
                                .max(1e-300);
                            self.two_point_step(&mut x1, &mut x2, h, &mut rng);
                            time += h;
                        }
                        phi(&x1, &x2)
                    })
                    .collect();
                let n = samples.len() as f64;
                let mean = samples.iter().sum::<f64>() / n;
                let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (n - 1.0).max(1.0);
                (mean, (var / n).sqrt())
            })
            .collect();
        Ok(results)
    }

    fn two_point_step_bound(&self, x1: &[f64], x2: &[f64], cap: f64) -> f64 {
        let r1 = x1.iter().map(|v| v * v).sum::<f64>().sqrt();
        let r2 = x2.iter().map(|v| v * v).sum::<f64>().sqrt();
        let mut h = cap;
        for rn in [r1, r2] {
            if rn > 0.0 {
                let (lg, tg) = self.closed_components(rn).expect("validated exponent");
                let tr = (2.0 / self.a) * (lg + (self.dim as f64 - 1.0) * tg);
                if !(self.kappa0 > 0.0 && tr < 0.1 * self.dim as f64 * self.kappa0) {
                    h = h.min(STEP_FRACTION * rn * rn / tr.max(f64::MIN_POSITIVE));
                }
            }
        }
        h
    }

    fn two_point_step(
        &self,
        x1: &mut [f64],
        x2: &mut [f64],
        h: f64,
        rng: &mut impl rand::Rng,
    ) {
        let d = self.dim;
        if self.kappa0 == 0.0 && x1 == x2 {
            // coincident points share every increment exactly
            let rn = x1.iter().map(|v| v * v).sum::<f64>().sqrt();
            if rn == 0.0 {
                return;
            }
            let (lg, tg) = self.closed_components(rn).expect("validated exponent");
            let sl = ((2.0 / self.a) * lg * h).sqrt();
            let st = ((2.0 / self.a) * tg * h).sqrt();
            let mut par = 0.0;
            let mut draws = vec![0.0; d];
            for (i, slot) in draws.iter_mut().enumerate() {
                let g: f64 = StandardNormal.sample(rng);
                *slot = g;
                par += g * x1[i] / rn;
            }
            for i in 0..d {
                let e = x1[i] / rn;
                let dx = sl * par * e + st * (draws[i] - par * e);
                x1[i] += dx;
                x2[i] += dx;
            }
            return;
        }
        let n = 2 * d;
        let mut cov = vec![0.0; n * n];
        let g11 = self.gamma1_closed(x1).expect("validated input");
        let g22 = self.gamma1_closed(x2).expect("validated input");
        let diff: Vec<f64> = x1.iter().zip(x2.iter()).map(|(p, q)| p - q).collect();
        let gd = self.gamma1_closed(&diff).expect("validated input");
        let mut g12 = DynMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                g12.set(i, j, 0.5 * (g11.get(i, j) + g22.get(i, j) - gd.get(i, j)));
            }
        }
        let pref = 2.0 / self.a;
        for i in 0..d {
            for j in 0..d {
                let mut d11 = pref * g11.get(i, j);
                let mut d22 = pref * g22.get(i, j);
                if i == j {
                    d11 += self.kappa0;
                    d22 += self.kappa0;
                }
                let d12 = pref * g12.get(i, j);
                cov[i * n + j] = d11 * h;
                cov[(d + i) * n + (d + j)] = d22 * h;
                cov[i * n + (d + j)] = d12 * h;
                cov[(d + i) * n + j] = d12 * h;
            }
        }
        linalg::cholesky_in_place(n, &mut cov, 1e-14);
        let mut z = vec![0.0; n];
        for slot in z.iter_mut() {
            let g: f64 = StandardNormal.sample(rng);
            *slot = g;
        }
        for i in 0..n {
            let mut dv = 0.0;
            for j in 0..=i {
                dv += cov[i * n + j] * z[j];
            }
            if i < d {
                x1[i] += dv;
            } else {
                x2[i - d] += dv;
            }
        }
    }
}

/// Log-log interpolation table of the radial components of Gamma(x, x)
/// for banded oracles, so simulation avoids per-step quadrature.
#[derive(Debug, Clone)]
struct RadialTable {
    log_lo: f64,
    step: f64,
    log_long: Vec<f64>,
    log_trans: Vec<f64>,
}

const TABLE_POINTS: usize = 257;

impl RadialTable {
    fn build(oracle: &KraichnanOracle, r_scale: f64) -> Result<Self> {
        let r_lo = 1e-8 * r_scale;
        // beyond ~100 outer lengths the banded tensor saturates; clamp there
        let outer = if oracle.band.0 > 0.0 { 1.0 / oracle.band.0 } else { r_scale };
        let r_hi = (1e4 * r_scale).max(100.0 * outer);
        let log_lo = r_lo.ln();
        let step = (r_hi.ln() - log_lo) / (TABLE_POINTS - 1) as f64;
        let mut log_long = Vec::with_capacity(TABLE_POINTS);
        let mut log_trans = Vec::with_capacity(TABLE_POINTS);
        for i in 0..TABLE_POINTS {
            let r = (log_lo + step * i as f64).exp();
            let (lg, tg) = oracle.radial_components(r)?;
            log_long.push(lg.max(f64::MIN_POSITIVE).ln());
            log_trans.push(tg.max(f64::MIN_POSITIVE).ln());
        }
        Ok(RadialTable { log_lo, step, log_long, log_trans })
    }

    fn lookup(&self, r: f64) -> (f64, f64) {
        let n = self.log_long.len();
        if r <= 0.0 {
            return (0.0, 0.0);
        }
        let pos = (r.ln() - self.log_lo) / self.step;
        if pos <= 0.0 {
            // below the table the tensor is quadratic in r
            let scale = 2.0 * (r.ln() - self.log_lo);
            return ((self.log_long[0] + scale).exp(), (self.log_trans[0] + scale).exp());
        }
        if pos >= (n - 1) as f64 {
            return (self.log_long[n - 1].exp(), self.log_trans[n - 1].exp());
        }
        let i = pos as usize;
        let f = pos - i as f64;
        let lg = self.log_long[i] * (1.0 - f) + self.log_long[i + 1] * f;
        let tg = self.log_trans[i] * (1.0 - f) + self.log_trans[i + 1] * f;
        (lg.exp(), tg.exp())
    }
}
