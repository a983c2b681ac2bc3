//! Estimators shared by every experiment: log-log power-law fits, curve
//! distances for sweep convergence, a permutation-calibrated two-sample
//! test, and jackknife standard errors.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{self, role};

/// One time-binned series with optional per-point standard errors.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Series {
    pub t: Vec<f64>,
    pub y: Vec<f64>,
    pub stderr: Vec<f64>,
}

impl Series {
    pub fn new(t: Vec<f64>, y: Vec<f64>, stderr: Vec<f64>) -> Result<Self> {
        if t.len() != y.len() || (!stderr.is_empty() && stderr.len() != t.len()) {
            return Err(Error::InvalidInput(
                "series component lengths disagree".into(),
            ));
        }
        if t.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput("series times must be strictly increasing".into()));
        }
        let stderr = if stderr.is_empty() { vec![0.0; t.len()] } else { stderr };
        Ok(Series { t, y, stderr })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PowerLawFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// 95% confidence half-width on the exponent.
    pub ci_half_width: f64,
    pub window: (f64, f64),
    pub n_points: usize,
    /// Largest |log(data) - log(fit)| inside the window.
    pub max_abs_log_residual: f64,
}

const MIN_FIT_POINTS: usize = 8;
const Z_95: f64 = 1.959_963_984_540_054;

/// Weighted least squares for y = prefactor * t^exponent on log axes.
/// Points weigh as 1/sigma_log^2 with sigma_log = stderr/y; when every
/// stderr is zero the fit is ordinary least squares with the confidence
/// interval taken from the residual scatter instead.
pub fn fit_power_law(series: &Series, window: (f64, f64)) -> Result<PowerLawFit> {
    let (w_lo, w_hi) = window;
    if !(w_hi > w_lo) {
        return Err(Error::InvalidInput(format!("bad fit window ({w_lo}, {w_hi})")));
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sig = Vec::new();
    for i in 0..series.len() {
        let t = series.t[i];
        if t < w_lo || t > w_hi {
            continue;
        }
        let y = series.y[i];
        if !(t > 0.0 && y > 0.0) {
            return Err(Error::InvalidInput(format!(
                "power-law fit needs positive (t, y), got ({t}, {y})"
            )));
        }
        xs.push(t.ln());
        ys.push(y.ln());
        sig.push(series.stderr[i] / y);
    }
    let n = xs.len();
    if n < MIN_FIT_POINTS {
        return Err(Error::InsufficientData(format!(
            "fit window holds {n} points, need {MIN_FIT_POINTS}"
        )));
    }
    let external_errors = sig.iter().all(|s| *s > 0.0);
    let weights: Vec<f64> = if external_errors {
        sig.iter().map(|s| 1.0 / (s * s)).collect()
    } else {
        vec![1.0; n]
    };
    let sw: f64 = weights.iter().sum();
    let mx: f64 = xs.iter().zip(&weights).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my: f64 = ys.iter().zip(&weights).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for i in 0..n {
        sxx += weights[i] * (xs[i] - mx) * (xs[i] - mx);
        sxy += weights[i] * (xs[i] - mx) * (ys[i] - my);
    }
    if sxx <= 0.0 {
        return Err(Error::InsufficientData("fit window has no time spread".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let mut max_resid = 0.0f64;
    let mut ss_resid = 0.0;
    for i in 0..n {
        let r = ys[i] - (intercept + slope * xs[i]);
        max_resid = max_resid.max(r.abs());
        ss_resid += weights[i] * r * r;
    }
    let var_slope = if external_errors {
        1.0 / sxx
    } else if n > 2 {
        (ss_resid / (n as f64 - 2.0)) / sxx
    } else {
        0.0
    };
    Ok(PowerLawFit {
        exponent: slope,
        prefactor: intercept.exp(),
        ci_half_width: Z_95 * var_slope.sqrt(),
        window,
        n_points: n,
        max_abs_log_residual: max_resid,
    })
}

fn log_interp(series: &Series, lt: f64) -> f64 {
    // piecewise-linear in (log t, log y); callers guarantee lt inside range
    let ts = &series.t;
    let mut hi = 1;
    while hi + 1 < ts.len() && ts[hi].ln() < lt {
        hi += 1;
    }
    let lo = hi - 1;
    let x0 = ts[lo].ln();
    let x1 = ts[hi].ln();
    let y0 = series.y[lo].ln();
    let y1 = series.y[hi].ln();
    if x1 == x0 {
        return y0;
    }
    y0 + (y1 - y0) * (lt - x0) / (x1 - x0)
}

/// Root-mean-square gap between two curves on log-log axes over the shared
/// window: sqrt( int (log a - log b)^2 dlog t / int dlog t ). Symmetric and
/// zero only when the curves agree on the window.
pub fn curve_distance(a: &Series, b: &Series, window: (f64, f64)) -> Result<f64> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InsufficientData("curve distance needs 2+ points per series".into()));
    }
    let lo = window.0.max(a.t[0]).max(b.t[0]);
    let hi = window.1.min(*a.t.last().unwrap()).min(*b.t.last().unwrap());
    if !(hi > lo) {
        return Err(Error::InvalidInput(format!(
            "curves share no window inside ({}, {})",
            window.0, window.1
        )));
    }
    for s in [a, b] {
        for i in 0..s.len() {
            if s.t[i] >= lo && s.t[i] <= hi && s.y[i] <= 0.0 {
                return Err(Error::InvalidInput(
                    "curve distance needs positive values on the window".into(),
                ));
            }
        }
    }
    let (llo, lhi) = (lo.ln(), hi.ln());
    let n = 256;
    let mut acc = 0.0;
    let mut prev = {
        let d = log_interp(a, llo) - log_interp(b, llo);
        d * d
    };
    for i in 1..=n {
        let lt = llo + (lhi - llo) * i as f64 / n as f64;
        let d = log_interp(a, lt) - log_interp(b, lt);
        let cur = d * d;
        acc += 0.5 * (prev + cur) * (lhi - llo) / n as f64;
        prev = cur;
    }
    Ok((acc / (lhi - llo)).sqrt())
}

/// Distance of each sweep member to a reference curve, with a verdict on
/// strict decrease toward the reference.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceTrace {
    pub epsilons: Vec<f64>,
    pub distances: Vec<f64>,
    pub strictly_decreasing: bool,
}

impl ConvergenceTrace {
    pub fn new(epsilons: Vec<f64>, distances: Vec<f64>) -> Result<Self> {
        if epsilons.len() != distances.len() || epsilons.is_empty() {
            return Err(Error::InvalidInput("trace lengths disagree or empty".into()));
        }
        if epsilons.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::InvalidInput("epsilons must be strictly decreasing".into()));
        }
        if distances.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidInput("distances must be finite".into()));
        }
        let strictly_decreasing = distances.windows(2).all(|w| w[1] < w[0]);
        Ok(ConvergenceTrace { epsilons, distances, strictly_decreasing })
    }
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct TwoSampleReport {
    /// Kolmogorov-Smirnov statistic sup |F_a - F_b|.
    pub statistic: f64,
    /// Permutation-calibrated pass threshold at the 3-sigma quantile.
    pub threshold: f64,
    pub pass: bool,
}

const N_PERMUTATIONS: usize = 2000;
/// Two-sided 3-sigma coverage.
const PERM_QUANTILE: f64 = 0.997_3;

fn ks_statistic(a: &mut [f64], b: &mut [f64]) -> f64 {
    a.sort_by(|x, y| x.total_cmp(y));
    b.sort_by(|x, y| x.total_cmp(y));
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut i = 0;
    let mut j = 0;
    let mut d = 0.0f64;
    while i < a.len() && j < b.len() {
        // consume every value tied at the current level before comparing,
        // so equal samples never register a spurious step
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Seeded permutation test of "same distribution" on the KS statistic.
/// Passes when the observed statistic does not exceed the 99.73rd
/// percentile of the permutation null.
pub fn two_sample_match(sample_a: &[f64], sample_b: &[f64], seed: u64) -> Result<TwoSampleReport> {
    if sample_a.is_empty() || sample_b.is_empty() {
        return Err(Error::InsufficientData("two-sample test needs non-empty samples".into()));
    }
    let mut a = sample_a.to_vec();
    let mut b = sample_b.to_vec();
    let statistic = ks_statistic(&mut a, &mut b);
    let mut pool: Vec<f64> = sample_a.iter().chain(sample_b).copied().collect();
    let na = sample_a.len();
    let mut rng = rng::stream(seed, &[role::PERMUTATION]);
    let mut null = Vec::with_capacity(N_PERMUTATIONS);
    for _ in 0..N_PERMUTATIONS {
        pool.shuffle(&mut rng);
        let (pa, pb) = pool.split_at_mut(na);
        null.push(ks_statistic(pa, pb));
    }
    null.sort_by(|x, y| x.total_cmp(y));
    let idx = ((PERM_QUANTILE * N_PERMUTATIONS as f64).ceil() as usize)
        .min(N_PERMUTATIONS)
        .saturating_sub(1);
    let threshold = null[idx];
    Ok(TwoSampleReport { statistic, threshold, pass: statistic <= threshold })
}

/// Jackknife (leave-one-out) standard error of the sample mean.
pub fn jackknife_se_mean(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let nf = n as f64;
    let total: f64 = xs.iter().sum();
    let grand = total / nf;
    let mut ss = 0.0;
    for &x in xs {
        let loo = (total - x) / (nf - 1.0);
        ss += (loo - grand) * (loo - grand);
    }
    ((nf - 1.0) / nf * ss).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn pow_series(pref: f64, expo: f64, n: usize) -> Series {
        let t: Vec<f64> = (1..=n).map(|i| i as f64 * 0.5).collect();
        let y: Vec<f64> = t.iter().map(|t| pref * t.powf(expo)).collect();
        Series::new(t, y, vec![]).unwrap()
    }

    #[test]
    fn exact_power_law_recovered() {
        let s = pow_series(3.0, 2.0, 20);
        let f = fit_power_law(&s, (0.4, 11.0)).unwrap();
        assert_relative_eq!(f.exponent, 2.0, max_relative = 1e-12);
        assert_relative_eq!(f.prefactor, 3.0, max_relative = 1e-10);
        assert!(f.ci_half_width < 1e-10);
        assert!(f.max_abs_log_residual < 1e-12);
    }

    #[test]
    fn brownian_like_slope_with_errors() {
        // noiseless linear data with nominal errors: WLS path, CI from them
        let t: Vec<f64> = (1..=16).map(|i| i as f64).collect();
        let y: Vec<f64> = t.iter().map(|t| 2.0 * t).collect();
        let se: Vec<f64> = y.iter().map(|y| 0.05 * y).collect();
        let s = Series::new(t, y, se).unwrap();
        let f = fit_power_law(&s, (0.5, 20.0)).unwrap();
        assert_relative_eq!(f.exponent, 1.0, max_relative = 1e-12);
        assert!(f.ci_half_width > 0.0);
    }

    #[test]
    fn window_filters_points() {
        let s = pow_series(1.0, 1.5, 30);
        let f = fit_power_law(&s, (2.0, 8.0)).unwrap();
        assert!(f.n_points < 30);
        assert_relative_eq!(f.exponent, 1.5, max_relative = 1e-12);
        assert!(matches!(
            fit_power_law(&s, (2.0, 3.0)),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn fit_invariant_under_axis_rescaling(
            expo in -2.0f64..3.0,
            pref in 0.1f64..10.0,
            ct in 0.05f64..20.0,
            cy in 0.05f64..20.0,
        ) {
            let base = pow_series(pref, expo, 16);
            let scaled = Series::new(
                base.t.iter().map(|t| ct * t).collect(),
                base.y.iter().map(|y| cy * y).collect(),
                vec![],
            ).unwrap();
            let f0 = fit_power_law(&base, (0.0, 1e9)).unwrap();
            let f1 = fit_power_law(&scaled, (0.0, 1e9)).unwrap();
            prop_assert!((f0.exponent - f1.exponent).abs() < 1e-9);
            // prefactor transforms as cy / ct^exponent
            let expect = f0.prefactor * cy / ct.powf(f0.exponent);
            prop_assert!((f1.prefactor / expect - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn distance_zero_and_constant_shift() {
        let a = pow_series(2.0, 1.2, 24);
        assert!(curve_distance(&a, &a, (0.0, 1e9)).unwrap() < 1e-14);
        let c = 1.7;
        let b = Series::new(a.t.clone(), a.y.iter().map(|y| c * y).collect(), vec![]).unwrap();
        let d = curve_distance(&a, &b, (0.0, 1e9)).unwrap();
        assert_relative_eq!(d, c.ln(), max_relative = 1e-10);
    }

    #[test]
    fn distance_is_pseudometric_on_triples() {
        let a = pow_series(1.0, 1.0, 24);
        let b = pow_series(2.0, 1.3, 24);
        let c = pow_series(0.5, 0.8, 24);
        let w = (0.5, 12.0);
        let dab = curve_distance(&a, &b, w).unwrap();
        let dba = curve_distance(&b, &a, w).unwrap();
        let dac = curve_distance(&a, &c, w).unwrap();
        let dcb = curve_distance(&c, &b, w).unwrap();
        assert_relative_eq!(dab, dba, max_relative = 1e-12);
        assert!(dab <= dac + dcb + 1e-12);
    }

    #[test]
    fn disjoint_windows_error() {
        let a = pow_series(1.0, 1.0, 10);
        let t: Vec<f64> = (100..110).map(|i| i as f64).collect();
        let y = vec![1.0; 10];
        let b = Series::new(t, y, vec![]).unwrap();
        assert!(curve_distance(&a, &b, (0.0, 1e9)).is_err());
    }

    #[test]
    fn convergence_trace_verdict() {
        let t = ConvergenceTrace::new(vec![0.4, 0.2, 0.1], vec![0.3, 0.2, 0.05]).unwrap();
        assert!(t.strictly_decreasing);
        let t = ConvergenceTrace::new(vec![0.4, 0.2, 0.1], vec![0.3, 0.31, 0.05]).unwrap();
        assert!(!t.strictly_decreasing);
        assert!(ConvergenceTrace::new(vec![0.1, 0.2], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn identical_samples_match() {
        let a: Vec<f64> = (0..200).map(|i| (i as f64 * 0.37).sin()).collect();
        let r = two_sample_match(&a, &a, 1).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert!(r.pass);
    }

    #[test]
    fn disjoint_samples_fail() {
        let a: Vec<f64> = (0..300).map(|i| i as f64 * 1e-3).collect();
        let b: Vec<f64> = (0..300).map(|i| 10.0 + i as f64 * 1e-3).collect();
        let r = two_sample_match(&a, &b, 1).unwrap();
        assert!(!r.pass);
        assert_relative_eq!(r.statistic, 1.0);
    }

    #[test]
    fn same_law_samples_pass() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = crate::rng::stream(99, &[1]);
        let a: Vec<f64> = (0..500).map(|_| StandardNormal.sample(&mut rng)).collect();
        let b: Vec<f64> = (0..700).map(|_| StandardNormal.sample(&mut rng)).collect();
        let r = two_sample_match(&a, &b, 7).unwrap();
        assert!(r.pass, "stat {} threshold {}", r.statistic, r.threshold);
    }

    #[test]
    fn permutation_test_is_deterministic() {
        let a: Vec<f64> = (0..100).map(|i| (i as f64).sqrt()).collect();
        let b: Vec<f64> = (0..100).map(|i| (i as f64).sqrt() + 0.05).collect();
        let r1 = two_sample_match(&a, &b, 3).unwrap();
        let r2 = two_sample_match(&a, &b, 3).unwrap();
        assert_eq!(r1.threshold, r2.threshold);
        assert_eq!(r1.statistic, r2.statistic);
    }

    #[test]
    fn jackknife_matches_classical_se_for_mean() {
        let xs: Vec<f64> = (0..50).map(|i| (i as f64 * 0.73).cos() * 2.0 + 1.0).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let classical = (var / n).sqrt();
        assert_relative_eq!(jackknife_se_mean(&xs), classical, max_relative = 1e-10);
    }
}
