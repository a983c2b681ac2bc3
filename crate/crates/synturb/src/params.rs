//! Model constants, derived exponents, and regime classification.
//!
//! `SpectrumParams` is the single source of truth for the velocity model:
//! spectral density e0 |k|^{1-2 alpha} (I - khat khat) on the wavenumber band
//! (1/ell0, 1/ell1), with per-mode decorrelation rate a |k|^{2 beta}. All
//! scaling exponents and sweep constraints derive from (alpha, beta, dim).

use crate::error::{Error, Result};
use crate::linalg::DynMat;
use crate::special::checked_gamma;

/// Relative slack for detecting measure-zero boundary cases such as
/// alpha + 2 beta = 2 from rounded inputs like (4/3, 1/3).
const BOUNDARY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct SpectrumParams {
    pub alpha: f64,
    pub beta: f64,
    pub e0: f64,
    pub a: f64,
    pub ell0: f64,
    pub ell1: f64,
    pub dim: usize,
}

/// Normalization constant of the longitudinal increment variance:
/// (4 pi)^{d/2} 2^{2 alpha - 3} (2 alpha - 2) Gamma(alpha + d/2)
/// / ((d - 1) Gamma(2 - alpha)).
/// Accepts any exponent in (1, 2), so it also serves the combined
/// spatial-plus-temporal exponent of the white-noise limit.
pub fn c_alpha(alpha: f64, dim: usize) -> Result<f64> {
    if dim != 2 && dim != 3 {
        return Err(Error::UnsupportedDim(dim));
    }
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(Error::ParamDomain(format!(
            "spectral exponent must lie in (1, 2), got {alpha}"
        )));
    }
    let d = dim as f64;
    let num = (4.0 * std::f64::consts::PI).powf(d / 2.0)
        * 2f64.powf(2.0 * alpha - 3.0)
        * (2.0 * alpha - 2.0)
        * checked_gamma(alpha + d / 2.0)?;
    let den = (d - 1.0) * checked_gamma(2.0 - alpha)?;
    Ok(num / den)
}

/// Scale ratio ell0/ell1 implied by a Reynolds number: Re^{1/(4 - 2 alpha)}.
pub fn reynolds_ratio(alpha: f64, re: f64) -> Result<f64> {
    if re < 1.0 {
        return Err(Error::ParamDomain(format!(
            "reynolds number must be >= 1, got {re}"
        )));
    }
    if (4.0 - 2.0 * alpha).abs() < 1e-300 {
        return Err(Error::ParamDomain(
            "scale-ratio exponent diverges at alpha = 2".into(),
        ));
    }
    Ok(re.powf(1.0 / (4.0 - 2.0 * alpha)))
}

/// Velocity-amplitude construction: e0 = C_alpha u0^2 ell0^{2 - 2 alpha}
/// (asymptotic wide-band normalization, used exactly) and
/// a = c0 ell0^{2 beta - 1} u0.
pub fn make_params(
    alpha: f64,
    beta: f64,
    u0: f64,
    c0: f64,
    ell0: f64,
    ell1: f64,
    dim: usize,
) -> Result<SpectrumParams> {
    if !(u0 > 0.0 && u0.is_finite()) {
        return Err(Error::ParamDomain(format!(
            "velocity scale must be positive, got {u0}"
        )));
    }
    if !(c0 > 0.0 && c0.is_finite()) {
        return Err(Error::ParamDomain(format!(
            "rate constant must be positive, got {c0}"
        )));
    }
    let e0 = c_alpha(alpha, dim)? * u0 * u0 * ell0.powf(2.0 - 2.0 * alpha);
    let a = c0 * ell0.powf(2.0 * beta - 1.0) * u0;
    SpectrumParams::from_amplitudes(alpha, beta, e0, a, ell0, ell1, dim)
}

impl SpectrumParams {
    /// Direct construction from the spectral amplitude and decorrelation
    /// coefficient, validating every domain bound.
    pub fn from_amplitudes(
        alpha: f64,
        beta: f64,
        e0: f64,
        a: f64,
        ell0: f64,
        ell1: f64,
        dim: usize,
    ) -> Result<Self> {
        if dim != 2 && dim != 3 {
            return Err(Error::UnsupportedDim(dim));
        }
        if !(alpha > 1.0 && alpha < 2.0) {
            return Err(Error::ParamDomain(format!(
                "spectral exponent must lie in (1, 2), got {alpha}"
            )));
        }
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::ParamDomain(format!(
                "decorrelation exponent must lie in (0, 1), got {beta}"
            )));
        }
        if !(e0 > 0.0 && e0.is_finite()) {
            return Err(Error::ParamDomain(format!(
                "spectral amplitude must be positive, got {e0}"
            )));
        }
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::ParamDomain(format!(
                "decorrelation rate must be positive, got {a}"
            )));
        }
        if !(ell1 > 0.0 && ell1.is_finite() && ell0.is_finite()) {
            return Err(Error::ParamDomain(format!(
                "scales must be positive and finite, got ({ell0}, {ell1})"
            )));
        }
        if ell1 >= ell0 {
            return Err(Error::EmptyBand { ell0, ell1 });
        }
        Ok(Self { alpha, beta, e0, a, ell0, ell1, dim })
    }

    /// Wavenumber band (1/ell0, 1/ell1).
    pub fn band(&self) -> (f64, f64) {
        (1.0 / self.ell0, 1.0 / self.ell1)
    }

    /// Combined spatial-plus-temporal exponent alpha + beta of the limiting
    /// Brownian field's spectrum.
    pub fn s_limit(&self) -> f64 {
        self.alpha + self.beta
    }

    pub fn exponents(&self) -> ScalingExponents {
        exponents(self.alpha, self.beta)
    }

    pub fn classify_regime(&self, kappa0_positive: bool) -> RegimeReport {
        classify_regime(self.alpha, self.beta, kappa0_positive)
    }

    /// Spectral density tensor at wavevector k: e0 |k|^{1-2 alpha} times the
    /// projector orthogonal to k inside the band, zero outside.
    pub fn energy_spectrum(&self, k: &[f64]) -> Result<DynMat> {
        if k.len() != self.dim {
            return Err(Error::InvalidInput(format!(
                "wavevector has {} components, expected {}",
                k.len(),
                self.dim
            )));
        }
        let kn = k.iter().map(|v| v * v).sum::<f64>().sqrt();
        if kn == 0.0 {
            return Err(Error::InvalidInput("wavevector must be nonzero".into()));
        }
        let (lo, hi) = self.band();
        if kn <= lo || kn >= hi {
            return Ok(DynMat::zeros(self.dim));
        }
        let amp = self.e0 * kn.powf(1.0 - 2.0 * self.alpha);
        let mut khat = vec![0.0; self.dim];
        for i in 0..self.dim {
            khat[i] = k[i] / kn;
        }
        // projector I - khat khat^T: transverse weight amp, longitudinal 0
        Ok(DynMat::from_axis(self.dim, &khat, 0.0, amp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ScalingBranch {
    /// alpha + 2 beta > 2: time rescaling q = 2 - alpha - beta.
    WhiteNoise,
    /// alpha + 2 beta = 2: q = beta = 1 - alpha/2.
    Boundary,
    /// alpha + 2 beta < 2: q = 1 - alpha/2.
    Frozen,
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct ScalingExponents {
    pub branch: ScalingBranch,
    /// Time-rescaling exponent.
    pub q: f64,
    /// Dispersion exponent: mean-square separation grows as t^p.
    pub p: f64,
    /// Hurst exponent of the limiting velocity field.
    pub eta: f64,
    /// Viscous-cutoff rate: ell1 may shrink as fast as eps^nu.
    pub nu: f64,
    /// Validity-range exponent for vanishing molecular diffusivity.
    pub gamma_kappa_zero: f64,
    /// Validity-range exponent for positive molecular diffusivity.
    pub gamma_kappa_positive: f64,
}

pub fn exponents(alpha: f64, beta: f64) -> ScalingExponents {
    let sigma = alpha + 2.0 * beta;
    let (branch, q) = if (sigma - 2.0).abs() <= BOUNDARY_TOL * 2.0 {
        (ScalingBranch::Boundary, 1.0 - alpha / 2.0)
    } else if sigma > 2.0 {
        (ScalingBranch::WhiteNoise, 2.0 - alpha - beta)
    } else {
        (ScalingBranch::Frozen, 1.0 - alpha / 2.0)
    };
    ScalingExponents {
        branch,
        q,
        p: 1.0 / q,
        eta: alpha + beta - 1.0,
        nu: (4.0 - sigma) / (3.0 - sigma),
        gamma_kappa_zero: (3.0 - sigma) / (4.0 - sigma),
        gamma_kappa_positive: (4.0 - sigma) / (6.0 - sigma),
    }
}

/// One asymptotic smallness requirement on an epsilon-sweep, as the monomial
/// eps^a K^b L^c kappa^d, optionally times sqrt(log K). A schedule satisfies
/// the constraint when the monomial tends to zero along the sweep.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Monomial {
    pub eps_pow: f64,
    pub k_pow: f64,
    pub l_pow: f64,
    pub kappa_pow: f64,
    pub sqrt_log_k: bool,
}

impl Monomial {
    pub fn eval(&self, eps: f64, k_cut: f64, l_cut: f64, kappa: f64) -> f64 {
        let mut v = eps.powf(self.eps_pow)
            * k_cut.powf(self.k_pow)
            * l_cut.powf(self.l_pow);
        if self.kappa_pow != 0.0 {
            v *= kappa.powf(self.kappa_pow);
        }
        if self.sqrt_log_k {
            v *= k_cut.ln().max(0.0).sqrt();
        }
        v
    }
}

impl std::fmt::Display for Monomial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let mut parts = Vec::new();
        let mut push = |name: &str, pow: f64| {
            if pow == 1.0 {
                parts.push(name.to_string());
            } else if pow != 0.0 {
                parts.push(format!("{name}^{pow:.6}"));
            }
        };
        push("kappa", self.kappa_pow);
        push("eps", self.eps_pow);
        push("K", self.k_pow);
        push("L", self.l_pow);
        if self.sqrt_log_k {
            parts.push("sqrt(log K)".to_string());
        }
        if parts.is_empty() {
            parts.push("1".to_string());
        }
        write!(f, "{}", parts.join(" * "))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum RegimeClass {
    /// sigma > 4: no cutoff coupling needed.
    WhiteNoiseI,
    /// sigma = 4: kappa eps^2 sqrt(log K) -> 0.
    WhiteNoiseII,
    /// 3 < sigma < 4: kappa eps^2 K^{4-sigma} -> 0.
    WhiteNoiseIII,
    /// sigma = 3: kappa eps^2 K -> 0 and eps sqrt(log K) -> 0.
    WhiteNoiseIV,
    /// 2 < sigma < 3: kappa eps^2 K^{4-sigma} -> 0 and eps K^{3-sigma} -> 0.
    WhiteNoiseV,
    /// sigma = 2: marginal scaling q = 1 - alpha/2.
    Boundary,
    /// sigma < 2: frozen-field scaling.
    Frozen,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct RegimeReport {
    pub class: RegimeClass,
    /// sigma = alpha + 2 beta, the classifying combination.
    pub sigma: f64,
    /// Cutoff-coupling requirements an epsilon-sweep must drive to zero.
    pub constraints: Vec<Monomial>,
    /// Whether eddy lifetime equals turnover time (alpha + 2 beta = 2) and
    /// the energy flux is scale-free (alpha - beta = 1) simultaneously,
    /// i.e. (alpha, beta) = (4/3, 1/3).
    pub kolmogorov: bool,
    /// Additional requirement when the infrared cutoff L also grows.
    pub growing_l_constraint: Monomial,
}

pub fn classify_regime(alpha: f64, beta: f64, kappa0_positive: bool) -> RegimeReport {
    let sigma = alpha + 2.0 * beta;
    let mono = |eps_pow: f64, k_pow: f64, kappa_pow: f64, sqrt_log_k: bool| Monomial {
        eps_pow,
        k_pow,
        l_pow: 0.0,
        kappa_pow,
        sqrt_log_k,
    };
    let near = |x: f64, target: f64| (x - target).abs() <= BOUNDARY_TOL * target;
    let (class, constraints) = if near(sigma, 2.0) {
        (RegimeClass::Boundary, vec![])
    } else if sigma < 2.0 {
        (RegimeClass::Frozen, vec![])
    } else if near(sigma, 4.0) {
        (RegimeClass::WhiteNoiseII, vec![mono(2.0, 0.0, 1.0, true)])
    } else if near(sigma, 3.0) {
        (
            RegimeClass::WhiteNoiseIV,
            vec![mono(2.0, 1.0, 1.0, false), mono(1.0, 0.0, 0.0, true)],
        )
    } else if sigma > 4.0 {
        (RegimeClass::WhiteNoiseI, vec![])
    } else if sigma > 3.0 {
        (RegimeClass::WhiteNoiseIII, vec![mono(2.0, 4.0 - sigma, 1.0, false)])
    } else {
        let mut list = vec![mono(2.0, 4.0 - sigma, 1.0, false)];
        // with kappa0 > 0 the second condition follows from the first
        if !kappa0_positive {
            list.push(mono(1.0, 3.0 - sigma, 0.0, false));
        }
        (RegimeClass::WhiteNoiseV, list)
    };
    RegimeReport {
        class,
        sigma,
        constraints,
        kolmogorov: near(sigma, 2.0) && (alpha - beta - 1.0).abs() <= BOUNDARY_TOL,
        growing_l_constraint: Monomial {
            eps_pow: 1.0,
            k_pow: 0.0,
            l_pow: 2.0 * (sigma - 2.0),
            kappa_pow: 0.0,
            sqrt_log_k: false,
        },
    }
}
