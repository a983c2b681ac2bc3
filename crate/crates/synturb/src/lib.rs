//! Synthetic incompressible turbulence with a power-law energy spectrum and
//! Ornstein-Uhlenbeck time decorrelation, plus the diffusive (white-noise)
//! limits of pair dispersion and passive scalar transport.
//!
//! The velocity model is a band-limited, divergence-free Gaussian field whose
//! two-time increment covariance is
//!
//! ```text
//! E[dU(t,r) (x) dU(s,r)] = int 2 (1 - cos(k.r)) exp(-a|k|^{2 beta} |t-s|)
//!                              E0 (I - khat khat) |k|^{1-2 alpha} |k|^{1-d} dk / (2 pi)^d
//! ```
//!
//! over the wavenumber band ell0^-1 < |k| < ell1^-1, with alpha in (1,2) the
//! spatial roughness exponent and beta > 0 the decorrelation exponent. The
//! crates' modules cover parameterization and regime classification
//! ([`params`]), mode-sum synthesis and exact spectral quadrature ([`field`]),
//! pair-separation ensembles in physical and rescaled variables ([`pairs`]),
//! the limiting white-noise (Kraichnan-type) diffusion ([`kraichnan`]),
//! backward-flow passive scalar probes ([`scalar`]), fitting and comparison
//! statistics ([`stats`]), and the config-driven experiment runner
//! ([`runner`]).

pub mod config;
pub mod error;
pub mod field;
pub mod kraichnan;
pub mod linalg;
pub mod pairs;
pub mod params;
pub mod quad;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod snapshot;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
