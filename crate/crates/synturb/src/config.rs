//! Run configuration: flat TOML with unit-suffixed keys, cutoff schedules
//! as power laws of the sweep parameter, and a pre-run audit that evaluates
//! every regime constraint monomial at the smallest sweep value.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::ModeLayout;
use crate::params::{self, make_params, RegimeReport, SpectrumParams};

/// Default audit threshold: constraint monomials must evaluate below this
/// at the smallest epsilon for the sweep to be accepted.
pub const DEFAULT_AUDIT_THRESHOLD: f64 = 0.1;

/// Which study a run performs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Two-time structure-function estimates against the exact tensor.
    Structure,
    /// Pair-separation growth against the dispersion exponent.
    Richardson,
    /// Binned longitudinal relative diffusivity against the scaling slope.
    FourThirds,
    /// Colored-noise sweep converging to the limit diffusion.
    KraichnanLimit,
    /// Scalar norms, maximum principle, and dissipation signs.
    Dissipation,
    /// Sweep pinned to the scale-free boundary exponents.
    Boundary,
}

impl Experiment {
    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Structure => "structure",
            Experiment::Richardson => "richardson",
            Experiment::FourThirds => "four-thirds",
            Experiment::KraichnanLimit => "kraichnan-limit",
            Experiment::Dissipation => "dissipation",
            Experiment::Boundary => "boundary",
        }
    }

    /// Whether the experiment walks the epsilon schedule. Only sweep
    /// experiments are gated on the constraint audit; the others run one
    /// fixed schedule and record the constraints for reference.
    pub fn is_sweep(&self) -> bool {
        matches!(self, Experiment::KraichnanLimit | Experiment::Boundary)
    }
}

fn default_u0() -> f64 {
    1.0
}
fn default_c0() -> f64 {
    1.0
}
fn default_one() -> f64 {
    1.0
}
fn default_ell1() -> f64 {
    0.1
}
fn default_n_pairs() -> usize {
    2000
}
fn default_threshold() -> f64 {
    DEFAULT_AUDIT_THRESHOLD
}
fn default_epsilons() -> Vec<f64> {
    vec![1.0]
}
fn default_n_shells() -> usize {
    32
}
fn default_n_dirs() -> usize {
    8
}
fn default_n_paths() -> usize {
    64
}
fn default_grid_half() -> f64 {
    5.0
}
fn default_grid_points() -> usize {
    41
}
fn default_bump_width() -> f64 {
    0.3
}

/// Fully flat run description; every key that carries a physical unit says
/// so in its name. Cutoff schedules are power laws of epsilon.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub dimension: usize,
    pub alpha_exponent: f64,
    pub beta_exponent: f64,
    #[serde(default = "default_u0")]
    pub u0_velocity: f64,
    #[serde(default = "default_c0")]
    pub c0_rate: f64,
    #[serde(default = "default_one")]
    pub ell0_length: f64,
    #[serde(default = "default_ell1")]
    pub ell1_length: f64,
    #[serde(default)]
    pub kappa0_diffusivity: f64,
    #[serde(default = "default_n_pairs")]
    pub n_pairs: usize,
    pub dt_time: f64,
    pub t_end_time: f64,
    #[serde(default = "default_one")]
    pub x0_separation: f64,
    /// Sweep values, largest to smallest; a single 1.0 means no sweep.
    #[serde(default = "default_epsilons")]
    pub epsilon_values: Vec<f64>,
    /// K(eps) = k_cutoff_coeff * eps^k_cutoff_power.
    #[serde(default = "default_one")]
    pub k_cutoff_coeff: f64,
    #[serde(default)]
    pub k_cutoff_power: f64,
    /// L(eps) = l_cutoff_coeff * eps^l_cutoff_power.
    #[serde(default = "default_one")]
    pub l_cutoff_coeff: f64,
    #[serde(default)]
    pub l_cutoff_power: f64,
    /// kappa(eps) = kappa_tilde_coeff * eps^kappa_tilde_power.
    #[serde(default)]
    pub kappa_tilde_coeff: f64,
    #[serde(default)]
    pub kappa_tilde_power: f64,
    #[serde(default = "default_threshold")]
    pub audit_threshold: f64,
    #[serde(default = "default_n_shells")]
    pub n_shells: usize,
    #[serde(default = "default_n_dirs")]
    pub n_dirs: usize,
    /// Monte Carlo paths per evaluation point (scalar experiments).
    #[serde(default = "default_n_paths")]
    pub n_paths: usize,
    /// Half-width of the scalar observation box (scalar experiments).
    #[serde(default = "default_grid_half")]
    pub grid_half_length: f64,
    /// Lattice points per axis of the scalar observation box.
    #[serde(default = "default_grid_points")]
    pub grid_points_per_axis: usize,
    /// Width of the Gaussian initial profile (scalar experiments).
    #[serde(default = "default_bump_width")]
    pub bump_width_length: f64,
    /// Emit a plotting script next to each table.
    #[serde(default)]
    pub emit_plots: bool,
}

/// Cutoffs and molecular diffusivity of one sweep member.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ScheduleValues {
    pub epsilon: f64,
    pub k_cutoff: f64,
    pub l_cutoff: f64,
    pub kappa_tilde: f64,
}

/// One audited constraint: the monomial, its value at the smallest epsilon,
/// and whether it clears the threshold.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditEntry {
    pub constraint: String,
    pub value: f64,
    pub pass: bool,
}

/// Audit outcome for a configured sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AuditReport {
    pub regime: RegimeReport,
    pub eps_min: f64,
    pub at_eps_min: ScheduleValues,
    pub threshold: f64,
    pub entries: Vec<AuditEntry>,
    /// Whether a failed verdict blocks the run (sweep experiments only).
    pub gating: bool,
    pub pass: bool,
}

impl RunConfig {
    pub fn params(&self) -> Result<SpectrumParams> {
        make_params(
            self.alpha_exponent,
            self.beta_exponent,
            self.u0_velocity,
            self.c0_rate,
            self.ell0_length,
            self.ell1_length,
            self.dimension,
        )
    }

    pub fn layout(&self) -> ModeLayout {
        ModeLayout { n_shells: self.n_shells, n_dirs: self.n_dirs }
    }

    /// Evaluate the cutoff schedules at one sweep value.
    pub fn schedule(&self, epsilon: f64) -> ScheduleValues {
        ScheduleValues {
            epsilon,
            k_cutoff: self.k_cutoff_coeff * epsilon.powf(self.k_cutoff_power),
            l_cutoff: self.l_cutoff_coeff * epsilon.powf(self.l_cutoff_power),
            kappa_tilde: self.kappa_tilde_coeff * epsilon.powf(self.kappa_tilde_power),
        }
    }

    fn validate_shape(&self) -> Result<()> {
        if self.epsilon_values.is_empty() {
            return Err(Error::Config("epsilon_values must not be empty".into()));
        }
        if self
            .epsilon_values
            .iter()
            .any(|e| !(e.is_finite() && *e > 0.0 && *e <= 1.0))
        {
            return Err(Error::Config(
                "epsilon_values must lie in (0, 1]".into(),
            ));
        }
        if self.epsilon_values.windows(2).any(|w| w[1] >= w[0]) {
            return Err(Error::Config(
                "epsilon_values must be strictly decreasing".into(),
            ));
        }
        if !(self.audit_threshold > 0.0) {
            return Err(Error::Config("audit_threshold must be positive".into()));
        }
        if !(self.dt_time > 0.0 && self.t_end_time > self.dt_time) {
            return Err(Error::Config(
                "need 0 < dt_time < t_end_time".into(),
            ));
        }
        if self.n_pairs == 0 || self.n_paths == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        for eps in &self.epsilon_values {
            let s = self.schedule(*eps);
            if !(s.k_cutoff > 0.0 && s.l_cutoff > 0.0 && s.kappa_tilde >= 0.0) {
                return Err(Error::Config(format!(
                    "schedule at epsilon = {eps} yields K = {}, L = {}, kappa = {}",
                    s.k_cutoff, s.l_cutoff, s.kappa_tilde
                )));
            }
            if s.k_cutoff <= 1.0 / s.l_cutoff {
                return Err(Error::Config(format!(
                    "schedule at epsilon = {eps} has an empty band: 1/L = {} >= K = {}",
                    1.0 / s.l_cutoff,
                    s.k_cutoff
                )));
            }
        }
        Ok(())
    }

    /// Evaluate every regime constraint at the smallest sweep value. The
    /// returned report carries one entry per monomial; `pass` is the
    /// conjunction. Shape errors (empty band, bad sweep order) fail early.
    pub fn audit(&self) -> Result<AuditReport> {
        self.validate_shape()?;
        let _ = self.params()?;
        let regime = params::classify_regime(
            self.alpha_exponent,
            self.beta_exponent,
            self.kappa0_diffusivity > 0.0,
        );
        let eps_min = *self.epsilon_values.last().unwrap();
        let at = self.schedule(eps_min);
        let growing_l = self.l_cutoff_power < 0.0;
        let mut entries = Vec::new();
        let mut all = true;
        let mut monomials: Vec<&params::Monomial> = regime.constraints.iter().collect();
        if growing_l {
            monomials.push(&regime.growing_l_constraint);
        }
        for m in monomials {
            let value = m.eval(eps_min, at.k_cutoff, at.l_cutoff, at.kappa_tilde);
            let pass = value <= self.audit_threshold;
            all &= pass;
            entries.push(AuditEntry { constraint: m.to_string(), value, pass });
        }
        Ok(AuditReport {
            regime,
            eps_min,
            at_eps_min: at,
            threshold: self.audit_threshold,
            entries,
            gating: self.experiment.is_sweep(),
            pass: all,
        })
    }

    /// Audit and refuse: for gated experiments a failing verdict becomes an
    /// error naming the violated constraints.
    pub fn audited(&self) -> Result<AuditReport> {
        let report = self.audit()?;
        if report.gating && !report.pass {
            let worst = report
                .entries
                .iter()
                .filter(|e| !e.pass)
                .map(|e| format!("{} = {:.3e}", e.constraint, e.value))
                .collect::<Vec<_>>()
                .join(", ");
            return Err(Error::Config(format!(
                "schedule fails the regime audit at epsilon = {}: {worst} \
                 (threshold {}); tighten the schedules or raise audit_threshold",
                report.eps_min, report.threshold
            )));
        }
        Ok(report)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    toml::from_str(text).map_err(|e| Error::Config(format!("bad run config: {e}")))
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}
