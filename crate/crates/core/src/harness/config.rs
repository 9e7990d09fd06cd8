//! Experiment specification, read from TOML.
//!
//! Every field has an explicit default (see `docs/config.md`); unknown keys
//! are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::disorder::{AmplitudeDistribution, ENUMERATION_BUDGET};
use crate::error::{Error, Result};
use crate::geometry::{LatticePoint, MultiCube};
use crate::msa::{ScaleSchedule, STABILITY_SAMPLES};
use crate::operator::{ModelParams, DEFAULT_TAIL_TOL};
use crate::potential::{InteractionParams, StaircaseParams};
use crate::stats;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Charfn,
    Wegner,
    Evcomp,
    Ils,
    Msa,
    Localize,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Charfn => "charfn",
            Self::Wegner => "wegner",
            Self::Evcomp => "evcomp",
            Self::Ils => "ils",
            Self::Msa => "msa",
            Self::Localize => "localize",
        }
    }
}

/// A grid given either as an explicit list or as `{ min, max, points, log }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range {
        min: f64,
        max: f64,
        points: usize,
        #[serde(default)]
        log: bool,
    },
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        match self {
            Grid::List(v) => Ok(v.clone()),
            Grid::Range { min, max, points, log } => {
                if *points == 0 || !(min <= max) || (*log && !(*min > 0.0)) {
                    return Err(Error::Config(format!("bad grid range [{min}, {max}] with {points} points")));
                }
                if *log {
                    return Ok(stats::log_grid(*min, *max, *points));
                }
                if *points == 1 {
                    return Ok(vec![*min]);
                }
                Ok((0..*points).map(|i| min + (max - min) * i as f64 / (*points - 1) as f64).collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "d_dim")]
    pub dim: usize,
    #[serde(default = "d_particles")]
    pub particles: usize,
    #[serde(default = "d_kappa")]
    pub kappa: f64,
    #[serde(rename = "A", default = "d_decay")]
    pub decay: f64,
    #[serde(default = "d_one")]
    pub g: f64,
    #[serde(default = "d_one")]
    pub u0: f64,
    #[serde(default = "d_one")]
    pub r0: f64,
    /// Certified potential truncation; `0` disables the cutoff and treats
    /// amplitudes beyond the sampled window as zero.
    #[serde(default = "d_tail_tol")]
    pub tail_tol: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            dim: d_dim(),
            particles: d_particles(),
            kappa: d_kappa(),
            decay: d_decay(),
            g: 1.0,
            u0: 1.0,
            r0: 1.0,
            tail_tol: d_tail_tol(),
        }
    }
}

fn d_dim() -> usize {
    1
}
fn d_particles() -> usize {
    1
}
fn d_kappa() -> f64 {
    2.0
}
fn d_decay() -> f64 {
    3.0
}
fn d_one() -> f64 {
    1.0
}
fn d_tail_tol() -> f64 {
    DEFAULT_TAIL_TOL
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// Cube radius.
    #[serde(rename = "L", default = "d_l")]
    pub l: u32,
    #[serde(default = "d_tau")]
    pub tau: f64,
    /// One center per particle; default all at the origin.
    #[serde(default)]
    pub centers: Vec<Vec<i64>>,
    /// Disorder window radius around each center; default `L + cutoff`
    /// (or `floor(L^tau)` without a cutoff).
    #[serde(default)]
    pub window: Option<u64>,
}

fn d_l() -> u32 {
    3
}
fn d_tau() -> f64 {
    2.0
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grids {
    pub t: Option<Grid>,
    pub eps: Option<Grid>,
    pub energy: Option<Grid>,
    pub lambda: Option<Grid>,
    pub v: Option<Grid>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShellMode {
    Abstract,
    Lattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CharfnSpec {
    #[serde(default = "d_mode")]
    pub mode: ShellMode,
    /// Shell count constant for abstract shells.
    #[serde(default = "d_one")]
    pub c: f64,
    #[serde(rename = "M", default = "d_m")]
    pub m: usize,
    /// Last shell; absent means infinite.
    #[serde(rename = "N", default)]
    pub n: Option<usize>,
    /// Upper frequency for density reconstruction; absent skips it.
    #[serde(default)]
    pub t_max: Option<f64>,
    #[serde(default)]
    pub interval_start: f64,
    #[serde(default = "d_mc")]
    pub mc_samples: u64,
}

impl Default for CharfnSpec {
    fn default() -> Self {
        Self { mode: d_mode(), c: 1.0, m: 1, n: None, t_max: None, interval_start: 0.0, mc_samples: d_mc() }
    }
}

fn d_mode() -> ShellMode {
    ShellMode::Lattice
}
fn d_m() -> usize {
    1
}
fn d_mc() -> u64 {
    100_000
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WegnerSpec {
    #[serde(default)]
    pub energy: f64,
    /// Also report probabilities at `ε + B_out`.
    #[serde(default)]
    pub stable: bool,
    /// Replace sampling by exact enumeration of the annulus.
    #[serde(default)]
    pub exact: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvcompSpec {
    /// Required separation of the two cubes in units of `L`.
    #[serde(default = "d_chat")]
    pub c_hat: f64,
    /// Offset of the second cube's centers from the first's.
    #[serde(default)]
    pub offset: Option<Vec<i64>>,
}

impl Default for EvcompSpec {
    fn default() -> Self {
        Self { c_hat: d_chat(), offset: None }
    }
}

fn d_chat() -> f64 {
    8.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlsSpec {
    #[serde(default = "d_theta")]
    pub theta: f64,
    #[serde(rename = "L0", default = "d_l0s")]
    pub l0: Vec<u32>,
    #[serde(default = "d_ils_samples")]
    pub samples: usize,
}

impl Default for IlsSpec {
    fn default() -> Self {
        Self { theta: d_theta(), l0: d_l0s(), samples: d_ils_samples() }
    }
}

fn d_theta() -> f64 {
    1.0
}
fn d_l0s() -> Vec<u32> {
    vec![3, 5, 7]
}
fn d_ils_samples() -> usize {
    8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizeSpec {
    /// Fraction of the spectrum, from the bottom, forming the energy interval.
    #[serde(default = "d_fraction")]
    pub bottom_fraction: f64,
    /// Radius for the mass-concentration diagnostic.
    #[serde(default = "d_mass_radius")]
    pub mass_radius: u64,
    /// Reference site offset for correlators and Green functions.
    #[serde(default)]
    pub reference: Option<Vec<i64>>,
}

impl Default for LocalizeSpec {
    fn default() -> Self {
        Self { bottom_fraction: d_fraction(), mass_radius: d_mass_radius(), reference: None }
    }
}

fn d_fraction() -> f64 {
    0.1
}
fn d_mass_radius() -> u64 {
    25
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MsaSpec {
    #[serde(default)]
    pub energy: f64,
    #[serde(default)]
    pub samples: Option<usize>,
    #[serde(default)]
    pub stride: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub experiment: ExperimentKind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "d_trials")]
    pub trials: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub override_constraints: bool,
    #[serde(default = "d_budget")]
    pub budget: u64,
    #[serde(default)]
    pub model: ModelSpec,
    #[serde(default = "d_dist")]
    pub distribution: AmplitudeDistribution,
    #[serde(default)]
    pub geometry: GeometrySpec,
    #[serde(default)]
    pub grids: Grids,
    #[serde(default)]
    pub schedule: Option<ScaleSchedule>,
    #[serde(default)]
    pub charfn: CharfnSpec,
    #[serde(default)]
    pub wegner: WegnerSpec,
    #[serde(default)]
    pub evcomp: EvcompSpec,
    #[serde(default)]
    pub ils: IlsSpec,
    #[serde(default)]
    pub localize: LocalizeSpec,
    #[serde(default)]
    pub msa: MsaSpec,
}

fn d_trials() -> usize {
    1000
}
fn d_budget() -> u64 {
    ENUMERATION_BUDGET
}
fn d_dist() -> AmplitudeDistribution {
    AmplitudeDistribution::Bernoulli { p: 0.5 }
}

/// Outcome of [`ExperimentSpec::validate`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Validation {
    pub ok: bool,
    pub messages: Vec<String>,
    pub cutoff: Option<u64>,
    pub schedule_violations: Vec<String>,
}

impl ExperimentSpec {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn staircase(&self) -> Result<StaircaseParams> {
        StaircaseParams::new(self.model.kappa, self.model.decay, self.model.dim)
    }

    pub fn model_params(&self) -> Result<ModelParams> {
        let m = &self.model;
        let inter = if m.u0 == 0.0 { InteractionParams::none() } else { InteractionParams::new(m.r0, m.u0)? };
        if m.tail_tol == 0.0 {
            if !(m.g >= 0.0 && m.g.is_finite()) {
                return Err(Error::InvalidParams(format!("coupling g = {} must be >= 0", m.g)));
            }
            return Ok(ModelParams::untruncated(self.staircase()?, inter, m.g));
        }
        ModelParams::new(self.staircase()?, inter, m.g, m.tail_tol)
    }

    pub fn centers(&self) -> Result<Vec<LatticePoint>> {
        let m = &self.model;
        if self.geometry.centers.is_empty() {
            return Ok(vec![LatticePoint::origin(m.dim); m.particles]);
        }
        if self.geometry.centers.len() != m.particles || self.geometry.centers.iter().any(|c| c.len() != m.dim) {
            return Err(Error::Config(format!("need {} centers of dimension {}", m.particles, m.dim)));
        }
        Ok(self.geometry.centers.iter().map(|c| LatticePoint::new(c)).collect())
    }

    pub fn cube(&self) -> Result<MultiCube> {
        MultiCube::from_centers(&self.centers()?, self.geometry.l)
    }

    /// Disorder window radius around each center.
    pub fn window_radius(&self, model: &ModelParams) -> u64 {
        let l = self.geometry.l as u64;
        self.geometry.window.unwrap_or_else(|| match model.cutoff {
            Some(c) => l + c,
            None => ((l as f64).powf(self.geometry.tau).floor() as u64).max(l),
        })
    }

    pub fn grid(&self, name: &str) -> Result<Vec<f64>> {
        let g = match name {
            "t" => &self.grids.t,
            "eps" => &self.grids.eps,
            "energy" => &self.grids.energy,
            "lambda" => &self.grids.lambda,
            "v" => &self.grids.v,
            _ => unreachable!("unknown grid {name}"),
        };
        g.as_ref().ok_or_else(|| Error::Config(format!("grid `{name}` is required")))?.values()
    }

    /// Full pre-run validation. Hard errors are returned as `Err`; the
    /// schedule constraint check is reported in the verdict.
    pub fn validate(&self) -> Result<Validation> {
        let m = &self.model;
        if !(1..=3).contains(&m.dim) || !(1..=2).contains(&m.particles) {
            return Err(Error::Config(format!("unsupported d = {}, N = {}", m.dim, m.particles)));
        }
        if !(m.decay > m.dim as f64) || !(m.kappa > 1.0) {
            return Err(Error::Config(format!("need A > d and kappa > 1, got A = {}, kappa = {}", m.decay, m.kappa)));
        }
        self.distribution.validate()?;
        let model = self.model_params()?;
        let mut messages = Vec::new();
        if let Some(c) = model.cutoff {
            let tb = model.staircase.tail_bound(c as f64);
            if !(tb <= m.tail_tol) {
                return Err(Error::Config(format!("tail_bound({c}) = {tb:e} exceeds tail_tol")));
            }
            messages.push(format!("cutoff radius {c} certifies tail {tb:e} <= {:e}", m.tail_tol));
        }
        let window = self.window_radius(&model);
        let sites = ((2 * window + 1) as f64).powi(m.dim as i32) * m.particles as f64;
        if self.experiment != ExperimentKind::Charfn && sites > crate::msa::WINDOW_BUDGET as f64 {
            return Err(Error::EnumerationTooLarge { count: sites, budget: crate::msa::WINDOW_BUDGET });
        }
        self.centers()?;
        let mut schedule_violations = Vec::new();
        match self.experiment {
            ExperimentKind::Msa => {
                let s = self.schedule.as_ref().ok_or_else(|| Error::Config("msa needs a [schedule] table".into()))?;
                let v = s.validate()?;
                if !v.ok && !self.override_constraints {
                    return Err(Error::Config(format!(
                        "schedule violates constraints (use --override-constraints): {}",
                        v.violations.join("; ")
                    )));
                }
                schedule_violations = v.violations;
            }
            ExperimentKind::Charfn => {
                self.grid("t")?;
            }
            ExperimentKind::Wegner | ExperimentKind::Evcomp => {
                self.grid("eps")?;
            }
            _ => {}
        }
        Ok(Validation { ok: schedule_violations.is_empty(), messages, cutoff: model.cutoff, schedule_violations })
    }

    /// Schedule defaults for MSA-style runs.
    pub fn msa_samples(&self) -> usize {
        self.msa.samples.unwrap_or(STABILITY_SAMPLES)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_spec() {
        let s = ExperimentSpec::from_toml("experiment = \"ils\"\n").unwrap();
        assert_eq!(s.trials, 1000);
        assert_eq!(s.model.decay, 3.0);
        assert_eq!(s.ils.l0, vec![3, 5, 7]);
        assert!(s.validate().is_ok());
        let back = ExperimentSpec::from_toml(&s.to_toml()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn grids_and_errors() {
        let s = ExperimentSpec::from_toml(
            "experiment = \"wegner\"\n[grids]\neps = { min = 0.01, max = 1.0, points = 3, log = true }\nenergy = [1.0, 2.0]\n",
        )
        .unwrap();
        let eps = s.grid("eps").unwrap();
        assert!((eps[1] - 0.1).abs() < 1e-12);
        assert_eq!(s.grid("energy").unwrap(), vec![1.0, 2.0]);
        assert!(ExperimentSpec::from_toml("experiment = \"wegner\"\nbogus = 1\n").is_err());
        let bad = ExperimentSpec::from_toml("experiment = \"ils\"\n[model]\nA = 0.5\n").unwrap();
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
    }
}
