//! Fixed-energy multiscale analysis: scale schedules, NS/NR and stable
//! SNS/SNR cube classification, S-good checks, the NI reduction, the
//! induction driver and the initial length-scale probe.
//!
//! Stability over all outside configurations is certified through
//! [`outside_influence_bound`]: outside amplitudes move the cube's potential
//! by at most `B` in sup norm, so spectra move by at most `B` and the
//! resolvent by at most `γ²B/(1 - γB)`. When the certificate is inconclusive
//! a fixed number of sampled outside configurations is checked instead and
//! the tier is recorded.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{box_sites, hash_words, AmplitudeDistribution, DisorderConfig};
use crate::error::{Error, Result};
use crate::geometry::{LatticePoint, MultiCube};
use crate::operator::{assemble, assemble_projections, ModelParams};
use crate::potential::StaircaseParams;
use crate::spectral::{self, nearest_distance, Resolvent};
use crate::stats::{self, Proportion};
use crate::Operator;

/// Default number of sampled outside configurations in the stability fallback.
pub const STABILITY_SAMPLES: usize = 32;
/// Largest disorder window a single MSA trial may sample.
pub const WINDOW_BUDGET: u64 = 1 << 24;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSchedule {
    #[serde(rename = "L0")]
    pub l0: u64,
    pub alpha: f64,
    pub tau: f64,
    pub kappa: f64,
    #[serde(rename = "A")]
    pub decay: f64,
    pub b: f64,
    pub m: f64,
    pub gamma: f64,
    /// Cluster size `K` in the S-good condition.
    #[serde(rename = "K")]
    pub cluster: usize,
    #[serde(rename = "S")]
    pub s: u32,
    pub k_max: usize,
    #[serde(default = "two")]
    pub n_particles: usize,
    #[serde(default = "one")]
    pub dim: usize,
}

fn two() -> usize {
    2
}

fn one() -> usize {
    1
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRow {
    pub k: usize,
    pub l: u64,
    pub m_k: f64,
    pub eps_k: f64,
    pub delta_k: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleValidation {
    pub ok: bool,
    pub violations: Vec<String>,
    pub frak_s: f64,
    pub sigma: f64,
    pub beta_kappa: f64,
}

impl ScaleSchedule {
    fn nd(&self) -> f64 {
        (self.n_particles * self.dim) as f64
    }

    /// Hard parameter errors (as opposed to constraint violations).
    pub fn check_basic(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParams(m));
        if self.l0 < 2 {
            return bad(format!("L0 = {} must be >= 2", self.l0));
        }
        if !(self.alpha > 1.0) {
            return bad(format!("alpha = {} must exceed 1", self.alpha));
        }
        if !(self.kappa > 1.0) || !(self.decay > self.dim as f64) {
            return bad(format!("need kappa > 1 and A > d, got kappa = {}, A = {}", self.kappa, self.decay));
        }
        if !(self.m >= 0.0) || !(self.tau > 1.0) {
            return bad(format!("need m >= 0 and tau > 1, got m = {}, tau = {}", self.m, self.tau));
        }
        if !(1..=2).contains(&self.n_particles) || !(1..=3).contains(&self.dim) {
            return bad(format!("unsupported N = {}, d = {}", self.n_particles, self.dim));
        }
        if self.cluster == 0 {
            return bad("K must be >= 1".into());
        }
        Ok(())
    }

    /// The asymptotic parameter constraints, reported rather than enforced.
    pub fn validate(&self) -> Result<ScheduleValidation> {
        self.check_basic()?;
        let (a, d, nd) = (self.decay, self.dim as f64, self.nd());
        let (alpha, tau, b, gamma) = (self.alpha, self.tau, self.b, self.gamma);
        let mut v = Vec::new();
        if !(alpha > tau) {
            v.push(format!("alpha > tau fails: {alpha} <= {tau}"));
        }
        if !(tau > b / (a - d)) {
            v.push(format!("tau > b/(A-d) fails: {tau} <= {}", b / (a - d)));
        }
        if !(b > alpha * d) {
            v.push(format!("S bound undefined: b = {b} <= alpha d = {}", alpha * d));
        } else if !(self.s as f64 > b * alpha / (b - alpha * d)) {
            v.push(format!("S > b alpha/(b - alpha d) fails: {} <= {}", self.s, b * alpha / (b - alpha * d)));
        }
        if !(a > 2.0 * nd + 3.0 * gamma) {
            v.push(format!("A > 2Nd + 3 gamma fails: {a} <= {}", 2.0 * nd + 3.0 * gamma));
        }
        if !(tau > 2.0 + a / nd) {
            v.push(format!("tau > 2 + A/(Nd) fails: {tau} <= {}", 2.0 + a / nd));
        }
        let sigma = gamma / nd;
        if (alpha - (1.0 + sigma) * tau).abs() > 1e-9 * alpha {
            v.push(format!("alpha = (1 + sigma) tau fails: {alpha} != {}", (1.0 + sigma) * tau));
        }
        Ok(ScheduleValidation {
            ok: v.is_empty(),
            violations: v,
            frak_s: (a - nd) * tau - (a + nd + 1.0),
            sigma,
            beta_kappa: self.kappa / (self.kappa - 1.0),
        })
    }

    /// `L_k`, `m_k`, `ε_k`, `δ_k` for `k = 0..=k_max`.
    pub fn table(&self) -> Result<Vec<ScaleRow>> {
        self.check_basic()?;
        let mut rows = Vec::with_capacity(self.k_max + 1);
        let mut l = self.l0;
        for k in 0..=self.k_max {
            if k > 0 {
                let next = (l as f64).powf(self.alpha).floor();
                if !(next < 1e9) || next as u64 <= l {
                    return Err(Error::InvalidParams(format!("scale L_{k} = {next} does not grow or is too large")));
                }
                l = next as u64;
            }
            rows.push(self.row(k, l));
        }
        Ok(rows)
    }

    fn row(&self, k: usize, l: u64) -> ScaleRow {
        let lf = l as f64;
        let m_k = (1.0 + lf.powf(-0.125)) * self.m;
        let eps_k = 4.0 * lf.powf(-(self.decay - self.dim as f64 / 2.0) * self.tau);
        ScaleRow { k, l, m_k, eps_k, delta_k: (-m_k * lf).exp() }
    }
}

/// Outcome of a plain NS or NR check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub holds: bool,
    /// Largest core-to-boundary Green entry (NS) or distance to the spectrum (NR).
    pub value: f64,
    /// `δ - value` for NS (0 when resonant), the distance itself for NR.
    pub margin: f64,
}

/// `max_{x ∈ core} max_{y ∈ ∂⁻} |G(x, y; E)|`, one solve per boundary site.
pub fn max_boundary_green(res: &Resolvent<'_, f64>, mcube: &MultiCube) -> Result<f64> {
    let core: Vec<usize> = mcube.core()?.sites().iter().map(|x| mcube.index_of(x).expect("core in cube")).collect();
    let mut best = 0.0f64;
    for y in mcube.inner_boundary()? {
        let col = res.column(mcube.index_of(&y).expect("boundary in cube"))?;
        for &x in &core {
            best = best.max(col[x].abs());
        }
    }
    Ok(best)
}

fn ns_from(res: Result<Resolvent<'_, f64>>, mcube: &MultiCube, delta: f64) -> Result<Check> {
    match res {
        Err(Error::Resonant { .. }) => Ok(Check { holds: false, value: f64::INFINITY, margin: 0.0 }),
        Err(e) => Err(e),
        Ok(r) => {
            let g = max_boundary_green(&r, mcube)?;
            let margin = if delta.is_infinite() { f64::INFINITY } else { delta - g };
            Ok(Check { holds: g <= delta, value: g, margin })
        }
    }
}

/// `(E, δ)`-NS: the core-to-boundary Green entries are at most `δ`.
pub fn is_nonsingular(op: &Operator, mcube: &MultiCube, e: f64, delta: f64) -> Result<Check> {
    if mcube.len() != op.dim() {
        return Err(Error::Domain("operator does not live on the given cube".into()));
    }
    ns_from(Resolvent::new(op, e), mcube, delta)
}

/// `(E, ε)`-NR: `dist(E, spec H) >= ε`.
pub fn is_nonresonant(op: &Operator, e: f64, eps: f64) -> Result<Check> {
    let d = spectral::dist_to_spectrum(op, e)?;
    Ok(Check { holds: d >= eps, value: d, margin: d })
}

/// Sup-norm bound on how much the potential on `mcube` can change when the
/// amplitudes outside the enlarged cube of radius `L^τ` vary in `[0, 1]`.
pub fn outside_influence_bound(mcube: &MultiCube, tau: f64, g: f64, params: &StaircaseParams) -> Result<f64> {
    let l = mcube.radius as f64;
    let outer = l.powf(tau);
    if !(outer > l + 1.0) {
        return Err(Error::InvalidParams(format!("need L^tau > L + 1, got L = {l}, tau = {tau}")));
    }
    if g == 0.0 {
        return Ok(0.0);
    }
    // outside sites are at sup distance >= floor(L^τ) + 1 - L from the cube
    let r = outer.floor() + 1.0 - l;
    Ok(mcube.n_particles() as f64 * g * params.tail_bound(r))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "tier", rename_all = "snake_case")]
pub enum Tier {
    Certified,
    Sampled { trials: usize, all_pass: bool },
    Failed,
    /// `γB >= 1`: the perturbation bound is void, only sampling can decide.
    FallbackOnly,
    /// Certificate inconclusive and no sampling done yet.
    Undecided,
}

impl Tier {
    pub fn passes(&self) -> bool {
        matches!(self, Tier::Certified | Tier::Sampled { all_pass: true, .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Tier::Certified => "certified",
            Tier::Sampled { all_pass: true, .. } => "sampled_pass",
            Tier::Sampled { .. } => "sampled_fail",
            Tier::Failed => "failed",
            Tier::FallbackOnly => "fallback_only",
            Tier::Undecided => "undecided",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certification {
    pub tier: Tier,
    pub bound: f64,
    /// Distance to the spectrum (SNR) or largest boundary Green entry (SNS)
    /// of the zero-outside operator.
    pub value: f64,
}

/// SNR from the zero-outside operator: certified when `dist >= ε + B`.
pub fn certify_snr(op_zero: &Operator, e: f64, eps: f64, bound: f64) -> Result<Certification> {
    let dist = spectral::dist_to_spectrum(op_zero, e)?;
    let tier = if dist < eps {
        Tier::Failed
    } else if dist >= eps + bound {
        Tier::Certified
    } else {
        Tier::Undecided
    };
    Ok(Certification { tier, bound, value: dist })
}

/// SNS from the zero-outside operator via the second resolvent identity:
/// certified when `maxG + γ²B/(1 - γB) <= δ` with `γ = ‖G(E)‖`.
pub fn certify_sns(op_zero: &Operator, mcube: &MultiCube, e: f64, delta: f64, bound: f64) -> Result<Certification> {
    let res = match Resolvent::new(op_zero, e) {
        Err(Error::Resonant { .. }) => {
            let tier = if bound > 0.0 { Tier::FallbackOnly } else { Tier::Failed };
            return Ok(Certification { tier, bound, value: f64::INFINITY });
        }
        r => r?,
    };
    let gamma = res.norm();
    let g = max_boundary_green(&res, mcube)?;
    let tier = if gamma * bound >= 1.0 {
        Tier::FallbackOnly
    } else if g > delta {
        Tier::Failed
    } else if g + gamma * gamma * bound / (1.0 - gamma * bound) <= delta {
        Tier::Certified
    } else {
        Tier::Undecided
    };
    Ok(Certification { tier, bound, value: g })
}

/// A cube inside a sampled disorder window, with the `τ`-enlarged region
/// whose complement is the "outside".
#[derive(Clone, Copy, Debug)]
pub struct CubeContext<'a> {
    pub mcube: MultiCube,
    pub config: &'a DisorderConfig,
    pub model: &'a ModelParams,
    pub tau: f64,
}

impl<'a> CubeContext<'a> {
    pub fn outer_radius(&self) -> u64 {
        (self.mcube.radius as f64).powf(self.tau).floor() as u64
    }

    pub fn in_enlarged(&self, y: &LatticePoint) -> bool {
        let r = self.outer_radius();
        self.mcube.centers().iter().any(|c| c.sup_dist(y) <= r)
    }

    pub fn with_cube(&self, mcube: MultiCube) -> Self {
        Self { mcube, ..*self }
    }

    pub fn bound(&self) -> Result<f64> {
        outside_influence_bound(&self.mcube, self.tau, self.model.g, &self.model.staircase)
    }

    /// Amplitudes outside the enlarged cube set to zero.
    pub fn zero_outside(&self) -> DisorderConfig {
        self.config.restricted(|y| self.in_enlarged(y)).with_zero_exterior()
    }

    /// Outside amplitudes redrawn with sample index `i`; inside kept.
    pub fn outside_sample(&self, i: usize) -> DisorderConfig {
        self.config.resample_where(|y| !self.in_enlarged(y), i as u64 + 1)
    }

    pub fn operator(&self, config: &DisorderConfig) -> Result<Operator> {
        assemble(&self.mcube, config, self.model)
    }

    /// Stable non-resonance, certified or sampled.
    pub fn snr(&self, e: f64, eps: f64, samples: usize) -> Result<Certification> {
        let mut c = certify_snr(&self.operator(&self.zero_outside())?, e, eps, self.bound()?)?;
        if c.tier == Tier::Undecided {
            c.tier = self.sample_until_failure(samples, |op| Ok(is_nonresonant(op, e, eps)?.holds))?;
        }
        Ok(c)
    }

    /// Stable non-singularity, certified or sampled.
    pub fn sns(&self, e: f64, delta: f64, samples: usize) -> Result<Certification> {
        let mut c = certify_sns(&self.operator(&self.zero_outside())?, &self.mcube, e, delta, self.bound()?)?;
        if matches!(c.tier, Tier::Undecided | Tier::FallbackOnly) {
            c.tier = self.sample_until_failure(samples, |op| Ok(is_nonsingular(op, &self.mcube, e, delta)?.holds))?;
        }
        Ok(c)
    }

    fn sample_until_failure(&self, samples: usize, ok: impl Fn(&Operator) -> Result<bool>) -> Result<Tier> {
        for i in 0..samples {
            if !ok(&self.operator(&self.outside_sample(i))?)? {
                return Ok(Tier::Sampled { trials: i + 1, all_pass: false });
            }
        }
        Ok(Tier::Sampled { trials: samples, all_pass: true })
    }
}

/// Sub-cubes of radius `l` on a stride grid inside `big` (every particle
/// coordinate offset by a multiple of `stride`, sub-cube contained in `big`).
pub fn subcube_grid(big: &MultiCube, l: u32, stride: u64) -> Result<Vec<MultiCube>> {
    if stride == 0 || l > big.radius {
        return Err(Error::InvalidParams(format!("bad sub-cube grid: radius {l}, stride {stride}")));
    }
    let span = (big.radius - l) as i64;
    let steps = span / stride as i64;
    let offsets: Vec<i64> = (-steps..=steps).map(|i| i * stride as i64).collect();
    let d = big.dim();
    let n = big.n_particles();
    let mut out = Vec::new();
    let total = offsets.len().pow((n * d) as u32);
    for mut code in 0..total {
        let mut centers = Vec::with_capacity(n);
        for c in big.centers() {
            let coords: Vec<i64> = c
                .coords()
                .iter()
                .map(|x| {
                    let o = offsets[code % offsets.len()];
                    code /= offsets.len();
                    x + o
                })
                .collect();
            centers.push(LatticePoint::new(&coords));
        }
        out.push(MultiCube::from_centers(&centers, l)?);
    }
    Ok(out)
}

fn pairwise_ok(cubes: &[MultiCube], chosen: &[usize], cand: usize, min_dist: f64) -> bool {
    chosen.iter().all(|&j| cubes[j].center_dist(&cubes[cand]) as f64 > min_dist)
}

/// Greedy set with pairwise center distance `> min_dist`, scanning by
/// decreasing `key`.
pub fn greedy_distant_set(cubes: &[MultiCube], key: &[f64], min_dist: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..cubes.len()).collect();
    order.sort_by(|&a, &b| key[b].total_cmp(&key[a]).then(a.cmp(&b)));
    let mut chosen = Vec::new();
    for i in order {
        if pairwise_ok(cubes, &chosen, i, min_dist) {
            chosen.push(i);
        }
    }
    chosen
}

/// Maximum such set by exhaustive search over subsets.
pub fn exhaustive_distant_set(cubes: &[MultiCube], min_dist: f64) -> Vec<usize> {
    let n = cubes.len();
    assert!(n <= 20, "exhaustive search over {n} candidates");
    let mut best: Vec<usize> = Vec::new();
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize <= best.len() {
            continue;
        }
        let set: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
        let ok = set.iter().enumerate().all(|(a, &i)| pairwise_ok(cubes, &set[..a], i, min_dist));
        if ok {
            best = set;
        }
    }
    best
}

/// Candidates up to which the distant set is found exactly.
pub const EXACT_CLUSTER_LIMIT: usize = 12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SGood {
    pub good: bool,
    /// Size of the largest pairwise-distant set of singular PI sub-cubes found.
    pub cluster: usize,
    pub candidates: usize,
    pub singular: usize,
    /// `false` when the cluster came from the greedy heuristic.
    pub exact: bool,
}

/// S-good: fewer than `k_cluster` pairwise `L_k^τ`-distant PI sub-cubes of
/// radius `l` fail `(E, δ)`-SNS.
pub fn s_good_check(
    ctx: &CubeContext<'_>,
    e: f64,
    delta: f64,
    l: u32,
    k_cluster: usize,
    stride: u64,
    samples: usize,
) -> Result<SGood> {
    let subs: Vec<MultiCube> = subcube_grid(&ctx.mcube, l, stride)?
        .into_iter()
        .filter(|c| c.n_particles() == 1 || !c.is_non_interactive())
        .collect();
    let mut singular = Vec::new();
    let mut key = Vec::new();
    for sub in &subs {
        let c = ctx.with_cube(*sub).sns(e, delta, samples)?;
        if !c.tier.passes() {
            singular.push(*sub);
            key.push(c.value);
        }
    }
    let min_dist = (l as f64).powf(ctx.tau);
    let (cluster, exact) = if singular.len() <= EXACT_CLUSTER_LIMIT {
        (exhaustive_distant_set(&singular, min_dist).len(), true)
    } else {
        (greedy_distant_set(&singular, &key, min_dist).len(), false)
    };
    Ok(SGood { good: cluster < k_cluster, cluster, candidates: subs.len(), singular: singular.len(), exact })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Witness {
    /// Eigenvalue of the other projection.
    pub lambda: f64,
    /// Projection (1 or 2) whose shifted-energy SNS fails.
    pub side: u8,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NiCheck {
    pub holds: bool,
    pub snr: Certification,
    pub witness: Option<Witness>,
}

/// `min |E - λ' - λ''|` over two spectra.
fn minkowski_dist(a: &[f64], b: &[f64], e: f64) -> f64 {
    a.iter().map(|&l| nearest_distance(b, e - l)).fold(f64::INFINITY, f64::min)
}

/// Sufficient conditions for an NI cube to be non-singular: `2ε`-SNR of the
/// product and `(E - λ', δ)`-SNS of each projection for every eigenvalue
/// `λ'` of the other one. Stops at the first failing witness.
pub fn ni_nonsingular_check(ctx: &CubeContext<'_>, e: f64, delta: f64, eps: f64, samples: usize) -> Result<NiCheck> {
    let mcube = ctx.mcube;
    let spectra = |cfg: &DisorderConfig| -> Result<(Vec<f64>, Vec<f64>)> {
        let (a, b) = assemble_projections::<f64>(&mcube, cfg, ctx.model)?;
        Ok((spectral::full_spectrum(&a, false)?.eigenvalues, spectral::full_spectrum(&b, false)?.eigenvalues))
    };
    let (s1, s2) = spectra(&ctx.zero_outside())?;
    let bound = ctx.bound()?;
    let dist = minkowski_dist(&s1, &s2, e);
    let mut tier = if dist < 2.0 * eps {
        Tier::Failed
    } else if dist >= 2.0 * eps + bound {
        Tier::Certified
    } else {
        Tier::Undecided
    };
    if tier == Tier::Undecided {
        tier = Tier::Sampled { trials: samples, all_pass: true };
        for i in 0..samples {
            let (a, b) = spectra(&ctx.outside_sample(i))?;
            if minkowski_dist(&a, &b, e) < 2.0 * eps {
                tier = Tier::Sampled { trials: i + 1, all_pass: false };
                break;
            }
        }
    }
    let snr = Certification { tier, bound, value: dist };
    if !tier.passes() {
        return Ok(NiCheck { holds: false, snr, witness: None });
    }
    let proj = mcube.projections();
    for (side, (other, this)) in [(&s1, &proj[1]), (&s2, &proj[0])].into_iter().enumerate() {
        let sub = ctx.with_cube(MultiCube::one(this.center, this.radius));
        for &lambda in other.iter() {
            if !sub.sns(e - lambda, delta, samples)?.tier.passes() {
                let witness = Witness { lambda, side: 2 - side as u8 };
                return Ok(NiCheck { holds: false, snr, witness: Some(witness) });
            }
        }
    }
    Ok(NiCheck { holds: true, snr, witness: None })
}

#[derive(Clone, Debug, PartialEq)]
pub struct MsaConfig {
    pub energy: f64,
    pub schedule: ScaleSchedule,
    pub model: ModelParams,
    pub dist: AmplitudeDistribution,
    pub trials: usize,
    pub seed: u64,
    pub samples: usize,
    /// Sub-cube grid stride; `None` uses the sub-cube radius.
    pub stride: Option<u64>,
    pub override_constraints: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsaTrial {
    pub scale: usize,
    pub trial: usize,
    pub error: Option<String>,
    pub sns_tier: String,
    pub sns: bool,
    pub ns_direct: bool,
    pub snr: Option<bool>,
    pub ni_ok: Option<bool>,
    pub s_good: Option<bool>,
    pub cluster: Option<usize>,
    pub cluster_exact: Option<bool>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Causes {
    pub not_snr: usize,
    pub singular_ni: usize,
    pub not_s_good: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleReport {
    pub row: ScaleRow,
    pub trials: usize,
    pub invalid: usize,
    pub not_sns: usize,
    pub p_hat: Proportion,
    /// Among trials that are not SNS.
    pub causes: Causes,
    /// Trials where (i)-(iii) hold but the direct NS check fails.
    pub audit_violations: usize,
    /// Trials where SNS passed but the sampled configuration itself is singular.
    pub sns_not_ns: usize,
    pub certified: usize,
    pub sampled: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MsaReport {
    pub energy: f64,
    pub validation: ScheduleValidation,
    pub overridden: bool,
    pub scales: Vec<ScaleReport>,
    pub records: Vec<MsaTrial>,
}

fn sample_window(centers: &[LatticePoint], radius: u64, cfg: &MsaConfig, seed: u64) -> Result<DisorderConfig> {
    let d = cfg.schedule.dim;
    let count = (2 * radius + 1) as f64;
    if count.powi(d as i32) > WINDOW_BUDGET as f64 {
        return Err(Error::EnumerationTooLarge { count: count.powi(d as i32), budget: WINDOW_BUDGET });
    }
    let mut sites = Vec::new();
    for c in centers {
        let lo: Vec<i64> = c.coords().iter().map(|x| x - radius as i64).collect();
        let hi: Vec<i64> = c.coords().iter().map(|x| x + radius as i64).collect();
        sites.extend(box_sites(&LatticePoint::new(&lo), &LatticePoint::new(&hi))?);
    }
    DisorderConfig::sample(&sites, cfg.dist.clone(), seed)
}

fn msa_trial(cfg: &MsaConfig, rows: &[ScaleRow], k: usize, t: usize) -> Result<MsaTrial> {
    let row = rows[k];
    let sch = &cfg.schedule;
    let seed = hash_words(cfg.seed, &[k as u64, t as u64]);
    let origin = LatticePoint::origin(sch.dim);
    let centers = vec![origin; sch.n_particles];
    let mcube = MultiCube::from_centers(&centers, row.l as u32)?;
    let outer = (row.l as f64).powf(sch.tau).floor() as u64;
    let radius = outer.max(row.l + cfg.model.cutoff.unwrap_or(0));
    let config = sample_window(&[origin], radius, cfg, seed)?;
    let ctx = CubeContext { mcube, config: &config, model: &cfg.model, tau: sch.tau };
    let sns = ctx.sns(cfg.energy, row.delta_k, cfg.samples)?;
    let ns_direct = is_nonsingular(&ctx.operator(&config)?, &mcube, cfg.energy, row.delta_k)?.holds;
    let mut rec = MsaTrial {
        scale: k,
        trial: t,
        error: None,
        sns_tier: sns.tier.name().into(),
        sns: sns.tier.passes(),
        ns_direct,
        snr: None,
        ni_ok: None,
        s_good: None,
        cluster: None,
        cluster_exact: None,
    };
    if k == 0 {
        return Ok(rec);
    }
    let prev = rows[k - 1];
    let stride = cfg.stride.unwrap_or(prev.l).max(1);
    rec.snr = Some(ctx.snr(cfg.energy, row.eps_k, cfg.samples)?.tier.passes());
    let mut ni_ok = true;
    for sub in subcube_grid(&mcube, prev.l as u32, stride)? {
        if sub.is_non_interactive() {
            let c = ni_nonsingular_check(&ctx.with_cube(sub), cfg.energy, prev.delta_k, prev.eps_k, cfg.samples)?;
            if !c.holds {
                ni_ok = false;
                break;
            }
        }
    }
    rec.ni_ok = Some(ni_ok);
    let sg = s_good_check(&ctx, cfg.energy, prev.delta_k, prev.l as u32, sch.cluster, stride, cfg.samples)?;
    rec.s_good = Some(sg.good);
    rec.cluster = Some(sg.cluster);
    rec.cluster_exact = Some(sg.exact);
    Ok(rec)
}

/// Monte Carlo estimates of `P(B_{L_k} not (E, m_k)-SNS)` per scale, with the
/// failure-cause breakdown and the implication audit.
pub fn run_fixed_energy_msa(cfg: &MsaConfig) -> Result<MsaReport> {
    let sch = &cfg.schedule;
    let validation = sch.validate()?;
    if !validation.ok && !cfg.override_constraints {
        return Err(Error::Config(format!("schedule violates constraints: {}", validation.violations.join("; "))));
    }
    let st = &cfg.model.staircase;
    if st.kappa() != sch.kappa || st.decay() != sch.decay || st.dim() != sch.dim {
        return Err(Error::InvalidParams("schedule and model disagree on (kappa, A, d)".into()));
    }
    let mut report = MsaReport {
        energy: cfg.energy,
        validation,
        overridden: cfg.override_constraints,
        scales: Vec::new(),
        records: Vec::new(),
    };
    if cfg.trials == 0 {
        return Ok(report);
    }
    let rows = sch.table()?;
    for k in 0..rows.len() {
        let recs: Vec<MsaTrial> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| {
                msa_trial(cfg, &rows, k, t).unwrap_or_else(|e| MsaTrial {
                    scale: k,
                    trial: t,
                    error: Some(e.to_string()),
                    sns_tier: "invalid".into(),
                    sns: false,
                    ns_direct: false,
                    snr: None,
                    ni_ok: None,
                    s_good: None,
                    cluster: None,
                    cluster_exact: None,
                })
            })
            .collect();
        report.scales.push(aggregate(rows[k], &recs));
        report.records.extend(recs);
    }
    Ok(report)
}

fn aggregate(row: ScaleRow, recs: &[MsaTrial]) -> ScaleReport {
    let valid: Vec<&MsaTrial> = recs.iter().filter(|r| r.error.is_none()).collect();
    let failing: Vec<&&MsaTrial> = valid.iter().filter(|r| !r.sns).collect();
    let causes = Causes {
        not_snr: failing.iter().filter(|r| r.snr == Some(false)).count(),
        singular_ni: failing.iter().filter(|r| r.ni_ok == Some(false)).count(),
        not_s_good: failing.iter().filter(|r| r.s_good == Some(false)).count(),
    };
    let hyp = |r: &MsaTrial| r.snr == Some(true) && r.ni_ok == Some(true) && r.s_good == Some(true);
    ScaleReport {
        row,
        trials: recs.len(),
        invalid: recs.len() - valid.len(),
        not_sns: failing.len(),
        p_hat: stats::wilson(failing.len() as u64, valid.len() as u64, stats::Z95),
        causes,
        audit_violations: valid.iter().filter(|r| hyp(r) && !r.ns_direct).count(),
        sns_not_ns: valid.iter().filter(|r| r.sns && !r.ns_direct).count(),
        certified: valid.iter().filter(|r| r.sns_tier == "certified").count(),
        sampled: valid.iter().filter(|r| r.sns_tier.starts_with("sampled")).count(),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlsConfig {
    pub l0: u32,
    pub theta: f64,
    pub model: ModelParams,
    pub dist: AmplitudeDistribution,
    pub centers: Vec<LatticePoint>,
    pub trials: usize,
    pub seed: u64,
    /// Outside samples for the uncertified fallback.
    pub samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IlsReport {
    pub l0: u32,
    pub theta: f64,
    pub threshold: f64,
    pub estimate: Proportion,
    /// Whether the all-zero exterior gives the exact infimum (minimal atom 0).
    pub certified: bool,
    pub min_e0: f64,
    /// Ground energies below `-1e-10 ‖H‖₁`, which positivity forbids.
    pub negative: usize,
    pub e0: Vec<f64>,
}

fn ground_energy(op: &Operator) -> Result<f64> {
    let s = if op.dim() <= spectral::DENSE_THRESHOLD {
        spectral::full_spectrum(op, false)?
    } else {
        spectral::lowest_eigenpairs(op, 1)?
    };
    Ok(s.eigenvalues[0])
}

/// Estimates `P(inf_outside E_0 <= L_0^{-θ})`. With minimal atom 0 the
/// infimum over outside configurations is attained at the all-zero exterior,
/// because every eigenvalue is nondecreasing in each amplitude.
pub fn ils_probe(cfg: &IlsConfig) -> Result<IlsReport> {
    let m = &cfg.model;
    if m.g < 0.0 || m.interaction.u0 < 0.0 {
        return Err(Error::InvalidParams("positivity needs g >= 0 and u0 >= 0".into()));
    }
    let mcube = MultiCube::from_centers(&cfg.centers, cfg.l0)?;
    let threshold = (cfg.l0 as f64).powf(-cfg.theta);
    let certified = cfg.dist.min_value() == 0.0;
    let inside = mcube.projection_sites();
    let e0: Vec<f64> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| {
            let seed = hash_words(cfg.seed, &[cfg.l0 as u64, t as u64]);
            let cfg_in = DisorderConfig::sample(&inside, cfg.dist.clone(), seed)?;
            if certified {
                return ground_energy(&assemble(&mcube, &cfg_in.with_zero_exterior(), m)?);
            }
            // sampled infimum over outside draws in a ring of width L0
            let ring = 2 * cfg.l0 as u64;
            let mut sites = Vec::new();
            for c in &cfg.centers {
                let lo: Vec<i64> = c.coords().iter().map(|x| x - ring as i64).collect();
                let hi: Vec<i64> = c.coords().iter().map(|x| x + ring as i64).collect();
                sites.extend(box_sites(&LatticePoint::new(&lo), &LatticePoint::new(&hi))?);
            }
            let window = DisorderConfig::sample(&sites, cfg.dist.clone(), seed)?;
            let keep = |y: &LatticePoint| inside.binary_search(y).is_ok();
            let mut best = f64::INFINITY;
            for i in 0..cfg.samples.max(1) {
                let c = window.resample_where(|y| !keep(y), i as u64 + 1).with_zero_exterior();
                best = best.min(ground_energy(&assemble(&mcube, &c, m)?)?);
            }
            Ok(best)
        })
        .collect::<Result<_>>()?;
    let hits = e0.iter().filter(|&&x| x <= threshold).count() as u64;
    let floor = -1e-10 * (2.0 * (mcube.n_particles() * mcube.dim()) as f64).max(1.0) * 2.0;
    Ok(IlsReport {
        l0: cfg.l0,
        theta: cfg.theta,
        threshold,
        estimate: stats::wilson(hits, cfg.trials as u64, stats::Z95),
        certified,
        min_e0: e0.iter().copied().fold(f64::INFINITY, f64::min),
        negative: e0.iter().filter(|&&x| x < floor).count(),
        e0,
    })
}
