//! Shell-weighted sums `S_{M,N} = Σ_{n=M}^{N} a_n Σ_{k<K_n} X_{n,k}` of IID
//! amplitudes: exact characteristic functions, decay fits, density
//! reconstruction and exact or sampled small-interval probabilities.
//!
//! For atomic laws `|φ_S(t)| = Π_n |φ_X(a_n t)|^{K_n}` exactly, so everything
//! is computed in log space. Infinite sums are cut at a shell `n_0` chosen so
//! that the discarded factors change `log|φ_S|` by at most [`TRUNCATION_TOL`],
//! using `|φ_X(s)|² ≥ 1 - σ²s²` for every law on `[0, 1]`.

use std::sync::{Arc, RwLock};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::disorder::{hash_words, to_unit, AmplitudeDistribution, ENUMERATION_BUDGET};
use crate::error::{Error, Result};
use crate::geometry::{self, LatticePoint};
use crate::potential::StaircaseParams;
use crate::stats::{self, LineFit, Proportion};

/// Certified bound on the discarded part of `log|φ_S|` for infinite sums.
pub const TRUNCATION_TOL: f64 = 1e-12;
const MAX_SHELLS: usize = 50_000_000;

#[derive(Clone, Debug)]
pub enum ShellSource {
    /// `a_n = n^{-A}`, `K_n = ceil(c n^{d-1})`.
    Abstract { c: f64, d: usize, decay: f64 },
    /// `a_n = r_n^{-A}`, `K_n = |shell_sites(S, n)|`.
    Lattice {
        params: StaircaseParams,
        /// Same law with exponent `2A`, for second-moment tails.
        squared: Box<StaircaseParams>,
        set: Vec<LatticePoint>,
    },
}

#[derive(Clone, Debug)]
pub struct ShellSum {
    m: usize,
    n: Option<usize>,
    source: Arc<ShellSource>,
    /// Lattice shell counts, `counts[k] = K_{k+1}`, shared between sub-ranges.
    counts: Arc<RwLock<Vec<u64>>>,
}

impl ShellSum {
    /// Abstract shells over `M..=N` (`N = None` is infinite).
    pub fn abstract_mode(c: f64, d: usize, decay: f64, m: usize, n: Option<usize>) -> Result<Self> {
        if !(c > 0.0) || d == 0 || !(decay > d as f64) {
            return Err(Error::InvalidParams(format!("abstract shells need c > 0 and A > d, got c = {c}, A = {decay}, d = {d}")));
        }
        Self::check_range(m, n)?;
        let source = ShellSource::Abstract { c, d, decay };
        Ok(Self { m, n, source: Arc::new(source), counts: Default::default() })
    }

    /// Lattice shells around `set`. Infinite ranges need a single-site set.
    pub fn lattice(params: &StaircaseParams, set: &[LatticePoint], m: usize, n: Option<usize>) -> Result<Self> {
        Self::check_range(m, n)?;
        if set.is_empty() {
            return Err(Error::Domain("lattice shells need a nonempty center set".into()));
        }
        if n.is_none() && set.len() > 1 {
            return Err(Error::Unsupported("infinite shell ranges around multi-site sets".into()));
        }
        let squared = StaircaseParams::new(params.kappa(), 2.0 * params.decay(), params.dim())?;
        let source = ShellSource::Lattice { params: params.clone(), squared: Box::new(squared), set: set.to_vec() };
        Ok(Self { m, n, source: Arc::new(source), counts: Default::default() })
    }

    fn check_range(m: usize, n: Option<usize>) -> Result<()> {
        if m == 0 || n.is_some_and(|n| n < m) {
            return Err(Error::InvalidParams(format!("bad shell range {m}..={n:?}")));
        }
        Ok(())
    }

    /// The same source over another shell range.
    pub fn with_range(&self, m: usize, n: Option<usize>) -> Result<Self> {
        Self::check_range(m, n)?;
        if n.is_none() {
            if let ShellSource::Lattice { set, .. } = &*self.source {
                if set.len() > 1 {
                    return Err(Error::Unsupported("infinite shell ranges around multi-site sets".into()));
                }
            }
        }
        Ok(Self { m, n, ..self.clone() })
    }

    pub fn first(&self) -> usize {
        self.m
    }

    pub fn last(&self) -> Option<usize> {
        self.n
    }

    pub fn source(&self) -> &ShellSource {
        &self.source
    }

    pub fn amplitude(&self, n: usize) -> f64 {
        match &*self.source {
            ShellSource::Abstract { decay, .. } => (n as f64).powf(-decay),
            ShellSource::Lattice { params, .. } => params.plateau_value(n).unwrap_or(0.0),
        }
    }

    /// `K_n`.
    pub fn count(&self, n: usize) -> Result<u64> {
        match &*self.source {
            ShellSource::Abstract { c, d, .. } => Ok((c * (n as f64).powi(*d as i32 - 1)).ceil() as u64),
            ShellSource::Lattice { .. } => {
                self.ensure_counts(n)?;
                Ok(self.counts.read().expect("count cache")[n - 1])
            }
        }
    }

    fn ensure_counts(&self, upto: usize) -> Result<()> {
        let ShellSource::Lattice { params, set, .. } = &*self.source else { return Ok(()) };
        let have = self.counts.read().expect("count cache").len();
        if have >= upto {
            return Ok(());
        }
        let fresh: Vec<u64> = (have + 1..=upto)
            .into_par_iter()
            .map(|n| {
                if set.len() == 1 {
                    geometry::point_shell_count(params.dim(), n, params)
                } else {
                    geometry::shell_sites(set, n, params).map(|s| s.len() as u64)
                }
            })
            .collect::<Result<_>>()?;
        let mut counts = self.counts.write().expect("count cache");
        if counts.len() == have {
            counts.extend(fresh);
        }
        Ok(())
    }

    /// `(a_n, K_n)` for `n` in `M..=hi`.
    fn terms(&self, hi: usize) -> Result<Vec<(f64, u64)>> {
        self.ensure_counts(hi)?;
        (self.m..=hi).map(|n| Ok((self.amplitude(n), self.count(n)?))).collect()
    }

    /// Upper bound on `Σ_{n > n0} K_n a_n^p` for `p ∈ {1, 2}` (infinite range).
    fn tail_power_sum(&self, n0: usize, p: u32) -> f64 {
        let n0 = n0.max(1);
        match &*self.source {
            ShellSource::Abstract { c, d, decay } => {
                // K_n <= c n^{d-1} + 1 and Σ_{n>n0} n^q <= n0^{q+1}/(-q-1) for q < -1
                let x = n0 as f64;
                let q1 = *d as f64 - 1.0 - p as f64 * decay;
                let q2 = -(p as f64) * decay;
                c * x.powf(q1 + 1.0) / (-q1 - 1.0) + x.powf(q2 + 1.0) / (-q2 - 1.0)
            }
            ShellSource::Lattice { params, squared, set } => {
                // a_n = max_s u(|y - s|) <= Σ_s u(|y - s|), and sites beyond shell n0
                // are at distance >= r_{n0+1} from every s
                let r = params.plateau_radius(n0 + 1).map_or(f64::INFINITY, |r| r as f64);
                let law = if p == 1 { params } else { squared.as_ref() };
                set.len() as f64 * law.tail_bound(r)
            }
        }
    }

    /// Last shell kept at frequency `t`, with the certified bound on what is dropped.
    pub fn truncation(&self, t: f64, variance: f64) -> Result<(usize, f64)> {
        if let Some(n) = self.n {
            return Ok((n, 0.0));
        }
        let s2 = variance * t * t;
        let bound = |n0: usize| {
            let x = s2 * self.amplitude(n0 + 1).powi(2);
            if x >= 0.5 {
                f64::INFINITY
            } else {
                0.5 * s2 * self.tail_power_sum(n0, 2) / (1.0 - x)
            }
        };
        let mut hi = self.m.max(2);
        while bound(hi) > TRUNCATION_TOL {
            hi *= 2;
            if hi > MAX_SHELLS {
                return Err(Error::Truncation { required_radius: hi as f64 });
            }
        }
        let mut lo = (hi / 2).max(self.m - 1);
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if bound(mid) <= TRUNCATION_TOL {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok((hi, bound(hi)))
    }

    /// Exact mean and variance (finite ranges).
    pub fn moments(&self, dist: &AmplitudeDistribution) -> Result<(f64, f64)> {
        let n = self.finite_end()?;
        let (mut m1, mut m2) = (0.0, 0.0);
        for (a, k) in self.terms(n)? {
            m1 += k as f64 * a;
            m2 += k as f64 * a * a;
        }
        Ok((dist.mean() * m1, dist.variance() * m2))
    }

    fn finite_end(&self) -> Result<usize> {
        self.n.ok_or_else(|| Error::Unsupported("operation needs a finite shell range".into()))
    }
}

/// `log|φ_X(s)|` for an atomic law, accurate for small `s`:
/// `1 - |φ|² = 4 Σ_{j<k} p_j p_k sin²(s (v_j - v_k)/2)`.
struct AtomPairs {
    pairs: Vec<(f64, f64)>,
    atoms: Vec<(f64, f64)>,
    mean: f64,
    variance: f64,
}

impl AtomPairs {
    fn new(dist: &AmplitudeDistribution) -> Result<Self> {
        let atoms: Vec<(f64, f64)> = dist
            .atoms()
            .ok_or_else(|| Error::Unsupported("exact characteristic function needs an atomic law".into()))?
            .into_iter()
            .filter(|a| a.1 > 0.0)
            .collect();
        let mut pairs = Vec::new();
        for j in 0..atoms.len() {
            for k in j + 1..atoms.len() {
                pairs.push((4.0 * atoms[j].1 * atoms[k].1, atoms[k].0 - atoms[j].0));
            }
        }
        Ok(Self { pairs, atoms, mean: dist.mean(), variance: dist.variance() })
    }

    fn log_abs(&self, s: f64) -> f64 {
        let x: f64 = self.pairs.iter().map(|(w, d)| w * (0.5 * s * d).sin().powi(2)).sum();
        if x >= 1.0 {
            f64::NEG_INFINITY
        } else {
            0.5 * (-x).ln_1p()
        }
    }

    /// `log φ_{X - EX}(s)` (principal branch).
    fn log_centered(&self, s: f64) -> Complex64 {
        let phi: Complex64 =
            self.atoms.iter().map(|(v, p)| Complex64::from_polar(*p, s * (v - self.mean))).sum();
        Complex64::new(self.log_abs(s), phi.arg())
    }
}

pub fn log_abs_charfn(ss: &ShellSum, dist: &AmplitudeDistribution, t: f64) -> Result<f64> {
    let atoms = AtomPairs::new(dist)?;
    log_abs_with(ss, &atoms, t)
}

fn log_abs_with(ss: &ShellSum, atoms: &AtomPairs, t: f64) -> Result<f64> {
    let t = t.abs();
    if t == 0.0 {
        return Ok(0.0);
    }
    let (hi, _) = ss.truncation(t, atoms.variance)?;
    if let ShellSource::Abstract { c, d, decay } = &*ss.source {
        // no count cache needed
        let mut acc = 0.0;
        for n in ss.m..=hi {
            let x = n as f64;
            let k = (c * x.powi(*d as i32 - 1)).ceil();
            acc += k * atoms.log_abs(x.powf(-decay) * t);
        }
        return Ok(acc);
    }
    let terms = ss.terms(hi)?;
    Ok(terms.iter().map(|(a, k)| *k as f64 * atoms.log_abs(a * t)).sum())
}

/// `log|φ_S|` on a grid, evaluated in parallel.
pub fn log_abs_charfn_grid(ss: &ShellSum, dist: &AmplitudeDistribution, ts: &[f64]) -> Result<Vec<f64>> {
    let atoms = AtomPairs::new(dist)?;
    if let Some(tmax) = ts.iter().copied().map(f64::abs).reduce(f64::max) {
        let (hi, _) = ss.truncation(tmax, atoms.variance)?;
        ss.ensure_counts(hi)?;
    }
    ts.par_iter().map(|&t| log_abs_with(ss, &atoms, t)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DecayFit {
    /// Least-squares slope of `log(-log|φ|)` against `log t`.
    pub slope: f64,
    pub intercept: f64,
    /// `(sqrt(t_i t_{i+1}), slope over [t_i, t_{i+1}])`.
    pub local_slopes: Vec<(f64, f64)>,
    /// Grid points dropped because `|φ|` was numerically 0 or 1.
    pub dropped: Vec<f64>,
    pub points: Vec<(f64, f64)>,
}

impl DecayFit {
    /// Least-squares slopes over sliding windows of `width` consecutive points.
    pub fn windowed_slopes(&self, width: usize) -> Vec<(f64, f64)> {
        if width < 2 || self.points.len() < width {
            return Vec::new();
        }
        self.points
            .windows(width)
            .filter_map(|w| {
                let (x, y): (Vec<f64>, Vec<f64>) = w.iter().map(|(t, v)| (t.ln(), v.ln())).unzip();
                let center = (x.iter().sum::<f64>() / x.len() as f64).exp();
                stats::least_squares(&x, &y).map(|f| (center, f.slope))
            })
            .collect()
    }
}

/// Fits `log(-log|φ|)` against `log t` from precomputed `-log|φ(t)|` values.
pub fn fit_decay(ts: &[f64], minus_log_phi: &[f64]) -> Result<DecayFit> {
    let mut points = Vec::new();
    let mut dropped = Vec::new();
    for (&t, &v) in ts.iter().zip(minus_log_phi) {
        if v.is_finite() && v > 0.0 && t > 0.0 {
            points.push((t, v));
        } else {
            dropped.push(t);
        }
    }
    let (x, y): (Vec<f64>, Vec<f64>) = points.iter().map(|(t, v)| (t.ln(), v.ln())).unzip();
    let LineFit { slope, intercept } = stats::least_squares(&x, &y)
        .ok_or_else(|| Error::Domain("decay fit needs two usable grid points".into()))?;
    let local_slopes = points
        .windows(2)
        .map(|w| ((w[0].0 * w[1].0).sqrt(), (w[1].1 / w[0].1).ln() / (w[1].0 / w[0].0).ln()))
        .collect();
    Ok(DecayFit { slope, intercept, local_slopes, dropped, points })
}

pub fn decay_exponent_fit(ss: &ShellSum, dist: &AmplitudeDistribution, ts: &[f64]) -> Result<DecayFit> {
    let vals = log_abs_charfn_grid(ss, dist, ts)?;
    let minus: Vec<f64> = vals.iter().map(|v| -v).collect();
    fit_decay(ts, &minus)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Density {
    /// Evaluation points, relative to the mean of `S`.
    pub v: Vec<f64>,
    pub rho: Vec<f64>,
    /// Quadrature step `π/W`, `W` the width of the support.
    pub step: f64,
    pub nodes: usize,
    pub support: (f64, f64),
    pub phi_at_tmax: f64,
    /// `(1/π)∫_{t_max}^{4 t_max} |φ|`, sampled; the dominant neglected part.
    pub truncation_estimate: f64,
    /// Bound on the centered log-characteristic-function truncation per node.
    pub shell_truncation: f64,
}

/// Density of `S - E[S]` by trapezoid quadrature of the inverse Fourier
/// integral on `[0, t_max]`. The step `π/W` keeps the periodic images of the
/// support disjoint, so the only error left is the cut at `t_max`.
pub fn density_reconstruct(
    ss: &ShellSum,
    dist: &AmplitudeDistribution,
    v_grid: &[f64],
    t_max: f64,
) -> Result<Density> {
    let atoms = AtomPairs::new(dist)?;
    let at_max = log_abs_with(ss, &atoms, t_max)?.exp();
    if !(at_max <= 1e-12) {
        return Err(Error::InsufficientDecay(at_max));
    }
    let (hi, _) = ss.truncation(4.0 * t_max, atoms.variance)?;
    let terms = ss.terms(hi)?;
    let mut total: f64 = terms.iter().map(|(a, k)| a * *k as f64).sum();
    if ss.n.is_none() {
        total += ss.tail_power_sum(hi, 1);
    }
    let lo_atom = atoms.atoms.iter().map(|a| a.0).fold(f64::INFINITY, f64::min);
    let hi_atom = atoms.atoms.iter().map(|a| a.0).fold(f64::NEG_INFINITY, f64::max);
    let support = ((lo_atom - atoms.mean) * total, (hi_atom - atoms.mean) * total);
    let width = (support.1 - support.0).max(f64::MIN_POSITIVE);
    let step = std::f64::consts::PI / width;
    let nodes = (t_max / step).ceil() as usize;

    let phi = |t: f64| -> Complex64 {
        let l: Complex64 = terms
            .iter()
            .take_while(|(a, _)| *a * t > 0.0)
            .map(|(a, k)| atoms.log_centered(a * t) * *k as f64)
            .sum();
        l.exp()
    };
    let samples: Vec<Complex64> = (0..=nodes).into_par_iter().map(|j| phi(j as f64 * step)).collect();
    let rho = v_grid
        .par_iter()
        .map(|&v| {
            let mut acc = 0.5;
            for (j, f) in samples.iter().enumerate().skip(1) {
                let w = if j == nodes { 0.5 } else { 1.0 };
                acc += w * (f * Complex64::from_polar(1.0, -(j as f64) * step * v)).re;
            }
            acc * step / std::f64::consts::PI
        })
        .collect();
    let beyond: f64 = (0..64)
        .into_par_iter()
        .map(|i| phi(t_max * (1.0 + 3.0 * (i as f64 + 0.5) / 64.0)).norm())
        .sum::<f64>()
        * 3.0
        * t_max
        / 64.0
        / std::f64::consts::PI;
    let shell_truncation = ss.truncation(4.0 * t_max, atoms.variance)?.1;
    Ok(Density {
        v: v_grid.to_vec(),
        rho,
        step,
        nodes,
        support,
        phi_at_tmax: at_max,
        truncation_estimate: beyond,
        shell_truncation,
    })
}

/// A finitely supported law: sorted distinct values with their weights.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteLaw {
    pub values: Vec<f64>,
    pub weights: Vec<f64>,
}

impl DiscreteLaw {
    fn from_pairs(mut pairs: Vec<(f64, f64)>) -> Self {
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut values: Vec<f64> = Vec::with_capacity(pairs.len());
        let mut weights: Vec<f64> = Vec::with_capacity(pairs.len());
        for (v, w) in pairs {
            if values.last() == Some(&v) {
                *weights.last_mut().expect("nonempty") += w;
            } else {
                values.push(v);
                weights.push(w);
            }
        }
        Self { values, weights }
    }

    /// `P(a <= S <= b)`.
    pub fn prob_between(&self, a: f64, b: f64) -> f64 {
        let i = self.values.partition_point(|&v| v < a);
        let j = self.values.partition_point(|&v| v <= b);
        self.weights[i..j.max(i)].iter().sum()
    }

    /// `sup_a P(S ∈ [a, a + ε])`.
    pub fn concentration(&self, eps: f64) -> f64 {
        let (mut best, mut acc, mut j) = (0.0f64, 0.0, 0);
        for i in 0..self.values.len() {
            while j < self.values.len() && self.values[j] <= self.values[i] + eps {
                acc += self.weights[j];
                j += 1;
            }
            best = best.max(acc);
            acc -= self.weights[i];
        }
        best
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Compositions of `k` into `q` nonnegative parts.
fn compositions(k: u64, q: usize, f: &mut impl FnMut(&[u64])) {
    fn go(rem: u64, slot: usize, cur: &mut Vec<u64>, f: &mut impl FnMut(&[u64])) {
        if slot + 1 == cur.len() {
            cur[slot] = rem;
            f(cur);
            return;
        }
        for c in 0..=rem {
            cur[slot] = c;
            go(rem - c, slot + 1, cur, f);
        }
    }
    let mut cur = vec![0; q];
    go(k, 0, &mut cur, f);
}

fn binomial_f64(n: u64, k: u64) -> f64 {
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Exact law of a finite shell sum. Within a shell only the atom counts
/// matter, so each shell contributes its multinomial composition law and the
/// shells are convolved; `budget` caps the product of per-shell outcome counts.
pub fn exact_distribution(ss: &ShellSum, dist: &AmplitudeDistribution, budget: u64) -> Result<DiscreteLaw> {
    let n = ss.finite_end()?;
    let atoms: Vec<(f64, f64)> = AtomPairs::new(dist)?.atoms;
    let q = atoms.len();
    let terms = ss.terms(n)?;
    let mut outcomes = 1f64;
    for (_, k) in &terms {
        outcomes *= binomial_f64(k + q as u64 - 1, q as u64 - 1);
    }
    if outcomes > budget as f64 {
        return Err(Error::EnumerationTooLarge { count: outcomes, budget });
    }
    let ln_fact: Vec<f64> = {
        let kmax = terms.iter().map(|t| t.1).max().unwrap_or(0) as usize;
        let mut v = vec![0.0; kmax + 1];
        for i in 1..=kmax {
            v[i] = v[i - 1] + (i as f64).ln();
        }
        v
    };
    let mut law = DiscreteLaw { values: vec![0.0], weights: vec![1.0] };
    for (a, k) in terms {
        let mut shell = Vec::new();
        compositions(k, q, &mut |c| {
            let mut lw = ln_fact[k as usize];
            let mut value = 0.0;
            for (cj, (v, p)) in c.iter().zip(&atoms) {
                lw += *cj as f64 * p.ln() - ln_fact[*cj as usize];
                value += *cj as f64 * v;
            }
            shell.push((a * value, lw.exp()));
        });
        let shell = DiscreteLaw::from_pairs(shell);
        let mut next = Vec::with_capacity(law.values.len() * shell.values.len());
        for (v, w) in law.values.iter().zip(&law.weights) {
            for (sv, sw) in shell.values.iter().zip(&shell.weights) {
                next.push((v + sv, w * sw));
            }
        }
        law = DiscreteLaw::from_pairs(next);
    }
    Ok(law)
}

/// One Monte Carlo draw of a finite shell sum.
pub fn sample_sum(ss: &ShellSum, dist: &AmplitudeDistribution, seed: u64, index: u64) -> Result<f64> {
    let n = ss.finite_end()?;
    let mut s = 0.0;
    for shell in ss.m..=n {
        let a = ss.amplitude(shell);
        let k = ss.count(shell)?;
        let mut inner = 0.0;
        for j in 0..k {
            inner += dist.quantile(to_unit(hash_words(seed, &[index, shell as u64, j])));
        }
        s += a * inner;
    }
    Ok(s)
}

fn sample_sums(ss: &ShellSum, dist: &AmplitudeDistribution, samples: u64, seed: u64) -> Result<Vec<f64>> {
    ss.ensure_counts(ss.finite_end()?)?;
    (0..samples).into_par_iter().map(|i| sample_sum(ss, dist, seed, i)).collect()
}

/// A probability that is either exact or a Monte Carlo estimate with a
/// 95% Wilson interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbEstimate {
    pub p: f64,
    pub lo: f64,
    pub hi: f64,
    pub exact: bool,
    pub samples: u64,
}

impl ProbEstimate {
    fn exact(p: f64) -> Self {
        Self { p, lo: p, hi: p, exact: true, samples: 0 }
    }

    fn sampled(est: Proportion) -> Self {
        Self { p: est.estimate, lo: est.lo, hi: est.hi, exact: false, samples: est.trials }
    }
}

/// Monte Carlo settings used when exact enumeration is over budget.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McOptions {
    pub samples: u64,
    pub seed: u64,
    pub budget: u64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self { samples: 100_000, seed: 0, budget: ENUMERATION_BUDGET }
    }
}

fn prob_of(
    ss: &ShellSum,
    dist: &AmplitudeDistribution,
    mc: &McOptions,
    event: impl Fn(f64) -> bool + Sync,
    exact: impl Fn(&DiscreteLaw) -> f64,
) -> Result<ProbEstimate> {
    match exact_distribution(ss, dist, mc.budget) {
        Ok(law) => Ok(ProbEstimate::exact(exact(&law))),
        Err(Error::EnumerationTooLarge { .. } | Error::Unsupported(_)) => {
            let sums = sample_sums(ss, dist, mc.samples, mc.seed)?;
            let hits = sums.iter().filter(|s| event(**s)).count() as u64;
            Ok(ProbEstimate::sampled(stats::wilson(hits, mc.samples, stats::Z95)))
        }
        Err(e) => Err(e),
    }
}

/// `P(S ∈ [a, a + ε])`.
pub fn small_interval_prob(
    ss: &ShellSum,
    dist: &AmplitudeDistribution,
    a: f64,
    eps: f64,
    mc: &McOptions,
) -> Result<ProbEstimate> {
    prob_of(ss, dist, mc, |s| a <= s && s <= a + eps, |law| law.prob_between(a, a + eps))
}

/// `P(S <= v_* + λ)` with `v_*` the smallest possible value of `S`.
pub fn edge_tail(ss: &ShellSum, dist: &AmplitudeDistribution, lambda: f64, mc: &McOptions) -> Result<ProbEstimate> {
    let n = ss.finite_end()?;
    if lambda < 0.0 {
        return Ok(ProbEstimate::exact(0.0));
    }
    let total: f64 = ss.terms(n)?.iter().map(|(a, k)| a * *k as f64).sum();
    let v_star = dist.min_value() * total;
    let cut = v_star + lambda;
    prob_of(ss, dist, mc, |s| s <= cut, |law| law.prob_between(f64::NEG_INFINITY, cut))
}

/// `|(1/n) Σ_i exp(i t S_i)|` over `samples` draws, for each `t`.
pub fn empirical_abs_charfn(
    ss: &ShellSum,
    dist: &AmplitudeDistribution,
    ts: &[f64],
    samples: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    let sums = sample_sums(ss, dist, samples, seed)?;
    Ok(ts
        .par_iter()
        .map(|&t| {
            let z: Complex64 = sums.iter().map(|s| Complex64::from_polar(1.0, t * s)).sum();
            z.norm() / samples as f64
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bern() -> AmplitudeDistribution {
        AmplitudeDistribution::bernoulli(0.5).unwrap()
    }

    #[test]
    fn single_shell_is_cosine() {
        let ss = ShellSum::abstract_mode(1.0, 1, 2.0, 1, Some(1)).unwrap();
        for t in [0.3, 1.0, 2.5, 7.0] {
            let got = log_abs_charfn(&ss, &bern(), t).unwrap();
            assert!((got - (t / 2.0).cos().abs().ln()).abs() < 1e-13, "{t}");
        }
        assert_eq!(log_abs_charfn(&ss, &bern(), 0.0).unwrap(), 0.0);
    }

    #[test]
    fn additivity_over_shells() {
        let p = StaircaseParams::new(2.0, 3.0, 1).unwrap();
        let o = [LatticePoint::new(&[0])];
        let all = ShellSum::lattice(&p, &o, 1, Some(10)).unwrap();
        let a = all.with_range(1, Some(5)).unwrap();
        let b = all.with_range(6, Some(10)).unwrap();
        for t in [0.5, 3.0, 40.0] {
            let whole = log_abs_charfn(&all, &bern(), t).unwrap();
            let parts = log_abs_charfn(&a, &bern(), t).unwrap() + log_abs_charfn(&b, &bern(), t).unwrap();
            assert!((whole - parts).abs() <= 1e-12 * whole.abs().max(1.0));
        }
    }

    #[test]
    fn uniform_is_unsupported() {
        let ss = ShellSum::abstract_mode(1.0, 1, 2.0, 1, Some(3)).unwrap();
        assert!(matches!(log_abs_charfn(&ss, &AmplitudeDistribution::uniform(), 1.0), Err(Error::Unsupported(_))));
    }

    #[test]
    fn infinite_sum_truncation_is_certified() {
        let ss = ShellSum::abstract_mode(1.0, 1, 3.0, 1, None).unwrap();
        let (hi, bound) = ss.truncation(100.0, 0.25).unwrap();
        assert!(bound <= TRUNCATION_TOL);
        // direct check: the dropped terms really are below the bound
        let atoms = AtomPairs::new(&bern()).unwrap();
        let dropped: f64 = (hi + 1..hi * 50).map(|n| -atoms.log_abs((n as f64).powi(-3) * 100.0)).sum();
        assert!(dropped <= bound);
    }

    #[test]
    fn synthetic_fit() {
        let ts = stats::log_grid(1.0, 1e4, 20);
        let vals: Vec<f64> = ts.iter().map(|t| t.sqrt()).collect();
        let fit = fit_decay(&ts, &vals).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-6);
        assert!(fit.local_slopes.iter().all(|(_, s)| (s - 0.5).abs() < 1e-6));
    }

    #[test]
    fn exact_law_examples() {
        let ss = ShellSum::abstract_mode(3.0, 1, 2.0, 1, Some(2)).unwrap();
        let law = exact_distribution(&ss, &bern(), 1 << 20).unwrap();
        assert!((law.total() - 1.0).abs() < 1e-12);
        // 3 sites at 1 and 3 at 1/4 → 16 distinct sums
        assert_eq!(law.values.len(), 16);
        let (m, v) = ss.moments(&bern()).unwrap();
        let mean: f64 = law.values.iter().zip(&law.weights).map(|(x, w)| x * w).sum();
        let var: f64 = law.values.iter().zip(&law.weights).map(|(x, w)| w * (x - mean).powi(2)).sum();
        assert!((mean - m).abs() < 1e-12 && (var - v).abs() < 1e-12);
        let mc = McOptions::default();
        assert!((small_interval_prob(&ss, &bern(), -1.0, 10.0, &mc).unwrap().p - 1.0).abs() < 1e-12);
        assert_eq!(small_interval_prob(&ss, &bern(), 0.1, 0.0, &mc).unwrap().p, 0.0);
        assert_eq!(edge_tail(&ss, &bern(), -0.1, &mc).unwrap().p, 0.0);
        assert!((edge_tail(&ss, &bern(), 10.0, &mc).unwrap().p - 1.0).abs() < 1e-12);
        assert!((law.concentration(0.0) - law.weights.iter().copied().fold(0.0, f64::max)).abs() < 1e-15);
    }

    #[test]
    fn sampling_agrees_with_exact() {
        let ss = ShellSum::abstract_mode(2.0, 1, 2.0, 1, Some(3)).unwrap();
        let exact = small_interval_prob(&ss, &bern(), 0.5, 0.6, &McOptions::default()).unwrap();
        let mc = McOptions { budget: 1, samples: 20_000, seed: 4 };
        let sampled = small_interval_prob(&ss, &bern(), 0.5, 0.6, &mc).unwrap();
        assert!(exact.exact && !sampled.exact);
        assert!(sampled.lo <= exact.p && exact.p <= sampled.hi, "{exact:?} {sampled:?}");
    }
}
