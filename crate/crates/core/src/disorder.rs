//! Site amplitudes: distributions, counter-based sampling, frozen-bath
//! resampling and exhaustive enumeration.
//!
//! The amplitude at `y` is `quantile(dist, h(seed, y, trial))`, where `h` is a
//! chain of splitmix64 finalizers over the seed, the coordinates and the trial
//! index (trial 0 is the original draw). No sequential stream is involved, so
//! any site can be recomputed in isolation and in any order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cube, LatticePoint};

/// Identifier of the site hash, recorded in run metadata.
pub const HASH_ID: &str = "splitmix64-chain/v1";

/// Default cap on the number of enumerated configurations.
pub const ENUMERATION_BUDGET: u64 = 1 << 22;

const PROB_TOL: f64 = 1e-12;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Hash of `(seed, words...)`.
pub fn hash_words(seed: u64, words: &[u64]) -> u64 {
    let mut h = splitmix64(seed);
    for &w in words {
        h = splitmix64(h ^ w);
    }
    h
}

/// Maps a hash to `[0, 1)` using its top 53 bits.
#[inline]
pub fn to_unit(h: u64) -> f64 {
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Uniform `[0, 1)` variate for a site and trial.
pub fn site_uniform(seed: u64, y: &LatticePoint, trial: u64) -> f64 {
    let c = y.coords();
    let mut words = [0u64; 5];
    words[0] = c.len() as u64;
    for (w, x) in words[1..].iter_mut().zip(c) {
        *w = *x as u64;
    }
    words[c.len() + 1] = trial;
    to_unit(hash_words(seed, &words[..c.len() + 2]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AmplitudeDistribution {
    /// Atoms `{0, 1}` with `P(1) = p`.
    Bernoulli { p: f64 },
    /// Uniform on `[0, 1]`.
    Uniform,
    /// `(value, probability)` pairs, sorted by value.
    FiniteAtoms { atoms: Vec<(f64, f64)> },
}

impl AmplitudeDistribution {
    pub fn bernoulli(p: f64) -> Result<Self> {
        let d = AmplitudeDistribution::Bernoulli { p };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform() -> Self {
        AmplitudeDistribution::Uniform
    }

    pub fn finite_atoms(mut atoms: Vec<(f64, f64)>) -> Result<Self> {
        atoms.sort_by(|a, b| a.0.total_cmp(&b.0));
        let d = AmplitudeDistribution::FiniteAtoms { atoms };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            AmplitudeDistribution::Bernoulli { p } => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::InvalidParams(format!("Bernoulli p = {p} outside [0, 1]")));
                }
            }
            AmplitudeDistribution::Uniform => {}
            AmplitudeDistribution::FiniteAtoms { atoms } => {
                if atoms.is_empty() {
                    return Err(Error::InvalidParams("no atoms".into()));
                }
                for &(v, q) in atoms {
                    if !(0.0..=1.0).contains(&v) || !(q >= 0.0) {
                        return Err(Error::InvalidParams(format!(
                            "atom ({v}, {q}) needs value in [0, 1] and probability >= 0"
                        )));
                    }
                }
                if atoms.windows(2).any(|w| w[1].0 < w[0].0) {
                    return Err(Error::InvalidParams("atoms must be sorted by value".into()));
                }
                let total: f64 = atoms.iter().map(|a| a.1).sum();
                if (total - 1.0).abs() > PROB_TOL {
                    return Err(Error::InvalidParams(format!("atom probabilities sum to {total}")));
                }
            }
        }
        Ok(())
    }

    /// At least two distinct values carry positive mass.
    pub fn is_nontrivial(&self) -> bool {
        match self {
            AmplitudeDistribution::Uniform => true,
            _ => {
                let atoms = self.atoms().expect("atomic");
                let mut support = atoms.iter().filter(|a| a.1 > 0.0).map(|a| a.0);
                let first = support.next();
                support.any(|v| Some(v) != first)
            }
        }
    }

    /// Atoms with positive or zero mass; `None` for the uniform law.
    pub fn atoms(&self) -> Option<Vec<(f64, f64)>> {
        match self {
            AmplitudeDistribution::Bernoulli { p } => Some(vec![(0.0, 1.0 - p), (1.0, *p)]),
            AmplitudeDistribution::Uniform => None,
            AmplitudeDistribution::FiniteAtoms { atoms } => Some(atoms.clone()),
        }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        match self {
            AmplitudeDistribution::Bernoulli { p } => {
                if u < *p {
                    1.0
                } else {
                    0.0
                }
            }
            AmplitudeDistribution::Uniform => u,
            AmplitudeDistribution::FiniteAtoms { atoms } => {
                let mut acc = 0.0;
                for &(v, q) in atoms {
                    acc += q;
                    if u < acc {
                        return v;
                    }
                }
                atoms.iter().rev().find(|a| a.1 > 0.0).map_or(atoms[atoms.len() - 1].0, |a| a.0)
            }
        }
    }

    /// Smallest value in the support.
    pub fn min_value(&self) -> f64 {
        match self.atoms() {
            None => 0.0,
            Some(a) => a.iter().filter(|a| a.1 > 0.0).map(|a| a.0).fold(f64::INFINITY, f64::min),
        }
    }

    /// Largest value in the support.
    pub fn max_value(&self) -> f64 {
        match self.atoms() {
            None => 1.0,
            Some(a) => a.iter().filter(|a| a.1 > 0.0).map(|a| a.0).fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn mean(&self) -> f64 {
        match self.atoms() {
            None => 0.5,
            Some(a) => a.iter().map(|(v, q)| v * q).sum(),
        }
    }

    pub fn variance(&self) -> f64 {
        match self.atoms() {
            None => 1.0 / 12.0,
            Some(a) => {
                let m = self.mean();
                a.iter().map(|(v, q)| q * (v - m) * (v - m)).sum()
            }
        }
    }
}

/// A finite window of amplitudes with its derivation record.
#[derive(Clone, Debug, PartialEq)]
pub struct DisorderConfig {
    dist: AmplitudeDistribution,
    seed: u64,
    /// Sorted, unique.
    sites: Vec<LatticePoint>,
    amplitudes: Vec<f64>,
    /// Trial index each site was derived with; `None` for explicit values.
    trials: Vec<Option<u64>>,
    /// `(region id, trial)` in application order.
    overrides: Vec<(u32, u64)>,
    /// Amplitudes outside the window are known to vanish.
    zero_exterior: bool,
    /// `Some((lo, hi))` when d = 1 and the window is the full interval.
    interval: Option<(i64, i64)>,
    prefix: Vec<f64>,
}

impl DisorderConfig {
    /// Samples every site of `window`.
    pub fn sample(window: &[LatticePoint], dist: AmplitudeDistribution, seed: u64) -> Result<Self> {
        dist.validate()?;
        let mut sites = window.to_vec();
        sites.sort();
        sites.dedup();
        let amplitudes = sites.iter().map(|y| dist.quantile(site_uniform(seed, y, 0))).collect();
        let trials = vec![Some(0); sites.len()];
        Ok(Self::build(dist, seed, sites, amplitudes, trials))
    }

    /// Samples the full box with opposite corners `lo` and `hi`.
    pub fn sample_box(
        lo: &LatticePoint,
        hi: &LatticePoint,
        dist: AmplitudeDistribution,
        seed: u64,
    ) -> Result<Self> {
        Self::sample(&box_sites(lo, hi)?, dist, seed)
    }

    /// Samples the cube of radius `radius` around `center`.
    pub fn sample_cube(cube: &Cube, dist: AmplitudeDistribution, seed: u64) -> Result<Self> {
        Self::sample(&cube.sites(), dist, seed)
    }

    /// A window with explicitly given amplitudes.
    pub fn from_amplitudes(
        dist: AmplitudeDistribution,
        seed: u64,
        mut values: Vec<(LatticePoint, f64)>,
    ) -> Result<Self> {
        values.sort_by(|a, b| a.0.cmp(&b.0));
        if values.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Domain("duplicate site in amplitude list".into()));
        }
        if let Some((y, w)) = values.iter().find(|(_, w)| !(0.0..=1.0).contains(w)) {
            return Err(Error::Domain(format!("amplitude {w} at {y} outside [0, 1]")));
        }
        let trials = vec![None; values.len()];
        let (sites, amplitudes) = values.into_iter().unzip();
        Ok(Self::build(dist, seed, sites, amplitudes, trials))
    }

    fn build(
        dist: AmplitudeDistribution,
        seed: u64,
        sites: Vec<LatticePoint>,
        amplitudes: Vec<f64>,
        trials: Vec<Option<u64>>,
    ) -> Self {
        let mut cfg = DisorderConfig {
            dist,
            seed,
            sites,
            amplitudes,
            trials,
            overrides: Vec::new(),
            zero_exterior: false,
            interval: None,
            prefix: Vec::new(),
        };
        cfg.refresh_index();
        cfg
    }

    fn refresh_index(&mut self) {
        self.interval = None;
        self.prefix.clear();
        if let (Some(first), Some(last)) = (self.sites.first(), self.sites.last()) {
            if first.dim() == 1 {
                let (lo, hi) = (first.coords()[0], last.coords()[0]);
                if (hi - lo + 1) as usize == self.sites.len() {
                    self.interval = Some((lo, hi));
                    self.prefix.reserve(self.sites.len() + 1);
                    let mut acc = 0.0;
                    self.prefix.push(0.0);
                    for w in &self.amplitudes {
                        acc += w;
                        self.prefix.push(acc);
                    }
                }
            }
        }
    }

    pub fn distribution(&self) -> &AmplitudeDistribution {
        &self.dist
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn sites(&self) -> &[LatticePoint] {
        &self.sites
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn overrides(&self) -> &[(u32, u64)] {
        &self.overrides
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LatticePoint, f64)> + '_ {
        self.sites.iter().zip(self.amplitudes.iter().copied())
    }

    pub fn get(&self, y: &LatticePoint) -> Option<f64> {
        self.sites.binary_search(y).ok().map(|i| self.amplitudes[i])
    }

    /// Trial index the amplitude at `y` was derived with.
    pub fn trial_of(&self, y: &LatticePoint) -> Option<u64> {
        self.sites.binary_search(y).ok().and_then(|i| self.trials[i])
    }

    pub(crate) fn interval(&self) -> Option<(i64, i64)> {
        self.interval
    }

    pub(crate) fn prefix_sums(&self) -> &[f64] {
        &self.prefix
    }

    /// Whether amplitudes outside the window are declared to be zero.
    pub fn has_zero_exterior(&self) -> bool {
        self.zero_exterior
    }

    /// Declares that every site outside the window carries amplitude 0.
    pub fn with_zero_exterior(mut self) -> Self {
        self.zero_exterior = true;
        self
    }

    /// Sets amplitudes to zero at window sites failing `keep`.
    pub fn zeroed_outside(&self, keep: impl Fn(&LatticePoint) -> bool) -> Self {
        let mut out = self.clone();
        for (i, y) in out.sites.iter().enumerate() {
            if !keep(y) {
                out.amplitudes[i] = 0.0;
                out.trials[i] = None;
            }
        }
        out.refresh_index();
        out
    }

    /// Restricts the window to sites satisfying `keep`.
    pub fn restricted(&self, keep: impl Fn(&LatticePoint) -> bool) -> Self {
        let mut out = self.clone();
        let idx: Vec<usize> = (0..self.sites.len()).filter(|&i| keep(&self.sites[i])).collect();
        out.sites = idx.iter().map(|&i| self.sites[i]).collect();
        out.amplitudes = idx.iter().map(|&i| self.amplitudes[i]).collect();
        out.trials = idx.iter().map(|&i| self.trials[i]).collect();
        out.refresh_index();
        out
    }

    /// Overwrites the amplitude at window site `y`.
    pub fn with_value(&self, y: &LatticePoint, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::Domain(format!("amplitude {w} outside [0, 1]")));
        }
        let i = self
            .sites
            .binary_search(y)
            .map_err(|_| Error::Domain(format!("{y} is not in the window")))?;
        let mut out = self.clone();
        out.amplitudes[i] = w;
        out.trials[i] = None;
        out.refresh_index();
        Ok(out)
    }

    /// Redraws the sites of `region` with trial index `trial`, keeping every
    /// other amplitude bit-exactly (frozen bath). Trial 0 reproduces the
    /// original draw.
    pub fn resample_region(&self, region: &[LatticePoint], trial: u64) -> Result<Self> {
        let mut idx = Vec::with_capacity(region.len());
        for y in region {
            match self.sites.binary_search(y) {
                Ok(i) => idx.push(i),
                Err(_) => return Err(Error::Domain(format!("region site {y} is not in the window"))),
            }
        }
        Ok(self.resample_indices(idx, trial))
    }

    /// Like [`resample_region`](Self::resample_region) with the region given
    /// as a predicate on window sites.
    pub fn resample_where(&self, in_region: impl Fn(&LatticePoint) -> bool, trial: u64) -> Self {
        let idx = (0..self.sites.len()).filter(|&i| in_region(&self.sites[i])).collect();
        self.resample_indices(idx, trial)
    }

    fn resample_indices(&self, idx: Vec<usize>, trial: u64) -> Self {
        let mut out = self.clone();
        for i in idx {
            out.amplitudes[i] = self.dist.quantile(site_uniform(self.seed, &self.sites[i], trial));
            out.trials[i] = Some(trial);
        }
        out.overrides.push((self.overrides.len() as u32, trial));
        out.refresh_index();
        out
    }
}

/// All sites of the box with opposite corners `lo`, `hi` in lexicographic order.
pub fn box_sites(lo: &LatticePoint, hi: &LatticePoint) -> Result<Vec<LatticePoint>> {
    if lo.dim() != hi.dim() {
        return Err(Error::Domain("box corners differ in dimension".into()));
    }
    let d = lo.dim();
    let (a, b) = (lo.coords(), hi.coords());
    if a.iter().zip(b).any(|(x, y)| x > y) {
        return Ok(Vec::new());
    }
    let mut out = Vec::new();
    let mut cur = a.to_vec();
    loop {
        out.push(LatticePoint::new(&cur));
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            if cur[axis] < b[axis] {
                cur[axis] += 1;
                break;
            }
            cur[axis] = a[axis];
        }
    }
}

/// Every assignment of atoms to the sites of a region, with its product weight.
#[derive(Clone, Debug)]
pub struct ConfigEnumeration {
    atoms: Vec<(f64, f64)>,
    n_sites: usize,
    digits: Vec<usize>,
    done: bool,
}

impl ConfigEnumeration {
    pub fn count(&self) -> u64 {
        (self.atoms.len() as u64).pow(self.n_sites as u32)
    }
}

impl Iterator for ConfigEnumeration {
    /// Amplitudes aligned with the region order, and the probability weight.
    type Item = (Vec<f64>, f64);

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let values = self.digits.iter().map(|&j| self.atoms[j].0).collect();
        let weight = self.digits.iter().map(|&j| self.atoms[j].1).product();
        let mut i = self.n_sites;
        self.done = true;
        while i > 0 {
            i -= 1;
            if self.digits[i] + 1 < self.atoms.len() {
                self.digits[i] += 1;
                self.done = false;
                break;
            }
            self.digits[i] = 0;
        }
        Some((values, weight))
    }
}

/// Enumerates all atom assignments on `region` (in the given order).
pub fn enumerate_configs(
    region: &[LatticePoint],
    dist: &AmplitudeDistribution,
) -> Result<ConfigEnumeration> {
    enumerate_configs_with_budget(region.len(), dist, ENUMERATION_BUDGET)
}

pub fn enumerate_configs_with_budget(
    n_sites: usize,
    dist: &AmplitudeDistribution,
    budget: u64,
) -> Result<ConfigEnumeration> {
    let atoms = dist
        .atoms()
        .ok_or_else(|| Error::Unsupported("enumeration needs an atomic distribution".into()))?;
    let count = (atoms.len() as f64).powi(n_sites as i32);
    if count > budget as f64 {
        return Err(Error::EnumerationTooLarge { count, budget });
    }
    Ok(ConfigEnumeration { atoms, n_sites, digits: vec![0; n_sites], done: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: i64) -> Vec<LatticePoint> {
        (0..n).map(|x| LatticePoint::new(&[x])).collect()
    }

    #[test]
    fn sampling_is_deterministic() {
        let d = AmplitudeDistribution::bernoulli(0.5).unwrap();
        let a = DisorderConfig::sample(&line(100), d.clone(), 9).unwrap();
        let b = DisorderConfig::sample(&line(100), d.clone(), 9).unwrap();
        assert_eq!(a, b);
        let c = DisorderConfig::sample(&line(100), d, 10).unwrap();
        assert_ne!(a.amplitudes(), c.amplitudes());
    }

    #[test]
    fn degenerate_bernoulli() {
        let d = AmplitudeDistribution::bernoulli(1.0).unwrap();
        let a = DisorderConfig::sample(&line(50), d.clone(), 1).unwrap();
        assert!(a.amplitudes().iter().all(|&w| w == 1.0));
        assert!(!d.is_nontrivial());
    }

    #[test]
    fn bernoulli_mean() {
        let d = AmplitudeDistribution::bernoulli(0.5).unwrap();
        let a = DisorderConfig::sample(&line(100_000), d, 3).unwrap();
        let mean = a.amplitudes().iter().sum::<f64>() / a.len() as f64;
        // 4.4 standard deviations of the binomial mean
        assert!((mean - 0.5).abs() < 0.007, "{mean}");
    }

    #[test]
    fn atom_validation() {
        assert!(AmplitudeDistribution::finite_atoms(vec![(0.0, 0.5), (1.0, 0.4)]).is_err());
        assert!(AmplitudeDistribution::finite_atoms(vec![(0.0, 0.5), (1.5, 0.5)]).is_err());
        let d = AmplitudeDistribution::finite_atoms(vec![(1.0, 0.25), (0.0, 0.25), (0.5, 0.5)]).unwrap();
        assert_eq!(d.quantile(0.1), 0.0);
        assert_eq!(d.quantile(0.3), 0.5);
        assert_eq!(d.quantile(0.9), 1.0);
        assert!((d.variance() - 0.125).abs() < 1e-15);
    }

    #[test]
    fn resample_trial_zero_is_identity() {
        let d = AmplitudeDistribution::uniform();
        let a = DisorderConfig::sample(&line(40), d, 5).unwrap();
        let b = a.resample_region(&line(10), 0).unwrap();
        assert_eq!(a.amplitudes(), b.amplitudes());
    }

    #[test]
    fn resample_freezes_complement() {
        let d = AmplitudeDistribution::uniform();
        let a = DisorderConfig::sample(&line(40), d, 5).unwrap();
        let region = line(10);
        for t in 1..=100 {
            let b = a.resample_region(&region, t).unwrap();
            assert_eq!(&a.amplitudes()[10..], &b.amplitudes()[10..]);
            assert_ne!(&a.amplitudes()[..10], &b.amplitudes()[..10]);
        }
        assert!(a.resample_region(&[LatticePoint::new(&[99])], 1).is_err());
    }

    #[test]
    fn enumeration_examples() {
        let d = AmplitudeDistribution::bernoulli(0.3).unwrap();
        let e: Vec<_> = enumerate_configs(&line(3), &d).unwrap().collect();
        assert_eq!(e.len(), 8);
        assert!((e.iter().map(|x| x.1).sum::<f64>() - 1.0).abs() < 1e-12);
        let three = AmplitudeDistribution::finite_atoms(vec![(0.0, 0.2), (0.5, 0.3), (1.0, 0.5)]).unwrap();
        assert_eq!(enumerate_configs(&line(1), &three).unwrap().count(), 3);
        let empty: Vec<_> = enumerate_configs(&[], &d).unwrap().collect();
        assert_eq!(empty, vec![(vec![], 1.0)]);
        assert!(matches!(
            enumerate_configs(&line(23), &d),
            Err(Error::EnumerationTooLarge { .. })
        ));
    }

    #[test]
    fn interval_detection() {
        let d = AmplitudeDistribution::uniform();
        let a = DisorderConfig::sample(&line(10), d.clone(), 1).unwrap();
        assert_eq!(a.interval(), Some((0, 9)));
        let gap = [LatticePoint::new(&[0]), LatticePoint::new(&[2])];
        assert_eq!(DisorderConfig::sample(&gap, d, 1).unwrap().interval(), None);
    }
}
