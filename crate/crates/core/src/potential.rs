//! Staircase interaction `u(r)`, cumulative potential, certified tail bounds,
//! the compactly supported two-body interaction and the constant-field
//! (ξ) decomposition of the potential on a cube.
//!
//! `u(r) = r_k^{-A}` on `[r_k, r_{k+1})` with `r_k = floor(k^κ)`, and `u = 0`
//! below `r_1 = 1`. Plateau boundaries are integers, so every lookup is done
//! on exact integer (squared) distances.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::disorder::DisorderConfig;
use crate::error::{Error, Result};
use crate::geometry::{self, isqrt, ConfigPoint, LatticePoint, MultiCube};
use crate::num::Real;

/// Radii beyond this are computed on demand instead of tabulated.
const TABLE_RADIUS_MAX: u64 = 1 << 26;
const TABLE_LEN_MAX: usize = 1 << 16;
/// Largest plateau radius we agree to represent (exact in f64).
const RADIUS_LIMIT: u64 = 1 << 52;
const LOG_MARGIN: f64 = 1e-12;

#[derive(Debug)]
struct PlateauTable {
    /// `radii[k-1] = r_k`.
    radii: Vec<u64>,
    /// `values[k-1] = r_k^{-A}`.
    values: Vec<f64>,
    /// `ratio_sup[k-1] = max_{j >= k, j in table} r_{j+1}/r_j`.
    ratio_sup: Vec<f64>,
    tail: TailTable,
}

/// Exact lattice sums of `u` up to a work radius `W`, indexed so that the
/// sum over `{y : R <= |y| < W}` is a single lookup.
#[derive(Debug)]
struct TailTable {
    work_radius: u64,
    /// d = 1: `suffix[s]` = sum over `s <= |y| < W`.
    /// d >= 2: `suffix[D]` = sum over `D <= |y|^2 < W^2`.
    suffix: Vec<f64>,
}

/// The interaction law: exponent `κ > 1`, decay `A > d`, lattice dimension `d`.
#[derive(Clone, Debug)]
pub struct StaircaseParams {
    kappa: f64,
    decay: f64,
    dim: usize,
    /// `κ = p/q` when κ is (within rounding) a rational with small denominator.
    rational: Option<(u32, u32)>,
    table: Arc<PlateauTable>,
}

impl PartialEq for StaircaseParams {
    fn eq(&self, other: &Self) -> bool {
        self.kappa == other.kappa && self.decay == other.decay && self.dim == other.dim
    }
}

impl StaircaseParams {
    pub fn new(kappa: f64, decay: f64, dim: usize) -> Result<Self> {
        if !(kappa > 1.0 && kappa.is_finite()) {
            return Err(Error::InvalidParams(format!("kappa must exceed 1, got {kappa}")));
        }
        if !(1..=geometry::MAX_DIM).contains(&dim) {
            return Err(Error::InvalidParams(format!("dimension must be 1..=3, got {dim}")));
        }
        if !(decay > dim as f64 && decay.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "decay exponent A = {decay} must exceed d = {dim}"
            )));
        }
        let rational = detect_rational(kappa);
        let mut params = StaircaseParams {
            kappa,
            decay,
            dim,
            rational,
            table: Arc::new(PlateauTable {
                radii: Vec::new(),
                values: Vec::new(),
                ratio_sup: Vec::new(),
                tail: TailTable { work_radius: 0, suffix: Vec::new() },
            }),
        };

        let mut radii = Vec::new();
        let mut k = 1u64;
        loop {
            let r = params.floor_pow(k)?;
            if let Some(&prev) = radii.last() {
                if r <= prev {
                    return Err(Error::Range(format!(
                        "plateau radii not strictly increasing at k = {k}"
                    )));
                }
            }
            radii.push(r);
            if r > TABLE_RADIUS_MAX || radii.len() >= TABLE_LEN_MAX {
                break;
            }
            k += 1;
        }
        let values = radii.iter().map(|&r| (r as f64).powf(-decay)).collect();
        let mut ratio_sup = vec![0.0; radii.len()];
        let mut acc = params.analytic_ratio_bound(radii.len() as u64);
        for i in (0..radii.len()).rev() {
            if i + 1 < radii.len() {
                acc = acc.max(radii[i + 1] as f64 / radii[i] as f64);
            }
            ratio_sup[i] = acc;
        }
        params.table = Arc::new(PlateauTable {
            radii,
            values,
            ratio_sup,
            tail: TailTable { work_radius: 0, suffix: Vec::new() },
        });
        let tail = params.build_tail_table();
        Arc::get_mut(&mut params.table).expect("unique").tail = tail;
        Ok(params)
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `β_κ = κ/(κ-1)`.
    pub fn beta_kappa(&self) -> f64 {
        self.kappa / (self.kappa - 1.0)
    }

    /// `r_k = floor(k^κ)`, exact.
    pub fn plateau_radius(&self, k: usize) -> Result<u64> {
        if k == 0 {
            return Err(Error::Domain("plateau index starts at 1".into()));
        }
        match self.table.radii.get(k - 1) {
            Some(&r) => Ok(r),
            None => self.floor_pow(k as u64),
        }
    }

    /// `r_k^{-A}`.
    pub fn plateau_value(&self, k: usize) -> Result<f64> {
        match self.table.values.get(k.wrapping_sub(1)) {
            Some(&v) => Ok(v),
            None => Ok((self.plateau_radius(k)? as f64).powf(-self.decay)),
        }
    }

    /// Largest `k` with `r_k <= radius`; `None` when `radius < 1`.
    pub fn plateau_index(&self, radius: u64) -> Option<usize> {
        if radius == 0 {
            return None;
        }
        let radii = &self.table.radii;
        if radius < *radii.last().expect("nonempty table") {
            return Some(radii.partition_point(|&r| r <= radius));
        }
        // r_k <= R  <=>  k^κ < R + 1
        let mut k = ((radius as f64 + 1.0).powf(1.0 / self.kappa)).floor().max(1.0) as usize;
        while self.plateau_radius(k + 1).is_ok_and(|r| r <= radius) {
            k += 1;
        }
        while k > 1 && self.plateau_radius(k).is_ok_and(|r| r > radius) {
            k -= 1;
        }
        Some(k)
    }

    /// Plateau index for an exact squared distance.
    pub fn plateau_index_sq(&self, dist_sq: u64) -> Option<usize> {
        self.plateau_index(isqrt(dist_sq))
    }

    /// `u` at an exact squared distance.
    pub fn u_sq(&self, dist_sq: u64) -> f64 {
        match self.plateau_index_sq(dist_sq) {
            None => 0.0,
            Some(k) => self.plateau_value(k).unwrap_or(0.0),
        }
    }

    /// Certified upper bound on `Σ_{|y - x| >= R} u(|y - x|)` for any site `x`
    /// and amplitudes in `[0, 1]`.
    pub fn tail_bound(&self, radius: f64) -> f64 {
        let radius = radius.max(1.0);
        let tail = &self.table.tail;
        let w = tail.work_radius as f64;
        if radius < w {
            let idx = if self.dim == 1 {
                radius.ceil() as usize
            } else {
                (radius * radius).ceil() as usize
            };
            let exact = tail.suffix.get(idx).copied().unwrap_or(0.0);
            exact + self.envelope_tail(w)
        } else {
            self.envelope_tail(radius)
        }
    }

    /// Smallest integer radius `R` with `tail_bound(R) <= tol`.
    pub fn cutoff_for(&self, tol: f64) -> Result<u64> {
        if !(tol > 0.0) {
            return Err(Error::InvalidParams("tail tolerance must be positive".into()));
        }
        let mut hi = 1u64;
        while self.tail_bound(hi as f64) > tol {
            hi = hi.checked_mul(2).filter(|&h| h < RADIUS_LIMIT).ok_or_else(|| {
                Error::Range(format!("no cutoff radius reaches tail tolerance {tol:e}"))
            })?;
        }
        let mut lo = hi / 2;
        if lo == 0 {
            return Ok(hi);
        }
        while hi - lo > 1 {
            let mid = lo + (hi - lo) / 2;
            if self.tail_bound(mid as f64) <= tol {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Ok(hi)
    }

    // Envelope for |y| >= R:  u(r) <= C(R) r^{-A} with C(R) the sup of
    // (r_{k+1}/r_k)^A over plateaus meeting [R, ∞); |y|_2 >= |y|_∞ and the
    // sup-norm shell at radius s has (2s+1)^d - (2s-1)^d <= 2d 3^{d-1} s^{d-1}
    // sites (c_d = 2d 3^{d-1}). Summing s^{d-1-A} from s0 = floor(R/√d):
    // Σ_{s>=s0} s^{d-1-A} <= s0^{d-1-A} + s0^{d-A}/(A-d).
    fn envelope_tail(&self, radius: f64) -> f64 {
        let d = self.dim as f64;
        let a = self.decay;
        let s0 = (radius / d.sqrt()).floor().max(1.0);
        let c_d = 2.0 * d * 3f64.powi(self.dim as i32 - 1);
        let shells = s0.powf(d - 1.0 - a) + s0.powf(d - a) / (a - d);
        self.envelope_constant(radius) * c_d * shells
    }

    fn envelope_constant(&self, radius: f64) -> f64 {
        let k0 = self.plateau_index(radius.floor() as u64).unwrap_or(1);
        let sup = &self.table.ratio_sup;
        let ratio = match sup.get(k0 - 1) {
            Some(&r) => r,
            None => self.analytic_ratio_bound(k0 as u64),
        };
        ratio.powf(self.decay)
    }

    // r_{j+1}/r_j <= (j+1)^κ / (j^κ - 1), nonincreasing in j, for all j >= k.
    fn analytic_ratio_bound(&self, k: u64) -> f64 {
        let k = k.max(2) as f64;
        (k + 1.0).powf(self.kappa) / (k.powf(self.kappa) - 1.0)
    }

    fn build_tail_table(&self) -> TailTable {
        let work_radius: u64 = match self.dim {
            1 => 1 << 16,
            2 => 256,
            _ => 48,
        };
        if self.dim == 1 {
            let mut suffix = vec![0.0; work_radius as usize + 1];
            for s in (1..work_radius as usize).rev() {
                suffix[s] = suffix[s + 1] + 2.0 * self.u_sq((s * s) as u64);
            }
            suffix[0] = suffix[1];
            return TailTable { work_radius, suffix };
        }
        let w2 = (work_radius * work_radius) as usize;
        let mut bucket = vec![0.0; w2 + 1];
        let r = work_radius as i64;
        let mut cur = vec![-r; self.dim];
        loop {
            let dsq: u64 = cur.iter().map(|c| (c * c) as u64).sum();
            if (dsq as usize) < w2 {
                bucket[dsq as usize] += self.u_sq(dsq);
            }
            let mut axis = self.dim;
            let mut done = true;
            while axis > 0 {
                axis -= 1;
                if cur[axis] < r {
                    cur[axis] += 1;
                    done = false;
                    break;
                }
                cur[axis] = -r;
            }
            if done {
                break;
            }
        }
        for i in (0..w2).rev() {
            bucket[i] += bucket[i + 1];
        }
        TailTable { work_radius, suffix: bucket }
    }

    fn floor_pow(&self, k: u64) -> Result<u64> {
        let approx = (k as f64).powf(self.kappa);
        if !(approx < RADIUS_LIMIT as f64) {
            return Err(Error::Range(format!("r_{k} = floor({k}^{}) overflows", self.kappa)));
        }
        let mut c = approx.floor() as u64;
        if let Some((p, q)) = self.rational {
            if let Some(target) = (k as u128).checked_pow(p) {
                // exact: largest c with c^q <= k^p
                let le = |c: u64| (c as u128).checked_pow(q).is_some_and(|v| v <= target);
                while c > 0 && !le(c) {
                    c -= 1;
                }
                while le(c + 1) {
                    c += 1;
                }
                return Ok(c);
            }
        }
        // Log bracketing: want ln c <= κ ln k < ln(c+1). Inside the margin we
        // keep the floating point candidate.
        let lhs = self.kappa * (k as f64).ln();
        while c > 1 && lhs - (c as f64).ln() < -LOG_MARGIN {
            c -= 1;
        }
        while lhs - ((c + 1) as f64).ln() > LOG_MARGIN {
            c += 1;
        }
        Ok(c.max(1))
    }
}

fn detect_rational(x: f64) -> Option<(u32, u32)> {
    for q in 1u32..=64 {
        let p = (x * q as f64).round();
        if p <= 0.0 || p > 64.0 * 64.0 {
            continue;
        }
        if (x - p / q as f64).abs() <= 8.0 * f64::EPSILON * x {
            return Some((p as u32, q));
        }
    }
    None
}

/// `u(r)` for a real distance `r >= 0`.
pub fn u_value<T: Real>(r: T, params: &StaircaseParams) -> T {
    let r = r.as_f64();
    if !(r >= 1.0) {
        return T::zero();
    }
    match params.plateau_index(r.floor() as u64) {
        None => T::zero(),
        Some(k) => T::of(params.plateau_value(k).unwrap_or(0.0)),
    }
}

/// `V(x) = Σ_y u(|y - x|) ω_y` over the sites of the window.
pub fn cumulative_potential<T: Real>(
    x: &LatticePoint,
    config: &DisorderConfig,
    params: &StaircaseParams,
) -> T {
    let v: f64 = config
        .iter()
        .filter(|(_, w)| *w != 0.0)
        .map(|(y, w)| params.u_sq(x.dist_sq(y)) * w)
        .sum();
    T::of(v)
}

/// Cumulative potential at many sites. In d = 1 with an interval window the
/// sum runs plateau by plateau over prefix sums of the amplitudes.
pub fn potential_on_sites<T: Real>(
    sites: &[LatticePoint],
    config: &DisorderConfig,
    params: &StaircaseParams,
) -> Vec<T> {
    match (params.dim(), config.interval()) {
        (1, Some((lo, hi))) => {
            let prefix = config.prefix_sums();
            let count = |a: i64, b: i64| -> f64 {
                // amplitude sum over [a, b] ∩ [lo, hi]
                let a = a.max(lo);
                let b = b.min(hi);
                if a > b {
                    0.0
                } else {
                    prefix[(b - lo + 1) as usize] - prefix[(a - lo) as usize]
                }
            };
            sites
                .iter()
                .map(|x| {
                    let x = x.coords()[0];
                    let reach = (x - lo).max(hi - x).max(0) as u64;
                    let mut v = 0.0;
                    let mut k = 1;
                    loop {
                        let r = params.plateau_radius(k).expect("within range") as i64;
                        if r as u64 > reach {
                            break;
                        }
                        let r_next = params.plateau_radius(k + 1).expect("within range") as i64;
                        let s = count(x + r, x + r_next - 1) + count(x - r_next + 1, x - r);
                        v += params.plateau_value(k).expect("within range") * s;
                        k += 1;
                    }
                    T::of(v)
                })
                .collect()
        }
        _ => sites.iter().map(|x| cumulative_potential(x, config, params)).collect(),
    }
}

/// Compactly supported two-body interaction `U(x) = u0 · 1{|x_1 - x_2| <= r0}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionParams {
    pub r0: f64,
    pub u0: f64,
}

impl Default for InteractionParams {
    fn default() -> Self {
        Self { r0: 1.0, u0: 1.0 }
    }
}

impl InteractionParams {
    pub fn new(r0: f64, u0: f64) -> Result<Self> {
        if !(r0 >= 0.0) || !(u0 >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "interaction needs r0 >= 0 and u0 >= 0, got r0 = {r0}, u0 = {u0}"
            )));
        }
        Ok(Self { r0, u0 })
    }

    pub fn none() -> Self {
        Self { r0: 0.0, u0: 0.0 }
    }
}

pub fn interaction_energy<T: Real>(x: &ConfigPoint, iparams: &InteractionParams) -> T {
    match x.particles() {
        [a, b] if iparams.u0 > 0.0 && (a.dist_sq(b) as f64) <= iparams.r0 * iparams.r0 => {
            T::of(iparams.u0)
        }
        _ => T::zero(),
    }
}

/// Sites of the shells `n_range` around `set` whose field `u(|x - ·|)` is
/// exactly constant on `set`, with that constant plateau value.
pub fn constant_scatterers(
    set: &[LatticePoint],
    n_range: std::ops::RangeInclusive<usize>,
    params: &StaircaseParams,
) -> Result<Vec<(LatticePoint, f64)>> {
    let mut out = Vec::new();
    for n in n_range {
        for x in geometry::shell_sites(set, n, params)? {
            let far = set.iter().map(|y| x.dist_sq(y)).max().expect("nonempty");
            if params.plateau_index_sq(far) == Some(n) {
                out.push((x, params.plateau_value(n)?));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(out)
}

/// Result of splitting the cube potential into `residual + ξ`.
#[derive(Clone, Debug)]
pub struct XiDecomposition {
    /// Sum over constant-field scatterers of `ω_y · (their constant N-particle field)`.
    pub xi: f64,
    pub constant_sites: Vec<LatticePoint>,
    /// Potential from the remaining scatterers, aligned with `mcube.sites()`.
    pub residual: Vec<f64>,
}

/// Splits the N-particle potential `Σ_j V(x_j)` on `mcube` into a random
/// constant `ξ` from scatterers whose field is constant on every projection,
/// plus a residual from all other scatterers. `n_max`, when given, only
/// admits constant scatterers whose plateau index is at most `n_max`.
pub fn xi_decompose(
    mcube: &MultiCube,
    config: &DisorderConfig,
    params: &StaircaseParams,
    n_max: Option<usize>,
) -> XiDecomposition {
    let projections = mcube.projections();
    let proj_sites: Vec<Vec<LatticePoint>> = projections.iter().map(|c| c.sites()).collect();
    let mut per_site: Vec<Vec<f64>> = proj_sites.iter().map(|s| vec![0.0; s.len()]).collect();
    let mut xi = 0.0;
    let mut constant_sites = Vec::new();

    for (y, w) in config.iter() {
        let mut constant = 0.0;
        let mut is_constant = true;
        for cube in &projections {
            let near = params.plateau_index_sq(cube.min_dist_sq(y));
            let far = params.plateau_index_sq(cube.max_dist_sq(y));
            let admitted = match (n_max, near) {
                (Some(cap), Some(k)) => k <= cap,
                _ => true,
            };
            if near != far || !admitted {
                is_constant = false;
                break;
            }
            constant += near.map(|k| params.plateau_value(k).unwrap_or(0.0)).unwrap_or(0.0);
        }
        if is_constant {
            constant_sites.push(*y);
            xi += w * constant;
        } else if w != 0.0 {
            for (sites, acc) in proj_sites.iter().zip(per_site.iter_mut()) {
                for (x, a) in sites.iter().zip(acc.iter_mut()) {
                    *a += w * params.u_sq(x.dist_sq(y));
                }
            }
        }
    }

    let residual = mcube
        .sites()
        .iter()
        .map(|cp| {
            cp.particles()
                .iter()
                .zip(&projections)
                .zip(&per_site)
                .map(|((p, cube), acc)| acc[cube.index_of(p).expect("inside")])
                .sum()
        })
        .collect();
    XiDecomposition { xi, constant_sites, residual }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{AmplitudeDistribution, DisorderConfig};
    use crate::geometry::Cube;

    fn sp(kappa: f64, a: f64, d: usize) -> StaircaseParams {
        StaircaseParams::new(kappa, a, d).unwrap()
    }

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c)
    }

    #[test]
    fn plateau_radius_examples() {
        assert_eq!(sp(2.0, 3.0, 1).plateau_radius(3).unwrap(), 9);
        assert_eq!(sp(1.5, 3.0, 1).plateau_radius(3).unwrap(), 5);
        assert_eq!(sp(1.5, 3.0, 1).plateau_radius(2).unwrap(), 2);
        // perfect squares give exact integers for κ = 3/2
        assert_eq!(sp(1.5, 3.0, 1).plateau_radius(4).unwrap(), 8);
        assert_eq!(sp(1.5, 3.0, 1).plateau_radius(100).unwrap(), 1000);
    }

    #[test]
    fn rejects_bad_params() {
        assert!(StaircaseParams::new(1.0, 3.0, 1).is_err());
        assert!(StaircaseParams::new(2.0, 2.0, 2).is_err());
        assert!(StaircaseParams::new(2.0, 3.0, 4).is_err());
    }

    #[test]
    fn u_value_examples() {
        let s = sp(2.0, 3.0, 1);
        assert_eq!(u_value(2.0, &s), 1.0);
        assert_eq!(u_value(4.0, &s), 0.015625);
        assert_eq!(u_value(0.5, &s), 0.0);
        assert_eq!(u_value(3.999, &s), 1.0);
        assert_eq!(u_value(2.0f32, &s), 1.0f32);
    }

    #[test]
    fn plateau_index_beyond_table() {
        let s = sp(2.0, 3.0, 1);
        let k = 9000usize;
        let r = s.plateau_radius(k).unwrap();
        assert_eq!(r, 81_000_000);
        assert_eq!(s.plateau_index(r), Some(k));
        assert_eq!(s.plateau_index(r - 1), Some(k - 1));
    }

    #[test]
    fn cumulative_potential_examples() {
        let s = sp(2.0, 3.0, 1);
        let dist = AmplitudeDistribution::bernoulli(0.5).unwrap();
        let one = DisorderConfig::from_amplitudes(dist.clone(), 0, vec![(p(&[2]), 1.0)]).unwrap();
        assert_eq!(cumulative_potential::<f64>(&p(&[0]), &one, &s), 1.0);
        let empty = DisorderConfig::from_amplitudes(dist.clone(), 0, vec![]).unwrap();
        assert_eq!(cumulative_potential::<f64>(&p(&[0]), &empty, &s), 0.0);
        let two =
            DisorderConfig::from_amplitudes(dist, 0, vec![(p(&[2]), 1.0), (p(&[-4]), 1.0)]).unwrap();
        assert_eq!(cumulative_potential::<f64>(&p(&[0]), &two, &s), 1.015625);
    }

    #[test]
    fn fast_path_matches_direct_sum() {
        let s = sp(2.0, 3.0, 1);
        let dist = AmplitudeDistribution::uniform();
        let cfg = DisorderConfig::sample_box(&p(&[-300]), &p(&[300]), dist, 11).unwrap();
        let sites: Vec<_> = (-320..=320).step_by(7).map(|x| p(&[x])).collect();
        let fast = potential_on_sites::<f64>(&sites, &cfg, &s);
        for (x, v) in sites.iter().zip(fast) {
            let direct: f64 = cumulative_potential(x, &cfg, &s);
            assert!((v - direct).abs() <= 1e-12 * direct.abs().max(1.0), "{x:?}");
        }
    }

    #[test]
    fn tail_bound_above_enumeration_oracle() {
        let s = sp(2.0, 3.0, 1);
        // oracle: exact sum over 4 <= |y| < 1e5, a lower bound of the true tail
        let oracle: f64 = (4..100_000u64).map(|y| 2.0 * s.u_sq(y * y)).sum();
        assert!(s.tail_bound(4.0) >= oracle);
        assert!(s.tail_bound(1e6) < 1e-10);
    }

    #[test]
    fn tail_bound_two_dims_above_truncated_sum() {
        let s = sp(2.0, 3.0, 2);
        for r in [1.0, 3.5, 10.0, 40.0] {
            let cube = Cube::new(LatticePoint::origin(2), 600);
            let oracle: f64 = cube
                .sites()
                .iter()
                .map(|y| y.dist_sq(&LatticePoint::origin(2)))
                .filter(|&d| (d as f64) >= r * r)
                .map(|d| s.u_sq(d))
                .sum();
            assert!(s.tail_bound(r) >= oracle, "R = {r}");
        }
    }

    #[test]
    fn cutoff_meets_tolerance() {
        let s = sp(2.0, 3.0, 1);
        let r = s.cutoff_for(1e-8).unwrap();
        assert!(s.tail_bound(r as f64) <= 1e-8);
        assert!(s.tail_bound((r - 1) as f64) > 1e-8);
    }

    #[test]
    fn interaction_examples() {
        let i = InteractionParams::new(1.0, 1.0).unwrap();
        let a = p(&[3]);
        assert_eq!(interaction_energy::<f64>(&ConfigPoint::two(a, a), &i), 1.0);
        assert_eq!(interaction_energy::<f64>(&ConfigPoint::two(a, p(&[8])), &i), 0.0);
        let off = InteractionParams::new(10.0, 0.0).unwrap();
        assert_eq!(interaction_energy::<f64>(&ConfigPoint::two(a, a), &off), 0.0);
        assert!(InteractionParams::new(1.0, -1.0).is_err());
    }

    #[test]
    fn constant_scatterers_examples() {
        let s = sp(2.0, 3.0, 1);
        let single = constant_scatterers(&[p(&[0])], 1..=3, &s).unwrap();
        assert_eq!(single.len(), 2 * (16 - 1));
        for (x, v) in &single {
            assert_eq!(*v, u_value((x.dist_sq(&p(&[0])) as f64).sqrt(), &s));
        }
        let set: Vec<_> = (0..=3).map(|x| p(&[x])).collect();
        let got = constant_scatterers(&set, 1..=6, &s).unwrap();
        assert!(!got.iter().any(|(x, _)| *x == p(&[-15])));
        for (x, _) in &got {
            let vals: Vec<f64> = set.iter().map(|y| s.u_sq(x.dist_sq(y))).collect();
            assert!(vals.iter().all(|v| *v == vals[0]));
        }
    }

    #[test]
    fn xi_with_only_constant_scatterers() {
        let s = sp(2.0, 3.0, 1);
        let m = MultiCube::two(p(&[0]), p(&[1]), 1);
        // both projections lie in [-1, 2]; a scatterer at 20 sees them all in [16, 25)
        let dist = AmplitudeDistribution::bernoulli(0.5).unwrap();
        let cfg = DisorderConfig::from_amplitudes(dist.clone(), 0, vec![(p(&[20]), 1.0)]).unwrap();
        let xi = xi_decompose(&m, &cfg, &s, None);
        assert_eq!(xi.constant_sites, vec![p(&[20])]);
        assert_eq!(xi.xi, 2.0 * 16f64.powi(-3));
        assert!(xi.residual.iter().all(|r| *r == 0.0));
        let empty = DisorderConfig::from_amplitudes(dist, 0, vec![]).unwrap();
        let xi = xi_decompose(&m, &empty, &s, None);
        assert_eq!(xi.xi, 0.0);
        assert!(xi.residual.iter().all(|r| *r == 0.0));
    }
}
