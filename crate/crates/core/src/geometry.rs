//! Lattice points, sup-norm cubes and 1-/2-particle configuration cubes.
//!
//! Cube membership and the non-interactive test use the sup-norm; distances
//! fed into the interaction use the Euclidean norm, always handled as exact
//! integer squared distances.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::potential::StaircaseParams;

pub const MAX_DIM: usize = 3;

/// A point of `Z^d`, `1 <= d <= 3`. Unused trailing coordinates are zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LatticePoint {
    dim: u8,
    coords: [i64; MAX_DIM],
}

impl LatticePoint {
    pub fn new(coords: &[i64]) -> Self {
        assert!(
            (1..=MAX_DIM).contains(&coords.len()),
            "lattice dimension must be 1..={MAX_DIM}"
        );
        let mut c = [0; MAX_DIM];
        c[..coords.len()].copy_from_slice(coords);
        Self { dim: coords.len() as u8, coords: c }
    }

    pub fn origin(dim: usize) -> Self {
        Self::new(&vec![0; dim])
    }

    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords[..self.dim as usize]
    }

    pub fn shifted(&self, axis: usize, by: i64) -> Self {
        let mut p = *self;
        p.coords[axis] += by;
        p
    }

    pub fn translated(&self, by: &LatticePoint) -> Self {
        debug_assert_eq!(self.dim, by.dim);
        let mut p = *self;
        for i in 0..self.dim() {
            p.coords[i] += by.coords[i];
        }
        p
    }

    pub fn sup_dist(&self, other: &LatticePoint) -> u64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| a.abs_diff(*b))
            .max()
            .unwrap_or(0)
    }

    /// Exact squared Euclidean distance.
    pub fn dist_sq(&self, other: &LatticePoint) -> u64 {
        self.coords()
            .iter()
            .zip(other.coords())
            .map(|(a, b)| {
                let d = a.abs_diff(*b);
                d * d
            })
            .sum()
    }
}

impl fmt::Debug for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.coords())
    }
}

impl fmt::Display for LatticePoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.coords().iter().map(|c| c.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// A point of the N-particle configuration space `(Z^d)^N`, `N ∈ {1, 2}`.
///
/// The derived ordering is lexicographic over the concatenated coordinates.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ConfigPoint {
    n: u8,
    parts: [LatticePoint; 2],
}

impl ConfigPoint {
    pub fn one(x: LatticePoint) -> Self {
        Self { n: 1, parts: [x, LatticePoint::origin(x.dim())] }
    }

    pub fn two(x1: LatticePoint, x2: LatticePoint) -> Self {
        assert_eq!(x1.dim(), x2.dim());
        Self { n: 2, parts: [x1, x2] }
    }

    /// From one or two particle positions.
    ///
    /// # Panics
    /// If `xs` does not hold one or two points.
    pub fn from_centers(xs: &[LatticePoint]) -> Self {
        match xs {
            [x] => Self::one(*x),
            [x1, x2] => Self::two(*x1, *x2),
            _ => panic!("a configuration point has 1 or 2 particles, got {}", xs.len()),
        }
    }

    pub fn particles(&self) -> &[LatticePoint] {
        &self.parts[..self.n as usize]
    }

    pub fn n_particles(&self) -> usize {
        self.n as usize
    }
}

impl fmt::Debug for ConfigPoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.particles()).finish()
    }
}

/// Sup-norm ball `{x : |x - center|_∞ <= radius}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Cube {
    pub center: LatticePoint,
    pub radius: u32,
}

impl Cube {
    pub fn new(center: LatticePoint, radius: u32) -> Self {
        Self { center, radius }
    }

    pub fn dim(&self) -> usize {
        self.center.dim()
    }

    pub fn side(&self) -> usize {
        2 * self.radius as usize + 1
    }

    pub fn len(&self) -> usize {
        self.side().pow(self.dim() as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &LatticePoint) -> bool {
        self.center.sup_dist(x) <= self.radius as u64
    }

    /// Sites in lexicographic order, first coordinate most significant.
    pub fn sites(&self) -> Vec<LatticePoint> {
        let d = self.dim();
        let side = self.side();
        let r = self.radius as i64;
        let mut out = Vec::with_capacity(self.len());
        for idx in 0..self.len() {
            let mut rem = idx;
            let mut c = [0i64; MAX_DIM];
            for axis in (0..d).rev() {
                c[axis] = self.center.coords[axis] - r + (rem % side) as i64;
                rem /= side;
            }
            out.push(LatticePoint::new(&c[..d]));
        }
        out
    }

    /// Position of `x` in [`Cube::sites`], if inside.
    pub fn index_of(&self, x: &LatticePoint) -> Option<usize> {
        if !self.contains(x) {
            return None;
        }
        let side = self.side();
        let r = self.radius as i64;
        let mut idx = 0usize;
        for axis in 0..self.dim() {
            idx = idx * side + (x.coords[axis] - self.center.coords[axis] + r) as usize;
        }
        Some(idx)
    }

    /// Sites of the cube having a nearest neighbour outside it.
    pub fn inner_boundary(&self) -> Result<Vec<LatticePoint>> {
        if self.radius == 0 {
            return Err(Error::EmptyBoundary);
        }
        let r = self.radius as u64;
        Ok(self.sites().into_iter().filter(|x| x.sup_dist(&self.center) == r).collect())
    }

    /// The cube of radius `floor(L/3)` with the same center.
    pub fn core(&self) -> Result<Cube> {
        if self.radius < 3 {
            return Err(Error::DegenerateCore(self.radius));
        }
        Ok(Cube::new(self.center, self.radius / 3))
    }

    /// Smallest squared Euclidean distance from `y` to a site of the cube.
    pub fn min_dist_sq(&self, y: &LatticePoint) -> u64 {
        let r = self.radius as i64;
        (0..self.dim())
            .map(|i| {
                let off = (y.coords[i] - self.center.coords[i]).abs();
                let d = (off - r).max(0) as u64;
                d * d
            })
            .sum()
    }

    /// Largest squared Euclidean distance from `y` to a site of the cube.
    pub fn max_dist_sq(&self, y: &LatticePoint) -> u64 {
        let r = self.radius as i64;
        (0..self.dim())
            .map(|i| {
                let off = (y.coords[i] - self.center.coords[i]).abs();
                let d = (off + r) as u64;
                d * d
            })
            .sum()
    }

    /// Squared Euclidean distance between the closest sites of two cubes.
    pub fn gap_sq(&self, other: &Cube) -> u64 {
        let r = self.radius as i64 + other.radius as i64;
        (0..self.dim())
            .map(|i| {
                let off = (self.center.coords[i] - other.center.coords[i]).abs();
                let d = (off - r).max(0) as u64;
                d * d
            })
            .sum()
    }
}

/// An N-particle cube `B_L(u_1) × ... × B_L(u_N)`, `N ∈ {1, 2}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MultiCube {
    centers: [LatticePoint; 2],
    n: u8,
    pub radius: u32,
}

impl MultiCube {
    pub fn one(center: LatticePoint, radius: u32) -> Self {
        Self { centers: [center, LatticePoint::origin(center.dim())], n: 1, radius }
    }

    pub fn two(u1: LatticePoint, u2: LatticePoint, radius: u32) -> Self {
        assert_eq!(u1.dim(), u2.dim());
        Self { centers: [u1, u2], n: 2, radius }
    }

    pub fn from_centers(centers: &[LatticePoint], radius: u32) -> Result<Self> {
        match centers {
            [u] => Ok(Self::one(*u, radius)),
            [u1, u2] if u1.dim() == u2.dim() => Ok(Self::two(*u1, *u2, radius)),
            _ => Err(Error::InvalidParams(format!(
                "a multi-cube needs 1 or 2 centers of equal dimension, got {}",
                centers.len()
            ))),
        }
    }

    pub fn centers(&self) -> &[LatticePoint] {
        &self.centers[..self.n as usize]
    }

    pub fn n_particles(&self) -> usize {
        self.n as usize
    }

    pub fn dim(&self) -> usize {
        self.centers[0].dim()
    }

    pub fn projections(&self) -> Vec<Cube> {
        self.centers().iter().map(|c| Cube::new(*c, self.radius)).collect()
    }

    pub fn len(&self) -> usize {
        Cube::new(self.centers[0], self.radius).len().pow(self.n as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, x: &ConfigPoint) -> bool {
        x.n_particles() == self.n_particles()
            && x.particles()
                .iter()
                .zip(self.centers())
                .all(|(p, c)| p.sup_dist(c) <= self.radius as u64)
    }

    /// Configuration points in lexicographic order.
    pub fn sites(&self) -> Vec<ConfigPoint> {
        let proj = self.projections();
        match self.n {
            1 => proj[0].sites().into_iter().map(ConfigPoint::one).collect(),
            _ => {
                let a = proj[0].sites();
                let b = proj[1].sites();
                let mut out = Vec::with_capacity(a.len() * b.len());
                for x1 in &a {
                    for x2 in &b {
                        out.push(ConfigPoint::two(*x1, *x2));
                    }
                }
                out
            }
        }
    }

    pub fn index_of(&self, x: &ConfigPoint) -> Option<usize> {
        if x.n_particles() != self.n_particles() {
            return None;
        }
        let proj = self.projections();
        let one = proj[0].len();
        let mut idx = 0;
        for (p, cube) in x.particles().iter().zip(&proj) {
            idx = idx * one + cube.index_of(p)?;
        }
        Some(idx)
    }

    /// Configuration points with a nearest neighbour outside the cube, i.e.
    /// with at least one particle on its 1-particle inner boundary.
    pub fn inner_boundary(&self) -> Result<Vec<ConfigPoint>> {
        if self.radius == 0 {
            return Err(Error::EmptyBoundary);
        }
        let r = self.radius as u64;
        Ok(self
            .sites()
            .into_iter()
            .filter(|x| x.particles().iter().zip(self.centers()).any(|(p, c)| p.sup_dist(c) == r))
            .collect())
    }

    /// The product of the 1-particle cores, radius `floor(L/3)`.
    pub fn core(&self) -> Result<MultiCube> {
        if self.radius < 3 {
            return Err(Error::DegenerateCore(self.radius));
        }
        Ok(MultiCube { radius: self.radius / 3, ..*self })
    }

    /// Non-interactive: two particles with `|u_1 - u_2|_∞ > 4L`.
    pub fn is_non_interactive(&self) -> bool {
        self.n == 2 && self.centers[0].sup_dist(&self.centers[1]) > 4 * self.radius as u64
    }

    /// Union of the 1-particle projection cubes, sorted and deduplicated.
    pub fn projection_sites(&self) -> Vec<LatticePoint> {
        let mut all: Vec<LatticePoint> =
            self.projections().iter().flat_map(|c| c.sites()).collect();
        all.sort();
        all.dedup();
        all
    }

    /// Sup-norm distance between centers in configuration space.
    pub fn center_dist(&self, other: &MultiCube) -> u64 {
        self.centers()
            .iter()
            .zip(other.centers())
            .map(|(a, b)| a.sup_dist(b))
            .max()
            .unwrap_or(0)
    }

    /// The same centers with a different radius.
    pub fn with_radius(&self, radius: u32) -> MultiCube {
        MultiCube { radius, ..*self }
    }
}

/// Squared Euclidean distance from `x` to the nearest point of `set`.
pub fn dist_sq_to_set(x: &LatticePoint, set: &[LatticePoint]) -> u64 {
    set.iter().map(|s| x.dist_sq(s)).min().unwrap_or(u64::MAX)
}

/// `{x : dist(x, S) ∈ [r_n, r_{n+1})}` with Euclidean distance to the set.
pub fn shell_sites(set: &[LatticePoint], n: usize, params: &StaircaseParams) -> Result<Vec<LatticePoint>> {
    if set.is_empty() {
        return Err(Error::Domain("shell of an empty set".into()));
    }
    if n == 0 {
        return Err(Error::Domain("shell index starts at 1".into()));
    }
    let d = set[0].dim();
    let lo = params.plateau_radius(n)?;
    let hi = params.plateau_radius(n + 1)?;
    let (lo_sq, hi_sq) = (lo * lo, hi * hi);
    let reach = hi as i64 - 1;
    let mut min = [i64::MAX; MAX_DIM];
    let mut max = [i64::MIN; MAX_DIM];
    for s in set {
        for i in 0..d {
            min[i] = min[i].min(s.coords[i] - reach);
            max[i] = max[i].max(s.coords[i] + reach);
        }
    }
    let mut out = Vec::new();
    let mut cur = min;
    loop {
        let x = LatticePoint::new(&cur[..d]);
        let dsq = dist_sq_to_set(&x, set);
        if dsq >= lo_sq && dsq < hi_sq {
            out.push(x);
        }
        // odometer over the bounding box, last axis fastest
        let mut axis = d;
        loop {
            if axis == 0 {
                return Ok(out);
            }
            axis -= 1;
            if cur[axis] < max[axis] {
                cur[axis] += 1;
                break;
            }
            cur[axis] = min[axis];
        }
    }
}

/// Number of lattice points `y` with `|y|^2 < bound`.
pub fn count_ball_sq(dim: usize, bound: u64) -> u64 {
    if bound == 0 {
        return 0;
    }
    let b = bound - 1;
    match dim {
        1 => 2 * isqrt(b) + 1,
        2 => {
            let m = isqrt(b);
            (0..=m).map(|x| (if x == 0 { 1 } else { 2 }) * (2 * isqrt(b - x * x) + 1)).sum()
        }
        _ => {
            let m = isqrt(b);
            let mut total = 0;
            for x in 0..=m {
                let bx = b - x * x;
                let my = isqrt(bx);
                let wx = if x == 0 { 1 } else { 2 };
                for y in 0..=my {
                    let wy = if y == 0 { 1 } else { 2 };
                    total += wx * wy * (2 * isqrt(bx - y * y) + 1);
                }
            }
            total
        }
    }
}

/// Exact `|shell_sites({0}, n)|` without enumerating the shell.
pub fn point_shell_count(dim: usize, n: usize, params: &StaircaseParams) -> Result<u64> {
    let lo = params.plateau_radius(n)?;
    let hi = params.plateau_radius(n + 1)?;
    Ok(count_ball_sq(dim, hi * hi) - count_ball_sq(dim, lo * lo))
}

/// Largest `r` with `r^2 <= n`.
pub fn isqrt(n: u64) -> u64 {
    if n == 0 {
        return 0;
    }
    let mut r = (n as f64).sqrt() as u64;
    while r.checked_mul(r).is_none_or(|sq| sq > n) {
        r -= 1;
    }
    while (r + 1).checked_mul(r + 1).is_some_and(|sq| sq <= n) {
        r += 1;
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c)
    }

    #[test]
    fn sites_small_cubes() {
        let c = Cube::new(p(&[0]), 1);
        assert_eq!(c.sites(), vec![p(&[-1]), p(&[0]), p(&[1])]);
        assert_eq!(Cube::new(p(&[4, -2]), 0).sites(), vec![p(&[4, -2])]);
        let m = MultiCube::two(p(&[0]), p(&[5]), 1);
        let s = m.sites();
        assert_eq!(s.len(), 9);
        assert_eq!(s[0], ConfigPoint::two(p(&[-1]), p(&[4])));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn index_matches_order() {
        let m = MultiCube::two(p(&[1, 2]), p(&[-3, 0]), 1);
        for (i, x) in m.sites().iter().enumerate() {
            assert_eq!(m.index_of(x), Some(i));
        }
    }

    #[test]
    fn inner_boundary_examples() {
        assert_eq!(Cube::new(p(&[0]), 2).inner_boundary().unwrap(), vec![p(&[-2]), p(&[2])]);
        assert_eq!(Cube::new(p(&[0, 0]), 1).inner_boundary().unwrap().len(), 8);
        assert_eq!(Cube::new(p(&[0]), 0).inner_boundary(), Err(Error::EmptyBoundary));
    }

    #[test]
    fn two_particle_boundary_by_neighbour_predicate() {
        let m = MultiCube::two(p(&[0]), p(&[3]), 1);
        let expected: Vec<ConfigPoint> = m
            .sites()
            .into_iter()
            .filter(|x| {
                let (a, b) = (x.particles()[0], x.particles()[1]);
                let nbrs = [
                    ConfigPoint::two(a.shifted(0, 1), b),
                    ConfigPoint::two(a.shifted(0, -1), b),
                    ConfigPoint::two(a, b.shifted(0, 1)),
                    ConfigPoint::two(a, b.shifted(0, -1)),
                ];
                nbrs.iter().any(|n| !m.contains(n))
            })
            .collect();
        assert_eq!(m.inner_boundary().unwrap(), expected);
        assert_eq!(expected.len(), 8);
    }

    #[test]
    fn core_radius_floors() {
        let c = |l| Cube::new(p(&[0]), l).core().map(|c| c.radius);
        assert_eq!(c(9), Ok(3));
        assert_eq!(c(10), Ok(3));
        assert_eq!(c(3), Ok(1));
        assert_eq!(c(2), Err(Error::DegenerateCore(2)));
    }

    #[test]
    fn non_interactive_threshold() {
        assert!(MultiCube::two(p(&[0]), p(&[9]), 2).is_non_interactive());
        assert!(!MultiCube::two(p(&[0]), p(&[8]), 2).is_non_interactive());
        assert!(!MultiCube::two(p(&[7]), p(&[7]), 0).is_non_interactive());
    }

    #[test]
    fn box_distances() {
        let c = Cube::new(p(&[0, 0]), 1);
        assert_eq!(c.min_dist_sq(&p(&[3, 0])), 4);
        assert_eq!(c.max_dist_sq(&p(&[3, 0])), 16 + 1);
        assert_eq!(c.min_dist_sq(&p(&[1, -1])), 0);
        let b = Cube::new(p(&[5, 0]), 1);
        assert_eq!(c.gap_sq(&b), 9);
    }

    #[test]
    fn ball_counts_match_enumeration() {
        for dim in 1..=3usize {
            for bound in [0u64, 1, 2, 5, 17, 50] {
                let r = isqrt(bound) as i64 + 1;
                let cube = Cube::new(LatticePoint::origin(dim), r as u32);
                let brute = cube
                    .sites()
                    .iter()
                    .filter(|y| y.dist_sq(&LatticePoint::origin(dim)) < bound)
                    .count() as u64;
                assert_eq!(count_ball_sq(dim, bound), brute, "dim {dim} bound {bound}");
            }
        }
    }

    #[test]
    fn isqrt_exact() {
        for n in 0..2000u64 {
            let r = isqrt(n);
            assert!(r * r <= n && (r + 1) * (r + 1) > n);
        }
        assert_eq!(isqrt(u64::MAX), 4294967295);
    }
}
