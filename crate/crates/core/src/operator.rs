//! Finite-volume Hamiltonians `H = -Δ + gV + U` on 1- and 2-particle cubes.
//!
//! Dirichlet restriction: the diagonal carries the full `2Nd` of the lattice
//! Laplacian and links leaving the cube are dropped. Storage is CSR with
//! columns sorted inside each row.

use nalgebra::DMatrix;

use crate::disorder::DisorderConfig;
use crate::error::{Error, Result};
use crate::geometry::{ConfigPoint, Cube, LatticePoint, MultiCube};
use crate::num::Real;
use crate::potential::{interaction_energy, potential_on_sites, InteractionParams, StaircaseParams};

/// Default certified truncation tolerance for the cumulative potential.
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;

/// Everything that enters the Hamiltonian besides the disorder.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub staircase: StaircaseParams,
    pub interaction: InteractionParams,
    pub g: f64,
    /// Radius the disorder window must cover around the cube's projection.
    /// `None` skips the coverage check.
    pub cutoff: Option<u64>,
}

impl ModelParams {
    /// Model with the cutoff radius certified for `tail_tol`.
    pub fn new(
        staircase: StaircaseParams,
        interaction: InteractionParams,
        g: f64,
        tail_tol: f64,
    ) -> Result<Self> {
        if !(g >= 0.0 && g.is_finite()) {
            return Err(Error::InvalidParams(format!("coupling g = {g} must be >= 0")));
        }
        let cutoff = staircase.cutoff_for(tail_tol)?;
        Ok(Self { staircase, interaction, g, cutoff: Some(cutoff) })
    }

    /// Model that uses whatever window it is given, without truncation control.
    pub fn untruncated(staircase: StaircaseParams, interaction: InteractionParams, g: f64) -> Self {
        Self { staircase, interaction, g, cutoff: None }
    }

    pub fn with_g(&self, g: f64) -> Self {
        Self { g, ..self.clone() }
    }
}

#[derive(Clone, Debug)]
pub struct FiniteVolumeOperator<T: Real> {
    cube: Option<MultiCube>,
    g: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<T>,
    diag: Vec<T>,
}

impl<T: Real> FiniteVolumeOperator<T> {
    /// Builds an operator from a symmetric dense matrix (tests, small oracles).
    pub fn from_dense(m: &DMatrix<T>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::Domain("matrix is not square".into()));
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if m[(i, j)] != m[(j, i)] {
                    return Err(Error::Domain("matrix is not symmetric".into()));
                }
                if m[(i, j)] != T::zero() || i == j {
                    cols.push(j);
                    vals.push(m[(i, j)]);
                }
            }
            row_ptr.push(cols.len());
        }
        let diag = (0..n).map(|i| m[(i, i)]).collect();
        Ok(Self { cube: None, g: 0.0, row_ptr, cols, vals, diag })
    }

    pub fn diagonal_matrix(values: &[T]) -> Self {
        Self::from_dense(&DMatrix::from_diagonal(&nalgebra::DVector::from_vec(values.to_vec())))
            .expect("diagonal is symmetric")
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn cube(&self) -> Option<&MultiCube> {
        self.cube.as_ref()
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn diagonal(&self) -> &[T] {
        &self.diag
    }

    /// `(column, value)` entries of row `i`, diagonal included.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn entry(&self, i: usize, j: usize) -> T {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[r.clone()].binary_search(&j) {
            Ok(k) => self.vals[r.start + k],
            Err(_) => T::zero(),
        }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Largest `|i - j|` over stored entries.
    pub fn bandwidth(&self) -> usize {
        (0..self.dim()).flat_map(|i| self.row(i).map(move |(j, _)| i.abs_diff(j))).max().unwrap_or(0)
    }

    /// `y = H x`.
    pub fn apply(&self, x: &[T], y: &mut [T]) {
        for (i, yi) in y.iter_mut().enumerate() {
            *yi = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    pub fn apply_vec(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); x.len()];
        self.apply(x, &mut y);
        y
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> T {
        (0..self.dim())
            .map(|i| self.row(i).map(|(_, v)| v.abs()).sum::<T>())
            .fold(T::zero(), T::max)
    }

    pub fn to_dense(&self) -> DMatrix<T> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            for (j, v) in self.row(i) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Same operator with `shift` added to every diagonal entry.
    pub fn shifted(&self, shift: T) -> Self {
        let mut out = self.clone();
        for i in 0..out.dim() {
            out.diag[i] = out.diag[i] + shift;
            let r = out.row_ptr[i]..out.row_ptr[i + 1];
            let k = out.cols[r.clone()].binary_search(&i).expect("diagonal stored");
            out.vals[r.start + k] = out.diag[i];
        }
        out
    }

    pub fn site_index(&self, x: &ConfigPoint) -> Option<usize> {
        self.cube.as_ref()?.index_of(x)
    }
}

/// Checks that `config` determines the potential on `mcube` up to the
/// certified cutoff.
pub fn check_window(mcube: &MultiCube, config: &DisorderConfig, model: &ModelParams) -> Result<()> {
    let Some(cutoff) = model.cutoff else { return Ok(()) };
    if model.g == 0.0 || config.has_zero_exterior() {
        return Ok(());
    }
    let required = mcube.radius as u64 + cutoff;
    let fail = || Error::Truncation { required_radius: required as f64 };
    for cube in mcube.projections() {
        let c = cube.center.coords();
        let r = required as i64;
        let lo: Vec<i64> = c.iter().map(|x| x - r).collect();
        let hi: Vec<i64> = c.iter().map(|x| x + r).collect();
        let (first, last) = (config.sites().first(), config.sites().last());
        let (Some(first), Some(last)) = (first, last) else { return Err(fail()) };
        // cheap path: the window is a full box containing the sup-norm ball
        let in_box = |p: &LatticePoint, a: &[i64], b: &[i64]| {
            p.coords().iter().zip(a.iter().zip(b)).all(|(x, (l, h))| l <= x && x <= h)
        };
        let box_lo = first.coords().to_vec();
        let box_hi = last.coords().to_vec();
        let full_box = {
            let count: i128 = box_lo.iter().zip(&box_hi).map(|(a, b)| (b - a + 1) as i128).product();
            count == config.len() as i128
                && config.sites().iter().all(|p| in_box(p, &box_lo, &box_hi))
        };
        if full_box {
            if lo.iter().zip(&box_lo).any(|(a, b)| a < b) || hi.iter().zip(&box_hi).any(|(a, b)| a > b) {
                return Err(fail());
            }
            continue;
        }
        for y in crate::disorder::box_sites(&LatticePoint::new(&lo), &LatticePoint::new(&hi))? {
            if cube.min_dist_sq(&y) < cutoff * cutoff && config.get(&y).is_none() {
                return Err(fail());
            }
        }
    }
    Ok(())
}

/// Assembles `H = -Δ + gV + U` on `mcube`.
pub fn assemble<T: Real>(
    mcube: &MultiCube,
    config: &DisorderConfig,
    model: &ModelParams,
) -> Result<FiniteVolumeOperator<T>> {
    check_window(mcube, config, model)?;
    let projections = mcube.projections();
    let potentials: Vec<Vec<T>> = if model.g == 0.0 {
        projections.iter().map(|c| vec![T::zero(); c.len()]).collect()
    } else {
        projections
            .iter()
            .map(|c| potential_on_sites(&c.sites(), config, &model.staircase))
            .collect()
    };
    assemble_with_potentials(mcube, &potentials, model)
}

/// Assembles from precomputed 1-particle potentials on each projection cube
/// (aligned with `projection.sites()`).
pub fn assemble_with_potentials<T: Real>(
    mcube: &MultiCube,
    potentials: &[Vec<T>],
    model: &ModelParams,
) -> Result<FiniteVolumeOperator<T>> {
    let n = mcube.n_particles();
    let d = mcube.dim();
    let side = mcube.radius as usize * 2 + 1;
    let base = T::of((2 * n * d) as f64);
    let g = T::of(model.g);
    let sites = mcube.sites();
    let dim = sites.len();
    let projections = mcube.projections();
    if potentials.len() != n || potentials.iter().zip(&projections).any(|(p, c)| p.len() != c.len()) {
        return Err(Error::Domain("potential vectors do not match the projections".into()));
    }

    // strides of the mixed-radix index: particle-major, first coordinate most significant
    let nd = n * d;
    let mut stride = vec![1usize; nd];
    for k in (0..nd.saturating_sub(1)).rev() {
        stride[k] = stride[k + 1] * side;
    }
    let per_particle = side.pow(d as u32);

    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols = Vec::with_capacity(dim * (2 * nd + 1));
    let mut vals = Vec::with_capacity(dim * (2 * nd + 1));
    let mut diag = Vec::with_capacity(dim);
    row_ptr.push(0);
    let mut digits = vec![0usize; nd];
    for (i, x) in sites.iter().enumerate() {
        // digits of i
        let mut rem = i;
        for k in 0..nd {
            digits[k] = rem / stride[k];
            rem %= stride[k];
        }
        let mut v = base;
        for j in 0..n {
            let local = (i / per_particle.pow((n - 1 - j) as u32)) % per_particle;
            v = v + g * potentials[j][local];
        }
        v = v + interaction_energy::<T>(x, &model.interaction);
        diag.push(v);

        let mut row: Vec<(usize, T)> = Vec::with_capacity(2 * nd + 1);
        row.push((i, v));
        for k in 0..nd {
            if digits[k] > 0 {
                row.push((i - stride[k], -T::one()));
            }
            if digits[k] + 1 < side {
                row.push((i + stride[k], -T::one()));
            }
        }
        row.sort_by_key(|e| e.0);
        for (c, val) in row {
            cols.push(c);
            vals.push(val);
        }
        row_ptr.push(cols.len());
    }
    Ok(FiniteVolumeOperator { cube: Some(*mcube), g: model.g, row_ptr, cols, vals, diag })
}

/// 1-particle operators on the two projections of an NI cube, whose sum
/// spectrum is the spectrum of the 2-particle operator.
pub fn assemble_projections<T: Real>(
    mcube: &MultiCube,
    config: &DisorderConfig,
    model: &ModelParams,
) -> Result<(FiniteVolumeOperator<T>, FiniteVolumeOperator<T>)> {
    if mcube.n_particles() != 2 || !mcube.is_non_interactive() {
        return Err(Error::NotNonInteractive);
    }
    let [a, b]: [Cube; 2] = mcube.projections().try_into().expect("two projections");
    let i = &model.interaction;
    if i.u0 > 0.0 && (a.gap_sq(&b) as f64) <= i.r0 * i.r0 {
        return Err(Error::RangeViolation);
    }
    let one = |c: &Cube| assemble::<T>(&MultiCube::one(c.center, c.radius), config, model);
    Ok((one(&a)?, one(&b)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::AmplitudeDistribution;

    fn p(c: &[i64]) -> LatticePoint {
        LatticePoint::new(c)
    }

    fn free(d: usize) -> ModelParams {
        let s = StaircaseParams::new(2.0, 3.0, d).unwrap();
        ModelParams::untruncated(s, InteractionParams::none(), 0.0)
    }

    fn empty() -> DisorderConfig {
        DisorderConfig::from_amplitudes(AmplitudeDistribution::uniform(), 0, vec![]).unwrap()
    }

    #[test]
    fn path_graph_spectrum() {
        let h = assemble::<f64>(&MultiCube::one(p(&[0]), 1), &empty(), &free(1)).unwrap();
        let (vals, _) = f64::symmetric_eigen(h.to_dense(), false);
        let s = 2f64.sqrt();
        for (v, e) in vals.iter().zip([2.0 - s, 2.0, 2.0 + s]) {
            assert!((v - e).abs() < 1e-12);
        }
    }

    #[test]
    fn single_site_value() {
        let s = StaircaseParams::new(2.0, 3.0, 2).unwrap();
        let model = ModelParams::untruncated(s, InteractionParams::none(), 2.0);
        let cfg = DisorderConfig::from_amplitudes(
            AmplitudeDistribution::uniform(),
            0,
            vec![(p(&[1, 1]), 0.5)],
        )
        .unwrap();
        let h = assemble::<f64>(&MultiCube::one(p(&[0, 0]), 0), &cfg, &model).unwrap();
        assert_eq!(h.dim(), 1);
        assert_eq!(h.diagonal()[0], 4.0 + 2.0 * 0.5);
    }

    #[test]
    fn two_particle_structure() {
        let m = MultiCube::two(p(&[0]), p(&[0]), 1);
        let model = ModelParams { interaction: InteractionParams::new(1.0, 1.0).unwrap(), ..free(1) };
        let h = assemble::<f64>(&m, &empty(), &model).unwrap();
        assert_eq!(h.dim(), 9);
        let dense = h.to_dense();
        assert_eq!(dense, dense.transpose());
        for i in 0..9 {
            let off: f64 = h.row(i).filter(|(j, _)| *j != i).map(|(_, v)| v).sum();
            assert!(off >= -4.0);
            assert!(h.row(i).all(|(j, v)| j == i || v == -1.0));
        }
        // coincident particles pick up u0; distance 2 does not
        let idx = |a: i64, b: i64| m.index_of(&ConfigPoint::two(p(&[a]), p(&[b]))).unwrap();
        assert_eq!(h.diagonal()[idx(0, 0)], 5.0);
        assert_eq!(h.diagonal()[idx(-1, 1)], 4.0);
    }

    #[test]
    fn truncation_is_enforced() {
        let s = StaircaseParams::new(2.0, 3.0, 1).unwrap();
        let model = ModelParams::new(s, InteractionParams::none(), 1.0, 1e-4).unwrap();
        let cut = model.cutoff.unwrap() as i64;
        let dist = AmplitudeDistribution::bernoulli(0.5).unwrap();
        let small = DisorderConfig::sample_box(&p(&[-cut]), &p(&[cut]), dist.clone(), 1).unwrap();
        let m = MultiCube::one(p(&[0]), 2);
        assert!(matches!(assemble::<f64>(&m, &small, &model), Err(Error::Truncation { .. })));
        let r = cut + 2;
        let big = DisorderConfig::sample_box(&p(&[-r]), &p(&[r]), dist, 1).unwrap();
        assert!(assemble::<f64>(&m, &big, &model).is_ok());
        assert!(assemble::<f64>(&m, &small.clone().with_zero_exterior(), &model).is_ok());
    }

    #[test]
    fn projections_need_ni() {
        let m = MultiCube::two(p(&[0]), p(&[8]), 2);
        let r = assemble_projections::<f64>(&m, &empty(), &free(1));
        assert_eq!(r.err(), Some(Error::NotNonInteractive));
        let m = MultiCube::two(p(&[0]), p(&[9]), 2);
        let model = ModelParams { interaction: InteractionParams::new(5.0, 1.0).unwrap(), ..free(1) };
        assert_eq!(assemble_projections::<f64>(&m, &empty(), &model).err(), Some(Error::RangeViolation));
        assert!(assemble_projections::<f64>(&m, &empty(), &free(1)).is_ok());
    }

    #[test]
    fn generic_over_f32() {
        let h = assemble::<f32>(&MultiCube::one(p(&[0]), 3), &empty(), &free(1)).unwrap();
        assert_eq!(h.dim(), 7);
        assert_eq!(h.diagonal()[0], 2.0f32);
    }
}
