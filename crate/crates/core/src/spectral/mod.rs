//! Spectra, distances to the spectrum, resolvents, eigenfunction correlators
//! and spectral gaps.
//!
//! Up to `dense_threshold` sites everything is dense (`nalgebra`). Above it the
//! lowest eigenpairs come from Lanczos and distances to the spectrum from
//! shift-invert Lanczos on a banded `LDLᵀ`, with the lower bound certified by
//! inertia counts.

pub mod banded;
mod lanczos;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::operator::FiniteVolumeOperator;

pub use banded::{count_below, BandedLdl};

pub const DENSE_THRESHOLD: usize = 4096;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralOptions {
    pub dense_threshold: usize,
    /// Krylov dimension per Lanczos run.
    pub max_krylov: usize,
    pub max_restarts: usize,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        Self { dense_threshold: DENSE_THRESHOLD, max_krylov: 200, max_restarts: 60 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Dense,
    Iterative,
}

#[derive(Clone, Debug)]
pub struct SpectrumResult<T: Real> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// Orthonormal eigenvectors as columns, aligned with `eigenvalues`.
    pub eigenvectors: Option<DMatrix<T>>,
    pub method: Method,
}

/// Relative residual accepted for eigenpairs and resolvent solves.
pub fn residual_tol<T: Real>() -> f64 {
    (1e5 * T::epsilon().as_f64()).max(1e-10)
}

fn scale_of<T: Real>(op: &FiniteVolumeOperator<T>) -> T {
    op.norm_one().max(T::one())
}

/// `‖Hv - λv‖₂`.
pub fn eigenpair_residual<T: Real>(op: &FiniteVolumeOperator<T>, lambda: T, v: &[T]) -> T {
    let hv = op.apply_vec(v);
    hv.iter().zip(v).map(|(a, b)| (*a - lambda * *b).powi(2)).sum::<T>().sqrt()
}

fn check_pairs<T: Real>(op: &FiniteVolumeOperator<T>, vals: &[T], vecs: &DMatrix<T>) -> Result<()> {
    let tol = T::of(residual_tol::<T>()) * scale_of(op);
    for (k, &lambda) in vals.iter().enumerate() {
        let col: Vec<T> = vecs.column(k).iter().copied().collect();
        let r = eigenpair_residual(op, lambda, &col);
        if !(r <= tol) {
            return Err(Error::Convergence { residual: r.as_f64() });
        }
    }
    Ok(())
}

pub fn full_spectrum<T: Real>(op: &FiniteVolumeOperator<T>, want_vectors: bool) -> Result<SpectrumResult<T>> {
    full_spectrum_with(op, want_vectors, &SpectralOptions::default())
}

pub fn full_spectrum_with<T: Real>(
    op: &FiniteVolumeOperator<T>,
    want_vectors: bool,
    opts: &SpectralOptions,
) -> Result<SpectrumResult<T>> {
    if op.dim() > opts.dense_threshold {
        return Err(Error::TooLarge { dim: op.dim(), threshold: opts.dense_threshold });
    }
    let (eigenvalues, eigenvectors) = T::symmetric_eigen(op.to_dense(), want_vectors);
    if let Some(v) = &eigenvectors {
        check_pairs(op, &eigenvalues, v)?;
    }
    Ok(SpectrumResult { eigenvalues, eigenvectors, method: Method::Dense })
}

pub fn lowest_eigenpairs<T: Real>(op: &FiniteVolumeOperator<T>, k: usize) -> Result<SpectrumResult<T>> {
    lowest_eigenpairs_with(op, k, &SpectralOptions::default())
}

/// The `k` smallest eigenpairs by Lanczos with locking. Once `k` pairs are
/// locked, one more run in their orthogonal complement checks that nothing
/// below the `k`-th value was missed (degenerate or poorly started cases).
pub fn lowest_eigenpairs_with<T: Real>(
    op: &FiniteVolumeOperator<T>,
    k: usize,
    opts: &SpectralOptions,
) -> Result<SpectrumResult<T>> {
    let n = op.dim();
    if k > n {
        return Err(Error::Domain(format!("asked for {k} eigenpairs of a {n}-dimensional operator")));
    }
    if k == 0 {
        return Ok(SpectrumResult {
            eigenvalues: Vec::new(),
            eigenvectors: Some(DMatrix::zeros(n, 0)),
            method: Method::Iterative,
        });
    }
    let scale = scale_of(op);
    let tol = T::of(residual_tol::<T>() * 0.1) * scale;
    let apply = |x: &[T], y: &mut [T]| op.apply(x, y);
    let run = |want: usize, deflate: &[Vec<T>], salt: u64| {
        lanczos::thick_restart_lowest(&apply, n, want, deflate, opts.max_krylov, opts.max_restarts, tol, salt)
            .map_err(|residual| Error::Convergence { residual })
    };
    let mut locked = run(k, &[], 0)?;
    // Krylov spaces see one vector per eigenspace: look for missed copies
    // in the orthogonal complement until none lies below the k-th value.
    for salt in 1.. {
        if locked.len() == n || salt > opts.max_restarts as u64 {
            break;
        }
        let kth = locked.iter().map(|p| p.0).fold(T::neg_infinity(), T::max);
        let deflate: Vec<Vec<T>> = locked.iter().map(|p| p.1.clone()).collect();
        let extra = run(1, &deflate, salt)?;
        match extra.into_iter().next() {
            Some(p) if p.0 < kth - tol => {
                locked.push(p);
                locked.sort_by(|a, b| a.0.total_cmp(&b.0));
                locked.truncate(k);
            }
            _ => break,
        }
    }
    locked.sort_by(|a, b| a.0.total_cmp(&b.0));
    locked.truncate(k);
    let eigenvalues: Vec<T> = locked.iter().map(|p| p.0).collect();
    let vecs = DMatrix::from_fn(n, k, |r, c| locked[c].1[r]);
    check_pairs(op, &eigenvalues, &vecs)?;
    Ok(SpectrumResult { eigenvalues, eigenvectors: Some(vecs), method: Method::Iterative })
}

/// Two-sided bound `lo <= dist(E, spec H) <= hi`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DistBracket<T> {
    pub lo: T,
    pub hi: T,
}

pub fn dist_bracket<T: Real>(op: &FiniteVolumeOperator<T>, e: T) -> Result<DistBracket<T>> {
    dist_bracket_with(op, e, &SpectralOptions::default())
}

pub fn dist_bracket_with<T: Real>(
    op: &FiniteVolumeOperator<T>,
    e: T,
    opts: &SpectralOptions,
) -> Result<DistBracket<T>> {
    if op.dim() <= opts.dense_threshold {
        let s = full_spectrum_with(op, false, opts)?;
        let d = nearest_distance(&s.eigenvalues, e);
        return Ok(DistBracket { lo: d, hi: d });
    }
    let scale = scale_of(op);
    // if E sits (numerically) on an eigenvalue, work at a nearby shift and widen
    let mut delta = T::zero();
    let mut factor = None;
    for j in 0..8 {
        if let Some(f) = BandedLdl::factor(op, e + delta) {
            factor = Some(f);
            break;
        }
        delta = T::of(1e-12) * scale * T::of(4f64.powi(j));
    }
    let Some(factor) = factor else {
        return Err(Error::Convergence { residual: f64::NAN });
    };
    let s = e + delta;
    let n = op.dim();
    let apply = |x: &[T], y: &mut [T]| y.copy_from_slice(&factor.solve(x));
    let kr = lanczos::run(&apply, n, lanczos::start_vector(n, 7), &[], 40.min(n), 7);
    let (vals, coeffs, _) = kr.ritz();
    let idx = (0..vals.len()).max_by(|&a, &b| vals[a].abs().total_cmp(&vals[b].abs())).expect("nonempty");
    let mut v = kr.ritz_vector(&coeffs, idx);
    // two steps of inverse iteration sharpen the vector
    for _ in 0..2 {
        let w = factor.solve(&v);
        let nw = lanczos::norm(&w);
        v = w.into_iter().map(|x| x / nw).collect();
    }
    let hv = op.apply_vec(&v);
    let hi = hv.iter().zip(&v).map(|(a, b)| (*a - s * *b).powi(2)).sum::<T>().sqrt();
    let mut r = hi.min(T::one() / vals[idx].abs()) * (T::one() - T::of(1e-10));
    let mut lo = T::zero();
    for _ in 0..60 {
        if r <= T::zero() {
            break;
        }
        match (count_below(op, s + r), count_below(op, s - r)) {
            (Some(a), Some(b)) if a == b => {
                lo = r;
                break;
            }
            (Some(_), Some(_)) => r = r * T::of(0.5),
            _ => r = r * T::of(0.999),
        }
    }
    Ok(DistBracket { lo: (lo - delta).max(T::zero()), hi: hi + delta })
}

pub fn dist_to_spectrum<T: Real>(op: &FiniteVolumeOperator<T>, e: T) -> Result<T> {
    dist_to_spectrum_with(op, e, &SpectralOptions::default())
}

/// `min |λ - E|`. Above the dense threshold the certified bracket must be
/// tight (relative width `1e-9`), otherwise an uncertainty error is raised.
pub fn dist_to_spectrum_with<T: Real>(op: &FiniteVolumeOperator<T>, e: T, opts: &SpectralOptions) -> Result<T> {
    let b = dist_bracket_with(op, e, opts)?;
    if b.hi - b.lo <= T::of(1e-9) * b.hi.max(T::one()) {
        Ok(b.hi)
    } else {
        Err(Error::Uncertain { lo: b.lo.as_f64(), hi: b.hi.as_f64(), target: f64::NAN })
    }
}

pub fn nearest_distance<T: Real>(sorted: &[T], e: T) -> T {
    let i = sorted.partition_point(|&v| v < e);
    let mut d = T::infinity();
    if i < sorted.len() {
        d = d.min(sorted[i] - e);
    }
    if i > 0 {
        d = d.min(e - sorted[i - 1]);
    }
    d
}

enum Factor<T: Real> {
    Spectral { vals: Vec<T>, vecs: DMatrix<T> },
    Banded(BandedLdl<T>),
}

/// `G(E) = (H - E)^{-1}` for a fixed energy, with residual-checked columns.
pub struct Resolvent<'a, T: Real> {
    op: &'a FiniteVolumeOperator<T>,
    e: T,
    dist: T,
    factor: Factor<T>,
}

/// Energies closer to the spectrum than `1e-12 ‖H‖₁` count as resonant.
pub fn resonance_floor<T: Real>(op: &FiniteVolumeOperator<T>) -> T {
    T::of(1e-12) * op.norm_one().max(T::min_positive_value())
}

impl<'a, T: Real> Resolvent<'a, T> {
    pub fn new(op: &'a FiniteVolumeOperator<T>, e: T) -> Result<Self> {
        Self::new_with(op, e, &SpectralOptions::default())
    }

    pub fn new_with(op: &'a FiniteVolumeOperator<T>, e: T, opts: &SpectralOptions) -> Result<Self> {
        if op.dim() <= opts.dense_threshold {
            let s = full_spectrum_with(op, true, opts)?;
            return Self::from_spectrum(op, &s, e);
        }
        let b = dist_bracket_with(op, e, opts)?;
        let floor = resonance_floor(op);
        if b.lo <= floor {
            return Err(Error::Resonant { distance: b.lo.as_f64(), floor: floor.as_f64() });
        }
        let f = BandedLdl::factor(op, e).ok_or(Error::Resonant {
            distance: b.lo.as_f64(),
            floor: floor.as_f64(),
        })?;
        Ok(Self { op, e, dist: b.lo, factor: Factor::Banded(f) })
    }

    /// Reuses a complete spectrum with eigenvectors.
    pub fn from_spectrum(op: &'a FiniteVolumeOperator<T>, spec: &SpectrumResult<T>, e: T) -> Result<Self> {
        let vecs = spec
            .eigenvectors
            .clone()
            .filter(|v| v.ncols() == op.dim())
            .ok_or_else(|| Error::Domain("resolvent needs the complete eigenbasis".into()))?;
        let dist = nearest_distance(&spec.eigenvalues, e);
        let floor = resonance_floor(op);
        if !(dist > floor) {
            return Err(Error::Resonant { distance: dist.as_f64(), floor: floor.as_f64() });
        }
        Ok(Self { op, e, dist, factor: Factor::Spectral { vals: spec.eigenvalues.clone(), vecs } })
    }

    pub fn energy(&self) -> T {
        self.e
    }

    /// `dist(E, spec H)` (certified lower bound above the dense threshold).
    pub fn dist(&self) -> T {
        self.dist
    }

    /// Operator norm `‖G(E)‖ = 1/dist`.
    pub fn norm(&self) -> T {
        T::one() / self.dist
    }

    fn raw_solve(&self, rhs: &[T]) -> Vec<T> {
        match &self.factor {
            Factor::Banded(f) => f.solve(rhs),
            Factor::Spectral { vals, vecs } => {
                let n = rhs.len();
                let mut out = vec![T::zero(); n];
                for (k, &lambda) in vals.iter().enumerate() {
                    let col = vecs.column(k);
                    let c: T = col.iter().zip(rhs).map(|(a, b)| *a * *b).sum::<T>() / (lambda - self.e);
                    for (o, a) in out.iter_mut().zip(col.iter()) {
                        *o = *o + c * *a;
                    }
                }
                out
            }
        }
    }

    /// Solves `(H - E) x = rhs` with the residual contract enforced.
    pub fn solve(&self, rhs: &[T]) -> Result<Vec<T>> {
        let shifted_norm = self.op.norm_one() + self.e.abs();
        let rhs_norm = lanczos::norm(rhs);
        let mut x = self.raw_solve(rhs);
        let mut res = T::infinity();
        for _ in 0..4 {
            let hx = self.op.apply_vec(&x);
            let r: Vec<T> = hx.iter().zip(&x).zip(rhs).map(|((h, xi), b)| *h - self.e * *xi - *b).collect();
            res = lanczos::norm(&r);
            let tol = T::of(residual_tol::<T>()) * (shifted_norm * lanczos::norm(&x) + rhs_norm);
            if res <= tol {
                return Ok(x);
            }
            let dx = self.raw_solve(&r);
            for (a, b) in x.iter_mut().zip(dx) {
                *a = *a - b;
            }
        }
        Err(Error::Convergence { residual: res.as_f64() })
    }

    /// Column `G(·, y; E)`.
    pub fn column(&self, y: usize) -> Result<Vec<T>> {
        let mut e = vec![T::zero(); self.op.dim()];
        e[y] = T::one();
        self.solve(&e)
    }

    pub fn entry(&self, x: usize, y: usize) -> Result<T> {
        Ok(self.column(y)?[x])
    }
}

/// `G(x, y; E)` for site indices `x`, `y`.
pub fn green_entry<T: Real>(op: &FiniteVolumeOperator<T>, e: T, x: usize, y: usize) -> Result<T> {
    Resolvent::new(op, e)?.entry(x, y)
}

/// `Σ_{λ ∈ [lo, hi]} |ψ_λ(x)| |ψ_λ(y)|`, where numerically degenerate
/// eigenvalues are merged and contribute `‖P x‖ ‖P y‖` for the projection
/// `P` onto their eigenspace.
pub fn ef_correlator<T: Real>(spec: &SpectrumResult<T>, interval: (T, T), x: usize, y: usize) -> Result<T> {
    let vecs = spec
        .eigenvectors
        .as_ref()
        .ok_or_else(|| Error::Domain("eigenfunction correlator needs eigenvectors".into()))?;
    let (lo, hi) = interval;
    let vals = &spec.eigenvalues;
    let mut total = T::zero();
    let mut k = vals.partition_point(|&v| v < lo);
    while k < vals.len() && vals[k] <= hi {
        let mut end = k + 1;
        while end < vals.len()
            && vals[end] <= hi
            && vals[end] - vals[end - 1] <= T::of(1e-9) * vals[end].abs().max(T::one())
        {
            end += 1;
        }
        let (mut px, mut py) = (T::zero(), T::zero());
        for c in k..end {
            px = px + vecs[(x, c)].powi(2);
            py = py + vecs[(y, c)].powi(2);
        }
        total = total + (px * py).sqrt();
        k = end;
    }
    Ok(total)
}

/// `min |a_i - b_j|` over two ascending sequences.
pub fn min_spectral_gap<T: Real>(a: &[T], b: &[T]) -> T {
    debug_assert!(a.windows(2).all(|w| w[0] <= w[1]) && b.windows(2).all(|w| w[0] <= w[1]));
    let (mut i, mut j) = (0, 0);
    let mut best = T::infinity();
    while i < a.len() && j < b.len() {
        best = best.min((a[i] - b[j]).abs());
        if a[i] < b[j] {
            i += 1;
        } else {
            j += 1;
        }
    }
    best
}

/// Gap between the full spectra of two operators.
pub fn operator_gap<T: Real>(a: &FiniteVolumeOperator<T>, b: &FiniteVolumeOperator<T>) -> Result<T> {
    let sa = full_spectrum(a, false)?;
    let sb = full_spectrum(b, false)?;
    Ok(min_spectral_gap(&sa.eigenvalues, &sb.eigenvalues))
}
