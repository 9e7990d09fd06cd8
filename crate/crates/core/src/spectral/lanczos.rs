//! Lanczos with full reorthogonalization, explicit restarts and locking.

use nalgebra::DMatrix;

use crate::disorder::{hash_words, to_unit};
use crate::num::Real;

pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(x, y)| *x * *y).sum()
}

pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi = *yi + alpha * *xi;
    }
}

/// Two passes of classical Gram-Schmidt against `basis` (orthonormal).
fn orthogonalize<T: Real>(v: &mut [T], basis: &[Vec<T>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, v);
            axpy(-c, q, v);
        }
    }
}

/// Deterministic pseudo-random vector.
pub(crate) fn start_vector<T: Real>(n: usize, salt: u64) -> Vec<T> {
    (0..n).map(|i| T::of(to_unit(hash_words(0x6c61_6e63, &[salt, i as u64])) - 0.5)).collect()
}

/// Output of one Lanczos run.
pub(crate) struct Krylov<T: Real> {
    pub basis: Vec<Vec<T>>,
    pub alpha: Vec<T>,
    /// `beta[j]` couples basis vectors `j` and `j+1`; zero after a restart.
    pub beta: Vec<T>,
    /// Norm of the residual direction after the last step.
    pub beta_last: T,
}

impl<T: Real> Krylov<T> {
    /// Ritz values (ascending), their coefficient vectors in the tridiagonal
    /// basis and the residual estimates `|β_last s_last|`.
    pub fn ritz(&self) -> (Vec<T>, DMatrix<T>, Vec<T>) {
        let m = self.alpha.len();
        let mut t = DMatrix::zeros(m, m);
        for j in 0..m {
            t[(j, j)] = self.alpha[j];
            if j + 1 < m {
                t[(j, j + 1)] = self.beta[j];
                t[(j + 1, j)] = self.beta[j];
            }
        }
        let (vals, vecs) = T::symmetric_eigen(t, true);
        let vecs = vecs.expect("vectors requested");
        let res = (0..m).map(|i| (self.beta_last * vecs[(m - 1, i)]).abs()).collect();
        (vals, vecs, res)
    }

    pub fn ritz_vector(&self, coeffs: &DMatrix<T>, col: usize) -> Vec<T> {
        let n = self.basis.first().map_or(0, |q| q.len());
        let mut v = vec![T::zero(); n];
        for (j, q) in self.basis.iter().enumerate() {
            axpy(coeffs[(j, col)], q, &mut v);
        }
        let nv = norm(&v);
        v.iter_mut().for_each(|x| *x = *x / nv);
        v
    }
}

/// Runs up to `steps` Lanczos steps of `apply` restricted to the orthogonal
/// complement of `deflate`. Invariant subspaces are left by continuing with
/// a fresh vector, so the run stops early only when the complement is exhausted.
pub(crate) fn run<T: Real>(
    apply: &dyn Fn(&[T], &mut [T]),
    n: usize,
    start: Vec<T>,
    deflate: &[Vec<T>],
    steps: usize,
    salt: u64,
) -> Krylov<T> {
    let room = n - deflate.len();
    let steps = steps.min(room);
    let mut k = Krylov { basis: Vec::new(), alpha: Vec::new(), beta: Vec::new(), beta_last: T::zero() };
    if steps == 0 {
        return k;
    }
    let mut fresh = 0u64;
    let Some(mut q) = admit(start, deflate, &k.basis, n, salt, &mut fresh) else { return k };
    let mut w = vec![T::zero(); n];
    loop {
        apply(&q, &mut w);
        let a = dot(&q, &w);
        k.alpha.push(a);
        k.basis.push(q.clone());
        let mut r = w.clone();
        orthogonalize(&mut r, deflate);
        orthogonalize(&mut r, &k.basis);
        let b = norm(&r);
        if k.basis.len() >= steps {
            k.beta_last = b;
            return k;
        }
        let scale = a.abs().max(T::one());
        if b > T::epsilon() * T::of(1e3) * scale {
            k.beta.push(b);
            q = r.into_iter().map(|x| x / b).collect();
        } else {
            // invariant subspace found: decoupled block, fresh direction
            k.beta.push(T::zero());
            fresh += 1;
            let v = start_vector(n, salt.wrapping_mul(31).wrapping_add(fresh));
            match admit(v, deflate, &k.basis, n, salt, &mut fresh) {
                Some(v) => q = v,
                None => {
                    k.beta.pop();
                    k.beta_last = T::zero();
                    return k;
                }
            }
        }
    }
}

/// Orthonormalizes `v` against both bases, drawing fresh vectors if it
/// collapses. Passes repeat while the norm keeps dropping sharply, so even a
/// vector that is mostly cancellation noise comes out orthogonal.
fn admit<T: Real>(
    mut v: Vec<T>,
    deflate: &[Vec<T>],
    basis: &[Vec<T>],
    n: usize,
    salt: u64,
    fresh: &mut u64,
) -> Option<Vec<T>> {
    if deflate.len() + basis.len() >= n {
        return None;
    }
    for _ in 0..4 {
        let n0 = norm(&v);
        let mut prev = n0;
        let mut nv = n0;
        for _ in 0..6 {
            orthogonalize(&mut v, deflate);
            orthogonalize(&mut v, basis);
            nv = norm(&v);
            if nv > prev * T::of(0.5) {
                break;
            }
            prev = nv;
        }
        if nv > T::epsilon() * T::of(1e3) * n0 && nv > T::zero() {
            return Some(v.into_iter().map(|x| x / nv).collect());
        }
        *fresh += 1;
        v = start_vector(n, salt.wrapping_mul(31).wrapping_add(*fresh));
    }
    None
}

/// Lowest `want` eigenpairs of `apply` on the orthogonal complement of
/// `deflate`: thick-restart Krylov iteration with explicit Rayleigh-Ritz and
/// locking. After each sweep the converged wanted pairs are locked, the
/// next lowest Ritz vectors are kept and the space is extended from their
/// residual direction. Returns the pairs or the best residual reached.
#[allow(clippy::too_many_arguments)]
pub(crate) fn thick_restart_lowest<T: Real>(
    apply: &dyn Fn(&[T], &mut [T]),
    n: usize,
    want: usize,
    deflate: &[Vec<T>],
    m: usize,
    restarts: usize,
    tol: T,
    salt: u64,
) -> std::result::Result<Vec<(T, Vec<T>)>, f64> {
    let want = want.min(n - deflate.len());
    let mut locked: Vec<(T, Vec<T>)> = Vec::new();
    if want == 0 {
        return Ok(locked);
    }
    let mut defl = deflate.to_vec();
    let mut fresh = 0u64;
    let mut q_basis: Vec<Vec<T>> = Vec::new();
    let mut hq: Vec<Vec<T>> = Vec::new();
    let push = |q: Vec<T>, q_basis: &mut Vec<Vec<T>>, hq: &mut Vec<Vec<T>>| {
        let mut w = vec![T::zero(); n];
        apply(&q, &mut w);
        q_basis.push(q);
        hq.push(w);
    };
    let Some(q0) = admit(start_vector(n, salt), &defl, &[], n, salt, &mut fresh) else {
        return Err(f64::INFINITY);
    };
    push(q0, &mut q_basis, &mut hq);
    let mut best = f64::INFINITY;

    for _ in 0..restarts {
        let need = want - locked.len();
        let room = n - defl.len();
        let m = m.max(2 * need + 10).min(room);
        let keep = (need + need / 2 + 5).min(m.saturating_sub(1)).max(need.min(m));
        while q_basis.len() < m {
            let w = hq.last().expect("nonempty").clone();
            match admit(w, &defl, &q_basis, n, salt, &mut fresh) {
                Some(q) => push(q, &mut q_basis, &mut hq),
                None => break,
            }
        }
        let k = q_basis.len();
        let g = DMatrix::from_fn(k, k, |i, j| {
            let a = dot(&q_basis[i], &hq[j]);
            let b = dot(&q_basis[j], &hq[i]);
            (a + b) * T::of(0.5)
        });
        let (theta, s) = T::symmetric_eigen(g, true);
        let s = s.expect("vectors requested");
        let exhausted = k >= room;
        let nkeep = if exhausted { need.min(k) } else { keep.min(k) };
        let mut ys = Vec::with_capacity(nkeep);
        let mut hys = Vec::with_capacity(nkeep);
        let mut norms = Vec::with_capacity(nkeep);
        let mut res = Vec::with_capacity(nkeep);
        for i in 0..nkeep {
            let mut y = vec![T::zero(); n];
            let mut hy = vec![T::zero(); n];
            for j in 0..k {
                axpy(s[(j, i)], &q_basis[j], &mut y);
                axpy(s[(j, i)], &hq[j], &mut hy);
            }
            let mut r: Vec<T> = hy.iter().zip(&y).map(|(a, b)| *a - theta[i] * *b).collect();
            // residual of the deflated operator
            orthogonalize(&mut r, &defl);
            norms.push(norm(&r));
            res.push(r);
            ys.push(y);
            hys.push(hy);
        }
        // lock every converged pair among the wanted ones; missed lower
        // values are caught by the caller's complement check
        let wanted = need.min(nkeep);
        let done: Vec<bool> = (0..nkeep).map(|i| i < wanted && (norms[i] <= tol || exhausted)).collect();
        for i in 0..wanted {
            if done[i] {
                locked.push((theta[i], ys[i].clone()));
                defl.push(ys[i].clone());
            }
        }
        if locked.len() == want {
            return Ok(locked);
        }
        if exhausted {
            break;
        }
        // extend from all open residual directions so that every wanted
        // eigenspace keeps being explored
        let mut next = vec![T::zero(); n];
        for i in 0..wanted {
            if !done[i] {
                best = best.min(norms[i].as_f64());
                axpy(T::one() / norms[i], &res[i], &mut next);
            }
        }
        let open: Vec<usize> = (0..nkeep).filter(|&i| !done[i]).collect();
        q_basis = open.iter().map(|&i| ys[i].clone()).collect();
        hq = open.iter().map(|&i| hys[i].clone()).collect();
        match admit(next, &defl, &q_basis, n, salt, &mut fresh) {
            Some(q) => push(q, &mut q_basis, &mut hq),
            None if !q_basis.is_empty() => {}
            None => break,
        }
    }
    Err(best)
}
