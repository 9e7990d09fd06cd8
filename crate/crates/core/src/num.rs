//! Scalar abstraction shared by the numerical modules.
//!
//! Everything that builds or diagonalizes matrices is generic over [`Real`].
//! The dense kernels are delegated to `nalgebra` through the trait's
//! associated functions, so generic code only ever sees `num_traits::Float`
//! methods and never has to disambiguate between the two libraries.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use nalgebra::DMatrix;
use num_traits::float::TotalOrder;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar usable throughout the crate (`f32` or `f64`).
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + TotalOrder
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + nalgebra::Scalar
    + 'static
{
    /// Eigen-decomposition of a dense symmetric matrix.
    ///
    /// Returns eigenvalues in ascending order and, if requested, the matching
    /// orthonormal eigenvectors as columns.
    fn symmetric_eigen(m: DMatrix<Self>, vectors: bool) -> (Vec<Self>, Option<DMatrix<Self>>);

    /// Solves `m x = b` by LU with partial pivoting; `None` when singular.
    fn lu_solve(m: DMatrix<Self>, b: DMatrix<Self>) -> Option<DMatrix<Self>>;

    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            fn symmetric_eigen(
                m: DMatrix<Self>,
                vectors: bool,
            ) -> (Vec<Self>, Option<DMatrix<Self>>) {
                let n = m.nrows();
                if n == 0 {
                    return (Vec::new(), vectors.then(|| DMatrix::zeros(0, 0)));
                }
                if !vectors {
                    let mut vals: Vec<Self> = m.symmetric_eigenvalues().iter().copied().collect();
                    vals.sort_by(|a, b| a.total_cmp(b));
                    return (vals, None);
                }
                let eig = nalgebra::SymmetricEigen::new(m);
                let mut order: Vec<usize> = (0..n).collect();
                order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
                let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
                let vecs = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
                (vals, Some(vecs))
            }

            fn lu_solve(m: DMatrix<Self>, b: DMatrix<Self>) -> Option<DMatrix<Self>> {
                m.lu().solve(&b)
            }
        }
    };
}

impl_real!(f64);
impl_real!(f32);
