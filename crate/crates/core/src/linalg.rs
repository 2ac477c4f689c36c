//! Dense symmetric positive-definite solves for Gram systems.

use crate::error::{Error, Result};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

/// Lower-triangular Cholesky factor `L` with `A = L Lᵀ`.
#[derive(Clone, Debug)]
pub struct Cholesky {
    l: Array2<f64>,
    /// Diagonal jitter that was added before the factorization succeeded.
    pub jitter: f64,
}

fn factor_in_place(a: &mut Array2<f64>) -> std::result::Result<(), usize> {
    let n = a.nrows();
    for j in 0..n {
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= a[[j, k]] * a[[j, k]];
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(j);
        }
        let ljj = diag.sqrt();
        a[[j, j]] = ljj;
        for i in (j + 1)..n {
            let mut v = a[[i, j]];
            for k in 0..j {
                v -= a[[i, k]] * a[[j, k]];
            }
            a[[i, j]] = v / ljj;
        }
    }
    for i in 0..n {
        for j in (i + 1)..n {
            a[[i, j]] = 0.0;
        }
    }
    Ok(())
}

impl Cholesky {
    /// Factors `a`; on failure retries once with `1e-12 · trace / n` added to
    /// the diagonal.
    pub fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: a.ncols(),
            });
        }
        let mut l = a.to_owned();
        if factor_in_place(&mut l).is_ok() {
            return Ok(Self { l, jitter: 0.0 });
        }
        let jitter = 1e-12 * a.diag().sum() / n.max(1) as f64;
        let mut l = a.to_owned();
        for i in 0..n {
            l[[i, i]] += jitter;
        }
        match factor_in_place(&mut l) {
            Ok(()) => Ok(Self { l, jitter }),
            Err(pivot) => Err(Error::SingularGram { pivot }),
        }
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    pub fn factor_matrix(&self) -> &Array2<f64> {
        &self.l
    }

    pub fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.dim();
        let l = &self.l;
        let mut x = b.to_owned();
        for i in 0..n {
            let mut v = x[i];
            for k in 0..i {
                v -= l[[i, k]] * x[k];
            }
            x[i] = v / l[[i, i]];
        }
        for i in (0..n).rev() {
            let mut v = x[i];
            for k in (i + 1)..n {
                v -= l[[k, i]] * x[k];
            }
            x[i] = v / l[[i, i]];
        }
        x
    }
}

/// `X Xᵀ` for a row-major data matrix.
pub fn gram(x: ArrayView2<f64>) -> Array2<f64> {
    let mut a = x.dot(&x.t());
    // GEMM may leave the two triangles differing in the last bit.
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let v = 0.5 * (a[[i, j]] + a[[j, i]]);
            a[[i, j]] = v;
            a[[j, i]] = v;
        }
    }
    a
}

pub fn max_abs(v: ArrayView1<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()))
}
