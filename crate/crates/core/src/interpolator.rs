//! Minimum-norm interpolation, class averaging, and sign/argmax prediction.

use crate::ensemble::{argmax, sgn};
use crate::error::{Error, Result};
use crate::linalg::{gram, max_abs, Cholesky};
use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureSpace {
    Weak,
    Strong,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    Mni,
    Avg,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    pub coeffs: Array1<f64>,
    pub space: FeatureSpace,
    pub method: Method,
}

impl LinearModel {
    pub fn new(coeffs: Array1<f64>, space: FeatureSpace, method: Method) -> Self {
        Self {
            coeffs,
            space,
            method,
        }
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            coeffs: &self.coeffs * c,
            ..self.clone()
        }
    }

    pub fn score(&self, x: ArrayView1<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.coeffs.dot(&x))
    }

    /// Scores of every row of `x`.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        self.check_dim(x.ncols())?;
        Ok(x.dot(&self.coeffs))
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }
}

fn interpolation_tol(y: ArrayView1<f64>) -> f64 {
    1e-8 * max_abs(y).max(1.0)
}

/// `Xᵀ (X Xᵀ)⁻¹ y` for each column of `ys`, sharing one Cholesky factor.
///
/// One step of iterative refinement is applied to any head whose residual
/// exceeds `1e-8·max(1, ‖y‖∞)`; if that does not fix it the fit is rejected.
pub fn fit_mni_multi(
    x: ArrayView2<f64>,
    ys: ArrayView2<f64>,
    space: FeatureSpace,
) -> Result<Vec<LinearModel>> {
    let (count, dim) = x.dim();
    if count > dim {
        return Err(Error::RankDeficient { count, dim });
    }
    if ys.nrows() != count {
        return Err(Error::DimensionMismatch {
            expected: count,
            got: ys.nrows(),
        });
    }
    let a = gram(x);
    let chol = Cholesky::factor(a.view())?;
    ys.axis_iter(Axis(1))
        .map(|y| {
            let mut alpha = chol.solve(y);
            let mut coeffs = x.t().dot(&alpha);
            let tol = interpolation_tol(y);
            let mut resid = &y - &x.dot(&coeffs);
            if max_abs(resid.view()) > tol {
                alpha += &chol.solve(resid.view());
                coeffs = x.t().dot(&alpha);
                resid = &y - &x.dot(&coeffs);
                let r = max_abs(resid.view());
                if r > tol {
                    return Err(Error::InterpolationResidual { residual: r });
                }
            }
            Ok(LinearModel::new(coeffs, space, Method::Mni))
        })
        .collect()
}

pub fn fit_mni(x: ArrayView2<f64>, y: ArrayView1<f64>, space: FeatureSpace) -> Result<LinearModel> {
    let ys = y.insert_axis(Axis(1));
    Ok(fit_mni_multi(x, ys, space)?.remove(0))
}

/// Signed class mean `(1/count) Σ yᵢ xᵢ`.
pub fn fit_avg(x: ArrayView2<f64>, y: ArrayView1<f64>, space: FeatureSpace) -> Result<LinearModel> {
    let count = x.nrows();
    if y.len() != count {
        return Err(Error::DimensionMismatch {
            expected: count,
            got: y.len(),
        });
    }
    if count == 0 {
        return Err(Error::InvalidParams("averaging needs at least one point".into()));
    }
    let coeffs = x.t().dot(&y) / count as f64;
    Ok(LinearModel::new(coeffs, space, Method::Avg))
}

pub fn predict_binary(model: &LinearModel, x: ArrayView1<f64>) -> Result<f64> {
    Ok(sgn(model.score(x)?))
}

pub fn predict_multiclass(models: &[LinearModel], x: ArrayView1<f64>) -> Result<usize> {
    if models.is_empty() {
        return Err(Error::EmptyModelList);
    }
    let scores = models
        .iter()
        .map(|m| m.score(x))
        .collect::<Result<Vec<_>>>()?;
    Ok(argmax(scores))
}

/// Ratio of extreme eigenvalues of the Gram matrix `X Xᵀ`, estimated by
/// power iteration on `A` and on `A⁻¹`.
pub fn gram_condition(x: ArrayView2<f64>, iters: usize) -> Result<f64> {
    let a = gram(x);
    let n = a.nrows();
    let chol = Cholesky::factor(a.view())?;
    let start = Array1::from_shape_fn(n, |i| 1.0 + (i as f64 * 0.618).fract());
    let power = |apply: &dyn Fn(&Array1<f64>) -> Array1<f64>| {
        let mut v = &start / start.dot(&start).sqrt();
        let mut lam = 0.0;
        for _ in 0..iters {
            let w = apply(&v);
            lam = v.dot(&w);
            let norm = w.dot(&w).sqrt();
            v = w / norm;
        }
        lam
    };
    let max = power(&|v| a.dot(v));
    let inv_min = power(&|v| chol.solve(v.view()));
    Ok(max * inv_min)
}
