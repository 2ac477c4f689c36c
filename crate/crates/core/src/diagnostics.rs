//! Survival and contamination of the true direction in a trained model, the
//! arctan accuracy law, and empirical accuracy estimates.
//!
//! For a coefficient vector `f` over independent features with variances
//! `λᵢ`, the test score `⟨f, x⟩` is Gaussian with variance `fᵀΛf`. Projecting
//! onto the label coordinate `x_v / sqrt(λ_v)` splits it as
//! `su·g_v + cn·g'` with `su = sqrt(λ_v)·f_v` and `su² + cn² = fᵀΛf`, and the
//! sign agrees with `sgn(x_v)` with probability `1/2 + arctan(su/cn)/π`.

use crate::ensemble::{sample_batch, Ensemble, Levels};
use crate::error::{Error, Result};
use crate::interpolator::LinearModel;
use crate::pipeline::Classifier;
use crate::rng::Stream;
use std::f64::consts::PI;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SuCn {
    pub su: f64,
    pub cn: f64,
    /// `su / cn`; ±∞ when `cn = 0` and `su ≠ 0`, 0 when both vanish.
    pub ratio: f64,
    pub total_var: f64,
}

impl SuCn {
    /// Splits a score with variance `total_var` given its survival.
    pub fn from_parts(su: f64, total_var: f64) -> Result<Self> {
        let su_sq = su * su;
        let mut cn_sq = total_var - su_sq;
        if cn_sq < 0.0 {
            if -cn_sq <= 1e-12 * total_var.abs().max(f64::MIN_POSITIVE) {
                cn_sq = 0.0;
            } else {
                return Err(Error::NumericalInconsistency { su_sq, total_var });
            }
        }
        let cn = cn_sq.sqrt();
        let ratio = if cn > 0.0 {
            su / cn
        } else if su == 0.0 {
            0.0
        } else {
            su.signum() * f64::INFINITY
        };
        Ok(Self {
            su,
            cn,
            ratio,
            total_var,
        })
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            su: self.su * c,
            cn: self.cn * c,
            ratio: self.ratio,
            total_var: self.total_var * c * c,
        }
    }
}

fn check_axis(model: &LinearModel, levels: &Levels, axis: usize) -> Result<()> {
    if model.dim() != levels.d {
        return Err(Error::DimensionMismatch {
            expected: levels.d,
            got: model.dim(),
        });
    }
    if axis >= levels.d {
        return Err(Error::IndexOutOfRange {
            index: axis,
            dim: levels.d,
        });
    }
    Ok(())
}

/// `sqrt(λ_axis)·f[axis]` (zero-based axis).
pub fn survival(model: &LinearModel, levels: &Levels, axis: usize) -> Result<f64> {
    check_axis(model, levels, axis)?;
    Ok(levels.eigenvalue(axis).sqrt() * model.coeffs[axis])
}

/// Survival, contamination and total variance `fᵀΛf` of an axis direction.
pub fn contamination(model: &LinearModel, levels: &Levels, axis: usize) -> Result<SuCn> {
    let su = survival(model, levels, axis)?;
    let (s, c) = (levels.s, model.coeffs.as_slice().expect("contiguous"));
    let fav: f64 = c[..s].iter().map(|v| v * v).sum();
    let unf: f64 = c[s..].iter().map(|v| v * v).sum();
    SuCn::from_parts(su, levels.lambda_f * fav + levels.lambda_u * unf)
}

/// Survival of a general unit direction `v` given per-coordinate variances.
pub fn survival_along(coeffs: &[f64], eigenvalues: &[f64], v: &[f64]) -> f64 {
    coeffs
        .iter()
        .zip(eigenvalues)
        .zip(v)
        .map(|((f, l), vi)| l.sqrt() * f * vi)
        .sum()
}

/// `1/2 + arctan(su/cn)/π`.
pub fn closed_form_accuracy(sucn: &SuCn) -> f64 {
    if sucn.cn == 0.0 {
        return if sucn.su > 0.0 {
            1.0
        } else if sucn.su < 0.0 {
            0.0
        } else {
            0.5
        };
    }
    0.5 + sucn.ratio.atan() / PI
}

/// Wilson score interval for `successes / trials`.
pub fn wilson_interval(successes: usize, trials: usize, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    ((center - half).max(0.0), (center + half).min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AccuracyEstimate {
    pub accuracy: f64,
    pub correct: usize,
    pub total: usize,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl AccuracyEstimate {
    pub fn from_counts(correct: usize, total: usize) -> Self {
        let (ci_low, ci_high) = wilson_interval(correct, total, 1.959_963_984_540_054);
        Self {
            accuracy: correct as f64 / total.max(1) as f64,
            correct,
            total,
            ci_low,
            ci_high,
        }
    }

    /// Binomial standard error `sqrt(p(1−p)/n)` at the observed rate.
    pub fn std_error(&self) -> f64 {
        let p = self.accuracy;
        (p * (1.0 - p) / self.total.max(1) as f64).sqrt()
    }
}

/// Accuracy of `clf` on `n_test` fresh points of the ensemble.
pub fn empirical_accuracy(
    clf: &Classifier,
    ens: &Ensemble,
    n_test: usize,
    stream: &mut Stream,
) -> Result<AccuracyEstimate> {
    if n_test == 0 {
        return Err(Error::InvalidParams("n_test must be >= 1".into()));
    }
    let batch = sample_batch(ens, n_test, stream);
    let correct = clf.correct(clf.features(&batch), &batch.labels)?;
    Ok(AccuracyEstimate::from_counts(
        correct.iter().filter(|&&b| b).count(),
        n_test,
    ))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseStability {
    pub mc_mean: f64,
    pub mc_std_error: f64,
    /// `sqrt(2/π)·w`.
    pub exact: f64,
    /// `(2/π)^{3/2}·arcsin(w)`.
    pub arcsin_approx: f64,
}

/// Monte Carlo estimate of `E[sgn(g₁)·g₂]` for unit Gaussians with
/// correlation `w`, alongside the exact value and the arcsine approximation.
pub fn noise_stability_probe(w: f64, samples: usize, stream: &mut Stream) -> Result<NoiseStability> {
    if !(-1.0..=1.0).contains(&w) {
        return Err(Error::DomainError(format!("|w| <= 1 required, got {w}")));
    }
    if samples < 2 {
        return Err(Error::InvalidParams("need at least two samples".into()));
    }
    let c = (1.0 - w * w).sqrt();
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    for _ in 0..samples {
        let g1 = stream.normal();
        let h = stream.normal();
        let v = crate::ensemble::sgn(g1) * (w * g1 + c * h);
        sum += v;
        sum_sq += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = (sum_sq - n * mean * mean) / (n - 1.0);
    let k = (2.0 / PI).sqrt();
    Ok(NoiseStability {
        mc_mean: mean,
        mc_std_error: (var.max(0.0) / n).sqrt(),
        exact: k * w,
        arcsin_approx: (2.0 / PI).powf(1.5) * w.asin(),
    })
}

/// Predicted clean-label survival order `μ_n = a·n/s`.
pub fn predicted_clean_survival(levels: &Levels) -> f64 {
    levels.mu
}

/// Right side of the contamination lower bound `μ_n²·n^{r−1} + n^{1−p}`
/// (without its unspecified constant).
pub fn contamination_lower_bound_sq(levels: &Levels, n: usize, p: f64, r: f64) -> f64 {
    let nf = n as f64;
    levels.mu * levels.mu * nf.powf(r - 1.0) + nf.powf(1.0 - p)
}

/// Heuristic clean-label `su/cn` scaling `μ / (μ·sqrt(s/n) + sqrt(n/d))`.
pub fn heuristic_clean_ratio(levels: &Levels, n: usize) -> f64 {
    let nf = n as f64;
    levels.mu / (levels.mu * (levels.s as f64 / nf).sqrt() + (nf / levels.d as f64).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interpolator::{FeatureSpace, Method};
    use ndarray::Array1;

    fn levels(d: usize, s: usize, lf: f64, lu: f64) -> Levels {
        Levels {
            d,
            s,
            a: 0.5,
            lambda_f: lf,
            lambda_u: lu,
            mu: 1.0,
        }
    }

    fn model(c: Vec<f64>) -> LinearModel {
        LinearModel::new(Array1::from(c), FeatureSpace::Strong, Method::Mni)
    }

    #[test]
    fn survival_examples() {
        let l = levels(4, 2, 4.0, 1.0);
        assert_eq!(survival(&model(vec![1.0, 0.0, 0.0, 0.0]), &l, 0).unwrap(), 2.0);
        assert_eq!(survival(&model(vec![0.0, 1.0, 0.0, 0.0]), &l, 0).unwrap(), 0.0);
        assert!(matches!(
            survival(&model(vec![0.0; 4]), &l, 4),
            Err(Error::IndexOutOfRange { .. })
        ));
        assert!(survival(&model(vec![0.0; 3]), &l, 0).is_err());
    }

    #[test]
    fn survival_matches_brute_force_sum() {
        let mut s = Stream::new(4);
        let l = levels(12, 3, 7.0, 0.3);
        let f: Vec<f64> = (0..12).map(|_| s.normal()).collect();
        let lam = l.eigenvalues();
        for axis in [0, 2, 3, 11] {
            let mut e = vec![0.0; 12];
            e[axis] = 1.0;
            let brute = survival_along(&f, &lam, &e);
            assert_eq!(survival(&model(f.clone()), &l, axis).unwrap(), brute);
        }
    }

    #[test]
    fn contamination_examples() {
        let l = levels(4, 2, 4.0, 1.0);
        let c = contamination(&model(vec![1.0, 0.0, 0.0, 0.0]), &l, 0).unwrap();
        assert_eq!(c.cn, 0.0);
        assert_eq!(c.ratio, f64::INFINITY);
        let c = contamination(&model(vec![1.0, 1.0, 0.0, 0.0]), &l, 0).unwrap();
        assert_eq!((c.su, c.cn), (2.0, 2.0));
        assert!((closed_form_accuracy(&c) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn inconsistent_split_is_rejected() {
        assert!(matches!(
            SuCn::from_parts(2.0, 3.0),
            Err(Error::NumericalInconsistency { .. })
        ));
        let tiny = SuCn::from_parts(2.0, 4.0 * (1.0 - 1e-14)).unwrap();
        assert_eq!(tiny.cn, 0.0);
    }

    #[test]
    fn closed_form_limits() {
        let at = |su: f64, tv: f64| closed_form_accuracy(&SuCn::from_parts(su, tv).unwrap());
        assert_eq!(at(0.0, 1.0), 0.5);
        assert!((at(1.0, 2.0) - 0.75).abs() < 1e-15);
        assert_eq!(at(1.0, 1.0), 1.0);
        assert_eq!(at(-1.0, 1.0), 0.0);
        assert_eq!(at(0.0, 0.0), 0.5);
        assert!(at(1e8, 1e16 + 1.0) > 1.0 - 1e-8);
    }

    #[test]
    fn conservation_and_scale_equivariance() {
        let mut s = Stream::new(9);
        let l = levels(30, 5, 3.0, 0.4);
        for _ in 0..50 {
            let f = model((0..30).map(|_| s.normal()).collect());
            let c = contamination(&f, &l, 0).unwrap();
            assert!(((c.su * c.su + c.cn * c.cn) - c.total_var).abs() <= 1e-10 * c.total_var);
            for k in [0.1, 3.0] {
                let ck = contamination(&f.scaled(k), &l, 0).unwrap();
                assert!((ck.su - k * c.su).abs() <= 1e-12 * ck.su.abs().max(1.0));
                assert!((ck.cn - k * c.cn).abs() <= 1e-12 * ck.cn.max(1.0));
                assert!((closed_form_accuracy(&ck) - closed_form_accuracy(&c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn wilson_interval_brackets_rate() {
        let (lo, hi) = wilson_interval(50, 100, 1.96);
        assert!(lo < 0.5 && hi > 0.5 && (0.5 - lo - (hi - 0.5)).abs() < 1e-12);
        let (lo, hi) = wilson_interval(100, 100, 1.96);
        assert!(lo > 0.95 && hi > 1.0 - 1e-12 && hi <= 1.0);
    }

    #[test]
    fn noise_stability_endpoints() {
        let z = noise_stability_probe(0.0, 1000, &mut Stream::new(1)).unwrap();
        assert_eq!((z.exact, z.arcsin_approx), (0.0, 0.0));
        let one = noise_stability_probe(1.0, 1000, &mut Stream::new(1)).unwrap();
        assert!((one.exact - 0.797_884_560_802_865_4).abs() < 1e-15);
        assert!((one.arcsin_approx - one.exact).abs() < 1e-15);
        assert!(noise_stability_probe(1.5, 10, &mut Stream::new(1)).is_err());
    }

    #[test]
    fn noise_stability_matches_stein_identity() {
        let r = noise_stability_probe(0.3, 1_000_000, &mut Stream::new(12)).unwrap();
        // sqrt(2/pi) * 0.3 from a 30-digit evaluation
        assert!((r.exact - 0.239_365_368_240_859_6).abs() < 1e-15);
        assert!((r.mc_mean - r.exact).abs() < 4.0 * r.mc_std_error);
    }
}
