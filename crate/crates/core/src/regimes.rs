//! Closed-form phase classification for clean-label and weak-to-strong MNI.

use crate::ensemble::Exponents;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

const EQ_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeInputs {
    pub strong: Exponents,
    pub weak: Exponents,
    pub u: f64,
    /// Class-count exponent; 0 for binary.
    #[serde(default)]
    pub t: f64,
}

impl RegimeInputs {
    pub fn new(strong: Exponents, weak: Exponents, u: f64) -> Self {
        Self {
            strong,
            weak,
            u,
            t: 0.0,
        }
    }
}

/// `p + 1 − 2(q + r)`.
pub fn tau(e: &Exponents) -> f64 {
    e.p + 1.0 - 2.0 * e.qr()
}

/// `p + 1 − (q + r + q_w + r_w)`.
pub fn tau_w2s(strong: &Exponents, weak: &Exponents) -> f64 {
    strong.p + 1.0 - (strong.qr() + weak.qr())
}

/// `q_w + r_w − min{1 − r, τ_strong}`.
pub fn threshold_u(strong: &Exponents, weak: &Exponents) -> f64 {
    weak.qr() - (1.0 - strong.r).min(tau(strong))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CleanPhase {
    Success,
    Failure,
    Boundary,
    OutOfTheory,
}

/// Clean-label MNI with `k = ⌊n^t⌋` classes: success iff
/// `t < min{1 − r, τ_strong}`. Requires `q + r > 1` and a valid ensemble.
pub fn classify_clean(strong: &Exponents, t: f64) -> CleanPhase {
    if !strong.domain_violations("strong").is_empty() || !(strong.qr() > 1.0) {
        return CleanPhase::OutOfTheory;
    }
    let edge = (1.0 - strong.r).min(tau(strong));
    if (t - edge).abs() <= EQ_TOL {
        CleanPhase::Boundary
    } else if t < edge {
        CleanPhase::Success
    } else {
        CleanPhase::Failure
    }
}

/// Exponent of the arctan argument in the binary clean-label error.
pub fn clean_binary_error_exponent(strong: &Exponents) -> Result<f64> {
    if !(strong.qr() > 1.0) {
        return Err(Error::HypothesisViolated(format!(
            "q + r > 1 (q + r = {})",
            strong.qr()
        )));
    }
    Ok(tau(strong))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    W2sSuccess,
    W2sFailure,
    Boundary,
    OutOfTheory,
}

impl Phase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Phase::W2sSuccess => "W2S_SUCCESS",
            Phase::W2sFailure => "W2S_FAILURE",
            Phase::Boundary => "BOUNDARY",
            Phase::OutOfTheory => "OUT_OF_THEORY",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Phase::W2sSuccess, Phase::W2sFailure, Phase::Boundary, Phase::OutOfTheory]
            .into_iter()
            .find(|p| p.as_str() == s)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Desiderata {
    /// `τ_weak < 0`: the weak model tends to random guessing.
    pub weak_fails: bool,
    /// The strong model can represent the weak one (always, in the subset ensemble).
    pub capability: bool,
    /// `q + r > u`: PCA cannot recover the spike from `n + m` points.
    pub pca_fails: bool,
    /// `τ_strong < 0`: the strong model fails with `n` clean labels.
    pub strong_fails_n_clean: bool,
    /// `τ_w2s > 0`: some `u` achieves weak-to-strong generalization.
    pub nonvacuous: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeVerdict {
    pub phase: Phase,
    pub tau_strong: f64,
    pub tau_weak: f64,
    pub tau_w2s: f64,
    pub threshold_u: f64,
    pub flags: Desiderata,
    pub violated: Vec<String>,
}

const U_CAP: &str = "u < (p+1+q+r-(q_w+r_w))/2";

/// Gates of the weak-to-strong regime analysis, in a fixed order.
pub fn hypothesis_violations(inp: &RegimeInputs) -> Vec<String> {
    let (st, wk, u) = (inp.strong, inp.weak, inp.u);
    let mut v = Vec::new();
    v.extend(st.domain_violations("strong"));
    v.extend(wk.domain_violations("weak"));
    if !(st.qr() > u) {
        v.push("q+r > u".to_string());
    }
    if !(wk.qr() > 1.0) {
        v.push("q_w+r_w > 1".to_string());
    }
    if !(u < (st.p + 1.0 + st.qr() - wk.qr()) / 2.0) {
        v.push(U_CAP.to_string());
    }
    v
}

/// The cap on `u` only limits how many weak labels the success proof can
/// absorb. Below the threshold, failure is still predicted past the cap.
pub fn classify_w2s(inp: &RegimeInputs) -> RegimeVerdict {
    let (st, wk) = (&inp.strong, &inp.weak);
    let tau_strong = tau(st);
    let tau_weak = tau(wk);
    let tw = tau_w2s(st, wk);
    let thr = threshold_u(st, wk);
    let violated = hypothesis_violations(inp);
    let only_cap = violated.len() == 1 && violated[0] == U_CAP;
    let phase = if violated.is_empty() {
        if (inp.u - thr).abs() <= EQ_TOL {
            Phase::Boundary
        } else if inp.u > thr {
            Phase::W2sSuccess
        } else {
            Phase::W2sFailure
        }
    } else if only_cap && inp.u < thr - EQ_TOL {
        Phase::W2sFailure
    } else {
        Phase::OutOfTheory
    };
    RegimeVerdict {
        phase,
        tau_strong,
        tau_weak,
        tau_w2s: tw,
        threshold_u: thr,
        flags: Desiderata {
            weak_fails: tau_weak < 0.0,
            capability: true,
            pca_fails: st.qr() > inp.u,
            strong_fails_n_clean: tau_strong < 0.0,
            nonvacuous: tw > 0.0,
        },
        violated,
    }
}

/// Whether weak-to-strong success implies clean-`m` success
/// (`u > 2(q + r) − p`). `None` when the inputs fail a gate.
pub fn sanity_clean_vs_w2s(inp: &RegimeInputs) -> Option<bool> {
    if !hypothesis_violations(inp).is_empty() {
        return None;
    }
    let v = classify_w2s(inp);
    Some(v.phase != Phase::W2sSuccess || inp.u > 2.0 * inp.strong.qr() - inp.strong.p)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Param {
    P,
    Q,
    R,
    PWeak,
    QWeak,
    RWeak,
    U,
    T,
}

impl Param {
    pub fn name(&self) -> &'static str {
        match self {
            Param::P => "p",
            Param::Q => "q",
            Param::R => "r",
            Param::PWeak => "p_weak",
            Param::QWeak => "q_weak",
            Param::RWeak => "r_weak",
            Param::U => "u",
            Param::T => "t",
        }
    }

    pub fn set(&self, inp: &mut RegimeInputs, v: f64) {
        match self {
            Param::P => inp.strong.p = v,
            Param::Q => inp.strong.q = v,
            Param::R => inp.strong.r = v,
            Param::PWeak => inp.weak.p = v,
            Param::QWeak => inp.weak.q = v,
            Param::RWeak => inp.weak.r = v,
            Param::U => inp.u = v,
            Param::T => inp.t = v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Axis {
    pub param: Param,
    pub start: f64,
    pub stop: f64,
    pub step: f64,
}

impl Axis {
    /// Grid points `start + i·step` up to `stop` inclusive.
    pub fn points(&self) -> Result<Vec<f64>> {
        let Axis { start, stop, step, .. } = *self;
        if !(start.is_finite() && stop.is_finite() && step.is_finite()) || step <= 0.0 || stop < start {
            return Err(Error::EmptyGrid(format!(
                "axis {} needs finite start <= stop and step > 0",
                self.param.name()
            )));
        }
        let count = ((stop - start) / step + 1e-9).floor() + 1.0;
        if count > MAX_CELLS as f64 {
            return Err(Error::EmptyGrid(format!("axis {} has too many points", self.param.name())));
        }
        Ok((0..count as usize).map(|i| start + i as f64 * step).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepGrid {
    pub x: Axis,
    pub y: Axis,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepCell {
    pub x: f64,
    pub y: f64,
    pub verdict: RegimeVerdict,
}

pub const MAX_CELLS: usize = 1 << 22;

/// Row-major raster (y outer, x inner) of verdicts.
pub fn sweep(grid: &SweepGrid, fixed: &RegimeInputs) -> Result<Vec<SweepCell>> {
    if grid.x.param == grid.y.param {
        return Err(Error::EmptyGrid("axes must vary different parameters".into()));
    }
    let xs = grid.x.points()?;
    let ys = grid.y.points()?;
    if xs.len().saturating_mul(ys.len()) > MAX_CELLS {
        return Err(Error::EmptyGrid(format!("sweep has more than {MAX_CELLS} cells")));
    }
    let mut out = Vec::with_capacity(xs.len() * ys.len());
    for &y in &ys {
        for &x in &xs {
            let mut inp = *fixed;
            grid.x.param.set(&mut inp, x);
            grid.y.param.set(&mut inp, y);
            out.push(SweepCell {
                x,
                y,
                verdict: classify_w2s(&inp),
            });
        }
    }
    Ok(out)
}

/// Constants of the `1 − Θ(1/k)` multiclass failure band.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BandConstants {
    pub c_lo: f64,
    pub c_hi: f64,
}

impl Default for BandConstants {
    fn default() -> Self {
        Self { c_lo: 0.2, c_hi: 5.0 }
    }
}

/// Predicted error band `[1 − c_hi/k, 1 − c_lo/k]`, clipped to `[0, 1]`.
pub fn multiclass_failure_rate_band(k: usize, c: BandConstants) -> Result<(f64, f64)> {
    if k < 2 {
        return Err(Error::InvalidParams(format!("k >= 2 required, got {k}")));
    }
    let kf = k as f64;
    Ok((
        (1.0 - c.c_hi / kf).clamp(0.0, 1.0),
        (1.0 - c.c_lo / kf).clamp(0.0, 1.0),
    ))
}
