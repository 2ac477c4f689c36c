//! Lower tail of the maximum of equicorrelated Gaussians.
//!
//! For `gᵢ = √ρ·x + √(1−ρ)·hᵢ` with independent standard `x, hᵢ`,
//! `P(max gᵢ ≤ t) = ∫ φ(s)·Φ((t − √ρ·s)/√(1−ρ))^N ds`.

use crate::error::{Error, Result};
use crate::normal;
use crate::rng::Stream;
use rayon::prelude::*;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailParams {
    pub n: u64,
    pub rho0: f64,
    pub delta0: f64,
}

impl TailParams {
    pub fn new(n: u64, rho0: f64, delta0: f64) -> Result<Self> {
        if !(rho0 > 0.0 && rho0 < 1.0) {
            return Err(Error::DomainError(format!("rho0 must lie in (0, 1), got {rho0}")));
        }
        if !(0.0..1.0).contains(&delta0) {
            return Err(Error::DomainError(format!("delta0 must lie in [0, 1), got {delta0}")));
        }
        if n < 1 {
            return Err(Error::DomainError("N >= 1 required".into()));
        }
        Ok(Self { n, rho0, delta0 })
    }

    /// `δ₀·√(2(1−ρ₀)·ln N)`.
    pub fn t_n(&self) -> f64 {
        self.delta0 * (2.0 * (1.0 - self.rho0) * (self.n as f64).ln()).sqrt()
    }

    /// `√(ρ₀/(1−ρ₀))`.
    pub fn c(&self) -> f64 {
        (self.rho0 / (1.0 - self.rho0)).sqrt()
    }

    /// `(1−δ₀)²(1−1/ρ₀)`.
    pub fn exp_n(&self) -> f64 {
        (1.0 - self.delta0).powi(2) * (1.0 - 1.0 / self.rho0)
    }

    /// `(1 − ρ₀(2−δ₀) − δ₀)/(2ρ₀)`.
    pub fn exp_log(&self) -> f64 {
        (1.0 - self.rho0 * (2.0 - self.delta0) - self.delta0) / (2.0 * self.rho0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TailBound {
    pub raw: f64,
    /// `min(raw, 1)`.
    pub clipped: f64,
}

/// `C·N^{exp_N}·(ln N)^{exp_log}`, evaluated in log space.
pub fn tail_bound(params: &TailParams) -> Result<TailBound> {
    let p = TailParams::new(params.n, params.rho0, params.delta0)?;
    if p.n < 3 {
        return Err(Error::DomainError(format!("N >= 3 required, got {}", p.n)));
    }
    let ln_n = (p.n as f64).ln();
    let raw = (p.c().ln() + p.exp_n() * ln_n + p.exp_log() * ln_n.ln()).exp();
    Ok(TailBound {
        raw,
        clipped: raw.min(1.0),
    })
}

/// `Φ(z)^N` without forming `Φ(z)` first.
fn cdf_pow(z: f64, n: f64) -> f64 {
    (n * normal::log_cdf(z)).exp()
}

// Gauss–Kronrod 7/15 nodes and weights on [-1, 1].
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for j in 0..7 {
        let dx = h * XGK[j];
        let pair = f(c - dx) + f(c + dx);
        kron += WGK[j] * pair;
        if j % 2 == 1 {
            gauss += WG[j / 2] * pair;
        }
    }
    (kron * h, ((kron - gauss) * h).abs())
}

const MAX_INTERVALS: usize = 4000;

/// Globally adaptive G7K15 on `[a, b]`, stopping once the summed error
/// estimate is within `max(abs_tol, rel_tol·|I|)`.
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<f64> {
    let mut parts = vec![(a, b, gk15(&f, a, b))];
    loop {
        let total: f64 = parts.iter().map(|p| p.2 .0).sum();
        let err: f64 = parts.iter().map(|p| p.2 .1).sum();
        if err <= abs_tol.max(rel_tol * total.abs()) {
            return Ok(total);
        }
        if parts.len() >= MAX_INTERVALS {
            return Err(Error::QuadratureNonconvergence {
                estimate: total,
                error: err,
            });
        }
        let worst = parts
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .map(|(i, _)| i)
            .unwrap_or(0);
        let (lo, hi, _) = parts.swap_remove(worst);
        let mid = 0.5 * (lo + hi);
        parts.push((lo, mid, gk15(&f, lo, mid)));
        parts.push((mid, hi, gk15(&f, mid, hi)));
    }
}

/// Truncation of the outer Gaussian integral; the neglected mass is below `1e-32`.
pub const S_RANGE: f64 = 12.0;

/// `P(max_{i ≤ N} gᵢ ≤ t)` by quadrature of the integral representation.
/// The error target is `1e-10` absolute and `1e-10` relative, so tiny
/// probabilities keep their leading digits.
pub fn exact_tail_quadrature(n: u64, rho0: f64, t: f64) -> Result<f64> {
    if n < 1 {
        return Err(Error::DomainError("N >= 1 required".into()));
    }
    if !(0.0..1.0).contains(&rho0) || !t.is_finite() {
        return Err(Error::DomainError(format!("need rho0 in [0, 1) and finite t, got {rho0}, {t}")));
    }
    let nf = n as f64;
    let (sr, sc) = (rho0.sqrt(), (1.0 - rho0).sqrt());
    let f = |s: f64| normal::pdf(s) * cdf_pow((t - sr * s) / sc, nf);
    integrate(f, -S_RANGE, S_RANGE, 1e-300, 1e-10).map(|v| v.min(1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum McMethod {
    /// Average of `Φ((t − √ρ·x)/√(1−ρ))^N` over draws of the shared factor.
    #[default]
    Conditional,
    /// Indicator that all `N` simulated coordinates stay below `t`.
    Naive,
}

/// Independent substreams; fixed so the estimate does not depend on the thread count.
const MC_CHUNKS: usize = 64;

/// Monte Carlo estimate of `P(max gᵢ ≤ t)`.
pub fn mc_tail_estimate(
    n: u64,
    rho0: f64,
    t: f64,
    samples: usize,
    stream: &Stream,
    method: McMethod,
) -> Result<McEstimate> {
    if samples < 1000 {
        return Err(Error::InvalidParams(format!("samples >= 1000 required, got {samples}")));
    }
    if n < 1 || !(0.0..1.0).contains(&rho0) || !t.is_finite() {
        return Err(Error::DomainError(format!("bad tail inputs N={n}, rho0={rho0}, t={t}")));
    }
    let nf = n as f64;
    let (sr, sc) = (rho0.sqrt(), (1.0 - rho0).sqrt());
    let sums: Vec<(f64, f64)> = (0..MC_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut st = stream.substream(&[c as u64]);
            let count = samples / MC_CHUNKS + usize::from(c < samples % MC_CHUNKS);
            let (mut s1, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let x = st.normal();
                let v = match method {
                    McMethod::Conditional => cdf_pow((t - sr * x) / sc, nf),
                    McMethod::Naive => {
                        let mut ok = 1.0;
                        for _ in 0..n {
                            if sr * x + sc * st.normal() > t {
                                ok = 0.0;
                                break;
                            }
                        }
                        ok
                    }
                };
                s1 += v;
                s2 += v * v;
            }
            (s1, s2)
        })
        .collect();
    let (s1, s2) = sums.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let m = samples as f64;
    let mean = s1 / m;
    let var = ((s2 - m * mean * mean) / (m - 1.0)).max(0.0);
    Ok(McEstimate {
        estimate: mean,
        std_error: (var / m).sqrt(),
    })
}
