use crate::ensemble::{ClassScaling, Exponents, Mode, W2SConfig};
use crate::error::{Error, Result};
use crate::pipeline::Baselines;
use crate::regimes::{Axis, BandConstants, Param, RegimeInputs, SweepGrid};
use serde::{Deserialize, Serialize};

/// Base seed used when neither the config nor the command line sets one.
pub const DEFAULT_SEED: u64 = 20_250_101;

/// A complete experiment description. Every field defaults to the
/// replication protocol (n = 50, five u values in [1, 1.3], 8 weak trials ×
/// 16 student trials, 100 test points), so `{}` is a valid config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub n: usize,
    pub strong: Exponents,
    pub weak: Exponents,
    pub u_grid: Vec<f64>,
    pub mode: Mode,
    pub k: usize,
    /// Class-count exponent; when set, `k = c_k·⌊n^t⌋` overrides `k`.
    pub t: Option<f64>,
    pub c_k: Option<usize>,
    pub trials_weak: usize,
    pub trials_wts: usize,
    pub n_test: usize,
    pub seed: u64,
    pub parallelism: usize,
    pub baselines: Baselines,
    pub soft_pseudolabels: bool,
    pub regimes: RegimesSpec,
    pub tails: TailsSpec,
    pub diagnose: DiagnoseSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            n: 50,
            strong: Exponents::new(2.0, 0.6, 0.6),
            weak: Exponents::new(1.4, 0.9, 0.5),
            u_grid: vec![1.0, 1.075, 1.15, 1.225, 1.3],
            mode: Mode::Binary,
            k: 1,
            t: None,
            c_k: None,
            trials_weak: 8,
            trials_wts: 16,
            n_test: 100,
            seed: DEFAULT_SEED,
            parallelism: 1,
            baselines: Baselines::default(),
            soft_pseudolabels: false,
            regimes: RegimesSpec::default(),
            tails: TailsSpec::default(),
            diagnose: DiagnoseSpec::default(),
        }
    }
}

/// Fixed parameters and the two swept axes of a phase diagram.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RegimesSpec {
    pub strong: Exponents,
    pub weak: Exponents,
    pub u: f64,
    pub t: f64,
    pub x: Axis,
    pub y: Axis,
    pub band: BandConstants,
}

impl Default for RegimesSpec {
    fn default() -> Self {
        Self {
            strong: Exponents::new(3.0, 0.9, 0.8),
            weak: Exponents::new(1.4, 0.9, 0.4),
            u: 1.2,
            t: 0.0,
            x: Axis {
                param: Param::P,
                start: 1.0,
                stop: 4.0,
                step: 0.02,
            },
            y: Axis {
                param: Param::U,
                start: 1.0,
                stop: 2.0,
                step: 0.01,
            },
            band: BandConstants::default(),
        }
    }
}

impl RegimesSpec {
    pub fn fixed(&self) -> RegimeInputs {
        RegimeInputs {
            strong: self.strong,
            weak: self.weak,
            u: self.u,
            t: self.t,
        }
    }

    pub fn grid(&self) -> SweepGrid {
        SweepGrid {
            x: self.x,
            y: self.y,
        }
    }
}

/// Cartesian grid of tail-bound evaluations; `t = t_N(δ₀)` on every row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TailsSpec {
    #[serde(rename = "N")]
    pub n: Vec<u64>,
    pub rho0: Vec<f64>,
    pub delta0: Vec<f64>,
    pub samples: usize,
}

impl Default for TailsSpec {
    fn default() -> Self {
        Self {
            n: vec![100, 1000, 10_000],
            rho0: vec![0.3, 0.5, 0.7],
            delta0: vec![0.0, 0.25, 0.5],
            samples: 100_000,
        }
    }
}

/// Clean-label survival/contamination traces over a range of `n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSpec {
    pub n_grid: Vec<usize>,
    pub trials: usize,
    pub n_test: usize,
}

impl Default for DiagnoseSpec {
    fn default() -> Self {
        Self {
            n_grid: vec![50, 100, 200, 400],
            trials: 32,
            n_test: 200,
        }
    }
}

impl ExperimentConfig {
    /// Parses and validates a JSON document.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        let problems = cfg.problems();
        if problems.is_empty() {
            Ok(cfg)
        } else {
            Err(Error::ConfigInvalid(problems))
        }
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Protocol-level invariants (model-level checks happen per command).
    pub fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.trials_weak < 1 || self.trials_wts < 1 || self.n_test < 1 {
            out.push("trials_weak, trials_wts and n_test must be >= 1".into());
        }
        if self.parallelism < 1 {
            out.push("parallelism must be >= 1".into());
        }
        if self.u_grid.is_empty() {
            out.push("u_grid must not be empty".into());
        }
        if self.u_grid.iter().any(|u| !u.is_finite()) {
            out.push("u_grid values must be finite".into());
        }
        if self.u_grid.windows(2).any(|w| !(w[0] < w[1])) {
            out.push("u_grid must be strictly increasing".into());
        }
        if let Some(t) = self.t {
            if !t.is_finite() {
                out.push("t must be finite".into());
            }
        }
        if self.c_k == Some(0) {
            out.push("c_k must be >= 1".into());
        }
        if self.tails.samples < 1000 {
            out.push("tails.samples must be >= 1000".into());
        }
        if self.diagnose.trials < 1 || self.diagnose.n_test < 1 {
            out.push("diagnose.trials and diagnose.n_test must be >= 1".into());
        }
        if self.diagnose.n_grid.iter().any(|&n| n < 2) {
            out.push("diagnose.n_grid values must be >= 2".into());
        }
        out
    }

    /// The model configuration at one point of the u grid.
    pub fn w2s(&self, u: f64) -> W2SConfig {
        W2SConfig {
            n: self.n,
            strong: self.strong,
            weak: self.weak,
            u,
            mode: self.mode,
            k: if self.mode == Mode::Binary { 1 } else { self.k },
            class_scaling: self.t.map(|t| ClassScaling {
                t,
                c_k: self.c_k.unwrap_or(1),
            }),
            soft_pseudolabels: self.soft_pseudolabels,
        }
    }
}
