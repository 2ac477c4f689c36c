//! Bi-level spiked covariance ensembles and the weak/strong subset ensemble.
//!
//! Everything is expressed in the distinguished eigenbasis: strong features
//! are independent with variance `λ_F` on the first `s` coordinates and `λ_U`
//! on the remaining `d − s`, and the true label direction is the first axis.
//! Weak features are rescaled copies of a subset of the strong coordinates.
//!
//! Indices are zero-based throughout, so "coordinate 1" of the math is
//! column 0 here.

use crate::error::{Error, Result};
use crate::rng::Stream;
use ndarray::{s, Array2, ArrayView2};
use serde::{Deserialize, Serialize};

/// Exponents `(p, q, r)` of a bi-level ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exponents {
    pub p: f64,
    pub q: f64,
    pub r: f64,
}

impl Exponents {
    pub const fn new(p: f64, q: f64, r: f64) -> Self {
        Self { p, q, r }
    }

    /// `q + r`, the exponent that decides whether the Gram matrix is flat.
    pub fn qr(&self) -> f64 {
        self.q + self.r
    }

    /// Violations of `p > 1`, `0 ≤ r < 1`, `0 < q ≤ p − r`.
    pub fn domain_violations(&self, label: &str) -> Vec<String> {
        let Exponents { p, q, r } = *self;
        let mut out = Vec::new();
        if !(p.is_finite() && q.is_finite() && r.is_finite()) {
            out.push(format!("{label}: exponents must be finite"));
            return out;
        }
        if p <= 1.0 {
            out.push(format!("{label}: p > 1 (p = {p})"));
        }
        if !(0.0..1.0).contains(&r) {
            out.push(format!("{label}: 0 <= r < 1 (r = {r})"));
        }
        if q <= 0.0 {
            out.push(format!("{label}: 0 < q (q = {q})"));
        }
        // Closed on the right so that q = p − r (a = 1/s) stays usable.
        if q > p - r + 1e-12 {
            out.push(format!("{label}: q <= p - r (q = {q}, p - r = {})", p - r));
        }
        out
    }
}

/// `⌊x⌋`, treating values within a few ulps below an integer as that integer
/// so that e.g. `100^1.5` floors to 1000 rather than 999.
pub fn floor_pow(n: usize, e: f64) -> usize {
    let x = (n as f64).powf(e);
    let rounded = x.round();
    if (rounded - x).abs() <= 1e-9 * rounded.max(1.0) {
        rounded as usize
    } else {
        x.floor() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLevelParams {
    pub n: usize,
    pub exponents: Exponents,
}

impl BiLevelParams {
    pub fn new(n: usize, p: f64, q: f64, r: f64) -> Self {
        Self {
            n,
            exponents: Exponents::new(p, q, r),
        }
    }
}

/// Derived integer and real scales of a bi-level ensemble.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Levels {
    pub d: usize,
    pub s: usize,
    pub a: f64,
    pub lambda_f: f64,
    pub lambda_u: f64,
    /// Bi-level prefactor `a·count/s`.
    pub mu: f64,
}

impl Levels {
    #[inline]
    pub fn eigenvalue(&self, j: usize) -> f64 {
        if j < self.s {
            self.lambda_f
        } else {
            self.lambda_u
        }
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        (0..self.d).map(|j| self.eigenvalue(j)).collect()
    }

    pub fn trace(&self) -> f64 {
        self.s as f64 * self.lambda_f + (self.d - self.s) as f64 * self.lambda_u
    }
}

/// Computes `d = ⌊n^p⌋`, `s = ⌊n^r⌋`, `a = n^{-q}` and the two eigenvalue
/// levels. `mu` uses `count_override` (e.g. `m` for the weakly labeled set)
/// when given.
pub fn derive_levels(params: &BiLevelParams, count_override: Option<usize>) -> Result<Levels> {
    let v = params.exponents.domain_violations("bi-level");
    if !v.is_empty() {
        return Err(Error::InvalidParams(v.join("; ")));
    }
    if params.n < 2 {
        return Err(Error::InvalidParams(format!("n >= 2 (n = {})", params.n)));
    }
    if count_override == Some(0) {
        return Err(Error::InvalidParams("count override must be >= 1".into()));
    }
    levels_unchecked(params.n, &params.exponents, count_override)
}

/// Same as [`derive_levels`] without the exponent-domain check; used for
/// boundary exploration. Still rejects ensembles that cannot be built.
pub fn levels_unchecked(n: usize, e: &Exponents, count_override: Option<usize>) -> Result<Levels> {
    let d = floor_pow(n, e.p);
    let s = floor_pow(n, e.r).max(1);
    if d <= s {
        return Err(Error::DegenerateEnsemble { d, s });
    }
    let a = (n as f64).powf(-e.q);
    if !(a > 0.0 && a < 1.0) {
        return Err(Error::InvalidParams(format!("a = n^-q must lie in (0,1), got {a}")));
    }
    let (df, sf) = (d as f64, s as f64);
    let lambda_f = a * df / sf;
    let lambda_u = (1.0 - a) * df / (df - sf);
    let count = count_override.unwrap_or(n) as f64;
    Ok(Levels {
        d,
        s,
        a,
        lambda_f,
        lambda_u,
        mu: a * count / sf,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Binary,
    Multilabel,
    Multiclass,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Binary => "binary",
            Mode::Multilabel => "multilabel",
            Mode::Multiclass => "multiclass",
        }
    }
}

/// `k = c_k·⌊n^t⌋`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScaling {
    pub t: f64,
    pub c_k: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct W2SConfig {
    pub n: usize,
    pub strong: Exponents,
    pub weak: Exponents,
    pub u: f64,
    pub mode: Mode,
    /// Heads (multilabel) or classes (multiclass); ignored for binary.
    pub k: usize,
    pub class_scaling: Option<ClassScaling>,
    pub soft_pseudolabels: bool,
}

impl W2SConfig {
    pub fn binary(n: usize, strong: Exponents, weak: Exponents, u: f64) -> Self {
        Self {
            n,
            strong,
            weak,
            u,
            mode: Mode::Binary,
            k: 1,
            class_scaling: None,
            soft_pseudolabels: false,
        }
    }

    pub fn with_u(&self, u: f64) -> Self {
        Self { u, ..self.clone() }
    }

    /// `m = ⌊n^u⌋`.
    pub fn m(&self) -> usize {
        floor_pow(self.n, self.u)
    }

    /// Number of label heads / classes.
    pub fn heads(&self) -> usize {
        match self.mode {
            Mode::Binary => 1,
            _ => match self.class_scaling {
                Some(cs) => cs.c_k * floor_pow(self.n, cs.t),
                None => self.k,
            },
        }
    }

    pub fn strong_params(&self) -> BiLevelParams {
        BiLevelParams {
            n: self.n,
            exponents: self.strong,
        }
    }

    pub fn weak_params(&self) -> BiLevelParams {
        BiLevelParams {
            n: self.n,
            exponents: self.weak,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ViolationKind {
    /// Bi-level exponent domain.
    Domain,
    /// A hypothesis of the weak-to-strong regime analysis.
    Hypothesis,
    /// The subset ensemble or head count cannot be built.
    Structure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub kind: ViolationKind,
    pub message: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

/// Every violated constraint, in a fixed order. Empty means valid.
pub fn validate_w2s(config: &W2SConfig) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |kind, message: String| out.push(Violation { kind, message });
    let (st, wk, u) = (config.strong, config.weak, config.u);

    for m in st.domain_violations("strong") {
        push(ViolationKind::Domain, m);
    }
    for m in wk.domain_violations("weak") {
        push(ViolationKind::Domain, m);
    }
    if config.n < 2 {
        push(ViolationKind::Domain, format!("n >= 2 (n = {})", config.n));
    }
    if !(st.qr() > u) {
        push(
            ViolationKind::Hypothesis,
            format!("q+r > u ({} <= {u})", st.qr()),
        );
    }
    if !(wk.qr() > 1.0) {
        push(
            ViolationKind::Hypothesis,
            format!("q_w+r_w > 1 ({} <= 1)", wk.qr()),
        );
    }
    let u_max = (st.p + 1.0 + st.qr() - wk.qr()) / 2.0;
    if !(u < u_max) {
        push(
            ViolationKind::Hypothesis,
            format!("u < (p+1+q+r-(q_w+r_w))/2 ({u} >= {u_max})"),
        );
    }

    if config.n >= 2 && st.p.is_finite() && wk.p.is_finite() && st.r.is_finite() && wk.r.is_finite()
    {
        let (d, s) = (floor_pow(config.n, st.p), floor_pow(config.n, st.r).max(1));
        let (dw, sw) = (floor_pow(config.n, wk.p), floor_pow(config.n, wk.r).max(1));
        if sw > s {
            push(
                ViolationKind::Structure,
                format!("s_weak <= s ({sw} > {s})"),
            );
        }
        if dw.saturating_sub(sw) > d.saturating_sub(s) {
            push(
                ViolationKind::Structure,
                format!("d_weak - s_weak <= d - s ({} > {})", dw.saturating_sub(sw), d.saturating_sub(s)),
            );
        }
        let k = config.heads();
        if k == 0 || k > sw {
            push(ViolationKind::Structure, format!("1 <= k <= s_weak (k = {k}, s_weak = {sw})"));
        }
    }
    if let (Mode::Multiclass | Mode::Multilabel, Some(cs)) = (config.mode, config.class_scaling) {
        if !(cs.t >= 0.0 && cs.t < st.r) || cs.c_k == 0 {
            push(
                ViolationKind::Structure,
                format!("k = c_k*floor(n^t) needs 0 <= t < r and c_k >= 1 (t = {}, c_k = {})", cs.t, cs.c_k),
            );
        }
    }
    if !(u > 1.0) {
        push(ViolationKind::Hypothesis, format!("u > 1 (u = {u})"));
    }
    if config.m() < 1 {
        push(ViolationKind::Structure, "m = floor(n^u) >= 1".into());
    }
    out
}

/// Coordinates shared between weak and strong features.
#[derive(Clone, Debug, PartialEq)]
pub struct SubsetLink {
    /// Strong indices of the weak favored features, `0..s_weak`.
    pub favored: Vec<usize>,
    /// Strong indices of the weak unfavored features, `s..s + d_weak - s_weak`.
    pub unfavored: Vec<usize>,
    pub scale_f: f64,
    pub scale_u: f64,
    pub strong_dim: usize,
}

impl SubsetLink {
    pub fn weak_dim(&self) -> usize {
        self.favored.len() + self.unfavored.len()
    }

    /// `(strong index, scale)` for weak coordinate `j`.
    #[inline]
    pub fn source(&self, j: usize) -> (usize, f64) {
        let sw = self.favored.len();
        if j < sw {
            (self.favored[j], self.scale_f)
        } else {
            (self.unfavored[j - sw], self.scale_u)
        }
    }
}

/// Canonical contiguous subset link between two level sets.
pub fn link_levels(strong: &Levels, weak: &Levels) -> Result<SubsetLink> {
    if weak.s > strong.s {
        return Err(Error::InvalidParams(format!(
            "s_weak = {} exceeds s = {}",
            weak.s, strong.s
        )));
    }
    let tw = weak.d - weak.s;
    if tw > strong.d - strong.s {
        return Err(Error::InvalidParams(format!(
            "d_weak - s_weak = {tw} exceeds d - s = {}",
            strong.d - strong.s
        )));
    }
    Ok(SubsetLink {
        favored: (0..weak.s).collect(),
        unfavored: (strong.s..strong.s + tw).collect(),
        scale_f: (weak.lambda_f / strong.lambda_f).sqrt(),
        scale_u: (weak.lambda_u / strong.lambda_u).sqrt(),
        strong_dim: strong.d,
    })
}

pub fn build_subset_link(config: &W2SConfig) -> Result<SubsetLink> {
    let strong = derive_levels(&config.strong_params(), None)?;
    let weak = derive_levels(&config.weak_params(), None)?;
    link_levels(&strong, &weak)
}

/// A configuration with its derived levels and link, ready for sampling.
#[derive(Clone, Debug)]
pub struct Ensemble {
    pub config: W2SConfig,
    pub strong: Levels,
    pub weak: Levels,
    pub link: SubsetLink,
}

impl Ensemble {
    /// Builds the ensemble. With `force`, exponent-domain violations are
    /// tolerated as long as the ensemble is constructible.
    pub fn new(config: &W2SConfig, force: bool) -> Result<Self> {
        let (strong, weak) = if force {
            (
                levels_unchecked(config.n, &config.strong, None)?,
                levels_unchecked(config.n, &config.weak, None)?,
            )
        } else {
            (
                derive_levels(&config.strong_params(), None)?,
                derive_levels(&config.weak_params(), None)?,
            )
        };
        let link = link_levels(&strong, &weak)?;
        let k = config.heads();
        if k == 0 || k > weak.s {
            return Err(Error::InvalidParams(format!(
                "need 1 <= k <= s_weak (k = {k}, s_weak = {})",
                weak.s
            )));
        }
        Ok(Self {
            config: config.clone(),
            strong,
            weak,
            link,
        })
    }

    pub fn heads(&self) -> usize {
        self.config.heads()
    }
}

#[inline]
pub fn sgn(x: f64) -> f64 {
    if x >= 0.0 {
        1.0
    } else {
        -1.0
    }
}

/// Index of the largest entry, lowest index on ties.
pub fn argmax(values: impl IntoIterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (i, v) in values.into_iter().enumerate() {
        if v > best_v {
            best = i;
            best_v = v;
        }
    }
    best
}

/// Ground-truth labels of a batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Labels {
    /// `count × k` signs of the first `k` latent coordinates (binary: k = 1).
    pub signs: Array2<f64>,
    /// Argmax class over the first `k` strong coordinates (multiclass only).
    pub classes: Option<Vec<usize>>,
}

impl Labels {
    fn from_strong(x: ArrayView2<f64>, k: usize, mode: Mode) -> Self {
        let signs = x.slice(s![.., ..k]).mapv(sgn);
        let classes = (mode == Mode::Multiclass)
            .then(|| x.rows().into_iter().map(|row| argmax(row.iter().take(k).copied())).collect());
        Self { signs, classes }
    }

    pub fn count(&self) -> usize {
        self.signs.nrows()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampleBatch {
    pub latent: Array2<f64>,
    pub strong_x: Array2<f64>,
    pub weak_x: Array2<f64>,
    pub labels: Labels,
}

impl SampleBatch {
    pub fn count(&self) -> usize {
        self.latent.nrows()
    }

    /// Little-endian bytes of every field, for determinism checks.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for m in [&self.latent, &self.strong_x, &self.weak_x, &self.labels.signs] {
            out.extend((m.nrows() as u64).to_le_bytes());
            out.extend((m.ncols() as u64).to_le_bytes());
            for v in m.iter() {
                out.extend(v.to_le_bytes());
            }
        }
        if let Some(c) = &self.labels.classes {
            for &v in c {
                out.extend((v as u64).to_le_bytes());
            }
        }
        out
    }
}

fn latent_matrix(count: usize, d: usize, stream: &mut Stream) -> Array2<f64> {
    let mut z = Array2::<f64>::zeros((count, d));
    stream.fill_normal(z.as_slice_mut().expect("standard layout"));
    z
}

fn scale_columns(z: &mut Array2<f64>, levels: &Levels) {
    let (sf, su) = (levels.lambda_f.sqrt(), levels.lambda_u.sqrt());
    for mut row in z.rows_mut() {
        let row = row.as_slice_mut().expect("standard layout");
        let (fav, unf) = row.split_at_mut(levels.s);
        fav.iter_mut().for_each(|v| *v *= sf);
        unf.iter_mut().for_each(|v| *v *= su);
    }
}

/// Weak features of a strong feature matrix.
pub fn weak_features(strong_x: ArrayView2<f64>, link: &SubsetLink) -> Array2<f64> {
    let dw = link.weak_dim();
    let mut w = Array2::<f64>::zeros((strong_x.nrows(), dw));
    for (mut wrow, srow) in w.rows_mut().into_iter().zip(strong_x.rows()) {
        for j in 0..dw {
            let (src, scale) = link.source(j);
            wrow[j] = srow[src] * scale;
        }
    }
    w
}

/// Draws `count` points: latent normals row by row, then the deterministic
/// strong/weak transforms and labels.
pub fn sample_batch(ens: &Ensemble, count: usize, stream: &mut Stream) -> SampleBatch {
    let latent = latent_matrix(count, ens.strong.d, stream);
    let mut strong_x = latent.clone();
    scale_columns(&mut strong_x, &ens.strong);
    let weak_x = weak_features(strong_x.view(), &ens.link);
    let labels = Labels::from_strong(strong_x.view(), ens.heads(), ens.config.mode);
    SampleBatch {
        latent,
        strong_x,
        weak_x,
        labels,
    }
}

/// Strong features and labels only, without retaining the latent matrix.
/// Uses the same draw order as [`sample_batch`].
pub fn sample_strong(
    levels: &Levels,
    count: usize,
    k: usize,
    mode: Mode,
    stream: &mut Stream,
) -> (Array2<f64>, Labels) {
    let mut x = latent_matrix(count, levels.d, stream);
    scale_columns(&mut x, levels);
    let labels = Labels::from_strong(x.view(), k, mode);
    (x, labels)
}
