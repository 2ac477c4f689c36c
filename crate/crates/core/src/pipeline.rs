//! Weak-to-strong training: weak MNI on clean labels, hard pseudolabels on a
//! shared unlabeled batch, strong MNI on the pseudolabels.

use crate::ensemble::{argmax, sample_batch, sgn, validate_w2s, Ensemble, Labels, Mode, SampleBatch, SubsetLink};
use crate::error::{Error, Result};
use crate::interpolator::{fit_avg, fit_mni_multi, FeatureSpace, LinearModel, Method};
use crate::rng::{Stage, Stream};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

/// One linear head per label (binary: one head). Multiclass prediction is the
/// argmax over heads.
#[derive(Clone, Debug, PartialEq)]
pub struct Classifier {
    pub heads: Vec<LinearModel>,
    pub mode: Mode,
}

impl Classifier {
    pub fn space(&self) -> FeatureSpace {
        self.heads[0].space
    }

    pub fn method(&self) -> Method {
        self.heads[0].method
    }

    /// `count × k` head scores.
    pub fn scores(&self, x: ArrayView2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.heads.len()));
        for (j, h) in self.heads.iter().enumerate() {
            out.column_mut(j).assign(&h.scores(x)?);
        }
        Ok(out)
    }

    /// Per-point correctness: sign agreement (binary), all heads right
    /// (multilabel), argmax equals class (multiclass).
    pub fn correct(&self, x: ArrayView2<f64>, labels: &Labels) -> Result<Vec<bool>> {
        let scores = self.scores(x)?;
        Ok(match self.mode {
            Mode::Binary | Mode::Multilabel => scores
                .rows()
                .into_iter()
                .zip(labels.signs.rows())
                .map(|(s, y)| s.iter().zip(y.iter()).all(|(&v, &l)| sgn(v) == l))
                .collect(),
            Mode::Multiclass => {
                let classes = labels.classes.as_ref().ok_or_else(|| {
                    Error::InvalidParams("multiclass evaluation needs class labels".into())
                })?;
                scores
                    .rows()
                    .into_iter()
                    .zip(classes)
                    .map(|(s, &c)| argmax(s.iter().copied()) == c)
                    .collect()
            }
        })
    }

    pub fn accuracy(&self, x: ArrayView2<f64>, labels: &Labels) -> Result<f64> {
        let c = self.correct(x, labels)?;
        Ok(c.iter().filter(|&&b| b).count() as f64 / c.len().max(1) as f64)
    }

    /// Features of `batch` matching this classifier's space.
    pub fn features<'a>(&self, batch: &'a SampleBatch) -> ArrayView2<'a, f64> {
        match self.space() {
            FeatureSpace::Weak => batch.weak_x.view(),
            FeatureSpace::Strong => batch.strong_x.view(),
        }
    }
}

/// Centered one-hot targets `1{y = i} − 1/k`.
pub fn one_hot_centered(classes: &[usize], k: usize) -> Array2<f64> {
    let off = -1.0 / k as f64;
    Array2::from_shape_fn((classes.len(), k), |(i, j)| {
        if classes[i] == j {
            1.0 + off
        } else {
            off
        }
    })
}

/// Clean-label training targets. Multiclass uses centered one-hot vectors.
pub fn clean_targets(labels: &Labels, mode: Mode) -> Result<Array2<f64>> {
    match mode {
        Mode::Binary | Mode::Multilabel => Ok(labels.signs.clone()),
        Mode::Multiclass => {
            let classes = labels
                .classes
                .as_ref()
                .ok_or_else(|| Error::InvalidParams("multiclass training needs class labels".into()))?;
            Ok(one_hot_centered(classes, labels.signs.ncols()))
        }
    }
}

fn mni_classifier(x: ArrayView2<f64>, targets: ArrayView2<f64>, space: FeatureSpace, mode: Mode) -> Result<Classifier> {
    Ok(Classifier {
        heads: fit_mni_multi(x, targets, space)?,
        mode,
    })
}

fn avg_classifier(x: ArrayView2<f64>, targets: ArrayView2<f64>, space: FeatureSpace, mode: Mode) -> Result<Classifier> {
    let heads = targets
        .axis_iter(Axis(1))
        .map(|y| fit_avg(x, y, space))
        .collect::<Result<Vec<_>>>()?;
    Ok(Classifier { heads, mode })
}

/// MNI fit of the weak features of `batch` against its clean labels. Every
/// mode trains on the sign (multilabel) labels; multiclass predicts by argmax.
pub fn train_weak_on(ens: &Ensemble, batch: &SampleBatch) -> Result<Classifier> {
    mni_classifier(
        batch.weak_x.view(),
        batch.labels.signs.view(),
        FeatureSpace::Weak,
        ens.config.mode,
    )
}

/// Draws `n` labeled points and trains the weak model on them.
pub fn train_weak(ens: &Ensemble, stream: &mut Stream) -> Result<(Classifier, SampleBatch)> {
    let batch = sample_batch(ens, ens.config.n, stream);
    let model = train_weak_on(ens, &batch)?;
    Ok((model, batch))
}

/// Strong MNI trained on clean labels of `batch`.
pub fn train_clean_strong(ens: &Ensemble, batch: &SampleBatch) -> Result<Classifier> {
    let y = clean_targets(&batch.labels, ens.config.mode)?;
    mni_classifier(batch.strong_x.view(), y.view(), FeatureSpace::Strong, ens.config.mode)
}

/// Hard pseudolabels `sgn(⟨f_weak, x_weak⟩)`, `count × k`.
pub fn pseudolabel(f_weak: &Classifier, weak_x: ArrayView2<f64>) -> Result<Array2<f64>> {
    if f_weak.space() != FeatureSpace::Weak {
        return Err(Error::InvalidParams("pseudolabels come from a weak-space model".into()));
    }
    Ok(f_weak.scores(weak_x)?.mapv(sgn))
}

/// The strong-space model with the same scores as `f_weak`.
pub fn embed_weak_into_strong(f_weak: &LinearModel, link: &SubsetLink) -> Result<LinearModel> {
    if f_weak.dim() != link.weak_dim() {
        return Err(Error::DimensionMismatch {
            expected: link.weak_dim(),
            got: f_weak.dim(),
        });
    }
    let mut g = Array1::zeros(link.strong_dim);
    for (j, &c) in f_weak.coeffs.iter().enumerate() {
        let (dst, scale) = link.source(j);
        g[dst] = scale * c;
    }
    Ok(LinearModel::new(g, FeatureSpace::Strong, f_weak.method))
}

pub fn embed_classifier(f_weak: &Classifier, link: &SubsetLink) -> Result<Classifier> {
    Ok(Classifier {
        heads: f_weak
            .heads
            .iter()
            .map(|h| embed_weak_into_strong(h, link))
            .collect::<Result<_>>()?,
        mode: f_weak.mode,
    })
}

/// Fraction of test points with at least one head wrong.
pub fn multilabel_loss(models: &[LinearModel], x: ArrayView2<f64>, signs: ArrayView2<f64>) -> Result<f64> {
    if models.is_empty() {
        return Err(Error::EmptyModelList);
    }
    if signs.ncols() != models.len() {
        return Err(Error::DimensionMismatch {
            expected: models.len(),
            got: signs.ncols(),
        });
    }
    let mut wrong = vec![false; x.nrows()];
    for (j, m) in models.iter().enumerate() {
        for (i, s) in m.scores(x)?.iter().enumerate() {
            wrong[i] |= sgn(*s) != signs[[i, j]];
        }
    }
    Ok(wrong.iter().filter(|&&w| w).count() as f64 / x.nrows().max(1) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Baselines {
    pub clean_m: bool,
    pub clean_n: bool,
    pub averaging: bool,
}

impl Default for Baselines {
    fn default() -> Self {
        Self {
            clean_m: true,
            clean_n: true,
            averaging: true,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct TrainOptions {
    /// Run even when the configuration violates the regime hypotheses.
    pub force: bool,
    pub baselines: Baselines,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunSeeds {
    pub weak: u64,
    pub unlabeled: u64,
}

#[derive(Clone, Debug)]
pub struct W2SRun {
    pub f_weak: Classifier,
    pub f_wts: Classifier,
    pub f_wts_avg: Option<Classifier>,
    pub f_strong_clean_m: Option<Classifier>,
    pub f_strong_clean_n: Option<Classifier>,
    /// Entry-wise agreement of the hard pseudolabels with the withheld labels.
    pub pseudolabel_agreement: f64,
    pub seeds: RunSeeds,
}

/// Steps 2–4 of the procedure given an already trained weak model: pseudolabel
/// `unlabeled` and fit the strong student (plus the requested baselines).
pub fn train_student(
    ens: &Ensemble,
    f_weak: &Classifier,
    unlabeled: &SampleBatch,
    baselines: Baselines,
) -> Result<(Classifier, Option<Classifier>, Option<Classifier>, f64)> {
    let mode = ens.config.mode;
    let hard = pseudolabel(f_weak, unlabeled.weak_x.view())?;
    let agree = hard
        .iter()
        .zip(unlabeled.labels.signs.iter())
        .filter(|(a, b)| a == b)
        .count() as f64
        / hard.len().max(1) as f64;
    let targets = if ens.config.soft_pseudolabels {
        f_weak.scores(unlabeled.weak_x.view())?
    } else {
        hard.clone()
    };
    let x = unlabeled.strong_x.view();
    let f_wts = mni_classifier(x, targets.view(), FeatureSpace::Strong, mode)?;
    let f_avg = baselines
        .averaging
        .then(|| avg_classifier(x, hard.view(), FeatureSpace::Strong, mode))
        .transpose()?;
    let f_clean = baselines
        .clean_m
        .then(|| train_clean_strong(ens, unlabeled))
        .transpose()?;
    Ok((f_wts, f_avg, f_clean, agree))
}

/// The full procedure from a single stream: weak data from the `WeakTrain`
/// substream, unlabeled data from the `Unlabeled` substream.
pub fn train_w2s(ens: &Ensemble, stream: &Stream, opts: TrainOptions) -> Result<W2SRun> {
    let violations = validate_w2s(&ens.config);
    if !violations.is_empty() && !opts.force {
        return Err(Error::ConfigInvalid(violations.into_iter().map(|v| v.message).collect()));
    }
    let mut weak_stream = stream.substream(&[Stage::WeakTrain as u64]);
    let mut unl_stream = stream.substream(&[Stage::Unlabeled as u64]);
    let seeds = RunSeeds {
        weak: weak_stream.seed(),
        unlabeled: unl_stream.seed(),
    };
    let (f_weak, weak_batch) = train_weak(ens, &mut weak_stream)?;
    let unlabeled = sample_batch(ens, ens.config.m(), &mut unl_stream);
    let (f_wts, f_wts_avg, f_strong_clean_m, agreement) =
        train_student(ens, &f_weak, &unlabeled, opts.baselines)?;
    let f_strong_clean_n = opts
        .baselines
        .clean_n
        .then(|| train_clean_strong(ens, &weak_batch))
        .transpose()?;
    Ok(W2SRun {
        f_weak,
        f_wts,
        f_wts_avg,
        f_strong_clean_m,
        f_strong_clean_n,
        pseudolabel_agreement: agreement,
        seeds,
    })
}
