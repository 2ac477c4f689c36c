//! Runners for the four subcommands. All randomness comes from streams keyed
//! by `(base seed, u index, weak trial, student trial, stage)`, and results are
//! collected in a fixed order, so the output does not depend on the thread
//! count.

use super::config::{DiagnoseSpec, ExperimentConfig, RegimesSpec, TailsSpec};
use super::records::{AggregateRow, DiagnoseRow, RegimeRow, ResultRow, TailRow};
use crate::diagnostics::{
    closed_form_accuracy, contamination, contamination_lower_bound_sq, empirical_accuracy,
    predicted_clean_survival, SuCn,
};
use crate::ensemble::{
    derive_levels, sample_batch, sample_strong, sgn, validate_w2s, BiLevelParams, Ensemble, Levels,
    Mode, SampleBatch, ViolationKind,
};
use crate::error::{Error, Result};
use crate::interpolator::{fit_mni, FeatureSpace};
use crate::pipeline::{train_clean_strong, train_student, train_weak, train_weak_on, Baselines, Classifier};
use crate::regimes::{classify_w2s, sweep, Phase, RegimeInputs};
use crate::rng::{Stage, Stream, NONE};
use crate::stats;
use crate::tails::{exact_tail_quadrature, mc_tail_estimate, tail_bound, McMethod, TailParams};
use rayon::prelude::*;

pub const MODEL_WEAK: &str = "weak";
pub const MODEL_WTS_MNI: &str = "wts_mni";
pub const MODEL_WTS_AVG: &str = "wts_avg";
pub const MODEL_CLEAN_M: &str = "strong_clean_m";
pub const MODEL_CLEAN_N: &str = "strong_clean_n";

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// Row counts of a run, for the exit status.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Outcome {
    pub rows: usize,
    pub failed: usize,
}

impl Outcome {
    fn count<'a>(statuses: impl Iterator<Item = &'a str>) -> Self {
        let mut o = Outcome::default();
        for s in statuses {
            o.rows += 1;
            if s != "ok" {
                o.failed += 1;
            }
        }
        o
    }

    pub fn all_failed(&self) -> bool {
        self.rows > 0 && self.failed == self.rows
    }

    pub fn partial(&self) -> bool {
        self.failed > 0 && !self.all_failed()
    }
}

fn status_of(e: &Error) -> String {
    let s = e.to_string();
    // status is a single CSV field; keep it on one line
    s.replace(['\n', '\r'], " ")
}

fn pool<T: Send>(parallelism: usize, job: impl FnOnce() -> T + Send) -> Result<T> {
    let p = rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::InvalidParams(format!("thread pool: {e}")))?;
    Ok(p.install(job))
}

pub fn stream_for(seed: u64, u_index: u64, trial_weak: u64, trial_wts: u64, stage: Stage) -> Stream {
    Stream::from_path(seed, &[u_index, trial_weak, trial_wts, stage as u64])
}

#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub rows: Vec<ResultRow>,
    pub aggregates: Vec<AggregateRow>,
    /// Phase of every u-grid point.
    pub phases: Vec<Phase>,
}

impl Replication {
    pub fn outcome(&self) -> Outcome {
        Outcome::count(self.rows.iter().map(|r| r.status.as_str()))
    }
}

/// Builds the per-u ensembles. Structural problems are always fatal; domain
/// violations, or a grid with no point inside the regime hypotheses, need
/// `force`. Individual out-of-theory u values are run and tagged.
fn replication_ensembles(cfg: &ExperimentConfig, force: bool) -> Result<(Vec<Ensemble>, Vec<Phase>)> {
    let problems = cfg.problems();
    if !problems.is_empty() {
        return Err(Error::ConfigInvalid(problems));
    }
    let mut fatal = Vec::new();
    let mut phases = Vec::new();
    for &u in &cfg.u_grid {
        let w = cfg.w2s(u);
        for v in validate_w2s(&w) {
            let tolerated = match v.kind {
                ViolationKind::Structure => false,
                ViolationKind::Domain => force,
                ViolationKind::Hypothesis => true,
            };
            if !tolerated && !fatal.contains(&v.message) {
                fatal.push(v.message);
            }
        }
        let verdict = classify_w2s(&RegimeInputs {
            strong: w.strong,
            weak: w.weak,
            u,
            t: cfg.t.unwrap_or(0.0),
        });
        phases.push(verdict.phase);
    }
    if !force && phases.iter().all(|&p| p == Phase::OutOfTheory) {
        fatal.push("every u is outside the regime hypotheses; pass --force to run anyway".into());
    }
    if !fatal.is_empty() {
        return Err(Error::ConfigInvalid(fatal));
    }
    let ens = cfg
        .u_grid
        .iter()
        .map(|&u| Ensemble::new(&cfg.w2s(u), force))
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::ConfigInvalid(vec![e.to_string()]))?;
    Ok((ens, phases))
}

fn sucn_of(clf: &Classifier, levels: &Levels) -> Option<SuCn> {
    contamination(&clf.heads[0], levels, 0).ok()
}

type Status<T> = std::result::Result<T, String>;

struct WeakTrial {
    seed: u64,
    weak: Status<Classifier>,
    clean_n: Option<Status<Classifier>>,
}

fn train_weak_trial(cfg: &ExperimentConfig, ens: &Ensemble, tw: usize) -> WeakTrial {
    let mut st = stream_for(cfg.seed, NONE, tw as u64, NONE, Stage::WeakTrain);
    let seed = st.seed();
    let batch = sample_batch(ens, ens.config.n, &mut st);
    WeakTrial {
        seed,
        weak: train_weak_on(ens, &batch).map_err(|e| status_of(&e)),
        clean_n: cfg
            .baselines
            .clean_n
            .then(|| train_clean_strong(ens, &batch).map_err(|e| status_of(&e))),
    }
}

fn model_row(
    ens: &Ensemble,
    model: &str,
    tw: usize,
    ts: Option<usize>,
    seed: u64,
    outcome: Status<(f64, Option<SuCn>, Option<f64>)>,
) -> ResultRow {
    let (accuracy, sucn, agree, status) = match outcome {
        Ok((a, sc, ag)) => (Some(a), sc, ag, "ok".to_string()),
        Err(e) => (None, None, None, e),
    };
    ResultRow {
        u: ens.config.u,
        m: ens.config.m(),
        model: model.to_string(),
        trial_weak: tw,
        trial_wts: ts,
        accuracy,
        su: sucn.map(|s| s.su),
        cn: sucn.map(|s| s.cn),
        pseudolabel_agreement: agree,
        seed_used: seed,
        status,
    }
}

fn evaluate(clf: &Classifier, batch: &SampleBatch, levels: &Levels) -> Status<(f64, Option<SuCn>)> {
    let acc = clf
        .accuracy(clf.features(batch), &batch.labels)
        .map_err(|e| status_of(&e))?;
    Ok((acc, sucn_of(clf, levels)))
}

/// Rows of one u-grid point and weak trial: the weak model and the clean-`n`
/// baseline, evaluated on a shared test batch.
fn weak_rows(cfg: &ExperimentConfig, ui: usize, ens: &Ensemble, tw: usize, wt: &WeakTrial) -> Vec<ResultRow> {
    let mut st = stream_for(cfg.seed, ui as u64, tw as u64, NONE, Stage::WeakTest);
    let test = sample_batch(ens, cfg.n_test, &mut st);
    let mut out = Vec::new();
    let r = wt.weak.as_ref().map_err(String::clone).and_then(|f| evaluate(f, &test, &ens.weak)).map(|(a, s)| (a, s, None));
    out.push(model_row(ens, MODEL_WEAK, tw, None, wt.seed, r));
    if let Some(c) = &wt.clean_n {
        let r = c.as_ref().map_err(String::clone).and_then(|f| evaluate(f, &test, &ens.strong)).map(|(a, s)| (a, s, None));
        out.push(model_row(ens, MODEL_CLEAN_N, tw, None, wt.seed, r));
    }
    out
}

/// Rows of one `(u, weak trial, student trial)` cell.
fn student_rows(
    cfg: &ExperimentConfig,
    ui: usize,
    ens: &Ensemble,
    tw: usize,
    ts: usize,
    wt: &WeakTrial,
) -> Vec<ResultRow> {
    let mut unl = stream_for(cfg.seed, ui as u64, tw as u64, ts as u64, Stage::Unlabeled);
    let seed = unl.seed();
    let batch = sample_batch(ens, ens.config.m(), &mut unl);
    let students = match &wt.weak {
        Ok(f_weak) => {
            let b = Baselines {
                clean_m: false,
                ..cfg.baselines
            };
            train_student(ens, f_weak, &batch, b).map_err(|e| status_of(&e))
        }
        Err(e) => Err(e.clone()),
    };
    let clean_m = cfg
        .baselines
        .clean_m
        .then(|| train_clean_strong(ens, &batch).map_err(|e| status_of(&e)));
    let mut st = stream_for(cfg.seed, ui as u64, tw as u64, ts as u64, Stage::Test);
    let test = sample_batch(ens, cfg.n_test, &mut st);
    let row = |tag: &str, clf: std::result::Result<&Classifier, &String>, agree: Option<f64>| {
        let r = clf
            .map_err(String::clone)
            .and_then(|c| evaluate(c, &test, &ens.strong))
            .map(|(a, s)| (a, s, agree));
        model_row(ens, tag, tw, Some(ts), seed, r)
    };
    let mut out = Vec::new();
    match &students {
        Ok((wts, avg, _, agree)) => {
            out.push(row(MODEL_WTS_MNI, Ok(wts), Some(*agree)));
            if let Some(a) = avg {
                out.push(row(MODEL_WTS_AVG, Ok(a), Some(*agree)));
            }
        }
        Err(e) => {
            out.push(row(MODEL_WTS_MNI, Err(e), None));
            if cfg.baselines.averaging {
                out.push(row(MODEL_WTS_AVG, Err(e), None));
            }
        }
    }
    if let Some(c) = &clean_m {
        let agree = students.as_ref().ok().map(|s| s.3);
        out.push(row(MODEL_CLEAN_M, c.as_ref(), agree));
    }
    out
}

/// Mean ± 1.96·se over every successful row of each `(u, model)`.
pub fn aggregate(rows: &[ResultRow], u_grid: &[f64], phases: &[Phase]) -> Vec<AggregateRow> {
    let mut keys: Vec<(u64, usize, String)> = Vec::new();
    for r in rows {
        let k = (r.u.to_bits(), r.m, r.model.clone());
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(ub, m, model)| {
            let acc: Vec<f64> = rows
                .iter()
                .filter(|r| r.u.to_bits() == ub && r.model == model && r.status == "ok")
                .filter_map(|r| r.accuracy)
                .collect();
            let (mean, sd, se) = if acc.is_empty() {
                (f64::NAN, f64::NAN, f64::NAN)
            } else {
                (stats::mean(&acc), stats::std_dev(&acc), stats::std_error(&acc))
            };
            let phase = u_grid
                .iter()
                .position(|u| u.to_bits() == ub)
                .and_then(|i| phases.get(i).copied())
                .unwrap_or(Phase::OutOfTheory);
            AggregateRow {
                phase,
                u: f64::from_bits(ub),
                m,
                model,
                count: acc.len(),
                mean,
                std_dev: sd,
                std_error: se,
                ci_low: mean - Z95 * se,
                ci_high: mean + Z95 * se,
            }
        })
        .collect()
}

/// The replication protocol: for every u, `trials_weak` weak models (shared
/// across u) and `trials_wts` students per weak model, each trained on fresh
/// unlabeled points and evaluated on fresh test points.
pub fn run_replication(cfg: &ExperimentConfig, force: bool) -> Result<Replication> {
    let (ensembles, phases) = replication_ensembles(cfg, force)?;
    let (nu, nw, ns) = (ensembles.len(), cfg.trials_weak, cfg.trials_wts);
    let rows = pool(cfg.parallelism, || {
        let weak: Vec<WeakTrial> = (0..nw)
            .into_par_iter()
            .map(|tw| train_weak_trial(cfg, &ensembles[0], tw))
            .collect();
        let weak_part: Vec<Vec<ResultRow>> = (0..nu * nw)
            .into_par_iter()
            .map(|i| {
                let (ui, tw) = (i / nw, i % nw);
                weak_rows(cfg, ui, &ensembles[ui], tw, &weak[tw])
            })
            .collect();
        let cells: Vec<Vec<ResultRow>> = (0..nu * nw * ns)
            .into_par_iter()
            .map(|i| {
                let (ui, tw, ts) = (i / (nw * ns), (i / ns) % nw, i % ns);
                student_rows(cfg, ui, &ensembles[ui], tw, ts, &weak[tw])
            })
            .collect();
        let mut rows = Vec::new();
        for ui in 0..nu {
            for tw in 0..nw {
                rows.extend(weak_part[ui * nw + tw].iter().cloned());
                for ts in 0..ns {
                    rows.extend(cells[(ui * nw + tw) * ns + ts].iter().cloned());
                }
            }
        }
        rows
    })?;
    let aggregates = aggregate(&rows, &cfg.u_grid, &phases);
    Ok(Replication {
        rows,
        aggregates,
        phases,
    })
}

pub fn run_regimes(spec: &RegimesSpec) -> Result<Vec<RegimeRow>> {
    let cells = sweep(&spec.grid(), &spec.fixed()).map_err(|e| Error::ConfigInvalid(vec![e.to_string()]))?;
    Ok(cells
        .into_iter()
        .map(|c| {
            let v = c.verdict;
            RegimeRow {
                axis1: c.x,
                axis2: c.y,
                phase: v.phase,
                tau_strong: v.tau_strong,
                tau_weak: v.tau_weak,
                tau_w2s: v.tau_w2s,
                threshold_u: v.threshold_u,
                weak_fails: v.flags.weak_fails,
                capability: v.flags.capability,
                pca_fails: v.flags.pca_fails,
                strong_fails_n_clean: v.flags.strong_fails_n_clean,
                nonvacuous: v.flags.nonvacuous,
                violated: v.violated.join(";"),
            }
        })
        .collect())
}

fn tail_row(n: u64, rho0: f64, delta0: f64, samples: usize, stream: &Stream) -> TailRow {
    let mut row = TailRow {
        n,
        rho0,
        delta0,
        t: f64::NAN,
        bound_raw: None,
        bound_clipped: None,
        exact_quadrature: None,
        mc_estimate: None,
        mc_stderr: None,
        status: "ok".into(),
    };
    let params = match TailParams::new(n, rho0, delta0) {
        Ok(p) => p,
        Err(e) => {
            row.status = status_of(&e);
            return row;
        }
    };
    row.t = params.t_n();
    if n >= 3 {
        if let Ok(b) = tail_bound(&params) {
            row.bound_raw = Some(b.raw);
            row.bound_clipped = Some(b.clipped);
        }
    }
    let mut errors = Vec::new();
    match exact_tail_quadrature(n, rho0, row.t) {
        Ok(v) => row.exact_quadrature = Some(v),
        Err(e) => errors.push(status_of(&e)),
    }
    match mc_tail_estimate(n, rho0, row.t, samples, stream, McMethod::Conditional) {
        Ok(m) => {
            row.mc_estimate = Some(m.estimate);
            row.mc_stderr = Some(m.std_error);
        }
        Err(e) => errors.push(status_of(&e)),
    }
    if !errors.is_empty() {
        row.status = errors.join("; ");
    }
    row
}

/// Grid order: N outermost, then ρ₀, then δ₀.
pub fn run_tails(spec: &TailsSpec, seed: u64, parallelism: usize) -> Result<Vec<TailRow>> {
    if spec.n.is_empty() || spec.rho0.is_empty() || spec.delta0.is_empty() {
        return Err(Error::ConfigInvalid(vec!["tails grid must not be empty".into()]));
    }
    let mut problems = Vec::new();
    for &r in &spec.rho0 {
        if !(r > 0.0 && r < 1.0) {
            problems.push(format!("rho0 must lie in (0, 1), got {r}"));
        }
    }
    for &d in &spec.delta0 {
        if !(0.0..1.0).contains(&d) {
            problems.push(format!("delta0 must lie in [0, 1), got {d}"));
        }
    }
    if spec.n.contains(&0) {
        problems.push("N must be >= 1".into());
    }
    if spec.samples < 1000 {
        problems.push("samples must be >= 1000".into());
    }
    if !problems.is_empty() {
        return Err(Error::ConfigInvalid(problems));
    }
    let mut points = Vec::new();
    for &n in &spec.n {
        for &r in &spec.rho0 {
            for &d in &spec.delta0 {
                points.push((n, r, d));
            }
        }
    }
    pool(parallelism, || {
        points
            .par_iter()
            .enumerate()
            .map(|(i, &(n, r, d))| {
                let st = Stream::from_path(seed, &[Stage::Tails as u64, i as u64]);
                tail_row(n, r, d, spec.samples, &st)
            })
            .collect()
    })
}

fn diagnose_row(cfg: &ExperimentConfig, levels: &Levels, n: usize, trial: usize, n_test: usize) -> DiagnoseRow {
    let e = cfg.strong;
    let mut train = Stream::from_path(cfg.seed, &[n as u64, trial as u64, Stage::CleanTrain as u64]);
    let seed = train.seed();
    let mut row = DiagnoseRow {
        n,
        trial,
        d: levels.d,
        s: levels.s,
        su: None,
        cn: None,
        ratio: None,
        total_var: None,
        closed_form_accuracy: None,
        empirical_accuracy: None,
        cn_sq_lower: contamination_lower_bound_sq(levels, n, e.p, e.r),
        cn_bound_ok: None,
        su_predicted: predicted_clean_survival(levels),
        seed_used: seed,
        status: "ok".into(),
    };
    let result = (|| -> Result<(SuCn, f64)> {
        let (x, labels) = sample_strong(levels, n, 1, Mode::Binary, &mut train);
        let f = fit_mni(x.view(), labels.signs.column(0), FeatureSpace::Strong)?;
        drop(x);
        let sc = contamination(&f, levels, 0)?;
        let mut test = Stream::from_path(cfg.seed, &[n as u64, trial as u64, Stage::Test as u64]);
        let (tx, tl) = sample_strong(levels, n_test, 1, Mode::Binary, &mut test);
        let scores = f.scores(tx.view())?;
        let correct = scores
            .iter()
            .zip(tl.signs.column(0))
            .filter(|(s, y)| sgn(**s) == **y)
            .count();
        Ok((sc, correct as f64 / n_test as f64))
    })();
    match result {
        Ok((sc, acc)) => {
            row.su = Some(sc.su);
            row.cn = Some(sc.cn);
            row.ratio = Some(sc.ratio);
            row.total_var = Some(sc.total_var);
            row.closed_form_accuracy = Some(closed_form_accuracy(&sc));
            row.empirical_accuracy = Some(acc);
            row.cn_bound_ok = Some(sc.cn * sc.cn >= 0.1 * row.cn_sq_lower);
        }
        Err(e) => row.status = status_of(&e),
    }
    row
}

/// Clean binary MNI on the strong ensemble for every `n` in the grid.
pub fn run_diagnose(cfg: &ExperimentConfig, spec: &DiagnoseSpec, force: bool) -> Result<Vec<DiagnoseRow>> {
    if spec.n_grid.is_empty() || spec.trials == 0 || spec.n_test == 0 {
        return Err(Error::ConfigInvalid(vec!["diagnose needs a non-empty n_grid, trials >= 1 and n_test >= 1".into()]));
    }
    let levels = spec
        .n_grid
        .iter()
        .map(|&n| {
            if force {
                crate::ensemble::levels_unchecked(n, &cfg.strong, None)
            } else {
                derive_levels(&BiLevelParams { n, exponents: cfg.strong }, None)
            }
        })
        .collect::<Result<Vec<_>>>()
        .map_err(|e| Error::ConfigInvalid(vec![e.to_string()]))?;
    let nt = spec.trials;
    pool(cfg.parallelism, || {
        (0..spec.n_grid.len() * nt)
            .into_par_iter()
            .map(|i| {
                let (ni, trial) = (i / nt, i % nt);
                diagnose_row(cfg, &levels[ni], spec.n_grid[ni], trial, spec.n_test)
            })
            .collect()
    })
}

/// Accuracy of clean multiclass MNI (centered one-hot targets, argmax
/// prediction) with `k` classes, one value per trial.
pub fn multiclass_clean_accuracies(
    n: usize,
    strong: crate::ensemble::Exponents,
    k: usize,
    trials: usize,
    n_test: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let levels = derive_levels(&BiLevelParams { n, exponents: strong }, None)?;
    if k < 2 || k > levels.s {
        return Err(Error::InvalidParams(format!("need 2 <= k <= s (k = {k}, s = {})", levels.s)));
    }
    (0..trials)
        .into_par_iter()
        .map(|trial| {
            let path = |stage: Stage| [k as u64, trial as u64, stage as u64];
            let mut tr = Stream::from_path(seed, &path(Stage::CleanTrain));
            let (x, labels) = sample_strong(&levels, n, k, Mode::Multiclass, &mut tr);
            let y = crate::pipeline::clean_targets(&labels, Mode::Multiclass)?;
            let heads = crate::interpolator::fit_mni_multi(x.view(), y.view(), FeatureSpace::Strong)?;
            let clf = Classifier {
                heads,
                mode: Mode::Multiclass,
            };
            let mut te = Stream::from_path(seed, &path(Stage::Test));
            let (tx, tl) = sample_strong(&levels, n_test, k, Mode::Multiclass, &mut te);
            clf.accuracy(tx.view(), &tl)
        })
        .collect()
}

/// Weak-model test accuracy per weak trial, for a stand-alone check.
pub fn weak_accuracies(cfg: &ExperimentConfig, u: f64, force: bool) -> Result<Vec<f64>> {
    let ens = Ensemble::new(&cfg.w2s(u), force)?;
    (0..cfg.trials_weak)
        .map(|tw| {
            let mut st = stream_for(cfg.seed, NONE, tw as u64, NONE, Stage::WeakTrain);
            let (f, _) = train_weak(&ens, &mut st)?;
            let mut te = stream_for(cfg.seed, 0, tw as u64, NONE, Stage::WeakTest);
            Ok(empirical_accuracy(&f, &ens, cfg.n_test, &mut te)?.accuracy)
        })
        .collect()
}
