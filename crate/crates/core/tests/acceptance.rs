//! Acceptance suite. Each test prints one line
//! `criterion NN [PASS|FAIL] <name>: <detail>` and then asserts.
//! Tolerances are pinned as constants next to each check.

use nalgebra::DMatrix;
use ndarray::{Array1, Array2};
use rand::Rng;
use std::sync::OnceLock;
use std::time::{Duration, Instant};
use w2s_core::diagnostics::{closed_form_accuracy, contamination, wilson_interval};
use w2s_core::ensemble::{
    levels_unchecked, sample_batch, sample_strong, sgn, validate_w2s, Ensemble, Exponents, Levels,
    Mode, ViolationKind, W2SConfig,
};
use w2s_core::harness::experiments::{
    multiclass_clean_accuracies, MODEL_CLEAN_M, MODEL_WEAK, MODEL_WTS_MNI,
};
use w2s_core::harness::{
    run_diagnose, run_replication, write_csv, AggregateRow, DiagnoseSpec, ExperimentConfig,
    Replication, ResultRow,
};
use w2s_core::interpolator::{fit_mni, FeatureSpace, LinearModel, Method};
use w2s_core::pipeline::{embed_classifier, pseudolabel, train_w2s, Classifier, TrainOptions};
use w2s_core::regimes::{classify_w2s, Phase, RegimeInputs};
use w2s_core::rng::Stream;
use w2s_core::stats;
use w2s_core::tails::{exact_tail_quadrature, mc_tail_estimate, tail_bound, McMethod, TailParams};

const SEED: u64 = w2s_core::harness::DEFAULT_SEED;

fn report(id: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:02} [{tag}] {name}: {detail}");
    assert!(pass, "criterion {id} failed: {detail}");
}

fn success_cfg() -> ExperimentConfig {
    ExperimentConfig::default()
}

fn failure_cfg() -> ExperimentConfig {
    ExperimentConfig {
        strong: Exponents::new(1.5, 0.6, 0.8),
        ..ExperimentConfig::default()
    }
}

/// The serial success-regime replication, shared by criteria 2, 4 and 12.
fn success_run() -> &'static (Replication, Duration) {
    static RUN: OnceLock<(Replication, Duration)> = OnceLock::new();
    RUN.get_or_init(|| {
        let t0 = Instant::now();
        let rep = run_replication(&success_cfg(), false).expect("success replication");
        (rep, t0.elapsed())
    })
}

fn agg<'a>(rows: &'a [AggregateRow], u: f64, model: &str) -> &'a AggregateRow {
    rows.iter()
        .find(|r| r.u == u && r.model == model)
        .unwrap_or_else(|| panic!("no aggregate for u={u} model={model}"))
}

fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows).unwrap();
    buf
}

#[test]
fn criterion_01_regime_classifier() {
    let t0 = Instant::now();
    let s = classify_w2s(&RegimeInputs::new(
        Exponents::new(2.0, 0.6, 0.6),
        Exponents::new(1.4, 0.9, 0.5),
        1.15,
    ));
    let f = classify_w2s(&RegimeInputs::new(
        Exponents::new(1.5, 0.6, 0.8),
        Exponents::new(1.4, 0.9, 0.5),
        1.3,
    ));
    let dt = t0.elapsed();
    const BUDGET: Duration = Duration::from_millis(1);
    let pass = s.phase == Phase::W2sSuccess && f.phase == Phase::W2sFailure && dt < BUDGET;
    report(
        1,
        "regime classifier",
        pass,
        &format!("success case {:?}, failure case {:?}, {dt:?}", s.phase, f.phase),
    );
}

#[test]
fn criterion_02_replication_success_regime() {
    const GAP: f64 = 0.05;
    const P_MAX: f64 = 0.05;
    const BUDGET: Duration = Duration::from_secs(120);
    let (rep, dt) = success_run();
    let a = &rep.aggregates;
    let u_last = *success_cfg().u_grid.last().unwrap();

    let wts = agg(a, u_last, MODEL_WTS_MNI);
    let weak = agg(a, u_last, MODEL_WEAK);
    let pass_a = wts.mean - weak.mean >= GAP && wts.ci_low > weak.ci_high;

    // Spearman of the inner-trial mean against u, one value per weak trial;
    // the weak trials are independent, so a one-sided t-test over them
    // respects the trial structure.
    let cfg = success_cfg();
    let per_weak: Vec<f64> = (0..cfg.trials_weak)
        .map(|tw| {
            let means: Vec<f64> = cfg
                .u_grid
                .iter()
                .map(|&u| {
                    let acc: Vec<f64> = rep
                        .rows
                        .iter()
                        .filter(|r| r.u == u && r.model == MODEL_WTS_MNI && r.trial_weak == tw)
                        .filter_map(|r| r.accuracy)
                        .collect();
                    stats::mean(&acc)
                })
                .collect();
            stats::spearman(&cfg.u_grid, &means)
        })
        .collect();
    let (t, p) = stats::t_test_greater(&per_weak);
    let mean_curve: Vec<f64> = cfg.u_grid.iter().map(|&u| agg(a, u, MODEL_WTS_MNI).mean).collect();
    let rho_means = stats::spearman(&cfg.u_grid, &mean_curve);
    let pass_b = p < P_MAX;

    let mut pass_c = true;
    for &u in &cfg.u_grid {
        let (c, w, k) = (agg(a, u, MODEL_CLEAN_M), agg(a, u, MODEL_WTS_MNI), agg(a, u, MODEL_WEAK));
        let ordered = |hi: &AggregateRow, lo: &AggregateRow| hi.mean >= lo.mean || hi.ci_high >= lo.ci_low;
        pass_c &= ordered(c, w) && ordered(w, k);
    }
    let pass_t = *dt < BUDGET;
    report(
        2,
        "replication, success regime",
        pass_a && pass_b && pass_c && pass_t,
        &format!(
            "(a) wts {:.4} [{:.4}, {:.4}] vs weak {:.4} [{:.4}, {:.4}] at u={u_last} -> {pass_a}; \
             (b) per-weak-trial Spearman mean {:.3}, t={t:.2}, p={p:.4} (Spearman of the 5 means {rho_means:.2}) -> {pass_b}; \
             (c) clean_m >= wts >= weak within CI -> {pass_c}; runtime {dt:.1?}",
            wts.mean, wts.ci_low, wts.ci_high, weak.mean, weak.ci_low, weak.ci_high,
            stats::mean(&per_weak)
        ),
    );
}

#[test]
fn criterion_03_replication_failure_regime() {
    const UPPER: f64 = 0.62;
    const BUDGET: Duration = Duration::from_secs(120);
    let t0 = Instant::now();
    let rep = run_replication(&failure_cfg(), false).unwrap();
    let dt = t0.elapsed();
    let mut pass = dt < BUDGET;
    let mut detail = Vec::new();
    for &u in &failure_cfg().u_grid {
        let w = agg(&rep.aggregates, u, MODEL_WTS_MNI);
        let lo = 0.5 - 3.0 * w.std_error;
        let ok = w.mean >= lo && w.mean <= UPPER;
        pass &= ok;
        detail.push(format!("u={u}: {:.4} in [{lo:.4}, {UPPER}] {ok}", w.mean));
    }
    report(3, "replication, failure regime", pass, &format!("{}; runtime {dt:.1?}", detail.join("; ")));
}

#[test]
fn criterion_04_weak_model_near_guessing() {
    const UPPER: f64 = 0.75;
    let (rep, _) = success_run();
    let u0 = success_cfg().u_grid[0];
    let acc: Vec<f64> = rep
        .rows
        .iter()
        .filter(|r| r.u == u0 && r.model == MODEL_WEAK)
        .filter_map(|r| r.accuracy)
        .collect();
    let (m, se) = (stats::mean(&acc), stats::std_error(&acc));
    let lo = 0.5 - 3.0 * se;
    let in_band = acc.len() == 8 && m >= lo && m <= UPPER;
    let u_last = *success_cfg().u_grid.last().unwrap();
    let wts = agg(&rep.aggregates, u_last, MODEL_WTS_MNI);
    let weak = agg(&rep.aggregates, u_last, MODEL_WEAK);
    let below = wts.ci_low > weak.ci_high;
    report(
        4,
        "weak model near guessing",
        in_band && below,
        &format!(
            "weak mean {m:.4} over {} trials in [{lo:.4}, {UPPER}] -> {in_band}; weak CI high {:.4} < wts CI low {:.4} at u={u_last} -> {below}",
            acc.len(),
            weak.ci_high,
            wts.ci_low
        ),
    );
}

fn random_valid_config(rng: &mut impl Rng) -> W2SConfig {
    loop {
        let n = rng.random_range(20..=60);
        let p: f64 = rng.random_range(1.3..2.1);
        let r: f64 = rng.random_range(0.3..0.8);
        let q = rng.random_range(0.2..(p - r).min(1.0));
        let pw: f64 = rng.random_range(1.1..p);
        let rw: f64 = rng.random_range(0.1..r);
        let qw = rng.random_range(0.2..(pw - rw).min(1.2));
        let u = rng.random_range(1.0..1.3);
        let cfg = W2SConfig::binary(n, Exponents::new(p, q, r), Exponents::new(pw, qw, rw), u);
        let fatal = validate_w2s(&cfg)
            .iter()
            .any(|v| v.kind != ViolationKind::Hypothesis);
        if !fatal && Ensemble::new(&cfg, true).is_ok() {
            return cfg;
        }
    }
}

#[test]
fn criterion_05_capability() {
    const POINTS: usize = 10_000;
    const CONFIGS: usize = 20;
    let mut st = Stream::new(SEED ^ 5);
    let mut mismatches = 0usize;
    for i in 0..CONFIGS {
        let cfg = random_valid_config(st.rng());
        let ens = Ensemble::new(&cfg, true).unwrap();
        let run = train_w2s(&ens, &st.substream(&[i as u64]), TrainOptions { force: true, ..Default::default() })
            .unwrap();
        let mut ts = st.substream(&[i as u64, 99]);
        let batch = sample_batch(&ens, POINTS, &mut ts);
        let labels = pseudolabel(&run.f_weak, batch.weak_x.view()).unwrap();
        let embedded = embed_classifier(&run.f_weak, &ens.link).unwrap();
        let strong_labels = embedded.scores(batch.strong_x.view()).unwrap().mapv(sgn);
        mismatches += labels.iter().zip(strong_labels.iter()).filter(|(a, b)| a != b).count();
    }
    report(
        5,
        "capability",
        mismatches == 0,
        &format!("{mismatches} mismatches over {CONFIGS} configs x {POINTS} points"),
    );
}

fn pinv_oracle(x: &Array2<f64>, y: &Array1<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let (n, d) = x.dim();
    let xm = DMatrix::from_row_slice(n, d, x.as_slice().unwrap());
    let pinv = xm.clone().pseudo_inverse(1e-12).unwrap();
    let f = &pinv * nalgebra::DVector::from_column_slice(y.as_slice().unwrap());
    let proj = DMatrix::identity(d, d) - &pinv * &xm;
    (f.iter().copied().collect(), proj)
}

#[test]
fn criterion_06_mni_correctness() {
    const INSTANCES: usize = 200;
    const PERTURBED: usize = 100;
    const REL: f64 = 1e-8;
    let mut st = Stream::new(SEED ^ 6);
    let (mut worst_rel, mut worst_res, mut beaten) = (0.0f64, 0.0f64, 0usize);
    for _ in 0..INSTANCES {
        let n = st.rng().random_range(1..=12);
        let d = st.rng().random_range(n..=40);
        let mut x = Array2::zeros((n, d));
        st.fill_normal(x.as_slice_mut().unwrap());
        let mut y = Array1::zeros(n);
        st.fill_normal(y.as_slice_mut().unwrap());
        let f = fit_mni(x.view(), y.view(), FeatureSpace::Strong).unwrap();
        let (oracle, proj) = pinv_oracle(&x, &y);
        let on = oracle.iter().map(|v| v * v).sum::<f64>().sqrt();
        let diff = f.coeffs.iter().zip(&oracle).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        worst_rel = worst_rel.max(diff / on);
        let res = (&y - &x.dot(&f.coeffs)).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        worst_res = worst_res.max(res / y.iter().fold(1.0f64, |m, v| m.max(v.abs())));
        let fnorm = f.coeffs.dot(&f.coeffs).sqrt();
        for _ in 0..PERTURBED {
            let mut z = vec![0.0; d];
            st.fill_normal(&mut z);
            let dz = &proj * nalgebra::DVector::from_vec(z);
            if dz.norm() < 1e-9 {
                // full-rank square case: the interpolator is unique
                beaten += 1;
                continue;
            }
            let g: Vec<f64> = f.coeffs.iter().zip(dz.iter()).map(|(a, b)| a + b).collect();
            let gnorm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if fnorm < gnorm {
                beaten += 1;
            }
        }
    }
    let pass = worst_rel < REL && worst_res < REL && beaten == INSTANCES * PERTURBED;
    report(
        6,
        "MNI correctness",
        pass,
        &format!(
            "max rel. coefficient error {worst_rel:.2e}, max rel. residual {worst_res:.2e}, \
             shorter than {beaten}/{} perturbed interpolators",
            INSTANCES * PERTURBED
        ),
    );
}

fn brute_total_var(f: &LinearModel, levels: &Levels) -> f64 {
    levels
        .eigenvalues()
        .iter()
        .zip(f.coeffs.iter())
        .map(|(l, c)| l * c * c)
        .sum()
}

#[test]
fn criterion_07_conservation_and_arctan_law() {
    const REL: f64 = 1e-10;
    const N_TEST: usize = 10_000;
    const MODELS: usize = 20;
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    let mut check = |f: &LinearModel, levels: &Levels| {
        let sc = contamination(f, levels, 0).unwrap();
        let tv = brute_total_var(f, levels);
        worst = worst.max(((sc.su * sc.su + sc.cn * sc.cn) - tv).abs() / tv);
        checked += 1;
    };
    // every model the pipeline trains, in both replication configs
    for (i, base) in [success_cfg(), failure_cfg()].iter().enumerate() {
        for (j, &u) in base.u_grid.iter().enumerate() {
            let ens = Ensemble::new(&base.w2s(u), true).unwrap();
            for trial in 0..4u64 {
                let st = Stream::from_path(SEED, &[7, i as u64, j as u64, trial]);
                let run = train_w2s(&ens, &st, TrainOptions { force: true, ..Default::default() }).unwrap();
                check(&run.f_weak.heads[0], &ens.weak);
                for clf in [Some(&run.f_wts), run.f_wts_avg.as_ref(), run.f_strong_clean_m.as_ref(), run.f_strong_clean_n.as_ref()]
                    .into_iter()
                    .flatten()
                {
                    check(&clf.heads[0], &ens.strong);
                }
            }
        }
    }
    let cons_ok = worst < REL;

    // random bi-level models: arctan law against Monte Carlo
    let mut st = Stream::new(SEED ^ 7);
    let mut within = 0usize;
    let mut detail = Vec::new();
    for i in 0..MODELS {
        let rng = st.rng();
        let (p, q, r) = (rng.random_range(1.3..2.0), rng.random_range(0.2..0.6), rng.random_range(0.2..0.6));
        let levels = levels_unchecked(rng.random_range(10..30), &Exponents::new(p, q, r), None).unwrap();
        let mut c = vec![0.0; levels.d];
        st.fill_normal(&mut c);
        c[0] *= 3.0 * (i as f64 / MODELS as f64);
        let f = LinearModel::new(Array1::from(c), FeatureSpace::Strong, Method::Mni);
        let sc = contamination(&f, &levels, 0).unwrap();
        let closed = closed_form_accuracy(&sc);
        let mut ts = st.substream(&[i as u64]);
        let (x, labels) = sample_strong(&levels, N_TEST, 1, Mode::Binary, &mut ts);
        let clf = Classifier { heads: vec![f], mode: Mode::Binary };
        let emp = clf.accuracy(x.view(), &labels).unwrap();
        let sigma = (closed * (1.0 - closed) / N_TEST as f64).sqrt();
        if (emp - closed).abs() <= 3.0 * sigma {
            within += 1;
        } else {
            detail.push(format!("model {i}: empirical {emp:.4} vs closed {closed:.4} (3σ = {:.4})", 3.0 * sigma));
        }
    }
    let law_ok = within == MODELS;
    report(
        7,
        "survival/contamination conservation",
        cons_ok && law_ok,
        &format!(
            "max rel. |su²+cn²−fᵀΛf| {worst:.2e} over {checked} trained models; \
             closed form within 3σ̂ on {within}/{MODELS} random models {}",
            detail.join("; ")
        ),
    );
}

#[test]
fn criterion_08_survival_scaling() {
    const TARGET: f64 = -0.2;
    const TOL: f64 = 0.15;
    const BUDGET: Duration = Duration::from_secs(300);
    let cfg = success_cfg();
    let spec = DiagnoseSpec {
        n_grid: vec![50, 100, 200, 400],
        trials: 32,
        n_test: 200,
    };
    let t0 = Instant::now();
    let rows = run_diagnose(&cfg, &spec, false).unwrap();
    let dt = t0.elapsed();
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for &n in &spec.n_grid {
        let su: Vec<f64> = rows.iter().filter(|r| r.n == n).filter_map(|r| r.su).collect();
        assert_eq!(su.len(), spec.trials);
        xs.push((n as f64).ln());
        ys.push(stats::median(&su).ln());
    }
    let slope = stats::ols_slope(&xs, &ys);
    let soft = rows.iter().filter(|r| r.cn_bound_ok == Some(true)).count();
    let conserved = rows.iter().all(|r| {
        let (su, cn, tv) = (r.su.unwrap(), r.cn.unwrap(), r.total_var.unwrap());
        ((su * su + cn * cn) - tv).abs() <= 1e-10 * tv
    });
    report(
        8,
        "survival scaling",
        (slope - TARGET).abs() <= TOL && dt < BUDGET && conserved,
        &format!(
            "slope {slope:.4} (target {TARGET} ± {TOL}); cn² ≥ 0.1·bound on {soft}/{} trials; runtime {dt:.1?}",
            rows.len()
        ),
    );
}

#[test]
fn criterion_09_tail_exactness() {
    const ABS: f64 = 1e-9;
    const SAMPLES: usize = 100_000;
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, n) in [8u64, 64, 512].into_iter().enumerate() {
        let want = 1.0 / (n as f64 + 1.0);
        let exact = exact_tail_quadrature(n, 0.5, 0.0).unwrap();
        let mc = mc_tail_estimate(n, 0.5, 0.0, SAMPLES, &Stream::new(SEED ^ (90 + i as u64)), McMethod::Conditional)
            .unwrap();
        let ok = (exact - want).abs() < ABS && (mc.estimate - want).abs() <= 3.0 * mc.std_error;
        pass &= ok;
        detail.push(format!(
            "N={n}: |quad−1/(N+1)| {:.1e}, mc {:.6} ± {:.1e}",
            (exact - want).abs(),
            mc.estimate,
            mc.std_error
        ));
    }
    report(9, "tail exactness", pass, &detail.join("; "));
}

#[test]
fn criterion_10_tail_bound_dominance_and_rate() {
    const SLOPE: f64 = -1.0;
    const SLOPE_TOL: f64 = 0.02;
    let mut failures = Vec::new();
    let mut points = 0;
    for &rho in &[0.3, 0.5, 0.7] {
        for &delta in &[0.0, 0.25, 0.5] {
            for n in [100u64, 1000, 10_000] {
                let p = TailParams::new(n, rho, delta).unwrap();
                let exact = exact_tail_quadrature(n, rho, p.t_n()).unwrap();
                let bound = tail_bound(&p).unwrap().clipped;
                points += 1;
                if exact > bound {
                    failures.push(format!("(ρ₀={rho}, δ₀={delta}, N={n}: exact/bound {:.2})", exact / bound));
                }
            }
        }
    }
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for k in 4..=12 {
        let n = 1u64 << k;
        xs.push((n as f64).ln());
        ys.push(exact_tail_quadrature(n, 0.5, 0.0).unwrap().ln());
    }
    let slope = stats::ols_slope(&xs, &ys);
    let rate_ok = (slope - SLOPE).abs() <= SLOPE_TOL;
    report(
        10,
        "tail bound dominance and rate",
        failures.is_empty() && rate_ok,
        &format!(
            "dominance holds at {}/{points} grid points, violated at {}; slope {slope:.4} (target {SLOPE} ± {SLOPE_TOL}) -> {rate_ok}",
            points - failures.len(),
            if failures.is_empty() { "none".to_string() } else { failures.join(" ") }
        ),
    );
}

#[test]
fn criterion_11_multiclass_failure_band() {
    const BAND: (f64, f64) = (0.2, 5.0);
    const RATIO: f64 = 2.5;
    const TRIALS: usize = 64;
    const N_TEST: usize = 500;
    let strong = Exponents::new(1.5, 0.6, 0.8);
    assert!(strong.p + 1.0 - 2.0 * strong.qr() < 0.0);
    let mut scaled = Vec::new();
    for k in [4usize, 8, 16] {
        let acc = multiclass_clean_accuracies(50, strong, k, TRIALS, N_TEST, SEED).unwrap();
        scaled.push((k, k as f64 * stats::mean(&acc)));
    }
    let in_band = scaled.iter().all(|&(_, v)| v >= BAND.0 && v <= BAND.1);
    let ratios: Vec<f64> = scaled.windows(2).map(|w| w[1].1 / w[0].1).collect();
    let ratio_ok = ratios.iter().all(|&r| (1.0 / RATIO..=RATIO).contains(&r));
    report(
        11,
        "multiclass failure band",
        in_band && ratio_ok,
        &format!(
            "k·(1−error) = {}; successive ratios {:?}",
            scaled.iter().map(|(k, v)| format!("{v:.3} (k={k})")).collect::<Vec<_>>().join(", "),
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>()
        ),
    );
}

#[test]
fn criterion_12_determinism() {
    let (serial, _) = success_run();
    let parallel = run_replication(
        &ExperimentConfig {
            parallelism: 8,
            ..success_cfg()
        },
        false,
    )
    .unwrap();
    let a = csv_bytes(&serial.rows);
    let b = csv_bytes(&parallel.rows);
    let mut ga = Vec::new();
    let mut gb = Vec::new();
    write_csv(&mut ga, &serial.aggregates).unwrap();
    write_csv(&mut gb, &parallel.aggregates).unwrap();
    report(
        12,
        "determinism",
        a == b && ga == gb,
        &format!("{} result bytes and {} aggregate bytes, identical: {}", a.len(), ga.len(), a == b && ga == gb),
    );
}

#[test]
fn wilson_interval_is_sane_for_reporting() {
    let (lo, hi) = wilson_interval(60, 100, 1.96);
    assert!(lo < 0.6 && hi > 0.6);
}
