//! Flat CSV row schemas. Floats are written with 17 significant digits so a
//! parse of the written text reproduces the value bit for bit; `None` is an
//! empty field.

use crate::error::{Error, Result};
use crate::regimes::Phase;
use csv::{ReaderBuilder, StringRecord, Terminator, WriterBuilder};
use std::io::{Read, Write};

pub trait Record: Sized {
    const HEADER: &'static [&'static str];
    fn to_fields(&self) -> Vec<String>;
    fn from_fields(fields: &StringRecord) -> Result<Self>;
}

fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

fn fmt_opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct Fields<'a> {
    rec: &'a StringRecord,
    at: usize,
}

impl<'a> Fields<'a> {
    fn new(rec: &'a StringRecord, want: usize) -> Result<Self> {
        if rec.len() != want {
            return Err(Error::Csv(format!("expected {want} fields, found {}", rec.len())));
        }
        Ok(Self { rec, at: 0 })
    }

    fn next_str(&mut self) -> &'a str {
        let s = self.rec.get(self.at).unwrap_or("");
        self.at += 1;
        s
    }

    fn parse<T: std::str::FromStr>(&mut self) -> Result<T> {
        let col = self.at;
        let s = self.next_str();
        s.parse()
            .map_err(|_| Error::Csv(format!("column {col}: cannot parse {s:?}")))
    }

    fn opt<T: std::str::FromStr>(&mut self) -> Result<Option<T>> {
        if self.rec.get(self.at) == Some("") {
            self.at += 1;
            Ok(None)
        } else {
            self.parse().map(Some)
        }
    }

    fn string(&mut self) -> String {
        self.next_str().to_string()
    }
}

fn parse_phase(s: &str) -> Result<Phase> {
    Phase::parse(s).ok_or_else(|| Error::Csv(format!("unknown phase {s:?}")))
}

pub fn write_csv<R: Record, W: Write>(out: W, rows: &[R]) -> Result<()> {
    let mut w = WriterBuilder::new()
        .terminator(Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(R::HEADER)?;
    for r in rows {
        w.write_record(r.to_fields())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Record, I: Read>(input: I) -> Result<Vec<R>> {
    let mut rd = ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = rd.headers()?.clone();
    if header.iter().ne(R::HEADER.iter().copied()) {
        return Err(Error::Csv(format!(
            "header mismatch: expected {}",
            R::HEADER.join(",")
        )));
    }
    rd.records().map(|r| R::from_fields(&r?)).collect()
}

/// One trained model evaluated on fresh test points.
#[derive(Clone, Debug, PartialEq)]
pub struct ResultRow {
    pub u: f64,
    pub m: usize,
    pub model: String,
    pub trial_weak: usize,
    /// Empty for models that do not depend on the inner trial.
    pub trial_wts: Option<usize>,
    pub accuracy: Option<f64>,
    pub su: Option<f64>,
    pub cn: Option<f64>,
    pub pseudolabel_agreement: Option<f64>,
    pub seed_used: u64,
    /// `ok`, or the error that removed this row from the aggregates.
    pub status: String,
}

impl Record for ResultRow {
    const HEADER: &'static [&'static str] = &[
        "u",
        "m",
        "model",
        "trial_weak",
        "trial_wts",
        "accuracy",
        "su",
        "cn",
        "pseudolabel_agreement",
        "seed_used",
        "status",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.u),
            self.m.to_string(),
            self.model.clone(),
            self.trial_weak.to_string(),
            fmt_opt(self.trial_wts),
            fmt_opt_f64(self.accuracy),
            fmt_opt_f64(self.su),
            fmt_opt_f64(self.cn),
            fmt_opt_f64(self.pseudolabel_agreement),
            self.seed_used.to_string(),
            self.status.clone(),
        ]
    }

    fn from_fields(rec: &StringRecord) -> Result<Self> {
        let mut f = Fields::new(rec, Self::HEADER.len())?;
        Ok(Self {
            u: f.parse()?,
            m: f.parse()?,
            model: f.string(),
            trial_weak: f.parse()?,
            trial_wts: f.opt()?,
            accuracy: f.opt()?,
            su: f.opt()?,
            cn: f.opt()?,
            pseudolabel_agreement: f.opt()?,
            seed_used: f.parse()?,
            status: f.string(),
        })
    }
}

/// Mean accuracy with a normal-approximation 95% interval per `(u, model)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AggregateRow {
    pub u: f64,
    /// Closed-form verdict at this u.
    pub phase: Phase,
    pub m: usize,
    pub model: String,
    pub count: usize,
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

impl Record for AggregateRow {
    const HEADER: &'static [&'static str] = &[
        "u", "phase", "m", "model", "count", "mean", "std_dev", "std_error", "ci_low", "ci_high",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.u),
            self.phase.as_str().to_string(),
            self.m.to_string(),
            self.model.clone(),
            self.count.to_string(),
            fmt_f64(self.mean),
            fmt_f64(self.std_dev),
            fmt_f64(self.std_error),
            fmt_f64(self.ci_low),
            fmt_f64(self.ci_high),
        ]
    }

    fn from_fields(rec: &StringRecord) -> Result<Self> {
        let mut f = Fields::new(rec, Self::HEADER.len())?;
        let u = f.parse()?;
        let phase = parse_phase(&f.string())?;
        Ok(Self {
            u,
            phase,
            m: f.parse()?,
            model: f.string(),
            count: f.parse()?,
            mean: f.parse()?,
            std_dev: f.parse()?,
            std_error: f.parse()?,
            ci_low: f.parse()?,
            ci_high: f.parse()?,
        })
    }
}

/// One cell of a phase diagram.
#[derive(Clone, Debug, PartialEq)]
pub struct RegimeRow {
    pub axis1: f64,
    pub axis2: f64,
    pub phase: Phase,
    pub tau_strong: f64,
    pub tau_weak: f64,
    pub tau_w2s: f64,
    pub threshold_u: f64,
    pub weak_fails: bool,
    pub capability: bool,
    pub pca_fails: bool,
    pub strong_fails_n_clean: bool,
    pub nonvacuous: bool,
    /// Violated hypotheses, `;`-joined.
    pub violated: String,
}

impl Record for RegimeRow {
    const HEADER: &'static [&'static str] = &[
        "axis1",
        "axis2",
        "phase",
        "tau_strong",
        "tau_weak",
        "tau_w2s",
        "threshold_u",
        "weak_fails",
        "capability",
        "pca_fails",
        "strong_fails_n_clean",
        "nonvacuous",
        "violated",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            fmt_f64(self.axis1),
            fmt_f64(self.axis2),
            self.phase.as_str().to_string(),
            fmt_f64(self.tau_strong),
            fmt_f64(self.tau_weak),
            fmt_f64(self.tau_w2s),
            fmt_f64(self.threshold_u),
            self.weak_fails.to_string(),
            self.capability.to_string(),
            self.pca_fails.to_string(),
            self.strong_fails_n_clean.to_string(),
            self.nonvacuous.to_string(),
            self.violated.clone(),
        ]
    }

    fn from_fields(rec: &StringRecord) -> Result<Self> {
        let mut f = Fields::new(rec, Self::HEADER.len())?;
        let axis1 = f.parse()?;
        let axis2 = f.parse()?;
        let phase = parse_phase(&f.string())?;
        Ok(Self {
            axis1,
            axis2,
            phase,
            tau_strong: f.parse()?,
            tau_weak: f.parse()?,
            tau_w2s: f.parse()?,
            threshold_u: f.parse()?,
            weak_fails: f.parse()?,
            capability: f.parse()?,
            pca_fails: f.parse()?,
            strong_fails_n_clean: f.parse()?,
            nonvacuous: f.parse()?,
            violated: f.string(),
        })
    }
}

/// Bound, quadrature and Monte Carlo values at one `(N, ρ₀, δ₀)`.
#[derive(Clone, Debug, PartialEq)]
pub struct TailRow {
    pub n: u64,
    pub rho0: f64,
    pub delta0: f64,
    pub t: f64,
    pub bound_raw: Option<f64>,
    pub bound_clipped: Option<f64>,
    pub exact_quadrature: Option<f64>,
    pub mc_estimate: Option<f64>,
    pub mc_stderr: Option<f64>,
    pub status: String,
}

impl Record for TailRow {
    const HEADER: &'static [&'static str] = &[
        "N",
        "rho0",
        "delta0",
        "t",
        "bound_raw",
        "bound_clipped",
        "exact_quadrature",
        "mc_estimate",
        "mc_stderr",
        "status",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            fmt_f64(self.rho0),
            fmt_f64(self.delta0),
            fmt_f64(self.t),
            fmt_opt_f64(self.bound_raw),
            fmt_opt_f64(self.bound_clipped),
            fmt_opt_f64(self.exact_quadrature),
            fmt_opt_f64(self.mc_estimate),
            fmt_opt_f64(self.mc_stderr),
            self.status.clone(),
        ]
    }

    fn from_fields(rec: &StringRecord) -> Result<Self> {
        let mut f = Fields::new(rec, Self::HEADER.len())?;
        Ok(Self {
            n: f.parse()?,
            rho0: f.parse()?,
            delta0: f.parse()?,
            t: f.parse()?,
            bound_raw: f.opt()?,
            bound_clipped: f.opt()?,
            exact_quadrature: f.opt()?,
            mc_estimate: f.opt()?,
            mc_stderr: f.opt()?,
            status: f.string(),
        })
    }
}

/// Clean-label survival and contamination of one trained model.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagnoseRow {
    pub n: usize,
    pub trial: usize,
    pub d: usize,
    pub s: usize,
    pub su: Option<f64>,
    pub cn: Option<f64>,
    pub ratio: Option<f64>,
    pub total_var: Option<f64>,
    pub closed_form_accuracy: Option<f64>,
    pub empirical_accuracy: Option<f64>,
    /// `μ_n² n^{r−1} + n^{1−p}`, the contamination lower bound without its constant.
    pub cn_sq_lower: f64,
    /// Whether `cn² ≥ 0.1 · cn_sq_lower`.
    pub cn_bound_ok: Option<bool>,
    /// `μ_n`, the predicted survival order.
    pub su_predicted: f64,
    pub seed_used: u64,
    pub status: String,
}

impl Record for DiagnoseRow {
    const HEADER: &'static [&'static str] = &[
        "n",
        "trial",
        "d",
        "s",
        "su",
        "cn",
        "ratio",
        "total_var",
        "closed_form_accuracy",
        "empirical_accuracy",
        "cn_sq_lower",
        "cn_bound_ok",
        "su_predicted",
        "seed_used",
        "status",
    ];

    fn to_fields(&self) -> Vec<String> {
        vec![
            self.n.to_string(),
            self.trial.to_string(),
            self.d.to_string(),
            self.s.to_string(),
            fmt_opt_f64(self.su),
            fmt_opt_f64(self.cn),
            fmt_opt_f64(self.ratio),
            fmt_opt_f64(self.total_var),
            fmt_opt_f64(self.closed_form_accuracy),
            fmt_opt_f64(self.empirical_accuracy),
            fmt_f64(self.cn_sq_lower),
            fmt_opt(self.cn_bound_ok),
            fmt_f64(self.su_predicted),
            self.seed_used.to_string(),
            self.status.clone(),
        ]
    }

    fn from_fields(rec: &StringRecord) -> Result<Self> {
        let mut f = Fields::new(rec, Self::HEADER.len())?;
        Ok(Self {
            n: f.parse()?,
            trial: f.parse()?,
            d: f.parse()?,
            s: f.parse()?,
            su: f.opt()?,
            cn: f.opt()?,
            ratio: f.opt()?,
            total_var: f.opt()?,
            closed_form_accuracy: f.opt()?,
            empirical_accuracy: f.opt()?,
            cn_sq_lower: f.parse()?,
            cn_bound_ok: f.opt()?,
            su_predicted: f.parse()?,
            seed_used: f.parse()?,
            status: f.string(),
        })
    }
}
