//! Experiment configs, the run driver, report/CSV emission and matrix files.
//!
//! A run reads one JSON config, validates every field against the target
//! experiment before sampling, and writes into the output directory:
//!
//! * `report.json`: config echo, tail tables, statistics and verdicts. It
//!   depends only on the config, so reruns are byte-identical.
//! * `tails.csv` (and `tails_<quantity>.csv`), `norms.csv`, `scaling.csv`,
//!   `smallball.csv`, `verdicts.csv` when the report has such rows.
//! * `run-manifest.json`: the effective config, seed, crate version, file
//!   list and wall-clock time. Passing it back as `--config` reruns the
//!   experiment.
//! * `error.json` instead of the above when the run fails.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::constructions::{adversarial_matrix, ShiftedEnsemble};
use crate::distributions::{find_controlling_phase, check_kappa_control, sample, DistributionKind, EntryDistribution, KappaGrid};
use crate::error::{Error, Result};
use crate::experiments::{
    construction_check, edelman_check, main_theorem_check, norm_survey, per_trial, tail_experiment, ExperimentReport,
    Quantity, RunOptions, TailRow,
};
use crate::linalg::{singular_values, SpectralSummary};
use crate::rng::derive_seed;
use crate::small_ball::{
    fourier_upper_bound, real_weights, small_ball_exact, small_ball_mc, SmallBallResult, DEFAULT_ESSEEN_C,
};
use crate::stats::median;
use crate::Matrix;

pub const DEFAULT_OUT_DIR: &str = "rmt-out";
const DEFAULT_DIST_CHECK_SAMPLES: usize = 10_000;
const DEFAULT_SMALL_BALL_TRIALS: usize = 100_000;
const PHASE_RESOLUTION: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    DistCheck,
    Spectrum,
    Tails,
    Edelman,
    MainTheorem,
    Construction,
    Smallball,
    Norms,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::DistCheck => "dist-check",
            ExperimentKind::Spectrum => "spectrum",
            ExperimentKind::Tails => "tails",
            ExperimentKind::Edelman => "edelman",
            ExperimentKind::MainTheorem => "main-theorem",
            ExperimentKind::Construction => "construction",
            ExperimentKind::Smallball => "smallball",
            ExperimentKind::Norms => "norms",
        }
    }
}

/// The fixed part `M` of `M + N`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ShiftKind {
    Zero,
    /// The adversarial shift with scale `l`.
    Adversarial { l: f64 },
    /// `scale * I`.
    Identity { scale: f64 },
    /// Dense matrix file, see [`read_matrix_csv`].
    Csv { path: PathBuf },
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distribution: Option<DistributionKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_grid: Option<Vec<usize>>,
    #[serde(default, alias = "t_grid", skip_serializing_if = "Option::is_none")]
    pub thresholds: Option<Vec<f64>>,
    #[serde(default, alias = "L_grid", skip_serializing_if = "Option::is_none")]
    pub l_grid: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, alias = "A", skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trials: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub esseen_c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shift: Option<ShiftKind>,
    /// Real weight vector for the small-ball experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    /// Thread count; never changes results.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub workers: Option<usize>,
}

/// Command-line values that take precedence over the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub experiment: Option<ExperimentKind>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub out: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parse a config, or the `config` member of a run manifest.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let inner = match &value {
            serde_json::Value::Object(map) if map.get("tool").and_then(|t| t.as_str()) == Some("rmt") => {
                map.get("config").cloned().unwrap_or(serde_json::Value::Null)
            }
            _ => value,
        };
        Ok(serde_json::from_value(inner)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    /// Apply command-line overrides. A subcommand that disagrees with the
    /// file's `experiment` is a validation error.
    pub fn with_overrides(mut self, o: &Overrides) -> Result<Self> {
        if let Some(kind) = o.experiment {
            match self.experiment {
                Some(existing) if existing != kind => {
                    return Err(Error::Validation(vec![format!(
                        "config is for experiment '{}' but the command asked for '{}'",
                        existing.name(),
                        kind.name()
                    )]))
                }
                _ => self.experiment = Some(kind),
            }
        }
        if o.seed.is_some() {
            self.seed = o.seed;
        }
        if o.trials.is_some() {
            self.trials = o.trials;
        }
        if o.out.is_some() {
            self.out = o.out.clone();
        }
        Ok(self)
    }

    /// The fields that determine results: everything except `out` and `workers`.
    pub fn echo(&self) -> serde_json::Value {
        let mut c = self.clone();
        c.out = None;
        c.workers = None;
        serde_json::to_value(c).expect("config serializes")
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    fn run_options(&self) -> RunOptions {
        RunOptions { workers: self.workers }
    }

    /// Check every precondition of the target experiment; all violations are
    /// reported together.
    pub fn validate(&self) -> Result<ExperimentKind> {
        let mut v = Vec::new();
        let Some(kind) = self.experiment else {
            return Err(Error::Validation(vec!["experiment kind is missing".into()]));
        };
        if self.seed.is_none() {
            v.push("seed is required (there is no clock-based default)".into());
        }
        if self.workers == Some(0) {
            v.push("workers must be at least 1".into());
        }
        use ExperimentKind::*;
        let allowed: &[&str] = match kind {
            DistCheck => &["distribution", "kappa", "trials"],
            Spectrum => &["distribution", "n", "shift", "trials"],
            Tails => &["distribution", "n", "shift", "thresholds", "trials"],
            Edelman => &["distribution", "n", "thresholds", "trials"],
            MainTheorem => &["distribution", "n", "shift", "gamma", "a", "trials"],
            Construction => &["distribution", "n", "l_grid", "trials"],
            Smallball => &["distribution", "n", "weights", "eps", "esseen_c", "trials"],
            Norms => &["distribution", "n_grid", "trials"],
        };
        let present = [
            ("distribution", self.distribution.is_some()),
            ("n", self.n.is_some()),
            ("n_grid", self.n_grid.is_some()),
            ("thresholds", self.thresholds.is_some()),
            ("l_grid", self.l_grid.is_some()),
            ("gamma", self.gamma.is_some()),
            ("a", self.a.is_some()),
            ("trials", self.trials.is_some()),
            ("esseen_c", self.esseen_c.is_some()),
            ("shift", self.shift.is_some()),
            ("weights", self.weights.is_some()),
            ("eps", self.eps.is_some()),
            ("kappa", self.kappa.is_some()),
        ];
        for (name, is_set) in present {
            if is_set && !allowed.contains(&name) {
                v.push(format!("field '{name}' is not used by experiment '{}'", kind.name()));
            }
        }

        let law = match &self.distribution {
            Some(d) => match EntryDistribution::new(d.clone()) {
                Ok(law) => Some(law),
                Err(e) => {
                    v.push(e.to_string());
                    None
                }
            },
            None => None,
        };
        let needs_law = matches!(kind, DistCheck | Tails | MainTheorem | Smallball | Norms);
        if needs_law && self.distribution.is_none() {
            v.push("distribution is required".into());
        }
        if let Some(law) = &law {
            if matches!(kind, Spectrum | Tails | MainTheorem | Norms) && !law.is_real() {
                v.push(format!("law {} is complex; matrix ensembles are real", law.name()));
            }
            if kind == Edelman && *law.kind() != DistributionKind::Gaussian {
                v.push("edelman runs with the Gaussian law only".into());
            }
            if kind == Construction && *law.kind() != DistributionKind::Bernoulli {
                v.push("construction runs with the Bernoulli law only".into());
            }
            if kind == Norms && (law.mean().abs() > 1e-9 || (law.variance() - 1.0).abs() > 1e-9) {
                v.push(format!("norm survey needs mean 0 and variance 1, {} has mean {} and variance {}", law.name(), law.mean(), law.variance()));
            }
        }

        let min_trials = match kind {
            Tails | Edelman | MainTheorem => Some(crate::experiments::MIN_TAIL_TRIALS),
            Spectrum if self.distribution.is_some() => Some(1),
            Construction | Norms => Some(1),
            _ => None,
        };
        match (min_trials, self.trials) {
            (Some(m), None) => v.push(format!("trials is required (at least {m})")),
            (Some(m), Some(t)) if t < m => v.push(format!("trials must be at least {m}, got {t}")),
            (None, Some(0)) => v.push("trials must be positive".into()),
            _ => {}
        }

        let needs_n = matches!(kind, Spectrum | Tails | Edelman | MainTheorem | Construction);
        let csv_shift = matches!(self.shift, Some(ShiftKind::Csv { .. }));
        match self.n {
            Some(0) => v.push("n must be positive".into()),
            None if needs_n && !csv_shift => v.push("n is required".into()),
            _ => {}
        }
        if kind == Construction {
            if let Some(n) = self.n {
                if n % 2 == 1 {
                    v.push(format!("construction needs even n (the zero-sum event requires it), got n={n}"));
                } else if n < 4 {
                    v.push(format!("construction needs n >= 4, got {n}"));
                }
            }
            match &self.l_grid {
                None => v.push("l_grid is required".into()),
                Some(g) if g.is_empty() => v.push("l_grid is empty".into()),
                Some(g) => {
                    let n = self.n.unwrap_or(0) as f64;
                    for &l in g {
                        if !(l.is_finite() && l >= n) {
                            v.push(format!("every L must be finite and >= n; got {l}"));
                        }
                    }
                }
            }
        }
        if matches!(kind, Tails | Edelman) {
            match &self.thresholds {
                None => v.push("thresholds are required".into()),
                Some(t) if t.is_empty() => v.push("thresholds are empty".into()),
                Some(t) => {
                    if t.iter().any(|x| !x.is_finite()) {
                        v.push("thresholds must be finite".into());
                    }
                }
            }
        }
        if kind == MainTheorem {
            match self.gamma {
                Some(g) if g.is_finite() && g >= 0.5 => {}
                Some(g) => v.push(format!("gamma must be >= 1/2, got {g}")),
                None => v.push("gamma is required".into()),
            }
            match self.a {
                Some(a) if a.is_finite() && a >= 0.0 => {}
                Some(a) => v.push(format!("a must be >= 0, got {a}")),
                None => v.push("a is required".into()),
            }
        }
        if kind == Norms {
            match &self.n_grid {
                None => v.push("n_grid is required".into()),
                Some(g) if g.is_empty() || g.contains(&0) => v.push("n_grid must be non-empty with positive entries".into()),
                _ => {}
            }
        }
        if kind == Smallball {
            match (&self.weights, self.n) {
                (None, None) => v.push("either weights or n (flat vector) is required".into()),
                (Some(_), Some(_)) => v.push("give weights or n, not both".into()),
                (Some(w), None) if w.is_empty() || w.iter().any(|x| !x.is_finite()) => {
                    v.push("weights must be non-empty and finite".into())
                }
                _ => {}
            }
            match self.eps {
                Some(e) if e.is_finite() && e >= 0.0 => {}
                Some(e) => v.push(format!("eps must be finite and >= 0, got {e}")),
                None => v.push("eps is required".into()),
            }
            if let Some(c) = self.esseen_c {
                if !(c.is_finite() && c > 0.0) {
                    v.push(format!("esseen_c must be positive, got {c}"));
                }
            }
        }
        if let Some(k) = self.kappa {
            if !(k.is_finite() && k > 0.0) {
                v.push(format!("kappa must be positive, got {k}"));
            }
        }
        match &self.shift {
            Some(ShiftKind::Adversarial { l }) => {
                let n = self.n.unwrap_or(0);
                if n % 2 == 1 {
                    v.push(format!("adversarial shift needs even n (the zero-sum event requires it), got n={n}"));
                }
                if !(l.is_finite() && *l >= n as f64) {
                    v.push(format!("adversarial shift needs L >= n, got L={l}"));
                }
            }
            Some(ShiftKind::Identity { scale }) if !scale.is_finite() => {
                v.push("identity shift scale must be finite".into())
            }
            _ => {}
        }
        if v.is_empty() {
            Ok(kind)
        } else {
            Err(Error::Validation(v))
        }
    }
}

fn law_of(cfg: &ExperimentConfig) -> Result<EntryDistribution> {
    let kind = cfg
        .distribution
        .clone()
        .ok_or_else(|| Error::Validation(vec!["distribution is required".into()]))?;
    EntryDistribution::new(kind)
}

fn shift_of(cfg: &ExperimentConfig) -> Result<Matrix> {
    let m = match &cfg.shift {
        Some(ShiftKind::Csv { path }) => read_matrix_csv(path)?,
        Some(ShiftKind::Adversarial { l }) => adversarial_matrix(cfg.n.unwrap_or(0), *l)?,
        Some(ShiftKind::Identity { scale }) => {
            let n = cfg.n.unwrap_or(0);
            Matrix::from_fn(n, n, |i, j| if i == j { *scale } else { 0.0 })
        }
        Some(ShiftKind::Zero) | None => Matrix::zeros(cfg.n.unwrap_or(0), cfg.n.unwrap_or(0)),
    };
    if let Some(n) = cfg.n {
        if m.n_rows() != n {
            return Err(Error::Validation(vec![format!(
                "shift matrix is {}x{} but n = {n}",
                m.n_rows(),
                m.n_cols()
            )]));
        }
    }
    Ok(m)
}

/// Run the experiment described by `cfg` and return its report, without
/// touching the file system (except to read a CSV shift).
pub fn execute(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let kind = cfg.validate()?;
    let seed = cfg.seed.expect("validated");
    let opts = cfg.run_options();
    let mut report = match kind {
        ExperimentKind::DistCheck => dist_check(cfg, seed)?,
        ExperimentKind::Spectrum => spectrum(cfg, seed, &opts)?,
        ExperimentKind::Tails => {
            let e = ShiftedEnsemble::new(shift_of(cfg)?, law_of(cfg)?)?;
            let t = cfg.thresholds.as_deref().unwrap_or_default();
            tail_experiment(&e, t, cfg.trials.unwrap_or(0), seed, &opts)?
        }
        ExperimentKind::Edelman => edelman_check(
            cfg.n.unwrap_or(0),
            cfg.thresholds.as_deref().unwrap_or_default(),
            cfg.trials.unwrap_or(0),
            seed,
            &opts,
        )?,
        ExperimentKind::MainTheorem => main_theorem_check(
            &shift_of(cfg)?,
            &law_of(cfg)?,
            cfg.gamma.unwrap_or(0.5),
            cfg.a.unwrap_or(0.0),
            cfg.trials.unwrap_or(0),
            seed,
            &opts,
        )?,
        ExperimentKind::Construction => construction_check(
            cfg.n.unwrap_or(0),
            cfg.l_grid.as_deref().unwrap_or_default(),
            cfg.trials.unwrap_or(0),
            seed,
            &opts,
        )?,
        ExperimentKind::Smallball => small_ball_report(cfg, seed)?,
        ExperimentKind::Norms => norm_survey(
            &law_of(cfg)?,
            cfg.n_grid.as_deref().unwrap_or_default(),
            cfg.trials.unwrap_or(0),
            seed,
            &opts,
        )?,
    };
    report.experiment = kind.name().into();
    report.config = cfg.echo();
    Ok(report)
}

fn finite_or_null(x: f64) -> serde_json::Value {
    serde_json::Value::from(x)
}

fn dist_check(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    let law = law_of(cfg)?;
    let grid = KappaGrid::default();
    let mut report = ExperimentReport::default();
    let count = cfg.trials.unwrap_or(DEFAULT_DIST_CHECK_SAMPLES);
    let mut details = serde_json::json!({
        "name": law.name(),
        "mean_re": law.complex_mean().re,
        "mean_im": law.complex_mean().im,
        "variance": law.variance(),
        "second_moment": law.second_moment(),
        "discrete": law.is_discrete(),
    });
    if law.is_real() {
        let xs = sample(&law, seed, count)?;
        let k = xs.len() as f64;
        let m = xs.iter().sum::<f64>() / k;
        let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (k - 1.0).max(1.0);
        report.statistics.insert("sample_mean".into(), m);
        report.statistics.insert("sample_variance".into(), var);
    }
    if let Some(kappa) = cfg.kappa {
        let r = check_kappa_control(&law, kappa, &grid)?;
        details["kappa_check"] = serde_json::to_value(&r)?;
    }
    match find_controlling_phase(&law, PHASE_RESOLUTION, &grid) {
        Ok(p) => {
            report.statistics.insert("controlling_theta".into(), p.theta);
            report.statistics.insert("controlling_kappa".into(), p.kappa);
            details["phase"] = serde_json::to_value(&p)?;
        }
        Err(Error::SearchFailure {
            best_theta,
            best_kappa,
            best_margin,
        }) => {
            details["phase"] = serde_json::json!({
                "found": false,
                "best_theta": finite_or_null(best_theta),
                "best_kappa": finite_or_null(best_kappa),
                "best_margin": finite_or_null(best_margin),
            });
        }
        Err(e) => return Err(e),
    }
    report.details = details;
    Ok(report)
}

fn summary_json(s: &SpectralSummary<f64>) -> serde_json::Value {
    serde_json::json!({
        "s1": s.s1,
        "sn": s.sn,
        "kappa": finite_or_null(s.kappa),
        "log_kappa": finite_or_null(s.log_kappa),
        "singular": s.is_singular(),
    })
}

fn spectrum(cfg: &ExperimentConfig, seed: u64, opts: &RunOptions) -> Result<ExperimentReport> {
    let m = shift_of(cfg)?;
    let mut report = ExperimentReport::default();
    let values = singular_values(&m)?;
    let shift_summary = SpectralSummary::from_singular_values(&values)?;
    report.details = serde_json::json!({
        "shift_singular_values": values,
        "shift_summary": summary_json(&shift_summary),
    });
    if cfg.distribution.is_none() {
        return Ok(report);
    }
    let e = ShiftedEnsemble::new(m, law_of(cfg)?)?;
    let trials = cfg.trials.unwrap_or(1);
    let rows = per_trial(trials, opts, |t| {
        let a = crate::constructions::sample_shifted(&e, derive_seed(seed, t as u64));
        SpectralSummary::from_singular_values(&singular_values(&a)?)
    })?;
    let s1: Vec<f64> = rows.iter().map(|r| r.s1).collect();
    let sn: Vec<f64> = rows.iter().map(|r| r.sn).collect();
    let singular = rows.iter().filter(|r| r.is_singular()).count();
    let finite_logs: Vec<f64> = rows.iter().map(|r| r.log_kappa).filter(|x| x.is_finite()).collect();
    report.statistics.insert("median_s1".into(), median(&s1));
    report.statistics.insert("median_sn".into(), median(&sn));
    report.statistics.insert("singular_fraction".into(), singular as f64 / trials as f64);
    if !finite_logs.is_empty() {
        report.statistics.insert("median_log_kappa_nonsingular".into(), median(&finite_logs));
    }
    Ok(report)
}

fn small_ball_report(cfg: &ExperimentConfig, seed: u64) -> Result<ExperimentReport> {
    let law = law_of(cfg)?;
    let v = match (&cfg.weights, cfg.n) {
        (Some(w), _) => real_weights(w),
        (None, Some(n)) => real_weights(&vec![1.0 / (n as f64).sqrt(); n]),
        (None, None) => return Err(Error::Validation(vec!["weights or n is required".into()])),
    };
    let eps = cfg.eps.unwrap_or(0.0);
    let mut results = Vec::new();
    if law.is_discrete() {
        match small_ball_exact(&law, &v, eps) {
            Ok(r) => results.push(r),
            Err(Error::BudgetExceeded { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    results.push(small_ball_mc(&law, &v, eps, cfg.trials.unwrap_or(DEFAULT_SMALL_BALL_TRIALS), seed)?);
    if eps > 0.0 {
        results.push(fourier_upper_bound(&law, &v, eps, cfg.esseen_c.unwrap_or(DEFAULT_ESSEEN_C))?);
    }
    let mut report = ExperimentReport::default();
    report.details = serde_json::json!({ "small_ball": results });
    Ok(report)
}

/// Paths written by a successful run.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub out_dir: PathBuf,
    pub report: ExperimentReport,
    pub files: Vec<PathBuf>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    experiment: &'a str,
    seed: u64,
    config: &'a ExperimentConfig,
    files: Vec<String>,
    wall_clock_seconds: f64,
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn fmt_opt<T: Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Input(format!("{other:?}")),
    })?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

const TAIL_HEADER: [&str; 9] = ["n", "t", "trials", "hits", "p_hat", "ci_low", "ci_high", "bound_value", "verdict"];

fn tail_record(r: &TailRow) -> Vec<String> {
    let e = &r.estimate;
    vec![
        r.n.to_string(),
        e.threshold.to_string(),
        e.trials.to_string(),
        e.hits.to_string(),
        e.p_hat.to_string(),
        e.ci_low.to_string(),
        e.ci_high.to_string(),
        fmt_opt(r.bound_value),
        fmt_opt(r.verdict),
    ]
}

/// Write the CSV tables of `report` into `dir`; returns the file names.
pub fn write_tables(report: &ExperimentReport, dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for q in [Quantity::LeastSingularValue, Quantity::NoiseNorm, Quantity::ConditionNumber] {
        let rows: Vec<Vec<String>> = report.tails.iter().filter(|r| r.quantity == q).map(tail_record).collect();
        if rows.is_empty() {
            continue;
        }
        let name = if q == Quantity::LeastSingularValue {
            "tails.csv".to_string()
        } else {
            format!("tails_{}.csv", q.slug())
        };
        let path = dir.join(name);
        write_csv(&path, &TAIL_HEADER, &rows)?;
        files.push(path);
    }
    if !report.norms.is_empty() {
        let rows: Vec<Vec<String>> = report
            .norms
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.trials.to_string(),
                    r.mean_norm_over_sqrt_n.to_string(),
                    r.max_norm_over_sqrt_n.to_string(),
                    r.mean_norm.to_string(),
                    r.seginer_rhs.to_string(),
                    r.seginer_ratio.to_string(),
                    r.mean_frobenius.to_string(),
                    r.frobenius_dominates.to_string(),
                ]
            })
            .collect();
        let path = dir.join("norms.csv");
        write_csv(
            &path,
            &[
                "n",
                "trials",
                "mean_norm_over_sqrt_n",
                "max_norm_over_sqrt_n",
                "mean_norm",
                "seginer_rhs",
                "seginer_ratio",
                "mean_frobenius",
                "frobenius_dominates",
            ],
            &rows,
        )?;
        files.push(path);
    }
    if !report.scaling.is_empty() {
        let rows: Vec<Vec<String>> = report
            .scaling
            .iter()
            .map(|r| {
                vec![
                    r.n.to_string(),
                    r.l.to_string(),
                    r.shift_norm.to_string(),
                    r.median_sn.to_string(),
                    fmt_opt(r.median_sn_event),
                    r.median_first_row_residual.to_string(),
                    r.median_profile_deviation.to_string(),
                    r.predicted.to_string(),
                ]
            })
            .collect();
        let path = dir.join("scaling.csv");
        write_csv(
            &path,
            &[
                "n",
                "L",
                "shift_norm",
                "median_sn",
                "median_sn_event",
                "median_first_row_residual",
                "median_profile_deviation",
                "predicted",
            ],
            &rows,
        )?;
        files.push(path);
    }
    if let Some(results) = report.details.get("small_ball") {
        let results: Vec<SmallBallResult> = serde_json::from_value(results.clone())?;
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|r| {
                vec![
                    serde_json::to_value(r.method).ok().and_then(|m| m.as_str().map(String::from)).unwrap_or_default(),
                    r.v.len().to_string(),
                    r.eps.to_string(),
                    r.rho.to_string(),
                    r.z_star.re.to_string(),
                    r.z_star.im.to_string(),
                    r.ci_low.to_string(),
                    r.ci_high.to_string(),
                    r.clamped.to_string(),
                ]
            })
            .collect();
        let path = dir.join("smallball.csv");
        write_csv(
            &path,
            &["method", "n", "eps", "rho", "z_re", "z_im", "ci_low", "ci_high", "clamped"],
            &rows,
        )?;
        files.push(path);
    }
    if !report.verdicts.is_empty() {
        let rows: Vec<Vec<String>> = report
            .verdicts
            .iter()
            .map(|v| {
                vec![
                    v.name.clone(),
                    v.holds.to_string(),
                    v.value.to_string(),
                    v.relation.clone(),
                    v.reference.to_string(),
                    v.margin.to_string(),
                    v.informative.to_string(),
                ]
            })
            .collect();
        let path = dir.join("verdicts.csv");
        write_csv(
            &path,
            &["name", "holds", "value", "relation", "reference", "margin", "informative"],
            &rows,
        )?;
        files.push(path);
    }
    Ok(files)
}

/// Validate, run, and write report, tables and manifest into `cfg.out`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome> {
    let start = Instant::now();
    let kind = cfg.validate()?;
    let dir = cfg.out_dir();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let report = execute(cfg)?;

    let report_path = dir.join("report.json");
    let mut text = serde_json::to_string_pretty(&report)?;
    text.push('\n');
    write_file(&report_path, text.as_bytes())?;
    let mut files = vec![report_path];
    files.extend(write_tables(&report, &dir)?);

    let manifest_path = dir.join("run-manifest.json");
    let manifest = Manifest {
        tool: "rmt",
        version: env!("CARGO_PKG_VERSION"),
        experiment: kind.name(),
        seed: cfg.seed.expect("validated"),
        config: cfg,
        files: files
            .iter()
            .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
            .collect(),
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    };
    write_file(&manifest_path, serde_json::to_string_pretty(&manifest)?.as_bytes())?;
    files.push(manifest_path);
    Ok(RunOutcome {
        out_dir: dir,
        report,
        files,
    })
}

/// Machine-readable failure record.
pub fn error_record(err: &Error) -> serde_json::Value {
    let violations = match err {
        Error::Validation(v) => v.clone(),
        _ => Vec::new(),
    };
    serde_json::json!({
        "status": "error",
        "kind": err.kind(),
        "exit_code": err.exit_code(),
        "message": err.to_string(),
        "violations": violations,
    })
}

/// Best-effort write of `error.json` into `dir`.
pub fn write_error_record(dir: &Path, err: &Error) -> Result<PathBuf> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("error.json");
    write_file(&path, serde_json::to_string_pretty(&error_record(err))?.as_bytes())?;
    Ok(path)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlotKind {
    Tail,
    Histogram,
    Norms,
    Scaling,
}

impl std::str::FromStr for PlotKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tail" => Ok(PlotKind::Tail),
            "histogram" => Ok(PlotKind::Histogram),
            "norms" => Ok(PlotKind::Norms),
            "scaling" => Ok(PlotKind::Scaling),
            other => Err(Error::Input(format!(
                "unknown plot kind '{other}' (expected tail, histogram, norms or scaling)"
            ))),
        }
    }
}

/// Write `plot_<kind>.csv` next to the report. Values are copied from the
/// report, never recomputed; the only derived column is the `predicted`
/// curve `n / L` of the scaling plot.
pub fn emit_plot_data(report_path: &Path, kind: PlotKind) -> Result<PathBuf> {
    let text = fs::read_to_string(report_path).map_err(|e| Error::io(report_path, e))?;
    let report: ExperimentReport = serde_json::from_str(&text)?;
    let dir = report_path.parent().unwrap_or_else(|| Path::new("."));
    let (name, header, rows): (&str, Vec<&str>, Vec<Vec<String>>) = match kind {
        PlotKind::Tail => (
            "plot_tail.csv",
            vec!["t", "p_hat", "ci_low", "ci_high", "bound"],
            report
                .tails
                .iter()
                .filter(|r| r.quantity == Quantity::LeastSingularValue)
                .map(|r| {
                    let e = &r.estimate;
                    vec![
                        e.threshold.to_string(),
                        e.p_hat.to_string(),
                        e.ci_low.to_string(),
                        e.ci_high.to_string(),
                        fmt_opt(r.bound_value),
                    ]
                })
                .collect(),
        ),
        PlotKind::Histogram => (
            "plot_histogram.csv",
            vec!["label", "bin_low", "bin_high", "count"],
            report
                .histograms
                .iter()
                .flat_map(|h| {
                    h.counts.iter().enumerate().map(move |(i, c)| {
                        vec![h.label.clone(), h.edges[i].to_string(), h.edges[i + 1].to_string(), c.to_string()]
                    })
                })
                .collect(),
        ),
        PlotKind::Norms => (
            "plot_norms.csv",
            vec!["n", "mean_norm_over_sqrt_n", "max_norm_over_sqrt_n", "seginer_ratio"],
            report
                .norms
                .iter()
                .map(|r| {
                    vec![
                        r.n.to_string(),
                        r.mean_norm_over_sqrt_n.to_string(),
                        r.max_norm_over_sqrt_n.to_string(),
                        r.seginer_ratio.to_string(),
                    ]
                })
                .collect(),
        ),
        PlotKind::Scaling => (
            "plot_scaling.csv",
            vec!["L", "median_sn", "predicted", "median_sn_event"],
            report
                .scaling
                .iter()
                .map(|r| {
                    vec![
                        r.l.to_string(),
                        r.median_sn.to_string(),
                        r.predicted.to_string(),
                        fmt_opt(r.median_sn_event),
                    ]
                })
                .collect(),
        ),
    };
    if rows.is_empty() {
        return Err(Error::Input(format!(
            "report from experiment '{}' has no data for a {kind:?} plot",
            report.experiment
        )));
    }
    let path = dir.join(name);
    write_csv(&path, &header, &rows)?;
    Ok(path)
}

/// Dense matrix file: first line `n`, then `n` lines of `n` comma-separated
/// decimals.
pub fn read_matrix_csv(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_matrix_csv(&text).map_err(|e| match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_matrix_csv(text: &str) -> Result<Matrix> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut records = reader.records();
    let first = records
        .next()
        .ok_or_else(|| Error::Input("matrix file is empty".into()))??;
    if first.len() != 1 {
        return Err(Error::Input(format!("line 1 must hold only n, found {} fields", first.len())));
    }
    let n: usize = first[0]
        .parse()
        .map_err(|_| Error::Input(format!("line 1: '{}' is not a size", &first[0])))?;
    if n == 0 {
        return Err(Error::Input("matrix size must be positive".into()));
    }
    let mut data = Vec::with_capacity(n * n);
    let mut rows = 0;
    for (i, rec) in records.enumerate() {
        let rec = rec?;
        if rec.len() == 1 && rec[0].is_empty() {
            continue;
        }
        let line = i + 2;
        if rec.len() != n {
            return Err(Error::Input(format!("line {line}: expected {n} values, found {}", rec.len())));
        }
        for field in rec.iter() {
            let x: f64 = field
                .parse()
                .map_err(|_| Error::Input(format!("line {line}: '{field}' is not a number")))?;
            if !x.is_finite() {
                return Err(Error::Input(format!("line {line}: non-finite entry")));
            }
            data.push(x);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::Input(format!("expected {n} matrix rows, found {rows}")));
    }
    Matrix::new(n, n, data)
}

pub fn write_matrix_csv(path: &Path, m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::Input("only square matrices have a file format".into()));
    }
    let mut text = format!("{}\n", m.n_rows());
    for row in m.rows_iter() {
        let line: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    write_file(path, text.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(json: &str) -> ExperimentConfig {
        ExperimentConfig::from_json(json).unwrap()
    }

    #[test]
    fn validation_lists_every_problem() {
        let c = cfg(r#"{"experiment":"construction","n":5,"l_grid":[2.0],"trials":0}"#);
        match c.validate().unwrap_err() {
            Error::Validation(v) => {
                assert!(v.iter().any(|m| m.contains("seed")));
                assert!(v.iter().any(|m| m.contains("even")));
                assert!(v.iter().any(|m| m.contains("L")));
                assert!(v.iter().any(|m| m.contains("trials")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"experiment":"tails","colour":1}"#).is_err());
        let c = cfg(r#"{"experiment":"edelman","n":10,"thresholds":[0.1],"trials":100,"seed":1,"gamma":1}"#);
        assert!(c.validate().is_err());
    }

    #[test]
    fn overrides_take_precedence() {
        let c = cfg(r#"{"experiment":"edelman","n":10,"thresholds":[0.1],"trials":100,"seed":1}"#);
        let o = Overrides {
            seed: Some(9),
            trials: Some(500),
            ..Default::default()
        };
        let c = c.with_overrides(&o).unwrap();
        assert_eq!((c.seed, c.trials), (Some(9), Some(500)));
        let clash = Overrides {
            experiment: Some(ExperimentKind::Norms),
            ..Default::default()
        };
        assert!(c.with_overrides(&clash).is_err());
    }

    #[test]
    fn smallball_flat_four() {
        let c = cfg(r#"{"experiment":"smallball","distribution":{"kind":"bernoulli"},"n":4,"eps":0,"seed":3,"trials":1000}"#);
        let r = execute(&c).unwrap();
        let rows: Vec<SmallBallResult> = serde_json::from_value(r.details["small_ball"].clone()).unwrap();
        assert_eq!(rows[0].rho, 0.375);
    }

    #[test]
    fn matrix_csv_round_trip() {
        let m = Matrix::from_fn(3, 3, |i, j| (i as f64 + 1.0) / (j as f64 + 3.0) - 0.1);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        write_matrix_csv(&p, &m).unwrap();
        assert_eq!(read_matrix_csv(&p).unwrap(), m);
        assert!(parse_matrix_csv("2\n1,2\n3\n").is_err());
        assert!(parse_matrix_csv("2\n1,2\n3,x\n").is_err());
        assert!(parse_matrix_csv("2\n1,2\n").is_err());
        assert!(matches!(read_matrix_csv(&dir.path().join("missing.csv")), Err(Error::Io { .. })));
    }

    #[test]
    fn plot_kind_parsing() {
        assert_eq!("scaling".parse::<PlotKind>().unwrap(), PlotKind::Scaling);
        assert!(matches!("pie".parse::<PlotKind>(), Err(Error::Input(_))));
    }
}
