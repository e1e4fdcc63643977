//! Monte Carlo engine behind `fit`, `infer` and `reproduce`.

use std::sync::OnceLock;
use std::io::Write;
use std::time::Instant;

use nalgebra::DVector;

use conquer_core::data::format_float;
use conquer_core::datagen::{derive_seed, generate_auxiliary, generate_federated, make_truth, DgpSpec};
use conquer_core::extreme::{run_two_step_conquer, TwoStepConfig};
use conquer_core::federation::{
    comm_cost, dc_average, run_algorithm1, run_newton_variant, LocalSolver, RoundConfig, ScaleRule,
    SmoothingPlan,
};
use conquer_core::highdim::{
    fit_l1_conquer, lambda_grid, lambda_max, run_penalized_multiround, select_lambda, theorem9_bandwidths,
    LammConfig, PenaltySchedule, LAMBDA_GRID_RATIO, LAMBDA_GRID_SIZE,
};
use conquer_core::inference::{
    bootstrap_intervals, default_score_grid, estimate_variance, master_hessian_inverse, score_confidence_set,
    wald_intervals, BootVariant, BootstrapConfig, GridScan, InferenceReport, MasterHessian, Multipliers,
    ScoreConfig, VarianceKind,
};
use conquer_core::kernels::{Kernel, SmoothedLoss};
use conquer_core::par::map_indexed;
use conquer_core::smoothed_qr::{fit_conquer, GdBbConfig};
use conquer_core::stats::{mean, sample_sd};
use conquer_core::{FederatedDataset, Result};

use crate::config::{Estimator, ExperimentConfig, Init, Method, Scan};
use crate::error::CliResult;

/// Stream labels for auxiliary samples.
const INIT_LABEL: u64 = 1;
const VALIDATION_LABEL: u64 = 2;
/// Stream label for bootstrap multipliers.
const BOOT_LABEL: u64 = 0xB007;

/// Half-width of the score grid in standard errors.
pub const SCORE_GRID_WIDTH: f64 = 6.0;

pub const FIT_TRIALS_HEADER: [&str; 7] = ["trial", "estimator", "error", "rounds", "comm_bytes", "seconds", "status"];
pub const FIT_SUMMARY_HEADER: [&str; 7] = [
    "estimator",
    "trials_ok",
    "trials_failed",
    "mean_error",
    "se_error",
    "mean_rounds",
    "mean_comm_bytes",
];
pub const INFER_TRIALS_HEADER: [&str; 8] =
    ["trial", "method", "coef_index", "lower", "upper", "covered", "width", "status"];
pub const INFER_SUMMARY_HEADER: [&str; 6] =
    ["method", "coef_index", "trials_ok", "trials_failed", "coverage", "mean_width"];

/// Where each trial's data comes from.
#[derive(Debug, Clone)]
pub enum DataSource {
    Generated(DgpSpec),
    Fixed {
        fed: FederatedDataset,
        truth: Option<DVector<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub trial: u64,
    pub estimator: String,
    pub error: Option<f64>,
    pub rounds: usize,
    pub comm_bytes: u64,
    pub seconds: f64,
    pub status: String,
}

impl FitRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary {
    pub estimator: String,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub mean_error: f64,
    pub se_error: f64,
    pub mean_rounds: f64,
    pub mean_comm_bytes: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferRecord {
    pub trial: u64,
    pub method: String,
    pub coef: usize,
    pub lower: f64,
    pub upper: f64,
    pub covered: Option<bool>,
    pub width: f64,
    pub status: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferSummary {
    pub method: String,
    pub coef: usize,
    pub trials_ok: usize,
    pub trials_failed: usize,
    pub coverage: f64,
    pub mean_width: f64,
}

/// Penalties tuned once on trial 0 and reused by every trial.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tuning {
    pub pooled_lambda: f64,
    pub local_lambda: f64,
    pub b: f64,
    pub h: f64,
}

struct Trial<'a> {
    cfg: &'a ExperimentConfig,
    index: u64,
    fed: FederatedDataset,
    truth: Option<DVector<f64>>,
    plan: SmoothingPlan,
    spec: Option<&'a DgpSpec>,
    averaged_l1: OnceLock<DVector<f64>>,
}

impl<'a> Trial<'a> {
    fn build(cfg: &'a ExperimentConfig, source: &'a DataSource, index: u64) -> Result<Self> {
        let (fed, truth, spec) = match source {
            DataSource::Generated(spec) => (generate_federated(spec, index)?, Some(make_truth(spec)), Some(spec)),
            DataSource::Fixed { fed, truth } => (fed.clone(), truth.clone(), None),
        };
        let kernel = cfg.kernel().expect("validated");
        let tau = cfg.dgp.tau;
        let mut plan = SmoothingPlan::with_scale(&fed, tau, cfg.smoothing.c, kernel)?;
        if cfg.dynamic_scale().expect("validated") {
            plan = SmoothingPlan::new(tau, plan.b, plan.h, kernel, ScaleRule::Dynamic)?;
        }
        Ok(Self {
            cfg,
            index,
            fed,
            truth,
            plan,
            spec,
            averaged_l1: OnceLock::new(),
        })
    }

    fn tau(&self) -> f64 {
        self.cfg.dgp.tau
    }

    fn dc(&self) -> Result<DVector<f64>> {
        dc_average(&self.fed, self.tau(), &LocalSolver::exact_for(&self.fed))
    }

    fn init(&self) -> Result<DVector<f64>> {
        let local = self.plan.local_loss()?;
        match self.cfg.parsed_init().expect("validated") {
            Init::Master => Ok(fit_conquer(self.fed.master(), &local, None, &GdBbConfig::default())?.beta),
            Init::Dc => self.dc(),
            Init::Fresh(rows) => {
                let spec = self.spec.ok_or_else(|| {
                    conquer_core::ConquerError::InvalidArgument("fresh initialization needs a generated dataset".into())
                })?;
                let aux = generate_auxiliary(spec, self.index, INIT_LABEL, rows)?;
                let loss = SmoothedLoss::new(
                    self.tau(),
                    conquer_core::federation::default_bandwidths(rows, rows, self.fed.p(), self.cfg.smoothing.c)?.0,
                    self.plan.kernel,
                )?;
                Ok(fit_conquer(&aux, &loss, None, &GdBbConfig::default())?.beta)
            }
        }
    }

    fn error(&self, beta: &DVector<f64>) -> Option<f64> {
        self.truth.as_ref().map(|t| (beta - t).norm())
    }

    fn average_l1(&self, tuning: &Tuning) -> Result<DVector<f64>> {
        if let Some(avg) = self.averaged_l1.get() {
            return Ok(avg.clone());
        }
        let loss = SmoothedLoss::new(self.tau(), tuning.b, self.plan.kernel)?;
        let fits = map_indexed(self.fed.num_machines(), |j| {
            fit_l1_conquer(&self.fed.shards()[j], &loss, tuning.local_lambda, None, &LammConfig::default())
        });
        let mut avg = DVector::zeros(self.fed.p());
        for (f, w) in fits.into_iter().zip(self.fed.weights()) {
            avg += f?.beta * *w;
        }
        Ok(self.averaged_l1.get_or_init(|| avg).clone())
    }

    fn run(&self, est: Estimator, tuning: Option<&Tuning>) -> Result<(DVector<f64>, usize, u64)> {
        let (m, p) = (self.fed.num_machines(), self.fed.p());
        match est {
            Estimator::Global => {
                let pooled = self.fed.pooled()?;
                let fit = fit_conquer(&pooled, &self.plan.global_loss()?, None, &GdBbConfig::default())?;
                Ok((fit.beta, 0, 0))
            }
            Estimator::DcAverage => Ok((self.dc()?, 1, comm_cost(1, m, p).bytes)),
            Estimator::Distributed(t) => {
                let fit = run_algorithm1(&self.fed, &self.plan, &self.init()?, &RoundConfig::new(t))?;
                Ok((fit.beta, fit.rounds_used, fit.comm_bytes))
            }
            Estimator::DistributedSubgradient(t) => {
                let fit = run_algorithm1(&self.fed, &self.plan, &self.init()?, &RoundConfig::new(t).nonsmooth())?;
                Ok((fit.beta, fit.rounds_used, fit.comm_bytes))
            }
            Estimator::NewtonVariant(t) => {
                let fit = run_newton_variant(&self.fed, &self.plan, &self.init()?, t)?;
                Ok((fit.beta, fit.rounds_used, fit.comm_bytes))
            }
            Estimator::TwoStep(t) => {
                let fit = run_two_step_conquer(&self.fed, &self.plan, &self.init()?, &TwoStepConfig::new(t))?;
                Ok((fit.beta, fit.rounds_used, fit.comm_bytes))
            }
            Estimator::PenalizedMultiRound(t) => {
                let tuning = tuning.expect("tuned before trials");
                let start = self.average_l1(tuning)?;
                let schedule = PenaltySchedule::constant(tuning.pooled_lambda, t);
                let fit = run_penalized_multiround(
                    &self.fed,
                    self.tau(),
                    tuning.b,
                    tuning.h,
                    self.plan.kernel,
                    &schedule,
                    t,
                    &start,
                    &LammConfig::default(),
                )?;
                Ok((fit.beta, fit.rounds_used, fit.comm_bytes + comm_cost(1, m, p).bytes))
            }
            Estimator::PooledL1 => {
                let tuning = tuning.expect("tuned before trials");
                let pooled = self.fed.pooled()?;
                let loss = SmoothedLoss::new(self.tau(), tuning.h, self.plan.kernel)?;
                let out = fit_l1_conquer(&pooled, &loss, tuning.pooled_lambda, None, &LammConfig::default())?;
                Ok((out.beta, 0, 0))
            }
            Estimator::AverageL1 => {
                let tuning = tuning.expect("tuned before trials");
                Ok((self.average_l1(tuning)?, 1, comm_cost(1, m, p).bytes))
            }
        }
    }
}

/// Selects the pooled and local penalties on trial 0 against a fresh
/// validation sample.
pub fn tune_penalties(cfg: &ExperimentConfig, source: &DataSource) -> Result<Tuning> {
    let pen = cfg.penalized.as_ref().ok_or_else(|| {
        conquer_core::ConquerError::InvalidArgument("penalized estimators need a [penalized] section".into())
    })?;
    let trial = Trial::build(cfg, source, 0)?;
    let fed = &trial.fed;
    let (b, h) = theorem9_bandwidths(
        pen.sparsity,
        fed.p() - 1,
        fed.local_rows(),
        fed.total_rows(),
        pen.bandwidth_c,
    )?;
    let valid = match source {
        DataSource::Generated(spec) => generate_auxiliary(spec, 0, VALIDATION_LABEL, pen.validation_rows)?,
        DataSource::Fixed { fed, .. } => fed.master().clone(),
    };
    let kernel = trial.plan.kernel;
    let tau = cfg.dgp.tau;
    let lamm = LammConfig::default();
    let pooled = fed.pooled()?;
    let global = SmoothedLoss::new(tau, h, kernel)?;
    let grid = lambda_grid(lambda_max(&pooled, &global)?, LAMBDA_GRID_RATIO, LAMBDA_GRID_SIZE);
    let pooled_lambda = select_lambda(&pooled, &valid, &global, &grid, &lamm)?.lambda;
    let local = SmoothedLoss::new(tau, b, kernel)?;
    let grid = lambda_grid(lambda_max(fed.master(), &local)?, LAMBDA_GRID_RATIO, LAMBDA_GRID_SIZE);
    let local_lambda = select_lambda(fed.master(), &valid, &local, &grid, &lamm)?.lambda;
    Ok(Tuning {
        pooled_lambda,
        local_lambda,
        b,
        h,
    })
}

fn trial_count(cfg: &ExperimentConfig, source: &DataSource) -> u64 {
    match source {
        DataSource::Generated(_) => cfg.trials,
        DataSource::Fixed { .. } => 1,
    }
}

/// Runs every estimator on every trial. Trials run in parallel; records are
/// ordered by trial, then by estimator as configured.
pub fn run_fit(cfg: &ExperimentConfig, source: &DataSource) -> CliResult<Vec<FitRecord>> {
    cfg.validate()?;
    let estimators = cfg.parsed_estimators()?;
    let tuning = if estimators.iter().any(|e| e.is_penalized()) {
        Some(tune_penalties(cfg, source)?)
    } else {
        None
    };
    let trials = trial_count(cfg, source);
    let per_trial = map_indexed(trials as usize, |t| {
        let t = t as u64;
        match Trial::build(cfg, source, t) {
            Err(e) => estimators
                .iter()
                .map(|est| failed_fit(t, *est, &e.to_string()))
                .collect::<Vec<_>>(),
            Ok(trial) => estimators
                .iter()
                .map(|est| {
                    let start = Instant::now();
                    match trial.run(*est, tuning.as_ref()) {
                        Ok((beta, rounds, bytes)) => FitRecord {
                            trial: t,
                            estimator: est.to_string(),
                            error: trial.error(&beta),
                            rounds,
                            comm_bytes: bytes,
                            seconds: start.elapsed().as_secs_f64(),
                            status: "ok".into(),
                        },
                        Err(e) => failed_fit(t, *est, &e.to_string()),
                    }
                })
                .collect(),
        }
    });
    Ok(per_trial.into_iter().flatten().collect())
}

fn failed_fit(trial: u64, est: Estimator, msg: &str) -> FitRecord {
    FitRecord {
        trial,
        estimator: est.to_string(),
        error: None,
        rounds: 0,
        comm_bytes: 0,
        seconds: 0.0,
        status: format!("error: {msg}"),
    }
}

/// Mean and standard error per estimator, in first-seen order.
pub fn summarize_fit(records: &[FitRecord]) -> Vec<FitSummary> {
    let mut names: Vec<&str> = Vec::new();
    for r in records {
        if !names.contains(&r.estimator.as_str()) {
            names.push(&r.estimator);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let rows: Vec<&FitRecord> = records.iter().filter(|r| r.estimator == name).collect();
            let ok: Vec<&&FitRecord> = rows.iter().filter(|r| r.ok()).collect();
            let errors: Vec<f64> = ok.iter().filter_map(|r| r.error).collect();
            let rounds: Vec<f64> = ok.iter().map(|r| r.rounds as f64).collect();
            let bytes: Vec<f64> = ok.iter().map(|r| r.comm_bytes as f64).collect();
            FitSummary {
                estimator: name.to_string(),
                trials_ok: ok.len(),
                trials_failed: rows.len() - ok.len(),
                mean_error: mean_or_nan(&errors),
                se_error: if errors.len() > 1 {
                    sample_sd(&errors) / (errors.len() as f64).sqrt()
                } else {
                    f64::NAN
                },
                mean_rounds: mean_or_nan(&rounds),
                mean_comm_bytes: mean_or_nan(&bytes),
            }
        })
        .collect()
}

fn mean_or_nan(v: &[f64]) -> f64 {
    if v.is_empty() {
        f64::NAN
    } else {
        mean(v)
    }
}

fn opt_float(v: Option<f64>) -> String {
    v.map(format_float).unwrap_or_default()
}

pub fn write_fit_trials<W: Write>(out: W, records: &[FitRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIT_TRIALS_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.estimator.clone(),
            opt_float(r.error),
            r.rounds.to_string(),
            r.comm_bytes.to_string(),
            format!("{:.6}", r.seconds),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_fit_summary<W: Write>(out: W, rows: &[FitSummary]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(FIT_SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.estimator.clone(),
            r.trials_ok.to_string(),
            r.trials_failed.to_string(),
            format_float(r.mean_error),
            format_float(r.se_error),
            format_float(r.mean_rounds),
            format_float(r.mean_comm_bytes),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn coefs_of(cfg: &ExperimentConfig, p: usize) -> Vec<usize> {
    match &cfg.inference {
        Some(inf) if !inf.coefs.is_empty() => inf.coefs.clone(),
        _ => (0..p).collect(),
    }
}

impl Trial<'_> {
    fn infer(&self, methods: &[Method]) -> Vec<InferRecord> {
        let inf = self.cfg.inference.as_ref().expect("validated");
        let coefs = coefs_of(self.cfg, self.fed.p());
        let alpha = inf.alpha;
        let needs_ce = methods.iter().any(|m| !matches!(m, Method::DcNormal(_)));
        let needs_dc = methods.iter().any(|m| matches!(m, Method::DcNormal(_)))
            || (needs_ce && self.cfg.parsed_init().ok() == Some(Init::Dc));
        let dc = if needs_dc { Some(self.dc()) } else { None };
        let ce = if needs_ce {
            Some((|| -> Result<DVector<f64>> {
                let init = match (&dc, self.cfg.parsed_init().expect("validated")) {
                    (Some(Ok(d)), Init::Dc) => d.clone(),
                    _ => self.init()?,
                };
                Ok(run_algorithm1(&self.fed, &self.plan, &init, &RoundConfig::new(inf.rounds))?.beta)
            })())
        } else {
            None
        };
        let mut out = Vec::new();
        for method in methods {
            let name = method.to_string();
            let report = match method {
                Method::DcNormal(kind) => match dc.as_ref().expect("computed") {
                    Ok(beta) => self.wald(beta, *kind, alpha).map_err(|e| e.to_string()),
                    Err(e) => Err(e.to_string()),
                },
                _ => match ce.as_ref().expect("computed") {
                    Err(e) => Err(e.to_string()),
                    Ok(beta) => match method {
                        Method::CeNormal(kind) => self.wald(beta, *kind, alpha),
                        Method::CeScore(points) => self.score(beta, &coefs, *points, alpha),
                        Method::CeBootA(reps) => self.boot(beta, BootVariant::A, *reps, alpha),
                        Method::CeBootB(reps) => self.boot(beta, BootVariant::B, *reps, alpha),
                        Method::DcNormal(_) => unreachable!(),
                    }
                    .map_err(|e| e.to_string()),
                },
            };
            match report {
                Ok(report) => {
                    for &k in &coefs {
                        out.push(match report.coef(k) {
                            Some(c) => {
                                let (lower, upper) = match c.set.runs(c.grid.as_deref()).as_slice() {
                                    [] => (f64::NAN, f64::NAN),
                                    runs => (runs[0].0, runs[runs.len() - 1].1),
                                };
                                InferRecord {
                                    trial: self.index,
                                    method: name.clone(),
                                    coef: k,
                                    lower,
                                    upper,
                                    covered: self.truth.as_ref().map(|t| c.set.contains(t[k])),
                                    width: c.set.width(),
                                    status: "ok".into(),
                                }
                            }
                            None => failed_infer(self.index, &name, k, "coefficient not reported"),
                        });
                    }
                }
                Err(e) => out.extend(coefs.iter().map(|k| failed_infer(self.index, &name, *k, &e))),
            }
        }
        out
    }

    fn wald(&self, beta: &DVector<f64>, kind: VarianceKind, alpha: f64) -> Result<InferenceReport> {
        let v = estimate_variance(&self.fed, beta, kind, self.tau(), self.plan.b, self.plan.kernel, alpha)?;
        wald_intervals(beta, &v, self.fed.total_rows(), alpha)
    }

    fn score(&self, beta: &DVector<f64>, coefs: &[usize], points: usize, alpha: f64) -> Result<InferenceReport> {
        let inf = self.cfg.inference.as_ref().expect("validated");
        let v = estimate_variance(
            &self.fed,
            beta,
            VarianceKind::TypeII,
            self.tau(),
            self.plan.b,
            self.plan.kernel,
            alpha,
        )?;
        let root = (self.fed.total_rows() as f64).sqrt();
        let scan = match inf.score_scan.parse::<Scan>().expect("validated") {
            Scan::Full => GridScan::Full,
            Scan::Outward(patience) => GridScan::Outward { patience },
        };
        let config = ScoreConfig {
            rounds: RoundConfig::new(inf.rounds),
            scan,
        };
        let mut merged: Option<InferenceReport> = None;
        for &k in coefs {
            let grid = default_score_grid(beta[k], v.sigma[k] / root, SCORE_GRID_WIDTH, points);
            let r = score_confidence_set(&self.fed, &self.plan, k, &grid, alpha, beta, &config)?;
            match merged.as_mut() {
                None => merged = Some(r),
                Some(m) => m.coefs.extend(r.coefs),
            }
        }
        merged.ok_or_else(|| conquer_core::ConquerError::InvalidArgument("no coefficients requested".into()))
    }

    fn boot(&self, beta: &DVector<f64>, variant: BootVariant, reps: usize, alpha: f64) -> Result<InferenceReport> {
        let hi = master_hessian_inverse(&self.fed, beta, self.tau(), MasterHessian::Powell { b: self.plan.b })?;
        let config = BootstrapConfig {
            variant,
            reps,
            seed: derive_seed(self.cfg.seed, &[self.index, BOOT_LABEL]),
            multipliers: Multipliers::Gaussian,
        };
        bootstrap_intervals(&self.fed, beta, &self.plan.global_loss()?, &hi, alpha, &config)
    }
}

fn failed_infer(trial: u64, method: &str, coef: usize, msg: &str) -> InferRecord {
    InferRecord {
        trial,
        method: method.to_string(),
        coef,
        lower: f64::NAN,
        upper: f64::NAN,
        covered: None,
        width: f64::NAN,
        status: format!("error: {msg}"),
    }
}

/// Runs every inference method on every trial.
pub fn run_infer(cfg: &ExperimentConfig, source: &DataSource) -> CliResult<Vec<InferRecord>> {
    cfg.validate()?;
    let methods = cfg.parsed_methods()?;
    if methods.is_empty() {
        return Err(crate::error::CliError::Config("infer needs an [inference] section".into()));
    }
    let trials = trial_count(cfg, source);
    let per_trial = map_indexed(trials as usize, |t| {
        let t = t as u64;
        match Trial::build(cfg, source, t) {
            Ok(trial) => trial.infer(&methods),
            Err(e) => methods
                .iter()
                .flat_map(|m| {
                    coefs_of(cfg, cfg.dgp.p + 1)
                        .into_iter()
                        .map(move |k| (m.to_string(), k))
                })
                .map(|(m, k)| failed_infer(t, &m, k, &e.to_string()))
                .collect(),
        }
    });
    Ok(per_trial.into_iter().flatten().collect())
}

/// Coverage and mean width per (method, coefficient).
pub fn summarize_infer(records: &[InferRecord]) -> Vec<InferSummary> {
    let mut keys: Vec<(String, usize)> = Vec::new();
    for r in records {
        let key = (r.method.clone(), r.coef);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(method, coef)| {
            let rows: Vec<&InferRecord> = records.iter().filter(|r| r.method == method && r.coef == coef).collect();
            let ok: Vec<&&InferRecord> = rows.iter().filter(|r| r.status == "ok").collect();
            let covered: Vec<f64> = ok
                .iter()
                .filter_map(|r| r.covered.map(|c| if c { 1.0 } else { 0.0 }))
                .collect();
            let widths: Vec<f64> = ok.iter().map(|r| r.width).collect();
            InferSummary {
                method,
                coef,
                trials_ok: ok.len(),
                trials_failed: rows.len() - ok.len(),
                coverage: mean_or_nan(&covered),
                mean_width: mean_or_nan(&widths),
            }
        })
        .collect()
}

pub fn write_infer_trials<W: Write>(out: W, records: &[InferRecord]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(INFER_TRIALS_HEADER)?;
    for r in records {
        w.write_record([
            r.trial.to_string(),
            r.method.clone(),
            r.coef.to_string(),
            format_float(r.lower),
            format_float(r.upper),
            r.covered.map(|c| u8::from(c).to_string()).unwrap_or_default(),
            format_float(r.width),
            r.status.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_infer_summary<W: Write>(out: W, rows: &[InferSummary]) -> CliResult<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(INFER_SUMMARY_HEADER)?;
    for r in rows {
        w.write_record([
            r.method.clone(),
            r.coef.to_string(),
            r.trials_ok.to_string(),
            r.trials_failed.to_string(),
            format_float(r.coverage),
            format_float(r.mean_width),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Kernel used when none is configured.
pub fn default_kernel() -> Kernel {
    Kernel::Gaussian
}
