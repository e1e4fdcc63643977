//! Master/worker message contract, the multi-round distributed conquer
//! procedure, its Newton variant, one-shot averaging and communication
//! accounting.

use nalgebra::DVector;

use crate::data::FederatedDataset;
use crate::error::{ConquerError, Result};
use crate::exact_qr::{fit_qr_interior_point, InteriorPointConfig};
use crate::highdim::{admm_qr_single, admm_tilted_single, AdmmConfig};
use crate::kernels::{Kernel, SmoothedLoss};
use crate::par::map_slice;
use crate::smoothed_qr::{
    self, check_loss_and_subgradient, gd_bb_minimize, gradient_slice, ConquerObjective,
    FixedCoordinate, GdBbConfig, ModelFit, StopReason,
};

/// Round tolerance on the sup-norm of the aggregated gradient.
pub const ROUND_TOLERANCE: f64 = 1e-5;

/// Gradient sent from a worker to the master.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientMessage {
    pub shard_id: usize,
    /// Round tag of the iterate the gradient was evaluated at.
    pub beta_version: u64,
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScaleRule {
    /// Use the plan's `b` and `h` as given.
    FixedC(f64),
    /// Recompute `c` every round from the master's residuals.
    Dynamic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingPlan {
    pub tau: f64,
    /// Local bandwidth used on the master.
    pub b: f64,
    /// Global bandwidth used for the aggregated gradient.
    pub h: f64,
    pub kernel: Kernel,
    pub scale_rule: ScaleRule,
}

impl SmoothingPlan {
    /// Plan with the default bandwidths for `fed` at scale `c`.
    pub fn with_scale(fed: &FederatedDataset, tau: f64, c: f64, kernel: Kernel) -> Result<Self> {
        let (b, h) = default_bandwidths(
            fed.local_rows(),
            fed.total_rows(),
            covariate_count(fed.p()),
            c,
        )?;
        Self::new(tau, b, h, kernel, ScaleRule::FixedC(c))
    }

    pub fn new(tau: f64, b: f64, h: f64, kernel: Kernel, scale_rule: ScaleRule) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(ConquerError::InvalidArgument(format!(
                "tau must lie in (0, 1), got {tau}"
            )));
        }
        if !(h > 0.0 && b >= h && b.is_finite()) {
            return Err(ConquerError::InvalidArgument(format!(
                "bandwidths must satisfy b >= h > 0, got b = {b}, h = {h}"
            )));
        }
        if let ScaleRule::FixedC(c) = scale_rule {
            if !(c > 0.0) {
                return Err(ConquerError::InvalidArgument(format!(
                    "bandwidth scale must be positive, got {c}"
                )));
            }
        }
        Ok(Self {
            tau,
            b,
            h,
            kernel,
            scale_rule,
        })
    }

    pub fn global_loss(&self) -> Result<SmoothedLoss> {
        SmoothedLoss::new(self.tau, self.h, self.kernel)
    }

    pub fn local_loss(&self) -> Result<SmoothedLoss> {
        SmoothedLoss::new(self.tau, self.b, self.kernel)
    }
}

/// Covariates excluding the intercept column.
pub(crate) fn covariate_count(dim: usize) -> usize {
    dim.saturating_sub(1).max(1)
}

/// `b = c((p + log n)/n)^{1/3}` and `h = c((p + log N)/N)^{1/3}`.
pub fn default_bandwidths(n: usize, total: usize, p: usize, c: f64) -> Result<(f64, f64)> {
    if !(c > 0.0) || n == 0 || total < n {
        return Err(ConquerError::InvalidArgument(format!(
            "invalid bandwidth inputs n = {n}, N = {total}, c = {c}"
        )));
    }
    let rate = |k: usize| ((p as f64 + (k as f64).ln()) / k as f64).cbrt();
    Ok((c * rate(n), c * rate(total)))
}

/// `max(ceil(log m), 2)`.
pub fn default_rounds(m: usize) -> usize {
    ((m as f64).ln().ceil() as usize).max(2)
}

/// Gradient used as the global gradient in each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GlobalGradient {
    #[default]
    Smoothed,
    /// Subgradient of the unsmoothed check loss.
    Subgradient,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundConfig {
    /// Maximum number of communication rounds `T`.
    pub rounds: usize,
    pub gradient: GlobalGradient,
    pub solver: GdBbConfig,
    /// Apply the `g_t > g_{t-1}` / `g_t < 1e-5` break; otherwise run all
    /// `T` rounds.
    pub early_stop: bool,
    pub master: MasterStep,
}

/// Loss minimized by the master each round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MasterStep {
    /// Shifted smoothed loss at the local bandwidth, solved by GD-BB.
    Smoothed,
    /// Shifted check loss built from subgradients, solved exactly by ADMM.
    CheckLoss(AdmmConfig),
}

impl RoundConfig {
    pub fn new(rounds: usize) -> Self {
        Self {
            rounds,
            gradient: GlobalGradient::Smoothed,
            solver: GdBbConfig::default(),
            early_stop: true,
            master: MasterStep::Smoothed,
        }
    }

    /// Fully non-smooth baseline: subgradients everywhere, check-loss master
    /// step and all `T` rounds.
    pub fn nonsmooth(mut self) -> Self {
        self.gradient = GlobalGradient::Subgradient;
        self.master = MasterStep::CheckLoss(AdmmConfig {
            tol: 1e-4,
            ..AdmmConfig::default()
        });
        self.early_stop = false;
        self
    }

    pub fn subgradient(mut self) -> Self {
        self.gradient = GlobalGradient::Subgradient;
        self
    }

    pub fn without_early_stop(mut self) -> Self {
        self.early_stop = false;
        self
    }
}

fn worker_gradient(
    fed: &FederatedDataset,
    beta: &[f64],
    version: u64,
    gradient: GlobalGradient,
    loss: &SmoothedLoss,
) -> Result<Vec<GradientMessage>> {
    let msgs = map_slice(fed.shards(), |shard| -> Result<GradientMessage> {
        let grad = match gradient {
            GlobalGradient::Smoothed => gradient_slice(shard, beta, loss),
            GlobalGradient::Subgradient => {
                let b = DVector::from_column_slice(beta);
                check_loss_and_subgradient(shard, &b, loss.tau())?
                    .1
                    .as_slice()
                    .to_vec()
            }
        };
        Ok(GradientMessage {
            shard_id: shard.id(),
            beta_version: version,
            grad,
        })
    });
    msgs.into_iter()
        .enumerate()
        .map(|(j, r)| r.map_err(|e| e.in_shard(j)))
        .collect()
}

/// Weighted sum of worker gradients in shard order.
pub fn aggregate(
    fed: &FederatedDataset,
    messages: &[GradientMessage],
    version: u64,
) -> Result<Vec<f64>> {
    if messages.len() != fed.num_machines() {
        return Err(ConquerError::DimensionMismatch {
            expected: fed.num_machines(),
            got: messages.len(),
            context: "gradient messages",
        });
    }
    let p = fed.p();
    let mut total = vec![0.0; p];
    for ((msg, shard), w) in messages.iter().zip(fed.shards()).zip(fed.weights()) {
        if msg.beta_version != version {
            return Err(ConquerError::StaleGradient {
                shard: shard.id(),
                got: msg.beta_version,
                expected: version,
            });
        }
        if msg.shard_id != shard.id() || msg.grad.len() != p {
            return Err(ConquerError::InvalidData(format!(
                "malformed gradient message from shard {}",
                msg.shard_id
            )));
        }
        if msg.grad.iter().any(|v| !v.is_finite()) {
            return Err(ConquerError::NonFiniteGradient { iteration: 0 }.in_shard(shard.id()));
        }
        for (t, g) in total.iter_mut().zip(&msg.grad) {
            *t += w * g;
        }
    }
    Ok(total)
}

/// Aggregated smoothed gradient `sum_j (n_j/N) grad Q_{j,h}(beta)`.
pub fn global_gradient(
    fed: &FederatedDataset,
    beta: &DVector<f64>,
    loss: &SmoothedLoss,
) -> Result<DVector<f64>> {
    if beta.len() != fed.p() {
        return Err(ConquerError::DimensionMismatch {
            expected: fed.p(),
            got: beta.len(),
            context: "global gradient",
        });
    }
    let msgs = worker_gradient(fed, beta.as_slice(), 0, GlobalGradient::Smoothed, loss)?;
    Ok(DVector::from_vec(aggregate(fed, &msgs, 0)?))
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

pub(crate) fn round_plan(fed: &FederatedDataset, plan: &SmoothingPlan, beta: &[f64]) -> Result<SmoothingPlan> {
    match plan.scale_rule {
        ScaleRule::FixedC(_) => Ok(*plan),
        ScaleRule::Dynamic => {
            let r = fed.master().residuals(beta)?;
            let mut c = smoothed_qr::dynamic_bandwidth_scale(&r)?;
            if !(c > 0.0 && c.is_finite()) {
                c = 1.0;
            }
            let (b, h) = default_bandwidths(
                fed.local_rows(),
                fed.total_rows(),
                covariate_count(fed.p()),
                c,
            )?;
            Ok(SmoothingPlan { b, h, ..*plan })
        }
    }
}

/// Shared round loop; `fixed` pins one coordinate throughout.
fn multi_round(
    fed: &FederatedDataset,
    plan: &SmoothingPlan,
    beta0: &DVector<f64>,
    config: &RoundConfig,
    fixed: Option<FixedCoordinate>,
) -> Result<ModelFit> {
    if config.rounds == 0 {
        return Err(ConquerError::InvalidArgument("T must be at least 1".into()));
    }
    if beta0.len() != fed.p() {
        return Err(ConquerError::DimensionMismatch {
            expected: fed.p(),
            got: beta0.len(),
            context: "initial estimate",
        });
    }
    let mut beta = beta0.as_slice().to_vec();
    if let Some(f) = fixed {
        beta[f.index] = f.value;
    }
    let mut trace = Vec::new();
    let mut g_prev = 1.0;
    let mut iterations = 0;
    let mut stop = StopReason::MaxRounds;
    for t in 1..=config.rounds {
        let version = t as u64;
        let rp = round_plan(fed, plan, &beta).map_err(|e| e.in_round(t))?;
        let global_loss = rp.global_loss()?;
        let msgs = worker_gradient(fed, &beta, version, config.gradient, &global_loss)
            .map_err(|e| e.in_round(t))?;
        let global = smoothed_qr::project(fixed, aggregate(fed, &msgs, version).map_err(|e| e.in_round(t))?);
        let g_t = sup_norm(&global);
        trace.push(g_t);
        if config.early_stop && g_t > g_prev {
            stop = StopReason::GradientIncrease;
            break;
        }
        if config.early_stop && g_t < ROUND_TOLERANCE {
            stop = StopReason::GradientTolerance;
            break;
        }
        let local_loss = rp.local_loss()?;
        if let MasterStep::CheckLoss(admm) = config.master {
            if fixed.is_some() {
                return Err(ConquerError::InvalidArgument(
                    "check-loss master step does not support a pinned coordinate".into(),
                ));
            }
            let b = DVector::from_column_slice(&beta);
            let (_, sub) = check_loss_and_subgradient(fed.master(), &b, local_loss.tau())?;
            let tilt = sub - DVector::from_column_slice(&global);
            let out = admm_tilted_single(fed.master(), local_loss.tau(), &tilt, &admm, Some((&b, &local_loss)))
                .map_err(|e| e.in_round(t))?;
            if !out.converged {
                return Err(ConquerError::NotConverged {
                    iterations: out.iterations,
                    context: "tilted check-loss master step",
                }
                .in_round(t));
            }
            iterations += out.iterations;
            beta = out.beta.as_slice().to_vec();
            g_prev = g_t;
            continue;
        }
        let local = smoothed_qr::project(fixed, gradient_slice(fed.master(), &beta, &local_loss));
        let shift: Vec<f64> = local.iter().zip(&global).map(|(l, g)| l - g).collect();
        let objective = ConquerObjective::new(fed.master(), local_loss)
            .with_fixed(fixed)
            .with_shift(shift);
        let start = smoothed_qr::project(fixed, beta.clone());
        let out = gd_bb_minimize(&objective, &start, &config.solver).map_err(|e| e.in_round(t))?;
        iterations += out.iterations;
        beta = smoothed_qr::embed(fixed, out.beta.as_slice());
        g_prev = g_t;
    }
    let rounds_used = trace.len();
    Ok(ModelFit {
        beta: DVector::from_vec(beta),
        comm_bytes: comm_cost(rounds_used, fed.num_machines(), fed.p()).bytes,
        grad_sup_norms: trace,
        rounds_used,
        converged: stop == StopReason::GradientTolerance,
        stop,
        iterations,
    })
}

/// Multi-round distributed conquer.
///
/// Each round broadcasts the current iterate, aggregates the workers'
/// gradients at bandwidth `h`, stops if the sup-norm `g_t` grew or fell
/// below [`ROUND_TOLERANCE`], and otherwise minimizes the master's shifted
/// loss `Q_{1,b}(beta) - <grad Q_{1,b}(beta_prev) - grad Q_h(beta_prev), beta>`.
pub fn run_algorithm1(
    fed: &FederatedDataset,
    plan: &SmoothingPlan,
    beta0: &DVector<f64>,
    config: &RoundConfig,
) -> Result<ModelFit> {
    multi_round(fed, plan, beta0, config, None)
}

/// [`run_algorithm1`] with coordinate `k` pinned at `value`.
pub fn fit_constrained_distributed(
    fed: &FederatedDataset,
    plan: &SmoothingPlan,
    k: usize,
    value: f64,
    beta0: &DVector<f64>,
    config: &RoundConfig,
) -> Result<ModelFit> {
    if k >= fed.p() {
        return Err(ConquerError::InvalidArgument(format!(
            "constrained index {k} out of range for p = {}",
            fed.p()
        )));
    }
    multi_round(fed, plan, beta0, config, Some(FixedCoordinate { index: k, value }))
}

/// Newton-type rounds `beta <- beta - H_{1,b}(beta)^{-1} grad Q_h(beta)`.
///
/// Stops early only when `g_t` falls below [`ROUND_TOLERANCE`].
pub fn run_newton_variant(
    fed: &FederatedDataset,
    plan: &SmoothingPlan,
    beta0: &DVector<f64>,
    rounds: usize,
) -> Result<ModelFit> {
    if rounds == 0 {
        return Err(ConquerError::InvalidArgument("T must be at least 1".into()));
    }
    if beta0.len() != fed.p() {
        return Err(ConquerError::DimensionMismatch {
            expected: fed.p(),
            got: beta0.len(),
            context: "initial estimate",
        });
    }
    let mut beta = beta0.clone();
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxRounds;
    for t in 1..=rounds {
        let version = t as u64;
        let rp = round_plan(fed, plan, beta.as_slice()).map_err(|e| e.in_round(t))?;
        let msgs = worker_gradient(
            fed,
            beta.as_slice(),
            version,
            GlobalGradient::Smoothed,
            &rp.global_loss()?,
        )
        .map_err(|e| e.in_round(t))?;
        let global = DVector::from_vec(aggregate(fed, &msgs, version).map_err(|e| e.in_round(t))?);
        let g_t = global.amax();
        trace.push(g_t);
        if g_t < ROUND_TOLERANCE {
            stop = StopReason::GradientTolerance;
            break;
        }
        let hess = smoothed_qr::conquer_hessian(fed.master(), &beta, &rp.local_loss()?)?;
        let step = hess.cholesky().map(|c| c.solve(&global)).ok_or_else(|| {
            ConquerError::Singular("local Hessian is not positive definite".into()).in_round(t)
        })?;
        beta -= step;
    }
    let rounds_used = trace.len();
    Ok(ModelFit {
        beta,
        comm_bytes: comm_cost(rounds_used, fed.num_machines(), fed.p()).bytes,
        grad_sup_norms: trace,
        rounds_used,
        converged: stop == StopReason::GradientTolerance,
        stop,
        iterations: rounds_used,
    })
}

/// Solver used for each shard's local fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LocalSolver {
    /// Exact quantile regression by ADMM, warm-started from a conquer fit at
    /// bandwidth `warm_h`.
    Exact { admm: AdmmConfig, warm_h: f64 },
    /// Exact quantile regression by the interior point method.
    InteriorPoint(InteriorPointConfig),
    /// Local conquer at bandwidth `h`.
    Conquer {
        h: f64,
        kernel: Kernel,
        solver: GdBbConfig,
    },
}

impl LocalSolver {
    /// Exact local solver used by the averaging baseline.
    pub fn exact_for(_fed: &FederatedDataset) -> Self {
        Self::InteriorPoint(InteriorPointConfig::default())
    }

    /// Exact ADMM solver with the default local bandwidth as warm start.
    pub fn admm_for(fed: &FederatedDataset) -> Self {
        let (b, _) = default_bandwidths(
            fed.local_rows(),
            fed.total_rows(),
            covariate_count(fed.p()),
            1.0,
        )
        .unwrap_or((1.0, 1.0));
        Self::Exact {
            admm: AdmmConfig {
                tol: 1e-4,
                ..AdmmConfig::default()
            },
            warm_h: b,
        }
    }
}

/// Local fits on every shard, in shard order.
pub fn local_fits(
    fed: &FederatedDataset,
    tau: f64,
    solver: &LocalSolver,
) -> Result<Vec<DVector<f64>>> {
    let fits = map_slice(fed.shards(), |shard| -> Result<DVector<f64>> {
        match solver {
            LocalSolver::Exact { admm, warm_h } => {
                let loss = SmoothedLoss::new(tau, *warm_h, Kernel::Gaussian)?;
                let warm = smoothed_qr::fit_conquer(shard, &loss, None, &GdBbConfig::default())?;
                Ok(admm_qr_single(shard, tau, admm, Some((&warm.beta, &loss)))?.beta)
            }
            LocalSolver::InteriorPoint(config) => {
                let out = fit_qr_interior_point(shard, tau, config)?;
                if !out.converged {
                    return Err(ConquerError::NotConverged {
                        iterations: out.iterations,
                        context: "interior point local fit",
                    });
                }
                Ok(out.beta)
            }
            LocalSolver::Conquer { h, kernel, solver } => {
                let loss = SmoothedLoss::new(tau, *h, *kernel)?;
                Ok(smoothed_qr::fit_conquer(shard, &loss, None, solver)?.beta)
            }
        }
    });
    fits.into_iter()
        .enumerate()
        .map(|(j, r)| r.map_err(|e| e.in_shard(j)))
        .collect()
}

/// One-shot average `(1/m) sum_j beta_j` of the local fits.
pub fn dc_average(fed: &FederatedDataset, tau: f64, solver: &LocalSolver) -> Result<DVector<f64>> {
    let fits = local_fits(fed, tau, solver)?;
    Ok(average(&fits))
}

pub(crate) fn average(fits: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = DVector::zeros(fits[0].len());
    for f in fits {
        acc += f;
    }
    acc / fits.len() as f64
}

/// `u(m, N)/m` with `u(m, N) = N/(p + log(N/m) + log log m)`.
pub fn scaling_diagnostic(m: usize, total: usize, p: usize) -> Result<f64> {
    if m < 3 {
        return Err(ConquerError::InvalidArgument(format!(
            "scaling diagnostic needs m >= 3, got {m}"
        )));
    }
    if total <= m {
        return Err(ConquerError::InvalidArgument(format!(
            "scaling diagnostic needs N > m, got N = {total}, m = {m}"
        )));
    }
    let (m, n) = (m as f64, total as f64);
    let u = n / (p as f64 + (n / m).ln() + m.ln().ln());
    Ok(u / m)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommCost {
    pub rounds: usize,
    pub scalars: u64,
    pub bytes: u64,
}

/// `rounds * (m + 1) * p` scalars of 8 bytes each.
pub fn comm_cost(rounds: usize, m: usize, p: usize) -> CommCost {
    let scalars = rounds as u64 * (m as u64 + 1) * p as u64;
    CommCost {
        rounds,
        scalars,
        bytes: scalars * 8,
    }
}
