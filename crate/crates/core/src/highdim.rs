//! l1-penalized conquer via LAMM, the multi-round penalized procedure with
//! its penalty schedule, and the consensus ADMM solver for (penalized)
//! quantile regression.

use nalgebra::{DMatrix, DVector};

use crate::data::{dot, DataShard, FederatedDataset};
use crate::error::{ConquerError, Result};
use crate::federation::{self, aggregate, GradientMessage, ROUND_TOLERANCE};
use crate::kernels::{Kernel, SmoothedLoss};
use crate::par::map_slice;
use crate::smoothed_qr::{
    self, check_loss_mean, gradient_slice, weighted_gram, ConquerObjective, GdBbConfig, ModelFit,
    SmoothObjective, StopReason,
};

/// `sign(a) max(|a| - b, 0)`.
pub fn soft_threshold(a: f64, b: f64) -> f64 {
    if a > b {
        a - b
    } else if a < -b {
        a + b
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LammConfig {
    /// Floor for the isotropic curvature parameter.
    pub phi0: f64,
    /// Curvature at the first iteration; defaults to `phi0`.
    pub initial_phi: Option<f64>,
    /// Stop when successive iterates differ by at most this in l2.
    pub tol: f64,
    pub max_iter: usize,
    pub penalize_intercept: bool,
}

impl Default for LammConfig {
    fn default() -> Self {
        Self {
            phi0: 1e-3,
            initial_phi: None,
            tol: 1e-6,
            max_iter: 1000,
            penalize_intercept: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LammOutcome {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Accepted iterations whose penalized objective increased.
    pub descent_violations: usize,
    /// Curvature parameter of the last accepted step.
    pub last_phi: f64,
}

const INFLATE: f64 = 1.1;

fn l1_norm(beta: &[f64], penalize_intercept: bool) -> f64 {
    let skip = usize::from(!penalize_intercept);
    beta.iter().skip(skip).map(|v| v.abs()).sum()
}

/// Minimizes `objective(beta) + lambda * ||beta_-||_1` by local adaptive
/// majorize-minimize steps.
pub fn lamm_minimize<O: SmoothObjective + ?Sized>(
    objective: &O,
    lambda: f64,
    beta0: &[f64],
    config: &LammConfig,
) -> Result<LammOutcome> {
    if !(lambda >= 0.0) || !(config.phi0 > 0.0) || !(config.tol > 0.0) {
        return Err(ConquerError::InvalidArgument(format!(
            "invalid LAMM inputs lambda = {lambda}, {config:?}"
        )));
    }
    if beta0.len() != objective.dim() {
        return Err(ConquerError::DimensionMismatch {
            expected: objective.dim(),
            got: beta0.len(),
            context: "LAMM starting point",
        });
    }
    let pen = config.penalize_intercept;
    let mut beta = beta0.to_vec();
    let (mut value, mut grad) = objective.value_and_gradient(&beta);
    let mut penalized = value + lambda * l1_norm(&beta, pen);
    let mut phi = config.initial_phi.unwrap_or(config.phi0) * INFLATE;
    let mut violations = 0;
    let mut candidate = vec![0.0; beta.len()];
    for k in 1..=config.max_iter {
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(ConquerError::NonFiniteGradient { iteration: k });
        }
        phi = (phi / INFLATE).max(config.phi0);
        let new_value = loop {
            for j in 0..beta.len() {
                let step = beta[j] - grad[j] / phi;
                candidate[j] = if j == 0 && !pen {
                    step
                } else {
                    soft_threshold(step, lambda / phi)
                };
            }
            let mut lin = 0.0;
            let mut sq = 0.0;
            for j in 0..beta.len() {
                let d = candidate[j] - beta[j];
                lin += grad[j] * d;
                sq += d * d;
            }
            let majorizer = value + lin + 0.5 * phi * sq;
            let v = objective.value(&candidate);
            if majorizer >= v {
                break v;
            }
            phi *= INFLATE;
            if !phi.is_finite() {
                return Err(ConquerError::InvalidData(
                    "LAMM curvature parameter overflowed".into(),
                ));
            }
        };
        let diff: f64 = beta
            .iter()
            .zip(&candidate)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        let new_penalized = new_value + lambda * l1_norm(&candidate, pen);
        if new_penalized > penalized + 4.0 * f64::EPSILON * penalized.abs().max(1.0) {
            violations += 1;
        }
        std::mem::swap(&mut beta, &mut candidate);
        penalized = new_penalized;
        if diff <= config.tol {
            return Ok(LammOutcome {
                beta: DVector::from_vec(beta),
                iterations: k,
                converged: true,
                descent_violations: violations,
                last_phi: phi,
            });
        }
        let (v, g) = objective.value_and_gradient(&beta);
        value = v;
        grad = g;
    }
    Ok(LammOutcome {
        beta: DVector::from_vec(beta),
        iterations: config.max_iter,
        converged: false,
        descent_violations: violations,
        last_phi: phi,
    })
}

/// Local l1-penalized conquer fit; starts from zero slopes and the sample
/// `tau`-quantile intercept when `beta0` is `None`.
pub fn fit_l1_conquer(
    shard: &DataShard,
    loss: &SmoothedLoss,
    lambda: f64,
    beta0: Option<&DVector<f64>>,
    config: &LammConfig,
) -> Result<LammOutcome> {
    let start = match beta0 {
        Some(b) => {
            if b.len() != shard.p() {
                return Err(ConquerError::DimensionMismatch {
                    expected: shard.p(),
                    got: b.len(),
                    context: "l1-conquer starting point",
                });
            }
            b.clone()
        }
        None => null_start(shard, loss.tau())?,
    };
    let obj = ConquerObjective::new(shard, *loss);
    lamm_minimize(&obj, lambda, start.as_slice(), config)
}

fn null_start(shard: &DataShard, tau: f64) -> Result<DVector<f64>> {
    let mut b = DVector::zeros(shard.p());
    b[0] = crate::stats::lower_quantile(shard.y(), tau)?;
    Ok(b)
}

/// Smallest penalty for which the intercept-only conquer fit is optimal.
pub fn lambda_max(shard: &DataShard, loss: &SmoothedLoss) -> Result<f64> {
    let intercept_only = DataShard::from_parts(shard.id(), shard.y().to_vec(), vec![1.0; shard.n()], 1)?;
    let q = smoothed_qr::fit_conquer(&intercept_only, loss, None, &GdBbConfig::default())?.beta[0];
    let mut b = vec![0.0; shard.p()];
    b[0] = q;
    let g = gradient_slice(shard, &b, loss);
    Ok(g[1..].iter().fold(0.0_f64, |a, v| a.max(v.abs())))
}

/// `count` log-spaced values from `top` down to `top * ratio`.
pub fn lambda_grid(top: f64, ratio: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![top];
    }
    (0..count)
        .map(|i| top * ratio.powf(i as f64 / (count - 1) as f64))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LambdaSelection {
    pub lambda: f64,
    pub beta: DVector<f64>,
    pub grid: Vec<f64>,
    /// Mean validation check loss per grid value.
    pub scores: Vec<f64>,
}

/// Number of grid values used by [`select_lambda`].
pub const LAMBDA_GRID_SIZE: usize = 20;
/// Smallest grid value relative to the largest.
pub const LAMBDA_GRID_RATIO: f64 = 0.01;

/// Fits a warm-started descending path and picks the value with the smallest
/// validation check loss; ties go to the larger penalty.
pub fn select_lambda(
    train: &DataShard,
    valid: &DataShard,
    loss: &SmoothedLoss,
    grid: &[f64],
    config: &LammConfig,
) -> Result<LambdaSelection> {
    if grid.is_empty() {
        return Err(ConquerError::InvalidArgument("empty lambda grid".into()));
    }
    let mut sorted = grid.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let obj = ConquerObjective::new(train, *loss);
    let mut start = null_start(train, loss.tau())?;
    let mut phi = None;
    let mut best: Option<(f64, f64, DVector<f64>)> = None;
    let mut scores = Vec::with_capacity(sorted.len());
    for &lambda in &sorted {
        let cfg = LammConfig {
            initial_phi: phi,
            ..*config
        };
        let out = lamm_minimize(&obj, lambda, start.as_slice(), &cfg)?;
        phi = Some(out.last_phi);
        let score = check_loss_mean(valid, &out.beta, loss.tau())?;
        scores.push(score);
        if best.as_ref().is_none_or(|(s, _, _)| score < *s) {
            best = Some((score, lambda, out.beta.clone()));
        }
        start = out.beta;
    }
    let (_, lambda, beta) = best.expect("grid is non-empty");
    Ok(LambdaSelection {
        lambda,
        beta,
        grid: sorted,
        scores,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScheduleForm {
    Theorem10,
    UserSupplied,
}

/// Per-round penalty levels; rounds past the end reuse the last value.
#[derive(Debug, Clone, PartialEq)]
pub struct PenaltySchedule {
    pub lambdas: Vec<f64>,
    pub s_hint: usize,
    pub form: ScheduleForm,
}

impl PenaltySchedule {
    pub fn constant(lambda: f64, rounds: usize) -> Self {
        Self {
            lambdas: vec![lambda; rounds.max(1)],
            s_hint: 0,
            form: ScheduleForm::UserSupplied,
        }
    }

    pub fn theorem10(s: usize, p: usize, n: usize, total: usize, rounds: usize, c0: f64) -> Result<Self> {
        let lambdas = (1..=rounds.max(1))
            .map(|t| theorem10_lambda(s, p, n, total, t, c0))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            lambdas,
            s_hint: s,
            form: ScheduleForm::Theorem10,
        })
    }

    pub fn at(&self, round: usize) -> f64 {
        let i = round.saturating_sub(1).min(self.lambdas.len() - 1);
        self.lambdas[i]
    }
}

/// Contraction factor `max(s^2 log p / n, s^3 log p / N)`.
pub fn theorem10_contraction(s: usize, p: usize, n: usize, total: usize) -> f64 {
    let (s, lp) = (s as f64, (p as f64).ln());
    (s * s * lp / n as f64).max(s.powi(3) * lp / total as f64)
}

/// `c0 [sqrt(log p / N) + max(s^2 log p / n, s^3 log p / N)^{t/4} sqrt(log p / n)]`.
pub fn theorem10_lambda(s: usize, p: usize, n: usize, total: usize, t: usize, c0: f64) -> Result<f64> {
    if s == 0 || t == 0 || !(c0 > 0.0) || p < 2 {
        return Err(ConquerError::InvalidArgument(format!(
            "invalid schedule inputs s = {s}, p = {p}, t = {t}, c0 = {c0}"
        )));
    }
    let lp = (p as f64).ln();
    let contraction = theorem10_contraction(s, p, n, total);
    Ok(c0 * ((lp / total as f64).sqrt() + contraction.powf(t as f64 / 4.0) * (lp / n as f64).sqrt()))
}

/// `b = c s^{1/2} (log p / n)^{1/4}` and `h = c (s log p / N)^{1/4}`.
pub fn theorem9_bandwidths(s: usize, p: usize, n: usize, total: usize, c: f64) -> Result<(f64, f64)> {
    if s == 0 || !(c > 0.0) || p < 2 {
        return Err(ConquerError::InvalidArgument(format!(
            "invalid bandwidth inputs s = {s}, p = {p}, c = {c}"
        )));
    }
    let (s, lp) = (s as f64, (p as f64).ln());
    Ok((
        c * s.sqrt() * (lp / n as f64).powf(0.25),
        c * (s * lp / total as f64).powf(0.25),
    ))
}

/// Sup-norm of the minimum-norm subgradient of `loss + lambda |beta_-|_1`
/// given the smooth gradient `grad`. The intercept is unpenalized.
pub fn penalized_stationarity(grad: &[f64], beta: &[f64], lambda: f64) -> f64 {
    grad.iter()
        .zip(beta)
        .enumerate()
        .map(|(j, (g, b))| {
            if j == 0 {
                g.abs()
            } else if *b != 0.0 {
                (g + lambda * b.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Multi-round distributed l1-penalized conquer.
///
/// Rounds follow the multi-round conquer procedure with the master step
/// replaced by a LAMM fit of the penalized shifted loss at `lambda_t`. The
/// stopping rule and the recorded trace use [`penalized_stationarity`] of the
/// global objective at the current penalty level, since the plain gradient
/// does not vanish at a penalized optimum.
#[allow(clippy::too_many_arguments)]
pub fn run_penalized_multiround(
    fed: &FederatedDataset,
    tau: f64,
    b: f64,
    h: f64,
    kernel: Kernel,
    schedule: &PenaltySchedule,
    rounds: usize,
    beta0: &DVector<f64>,
    config: &LammConfig,
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
    let global_loss = SmoothedLoss::new(tau, h, kernel)?;
    let local_loss = SmoothedLoss::new(tau, b, kernel)?;
    let mut beta = beta0.as_slice().to_vec();
    let mut trace = Vec::new();
    let mut g_prev = 1.0;
    let mut stop = StopReason::MaxRounds;
    let mut iterations = 0;
    let mut phi = None;
    for t in 1..=rounds {
        let version = t as u64;
        let msgs: Vec<GradientMessage> = map_slice(fed.shards(), |s| GradientMessage {
            shard_id: s.id(),
            beta_version: version,
            grad: gradient_slice(s, &beta, &global_loss),
        });
        let global = aggregate(fed, &msgs, version).map_err(|e| e.in_round(t))?;
        let g_t = penalized_stationarity(&global, &beta, schedule.at(t - 1));
        trace.push(g_t);
        if g_t > g_prev {
            stop = StopReason::GradientIncrease;
            break;
        }
        if g_t < ROUND_TOLERANCE {
            stop = StopReason::GradientTolerance;
            break;
        }
        let local = gradient_slice(fed.master(), &beta, &local_loss);
        let shift = local.iter().zip(&global).map(|(l, g)| l - g).collect();
        let obj = ConquerObjective::new(fed.master(), local_loss).with_shift(shift);
        let cfg = LammConfig {
            initial_phi: phi,
            ..*config
        };
        let out = lamm_minimize(&obj, schedule.at(t), &beta, &cfg).map_err(|e| e.in_round(t))?;
        phi = Some(out.last_phi);
        iterations += out.iterations;
        beta = out.beta.as_slice().to_vec();
        g_prev = g_t;
    }
    let rounds_used = trace.len();
    Ok(ModelFit {
        beta: DVector::from_vec(beta),
        comm_bytes: federation::comm_cost(rounds_used, fed.num_machines(), fed.p()).bytes,
        grad_sup_norms: trace,
        rounds_used,
        converged: stop == StopReason::GradientTolerance,
        stop,
        iterations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdmmConfig {
    /// Augmentation parameter.
    pub gamma: f64,
    /// Penalty `lambda_N` on the summed check loss.
    pub lambda: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub penalize_intercept: bool,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        Self {
            gamma: 1.0,
            lambda: 0.0,
            max_iter: 20_000,
            tol: 1e-6,
            penalize_intercept: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdmmOutcome {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Largest `||y_j - X_j beta_j - r_j||_2` at exit.
    pub primal_residual: f64,
    /// Largest `||beta_j - beta||_2` at exit.
    pub consensus_residual: f64,
}

/// Per-block ADMM variables.
#[derive(Debug, Clone)]
pub struct AdmmBlock {
    pub beta: DVector<f64>,
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub delta: DVector<f64>,
}

/// Full ADMM state.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub beta: DVector<f64>,
    pub blocks: Vec<AdmmBlock>,
    pub gamma: f64,
}

struct BlockSystem<'a> {
    shard: &'a DataShard,
    factor: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    /// Linear term `n v` subtracted from this block's summed loss.
    tilt: Option<DVector<f64>>,
}

fn init_block(
    shard: &DataShard,
    warm: Option<(&DVector<f64>, &SmoothedLoss)>,
    tilt: Option<&DVector<f64>>,
) -> AdmmBlock {
    let p = shard.p();
    match warm {
        None => AdmmBlock {
            beta: DVector::zeros(p),
            r: shard.y().to_vec(),
            u: vec![0.0; shard.n()],
            delta: DVector::zeros(p),
        },
        Some((beta, loss)) => {
            let r = shard.residuals(beta.as_slice()).expect("dimension checked");
            let u: Vec<f64> = r.iter().map(|v| -loss.gradient_factor(*v)).collect();
            let mut delta = tilt.cloned().unwrap_or_else(|| DVector::zeros(p));
            for (i, ui) in u.iter().enumerate() {
                for (d, x) in delta.iter_mut().zip(shard.row(i)) {
                    *d += ui * x;
                }
            }
            AdmmBlock {
                beta: beta.clone(),
                r,
                u,
                delta,
            }
        }
    }
}

/// Consensus ADMM for `sum_j rho_tau(y_j - X_j beta) + lambda ||beta||_1`.
///
/// A warm start `(beta, loss)` initialises `r = y - X beta`,
/// `u_i = tau - Kbar(-r_i/h)` and `delta_j = X_j' u_j`.
pub fn admm_qr(
    fed: &FederatedDataset,
    tau: f64,
    config: &AdmmConfig,
    warm: Option<(&DVector<f64>, &SmoothedLoss)>,
) -> Result<AdmmOutcome> {
    admm_blocks(fed.shards(), tau, config, warm, None)
}

pub(crate) fn admm_qr_single(
    shard: &DataShard,
    tau: f64,
    config: &AdmmConfig,
    warm: Option<(&DVector<f64>, &SmoothedLoss)>,
) -> Result<AdmmOutcome> {
    admm_blocks(std::slice::from_ref(shard), tau, config, warm, None)
}

/// Exact minimizer of the tilted check loss
/// `(1/n) sum rho_tau(y_i - x_i'beta) - <v, beta>` on one shard.
pub fn admm_tilted_single(
    shard: &DataShard,
    tau: f64,
    v: &DVector<f64>,
    config: &AdmmConfig,
    warm: Option<(&DVector<f64>, &SmoothedLoss)>,
) -> Result<AdmmOutcome> {
    shard.check_dim(v.len())?;
    admm_blocks(
        std::slice::from_ref(shard),
        tau,
        config,
        warm,
        Some(vec![v * shard.n() as f64]),
    )
}

fn admm_blocks(
    shards: &[DataShard],
    tau: f64,
    config: &AdmmConfig,
    warm: Option<(&DVector<f64>, &SmoothedLoss)>,
    tilts: Option<Vec<DVector<f64>>>,
) -> Result<AdmmOutcome> {
    if !(config.gamma > 0.0) || !(config.lambda >= 0.0) || !(tau > 0.0 && tau < 1.0) {
        return Err(ConquerError::InvalidArgument(format!(
            "invalid ADMM inputs tau = {tau}, {config:?}"
        )));
    }
    let p = shards[0].p();
    if let Some((b, _)) = warm {
        if b.len() != p {
            return Err(ConquerError::DimensionMismatch {
                expected: p,
                got: b.len(),
                context: "ADMM warm start",
            });
        }
    }
    let mut tilts = tilts.map(|t| t.into_iter());
    let systems: Vec<BlockSystem> = shards
        .iter()
        .map(|s| {
            let gram = weighted_gram(s, |_| 1.0) * s.n() as f64 + DMatrix::identity(p, p);
            let tilt = tilts.as_mut().and_then(|t| t.next());
            gram.cholesky()
                .map(|factor| BlockSystem {
                    shard: s,
                    factor,
                    tilt,
                })
                .ok_or_else(|| ConquerError::Singular("X'X + I not positive definite".into()))
        })
        .collect::<Result<_>>()?;
    let gamma = config.gamma;
    let m = shards.len() as f64;
    let mut state = AdmmState {
        beta: warm.map(|(b, _)| b.clone()).unwrap_or_else(|| DVector::zeros(p)),
        blocks: systems
            .iter()
            .map(|sys| init_block(sys.shard, warm, sys.tilt.as_ref()))
            .collect(),
        gamma,
    };
    let threshold = config.lambda / (m * gamma);
    let mut primal = f64::INFINITY;
    let mut consensus = f64::INFINITY;
    for k in 1..=config.max_iter {
        let mut center = DVector::zeros(p);
        for blk in &state.blocks {
            center += &blk.beta + &blk.delta / gamma;
        }
        center /= m;
        let prev = std::mem::replace(
            &mut state.beta,
            DVector::from_iterator(
                p,
                center.iter().enumerate().map(|(j, c)| {
                    if j == 0 && !config.penalize_intercept {
                        *c
                    } else {
                        soft_threshold(*c, threshold)
                    }
                }),
            ),
        );
        let beta = &state.beta;
        let residuals: Vec<(f64, f64)> = {
            let pairs: Vec<(&BlockSystem, &mut AdmmBlock)> =
                systems.iter().zip(state.blocks.iter_mut()).collect();
            update_blocks(pairs, beta, tau, gamma)
        };
        primal = residuals.iter().fold(0.0_f64, |a, r| a.max(r.0));
        consensus = residuals.iter().fold(0.0_f64, |a, r| a.max(r.1));
        let moved = (beta - prev).norm();
        if primal <= config.tol && consensus <= config.tol && moved <= config.tol {
            return Ok(AdmmOutcome {
                beta: state.beta,
                iterations: k,
                converged: true,
                primal_residual: primal,
                consensus_residual: consensus,
            });
        }
    }
    Ok(AdmmOutcome {
        beta: state.beta,
        iterations: config.max_iter,
        converged: false,
        primal_residual: primal,
        consensus_residual: consensus,
    })
}

fn update_block(sys: &BlockSystem, blk: &mut AdmmBlock, beta: &DVector<f64>, tau: f64, gamma: f64) -> (f64, f64) {
    let shard = sys.shard;
    let y = shard.y();
    let p = shard.p();
    let inv = 1.0 / gamma;
    let mut rhs = DVector::zeros(p);
    for i in 0..shard.n() {
        let row = shard.row(i);
        let v = y[i] - dot(row, blk.beta.as_slice()) + blk.u[i] * inv;
        let r = (v - tau * inv).max(0.0) - (-v + (tau - 1.0) * inv).max(0.0);
        blk.r[i] = r;
        let w = y[i] - r + blk.u[i] * inv;
        for (a, x) in rhs.iter_mut().zip(row) {
            *a += w * x;
        }
    }
    rhs -= &blk.delta * inv;
    rhs += beta;
    if let Some(t) = &sys.tilt {
        rhs += t * inv;
    }
    blk.beta = sys.factor.solve(&rhs);
    let mut primal = 0.0;
    for i in 0..shard.n() {
        let e = y[i] - dot(shard.row(i), blk.beta.as_slice()) - blk.r[i];
        blk.u[i] += gamma * e;
        primal += e * e;
    }
    let gap = &blk.beta - beta;
    blk.delta += &gap * gamma;
    (primal.sqrt(), gap.norm())
}

#[cfg(feature = "parallel")]
fn update_blocks(
    pairs: Vec<(&BlockSystem, &mut AdmmBlock)>,
    beta: &DVector<f64>,
    tau: f64,
    gamma: f64,
) -> Vec<(f64, f64)> {
    use rayon::prelude::*;
    pairs
        .into_par_iter()
        .map(|(sys, blk)| update_block(sys, blk, beta, tau, gamma))
        .collect()
}

#[cfg(not(feature = "parallel"))]
fn update_blocks(
    pairs: Vec<(&BlockSystem, &mut AdmmBlock)>,
    beta: &DVector<f64>,
    tau: f64,
    gamma: f64,
) -> Vec<(f64, f64)> {
    pairs
        .into_iter()
        .map(|(sys, blk)| update_block(sys, blk, beta, tau, gamma))
        .collect()
}
