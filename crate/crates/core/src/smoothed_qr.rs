//! Conquer loss, gradient and Hessian over a shard, the Barzilai-Borwein
//! gradient solver, and single-machine fits.

use nalgebra::{DMatrix, DVector};

use crate::data::{dot, DataShard};
use crate::error::{ConquerError, Result};
use crate::kernels::{check_loss, SmoothedLoss};
use crate::par::blocked_sum;
use crate::stats;

/// Outcome of a (possibly distributed) fit.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFit {
    pub beta: DVector<f64>,
    /// Sup-norm of the aggregated gradient recorded each communication round.
    pub grad_sup_norms: Vec<f64>,
    pub rounds_used: usize,
    /// Scalars transmitted times 8.
    pub comm_bytes: u64,
    pub converged: bool,
    pub stop: StopReason,
    /// Inner solver iterations summed over all rounds.
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    /// Single-machine solver met its gradient tolerance.
    SolverTolerance,
    /// Single-machine solver ran out of iterations.
    SolverMaxIterations,
    /// `g_t` fell below the round tolerance.
    GradientTolerance,
    /// `g_t` exceeded `g_{t-1}`.
    GradientIncrease,
    /// All requested rounds were used.
    MaxRounds,
}

impl ModelFit {
    pub(crate) fn local(beta: DVector<f64>, outcome_converged: bool, iterations: usize) -> Self {
        Self {
            beta,
            grad_sup_norms: Vec::new(),
            rounds_used: 0,
            comm_bytes: 0,
            converged: outcome_converged,
            stop: if outcome_converged {
                StopReason::SolverTolerance
            } else {
                StopReason::SolverMaxIterations
            },
            iterations,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Want {
    Loss,
    Gradient,
    Both,
}

/// Mean smoothed loss and/or gradient over the shard rows.
fn evaluate(shard: &DataShard, beta: &[f64], loss: &SmoothedLoss, want: Want) -> (f64, Vec<f64>) {
    let p = shard.p();
    let n = shard.n();
    let y = shard.y();
    let width = match want {
        Want::Loss => 1,
        _ => 1 + p,
    };
    let acc = blocked_sum(n, width, |start, end, acc| {
        for i in start..end {
            let row = shard.row(i);
            let u = y[i] - dot(row, beta);
            let factor = match want {
                Want::Loss => {
                    acc[0] += loss.loss(u);
                    continue;
                }
                Want::Gradient => loss.gradient_factor(u),
                Want::Both => {
                    let (l, f) = loss.loss_and_factor(u);
                    acc[0] += l;
                    f
                }
            };
            for (a, x) in acc[1..].iter_mut().zip(row) {
                *a += factor * x;
            }
        }
    });
    let inv = 1.0 / n as f64;
    let value = acc[0] * inv;
    let grad = acc[1..].iter().map(|g| g * inv).collect();
    (value, grad)
}

/// Mean smoothed check loss `(1/n) sum l_h(y_i - x_i'beta)`.
pub fn conquer_loss(shard: &DataShard, beta: &DVector<f64>, loss: &SmoothedLoss) -> Result<f64> {
    shard.check_dim(beta.len())?;
    Ok(evaluate(shard, beta.as_slice(), loss, Want::Loss).0)
}

/// `(1/n) sum {Kbar((x_i'beta - y_i)/h) - tau} x_i`.
pub fn conquer_gradient(
    shard: &DataShard,
    beta: &DVector<f64>,
    loss: &SmoothedLoss,
) -> Result<DVector<f64>> {
    shard.check_dim(beta.len())?;
    Ok(DVector::from_vec(
        evaluate(shard, beta.as_slice(), loss, Want::Gradient).1,
    ))
}

pub fn conquer_loss_and_gradient(
    shard: &DataShard,
    beta: &DVector<f64>,
    loss: &SmoothedLoss,
) -> Result<(f64, DVector<f64>)> {
    shard.check_dim(beta.len())?;
    let (v, g) = evaluate(shard, beta.as_slice(), loss, Want::Both);
    Ok((v, DVector::from_vec(g)))
}

pub(crate) fn gradient_slice(shard: &DataShard, beta: &[f64], loss: &SmoothedLoss) -> Vec<f64> {
    evaluate(shard, beta, loss, Want::Gradient).1
}

pub(crate) fn loss_and_gradient_slice(
    shard: &DataShard,
    beta: &[f64],
    loss: &SmoothedLoss,
) -> (f64, Vec<f64>) {
    evaluate(shard, beta, loss, Want::Both)
}

pub(crate) fn loss_slice(shard: &DataShard, beta: &[f64], loss: &SmoothedLoss) -> f64 {
    evaluate(shard, beta, loss, Want::Loss).0
}

/// Symmetric matrix `(1/n) sum w_i x_i x_i'` with `w_i = weight(i)`.
pub(crate) fn weighted_gram<F>(shard: &DataShard, weight: F) -> DMatrix<f64>
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let p = shard.p();
    let acc = blocked_sum(shard.n(), p * p, |start, end, acc| {
        for i in start..end {
            let w = weight(i);
            if w == 0.0 {
                continue;
            }
            let row = shard.row(i);
            for a in 0..p {
                let wa = w * row[a];
                for b in a..p {
                    acc[a * p + b] += wa * row[b];
                }
            }
        }
    });
    let inv = 1.0 / shard.n() as f64;
    let mut m = DMatrix::zeros(p, p);
    for a in 0..p {
        for b in a..p {
            let v = acc[a * p + b] * inv;
            m[(a, b)] = v;
            m[(b, a)] = v;
        }
    }
    m
}

/// `(1/n) sum K_h(y_i - x_i'beta) x_i x_i'`.
pub fn conquer_hessian(
    shard: &DataShard,
    beta: &DVector<f64>,
    loss: &SmoothedLoss,
) -> Result<DMatrix<f64>> {
    shard.check_dim(beta.len())?;
    let r = shard.residuals(beta.as_slice())?;
    Ok(weighted_gram(shard, |i| loss.curvature(r[i])))
}

/// Mean check loss and the subgradient `(1/n) sum {1(y_i < x_i'beta) - tau} x_i`.
pub fn check_loss_and_subgradient(
    shard: &DataShard,
    beta: &DVector<f64>,
    tau: f64,
) -> Result<(f64, DVector<f64>)> {
    shard.check_dim(beta.len())?;
    let p = shard.p();
    let y = shard.y();
    let b = beta.as_slice();
    let acc = blocked_sum(shard.n(), 1 + p, |start, end, acc| {
        for i in start..end {
            let row = shard.row(i);
            let fit = dot(row, b);
            acc[0] += check_loss(tau, y[i] - fit);
            let factor = if y[i] < fit { 1.0 - tau } else { -tau };
            for (a, x) in acc[1..].iter_mut().zip(row) {
                *a += factor * x;
            }
        }
    });
    let inv = 1.0 / shard.n() as f64;
    Ok((
        acc[0] * inv,
        DVector::from_iterator(p, acc[1..].iter().map(|g| g * inv)),
    ))
}

/// Mean check loss only.
pub fn check_loss_mean(shard: &DataShard, beta: &DVector<f64>, tau: f64) -> Result<f64> {
    let r = shard.residuals(beta.as_slice())?;
    Ok(crate::par::pairwise_sum(
        &r.iter().map(|u| check_loss(tau, *u)).collect::<Vec<_>>(),
    ) / r.len() as f64)
}

/// A smooth objective for the first-order solvers.
pub trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, beta: &[f64]) -> f64;
    fn gradient(&self, beta: &[f64]) -> Vec<f64>;
    fn value_and_gradient(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        (self.value(beta), self.gradient(beta))
    }
}

/// One coordinate pinned at a value; the remaining ones are free.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedCoordinate {
    pub index: usize,
    pub value: f64,
}

impl FixedCoordinate {
    /// Inserts the fixed value into a free-coordinate vector.
    pub fn embed(&self, free: &[f64]) -> Vec<f64> {
        let mut full = Vec::with_capacity(free.len() + 1);
        full.extend_from_slice(&free[..self.index]);
        full.push(self.value);
        full.extend_from_slice(&free[self.index..]);
        full
    }

    /// Removes the fixed index from a full vector.
    pub fn project(&self, full: &[f64]) -> Vec<f64> {
        full.iter()
            .enumerate()
            .filter(|(j, _)| *j != self.index)
            .map(|(_, v)| *v)
            .collect()
    }
}

pub(crate) fn embed(fixed: Option<FixedCoordinate>, free: &[f64]) -> Vec<f64> {
    match fixed {
        Some(f) => f.embed(free),
        None => free.to_vec(),
    }
}

pub(crate) fn project(fixed: Option<FixedCoordinate>, full: Vec<f64>) -> Vec<f64> {
    match fixed {
        Some(f) => f.project(&full),
        None => full,
    }
}

/// `Q_h(beta) - <shift, beta>` on one shard, optionally with a pinned
/// coordinate. The shifted form is the master's round objective.
#[derive(Debug, Clone)]
pub struct ConquerObjective<'a> {
    shard: &'a DataShard,
    loss: SmoothedLoss,
    shift: Option<Vec<f64>>,
    fixed: Option<FixedCoordinate>,
}

impl<'a> ConquerObjective<'a> {
    pub fn new(shard: &'a DataShard, loss: SmoothedLoss) -> Self {
        Self {
            shard,
            loss,
            shift: None,
            fixed: None,
        }
    }

    /// Subtracts `<shift, beta>`; `shift` lives in the free coordinates.
    pub fn with_shift(mut self, shift: Vec<f64>) -> Self {
        self.shift = Some(shift);
        self
    }

    pub fn with_fixed(mut self, fixed: Option<FixedCoordinate>) -> Self {
        self.fixed = fixed;
        self
    }
}

impl SmoothObjective for ConquerObjective<'_> {
    fn dim(&self) -> usize {
        self.shard.p() - usize::from(self.fixed.is_some())
    }

    fn value(&self, beta: &[f64]) -> f64 {
        let full = embed(self.fixed, beta);
        let v = loss_slice(self.shard, &full, &self.loss);
        match &self.shift {
            Some(s) => v - dot(s, beta),
            None => v,
        }
    }

    fn gradient(&self, beta: &[f64]) -> Vec<f64> {
        let full = embed(self.fixed, beta);
        let mut g = project(self.fixed, gradient_slice(self.shard, &full, &self.loss));
        if let Some(s) = &self.shift {
            g.iter_mut().zip(s).for_each(|(a, b)| *a -= b);
        }
        g
    }

    fn value_and_gradient(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let full = embed(self.fixed, beta);
        let (mut v, g) = loss_and_gradient_slice(self.shard, &full, &self.loss);
        let mut g = project(self.fixed, g);
        if let Some(s) = &self.shift {
            v -= dot(s, beta);
            g.iter_mut().zip(s).for_each(|(a, b)| *a -= b);
        }
        (v, g)
    }
}

/// Settings for [`gd_bb_minimize`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GdBbConfig {
    /// Stop when the Euclidean gradient norm is at most this.
    pub tol: f64,
    pub max_iter: usize,
    /// Upper bound on the Barzilai-Borwein step.
    pub step_cap: f64,
}

impl Default for GdBbConfig {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            step_cap: 20.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GdBbOutcome {
    pub beta: DVector<f64>,
    pub grad_norm: f64,
    /// Gradient evaluations performed.
    pub iterations: usize,
    pub converged: bool,
}

fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn check_finite(g: &[f64], iteration: usize) -> Result<()> {
    if g.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(ConquerError::NonFiniteGradient { iteration })
    }
}

/// Gradient descent with capped Barzilai-Borwein steps.
///
/// The first step has unit length; afterwards
/// `eta_k = min(eta_1k, eta_2k, step_cap)` when both BB ratios are positive
/// and `1` otherwise. If the iteration budget runs out the iterate with the
/// smallest gradient norm is returned with `converged = false`.
pub fn gd_bb_minimize<O: SmoothObjective + ?Sized>(
    objective: &O,
    beta0: &[f64],
    config: &GdBbConfig,
) -> Result<GdBbOutcome> {
    if !(config.tol > 0.0) || config.max_iter == 0 || !(config.step_cap > 0.0) {
        return Err(ConquerError::InvalidArgument(format!(
            "invalid GD-BB settings {config:?}"
        )));
    }
    if beta0.len() != objective.dim() {
        return Err(ConquerError::DimensionMismatch {
            expected: objective.dim(),
            got: beta0.len(),
            context: "GD-BB starting point",
        });
    }
    let mut prev_beta = beta0.to_vec();
    let mut prev_grad = objective.gradient(&prev_beta);
    check_finite(&prev_grad, 0)?;
    let mut best = (norm2(&prev_grad), prev_beta.clone());
    if best.0 <= config.tol {
        return Ok(GdBbOutcome {
            beta: DVector::from_vec(prev_beta),
            grad_norm: best.0,
            iterations: 1,
            converged: true,
        });
    }
    let mut beta: Vec<f64> = prev_beta
        .iter()
        .zip(&prev_grad)
        .map(|(b, g)| b - g)
        .collect();
    for iteration in 1..config.max_iter {
        let grad = objective.gradient(&beta);
        check_finite(&grad, iteration)?;
        let gnorm = norm2(&grad);
        if gnorm < best.0 {
            best = (gnorm, beta.clone());
        }
        if gnorm <= config.tol {
            return Ok(GdBbOutcome {
                beta: DVector::from_vec(beta),
                grad_norm: gnorm,
                iterations: iteration + 1,
                converged: true,
            });
        }
        let (mut ss, mut sr, mut rr) = (0.0, 0.0, 0.0);
        for j in 0..beta.len() {
            let s = beta[j] - prev_beta[j];
            let r = grad[j] - prev_grad[j];
            ss += s * s;
            sr += s * r;
            rr += r * r;
        }
        let eta1 = ss / sr;
        let eta2 = sr / rr;
        let eta = if eta1 > 0.0 && eta2 > 0.0 {
            eta1.min(eta2).min(config.step_cap)
        } else {
            1.0
        };
        let next: Vec<f64> = beta.iter().zip(&grad).map(|(b, g)| b - eta * g).collect();
        prev_beta = std::mem::replace(&mut beta, next);
        prev_grad = grad;
    }
    Ok(GdBbOutcome {
        beta: DVector::from_vec(best.1),
        grad_norm: best.0,
        iterations: config.max_iter,
        converged: false,
    })
}

/// Least-squares coefficients via the normal equations, with a tiny ridge
/// fallback when `X'X` is numerically singular.
pub fn least_squares(shard: &DataShard) -> DVector<f64> {
    let gram = weighted_gram(shard, |_| 1.0);
    let p = shard.p();
    let y = shard.y();
    let xty = crate::par::blocked_sum(shard.n(), p, |start, end, acc| {
        for i in start..end {
            for (a, x) in acc.iter_mut().zip(shard.row(i)) {
                *a += y[i] * x;
            }
        }
    });
    let rhs = DVector::from_iterator(p, xty.iter().map(|v| v / shard.n() as f64));
    if let Some(ch) = gram.clone().cholesky() {
        return ch.solve(&rhs);
    }
    let ridge = 1e-8 * (gram.trace() / p as f64).max(1.0);
    let reg = gram + DMatrix::identity(p, p) * ridge;
    match reg.cholesky() {
        Some(ch) => ch.solve(&rhs),
        None => DVector::zeros(p),
    }
}

/// Single-machine conquer fit; `beta0 = None` starts from least squares.
pub fn fit_conquer(
    shard: &DataShard,
    loss: &SmoothedLoss,
    beta0: Option<&DVector<f64>>,
    config: &GdBbConfig,
) -> Result<ModelFit> {
    let start = match beta0 {
        Some(b) => {
            shard.check_dim(b.len())?;
            b.clone()
        }
        None => least_squares(shard),
    };
    let obj = ConquerObjective::new(shard, *loss);
    let out = gd_bb_minimize(&obj, start.as_slice(), config)?;
    Ok(ModelFit::local(out.beta, out.converged, out.iterations))
}

/// Conquer fit with coordinate `k` (0-based) pinned at `value`.
pub fn fit_constrained(
    shard: &DataShard,
    loss: &SmoothedLoss,
    k: usize,
    value: f64,
    beta0: Option<&DVector<f64>>,
    config: &GdBbConfig,
) -> Result<DVector<f64>> {
    let p = shard.p();
    if k >= p {
        return Err(ConquerError::InvalidArgument(format!(
            "constrained index {k} out of range for p = {p}"
        )));
    }
    if p == 1 {
        return Ok(DVector::from_element(1, value));
    }
    let fixed = FixedCoordinate { index: k, value };
    let start = match beta0 {
        Some(b) => {
            shard.check_dim(b.len())?;
            fixed.project(b.as_slice())
        }
        None => fixed.project(least_squares(shard).as_slice()),
    };
    let obj = ConquerObjective::new(shard, *loss).with_fixed(Some(fixed));
    let out = gd_bb_minimize(&obj, &start, config)?;
    Ok(DVector::from_vec(fixed.embed(out.beta.as_slice())))
}

/// `min(sd, 1.4826 * MAD)` of the residuals; `0` for constant residuals.
pub fn dynamic_bandwidth_scale(residuals: &[f64]) -> Result<f64> {
    if residuals.len() < 2 {
        return Err(ConquerError::InvalidArgument(
            "need at least two residuals for a scale estimate".into(),
        ));
    }
    let sd = stats::sample_sd(residuals);
    let med = stats::median(residuals)?;
    let dev: Vec<f64> = residuals.iter().map(|r| (r - med).abs()).collect();
    let mad = 1.4826 * stats::median(&dev)?;
    Ok(sd.min(mad))
}
