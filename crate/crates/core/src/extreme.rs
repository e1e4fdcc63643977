//! Two-step conquer for extreme quantile levels: the intercept is refitted
//! from averaged local residual quantiles and only the slopes go through the
//! smoothed loss.

use nalgebra::DVector;

use crate::data::{dot, DataShard, FederatedDataset};
use crate::error::{ConquerError, Result};
use crate::federation::{aggregate, comm_cost, round_plan, sup_norm, GradientMessage, SmoothingPlan, ROUND_TOLERANCE};
use crate::par::map_slice;
use crate::smoothed_qr::{
    gd_bb_minimize, gradient_slice, ConquerObjective, FixedCoordinate, GdBbConfig, ModelFit, StopReason,
};
use crate::stats::lower_quantile;

#[derive(Debug, Clone, PartialEq)]
pub struct TwoStepState {
    pub intercept: f64,
    pub slopes: Vec<f64>,
    pub round: usize,
}

impl TwoStepState {
    pub fn beta(&self) -> DVector<f64> {
        let mut v = Vec::with_capacity(self.slopes.len() + 1);
        v.push(self.intercept);
        v.extend_from_slice(&self.slopes);
        DVector::from_vec(v)
    }
}

/// Sample `tau`-quantile (order statistic at `ceil(tau n)`) of
/// `y_i - x_{i,-}' slopes`, where `x_{i,-}` drops the intercept column.
pub fn local_residual_quantile(shard: &DataShard, slopes: &[f64], tau: f64) -> Result<f64> {
    if slopes.len() + 1 != shard.p() {
        return Err(ConquerError::DimensionMismatch {
            expected: shard.p() - 1,
            got: slopes.len(),
            context: "slopes",
        });
    }
    let r: Vec<f64> = (0..shard.n())
        .map(|i| shard.y()[i] - dot(&shard.row(i)[1..], slopes))
        .collect();
    lower_quantile(&r, tau)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoStepConfig {
    pub rounds: usize,
    pub solver: GdBbConfig,
    pub early_stop: bool,
    /// Replaces the averaged quantile with a fixed intercept every round.
    pub intercept_override: Option<f64>,
}

impl TwoStepConfig {
    pub fn new(rounds: usize) -> Self {
        Self {
            rounds,
            solver: GdBbConfig::default(),
            early_stop: true,
            intercept_override: None,
        }
    }
}

/// Distributed two-step conquer. Column 0 of the design is the intercept.
///
/// On a break in round `t` the output pairs the freshly refitted intercept
/// with the slopes from round `t - 1`.
pub fn run_two_step_conquer(
    fed: &FederatedDataset,
    plan: &SmoothingPlan,
    init: &DVector<f64>,
    config: &TwoStepConfig,
) -> Result<ModelFit> {
    if config.rounds == 0 {
        return Err(ConquerError::InvalidArgument("T must be at least 1".into()));
    }
    if init.len() != fed.p() {
        return Err(ConquerError::DimensionMismatch {
            expected: fed.p(),
            got: init.len(),
            context: "initial estimate",
        });
    }
    let tau = plan.tau;
    let mut state = TwoStepState {
        intercept: init[0],
        slopes: init.as_slice()[1..].to_vec(),
        round: 0,
    };
    let mut trace = Vec::new();
    let mut g_prev = 1.0;
    let mut iterations = 0;
    let mut stop = StopReason::MaxRounds;
    for t in 1..=config.rounds {
        let version = t as u64;
        let q = match config.intercept_override {
            Some(c) => c,
            None => {
                let local: Vec<Result<f64>> =
                    map_slice(fed.shards(), |s| local_residual_quantile(s, &state.slopes, tau));
                let mut q = 0.0;
                for (j, (v, w)) in local.into_iter().zip(fed.weights()).enumerate() {
                    q += w * v.map_err(|e| e.in_shard(j).in_round(t))?;
                }
                q
            }
        };
        state.intercept = q;
        let fixed = Some(FixedCoordinate { index: 0, value: q });
        let beta = fixed.unwrap().embed(&state.slopes);
        let rp = round_plan(fed, plan, &beta).map_err(|e| e.in_round(t))?;
        let global_loss = rp.global_loss()?;
        let msgs: Vec<GradientMessage> = map_slice(fed.shards(), |s| GradientMessage {
            shard_id: s.id(),
            beta_version: version,
            grad: gradient_slice(s, &beta, &global_loss),
        });
        let global = aggregate(fed, &msgs, version).map_err(|e| e.in_round(t))?;
        let global = global[1..].to_vec();
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
        let local = gradient_slice(fed.master(), &beta, &local_loss);
        let shift: Vec<f64> = local[1..].iter().zip(&global).map(|(l, g)| l - g).collect();
        let objective = ConquerObjective::new(fed.master(), local_loss)
            .with_fixed(fixed)
            .with_shift(shift);
        let out = gd_bb_minimize(&objective, &state.slopes, &config.solver).map_err(|e| e.in_round(t))?;
        iterations += out.iterations;
        state.slopes = out.beta.as_slice().to_vec();
        state.round = t;
        g_prev = g_t;
    }
    let rounds_used = trace.len();
    Ok(ModelFit {
        beta: state.beta(),
        comm_bytes: comm_cost(rounds_used, fed.num_machines(), fed.p()).bytes,
        grad_sup_norms: trace,
        rounds_used,
        converged: stop == StopReason::GradientTolerance,
        stop,
        iterations,
    })
}
