//! Variance estimation, Wald intervals, score confidence sets and the two
//! one-round multiplier bootstraps.

use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand_distr::{Distribution, StandardNormal};

use crate::data::{format_float, FederatedDataset};
use crate::datagen::stream;
use crate::error::{ConquerError, Result};
use crate::federation::{fit_constrained_distributed, RoundConfig, SmoothingPlan};
use crate::kernels::{Kernel, SmoothedLoss};
use crate::normal;
use crate::par::{blocked_sum, map_indexed, pairwise_combine};
use crate::smoothed_qr::{gradient_slice, weighted_gram};
use crate::stats::lower_quantile_sorted;
use crate::DataShard;

/// Powell-type Hessian `(1/(n b)) sum phi(r_i/b) x_i x_i'`.
pub fn powell_hessian(shard: &DataShard, residuals: &[f64], b: f64) -> Result<DMatrix<f64>> {
    check_residuals(shard, residuals)?;
    check_bandwidth(b)?;
    Ok(weighted_gram(shard, |i| normal::pdf(residuals[i] / b) / b))
}

/// `Sigma_1 = (1/n) sum x_i x_i'` and
/// `Sigma_b(tau) = (1/n) sum {Kbar(-r_i/b) - tau}^2 x_i x_i'`, where `loss`
/// carries `tau`, `b` and the kernel.
pub fn covariance_estimates(
    shard: &DataShard,
    residuals: &[f64],
    loss: &SmoothedLoss,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_residuals(shard, residuals)?;
    let plain = weighted_gram(shard, |_| 1.0);
    let scaled = weighted_gram(shard, |i| loss.gradient_factor(residuals[i]).powi(2));
    Ok((plain, scaled))
}

/// Kernel density estimate of the residual density at zero,
/// `(1/(N b)) sum_i K(r_i / b)`, assembled from per-shard means with weights
/// `n_j / N`.
pub fn density_at_zero(
    fed: &FederatedDataset,
    residuals_by_shard: &[Vec<f64>],
    b: f64,
    kernel: Kernel,
) -> Result<f64> {
    check_bandwidth(b)?;
    if residuals_by_shard.len() != fed.num_machines() {
        return Err(ConquerError::DimensionMismatch {
            expected: fed.num_machines(),
            got: residuals_by_shard.len(),
            context: "residuals per shard",
        });
    }
    let mut total = 0.0;
    for ((shard, r), w) in fed.shards().iter().zip(residuals_by_shard).zip(fed.weights()) {
        check_residuals(shard, r)?;
        let sum = blocked_sum(r.len(), 1, |s, e, acc| {
            acc[0] += r[s..e].iter().map(|v| kernel.density(v / b)).sum::<f64>();
        })[0];
        total += w * sum / (shard.n() as f64 * b);
    }
    Ok(total)
}

/// Hall and Sheather rule-of-thumb bandwidth.
pub fn hall_sheather_bandwidth(total: usize, tau: f64, alpha: f64) -> Result<f64> {
    if total == 0 || !(tau > 0.0 && tau < 1.0) || !(alpha > 0.0 && alpha < 1.0) {
        return Err(ConquerError::InvalidArgument(format!(
            "Hall-Sheather bandwidth needs N >= 1, tau and alpha in (0, 1); got N = {total}, tau = {tau}, alpha = {alpha}"
        )));
    }
    let z = normal::quantile(tau);
    let ratio = 1.5 * normal::pdf(z).powi(2) / (2.0 * z * z + 1.0);
    Ok((total as f64).powf(-1.0 / 3.0) * normal::quantile(1.0 - alpha / 2.0).powf(2.0 / 3.0) * ratio.cbrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum VarianceKind {
    /// `tau (1 - tau) (Sigma_1^{-1})_jj / f(0)^2`; valid only when the
    /// residual density does not depend on `x`.
    TypeI,
    /// `tau (1 - tau) (H^{-1} Sigma_1 H^{-1})_jj`.
    TypeII,
    /// `(H^{-1} Sigma_b(tau) H^{-1})_jj`.
    TypeIII,
}

impl VarianceKind {
    pub fn name(self) -> &'static str {
        match self {
            VarianceKind::TypeI => "type1",
            VarianceKind::TypeII => "type2",
            VarianceKind::TypeIII => "type3",
        }
    }

    pub fn homoscedastic_only(self) -> bool {
        self == VarianceKind::TypeI
    }
}

impl FromStr for VarianceKind {
    type Err = ConquerError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "type1" | "typei" | "i" => Ok(VarianceKind::TypeI),
            "type2" | "typeii" | "ii" => Ok(VarianceKind::TypeII),
            "type3" | "typeiii" | "iii" => Ok(VarianceKind::TypeIII),
            _ => Err(ConquerError::InvalidArgument(format!("unknown variance kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceEstimate {
    pub kind: VarianceKind,
    /// Per-coefficient standard deviations of `sqrt(N) (beta_tilde - beta*)`.
    pub sigma: Vec<f64>,
    pub h_hat: DMatrix<f64>,
    pub sigma_hat: DMatrix<f64>,
}

impl VarianceEstimate {
    pub fn homoscedastic_only(&self) -> bool {
        self.kind.homoscedastic_only()
    }
}

/// Pointwise variance estimate from the master shard at `beta`.
///
/// `b` is the local bandwidth for the Powell Hessian and `Sigma_b(tau)`.
/// The density-based form uses a Gaussian KDE over all shards with the
/// Hall and Sheather bandwidth at level `alpha`.
pub fn estimate_variance(
    fed: &FederatedDataset,
    beta: &DVector<f64>,
    kind: VarianceKind,
    tau: f64,
    b: f64,
    kernel: Kernel,
    alpha: f64,
) -> Result<VarianceEstimate> {
    let master = fed.master();
    master.check_dim(beta.len())?;
    let residuals = master.residuals(beta.as_slice())?;
    let loss = SmoothedLoss::new(tau, b, kernel)?;
    let (plain, scaled) = covariance_estimates(master, &residuals, &loss)?;
    let scale = tau * (1.0 - tau);
    let (h_hat, sigma_hat, cov) = match kind {
        VarianceKind::TypeI => {
            let by_shard: Vec<Vec<f64>> = fed
                .shards()
                .iter()
                .map(|s| s.residuals(beta.as_slice()))
                .collect::<Result<_>>()?;
            let bw = hall_sheather_bandwidth(fed.total_rows(), tau, alpha)?;
            let f0 = density_at_zero(fed, &by_shard, bw, Kernel::Gaussian)?;
            let inv = invert(&plain, "Sigma_1")?;
            (&plain * f0, &plain * scale, inv * (scale / (f0 * f0)))
        }
        VarianceKind::TypeII => {
            let h = powell_hessian(master, &residuals, b)?;
            let hi = invert(&h, "Powell Hessian")?;
            let cov = &hi * &plain * &hi * scale;
            (h, &plain * scale, cov)
        }
        VarianceKind::TypeIII => {
            let h = powell_hessian(master, &residuals, b)?;
            let hi = invert(&h, "Powell Hessian")?;
            let cov = &hi * &scaled * &hi;
            (h, scaled, cov)
        }
    };
    let sigma = (0..beta.len()).map(|j| cov[(j, j)].max(0.0).sqrt()).collect();
    Ok(VarianceEstimate {
        kind,
        sigma,
        h_hat,
        sigma_hat,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum InferenceMethod {
    WaldNormal,
    Score,
    BootA,
    BootB,
}

impl InferenceMethod {
    pub fn name(self) -> &'static str {
        match self {
            InferenceMethod::WaldNormal => "wald_normal",
            InferenceMethod::Score => "score",
            InferenceMethod::BootA => "boot_a",
            InferenceMethod::BootB => "boot_b",
        }
    }
}

/// Inference result for one coefficient.
#[derive(Debug, Clone, PartialEq)]
pub enum CoefSet {
    Interval { lower: f64, upper: f64 },
    /// Accepted grid values of a score inversion. `undecided` holds grid
    /// points whose constrained fit failed.
    Grid { accepted: Vec<f64>, undecided: Vec<f64> },
}

impl CoefSet {
    /// Maximal runs of accepted values as `(start, end)`; a run breaks at
    /// any rejected or undecided grid point in between.
    pub fn runs(&self, grid: Option<&[f64]>) -> Vec<(f64, f64)> {
        match self {
            CoefSet::Interval { lower, upper } => vec![(*lower, *upper)],
            CoefSet::Grid { accepted, .. } => {
                let Some(grid) = grid else {
                    return accepted.iter().map(|a| (*a, *a)).collect();
                };
                let mut runs: Vec<(f64, f64)> = Vec::new();
                let mut open = false;
                for g in grid {
                    if accepted.contains(g) {
                        match runs.last_mut() {
                            Some(last) if open => last.1 = *g,
                            _ => runs.push((*g, *g)),
                        }
                        open = true;
                    } else {
                        open = false;
                    }
                }
                runs
            }
        }
    }

    /// Interval width, or for a grid the span of the accepted values.
    pub fn width(&self) -> f64 {
        match self {
            CoefSet::Interval { lower, upper } => upper - lower,
            CoefSet::Grid { accepted, .. } => match (accepted.first(), accepted.last()) {
                (Some(a), Some(b)) => b - a,
                _ => 0.0,
            },
        }
    }

    pub fn contains(&self, value: f64) -> bool {
        match self {
            CoefSet::Interval { lower, upper } => *lower <= value && value <= *upper,
            CoefSet::Grid { accepted, .. } => match (accepted.first(), accepted.last()) {
                (Some(a), Some(b)) => *a <= value && value <= *b,
                _ => false,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefInference {
    pub coef: usize,
    pub set: CoefSet,
    /// Grid used for a score inversion.
    pub grid: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferenceReport {
    pub method: InferenceMethod,
    /// Nominal coverage `1 - alpha`.
    pub level: f64,
    pub coefs: Vec<CoefInference>,
    pub note: Option<String>,
}

impl InferenceReport {
    pub fn coef(&self, k: usize) -> Option<&CoefInference> {
        self.coefs.iter().find(|c| c.coef == k)
    }
}

/// CSV header shared by every report.
pub const REPORT_HEADER: [&str; 5] = ["coef_index", "method", "level", "lower", "upper"];

/// Writes reports as `coef_index, method, level, lower, upper`; score sets
/// emit one row per accepted run.
pub fn write_reports_csv<W: Write>(out: W, reports: &[InferenceReport]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(REPORT_HEADER)?;
    for r in reports {
        for c in &r.coefs {
            for (lo, hi) in c.set.runs(c.grid.as_deref()) {
                w.write_record([
                    c.coef.to_string(),
                    r.method.name().to_string(),
                    format_float(r.level),
                    format_float(lo),
                    format_float(hi),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// `beta_j +/- z_{1-alpha/2} sigma_j / sqrt(N)`.
pub fn wald_intervals(
    beta: &DVector<f64>,
    var: &VarianceEstimate,
    total: usize,
    alpha: f64,
) -> Result<InferenceReport> {
    check_alpha(alpha)?;
    if var.sigma.len() != beta.len() {
        return Err(ConquerError::DimensionMismatch {
            expected: beta.len(),
            got: var.sigma.len(),
            context: "standard errors",
        });
    }
    let z = normal::quantile(1.0 - alpha / 2.0).max(0.0);
    let root = (total as f64).sqrt();
    let coefs = beta
        .iter()
        .zip(&var.sigma)
        .enumerate()
        .map(|(coef, (b, s))| {
            if !(*s > 0.0) {
                return Err(ConquerError::NonPositiveVariance {
                    coef,
                    kind: var.kind.name().to_string(),
                });
            }
            let half = z * s / root;
            Ok(CoefInference {
                coef,
                set: CoefSet::Interval {
                    lower: b - half,
                    upper: b + half,
                },
                grid: None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(InferenceReport {
        method: InferenceMethod::WaldNormal,
        level: 1.0 - alpha,
        coefs,
        note: var
            .homoscedastic_only()
            .then(|| "density-based variance assumes homoscedastic errors".to_string()),
    })
}

/// Distributed sums `S_k = sum xi_i x_ik` and `V_k^2 = sum (xi_i x_ik)^2`
/// with `xi_i = Kbar((x_i'beta - y_i)/h) - tau`.
pub fn score_components(
    fed: &FederatedDataset,
    beta: &DVector<f64>,
    k: usize,
    loss: &SmoothedLoss,
) -> Result<(f64, f64)> {
    if k >= fed.p() {
        return Err(ConquerError::InvalidArgument(format!(
            "coefficient {k} out of range for p = {}",
            fed.p()
        )));
    }
    let parts = fed
        .shards()
        .iter()
        .map(|shard| {
            shard.check_dim(beta.len())?;
            let b = beta.as_slice();
            Ok(blocked_sum(shard.n(), 2, |s, e, acc| {
                for i in s..e {
                    let row = shard.row(i);
                    let r = shard.y()[i] - crate::data::dot(row, b);
                    let v = loss.gradient_factor(r) * row[k];
                    acc[0] += v;
                    acc[1] += v * v;
                }
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let sum = pairwise_combine(parts);
    Ok((sum[0], sum[1]))
}

/// Self-normalized statistic `(S/V) / sqrt((N - (S/V)^2) / (N - 1))`.
pub fn self_normalized(s: f64, v2: f64, total: usize) -> Result<f64> {
    if v2 <= 0.0 {
        return if s == 0.0 {
            Ok(0.0)
        } else {
            Err(ConquerError::DegenerateScore { s })
        };
    }
    let ratio = s / v2.sqrt();
    let n = total as f64;
    let rest = n - ratio * ratio;
    if rest <= 0.0 {
        return Ok(if ratio > 0.0 { f64::INFINITY } else { f64::NEG_INFINITY });
    }
    Ok(ratio / (rest / (n - 1.0)).sqrt())
}

/// Score statistic for coordinate `k` at a constrained estimate.
pub fn score_statistic(
    fed: &FederatedDataset,
    beta_constrained: &DVector<f64>,
    k: usize,
    loss: &SmoothedLoss,
) -> Result<f64> {
    let (s, v2) = score_components(fed, beta_constrained, k, loss)?;
    self_normalized(s, v2, fed.total_rows())
}

/// Default score grid: `points` equispaced values over `center +/- width * se`.
pub fn default_score_grid(center: f64, se: f64, width: f64, points: usize) -> Vec<f64> {
    if points <= 1 {
        return vec![center];
    }
    let step = 2.0 * width * se / (points - 1) as f64;
    (0..points).map(|i| center - width * se + step * i as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GridScan {
    /// Evaluate every grid point.
    Full,
    /// Walk outward from the grid point nearest the estimate and stop each
    /// direction after `patience` consecutive rejections.
    Outward { patience: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreConfig {
    pub rounds: RoundConfig,
    pub scan: GridScan,
}

impl Default for ScoreConfig {
    fn default() -> Self {
        Self {
            rounds: RoundConfig::new(10),
            scan: GridScan::Full,
        }
    }
}

enum Decision {
    Accept,
    Reject,
    Undecided,
}

/// Inverts the score test for coordinate `k` over `grid`. Each grid point
/// runs a constrained distributed fit started from `start`.
pub fn score_confidence_set(
    fed: &FederatedDataset,
    plan: &SmoothingPlan,
    k: usize,
    grid: &[f64],
    alpha: f64,
    start: &DVector<f64>,
    config: &ScoreConfig,
) -> Result<InferenceReport> {
    if grid.is_empty() || grid.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(ConquerError::InvalidArgument("score grid must be nonempty and sorted".into()));
    }
    if !(0.0..1.0).contains(&alpha) {
        return Err(ConquerError::InvalidArgument(format!("alpha must lie in [0, 1), got {alpha}")));
    }
    let loss = plan.global_loss()?;
    let lo = normal::quantile(alpha / 2.0);
    let hi = normal::quantile(1.0 - alpha / 2.0);
    let decide = |c: f64, warm: &DVector<f64>| -> (Decision, Option<DVector<f64>>) {
        let fit = match fit_constrained_distributed(fed, plan, k, c, warm, &config.rounds) {
            Ok(f) => f,
            Err(_) => return (Decision::Undecided, None),
        };
        match score_statistic(fed, &fit.beta, k, &loss) {
            Ok(t) if t.is_nan() => (Decision::Undecided, Some(fit.beta)),
            Ok(t) if lo <= t && t <= hi => (Decision::Accept, Some(fit.beta)),
            Ok(_) => (Decision::Reject, Some(fit.beta)),
            Err(_) => (Decision::Undecided, Some(fit.beta)),
        }
    };
    let mut decisions: Vec<Option<Decision>> = match config.scan {
        GridScan::Full => map_indexed(grid.len(), |i| Some(decide(grid[i], start).0)),
        GridScan::Outward { patience } => {
            let mut out: Vec<Option<Decision>> = (0..grid.len()).map(|_| None).collect();
            let anchor = start[k];
            let centre = (0..grid.len())
                .min_by(|a, b| (grid[*a] - anchor).abs().total_cmp(&(grid[*b] - anchor).abs()))
                .unwrap_or(0);
            for dir in [1isize, -1] {
                let mut warm = start.clone();
                let mut misses = 0;
                let mut i = if dir > 0 { centre as isize } else { centre as isize - 1 };
                while i >= 0 && (i as usize) < grid.len() && misses < patience.max(1) {
                    let (d, beta) = decide(grid[i as usize], &warm);
                    if let Some(b) = beta {
                        warm = b;
                    }
                    misses = if matches!(d, Decision::Accept) { 0 } else { misses + 1 };
                    out[i as usize] = Some(d);
                    i += dir;
                }
            }
            out
        }
    };
    let mut accepted = Vec::new();
    let mut undecided = Vec::new();
    for (g, d) in grid.iter().zip(decisions.iter_mut()) {
        match d.take() {
            Some(Decision::Accept) => accepted.push(*g),
            Some(Decision::Undecided) => undecided.push(*g),
            _ => {}
        }
    }
    Ok(InferenceReport {
        method: InferenceMethod::Score,
        level: 1.0 - alpha,
        coefs: vec![CoefInference {
            coef: k,
            set: CoefSet::Grid { accepted, undecided },
            grid: Some(grid.to_vec()),
        }],
        note: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BootVariant {
    /// One multiplier per shard gradient.
    A,
    /// One multiplier per master observation plus one per other shard.
    B,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Multipliers {
    Gaussian,
    /// Every multiplier is zero; the draws collapse to the origin.
    Zero,
}

/// Local Hessian used by the bootstraps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MasterHessian {
    /// Powell estimator at bandwidth `b`.
    Powell { b: f64 },
    /// `f(0) Sigma_1` with the Gaussian KDE at the Hall and Sheather
    /// bandwidth for level `alpha`.
    DensityScaled { alpha: f64 },
}

/// Inverse of the chosen master-shard Hessian at `beta`.
pub fn master_hessian_inverse(
    fed: &FederatedDataset,
    beta: &DVector<f64>,
    tau: f64,
    choice: MasterHessian,
) -> Result<DMatrix<f64>> {
    let master = fed.master();
    master.check_dim(beta.len())?;
    let h = match choice {
        MasterHessian::Powell { b } => powell_hessian(master, &master.residuals(beta.as_slice())?, b)?,
        MasterHessian::DensityScaled { alpha } => {
            let by_shard: Vec<Vec<f64>> = fed
                .shards()
                .iter()
                .map(|s| s.residuals(beta.as_slice()))
                .collect::<Result<_>>()?;
            let bw = hall_sheather_bandwidth(fed.total_rows(), tau, alpha)?;
            weighted_gram(master, |_| 1.0) * density_at_zero(fed, &by_shard, bw, Kernel::Gaussian)?
        }
    };
    invert(&h, "master Hessian")
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub variant: BootVariant,
    pub reps: usize,
    pub seed: u64,
    pub multipliers: Multipliers,
}

/// Bootstrap draws, one vector per replicate. Replicate `r` draws its
/// multipliers from its own stream keyed by `(seed, r)`.
pub fn bootstrap_draws(
    fed: &FederatedDataset,
    beta: &DVector<f64>,
    loss: &SmoothedLoss,
    h1_inverse: &DMatrix<f64>,
    config: &BootstrapConfig,
) -> Result<Vec<DVector<f64>>> {
    let p = fed.p();
    if beta.len() != p || h1_inverse.nrows() != p || h1_inverse.ncols() != p {
        return Err(ConquerError::DimensionMismatch {
            expected: p,
            got: h1_inverse.nrows().min(beta.len()),
            context: "bootstrap inputs",
        });
    }
    let b = beta.as_slice();
    let scaled: Vec<DVector<f64>> = fed
        .shards()
        .iter()
        .map(|s| DVector::from_vec(gradient_slice(s, b, loss)) * (s.n() as f64).sqrt())
        .collect();
    let master = fed.master();
    let xi: Vec<f64> = match config.variant {
        BootVariant::A => Vec::new(),
        BootVariant::B => {
            let r = master.residuals(b)?;
            (0..master.n())
                .flat_map(|i| {
                    let f = loss.gradient_factor(r[i]);
                    master.row(i).iter().map(move |x| f * x).collect::<Vec<_>>()
                })
                .collect()
        }
    };
    let m = fed.num_machines();
    let draws = map_indexed(config.reps, |rep| {
        let mut rng = stream(config.seed, &[rep as u64]);
        let mut e = || -> f64 { match config.multipliers {
            Multipliers::Gaussian => StandardNormal.sample(&mut rng),
            Multipliers::Zero => 0.0,
        } };
        let mut acc = DVector::zeros(p);
        let norm = match config.variant {
            BootVariant::A => {
                for g in &scaled {
                    acc.axpy(e(), g, 1.0);
                }
                (m as f64).sqrt()
            }
            BootVariant::B => {
                for row in xi.chunks_exact(p) {
                    let w: f64 = e();
                    for (a, x) in acc.iter_mut().zip(row) {
                        *a += w * x;
                    }
                }
                for g in &scaled[1..] {
                    acc.axpy(e(), g, 1.0);
                }
                ((master.n() + m - 1) as f64).sqrt()
            }
        };
        -(h1_inverse * acc) / norm
    });
    Ok(draws)
}

/// Percentile intervals
/// `[beta_j - c_j(1 - alpha/2)/sqrt(N), beta_j - c_j(alpha/2)/sqrt(N)]`
/// with `c_j(q)` the order statistic at `ceil(q B)`.
pub fn bootstrap_intervals(
    fed: &FederatedDataset,
    beta: &DVector<f64>,
    loss: &SmoothedLoss,
    h1_inverse: &DMatrix<f64>,
    alpha: f64,
    config: &BootstrapConfig,
) -> Result<InferenceReport> {
    check_alpha(alpha)?;
    if config.reps == 0 {
        return Err(ConquerError::InvalidArgument("bootstrap needs at least one replicate".into()));
    }
    let draws = bootstrap_draws(fed, beta, loss, h1_inverse, config)?;
    let root = (fed.total_rows() as f64).sqrt();
    let coefs = (0..beta.len())
        .map(|j| {
            let mut col: Vec<f64> = draws.iter().map(|d| d[j]).collect();
            col.sort_by(f64::total_cmp);
            let upper_q = lower_quantile_sorted(&col, 1.0 - alpha / 2.0);
            let lower_q = lower_quantile_sorted(&col, alpha / 2.0);
            CoefInference {
                coef: j,
                set: CoefSet::Interval {
                    lower: beta[j] - upper_q / root,
                    upper: beta[j] - lower_q / root,
                },
                grid: None,
            }
        })
        .collect();
    Ok(InferenceReport {
        method: match config.variant {
            BootVariant::A => InferenceMethod::BootA,
            BootVariant::B => InferenceMethod::BootB,
        },
        level: 1.0 - alpha,
        coefs,
        note: None,
    })
}

fn invert(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    m.clone()
        .cholesky()
        .map(|c| c.inverse())
        .or_else(|| m.clone().try_inverse())
        .ok_or_else(|| ConquerError::Singular(format!("{what} is not invertible")))
}

fn check_residuals(shard: &DataShard, residuals: &[f64]) -> Result<()> {
    if residuals.len() != shard.n() {
        return Err(ConquerError::DimensionMismatch {
            expected: shard.n(),
            got: residuals.len(),
            context: "residuals",
        });
    }
    Ok(())
}

fn check_bandwidth(b: f64) -> Result<()> {
    if !(b > 0.0 && b.is_finite()) {
        return Err(ConquerError::InvalidArgument(format!("bandwidth must be positive, got {b}")));
    }
    Ok(())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(ConquerError::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::partition;
    use crate::datagen::{generate_federated, make_truth, DgpKind, DgpSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_shard(n: usize, p: usize, seed: u64) -> (DataShard, Vec<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::with_capacity(n * p);
        for _ in 0..n {
            x.push(1.0);
            for _ in 1..p {
                x.push(rng.sample::<f64, _>(StandardNormal));
            }
        }
        let y: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let r: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.7).collect();
        (DataShard::new(0, y, x, p).unwrap(), r)
    }

    fn min_eigen(m: &DMatrix<f64>) -> f64 {
        m.clone().symmetric_eigen().eigenvalues.min()
    }

    #[test]
    fn powell_single_row_is_phi_zero() {
        let s = DataShard::new(0, vec![0.0], vec![1.0], 1).unwrap();
        let h = powell_hessian(&s, &[0.0], 1.0).unwrap();
        assert!((h[(0, 0)] - 0.398_942_280_4).abs() < 1e-10);
    }

    #[test]
    fn powell_matches_direct_sum() {
        let (s, r) = random_shard(50, 4, 1);
        let b = 0.4;
        let h = powell_hessian(&s, &r, b).unwrap();
        let mut direct = DMatrix::zeros(4, 4);
        for i in 0..50 {
            let x = DVector::from_column_slice(s.row(i));
            direct += &x * x.transpose() * (normal::pdf(r[i] / b) / (50.0 * b));
        }
        assert!((h - direct).abs().max() < 1e-12);
    }

    #[test]
    fn powell_homogeneity() {
        let (s, r) = random_shard(40, 3, 2);
        let c = 2.5;
        let scaled: Vec<f64> = r.iter().map(|v| v * c).collect();
        let a = powell_hessian(&s, &r, 0.3).unwrap();
        let b = powell_hessian(&s, &scaled, 0.3 * c).unwrap();
        assert!((a / c - b).abs().max() < 1e-12);
    }

    #[test]
    fn covariance_limits_and_psd() {
        let s = DataShard::new(0, vec![1.0; 3], vec![1.0; 3], 1).unwrap();
        let loss = SmoothedLoss::new(0.3, 0.5, Kernel::Gaussian).unwrap();
        let (plain, _) = covariance_estimates(&s, &[0.1, -2.0, 4.0], &loss).unwrap();
        assert!((plain[(0, 0)] - 1.0).abs() < 1e-15);

        let (s, r) = random_shard(60, 4, 3);
        let far = vec![1e6; 60];
        let (plain, scaled) = covariance_estimates(&s, &far, &loss).unwrap();
        assert!((scaled - &plain * 0.09).abs().max() < 1e-12);
        let (plain, scaled) = covariance_estimates(&s, &r, &loss).unwrap();
        assert!(min_eigen(&plain) >= -1e-12 && min_eigen(&scaled) >= -1e-12);
        assert!((&scaled - scaled.transpose()).abs().max() == 0.0);
    }

    #[test]
    fn density_at_zero_examples() {
        let s = DataShard::new(0, vec![0.0; 4], vec![1.0; 4], 1).unwrap();
        let fed = FederatedDataset::new(vec![s]).unwrap();
        let f = density_at_zero(&fed, &[vec![0.0; 4]], 1.0, Kernel::Gaussian).unwrap();
        assert!((f - 0.398_942_280_4).abs() < 1e-10);

        let (s, r) = random_shard(300, 2, 4);
        let fed = partition(s.y(), s.x(), 2, 3, 9, false).unwrap();
        let by: Vec<Vec<f64>> = fed.shards().iter().map(|sh| sh.y().to_vec()).collect();
        let pooled: f64 = by.iter().flatten().map(|v| normal::pdf(v / 0.3)).sum::<f64>() / (300.0 * 0.3);
        let dist = density_at_zero(&fed, &by, 0.3, Kernel::Gaussian).unwrap();
        assert!((dist - pooled).abs() < 1e-14);
        drop(r);
    }

    #[test]
    fn density_monte_carlo_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 100_000;
        let r: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let s = DataShard::new(0, r.clone(), vec![1.0; n], 1).unwrap();
        let fed = FederatedDataset::new(vec![s]).unwrap();
        let b = hall_sheather_bandwidth(n, 0.5, 0.05).unwrap();
        let f = density_at_zero(&fed, &[r], b, Kernel::Gaussian).unwrap();
        assert!((f / normal::pdf(0.0) - 1.0).abs() < 0.1);
    }

    #[test]
    fn hall_sheather_examples() {
        let b = hall_sheather_bandwidth(1000, 0.5, 0.05).unwrap();
        let direct = 0.1 * 1.959_963_985_f64.powf(2.0 / 3.0) * (1.5 * normal::pdf(0.0).powi(2)).cbrt();
        assert!((b - direct).abs() < 1e-9);
        assert!((b - 0.0972).abs() < 5e-4);
        let b8 = hall_sheather_bandwidth(8000, 0.5, 0.05).unwrap();
        assert!((b8 - b / 2.0).abs() < 1e-14);
        for tau in [0.1, 0.3, 0.45] {
            let a = hall_sheather_bandwidth(500, tau, 0.1).unwrap();
            let c = hall_sheather_bandwidth(500, 1.0 - tau, 0.1).unwrap();
            assert!((a - c).abs() < 1e-10);
        }
    }

    fn unit_variance(p: usize) -> VarianceEstimate {
        VarianceEstimate {
            kind: VarianceKind::TypeII,
            sigma: vec![1.0; p],
            h_hat: DMatrix::identity(p, p),
            sigma_hat: DMatrix::identity(p, p),
        }
    }

    #[test]
    fn wald_examples() {
        let beta = DVector::from_vec(vec![0.5, -1.0]);
        let r = wald_intervals(&beta, &unit_variance(2), 10_000, 0.05).unwrap();
        match r.coefs[0].set {
            CoefSet::Interval { lower, upper } => {
                assert!(((upper - lower) / 2.0 - 0.019_599_6).abs() < 1e-7);
                assert!(((upper + lower) / 2.0 - 0.5).abs() < 1e-15);
            }
            _ => panic!(),
        }
        let r = wald_intervals(&beta, &unit_variance(2), 10_000, 1.0).unwrap();
        assert_eq!(r.coefs[1].set, CoefSet::Interval { lower: -1.0, upper: -1.0 });
        let mut bad = unit_variance(2);
        bad.sigma[1] = 0.0;
        assert!(matches!(
            wald_intervals(&beta, &bad, 100, 0.05),
            Err(ConquerError::NonPositiveVariance { coef: 1, .. })
        ));
    }

    #[test]
    fn type_one_is_flagged() {
        let spec = DgpSpec::new(DgpKind::LowHet, 3, 200, 4, 0.5, 3.0, 7).unwrap();
        let fed = generate_federated(&spec, 0).unwrap();
        let beta = make_truth(&spec);
        let v = estimate_variance(&fed, &beta, VarianceKind::TypeI, 0.5, 0.5, Kernel::Gaussian, 0.05).unwrap();
        assert!(v.sigma.iter().all(|s| *s > 0.0));
        let r = wald_intervals(&beta, &v, fed.total_rows(), 0.05).unwrap();
        assert!(r.note.is_some());
        for kind in [VarianceKind::TypeII, VarianceKind::TypeIII] {
            let v = estimate_variance(&fed, &beta, kind, 0.5, 0.5, Kernel::Gaussian, 0.05).unwrap();
            assert!(v.sigma.iter().all(|s| *s > 0.0));
            assert!((&v.h_hat - v.h_hat.transpose()).abs().max() < 1e-14);
            assert!(wald_intervals(&beta, &v, fed.total_rows(), 0.05).unwrap().note.is_none());
        }
    }

    #[test]
    fn score_matches_pooled_oracle() {
        let (s, _) = random_shard(230, 3, 11);
        let fed = partition(s.y(), s.x(), 3, 4, 2, true).unwrap();
        let beta = DVector::from_vec(vec![0.1, -0.2, 0.3]);
        let loss = SmoothedLoss::new(0.7, 0.4, Kernel::Uniform).unwrap();
        let t = score_statistic(&fed, &beta, 2, &loss).unwrap();
        let (mut sum, mut sq) = (0.0_f64, 0.0_f64);
        for i in 0..s.n() {
            let row = s.row(i);
            let xi = Kernel::Uniform.cdf((crate::data::dot(row, beta.as_slice()) - s.y()[i]) / 0.4) - 0.7;
            sum += xi * row[2];
            sq += (xi * row[2]).powi(2);
        }
        let ratio = sum / sq.sqrt();
        let oracle = ratio / ((230.0 - ratio * ratio) / 229.0).sqrt();
        assert!((t - oracle).abs() < 1e-12);
    }

    #[test]
    fn self_normalized_edges() {
        assert_eq!(self_normalized(0.0, 4.0, 10).unwrap(), 0.0);
        assert_eq!(self_normalized(0.0, 0.0, 10).unwrap(), 0.0);
        assert!(matches!(self_normalized(1.0, 0.0, 10), Err(ConquerError::DegenerateScore { .. })));
        assert_eq!(self_normalized(3.0, 1.0, 9).unwrap(), f64::INFINITY);
        assert_eq!(self_normalized(-3.0, 1.0, 9).unwrap(), f64::NEG_INFINITY);
    }

    proptest! {
        #[test]
        fn score_cauchy_schwarz(vals in prop::collection::vec(-1.0f64..1.0, 2..40)) {
            let s: f64 = vals.iter().sum();
            let v2: f64 = vals.iter().map(|v| v * v).sum();
            prop_assume!(v2 > 0.0);
            prop_assert!(s * s / v2 <= vals.len() as f64 * (1.0 + 1e-12));
            let t = self_normalized(s, v2, vals.len()).unwrap();
            let u = self_normalized(-s, v2, vals.len()).unwrap();
            prop_assert!(t == -u);
        }

        #[test]
        fn score_monotone_in_ratio(a in 0.0f64..5.0, d in 0.001f64..3.0) {
            let n = 50;
            let t1 = self_normalized(a, 1.0, n).unwrap();
            let t2 = self_normalized(a + d, 1.0, n).unwrap();
            prop_assert!(t2 > t1);
        }

        #[test]
        fn wald_width_scales(s in 0.01f64..10.0, n in 10usize..100000) {
            let beta = DVector::from_vec(vec![0.0]);
            let mut v = unit_variance(1);
            v.sigma[0] = s;
            let w = wald_intervals(&beta, &v, n, 0.1).unwrap().coefs[0].set.width();
            let w1 = wald_intervals(&beta, &unit_variance(1), 1, 0.1).unwrap().coefs[0].set.width();
            prop_assert!((w - w1 * s / (n as f64).sqrt()).abs() <= 1e-12 * w1.max(1.0));
        }
    }

    fn small_problem() -> (FederatedDataset, SmoothingPlan, DVector<f64>) {
        let spec = DgpSpec::new(DgpKind::LinearHetero(0.2), 2, 200, 5, 0.5, 3.0, 21).unwrap();
        let fed = generate_federated(&spec, 0).unwrap();
        let plan = SmoothingPlan::with_scale(&fed, 0.5, 2.5, Kernel::Gaussian).unwrap();
        let init = crate::smoothed_qr::fit_conquer(
            fed.master(),
            &plan.local_loss().unwrap(),
            None,
            &Default::default(),
        )
        .unwrap()
        .beta;
        let fit = crate::federation::run_algorithm1(&fed, &plan, &init, &RoundConfig::new(10)).unwrap();
        (fed, plan, fit.beta)
    }

    #[test]
    fn score_set_contains_estimate_and_alpha_zero_accepts_all() {
        let (fed, plan, beta) = small_problem();
        let cfg = ScoreConfig::default();
        let r = score_confidence_set(&fed, &plan, 1, &[beta[1]], 0.05, &beta, &cfg).unwrap();
        assert!(matches!(&r.coefs[0].set, CoefSet::Grid { accepted, .. } if accepted.len() == 1));
        let grid = default_score_grid(beta[1], 1.0, 6.0, 11);
        let r = score_confidence_set(&fed, &plan, 1, &grid, 0.0, &beta, &cfg).unwrap();
        assert!(matches!(&r.coefs[0].set, CoefSet::Grid { accepted, .. } if accepted.len() == 11));
    }

    #[test]
    fn outward_scan_matches_full_scan_on_an_interval() {
        let (fed, plan, beta) = small_problem();
        let v = estimate_variance(&fed, &beta, VarianceKind::TypeIII, 0.5, plan.b, Kernel::Gaussian, 0.05).unwrap();
        let se = v.sigma[1] / (fed.total_rows() as f64).sqrt();
        let grid = default_score_grid(beta[1], se, 6.0, 61);
        let full = score_confidence_set(&fed, &plan, 1, &grid, 0.05, &beta, &ScoreConfig::default()).unwrap();
        let out = score_confidence_set(
            &fed,
            &plan,
            1,
            &grid,
            0.05,
            &beta,
            &ScoreConfig {
                scan: GridScan::Outward { patience: 3 },
                ..Default::default()
            },
        )
        .unwrap();
        let (a, b) = (&full.coefs[0].set, &out.coefs[0].set);
        assert!(a.width() > 0.0);
        assert!((a.width() - b.width()).abs() <= 2.0 * (grid[1] - grid[0]) + 1e-12);
        assert_eq!(a.runs(Some(&grid)).len(), 1);
    }

    #[test]
    fn score_rejects_unsorted_grid() {
        let (fed, plan, beta) = small_problem();
        assert!(score_confidence_set(&fed, &plan, 0, &[1.0, 0.0], 0.05, &beta, &ScoreConfig::default()).is_err());
    }

    #[test]
    fn bootstrap_zero_multipliers_collapse() {
        let (fed, plan, beta) = small_problem();
        let hi = master_hessian_inverse(&fed, &beta, 0.5, MasterHessian::Powell { b: plan.b }).unwrap();
        let loss = plan.global_loss().unwrap();
        for variant in [BootVariant::A, BootVariant::B] {
            let cfg = BootstrapConfig {
                variant,
                reps: 100,
                seed: 3,
                multipliers: Multipliers::Zero,
            };
            let r = bootstrap_intervals(&fed, &beta, &loss, &hi, 0.05, &cfg).unwrap();
            for c in &r.coefs {
                assert_eq!(c.set, CoefSet::Interval { lower: beta[c.coef], upper: beta[c.coef] });
            }
        }
    }

    #[test]
    fn bootstrap_is_seeded_and_replicate_keyed() {
        let (fed, plan, beta) = small_problem();
        let hi = master_hessian_inverse(&fed, &beta, 0.5, MasterHessian::DensityScaled { alpha: 0.05 }).unwrap();
        let loss = plan.global_loss().unwrap();
        let cfg = BootstrapConfig {
            variant: BootVariant::B,
            reps: 200,
            seed: 8,
            multipliers: Multipliers::Gaussian,
        };
        let a = bootstrap_draws(&fed, &beta, &loss, &hi, &cfg).unwrap();
        let b = bootstrap_draws(&fed, &beta, &loss, &hi, &cfg).unwrap();
        assert_eq!(a, b);
        let short = bootstrap_draws(&fed, &beta, &loss, &hi, &BootstrapConfig { reps: 50, ..cfg.clone() }).unwrap();
        assert_eq!(&a[..50], &short[..]);
        let r = bootstrap_intervals(&fed, &beta, &loss, &hi, 0.1, &cfg).unwrap();
        for c in &r.coefs {
            assert!(c.set.width() > 0.0);
        }
    }

    #[test]
    fn bootstrap_quantile_convention() {
        let draws: Vec<f64> = (1..=1000).map(|i| i as f64 / 1000.0).collect();
        assert_eq!(lower_quantile_sorted(&draws, 0.5), 0.5);
    }

    #[test]
    fn csv_rows_per_run() {
        let grid = vec![0.0, 1.0, 2.0, 3.0, 4.0];
        let report = InferenceReport {
            method: InferenceMethod::Score,
            level: 0.95,
            coefs: vec![CoefInference {
                coef: 2,
                set: CoefSet::Grid {
                    accepted: vec![0.0, 1.0, 3.0],
                    undecided: vec![],
                },
                grid: Some(grid),
            }],
            note: None,
        };
        let mut buf = Vec::new();
        write_reports_csv(&mut buf, &[report]).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "coef_index,method,level,lower,upper");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("2,score,0.95,0.0,1.0"), "{}", lines[1]);
    }
}
