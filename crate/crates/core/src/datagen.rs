//! Synthetic heteroscedastic designs with Student-t noise.

use std::f64::consts::PI;
use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::beta::beta_reg;
use statrs::function::gamma::ln_gamma;

use crate::data::{DataShard, FederatedDataset};
use crate::error::{ConquerError, Result};
use crate::normal;
use crate::par::map_indexed;

/// Conditional scale model and covariate design.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DgpKind {
    /// Scale `a * x_p + 1`.
    LinearHetero(f64),
    /// Scale `0.5 {1 + (0.25 x_p - 1)^2}`.
    QuadraticHetero,
    /// Scale `0.2 x_p + 1`.
    LowHet,
    /// Scale `0.4 x_p + 1`.
    HighHet,
    /// Sparse truth `(3, 1 x 5, 0, ...)`, scale `0.2 x_1 + 1`.
    SparseLinearHetero,
    /// Sparse truth, scale `0.5 {1 + (0.25 x_p - 1)^2}`.
    SparseQuadraticHetero,
    /// Independent uniform covariates on `[-1, 1]`, truth `(2, 1, ..., 1)`,
    /// scale `0.25 x_1 + 0.25 x_2 + 0.75`.
    TwoFactorHetero,
}

impl DgpKind {
    pub fn name(&self) -> String {
        match self {
            DgpKind::LinearHetero(a) => format!("linear_hetero({a})"),
            DgpKind::QuadraticHetero => "quadratic_hetero".into(),
            DgpKind::LowHet => "low_het".into(),
            DgpKind::HighHet => "high_het".into(),
            DgpKind::SparseLinearHetero => "sparse_linear_hetero".into(),
            DgpKind::SparseQuadraticHetero => "sparse_quadratic_hetero".into(),
            DgpKind::TwoFactorHetero => "two_factor_hetero".into(),
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(
            self,
            DgpKind::SparseLinearHetero | DgpKind::SparseQuadraticHetero
        )
    }

    /// Every kind, with `a = 0.2` for the linear family.
    pub fn all() -> [DgpKind; 7] {
        [
            DgpKind::LinearHetero(0.2),
            DgpKind::QuadraticHetero,
            DgpKind::LowHet,
            DgpKind::HighHet,
            DgpKind::SparseLinearHetero,
            DgpKind::SparseQuadraticHetero,
            DgpKind::TwoFactorHetero,
        ]
    }
}

impl std::str::FromStr for DgpKind {
    type Err = ConquerError;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim().to_ascii_lowercase();
        if let Some(rest) = s.strip_prefix("linear_hetero") {
            let rest = rest.trim();
            if rest.is_empty() {
                return Ok(DgpKind::LinearHetero(0.2));
            }
            let a = rest
                .strip_prefix('(')
                .and_then(|r| r.strip_suffix(')'))
                .and_then(|r| r.trim().parse::<f64>().ok())
                .ok_or_else(|| ConquerError::InvalidArgument(format!("bad DGP kind '{s}'")))?;
            return Ok(DgpKind::LinearHetero(a));
        }
        match s.as_str() {
            "quadratic_hetero" => Ok(DgpKind::QuadraticHetero),
            "low_het" => Ok(DgpKind::LowHet),
            "high_het" => Ok(DgpKind::HighHet),
            "sparse_linear_hetero" => Ok(DgpKind::SparseLinearHetero),
            "sparse_quadratic_hetero" => Ok(DgpKind::SparseQuadraticHetero),
            "two_factor_hetero" => Ok(DgpKind::TwoFactorHetero),
            _ => Err(ConquerError::InvalidArgument(format!("unknown DGP kind '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Noise {
    StudentT(f64),
}

impl Noise {
    pub fn quantile(&self, prob: f64) -> f64 {
        match self {
            Noise::StudentT(nu) => t_quantile(*nu, prob),
        }
    }
}

/// Test hook replacing the noise draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseMode {
    #[default]
    Random,
    /// Every draw equals the noise `tau`-quantile.
    AtQuantile,
}

/// Full description of a simulated federated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DgpSpec {
    pub kind: DgpKind,
    /// Number of covariates; the design has `p + 1` columns.
    pub p: usize,
    /// Rows per shard.
    pub n: usize,
    /// Number of shards.
    pub m: usize,
    pub tau: f64,
    pub noise: Noise,
    pub seed: u64,
    pub noise_mode: NoiseMode,
}

impl DgpSpec {
    pub fn new(kind: DgpKind, p: usize, n: usize, m: usize, tau: f64, nu: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            kind,
            p,
            n,
            m,
            tau,
            noise: Noise::StudentT(nu),
            seed,
            noise_mode: NoiseMode::Random,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let Noise::StudentT(nu) = self.noise;
        let min_p = match self.kind {
            DgpKind::SparseLinearHetero | DgpKind::SparseQuadraticHetero => 5,
            DgpKind::TwoFactorHetero => 2,
            _ => 1,
        };
        if self.p < min_p {
            return Err(ConquerError::InvalidArgument(format!(
                "{} needs p >= {min_p}, got {}",
                self.kind.name(),
                self.p
            )));
        }
        if !(nu > 0.0) {
            return Err(ConquerError::InvalidArgument(format!(
                "degrees of freedom must be positive, got {nu}"
            )));
        }
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(ConquerError::InvalidArgument(format!(
                "tau must lie in (0, 1), got {}",
                self.tau
            )));
        }
        if self.n == 0 || self.m == 0 {
            return Err(ConquerError::InvalidArgument("n and m must be positive".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.p + 1
    }

    pub fn total_rows(&self) -> usize {
        self.n * self.m
    }

    /// Conditional scale `sigma(x)` for a design row including the intercept.
    pub fn scale(&self, row: &[f64]) -> f64 {
        let last = row[self.p];
        let quad = 0.5 * (1.0 + (0.25 * last - 1.0).powi(2));
        match self.kind {
            DgpKind::LinearHetero(a) => a * last + 1.0,
            DgpKind::LowHet => 0.2 * last + 1.0,
            DgpKind::HighHet => 0.4 * last + 1.0,
            DgpKind::QuadraticHetero | DgpKind::SparseQuadraticHetero => quad,
            DgpKind::SparseLinearHetero => 0.2 * row[1] + 1.0,
            DgpKind::TwoFactorHetero => 0.25 * row[1] + 0.25 * row[2] + 0.75,
        }
    }
}

impl fmt::Display for DgpSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let Noise::StudentT(nu) = self.noise;
        writeln!(f, "kind = {}", self.kind.name())?;
        writeln!(f, "p = {}", self.p)?;
        writeln!(f, "n = {}", self.n)?;
        writeln!(f, "m = {}", self.m)?;
        writeln!(f, "N = {}", self.total_rows())?;
        writeln!(f, "tau = {}", self.tau)?;
        writeln!(f, "noise = student_t({nu})")?;
        writeln!(f, "noise_tau_quantile = {}", self.noise.quantile(self.tau))?;
        writeln!(f, "seed = {}", self.seed)?;
        let truth = make_truth(self);
        let shown: Vec<String> = truth.iter().take(12).map(|v| v.to_string()).collect();
        let more = if truth.len() > 12 { ", ..." } else { "" };
        write!(f, "beta_star = [{}{more}]", shown.join(", "))
    }
}

/// True coefficient vector (intercept first).
pub fn make_truth(spec: &DgpSpec) -> DVector<f64> {
    let d = spec.dim();
    match spec.kind {
        DgpKind::SparseLinearHetero | DgpKind::SparseQuadraticHetero => {
            DVector::from_fn(d, |j, _| match j {
                0 => 3.0,
                1..=5 => 1.0,
                _ => 0.0,
            })
        }
        DgpKind::TwoFactorHetero => DVector::from_fn(d, |j, _| if j == 0 { 2.0 } else { 1.0 }),
        _ => DVector::from_element(d, 1.0),
    }
}

/// Student-t distribution function.
pub fn t_cdf(nu: f64, x: f64) -> f64 {
    if x == 0.0 {
        return 0.5;
    }
    if x.is_infinite() {
        return if x > 0.0 { 1.0 } else { 0.0 };
    }
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
    if x > 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

fn t_pdf(nu: f64, x: f64) -> f64 {
    let ln_c = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * PI).ln();
    (ln_c - 0.5 * (nu + 1.0) * (1.0 + x * x / nu).ln()).exp()
}

/// Student-t quantile. Closed forms for one and two degrees of freedom;
/// otherwise a bracketed Newton iteration on the distribution function
/// that falls back to bisection.
pub fn t_quantile(nu: f64, prob: f64) -> f64 {
    if prob <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if prob >= 1.0 {
        return f64::INFINITY;
    }
    if prob == 0.5 {
        return 0.0;
    }
    if nu == 1.0 {
        return (PI * (prob - 0.5)).tan();
    }
    if nu == 2.0 {
        return (2.0 * prob - 1.0) / (2.0 * prob * (1.0 - prob)).sqrt();
    }
    if prob < 0.5 {
        return -t_quantile(nu, 1.0 - prob);
    }
    // Upper tail survival probability, solved for x > 0.
    let target = 1.0 - prob;
    let surv = |x: f64| 0.5 * beta_reg(0.5 * nu, 0.5, nu / (nu + x * x));
    let mut lo = 0.0;
    let mut hi = 1.0;
    while surv(hi) > target {
        lo = hi;
        hi *= 2.0;
        if !hi.is_finite() {
            return f64::INFINITY;
        }
    }
    let mut x = normal::quantile(prob).clamp(lo, hi);
    if !(x > lo && x < hi) {
        x = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let s = surv(x);
        let diff = s - target;
        if diff > 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if diff.abs() <= 1e-15 * target.max(1e-300) || hi - lo <= 1e-14 * hi.max(1.0) {
            break;
        }
        let next = x + diff / t_pdf(nu, x);
        x = if next > lo && next < hi {
            next
        } else {
            0.5 * (lo + hi)
        };
    }
    x
}

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for the stream addressed by `path` under `seed`.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter().fold(mix64(seed), |acc, p| mix64(acc ^ mix64(*p)))
}

/// Generator for the stream addressed by `path` under `seed`.
pub fn stream(seed: u64, path: &[u64]) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, path))
}

/// Uniform draw in the open interval `(0, 1)`.
pub fn open_uniform<R: RngCore>(rng: &mut R) -> f64 {
    ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64)
}

/// Samples covariate rows with the configured marginals and dependence.
#[derive(Debug, Clone)]
pub struct CovariateSampler {
    p: usize,
    design: Design,
}

#[derive(Debug, Clone)]
enum Design {
    /// Independent uniforms on `[-1, 1]`.
    IndependentUniform,
    /// Gaussian copula: lower-triangular factor rows stored from the first
    /// non-negligible column.
    Copula { rows: Vec<(usize, Vec<f64>)> },
}

/// Latent Gaussian correlation giving uniform-marginal correlation `rho`.
pub fn copula_correlation(rho: f64) -> f64 {
    2.0 * (PI * rho / 6.0).sin()
}

const BAND_CUTOFF: f64 = 1e-14;

impl CovariateSampler {
    pub fn new(kind: DgpKind, p: usize) -> Result<Self> {
        if kind == DgpKind::TwoFactorHetero {
            return Ok(Self {
                p,
                design: Design::IndependentUniform,
            });
        }
        let corr = DMatrix::from_fn(p, p, |j, k| {
            copula_correlation(0.5f64.powi((j as i32 - k as i32).abs()))
        });
        let l = corr
            .cholesky()
            .ok_or_else(|| ConquerError::Singular("copula correlation".into()))?
            .unpack();
        let rows = (0..p)
            .map(|i| {
                let start = (0..=i).find(|&j| l[(i, j)].abs() > BAND_CUTOFF).unwrap_or(i);
                (start, (start..=i).map(|j| l[(i, j)]).collect())
            })
            .collect();
        Ok(Self {
            p,
            design: Design::Copula { rows },
        })
    }

    /// Fills `out[0..p]` with one covariate row (no intercept).
    pub fn sample_into<R: RngCore>(&self, rng: &mut R, z: &mut [f64], out: &mut [f64]) {
        match &self.design {
            Design::IndependentUniform => {
                for v in out.iter_mut().take(self.p) {
                    *v = 2.0 * open_uniform(rng) - 1.0;
                }
            }
            Design::Copula { rows } => {
                for v in z.iter_mut().take(self.p) {
                    *v = StandardNormal.sample(rng);
                }
                let s3 = 3f64.sqrt();
                for (i, (start, coef)) in rows.iter().enumerate() {
                    let g: f64 = coef.iter().zip(&z[*start..=i]).map(|(a, b)| a * b).sum();
                    out[i] = s3 * (2.0 * normal::cdf(g) - 1.0);
                }
            }
        }
    }
}

/// `rows x (p + 1)` design with an intercept column.
pub fn gen_covariates(kind: DgpKind, rows: usize, p: usize, seed: u64) -> Result<DMatrix<f64>> {
    let sampler = CovariateSampler::new(kind, p)?;
    let mut rng = stream(seed, &[]);
    let mut z = vec![0.0; p];
    let mut row = vec![0.0; p];
    let mut x = DMatrix::zeros(rows, p + 1);
    for i in 0..rows {
        sampler.sample_into(&mut rng, &mut z, &mut row);
        x[(i, 0)] = 1.0;
        for j in 0..p {
            x[(i, j + 1)] = row[j];
        }
    }
    Ok(x)
}

/// Generates `rows` observations from `rng`.
pub fn generate_rows<R: RngCore>(
    spec: &DgpSpec,
    sampler: &CovariateSampler,
    truth: &DVector<f64>,
    rows: usize,
    rng: &mut R,
    id: usize,
) -> Result<DataShard> {
    let d = spec.dim();
    let q = spec.noise.quantile(spec.tau);
    let Noise::StudentT(nu) = spec.noise;
    let mut x = vec![0.0; rows * d];
    let mut y = vec![0.0; rows];
    let mut z = vec![0.0; spec.p];
    for i in 0..rows {
        let row = &mut x[i * d..(i + 1) * d];
        row[0] = 1.0;
        sampler.sample_into(rng, &mut z, &mut row[1..]);
        let eps = match spec.noise_mode {
            NoiseMode::Random => t_quantile(nu, open_uniform(rng)),
            NoiseMode::AtQuantile => q,
        };
        let sigma = spec.scale(row);
        if !(sigma > 0.0) {
            return Err(ConquerError::InvalidData(format!(
                "non-positive conditional scale {sigma}"
            )));
        }
        y[i] = crate::data::dot(row, truth.as_slice()) + sigma * (eps - q);
    }
    DataShard::new(id, y, x, d)
}

/// Shard `j` of trial `trial`, drawn from the stream `(seed, trial, j)`.
pub fn generate_shard(spec: &DgpSpec, trial: u64, shard: usize) -> Result<DataShard> {
    let sampler = CovariateSampler::new(spec.kind, spec.p)?;
    let truth = make_truth(spec);
    let mut rng = stream(spec.seed, &[trial, shard as u64]);
    generate_rows(spec, &sampler, &truth, spec.n, &mut rng, shard)
}

/// All `m` shards of one trial, master first.
pub fn generate_federated(spec: &DgpSpec, trial: u64) -> Result<FederatedDataset> {
    spec.validate()?;
    let sampler = CovariateSampler::new(spec.kind, spec.p)?;
    let truth = make_truth(spec);
    let shards = map_indexed(spec.m, |j| {
        let mut rng = stream(spec.seed, &[trial, j as u64]);
        generate_rows(spec, &sampler, &truth, spec.n, &mut rng, j)
    });
    FederatedDataset::new(shards.into_iter().collect::<Result<Vec<_>>>()?)
}

/// Extra sample for trial `trial` (validation or initialization data), drawn
/// from a stream disjoint from every shard stream.
pub fn generate_auxiliary(spec: &DgpSpec, trial: u64, label: u64, rows: usize) -> Result<DataShard> {
    let sampler = CovariateSampler::new(spec.kind, spec.p)?;
    let truth = make_truth(spec);
    let mut rng = stream(spec.seed, &[trial, u64::MAX, label]);
    generate_rows(spec, &sampler, &truth, rows, &mut rng, 0)
}

/// `y` for a fixed design under `spec`, with noise from `seed`.
pub fn gen_response(x: &DMatrix<f64>, truth: &DVector<f64>, spec: &DgpSpec, seed: u64) -> Result<DVector<f64>> {
    if x.ncols() != truth.len() || truth.len() != spec.dim() {
        return Err(ConquerError::DimensionMismatch {
            expected: spec.dim(),
            got: x.ncols(),
            context: "design columns",
        });
    }
    let q = spec.noise.quantile(spec.tau);
    let Noise::StudentT(nu) = spec.noise;
    let mut rng = stream(seed, &[u64::MAX - 1]);
    let mut y = DVector::zeros(x.nrows());
    for i in 0..x.nrows() {
        let row: Vec<f64> = x.row(i).iter().copied().collect();
        let sigma = spec.scale(&row);
        if !(sigma > 0.0) {
            return Err(ConquerError::InvalidData(format!(
                "non-positive conditional scale {sigma} at row {i}"
            )));
        }
        let eps = match spec.noise_mode {
            NoiseMode::Random => t_quantile(nu, open_uniform(&mut rng)),
            NoiseMode::AtQuantile => q,
        };
        y[i] = crate::data::dot(&row, truth.as_slice()) + sigma * (eps - q);
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_quantile_examples() {
        assert!((t_quantile(1.0, 0.75) - 1.0).abs() < 1e-12);
        assert!((t_quantile(2.0, 0.9) - 1.8856).abs() < 1e-3);
        for nu in [1.0, 1.5, 2.0, 3.7, 30.0] {
            assert_eq!(t_quantile(nu, 0.5), 0.0);
        }
    }

    #[test]
    fn t_quantile_inverts_cdf() {
        for nu in [0.7, 1.0, 1.5, 2.0, 5.0, 50.0] {
            for k in 1..100 {
                let p = k as f64 / 100.0;
                let x = t_quantile(nu, p);
                assert!((t_cdf(nu, x) - p).abs() < 1e-8, "nu {nu} p {p}");
            }
            for p in [1e-6, 1e-3, 0.999, 1.0 - 1e-6] {
                assert!((t_cdf(nu, t_quantile(nu, p)) - p).abs() < 1e-8 * p.min(1.0 - p).max(1e-4));
            }
        }
        // Generic path against the closed forms.
        let generic = |nu: f64, p: f64| {
            let target = 1.0 - p;
            let (mut lo, mut hi) = (0.0, 1e6);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if 1.0 - t_cdf(nu, mid) > target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            0.5 * (lo + hi)
        };
        assert!((generic(2.0, 0.8) - t_quantile(2.0, 0.8)).abs() < 1e-8);
        assert!((generic(1.5, 0.9) - t_quantile(1.5, 0.9)).abs() < 1e-8);
    }

    #[test]
    fn seeds_are_distinct_and_stable() {
        assert_eq!(derive_seed(1, &[2, 3]), derive_seed(1, &[2, 3]));
        assert_ne!(derive_seed(1, &[2, 3]), derive_seed(1, &[3, 2]));
        assert_ne!(derive_seed(1, &[0]), derive_seed(2, &[0]));
    }

    #[test]
    fn covariate_moments() {
        let x = gen_covariates(DgpKind::LowHet, 100_000, 6, 3).unwrap();
        let s3 = 3f64.sqrt();
        for j in 1..7 {
            let col = x.column(j);
            assert!(col.iter().all(|v| v.abs() <= s3));
            let var = col.iter().map(|v| v * v).sum::<f64>() / 100_000.0;
            assert!((var - 1.0).abs() < 0.03);
        }
        for j in 1..6 {
            let cov = x
                .column(j)
                .iter()
                .zip(x.column(j + 1).iter())
                .map(|(a, b)| a * b)
                .sum::<f64>()
                / 100_000.0;
            assert!((cov - 0.5).abs() < 0.03, "cov {cov}");
        }
        let lag2 = x
            .column(1)
            .iter()
            .zip(x.column(3).iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / 100_000.0;
        assert!((lag2 - 0.25).abs() < 0.03);
        assert!(x.column(0).iter().all(|v| *v == 1.0));
    }

    #[test]
    fn truth_vectors() {
        let spec = DgpSpec::new(DgpKind::LowHet, 10, 5, 1, 0.5, 2.0, 0).unwrap();
        assert_eq!(make_truth(&spec), DVector::from_element(11, 1.0));
        let spec = DgpSpec::new(DgpKind::SparseLinearHetero, 500, 5, 1, 0.5, 2.0, 0).unwrap();
        let t = make_truth(&spec);
        assert_eq!(t.len(), 501);
        assert_eq!(&t.as_slice()[..7], &[3.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0]);
        assert_eq!(t.iter().filter(|v| **v != 0.0).count(), 6);
        let spec = DgpSpec::new(DgpKind::TwoFactorHetero, 10, 5, 1, 0.9, 1.5, 0).unwrap();
        let t = make_truth(&spec);
        assert_eq!(t.len(), 11);
        assert_eq!(t[0], 2.0);
        assert!(t.iter().skip(1).all(|v| *v == 1.0));
    }

    #[test]
    fn noise_hook_gives_exact_linear_response() {
        let mut spec = DgpSpec::new(DgpKind::QuadraticHetero, 4, 50, 2, 0.8, 2.0, 1).unwrap();
        spec.noise_mode = NoiseMode::AtQuantile;
        let fed = generate_federated(&spec, 0).unwrap();
        let truth = make_truth(&spec);
        for s in fed.shards() {
            let r = s.residuals(truth.as_slice()).unwrap();
            assert!(r.iter().all(|v| *v == 0.0));
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = DgpSpec::new(DgpKind::HighHet, 3, 40, 3, 0.4, 1.5, 9).unwrap();
        let a = generate_federated(&spec, 2).unwrap();
        let b = generate_federated(&spec, 2).unwrap();
        assert_eq!(a, b);
        let c = generate_federated(&spec, 3).unwrap();
        assert_ne!(a, c);
        assert_eq!(generate_shard(&spec, 2, 1).unwrap(), a.shards()[1]);
    }

    #[test]
    fn conditional_quantile_property() {
        for kind in DgpKind::all() {
            let p = if kind.is_sparse() { 8 } else { 4 };
            let spec = DgpSpec::new(kind, p, 20_000, 5, 0.7, 2.0, 11).unwrap();
            let fed = generate_federated(&spec, 0).unwrap();
            let truth = make_truth(&spec);
            let mut below = 0usize;
            for s in fed.shards() {
                below += s
                    .residuals(truth.as_slice())
                    .unwrap()
                    .iter()
                    .filter(|r| **r <= 0.0)
                    .count();
            }
            let frac = below as f64 / 100_000.0;
            assert!((frac - 0.7).abs() < 0.01, "{}: {frac}", kind.name());
        }
    }

    #[test]
    fn kinds_parse_and_describe() {
        for k in DgpKind::all() {
            assert_eq!(k.name().parse::<DgpKind>().unwrap(), k);
        }
        assert_eq!("linear_hetero(0.4)".parse::<DgpKind>().unwrap(), DgpKind::LinearHetero(0.4));
        let spec = DgpSpec::new(DgpKind::LowHet, 10, 300, 50, 0.8, 2.0, 7).unwrap();
        let text = spec.to_string();
        assert!(text.contains("kind = low_het"));
        assert!(text.contains("N = 15000"));
        assert!(DgpSpec::new(DgpKind::SparseLinearHetero, 3, 10, 1, 0.5, 2.0, 0).is_err());
    }

    #[test]
    fn fixed_design_response() {
        let spec = DgpSpec::new(DgpKind::LowHet, 3, 10, 1, 0.5, 2.0, 0).unwrap();
        let x = gen_covariates(spec.kind, 200, 3, 1).unwrap();
        let t = make_truth(&spec);
        let y = gen_response(&x, &t, &spec, 5).unwrap();
        assert_eq!(y.len(), 200);
        assert_eq!(y, gen_response(&x, &t, &spec, 5).unwrap());
        let bad = DMatrix::from_element(3, 3, 1.0);
        assert!(gen_response(&bad, &t, &spec, 5).is_err());
    }
}
