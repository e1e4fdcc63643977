//! Exact linear quantile regression by a primal-dual interior point method
//! (Frisch-Newton with Mehrotra correction).

use nalgebra::{DMatrix, DVector};

use crate::data::DataShard;
use crate::error::{ConquerError, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InteriorPointConfig {
    /// Stop once the duality gap falls below this multiple of
    /// `1 + sum |y_i|`.
    pub gap_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the boundary taken per step.
    pub step_damping: f64,
}

impl Default for InteriorPointConfig {
    fn default() -> Self {
        Self {
            gap_tol: 1e-10,
            max_iter: 100,
            step_damping: 0.99995,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorPointOutcome {
    pub beta: DVector<f64>,
    pub iterations: usize,
    pub gap: f64,
    pub converged: bool,
}

fn max_step(v: &[f64], dv: &[f64]) -> f64 {
    v.iter()
        .zip(dv)
        .filter(|(_, d)| **d < 0.0)
        .map(|(x, d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `X' diag(q) X`.
fn weighted_gram(shard: &DataShard, q: &[f64]) -> DMatrix<f64> {
    let p = shard.p();
    let mut g = DMatrix::zeros(p, p);
    for i in 0..shard.n() {
        let row = shard.row(i);
        for a in 0..p {
            let w = q[i] * row[a];
            for b in a..p {
                g[(a, b)] += w * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            g[(a, b)] = g[(b, a)];
        }
    }
    g
}

/// Cholesky factor of `g`, adding the smallest diagonal jitter that makes it
/// numerically positive definite.
fn factor(g: DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let p = g.nrows();
    let scale = g.trace() / p as f64;
    let mut jitter = 0.0;
    for _ in 0..12 {
        let mut m = g.clone();
        for a in 0..p {
            m[(a, a)] += jitter;
        }
        if let Some(c) = m.cholesky() {
            return Ok(c);
        }
        jitter = if jitter == 0.0 { scale * 1e-14 } else { jitter * 100.0 };
    }
    Err(ConquerError::Singular("interior point normal equations".into()))
}

/// `X' v`.
fn xt(shard: &DataShard, v: &[f64]) -> DVector<f64> {
    let mut out = DVector::zeros(shard.p());
    for i in 0..shard.n() {
        for (o, x) in out.iter_mut().zip(shard.row(i)) {
            *o += v[i] * x;
        }
    }
    out
}

/// `X d`.
fn xv(shard: &DataShard, d: &DVector<f64>) -> Vec<f64> {
    (0..shard.n()).map(|i| dot(shard.row(i), d.as_slice())).collect()
}

/// Minimizes `sum rho_tau(y_i - x_i'beta)` exactly.
///
/// Solves the dual `max y'a` subject to `X'a = (1 - tau) X'1`, `0 <= a <= 1`;
/// the coefficients are the negated equality multipliers.
pub fn fit_qr_interior_point(shard: &DataShard, tau: f64, config: &InteriorPointConfig) -> Result<InteriorPointOutcome> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(ConquerError::InvalidArgument(format!("tau must lie in (0, 1), got {tau}")));
    }
    let (n, p) = (shard.n(), shard.p());
    if n <= p {
        return Err(ConquerError::InvalidData(format!("need more rows than columns, got n = {n}, p = {p}")));
    }
    let c: Vec<f64> = shard.y().iter().map(|v| -v).collect();
    let mut x = vec![1.0 - tau; n];
    let rhs_b = xt(shard, &x);
    let mut s: Vec<f64> = x.iter().map(|v| 1.0 - v).collect();

    let gram = weighted_gram(shard, &vec![1.0; n]);
    let chol = gram
        .cholesky()
        .ok_or_else(|| ConquerError::Singular("design matrix is rank deficient".into()))?;
    let mut dual = chol.solve(&xt(shard, &c));
    let fitted = xv(shard, &dual);
    let mut z = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n {
        let r = c[i] - fitted[i];
        let lift = if r == 0.0 { 1e-3 } else { 0.0 };
        z[i] = r.max(0.0) + lift;
        w[i] = z[i] - r;
    }
    let gap_of = |x: &[f64], dual: &DVector<f64>, w: &[f64]| dot(&c, x) - dual.dot(&rhs_b) + w.iter().sum::<f64>();
    let tol = config.gap_tol * (1.0 + c.iter().map(|v| v.abs()).sum::<f64>());
    let mut gap = gap_of(&x, &dual, &w);
    let mut iterations = 0;
    while gap > tol && iterations < config.max_iter {
        iterations += 1;
        let q: Vec<f64> = (0..n).map(|i| 1.0 / (z[i] / x[i] + w[i] / s[i])).collect();
        let r: Vec<f64> = (0..n).map(|i| z[i] - w[i]).collect();
        // Near the optimum the barrier weights can overflow the normal
        // equations; the current iterate is then as good as it gets.
        let Ok(normal) = factor(weighted_gram(shard, &q)) else {
            break;
        };
        let mut rhs: Vec<f64> = (0..n).map(|i| q[i] * r[i]).collect();
        let mut dy = normal.solve(&xt(shard, &rhs));
        let ady = xv(shard, &dy);
        let mut dx: Vec<f64> = (0..n).map(|i| q[i] * (ady[i] - r[i])).collect();
        let mut ds: Vec<f64> = dx.iter().map(|v| -v).collect();
        let mut dz: Vec<f64> = (0..n).map(|i| -z[i] * (dx[i] / x[i] + 1.0)).collect();
        let mut dw: Vec<f64> = (0..n).map(|i| -w[i] * (ds[i] / s[i] + 1.0)).collect();
        let steps = |x: &[f64], dx: &[f64], s: &[f64], ds: &[f64], z: &[f64], dz: &[f64], w: &[f64], dw: &[f64]| {
            let fp = (config.step_damping * max_step(x, dx).min(max_step(s, ds))).min(1.0);
            let fd = (config.step_damping * max_step(w, dw).min(max_step(z, dz))).min(1.0);
            (fp, fd)
        };
        let (mut fp, mut fd) = steps(&x, &dx, &s, &ds, &z, &dz, &w, &dw);
        if fp.min(fd) < 1.0 {
            let mu = dot(&z, &x) + dot(&w, &s);
            let g: f64 = (0..n)
                .map(|i| (z[i] + fd * dz[i]) * (x[i] + fp * dx[i]) + (w[i] + fd * dw[i]) * (s[i] + fp * ds[i]))
                .sum();
            let mu = mu * (g / mu).powi(3) / (2.0 * n as f64);
            let dxdz: Vec<f64> = (0..n).map(|i| dx[i] * dz[i]).collect();
            let dsdw: Vec<f64> = (0..n).map(|i| ds[i] * dw[i]).collect();
            let xi: Vec<f64> = (0..n).map(|i| mu * (1.0 / x[i] - 1.0 / s[i])).collect();
            for i in 0..n {
                rhs[i] += q[i] * (dxdz[i] - dsdw[i] - xi[i]);
            }
            dy = normal.solve(&xt(shard, &rhs));
            let ady = xv(shard, &dy);
            for i in 0..n {
                dx[i] = q[i] * (ady[i] + xi[i] - r[i] - dxdz[i] + dsdw[i]);
                ds[i] = -dx[i];
                dz[i] = mu / x[i] - z[i] - z[i] * dx[i] / x[i] - dxdz[i];
                dw[i] = mu / s[i] - w[i] - w[i] * ds[i] / s[i] - dsdw[i];
            }
            (fp, fd) = steps(&x, &dx, &s, &ds, &z, &dz, &w, &dw);
        }
        for i in 0..n {
            x[i] += fp * dx[i];
            s[i] += fp * ds[i];
            w[i] += fd * dw[i];
            z[i] += fd * dz[i];
        }
        dual += dy * fd;
        gap = gap_of(&x, &dual, &w);
        if !gap.is_finite() {
            return Err(ConquerError::NotConverged {
                iterations,
                context: "interior point duality gap is not finite",
            });
        }
    }
    Ok(InteriorPointOutcome {
        beta: -dual,
        iterations,
        gap,
        converged: gap <= tol,
    })
}
