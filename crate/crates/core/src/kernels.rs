//! Smoothing kernels and the convolution-smoothed check loss.
//!
//! For a kernel `K` with CDF `Kbar` and bandwidth `h`, the smoothed loss is
//! `l_h(u) = (rho_tau * K_h)(u)`, which has the closed form
//!
//! ```text
//! l_h(u) = u * (tau - Kbar(-u/h)) - h * E[V 1(V < -u/h)],   V ~ K
//! ```
//!
//! and derivative `l_h'(u) = tau - Kbar(-u/h)`.

use crate::error::{ConquerError, Result};
use crate::normal;

/// Symmetric smoothing kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash)]
pub enum Kernel {
    #[default]
    Gaussian,
    /// Density 1/2 on [-1, 1].
    Uniform,
}

impl Kernel {
    pub fn density(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => normal::pdf(u),
            Kernel::Uniform => {
                if u.abs() <= 1.0 {
                    0.5
                } else {
                    0.0
                }
            }
        }
    }

    pub fn cdf(self, u: f64) -> f64 {
        match self {
            Kernel::Gaussian => normal::cdf(u),
            Kernel::Uniform => (0.5 * (u + 1.0)).clamp(0.0, 1.0),
        }
    }

    /// Second moment of the kernel density.
    pub fn second_moment(self) -> f64 {
        match self {
            Kernel::Gaussian => 1.0,
            Kernel::Uniform => 1.0 / 3.0,
        }
    }

    /// `E[V 1(V < a)]` for `V` distributed with this kernel.
    fn lower_partial_mean(self, a: f64) -> f64 {
        match self {
            Kernel::Gaussian => -normal::pdf(a),
            Kernel::Uniform => {
                let a = a.clamp(-1.0, 1.0);
                0.25 * (a * a - 1.0)
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Kernel::Gaussian => "gaussian",
            Kernel::Uniform => "uniform",
        }
    }
}

impl std::str::FromStr for Kernel {
    type Err = ConquerError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Kernel::Gaussian),
            "uniform" => Ok(Kernel::Uniform),
            other => Err(ConquerError::InvalidArgument(format!(
                "unknown kernel '{other}'"
            ))),
        }
    }
}

/// Plain check (pinball) loss `rho_tau(u) = u (tau - 1(u < 0))`.
#[inline]
pub fn check_loss(tau: f64, u: f64) -> f64 {
    if u < 0.0 {
        u * (tau - 1.0)
    } else {
        u * tau
    }
}

/// Parameters of the smoothed check loss at one quantile level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothedLoss {
    tau: f64,
    h: f64,
    kernel: Kernel,
}

impl SmoothedLoss {
    pub fn new(tau: f64, h: f64, kernel: Kernel) -> Result<Self> {
        if !(tau > 0.0 && tau < 1.0) {
            return Err(ConquerError::InvalidArgument(format!(
                "quantile level must lie in (0, 1), got {tau}"
            )));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(ConquerError::InvalidArgument(format!(
                "bandwidth must be positive, got {h}"
            )));
        }
        Ok(Self { tau, h, kernel })
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> Kernel {
        self.kernel
    }

    /// Same level and kernel, different bandwidth.
    pub fn with_bandwidth(&self, h: f64) -> Result<Self> {
        Self::new(self.tau, h, self.kernel)
    }

    /// `l_h(u)`.
    #[inline]
    pub fn loss(&self, u: f64) -> f64 {
        let a = -u / self.h;
        u * (self.tau - self.kernel.cdf(a)) - self.h * self.kernel.lower_partial_mean(a)
    }

    /// `l_h'(u) = tau - Kbar(-u/h)`, in `[tau - 1, tau]`.
    #[inline]
    pub fn derivative(&self, u: f64) -> f64 {
        self.tau - self.kernel.cdf(-u / self.h)
    }

    /// Factor multiplying `x` in the gradient of `l_h(y - x'beta)` with
    /// respect to `beta`: `Kbar(-u/h) - tau`, in `[-tau, 1 - tau]`.
    #[inline]
    pub fn gradient_factor(&self, u: f64) -> f64 {
        self.kernel.cdf(-u / self.h) - self.tau
    }

    /// `l_h''(u) = K_h(u)`.
    #[inline]
    pub fn curvature(&self, u: f64) -> f64 {
        self.kernel.density(u / self.h) / self.h
    }

    /// Loss and gradient factor sharing one kernel CDF evaluation.
    #[inline]
    pub fn loss_and_factor(&self, u: f64) -> (f64, f64) {
        let a = -u / self.h;
        let c = self.kernel.cdf(a);
        let loss = u * (self.tau - c) - self.h * self.kernel.lower_partial_mean(a);
        (loss, c - self.tau)
    }
}
