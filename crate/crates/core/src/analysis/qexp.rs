//! Tsallis q-exponential kernel and its discrete normalization.

use crate::error::{Error, Result};

/// Below this `q - 1` the kernel is evaluated as a plain exponential.
const EXP_LIMIT: f64 = 1e-12;

/// Ranges longer than this are summed exactly over their head and by
/// Euler-Maclaurin over the rest.
const DIRECT_TERMS: u64 = 256;

/// Unnormalized kernel `[1 + (q-1) beta r]^(-1/(q-1))`, `exp(-beta r)` at `q = 1`.
pub fn q_exponential(r: f64, q: f64, beta_scale: f64) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::Domain(format!("q-exponential needs q >= 1, got {q}")));
    }
    if !(beta_scale > 0.0) {
        return Err(Error::Domain(format!(
            "q-exponential needs beta > 0, got {beta_scale}"
        )));
    }
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("q-exponential needs r >= 0, got {r}")));
    }
    let bracket = 1.0 + (q - 1.0) * beta_scale * r;
    if !(bracket > 0.0) {
        return Err(Error::Domain(format!("nonpositive bracket {bracket}")));
    }
    Ok(kernel(r, q - 1.0, beta_scale))
}

/// `q(R_Q) = 1 + q0 ln(R_Q / 2)`.
pub fn q_of_rq(rq: f64, q0: f64) -> Result<f64> {
    if !(rq >= 2.0) {
        return Err(Error::Domain(format!("q(R_Q) law needs R_Q >= 2, got {rq}")));
    }
    Ok(1.0 + q0 * (rq / 2.0).ln())
}

/// Kernel with `a = q - 1 >= 0`; no argument checks.
#[inline]
pub(crate) fn kernel(r: f64, a: f64, beta: f64) -> f64 {
    if a < EXP_LIMIT {
        (-beta * r).exp()
    } else {
        (-(a * beta * r).ln_1p() / a).exp()
    }
}

#[inline]
fn kernel_derivative(r: f64, a: f64, beta: f64) -> f64 {
    -beta * kernel(r, a, beta) / (1.0 + a * beta * r)
}

/// `\int_lo^hi kernel(x) dx`.
fn kernel_integral(lo: f64, hi: f64, a: f64, beta: f64) -> f64 {
    if a < EXP_LIMIT {
        return ((-beta * lo).exp() - (-beta * hi).exp()) / beta;
    }
    // Antiderivative base^p / ((a - 1) beta) with p = 1 - 1/a, rewritten so
    // that a = 1 (logarithmic case) needs no special branch.
    let p = 1.0 - 1.0 / a;
    let l_lo = (a * beta * lo).ln_1p();
    let l_hi = (a * beta * hi).ln_1p();
    let delta = l_hi - l_lo;
    let g = if (p * delta).abs() < 1e-8 {
        delta * (1.0 + 0.5 * p * delta)
    } else {
        (p * delta).exp_m1() / p
    };
    (p * l_lo).exp() * g / (a * beta)
}

/// `sum_{r=lo}^{hi} kernel(r)` over integers, `1 <= lo <= hi`.
pub(crate) fn kernel_sum(lo: u64, hi: u64, a: f64, beta: f64) -> f64 {
    if hi < lo {
        return 0.0;
    }
    let head_end = hi.min(lo.saturating_add(DIRECT_TERMS - 1));
    let mut total: f64 = (lo..=head_end).map(|r| kernel(r as f64, a, beta)).sum();
    if head_end < hi {
        let m = (head_end + 1) as f64;
        let b = hi as f64;
        total += kernel_integral(m, b, a, beta)
            + 0.5 * (kernel(m, a, beta) + kernel(b, a, beta))
            + (kernel_derivative(b, a, beta) - kernel_derivative(m, a, beta)) / 12.0;
    }
    total
}

/// Discrete q-exponential on `r = 1..=r_max`, normalized to unit mass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QExpDistribution {
    pub q: f64,
    pub beta_scale: f64,
    pub r_max: u64,
    norm: f64,
}

impl QExpDistribution {
    pub fn new(q: f64, beta_scale: f64, r_max: u64) -> Result<Self> {
        q_exponential(0.0, q, beta_scale)?;
        if r_max < 1 {
            return Err(Error::Domain("r_max must be at least 1".into()));
        }
        let norm = kernel_sum(1, r_max, q - 1.0, beta_scale);
        Ok(Self {
            q,
            beta_scale,
            r_max,
            norm,
        })
    }

    /// Normalization constant `sum_{r=1}^{r_max} kernel(r)`.
    pub fn normalization(&self) -> f64 {
        self.norm
    }

    /// Probability mass at integer `r`; zero outside `1..=r_max`.
    pub fn pmf(&self, r: u64) -> f64 {
        if r < 1 || r > self.r_max {
            return 0.0;
        }
        kernel(r as f64, self.q - 1.0, self.beta_scale) / self.norm
    }

    /// Mass of the integer range `lo..=hi`, clipped to the support.
    pub fn mass(&self, lo: u64, hi: u64) -> f64 {
        let lo = lo.max(1);
        let hi = hi.min(self.r_max);
        kernel_sum(lo, hi, self.q - 1.0, self.beta_scale) / self.norm
    }
}
