//! Least-squares fit of the discrete q-exponential to log-binned
//! interoccurrence counts.
//!
//! Bins start log-spaced from `r = 1` and are merged until each holds at
//! least `min_bin_count` observations. The objective compares the log of the
//! empirical mean mass per integer `r` in each bin with the log of the model's
//! mean mass over the same integers, weighting each bin by its count.

use super::qexp::{kernel_sum, QExpDistribution};
use super::LossAnalysis;
use crate::error::{Error, Result};

/// Upper bound on `q - 1` explored by the fit.
const MAX_Q_MINUS_ONE: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub min_samples: usize,
    pub min_bin_count: usize,
    /// Ratio between consecutive base bin edges.
    pub bin_growth: f64,
    /// Normalization runs over `r = 1..=r_max_factor * max observed r`.
    pub r_max_factor: u64,
    pub q0: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_samples: 30,
            min_bin_count: 5,
            bin_growth: 1.25,
            r_max_factor: 10,
            q0: 0.17,
        }
    }
}

/// One log bin `lo..=hi` with empirical and fitted mean mass per integer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitBin {
    pub lo: u64,
    pub hi: u64,
    pub count: usize,
    pub empirical: f64,
    pub model: f64,
}

impl FitBin {
    pub fn width(&self) -> u64 {
        self.hi - self.lo + 1
    }

    pub fn log_residual(&self) -> f64 {
        self.empirical.ln() - self.model.ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QExpFit {
    pub q: f64,
    /// Rate parameter of the q-exponential (1/days).
    pub beta_scale: f64,
    pub q0: f64,
    pub rms_log_residual: f64,
    pub n_samples: usize,
    pub r_max: u64,
    pub bins: Vec<FitBin>,
}

impl QExpFit {
    pub fn distribution(&self) -> QExpDistribution {
        QExpDistribution::new(self.q, self.beta_scale, self.r_max)
            .expect("fitted parameters are in the kernel's domain")
    }
}

pub fn fit_q_exponential(analysis: &LossAnalysis) -> Result<QExpFit> {
    fit_q_exponential_with(analysis, &FitOptions::default())
}

pub fn fit_q_exponential_with(analysis: &LossAnalysis, opts: &FitOptions) -> Result<QExpFit> {
    let n = analysis.inter_times.len();
    if n < opts.min_samples {
        return Err(Error::InsufficientEvents {
            count: n,
            required: opts.min_samples,
        });
    }
    let counts = analysis.counts();
    let max_r = counts.last().map(|c| c.0).unwrap_or(0);
    if counts.first().map(|c| c.0) == Some(0) {
        return Err(Error::Fit("interoccurrence times must be >= 1".into()));
    }
    let bins = log_bins(&counts, max_r, opts);
    if bins.len() < 3 {
        return Err(Error::Fit(format!(
            "only {} usable bins (need 3); data too concentrated",
            bins.len()
        )));
    }
    let r_max = max_r.saturating_mul(opts.r_max_factor.max(1));
    let total = n as f64;
    let emp_log: Vec<f64> = bins
        .iter()
        .map(|&(lo, hi, c)| (c as f64 / (total * (hi - lo + 1) as f64)).ln())
        .collect();

    let objective = |x: &[f64; 2]| -> f64 {
        let a = x[0].clamp(0.0, MAX_Q_MINUS_ONE);
        let penalty = 1e3 * (x[0] - a).powi(2);
        let beta = x[1].exp();
        if !beta.is_finite() || beta <= 0.0 {
            return f64::INFINITY;
        }
        let z = kernel_sum(1, r_max, a, beta);
        let mut sse = 0.0;
        for (&(lo, hi, c), e) in bins.iter().zip(&emp_log) {
            let m = kernel_sum(lo, hi, a, beta) / (z * (hi - lo + 1) as f64);
            let res = if m > 0.0 { e - m.ln() } else { 1e3 };
            sse += c as f64 * res * res;
        }
        if sse.is_finite() {
            sse + penalty
        } else {
            f64::INFINITY
        }
    };

    let mean = analysis.mean_interoccurrence.max(1.0);
    let mut best = ([0.2, (1.0 / mean).ln()], f64::INFINITY);
    for start in [[0.05, (1.0 / mean).ln()], [0.3, (1.0 / mean).ln()], [0.8, (0.5 / mean).ln()]] {
        let cand = nelder_mead(&objective, start, [0.1, 0.3], 1e-12, 4000);
        if cand.1 < best.1 {
            best = cand;
        }
    }
    // Polish from the best point.
    let polished = nelder_mead(&objective, best.0, [0.02, 0.05], 1e-14, 4000);
    if polished.1 <= best.1 {
        best = polished;
    }
    if !best.1.is_finite() {
        return Err(Error::Fit("objective is not finite at any explored point".into()));
    }

    let q = 1.0 + best.0[0].clamp(0.0, MAX_Q_MINUS_ONE);
    let beta_scale = best.0[1].exp();
    let dist = QExpDistribution::new(q, beta_scale, r_max)?;
    let fit_bins: Vec<FitBin> = bins
        .iter()
        .map(|&(lo, hi, count)| {
            let width = (hi - lo + 1) as f64;
            FitBin {
                lo,
                hi,
                count,
                empirical: count as f64 / (total * width),
                model: dist.mass(lo, hi) / width,
            }
        })
        .collect();
    let rms = (fit_bins.iter().map(|b| b.log_residual().powi(2)).sum::<f64>()
        / fit_bins.len() as f64)
        .sqrt();
    Ok(QExpFit {
        q,
        beta_scale,
        q0: opts.q0,
        rms_log_residual: rms,
        n_samples: n,
        r_max,
        bins: fit_bins,
    })
}

/// Log-spaced bins `(lo, hi, count)` over `1..=max_r`, each with at least
/// `min_bin_count` observations; an underfull tail is merged into the last bin.
fn log_bins(counts: &[(u64, usize)], max_r: u64, opts: &FitOptions) -> Vec<(u64, u64, usize)> {
    let growth = opts.bin_growth.max(1.0 + 1e-9);
    let mut edges = vec![1u64];
    while *edges.last().unwrap() <= max_r {
        let e = *edges.last().unwrap();
        let next = ((e as f64 * growth).ceil() as u64).max(e + 1);
        edges.push(next);
    }
    let count_in = |lo: u64, hi: u64| -> usize {
        let start = counts.partition_point(|c| c.0 < lo);
        let end = counts.partition_point(|c| c.0 <= hi);
        counts[start..end].iter().map(|c| c.1).sum()
    };
    let mut bins: Vec<(u64, u64, usize)> = Vec::new();
    let mut lo = edges[0];
    let mut acc = 0;
    for w in edges.windows(2) {
        let hi = (w[1] - 1).min(max_r);
        acc += count_in(w[0], hi);
        if acc >= opts.min_bin_count {
            bins.push((lo, hi, acc));
            lo = hi + 1;
            acc = 0;
        }
    }
    if acc > 0 {
        match bins.last_mut() {
            Some(last) => {
                last.1 = max_r;
                last.2 += acc;
            }
            None => bins.push((lo, max_r, acc)),
        }
    }
    bins.retain(|b| b.2 >= opts.min_bin_count);
    bins
}

/// Minimal Nelder-Mead over two parameters. Returns the best vertex and value.
fn nelder_mead<F>(f: &F, start: [f64; 2], step: [f64; 2], tol: f64, max_iter: usize) -> ([f64; 2], f64)
where
    F: Fn(&[f64; 2]) -> f64,
{
    let mut simplex = [
        start,
        [start[0] + step[0], start[1]],
        [start[0], start[1] + step[1]],
    ];
    let mut values = simplex.map(|p| f(&p));
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.map(|i| simplex[i]);
        values = order.map(|i| values[i]);
        if (values[2] - values[0]).abs() <= tol * (values[0].abs() + tol) {
            break;
        }
        let centroid = [
            0.5 * (simplex[0][0] + simplex[1][0]),
            0.5 * (simplex[0][1] + simplex[1][1]),
        ];
        let along = |t: f64| {
            [
                centroid[0] + t * (simplex[2][0] - centroid[0]),
                centroid[1] + t * (simplex[2][1] - centroid[1]),
            ]
        };
        let reflected = along(-1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = along(-2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[2] = expanded;
                values[2] = fe;
            } else {
                simplex[2] = reflected;
                values[2] = fr;
            }
        } else if fr < values[1] {
            simplex[2] = reflected;
            values[2] = fr;
        } else {
            let contracted = if fr < values[2] { along(-0.5) } else { along(0.5) };
            let fc = f(&contracted);
            if fc < values[2].min(fr) {
                simplex[2] = contracted;
                values[2] = fc;
            } else {
                for k in 1..3 {
                    simplex[k] = [
                        simplex[0][0] + 0.5 * (simplex[k][0] - simplex[0][0]),
                        simplex[0][1] + 0.5 * (simplex[k][1] - simplex[0][1]),
                    ];
                    values[k] = f(&simplex[k]);
                }
            }
        }
    }
    let best = (0..3).min_by(|&a, &b| values[a].total_cmp(&values[b])).unwrap();
    (simplex[best], values[best])
}
