//! Loss events, interoccurrence times and q-exponential fits.

mod fit;
mod qexp;

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub use fit::{fit_q_exponential, fit_q_exponential_with, FitBin, FitOptions, QExpFit};
pub use qexp::{q_exponential, q_of_rq, QExpDistribution};

/// Losses below `-Q` and the waiting times between them.
#[derive(Debug, Clone, PartialEq)]
pub struct LossAnalysis {
    /// Loss threshold magnitude.
    pub q_threshold: f64,
    /// Event indices into the (concatenated) return series.
    pub event_days: Vec<usize>,
    /// Days between consecutive events of the same segment.
    pub inter_times: Vec<u64>,
    /// Mean interoccurrence time `R_Q`.
    pub mean_interoccurrence: f64,
    /// Empirical mass function over `r`, ascending.
    pub pq: Vec<(u64, f64)>,
}

impl LossAnalysis {
    pub fn from_inter_times(q_threshold: f64, event_days: Vec<usize>, inter_times: Vec<u64>) -> Result<Self> {
        if inter_times.is_empty() {
            return Err(Error::InsufficientEvents {
                count: event_days.len(),
                required: 2,
            });
        }
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for &r in &inter_times {
            *counts.entry(r).or_default() += 1;
        }
        let total = inter_times.len() as f64;
        let pq = counts
            .into_iter()
            .map(|(r, c)| (r, c as f64 / total))
            .collect();
        let mean_interoccurrence = inter_times.iter().map(|&r| r as f64).sum::<f64>() / total;
        Ok(Self {
            q_threshold,
            event_days,
            inter_times,
            mean_interoccurrence,
            pq,
        })
    }

    pub fn n_events(&self) -> usize {
        self.event_days.len()
    }

    /// Observed count for every distinct `r`, ascending.
    pub fn counts(&self) -> Vec<(u64, usize)> {
        let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
        for &r in &self.inter_times {
            *counts.entry(r).or_default() += 1;
        }
        counts.into_iter().collect()
    }
}

/// Days with `returns[k] < -q` and the gaps between them.
pub fn extract_loss_events(returns: &[f64], q: f64) -> Result<LossAnalysis> {
    extract_loss_events_segments(&[returns], q)
}

/// As [`extract_loss_events`] over independent segments (e.g. replicas).
///
/// Event indices run over the concatenation of the segments, but no
/// interoccurrence time spans a segment boundary.
pub fn extract_loss_events_segments(segments: &[&[f64]], q: f64) -> Result<LossAnalysis> {
    if !(q > 0.0) {
        return Err(Error::Domain(format!("loss threshold Q must be positive, got {q}")));
    }
    let mut event_days = Vec::new();
    let mut inter_times = Vec::new();
    let mut offset = 0;
    for seg in segments {
        let mut last: Option<usize> = None;
        for (k, &s) in seg.iter().enumerate() {
            if s < -q {
                if let Some(prev) = last {
                    inter_times.push((k - prev) as u64);
                }
                last = Some(k);
                event_days.push(offset + k);
            }
        }
        offset += seg.len();
    }
    if event_days.len() < 2 || inter_times.is_empty() {
        return Err(Error::InsufficientEvents {
            count: event_days.len(),
            required: 2,
        });
    }
    LossAnalysis::from_inter_times(q, event_days, inter_times)
}

/// Loss threshold `Q` such that a fraction `1 / target_rq` of days fall
/// below `-Q`.
///
/// The empirical quantile is taken among distinct negative return values,
/// choosing the one whose loss count is closest to `n / target_rq`. `-Q` is
/// then placed just above that value so that ties with it count as losses.
/// With quantized returns the achieved `R_Q` can miss the target; callers
/// check it after extraction.
pub fn calibrate_q(returns: &[f64], target_rq: f64) -> Result<f64> {
    if returns.is_empty() {
        return Err(Error::Calibration("empty return series".into()));
    }
    if !(target_rq >= 1.0) {
        return Err(Error::Domain(format!("target R_Q must be >= 1, got {target_rq}")));
    }
    if returns.iter().any(|r| !r.is_finite()) {
        return Err(Error::Calibration("non-finite return".into()));
    }
    let n = returns.len();
    let desired = (n as f64 / target_rq).round() as usize;
    if desired < 2 {
        return Err(Error::InsufficientEvents {
            count: desired,
            required: 2,
        });
    }
    let mut sorted = returns.to_vec();
    sorted.sort_by(f64::total_cmp);

    // (value, number of returns <= value) for each distinct value.
    let mut best: Option<(usize, usize)> = None; // (index of last tie, count)
    let mut i = 0;
    while i < n && sorted[i] < 0.0 {
        let mut j = i;
        while j + 1 < n && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let count = j + 1;
        let better = match best {
            None => true,
            Some((_, c)) => count.abs_diff(desired) < c.abs_diff(desired),
        };
        if better {
            best = Some((j, count));
        }
        if count >= desired {
            break;
        }
        i = j + 1;
    }
    let Some((idx, _)) = best else {
        return Err(Error::Calibration(format!(
            "no negative returns, so no loss threshold for target R_Q {target_rq}"
        )));
    };
    let value = sorted[idx];
    let upper = sorted.get(idx + 1).copied().unwrap_or(0.0).min(0.0);
    let neg_q = value + (upper - value) * 1e-9;
    Ok(-neg_q)
}

/// Least-squares line through `(ln(R_Q / 2), q)` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QLawRegression {
    pub slope: f64,
    pub intercept: f64,
}

pub fn regress_q_law(points: &[(f64, f64)]) -> Result<QLawRegression> {
    if points.len() < 2 {
        return Err(Error::Fit("q-law regression needs at least two points".into()));
    }
    let xs: Vec<f64> = points.iter().map(|(rq, _)| (rq / 2.0).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::Fit("q-law regression needs distinct R_Q values".into()));
    }
    let sxy: f64 = xs.iter().zip(points).map(|(x, p)| (x - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Ok(QLawRegression {
        slope,
        intercept: my - slope * mx,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_events() {
        let a = extract_loss_events(&[-1.0, 1.0, -1.0, 1.0, -1.0], 0.5).unwrap();
        assert_eq!(a.event_days, vec![0, 2, 4]);
        assert_eq!(a.inter_times, vec![2, 2]);
        assert_eq!(a.mean_interoccurrence, 2.0);
        assert_eq!(a.pq, vec![(2, 1.0)]);
    }

    #[test]
    fn no_losses_is_insufficient() {
        let err = extract_loss_events(&[0.1, 0.2, 0.3], 0.05).unwrap_err();
        assert!(matches!(err, Error::InsufficientEvents { count: 0, .. }));
        let err = extract_loss_events(&[0.1, -0.2, 0.3], 0.05).unwrap_err();
        assert!(matches!(err, Error::InsufficientEvents { count: 1, .. }));
    }

    #[test]
    fn segments_do_not_bridge() {
        let a: &[f64] = &[-1.0, 0.0, -1.0];
        let b: &[f64] = &[0.0, -1.0, 0.0, 0.0, -1.0];
        let la = extract_loss_events_segments(&[a, b], 0.5).unwrap();
        assert_eq!(la.event_days, vec![0, 2, 4, 7]);
        assert_eq!(la.inter_times, vec![2, 3]);
    }

    #[test]
    fn alternating_calibration() {
        let returns: Vec<f64> = (0..100).map(|k| if k % 2 == 0 { -1.0 } else { 1.0 }).collect();
        let q = calibrate_q(&returns, 2.0).unwrap();
        assert!(q < 1.0 && q > 0.999_999);
        let la = extract_loss_events(&returns, q).unwrap();
        assert_eq!(la.mean_interoccurrence, 2.0);
    }

    #[test]
    fn degenerate_target() {
        let returns: Vec<f64> = (0..50).map(|k| -(k as f64)).collect();
        assert!(calibrate_q(&returns, 51.0).is_err());
        assert!(calibrate_q(&[0.1; 40], 2.0).is_err());
        assert!(calibrate_q(&[], 2.0).is_err());
    }

    #[test]
    fn zero_mass_falls_back_to_all_losses() {
        // 30% losses, 40% zeros: the 50% quantile is 0, so every negative
        // day becomes a loss.
        let mut r = vec![-0.5; 3];
        r.extend([0.0; 4]);
        r.extend([0.5; 3]);
        let r: Vec<f64> = r.iter().cycle().take(100).copied().collect();
        let q = calibrate_q(&r, 2.0).unwrap();
        assert!(q < 0.5 && q > 0.499_999);
        let la = extract_loss_events(&r, q).unwrap();
        assert_eq!(la.n_events(), 30);
    }

    #[test]
    fn ties_pick_closest_count() {
        // 10 days: four at -2, two at -1, four at +1. Target 5 wants 2 losses;
        // the -2 group gives 4, -1 group gives 6, so -2 wins.
        let mut r = vec![-2.0; 4];
        r.extend([-1.0, -1.0]);
        r.extend([1.0; 4]);
        let q = calibrate_q(&r, 5.0).unwrap();
        assert!(q > 1.0 && q < 2.0);
        assert!((q - 2.0).abs() < 1e-8);
    }

    #[test]
    fn q_law_regression_exact_line() {
        let pts: Vec<(f64, f64)> = [2.0, 5.0, 10.0, 30.0, 70.0]
            .iter()
            .map(|&rq| (rq, q_of_rq(rq, 0.17).unwrap()))
            .collect();
        let reg = regress_q_law(&pts).unwrap();
        assert!((reg.slope - 0.17).abs() < 1e-12);
        assert!((reg.intercept - 1.0).abs() < 1e-12);
    }
}
