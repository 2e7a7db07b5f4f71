//! Price formation from aggregate opinion, plus trap detection and the
//! market-maker reset.
//!
//! Log returns are linear in excess demand: `S = ED / depth`, with
//! `ED = N (M(t) - M(t - tau))`. Prices are sampled once per trading day of
//! `tau` rounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{ConstraintViolation, Error, Result};
use crate::lattice::{DrawingRecord, LatticeState, Spin};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    /// Market depth.
    pub depth: f64,
    /// Rounds per trading day.
    pub tau: usize,
    /// `|M|` at or above which the lattice counts as trapped.
    pub m_trap: f64,
}

impl MarketParams {
    /// Defaults with depth equal to the number of agents.
    pub fn for_agents(n_agents: usize) -> Self {
        Self {
            depth: n_agents as f64,
            tau: 1000,
            m_trap: 1.0,
        }
    }

    pub fn violations(&self) -> Vec<ConstraintViolation> {
        let mut v = Vec::new();
        if !(self.depth.is_finite() && self.depth > 0.0) {
            v.push(ConstraintViolation {
                parameter: "market.depth".into(),
                constraint: "Lambda > 0".into(),
                value: self.depth.to_string(),
            });
        }
        if self.tau < 1 {
            v.push(ConstraintViolation {
                parameter: "market.tau".into(),
                constraint: "tau >= 1".into(),
                value: self.tau.to_string(),
            });
        }
        if !(self.m_trap > 0.0 && self.m_trap <= 1.0) {
            v.push(ConstraintViolation {
                parameter: "market.m_trap".into(),
                constraint: "0 < m_trap <= 1".into(),
                value: self.m_trap.to_string(),
            });
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Constraint(v))
        }
    }
}

/// Logged market-maker intervention.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResetRecord {
    pub round: u64,
    pub pre_reset_m: f64,
}

/// Opinion change of one agent between its consecutive drawings.
/// Positive is demand, negative is supply.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActivityRecord {
    pub site: usize,
    pub d: i8,
}

impl From<&DrawingRecord> for ActivityRecord {
    fn from(rec: &DrawingRecord) -> Self {
        Self {
            site: rec.site,
            d: rec.new.value() - rec.old.value(),
        }
    }
}

impl ActivityRecord {
    pub fn is_demand(&self) -> bool {
        self.d > 0
    }

    pub fn is_supply(&self) -> bool {
        self.d < 0
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MarketSeries {
    /// Entry 0 is the state before the first recorded round; entry `k` is
    /// the state at the end of round `k`.
    pub magnetization_per_round: Vec<f64>,
    /// `ln P` at the end of each day; entry 0 is `ln P0`.
    pub log_price: Vec<f64>,
    /// Daily log returns, `returns[k] = log_price[k+1] - log_price[k]`.
    pub returns: Vec<f64>,
    pub resets: Vec<ResetRecord>,
}

impl MarketSeries {
    pub fn days(&self) -> usize {
        self.returns.len()
    }
}

/// `N (M_now - M_then)`.
#[inline]
pub fn excess_demand(m_now: f64, m_then: f64, n_agents: usize) -> f64 {
    n_agents as f64 * (m_now - m_then)
}

/// `ED / depth`.
pub fn log_return(excess_demand: f64, depth: f64) -> Result<f64> {
    if !(depth > 0.0) {
        return Err(Error::Constraint(vec![ConstraintViolation {
            parameter: "market.depth".into(),
            constraint: "Lambda > 0".into(),
            value: depth.to_string(),
        }]));
    }
    Ok(excess_demand / depth)
}

/// Samples magnetization every `tau` rounds and integrates daily returns
/// into a log-price path starting at `ln p0`.
///
/// `mag_per_round[0]` is the starting state, so a slice of length `R + 1`
/// covers `R` rounds and yields `R / tau` daily returns.
pub fn build_price_series(
    mag_per_round: &[f64],
    params: &MarketParams,
    n_agents: usize,
    p0: f64,
) -> Result<MarketSeries> {
    params.validate()?;
    if !(p0 > 0.0) {
        return Err(Error::Domain(format!("initial price must be positive, got {p0}")));
    }
    let rounds = mag_per_round.len().saturating_sub(1);
    let required = 2 * params.tau;
    if rounds < required {
        return Err(Error::InsufficientHistory { rounds, required });
    }
    let days = rounds / params.tau;
    let mut log_price = Vec::with_capacity(days + 1);
    let mut returns = Vec::with_capacity(days);
    let mut lp = p0.ln();
    log_price.push(lp);
    for d in 1..=days {
        let ed = excess_demand(
            mag_per_round[d * params.tau],
            mag_per_round[(d - 1) * params.tau],
            n_agents,
        );
        let s = log_return(ed, params.depth)?;
        lp += s;
        returns.push(s);
        log_price.push(lp);
    }
    Ok(MarketSeries {
        magnetization_per_round: mag_per_round.to_vec(),
        log_price,
        returns,
        resets: Vec::new(),
    })
}

/// True iff `|M| >= m_trap`.
#[inline]
pub fn detect_trap(lattice: &LatticeState, m_trap: f64) -> bool {
    lattice.magnetization().abs() >= m_trap
}

/// Redraws every spin i.i.d. uniform over the three states.
pub fn market_maker_reset<R: Rng + ?Sized>(
    lattice: &mut LatticeState,
    rng: &mut R,
    round: u64,
) -> ResetRecord {
    let pre_reset_m = lattice.magnetization();
    lattice.fill_with(|| Spin::random(rng));
    ResetRecord { round, pre_reset_m }
}
