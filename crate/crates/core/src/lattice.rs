//! Three-state spin lattice and the threshold linear social-impact update.
//!
//! Sites live on an `n x n` periodic grid in row-major order. Each drawing
//! picks one site uniformly at random, adds a private noise value to the
//! coupling-weighted sum of its four neighbours and passes the result through
//! a three-level threshold of width `lambda |M|`.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{ConstraintViolation, Error, Result};
use crate::noise::NoiseSource;

/// One agent's opinion: sell, neutral or buy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(i8)]
pub enum Spin {
    Down = -1,
    Neutral = 0,
    Up = 1,
}

impl Spin {
    pub const ALL: [Spin; 3] = [Spin::Down, Spin::Neutral, Spin::Up];

    #[inline]
    pub fn value(self) -> i8 {
        self as i8
    }

    pub fn from_value(v: i8) -> Option<Spin> {
        match v {
            -1 => Some(Spin::Down),
            0 => Some(Spin::Neutral),
            1 => Some(Spin::Up),
            _ => None,
        }
    }

    /// Uniform over the three states.
    pub fn random<R: Rng + ?Sized>(rng: &mut R) -> Spin {
        Spin::ALL[rng.random_range(0..3)]
    }
}

/// Uniform nearest-neighbour coupling `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingSpec {
    pub j: f64,
}

impl CouplingSpec {
    pub fn new(j: f64) -> Result<Self> {
        if j.is_finite() && j > 0.0 {
            Ok(Self { j })
        } else {
            Err(Error::Constraint(vec![ConstraintViolation {
                parameter: "model.j".into(),
                constraint: "J > 0".into(),
                value: j.to_string(),
            }]))
        }
    }
}

impl Default for CouplingSpec {
    fn default() -> Self {
        Self { j: 1.0 }
    }
}

/// Which magnetization feeds the threshold `lambda |M|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdFreeze {
    /// Current magnetization at every drawing.
    #[default]
    Drawing,
    /// Magnetization at the start of the round, held for its N drawings.
    Round,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Threshold amplitude.
    pub lambda: f64,
    pub freeze: ThresholdFreeze,
}

impl DynamicsParams {
    pub fn new(lambda: f64, freeze: ThresholdFreeze) -> Result<Self> {
        if lambda.is_finite() && lambda > 0.0 {
            Ok(Self { lambda, freeze })
        } else {
            Err(Error::Constraint(vec![ConstraintViolation {
                parameter: "model.lambda".into(),
                constraint: "lambda > 0".into(),
                value: lambda.to_string(),
            }]))
        }
    }
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            lambda: 2.0,
            freeze: ThresholdFreeze::Drawing,
        }
    }
}

/// Three-level threshold characteristic.
///
/// Returns `Down` for `x < -y`, `Neutral` for `-y <= x < y`, `Up` for `x >= y`.
/// With `y == 0` the neutral band is empty.
#[inline]
pub fn threshold_sign(x: f64, y: f64) -> Spin {
    assert!(x.is_finite(), "threshold_sign: non-finite argument {x}");
    debug_assert!(y >= 0.0);
    match (x >= y) as i8 - (x < -y) as i8 {
        -1 => Spin::Down,
        0 => Spin::Neutral,
        _ => Spin::Up,
    }
}

/// Outcome of a single drawing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DrawingRecord {
    pub site: usize,
    pub old: Spin,
    pub new: Spin,
}

impl DrawingRecord {
    pub fn changed(&self) -> bool {
        self.old != self.new
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundSummary {
    pub magnetization: f64,
    /// Drawings in this round that changed the chosen spin.
    pub changes: usize,
}

/// Serializable copy of the lattice for checkpoints and inspection.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeSnapshot {
    pub n: usize,
    pub spins: Vec<i8>,
    pub sum_spins: i64,
    pub drawings_done: u64,
}

#[derive(Debug, Clone)]
pub struct LatticeState {
    n: usize,
    spins: Vec<Spin>,
    neighbors: Vec<[u32; 4]>,
    sum_spins: i64,
    drawings_done: u64,
}

impl LatticeState {
    /// All spins neutral.
    pub fn new(n: usize) -> Self {
        Self::from_spins(n, vec![Spin::Neutral; n * n])
    }

    /// Spins i.i.d. uniform over the three states.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        let spins = (0..n * n).map(|_| Spin::random(rng)).collect();
        Self::from_spins(n, spins)
    }

    pub fn from_spins(n: usize, spins: Vec<Spin>) -> Self {
        assert!(n >= 1, "lattice size must be positive");
        assert_eq!(spins.len(), n * n, "spin array must have n*n entries");
        assert!(n * n <= u32::MAX as usize);
        let neighbors = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                let up = ((r + n - 1) % n) * n + c;
                let down = ((r + 1) % n) * n + c;
                let left = r * n + (c + n - 1) % n;
                let right = r * n + (c + 1) % n;
                [up as u32, down as u32, left as u32, right as u32]
            })
            .collect();
        let sum_spins = spins.iter().map(|s| s.value() as i64).sum();
        Self {
            n,
            spins,
            neighbors,
            sum_spins,
            drawings_done: 0,
        }
    }

    pub fn from_snapshot(snapshot: &LatticeSnapshot) -> Result<Self> {
        let spins = snapshot
            .spins
            .iter()
            .map(|&v| {
                Spin::from_value(v).ok_or_else(|| Error::Domain(format!("invalid spin value {v}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if spins.len() != snapshot.n * snapshot.n {
            return Err(Error::Domain("snapshot spin count does not match n*n".into()));
        }
        let mut state = Self::from_spins(snapshot.n, spins);
        if state.sum_spins != snapshot.sum_spins {
            return Err(Error::Domain("snapshot sum does not match its spins".into()));
        }
        state.drawings_done = snapshot.drawings_done;
        Ok(state)
    }

    pub fn snapshot(&self) -> LatticeSnapshot {
        LatticeSnapshot {
            n: self.n,
            spins: self.spins.iter().map(|s| s.value()).collect(),
            sum_spins: self.sum_spins,
            drawings_done: self.drawings_done,
        }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of agents, `n * n`.
    #[inline]
    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    #[inline]
    pub fn spins(&self) -> &[Spin] {
        &self.spins
    }

    #[inline]
    pub fn spin(&self, i: usize) -> Spin {
        self.spins[i]
    }

    /// The four neighbour indices of site `i`: up, down, left, right.
    #[inline]
    pub fn neighbors(&self, i: usize) -> [usize; 4] {
        self.neighbors[i].map(|k| k as usize)
    }

    #[inline]
    pub fn sum_spins(&self) -> i64 {
        self.sum_spins
    }

    #[inline]
    pub fn drawings_done(&self) -> u64 {
        self.drawings_done
    }

    /// Mean opinion `sum_spins / N`.
    #[inline]
    pub fn magnetization(&self) -> f64 {
        self.sum_spins as f64 / self.spins.len() as f64
    }

    /// Neutral-band half width `lambda |M|`.
    #[inline]
    pub fn threshold(&self, lambda: f64) -> f64 {
        lambda * (self.sum_spins.abs() as f64 / self.spins.len() as f64)
    }

    /// Overwrites one spin, keeping the cached sum exact.
    #[inline]
    pub fn set_spin(&mut self, i: usize, s: Spin) {
        let old = self.spins[i];
        self.sum_spins += (s.value() - old.value()) as i64;
        self.spins[i] = s;
    }

    /// Replaces every spin, rebuilding the cached sum.
    pub fn fill_with<F: FnMut() -> Spin>(&mut self, mut f: F) {
        for s in self.spins.iter_mut() {
            *s = f();
        }
        self.sum_spins = self.spins.iter().map(|s| s.value() as i64).sum();
    }

    #[inline]
    fn neighbor_sum(&self, i: usize) -> i32 {
        let nb = &self.neighbors[i];
        nb.iter()
            .map(|&k| self.spins[k as usize].value() as i32)
            .sum()
    }

    /// `J` times the sum of the four neighbour spins of site `i`.
    pub fn local_impact(&self, coupling: &CouplingSpec, i: usize) -> f64 {
        assert!(i < self.len(), "site index {i} out of range");
        coupling.j * self.neighbor_sum(i) as f64
    }

    /// One drawing using the current magnetization for the threshold.
    pub fn drawing<S, R>(
        &mut self,
        params: &DynamicsParams,
        coupling: &CouplingSpec,
        noise: &mut S,
        rng: &mut R,
    ) -> DrawingRecord
    where
        S: NoiseSource,
        R: RngCore + ?Sized,
    {
        let y = self.threshold(params.lambda);
        self.drawing_with_threshold(y, coupling, noise, rng)
    }

    /// One drawing against an explicit threshold `y`.
    ///
    /// Randomness is consumed in a fixed order: the site first, then the noise.
    #[inline]
    pub fn drawing_with_threshold<S, R>(
        &mut self,
        y: f64,
        coupling: &CouplingSpec,
        noise: &mut S,
        rng: &mut R,
    ) -> DrawingRecord
    where
        S: NoiseSource,
        R: RngCore + ?Sized,
    {
        let site = rng.random_range(0..self.spins.len() as u32) as usize;
        let eps = noise.sample(rng);
        let x = coupling.j * self.neighbor_sum(site) as f64 + eps;
        let new = threshold_sign(x, y);
        let old = self.spins[site];
        self.spins[site] = new;
        self.sum_spins += (new.value() - old.value()) as i64;
        self.drawings_done += 1;
        DrawingRecord { site, old, new }
    }

    /// `N` drawings, sites chosen uniformly with replacement.
    pub fn run_round<S, R>(
        &mut self,
        params: &DynamicsParams,
        coupling: &CouplingSpec,
        noise: &mut S,
        rng: &mut R,
    ) -> RoundSummary
    where
        S: NoiseSource,
        R: RngCore + ?Sized,
    {
        self.run_round_with(params, coupling, noise, rng, |_| {})
    }

    /// Like [`run_round`](Self::run_round) but hands every drawing to `observe`.
    pub fn run_round_with<S, R, F>(
        &mut self,
        params: &DynamicsParams,
        coupling: &CouplingSpec,
        noise: &mut S,
        rng: &mut R,
        mut observe: F,
    ) -> RoundSummary
    where
        S: NoiseSource,
        R: RngCore + ?Sized,
        F: FnMut(&DrawingRecord),
    {
        // threshold(lambda) for every possible |sum|, so the hot loop does a
        // lookup instead of a division.
        let n = self.spins.len();
        let table: Vec<f64> = match params.freeze {
            ThresholdFreeze::Drawing => (0..=n)
                .map(|s| params.lambda * (s as f64 / n as f64))
                .collect(),
            ThresholdFreeze::Round => vec![self.threshold(params.lambda); n + 1],
        };
        let mut changes = 0;
        for _ in 0..n {
            let y = table[self.sum_spins.unsigned_abs() as usize];
            let rec = self.drawing_with_threshold(y, coupling, noise, rng);
            changes += rec.changed() as usize;
            observe(&rec);
        }
        RoundSummary {
            magnetization: self.magnetization(),
            changes,
        }
    }
}
