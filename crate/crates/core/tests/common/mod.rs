//! Independent reference implementations used as test oracles.
#![allow(dead_code)]

use rand::Rng;

/// Straight-from-the-equations lattice evaluator for tiny lattices.
///
/// Couplings are a dense `N x N` matrix built by walking the four periodic
/// lattice directions, so on a 2x2 torus a neighbour reached twice carries
/// weight `2J`.
pub struct ReferenceLattice {
    pub n: usize,
    pub spins: Vec<i32>,
    pub coupling: Vec<Vec<f64>>,
    pub lambda: f64,
}

impl ReferenceLattice {
    pub fn new(n: usize, spins: Vec<i32>, j: f64, lambda: f64) -> Self {
        let size = n * n;
        let mut coupling = vec![vec![0.0; size]; size];
        for r in 0..n as i64 {
            for c in 0..n as i64 {
                let i = (r * n as i64 + c) as usize;
                for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                    let rr = (r + dr).rem_euclid(n as i64);
                    let cc = (c + dc).rem_euclid(n as i64);
                    coupling[i][(rr * n as i64 + cc) as usize] += j;
                }
            }
        }
        Self {
            n,
            spins,
            coupling,
            lambda,
        }
    }

    pub fn magnetization(&self) -> f64 {
        self.spins.iter().sum::<i32>() as f64 / self.spins.len() as f64
    }

    pub fn impact(&self, i: usize) -> f64 {
        self.coupling[i]
            .iter()
            .zip(&self.spins)
            .map(|(j, &s)| j * s as f64)
            .sum()
    }

    pub fn sgn(x: f64, y: f64) -> i32 {
        if x < -y {
            -1
        } else if -y <= x && x < y {
            0
        } else {
            1
        }
    }

    /// Updates site `i` with noise `eps`; returns the new spin.
    pub fn draw(&mut self, i: usize, eps: f64) -> i32 {
        let y = self.lambda * self.magnetization().abs();
        let s = Self::sgn(self.impact(i) + eps, y);
        self.spins[i] = s;
        s
    }
}

/// `[1 + (q-1) beta r]^(-1/(q-1))`, evaluated with `powf`.
pub fn q_kernel(r: f64, q: f64, beta: f64) -> f64 {
    if q == 1.0 {
        (-beta * r).exp()
    } else {
        (1.0 + (q - 1.0) * beta * r).powf(-1.0 / (q - 1.0))
    }
}

/// Exact sampler for the discrete law `P(r) ∝ kernel(r)`, `r = 1, 2, ...`
/// (requires `q < 2` so the tail is summable).
///
/// Masses up to `table_len` are tabulated by direct summation; the rest of the
/// tail is approximated by the integral from `table_len + 1/2` and sampled by
/// inverting it.
pub struct DiscreteQExpSampler {
    q: f64,
    beta: f64,
    cdf: Vec<f64>,
    tail_mass: f64,
    total: f64,
}

impl DiscreteQExpSampler {
    pub fn new(q: f64, beta: f64, table_len: usize) -> Self {
        assert!(q > 1.0 && q < 2.0);
        let mut cdf = Vec::with_capacity(table_len);
        let mut acc = 0.0;
        for r in 1..=table_len {
            acc += q_kernel(r as f64, q, beta);
            cdf.push(acc);
        }
        let a = q - 1.0;
        let x0 = table_len as f64 + 0.5;
        let p = 1.0 - 1.0 / a;
        let tail_mass = (1.0 + a * beta * x0).powf(p) / ((1.0 - a) * beta);
        Self {
            q,
            beta,
            total: acc + tail_mass,
            cdf,
            tail_mass,
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> u64 {
        let u = rng.random::<f64>() * self.total;
        let table_total = *self.cdf.last().unwrap();
        if u < table_total {
            return self.cdf.partition_point(|&c| c <= u) as u64 + 1;
        }
        // Invert the integral tail: mass beyond x is base(x)^p / ((1-a) beta).
        let a = self.q - 1.0;
        let p = 1.0 - 1.0 / a;
        let remaining = (self.total - u).max(f64::MIN_POSITIVE);
        let base = (remaining * (1.0 - a) * self.beta).powf(1.0 / p);
        let x = (base - 1.0) / (a * self.beta);
        x.round().max(self.cdf.len() as f64 + 1.0) as u64
    }
}

/// Quantile of the standard normal (Acklam's rational approximation,
/// relative error below 1.2e-9).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e1,
        2.209460984245205e2,
        -2.759285104469687e2,
        1.383577518672690e2,
        -3.066479806614716e1,
        2.506628277459239,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e1,
        1.615858368580409e2,
        -1.556989798598866e2,
        6.680131188771972e1,
        -1.328068155288572e1,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-3,
        -3.223964580411365e-1,
        -2.400758277161838,
        -2.549732539343734,
        4.374664141464968,
        2.938163982698783,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-3,
        3.224671290700398e-1,
        2.445134137142996,
        3.754408661907416,
    ];
    let low = 0.02425;
    if p < low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}
