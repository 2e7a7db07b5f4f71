//! Experiment configuration.
//!
//! Config files are flat `section.key = value` lines (TOML dotted keys):
//!
//! ```text
//! model.lambda = 2.0
//! market.tau = 1000
//! run.seed = 7
//! analysis.target_rq = [2, 5, 10, 30, 70]
//! ```
//!
//! Missing keys take their defaults, which reproduce the reference setup:
//! a 32x32 lattice, `J = 1`, `lambda = 2`, noise `(K, b, b0) = (5, 2, 0.2)`,
//! 1000 rounds per day.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{ConstraintViolation, Error, Result};
use crate::lattice::{CouplingSpec, DynamicsParams, ThresholdFreeze};
use crate::market::MarketParams;
use crate::noise::WmNoiseParams;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "SOCIMPACT_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub j: f64,
    pub lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n: 32,
            j: 1.0,
            lambda: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseConfig {
    pub k: f64,
    pub b: f64,
    pub b0: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        let p = WmNoiseParams::default();
        Self {
            k: p.k,
            b: p.b,
            b0: p.b0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketConfig {
    /// Market depth; `None` means the number of agents.
    pub depth: Option<f64>,
    pub tau: usize,
    pub m_trap: f64,
    pub threshold_freeze: ThresholdFreeze,
    /// Write per-drawing opinion changes to `activity.csv`.
    pub record_activity: bool,
}

impl Default for MarketConfig {
    fn default() -> Self {
        Self {
            depth: None,
            tau: 1000,
            m_trap: 1.0,
            threshold_freeze: ThresholdFreeze::Drawing,
            record_activity: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub warmup_rounds: usize,
    /// Trading days per replica.
    pub total_days: usize,
    pub seed: u64,
    pub replicas: usize,
    pub parallel: bool,
    pub write_rounds: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            warmup_rounds: 100,
            total_days: 20_000,
            seed: 1,
            replicas: 1,
            parallel: true,
            write_rounds: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisConfig {
    pub target_rq: Vec<f64>,
    pub q0: f64,
    /// Large-R_Q plateau of the q-exponential rate, used for reference curves.
    pub beta_plateau: f64,
    pub min_bin_count: usize,
    pub bin_growth: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            target_rq: vec![2.0, 5.0, 10.0, 30.0, 70.0],
            q0: 0.17,
            beta_plateau: 0.20,
            min_bin_count: 5,
            bin_growth: 1.25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub noise: NoiseConfig,
    pub market: MarketConfig,
    pub run: RunConfig,
    pub analysis: AnalysisConfig,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig::default(),
            noise: NoiseConfig::default(),
            market: MarketConfig::default(),
            run: RunConfig::default(),
            analysis: AnalysisConfig::default(),
            output_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn n_agents(&self) -> usize {
        self.model.n * self.model.n
    }

    pub fn noise_params(&self) -> WmNoiseParams {
        WmNoiseParams {
            k: self.noise.k,
            b: self.noise.b,
            b0: self.noise.b0,
        }
    }

    pub fn dynamics(&self) -> DynamicsParams {
        DynamicsParams {
            lambda: self.model.lambda,
            freeze: self.market.threshold_freeze,
        }
    }

    pub fn coupling(&self) -> CouplingSpec {
        CouplingSpec { j: self.model.j }
    }

    pub fn market_params(&self) -> MarketParams {
        MarketParams {
            depth: self.market.depth.unwrap_or(self.n_agents() as f64),
            tau: self.market.tau,
            m_trap: self.market.m_trap,
        }
    }

    /// Parses the dotted key-value format.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    /// Parses either a bare JSON config or a run manifest carrying one
    /// under `"config"`.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        let inner = match value.get("config") {
            Some(c) => c.clone(),
            None => value,
        };
        serde_json::from_value(inner).map_err(|e| Error::ConfigParse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks every constraint. Returns non-fatal warnings on success and
    /// every violation at once on failure.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut v: Vec<ConstraintViolation> = Vec::new();
        let mut push = |parameter: &str, constraint: &str, value: String| {
            v.push(ConstraintViolation {
                parameter: parameter.into(),
                constraint: constraint.into(),
                value,
            })
        };
        if self.model.n < 1 {
            push("model.n", "n >= 1", self.model.n.to_string());
        }
        if !(self.model.j.is_finite() && self.model.j > 0.0) {
            push("model.j", "J > 0", self.model.j.to_string());
        }
        if !(self.model.lambda.is_finite() && self.model.lambda > 0.0) {
            push("model.lambda", "lambda > 0", self.model.lambda.to_string());
        }
        if self.run.total_days < 2 {
            push("run.total_days", "total_days >= 2", self.run.total_days.to_string());
        }
        if self.run.replicas < 1 {
            push("run.replicas", "replicas >= 1", self.run.replicas.to_string());
        }
        for &t in &self.analysis.target_rq {
            if !(t.is_finite() && t >= 1.0) {
                push("analysis.target_rq", "every target R_Q >= 1", t.to_string());
            }
        }
        if !self.analysis.q0.is_finite() {
            push("analysis.q0", "q0 finite", self.analysis.q0.to_string());
        }
        if !(self.analysis.beta_plateau.is_finite() && self.analysis.beta_plateau > 0.0) {
            push("analysis.beta_plateau", "beta_plateau > 0", self.analysis.beta_plateau.to_string());
        }
        if self.analysis.min_bin_count < 1 {
            push("analysis.min_bin_count", "min_bin_count >= 1", self.analysis.min_bin_count.to_string());
        }
        if !(self.analysis.bin_growth > 1.0) {
            push("analysis.bin_growth", "bin_growth > 1", self.analysis.bin_growth.to_string());
        }
        v.extend(self.noise_params().violations());
        if self.model.n >= 1 {
            v.extend(self.market_params().violations());
        }
        if !v.is_empty() {
            return Err(Error::Constraint(v));
        }

        let mut warnings = Vec::new();
        let exponent = self.noise_params().pareto_exponent();
        if exponent <= 2.0 {
            warnings.push(format!(
                "noise Pareto exponent ln K / ln b = {exponent:.4} <= 2: infinite-variance regime"
            ));
        }
        Ok(warnings)
    }
}

/// CLI-level overrides applied on top of a loaded config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub n: Option<usize>,
    pub lambda: Option<f64>,
    pub tau: Option<usize>,
    pub seed: Option<u64>,
    pub replicas: Option<usize>,
    pub total_days: Option<usize>,
    pub warmup_rounds: Option<usize>,
    pub sequential: bool,
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        if let Some(v) = self.n {
            cfg.model.n = v;
        }
        if let Some(v) = self.lambda {
            cfg.model.lambda = v;
        }
        if let Some(v) = self.tau {
            cfg.market.tau = v;
        }
        if let Some(v) = self.seed {
            cfg.run.seed = v;
        }
        if let Some(v) = self.replicas {
            cfg.run.replicas = v;
        }
        if let Some(v) = self.total_days {
            cfg.run.total_days = v;
        }
        if let Some(v) = self.warmup_rounds {
            cfg.run.warmup_rounds = v;
        }
        if self.sequential {
            cfg.run.parallel = false;
        }
        if let Some(v) = &self.out {
            cfg.output_dir = v.clone();
        }
    }
}

/// Loads a config (defaults when `path` is `None`), applies the output-dir
/// environment override and then `overrides`, and validates the result.
pub fn load_config(path: Option<&Path>, overrides: &Overrides) -> Result<(ExperimentConfig, Vec<String>)> {
    let mut cfg = match path {
        None => ExperimentConfig::default(),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            if p.extension().is_some_and(|e| e == "json") {
                ExperimentConfig::from_json_str(&text)?
            } else {
                ExperimentConfig::from_toml_str(&text)?
            }
        }
    };
    if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
        cfg.output_dir = PathBuf::from(dir);
    }
    overrides.apply(&mut cfg);
    let warnings = cfg.validate()?;
    Ok((cfg, warnings))
}
