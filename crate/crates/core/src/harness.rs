//! Experiment orchestration: replicas, analysis sweep over `R_Q`, and the
//! on-disk bundle.
//!
//! Layout of a bundle directory:
//!
//! ```text
//! replica_000/rounds.csv      round,M
//! replica_000/daily.csv       day,ln_price,return
//! replica_000/resets.csv      round,pre_reset_M
//! interoccurrence_RQ<t>.csv   r,empirical_P,fitted_P
//! fits.csv                    R_Q,Q,q_fit,beta_fit,rms_log_residual,n_events
//! figure_data.csv             R_Q,r,empirical_P,fitted_P,paper_law_P
//! manifest.json
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::analysis::{
    calibrate_q, extract_loss_events_segments, fit_q_exponential_with, q_of_rq, FitOptions,
    LossAnalysis, QExpDistribution, QExpFit,
};
use crate::config::{AnalysisConfig, ExperimentConfig};
use crate::error::{Error, Result};
use crate::lattice::LatticeState;
use crate::market::{
    build_price_series, detect_trap, market_maker_reset, ActivityRecord, MarketSeries,
};
use crate::noise::WmNoise;
use crate::output;

/// Relative tolerance on the achieved `R_Q` after threshold calibration.
pub const RQ_TOLERANCE: f64 = 0.15;

/// RNG for one replica: the run seed selects the key, the replica index the
/// ChaCha stream, so replica streams never overlap.
pub fn replica_rng(seed: u64, replica: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replica as u64);
    rng
}

#[derive(Debug, Clone)]
pub struct ReplicaOutput {
    pub replica: usize,
    pub series: MarketSeries,
    /// `(round, site, d)` for every drawing that changed a spin, when enabled.
    pub activity: Option<Vec<(u64, usize, i8)>>,
}

pub fn simulate_replica(cfg: &ExperimentConfig, replica: usize) -> Result<ReplicaOutput> {
    simulate_replica_with(cfg, replica, |_, _| {})
}

/// Runs one replica, calling `on_round(round, lattice)` after warmup
/// (round 0) and after every recorded round, post trap check.
pub fn simulate_replica_with<F>(cfg: &ExperimentConfig, replica: usize, mut on_round: F) -> Result<ReplicaOutput>
where
    F: FnMut(u64, &LatticeState),
{
    let dynamics = cfg.dynamics();
    let coupling = cfg.coupling();
    let market = cfg.market_params();
    let n_agents = cfg.n_agents();
    let mut rng = replica_rng(cfg.run.seed, replica);
    let mut noise = WmNoise::new(cfg.noise_params());
    let mut lattice = LatticeState::random(cfg.model.n, &mut rng);

    for _ in 0..cfg.run.warmup_rounds {
        lattice.run_round(&dynamics, &coupling, &mut noise, &mut rng);
        if detect_trap(&lattice, market.m_trap) {
            market_maker_reset(&mut lattice, &mut rng, 0);
        }
    }

    let rounds = cfg.run.total_days as u64 * market.tau as u64;
    let mut mags = Vec::with_capacity(rounds as usize + 1);
    let mut resets = Vec::new();
    let mut activity = cfg.market.record_activity.then(Vec::new);
    mags.push(lattice.magnetization());
    on_round(0, &lattice);
    for round in 1..=rounds {
        match activity.as_mut() {
            Some(rows) => {
                lattice.run_round_with(&dynamics, &coupling, &mut noise, &mut rng, |rec| {
                    let a = ActivityRecord::from(rec);
                    if a.d != 0 {
                        rows.push((round, a.site, a.d));
                    }
                });
            }
            None => {
                lattice.run_round(&dynamics, &coupling, &mut noise, &mut rng);
            }
        }
        if detect_trap(&lattice, market.m_trap) {
            resets.push(market_maker_reset(&mut lattice, &mut rng, round));
        }
        mags.push(lattice.magnetization());
        on_round(round, &lattice);
    }

    let mut series = build_price_series(&mags, &market, n_agents, 1.0)
        .map_err(|e| e.at_stage(Some(replica), "price series"))?;
    series.resets = resets;
    Ok(ReplicaOutput {
        replica,
        series,
        activity,
    })
}

/// Why one `R_Q` target produced no fit.
#[derive(Debug, Clone, Serialize)]
pub struct TargetFailure {
    pub stage: &'static str,
    pub message: String,
    pub insufficient_events: bool,
}

#[derive(Debug, Clone)]
pub struct TargetReport {
    pub target_rq: f64,
    pub q_threshold: Option<f64>,
    pub loss: Option<LossAnalysis>,
    pub fit: Option<QExpFit>,
    pub failure: Option<TargetFailure>,
}

impl TargetReport {
    pub fn empirical_rq(&self) -> Option<f64> {
        self.loss.as_ref().map(|l| l.mean_interoccurrence)
    }
}

#[derive(Debug, Clone, Default)]
pub struct AnalysisReport {
    pub targets: Vec<TargetReport>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    pub fn has_insufficient_events(&self) -> bool {
        self.targets
            .iter()
            .any(|t| t.failure.as_ref().is_some_and(|f| f.insufficient_events))
    }
}

fn failure(stage: &'static str, e: &Error) -> TargetFailure {
    TargetFailure {
        stage,
        message: e.to_string(),
        insufficient_events: matches!(e.root(), Error::InsufficientEvents { .. }),
    }
}

/// Calibrates, extracts and fits every configured `R_Q` target over the
/// given return segments. Failures are recorded per target, not raised.
pub fn analyze_returns(segments: &[&[f64]], cfg: &AnalysisConfig) -> AnalysisReport {
    let pooled: Vec<f64> = segments.iter().flat_map(|s| s.iter().copied()).collect();
    let opts = FitOptions {
        min_bin_count: cfg.min_bin_count,
        bin_growth: cfg.bin_growth,
        q0: cfg.q0,
        ..FitOptions::default()
    };
    let mut targets: Vec<f64> = cfg.target_rq.clone();
    targets.sort_by(f64::total_cmp);
    targets.dedup();

    let mut report = AnalysisReport::default();
    for target in targets {
        let mut t = TargetReport {
            target_rq: target,
            q_threshold: None,
            loss: None,
            fit: None,
            failure: None,
        };
        let q = match calibrate_q(&pooled, target) {
            Ok(q) => q,
            Err(e) => {
                report.warnings.push(format!("R_Q={target}: calibration failed: {e}"));
                t.failure = Some(failure("calibrate", &e));
                report.targets.push(t);
                continue;
            }
        };
        t.q_threshold = Some(q);
        let loss = match extract_loss_events_segments(segments, q) {
            Ok(l) => l,
            Err(e) => {
                report.warnings.push(format!("R_Q={target}: {e}"));
                t.failure = Some(failure("extract", &e));
                report.targets.push(t);
                continue;
            }
        };
        let achieved = loss.mean_interoccurrence;
        if ((achieved - target) / target).abs() > RQ_TOLERANCE {
            report.warnings.push(format!(
                "R_Q={target}: achieved mean interoccurrence {achieved:.3} is outside ±{:.0}%",
                RQ_TOLERANCE * 100.0
            ));
        }
        match fit_q_exponential_with(&loss, &opts) {
            Ok(fit) => t.fit = Some(fit),
            Err(e) => {
                report.warnings.push(format!("R_Q={target}: fit failed: {e}"));
                t.failure = Some(failure("fit", &e));
            }
        }
        t.loss = Some(loss);
        report.targets.push(t);
    }
    report
}

/// Per-target summary stored in the manifest.
#[derive(Debug, Clone, Serialize)]
pub struct TargetSummary {
    pub target_rq: f64,
    pub q_threshold: Option<f64>,
    pub empirical_rq: Option<f64>,
    pub n_events: Option<usize>,
    pub q_fit: Option<f64>,
    pub beta_fit: Option<f64>,
    pub rms_log_residual: Option<f64>,
    pub failure: Option<TargetFailure>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub code_version: String,
    pub wall_time_seconds: f64,
    pub replicas: usize,
    pub days_per_replica: usize,
    pub total_resets: usize,
    pub targets: Vec<TargetSummary>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub replicas: Vec<ReplicaOutput>,
    pub report: AnalysisReport,
    pub manifest: Manifest,
}

impl Bundle {
    /// 0 on success, 3 when any target lacked events.
    pub fn exit_code(&self) -> i32 {
        if self.report.has_insufficient_events() {
            3
        } else {
            0
        }
    }
}

fn replica_dir(root: &Path, replica: usize) -> PathBuf {
    root.join(format!("replica_{replica:03}"))
}

fn relative(root: &Path, p: &Path) -> String {
    p.strip_prefix(root).unwrap_or(p).display().to_string()
}

/// Full pipeline: simulate every replica, write per-replica series, analyse
/// the pooled daily returns, and write fits, plot data and the manifest.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Bundle> {
    let started = Instant::now();
    let mut warnings = cfg.validate()?;
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir)?;

    info!(
        "simulating {} replica(s) x {} days x {} rounds on a {}x{} lattice",
        cfg.run.replicas, cfg.run.total_days, cfg.market.tau, cfg.model.n, cfg.model.n
    );
    let run_one = |k: usize| simulate_replica(cfg, k).map_err(|e| e.at_stage(Some(k), "simulate"));
    let replicas: Vec<ReplicaOutput> = if cfg.run.parallel {
        (0..cfg.run.replicas)
            .into_par_iter()
            .map(run_one)
            .collect::<Result<_>>()?
    } else {
        (0..cfg.run.replicas).map(run_one).collect::<Result<_>>()?
    };

    let mut files = Vec::new();
    for rep in &replicas {
        let rdir = replica_dir(&dir, rep.replica);
        fs::create_dir_all(&rdir)?;
        let write = |name: &str| rdir.join(name);
        if cfg.run.write_rounds {
            output::write_rounds(&write("rounds.csv"), &rep.series.magnetization_per_round)?;
            files.push(write("rounds.csv"));
        }
        output::write_daily(&write("daily.csv"), &rep.series)?;
        output::write_resets(&write("resets.csv"), &rep.series.resets)?;
        files.push(write("daily.csv"));
        files.push(write("resets.csv"));
        if let Some(rows) = &rep.activity {
            output::write_activity(&write("activity.csv"), rows)?;
            files.push(write("activity.csv"));
        }
    }

    let segments: Vec<&[f64]> = replicas.iter().map(|r| r.series.returns.as_slice()).collect();
    let report = analyze_returns(&segments, &cfg.analysis);
    files.extend(write_analysis_outputs(&dir, &report, &cfg.analysis)?);
    warnings.extend(report.warnings.iter().cloned());
    for w in &warnings {
        warn!("{w}");
    }

    let manifest = Manifest {
        config: cfg.clone(),
        seed: cfg.run.seed,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: started.elapsed().as_secs_f64(),
        replicas: cfg.run.replicas,
        days_per_replica: cfg.run.total_days,
        total_resets: replicas.iter().map(|r| r.series.resets.len()).sum(),
        targets: summarize(&report),
        warnings,
        files: files.iter().map(|p| relative(&dir, p)).collect(),
    };
    write_manifest(&dir.join("manifest.json"), &manifest)?;
    // Drop the per-round series from memory; it is on disk when requested.
    let replicas = replicas
        .into_iter()
        .map(|mut r| {
            r.series.magnetization_per_round = Vec::new();
            r
        })
        .collect();
    Ok(Bundle {
        dir,
        replicas,
        report,
        manifest,
    })
}

pub fn summarize(report: &AnalysisReport) -> Vec<TargetSummary> {
    report
        .targets
        .iter()
        .map(|t| TargetSummary {
            target_rq: t.target_rq,
            q_threshold: t.q_threshold,
            empirical_rq: t.empirical_rq(),
            n_events: t.loss.as_ref().map(|l| l.n_events()),
            q_fit: t.fit.as_ref().map(|f| f.q),
            beta_fit: t.fit.as_ref().map(|f| f.beta_scale),
            rms_log_residual: t.fit.as_ref().map(|f| f.rms_log_residual),
            failure: t.failure.clone(),
        })
        .collect()
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer_pretty(&mut w, manifest)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes one interoccurrence file per target, `fits.csv` and
/// `figure_data.csv`. Returns the paths written.
pub fn write_analysis_outputs(dir: &Path, report: &AnalysisReport, cfg: &AnalysisConfig) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for t in &report.targets {
        let path = dir.join(format!("interoccurrence_RQ{}.csv", output::rq_label(t.target_rq)));
        let dist = t.fit.as_ref().map(QExpFit::distribution);
        output::write_interoccurrence(&path, t.loss.as_ref(), dist.as_ref())?;
        files.push(path);
    }

    let fits_path = dir.join("fits.csv");
    let mut w = BufWriter::new(fs::File::create(&fits_path)?);
    writeln!(w, "{}", output::FITS_HEADER)?;
    for t in &report.targets {
        if let (Some(loss), Some(fit)) = (&t.loss, &t.fit) {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                loss.mean_interoccurrence,
                loss.q_threshold,
                fit.q,
                fit.beta_scale,
                fit.rms_log_residual,
                loss.n_events()
            )?;
        }
    }
    w.flush()?;
    files.push(fits_path);

    files.push(emit_plot_data(dir, report, cfg)?);
    Ok(files)
}

/// Merged plot-ready table, grouped by `R_Q` then `r`, both ascending.
/// `paper_law_P` is the discrete q-exponential with `q = q(R_Q)` and the
/// plateau rate. Targets without a fit are emitted with empty fitted
/// columns.
pub fn emit_plot_data(dir: &Path, report: &AnalysisReport, cfg: &AnalysisConfig) -> Result<PathBuf> {
    let path = dir.join("figure_data.csv");
    let mut w = BufWriter::new(fs::File::create(&path)?);
    writeln!(w, "{}", output::FIGURE_HEADER)?;
    let mut targets: Vec<&TargetReport> = report.targets.iter().collect();
    targets.sort_by(|a, b| a.target_rq.total_cmp(&b.target_rq));
    for t in targets {
        let Some(loss) = &t.loss else {
            warn!("R_Q={}: no loss events, omitted from figure data", t.target_rq);
            continue;
        };
        let fitted = t.fit.as_ref().map(QExpFit::distribution);
        let max_r = loss.pq.last().map(|p| p.0).unwrap_or(1);
        let r_max = t.fit.as_ref().map(|f| f.r_max).unwrap_or(max_r * 10);
        let law = q_of_rq(t.target_rq, cfg.q0)
            .and_then(|q| QExpDistribution::new(q, cfg.beta_plateau, r_max))
            .ok();
        if fitted.is_none() {
            warn!("R_Q={}: no fit, fitted_P left empty", t.target_rq);
        }
        for &(r, p) in &loss.pq {
            writeln!(
                w,
                "{},{},{},{},{}",
                output::rq_label(t.target_rq),
                r,
                p,
                output::opt(fitted.as_ref().map(|d| d.pmf(r))),
                output::opt(law.as_ref().map(|d| d.pmf(r))),
            )?;
        }
    }
    w.flush()?;
    Ok(path)
}

/// Finds `daily.csv` files under a bundle directory (or accepts a single file).
pub fn find_daily_files(input: &Path) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.to_path_buf()]);
    }
    let mut found = Vec::new();
    let direct = input.join("daily.csv");
    if direct.is_file() {
        found.push(direct);
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    subdirs.sort();
    for d in subdirs {
        let f = d.join("daily.csv");
        if f.is_file() {
            found.push(f);
        }
    }
    if found.is_empty() {
        return Err(Error::Input {
            path: input.display().to_string(),
            reason: "no daily.csv found".into(),
        });
    }
    Ok(found)
}
