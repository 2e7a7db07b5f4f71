//! CSV files written and read by the harness.
//!
//! Reals are written in Rust's shortest round-trip form, so every value
//! parses back to the identical `f64`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::analysis::{LossAnalysis, QExpDistribution};
use crate::error::{Error, Result};
use crate::market::{MarketSeries, ResetRecord};

pub const ROUNDS_HEADER: &str = "round,M";
pub const DAILY_HEADER: &str = "day,ln_price,return";
pub const RESETS_HEADER: &str = "round,pre_reset_M";
pub const ACTIVITY_HEADER: &str = "round,site,d";
pub const INTEROCCURRENCE_HEADER: &str = "r,empirical_P,fitted_P";
pub const FITS_HEADER: &str = "R_Q,Q,q_fit,beta_fit,rms_log_residual,n_events";
pub const FIGURE_HEADER: &str = "R_Q,r,empirical_P,fitted_P,paper_law_P";

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::with_capacity(1 << 20, File::create(path)?))
}

/// Formats an optional real, leaving the field empty when absent.
pub fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// File-name label of an `R_Q` target, e.g. `2`, `70` or `12.5`.
pub fn rq_label(rq: f64) -> String {
    rq.to_string()
}

pub fn write_rounds(path: &Path, mags: &[f64]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{ROUNDS_HEADER}")?;
    for (k, m) in mags.iter().enumerate() {
        writeln!(w, "{k},{m}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_daily(path: &Path, series: &MarketSeries) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{DAILY_HEADER}")?;
    for (k, s) in series.returns.iter().enumerate() {
        writeln!(w, "{},{},{}", k + 1, series.log_price[k + 1], s)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_resets(path: &Path, resets: &[ResetRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{RESETS_HEADER}")?;
    for r in resets {
        writeln!(w, "{},{}", r.round, r.pre_reset_m)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_activity(path: &Path, rows: &[(u64, usize, i8)]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{ACTIVITY_HEADER}")?;
    for (round, site, d) in rows {
        writeln!(w, "{round},{site},{d}")?;
    }
    w.flush()?;
    Ok(())
}

/// One row per observed `r`: empirical mass and, when available, the fitted mass.
pub fn write_interoccurrence(
    path: &Path,
    loss: Option<&LossAnalysis>,
    fitted: Option<&QExpDistribution>,
) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "{INTEROCCURRENCE_HEADER}")?;
    if let Some(loss) = loss {
        for &(r, p) in &loss.pq {
            writeln!(w, "{r},{p},{}", opt(fitted.map(|d| d.pmf(r))))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads the `return` column of a `daily.csv`.
pub fn read_daily_returns(path: &Path) -> Result<Vec<f64>> {
    let bad = |reason: String| Error::Input {
        path: path.display().to_string(),
        reason,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != DAILY_HEADER {
        return Err(bad(format!("expected header `{DAILY_HEADER}`, got `{header}`")));
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let field = line
            .split(',')
            .nth(2)
            .ok_or_else(|| bad(format!("line {}: missing return column", k + 2)))?;
        let v: f64 = field
            .trim()
            .parse()
            .map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
        out.push(v);
    }
    Ok(out)
}

/// Reads interoccurrence times for fitting.
///
/// Accepts either a single `r` column listing one sample per line, or the
/// `r,empirical_P,...` layout written by the harness, in which case the
/// sample count `n_samples` is needed to turn masses back into counts.
pub fn read_inter_times(path: &Path, n_samples: Option<usize>) -> Result<Vec<u64>> {
    let bad = |reason: String| Error::Input {
        path: path.display().to_string(),
        reason,
    };
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    let cols: Vec<&str> = header.trim().split(',').map(str::trim).collect();
    let mass_layout = match cols.as_slice() {
        ["r"] => false,
        ["r", "empirical_P", ..] => true,
        _ => return Err(bad(format!("unrecognized header `{header}`"))),
    };
    let total = match (mass_layout, n_samples) {
        (true, None) => {
            return Err(bad("mass layout needs the number of samples (--n-samples)".into()))
        }
        (true, Some(n)) => n as f64,
        _ => 0.0,
    };
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split(',').map(str::trim);
        let r: u64 = fields
            .next()
            .unwrap_or("")
            .parse()
            .map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
        if r == 0 {
            return Err(bad(format!("line {}: interoccurrence time must be >= 1", k + 2)));
        }
        if mass_layout {
            let p: f64 = fields
                .next()
                .unwrap_or("")
                .parse()
                .map_err(|e| bad(format!("line {}: {e}", k + 2)))?;
            let c = (p * total).round() as usize;
            out.extend(std::iter::repeat(r).take(c));
        } else {
            out.push(r);
        }
    }
    Ok(out)
}
