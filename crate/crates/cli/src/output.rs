use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use hsmm_core::diagnostics::{parameter_traces, RateSummary, SummaryRow};
use hsmm_core::sampler::PosteriorDraws;
use serde::Serialize;

use crate::config::Config;
use crate::CliError;

pub fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes the fully resolved configuration next to the run's artifacts.
pub fn write_config(dir: &Path, config: &Config) -> Result<(), CliError> {
    let text = toml::to_string(config).map_err(|e| CliError::Config(e.to_string()))?;
    let mut w = create(&dir.join("config.toml"))?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}

fn fmt(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// One row per saved draw: iteration, log-likelihood, every scalar
/// parameter, then per-state segment counts and realized rate statistics.
pub fn write_draws(path: &Path, draws: &PosteriorDraws, coefficient_names: &[String]) -> Result<(), CliError> {
    let traces = parameter_traces(draws, coefficient_names);
    let m = draws.n_states();
    let mut csv = csv::Writer::from_writer(create(path)?);
    let mut header = vec!["iteration".to_string(), "log_lik".to_string()];
    header.extend(traces.iter().map(|(name, _)| name.clone()));
    for j in 1..=m {
        header.extend(["segments", "phi_mean", "phi_min", "phi_max"].map(|s| format!("{s}_{j}")));
    }
    csv.write_record(&header)?;
    for (i, d) in draws.draws.iter().enumerate() {
        let mut record = vec![d.iteration.to_string(), fmt(d.log_lik)];
        record.extend(traces.iter().map(|(_, x)| fmt(x[i])));
        for j in 0..m {
            record.push(d.segment_counts.get(j).map_or(String::new(), usize::to_string));
            match d.rates.get(j).copied().flatten() {
                Some(r) => record.extend([r.mean, r.min, r.max].map(fmt)),
                None => record.extend(std::iter::repeat_n(String::new(), 3)),
            }
        }
        csv.write_record(&record)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn write_summary(dir: &Path, rows: &[SummaryRow], rates: &[RateSummary]) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(create(&dir.join("summary.csv"))?);
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    if !rates.is_empty() {
        let mut csv = csv::Writer::from_writer(create(&dir.join("rates.csv"))?);
        for row in rates {
            csv.serialize(row)?;
        }
        csv.flush()?;
    }
    Ok(())
}
