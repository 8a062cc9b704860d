use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hsmm_core::decoding::{default_d_max, viterbi_decode};
use hsmm_core::diagnostics::{
    chains_mpsrf, grouped_autocorrelation, segment_autocorrelation, summarize, summarize_traces, RateSummary,
};
use hsmm_core::ingest::{engineer_covariates, load_csv, write_csv};
use hsmm_core::model::DesignSpec;
use hsmm_core::rng::{derive_seed, ChainRng};
use hsmm_core::sampler::{run_chain_from, McmcConfig, PosteriorDraws, Progress};
use hsmm_core::simulation::{
    recommend_rate, run_coverage_experiment, simulate_covariate_realization, simulate_realization, CoverageRow,
    CoverageTable, Recommendation, SimScenario,
};
use hsmm_core::{HsmmError, Model, ModelParams, Segmentation, TimeSeriesData};
use rand::SeedableRng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{AutocorrelationMethod, Config, DataSection, ScenarioKind};
use crate::output::{create, write_config, write_draws, write_json, write_summary};
use crate::CliError;

/// Threshold below which the multivariate scale reduction is read as converged.
const MPSRF_THRESHOLD: f64 = 1.2;

fn thread_pool(threads: usize) -> Result<rayon::ThreadPool, CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start {threads} worker threads: {e}")))
}

fn prepare_out(config: &Config) -> Result<PathBuf, CliError> {
    std::fs::create_dir_all(&config.out)?;
    write_config(&config.out, config)?;
    Ok(config.out.clone())
}

fn load_data(section: &DataSection) -> Result<(TimeSeriesData, DesignSpec), CliError> {
    let raw = load_csv(&section.path, &section.schema)?;
    Ok(engineer_covariates(&raw, &section.covariates)?)
}

fn write_states(path: &Path, data: &TimeSeriesData, seg: &Segmentation) -> Result<(), CliError> {
    let mut csv = csv::Writer::from_writer(create(path)?);
    csv.write_record(["time", "y", "state"])?;
    for (t, s) in seg.per_time().into_iter().enumerate() {
        csv.write_record([data.time[t].to_string(), data.y[t].to_string(), (s + 1).to_string()])?;
    }
    csv.flush()?;
    Ok(())
}

fn read_states(path: &Path, data: &TimeSeriesData) -> Result<Segmentation, CliError> {
    let mut csv = csv::Reader::from_path(path)?;
    let headers = csv.headers()?.clone();
    let col = headers.iter().position(|h| h == "state").ok_or_else(|| HsmmError::Schema("state".into()))?;
    let mut states = Vec::with_capacity(data.len());
    for (i, record) in csv.records().enumerate() {
        let record = record?;
        let cell = record.get(col).unwrap_or("");
        let state = cell.parse::<usize>().ok().filter(|s| *s >= 1).ok_or_else(|| HsmmError::Parse {
            row: i + 1,
            column: "state".into(),
            message: format!("`{cell}` is not a 1-based state label"),
        })?;
        states.push(state - 1);
    }
    if states.len() != data.len() {
        return Err(HsmmError::Data {
            row: states.len(),
            message: format!("states file has {} rows, data has {}", states.len(), data.len()),
        }
        .into());
    }
    Ok(Segmentation::from_state_sequence(&states, &data.session)?)
}

pub fn simulate(config: &Config) -> Result<(), CliError> {
    let out = prepare_out(config)?;
    let mut rng = ChainRng::seed_from_u64(config.seed);
    let section = &config.simulate;
    let (data, seg, params) = match section.scenario {
        ScenarioKind::Segments => {
            let scenario = section.segments();
            let (data, seg) = simulate_realization(&scenario, &mut rng)?;
            (data, seg, scenario.params)
        }
        ScenarioKind::Covariate => {
            let scenario = section.covariate();
            let (data, seg, spec) = simulate_covariate_realization(&scenario, &mut rng)?;
            write_json(&out.join("design_spec.json"), &spec)?;
            (data, seg, scenario.params)
        }
    };
    let schema = write_csv(create(&out.join("data.csv"))?, &data)?;
    write_json(&out.join("schema.json"), &schema)?;
    write_states(&out.join("states.csv"), &data, &seg)?;
    write_json(&out.join("truth.json"), &params)?;
    println!("{}", out.join("data.csv").display());
    Ok(())
}

#[derive(Serialize)]
struct ChainDiagnostics {
    chain: usize,
    seed: u64,
    acceptance: Vec<f64>,
    kappa: Vec<f64>,
    clamp_events: usize,
    max_truncated_mass: f64,
    d_max: usize,
}

#[derive(Serialize)]
struct MpsrfEntry {
    mpsrf: Option<f64>,
    below_threshold: Option<bool>,
    threshold: f64,
    error: Option<String>,
}

fn pooled(chains: &[PosteriorDraws]) -> PosteriorDraws {
    let mut all = chains[0].clone();
    all.draws = chains.iter().flat_map(|c| c.draws.iter().cloned()).collect();
    all
}

fn posterior_mean(draws: &PosteriorDraws) -> ModelParams {
    let n = draws.draws.len() as f64;
    let mean = |f: &dyn Fn(&hsmm_core::sampler::Draw) -> &Vec<f64>, len: usize| -> Vec<f64> {
        (0..len).map(|k| draws.draws.iter().map(|d| f(d)[k]).sum::<f64>() / n).collect()
    };
    let mean_rows = |f: &dyn Fn(&hsmm_core::sampler::Draw) -> &Vec<Vec<f64>>| -> Vec<Vec<f64>> {
        let first = f(&draws.draws[0]);
        (0..first.len()).map(|r| mean(&|d| &f(d)[r], first[r].len())).collect()
    };
    let m = draws.n_states();
    ModelParams {
        mu: mean(&|d| &d.mu, m),
        sigma2: mean(&|d| &d.sigma2, m),
        rho: mean_rows(&|d| &d.rho),
        p: mean_rows(&|d| &d.p),
        b: mean_rows(&|d| &d.b),
    }
}

pub fn fit(config: &Config) -> Result<(), CliError> {
    let section = config.data()?;
    if config.chains == 0 || config.model.states.is_empty() {
        return Err(CliError::Config("need at least one chain and one state count".into()));
    }
    config.mcmc.validate()?;
    let (data, spec) = load_data(section)?;
    let out = prepare_out(config)?;
    write_json(&out.join("design_spec.json"), &spec)?;
    let names = spec.coefficient_names();
    let pool = thread_pool(config.threads)?;
    let mut report = BTreeMap::new();
    for &m in &config.model.states {
        let model = Model::new(data.clone(), spec.clone())?.with_censoring(config.model.censor_last);
        let seeds: Vec<u64> = (0..config.chains).map(|c| derive_seed(derive_seed(config.seed, m as u64), c as u64)).collect();
        let chains = pool.install(|| {
            seeds
                .par_iter()
                .enumerate()
                .map(|(c, &seed)| {
                    let mcmc = McmcConfig { seed, ..config.mcmc.clone() };
                    let mut progress = |p: &Progress| {
                        println!(
                            "M={m} chain={} iteration={} log_lik={:.4} acceptance={:?}",
                            c + 1,
                            p.iteration,
                            p.log_lik,
                            p.acceptance
                        )
                    };
                    run_chain_from(&model, m, &config.priors, &mcmc, None, &mut progress)
                })
                .collect::<Result<Vec<_>, _>>()
        })?;

        let dir = out.join(format!("M{m}"));
        let mut diagnostics = Vec::with_capacity(chains.len());
        for (c, chain) in chains.iter().enumerate() {
            write_draws(&dir.join(format!("draws_chain{}.csv", c + 1)), chain, &names)?;
            diagnostics.push(ChainDiagnostics {
                chain: c + 1,
                seed: seeds[c],
                acceptance: chain.acceptance.clone(),
                kappa: chain.kappa.clone(),
                clamp_events: chain.clamp_events,
                max_truncated_mass: chain.max_truncated_mass,
                d_max: chain.d_max,
            });
        }
        write_json(&dir.join("diagnostics.json"), &diagnostics)?;
        let all = pooled(&chains);
        if all.draws.is_empty() {
            return Err(CliError::Config("no draws were saved; increase n_iter or reduce n_adapt / thin".into()));
        }
        let summary = summarize(&all, &names, config.model.level)?;
        write_summary(&dir, &summary.parameters, &summary.rates)?;
        write_json(&dir.join("summary.json"), &summary)?;
        write_json(&dir.join("posterior_mean.json"), &posterior_mean(&all))?;

        let entry = match chains_mpsrf(&chains) {
            Ok(r) => MpsrfEntry { mpsrf: Some(r), below_threshold: Some(r <= MPSRF_THRESHOLD), threshold: MPSRF_THRESHOLD, error: None },
            Err(e) => MpsrfEntry { mpsrf: None, below_threshold: None, threshold: MPSRF_THRESHOLD, error: Some(e.to_string()) },
        };
        match entry.mpsrf {
            Some(r) => println!("M={m} mpsrf={r:.4}{}", if r <= MPSRF_THRESHOLD { " (<= 1.2)" } else { "" }),
            None => println!("M={m} mpsrf unavailable"),
        }
        report.insert(m.to_string(), entry);
        println!("{}", dir.display());
    }
    write_json(&out.join("mpsrf.json"), &report)?;
    println!("{}", out.join("mpsrf.json").display());
    Ok(())
}

#[derive(Serialize)]
struct DecodeReport {
    log_score: f64,
    n_segments: usize,
    d_max: usize,
    clamp_events: usize,
}

pub fn decode(config: &Config) -> Result<(), CliError> {
    let section = config.data()?;
    let decode = config.decode.as_ref().ok_or_else(|| CliError::Config("missing field `decode`".into()))?;
    let (data, spec) = load_data(section)?;
    let params: ModelParams = serde_json::from_reader(std::fs::File::open(&decode.params)?)?;
    let out = prepare_out(config)?;
    let d_max = decode.d_max.unwrap_or_else(|| default_d_max(&data));
    let model = Model::new(data, spec)?.with_censoring(config.model.censor_last);
    let decoded = viterbi_decode(&model, &params, d_max)?;
    write_states(&out.join("states.csv"), model.data(), &decoded.segmentation)?;
    write_json(
        &out.join("decode.json"),
        &DecodeReport {
            log_score: decoded.log_score,
            n_segments: decoded.segmentation.n_segments(),
            d_max,
            clamp_events: decoded.clamp_events,
        },
    )?;
    println!("{}", out.join("states.csv").display());
    Ok(())
}

pub fn coverage(config: &Config) -> Result<(), CliError> {
    let section = &config.coverage;
    let out = prepare_out(config)?;
    let pool = thread_pool(config.threads)?;
    let mut rows: Vec<CoverageRow> = Vec::new();
    let mut cell = 0u64;
    for &m in &section.n_states {
        for &psi in &section.psis {
            let mut scenario = SimScenario::standard(m, psi, section.n_target);
            scenario.carryover = section.carryover;
            scenario.n_realizations = section.n_realizations;
            let mut settings = section.settings.clone();
            settings.seed = derive_seed(config.seed, cell);
            cell += 1;
            let cell_rows = pool.install(|| run_coverage_experiment(&scenario, &settings))?;
            for r in &cell_rows {
                println!("M={} psi={} rate={} coverage_mu={:.3}", r.m, r.psi, r.rate, r.coverage_mu);
            }
            rows.extend(cell_rows);
        }
    }
    let path = out.join("coverage.csv");
    let mut csv = csv::Writer::from_writer(create(&path)?);
    for r in &rows {
        csv.serialize(r)?;
    }
    csv.flush()?;
    println!("{}", path.display());
    Ok(())
}

#[derive(Serialize)]
struct DiagnoseReport {
    method: AutocorrelationMethod,
    autocorrelation: f64,
    segment_autocorrelation: Option<f64>,
    group_sizes: Option<[usize; 2]>,
    table_states: usize,
    table_source: String,
    recommended_rate: f64,
    warning: Option<String>,
}

pub fn diagnose(config: &Config) -> Result<(), CliError> {
    let section = config.data()?;
    let diag = &config.diagnose;
    let (data, _) = load_data(section)?;
    let segment_r = diag
        .states
        .as_ref()
        .map(|p| -> Result<f64, CliError> { Ok(segment_autocorrelation(&data.y, &read_states(p, &data)?)?) })
        .transpose()?;
    let [lo, hi] = diag.group_sizes;
    let autocorrelation = match diag.method {
        AutocorrelationMethod::Grouped => {
            if lo < 3 || hi < lo {
                return Err(CliError::Config(format!("group sizes must satisfy 3 <= low <= high, got [{lo}, {hi}]")));
            }
            grouped_autocorrelation(&data.y, lo..=hi)?
        }
        AutocorrelationMethod::Segments => segment_r
            .ok_or_else(|| CliError::Config("the segments method needs `diagnose.states`".into()))?,
    };
    let (table, table_source) = match &diag.table {
        Some(path) => {
            let rows = csv::Reader::from_path(path)?.deserialize().collect::<Result<Vec<CoverageRow>, _>>()?;
            (CoverageTable::from_rows(&rows, diag.n_states)?, path.display().to_string())
        }
        None => (CoverageTable::bundled(diag.n_states), "bundled".to_string()),
    };
    let Recommendation { rate, warning } = recommend_rate(autocorrelation.max(0.0), &table)?;
    let out = prepare_out(config)?;
    let path = out.join("diagnose.json");
    write_json(
        &path,
        &DiagnoseReport {
            method: diag.method,
            autocorrelation,
            segment_autocorrelation: segment_r,
            group_sizes: matches!(diag.method, AutocorrelationMethod::Grouped).then_some(diag.group_sizes),
            table_states: table.m,
            table_source,
            recommended_rate: rate,
            warning,
        },
    )?;
    println!("autocorrelation={autocorrelation:.4} recommended_rate={rate:.4}");
    println!("{}", path.display());
    Ok(())
}

/// Re-summarizes the draw files of a previous fit at a new interval level.
pub fn summarize_fit(config: &Config) -> Result<(), CliError> {
    let section = config.summarize.as_ref().ok_or_else(|| CliError::Config("missing field `summarize`".into()))?;
    let out = prepare_out(config)?;
    let mut fits: Vec<(usize, PathBuf)> = std::fs::read_dir(&section.fit)?
        .filter_map(|e| e.ok())
        .filter_map(|e| {
            let name = e.file_name().into_string().ok()?;
            let m = name.strip_prefix('M')?.parse().ok()?;
            e.path().is_dir().then_some((m, e.path()))
        })
        .collect();
    fits.sort();
    if fits.is_empty() {
        return Err(CliError::Config(format!("no M* directories under {}", section.fit.display())));
    }
    let mut all = BTreeMap::new();
    for (m, dir) in fits {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("draws_chain")))
            .collect();
        files.sort();
        let mut columns: Vec<(String, Vec<f64>)> = Vec::new();
        for file in &files {
            let mut csv = csv::Reader::from_path(file)?;
            let headers: Vec<String> = csv.headers()?.iter().map(str::to_string).collect();
            if columns.is_empty() {
                columns = headers.iter().map(|h| (h.clone(), Vec::new())).collect();
            }
            for (i, record) in csv.records().enumerate() {
                for (k, cell) in record?.iter().enumerate() {
                    let v = if cell.is_empty() {
                        f64::NAN
                    } else {
                        cell.parse().map_err(|_| HsmmError::Parse {
                            row: i + 1,
                            column: headers[k].clone(),
                            message: format!("`{cell}` is not a number"),
                        })?
                    };
                    columns[k].1.push(v);
                }
            }
        }
        let is_param = |name: &str| {
            !(name == "iteration" || name == "log_lik" || name.starts_with("segments_") || name.starts_with("phi_"))
        };
        let traces: Vec<(String, Vec<f64>)> = columns.iter().filter(|(n, _)| is_param(n)).cloned().collect();
        let parameters = summarize_traces(&traces, section.level)?;
        let column = |name: String| columns.iter().find(|(n, _)| *n == name).map(|(_, x)| x.as_slice()).unwrap_or(&[]);
        let finite = |x: &[f64]| x.iter().copied().filter(|v| v.is_finite()).collect::<Vec<_>>();
        let rates: Vec<RateSummary> = (1..=m)
            .filter_map(|j| {
                let segments = finite(column(format!("segments_{j}")));
                if segments.is_empty() {
                    return None;
                }
                let means = finite(column(format!("phi_mean_{j}")));
                let avg = |x: &[f64]| if x.is_empty() { f64::NAN } else { x.iter().sum::<f64>() / x.len() as f64 };
                Some(RateSummary {
                    state: j,
                    mean_segments: avg(&segments),
                    phi_mean: avg(&means),
                    phi_min: finite(column(format!("phi_min_{j}"))).into_iter().fold(f64::NAN, f64::min),
                    phi_max: finite(column(format!("phi_max_{j}"))).into_iter().fold(f64::NAN, f64::max),
                })
            })
            .collect();
        let target = out.join(format!("M{m}"));
        write_summary(&target, &parameters, &rates)?;
        all.insert(m.to_string(), hsmm_core::diagnostics::Summary { level: section.level, parameters, rates });
        println!("{}", target.display());
    }
    write_json(&out.join("summary.json"), &all)?;
    Ok(())
}
