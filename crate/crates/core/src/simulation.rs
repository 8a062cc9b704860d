//! Segment-wise AR(1) data generation and the fixed-state coverage study.

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diagnostics::credible_interval;
use crate::dist::{normal_sample, ztp_sample};
use crate::error::{HsmmError, Result};
use crate::model::{
    build_design, duration_rate, ColumnTransform, DesignColumn, DesignSpec, Model, ModelParams, Segmentation,
    Standardization, TimeSeriesData,
};
use crate::rng::{derive_seed, ChainRng};
use crate::sampler::{run_fixed_state_chain, McmcConfig, Priors};

/// One simulation scenario with constant per-state duration rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimScenario {
    pub n_states: usize,
    pub psi: f64,
    pub n_target: usize,
    /// True parameters; `b` holds one intercept per state.
    pub params: ModelParams,
    /// Continue the AR(1) deviation across segment boundaries instead of
    /// restarting each segment from its stationary law.
    pub carryover: bool,
    pub n_realizations: usize,
}

impl SimScenario {
    /// Means `0, 5, 10, ...`, unit variances, rate 30 and uniform transitions.
    pub fn standard(n_states: usize, psi: f64, n_target: usize) -> Self {
        let (rho, p) = ModelParams::uniform_chain(n_states, 1);
        Self {
            n_states,
            psi,
            n_target,
            params: ModelParams {
                mu: (0..n_states).map(|j| 5.0 * j as f64).collect(),
                sigma2: vec![1.0; n_states],
                rho,
                p,
                b: vec![vec![30f64.ln()]; n_states],
            },
            carryover: false,
            n_realizations: 100,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.psi.abs() < 1.0) {
            return Err(HsmmError::Config(format!("AR coefficient must satisfy |psi| < 1, got {}", self.psi)));
        }
        if self.n_target == 0 {
            return Err(HsmmError::Config("n_target must be at least 1".into()));
        }
        if self.params.n_states() != self.n_states || self.params.n_coefficients() != 1 {
            return Err(HsmmError::Config("scenario parameters need one intercept per state".into()));
        }
        self.params.validate_shapes(1, 1)
    }
}

fn categorical<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// Appends `len` AR(1) points with stationary mean `mu` and variance `var`.
/// `carry` is the standardized deviation of the previous point, if the
/// process continues across the boundary.
fn emit_ar1<R: Rng + ?Sized>(out: &mut Vec<f64>, len: usize, mu: f64, var: f64, psi: f64, carry: Option<f64>, rng: &mut R) {
    let sd = var.sqrt();
    let innovation = var * (1.0 - psi * psi);
    let mut dev = match carry {
        Some(z) => psi * z * sd + normal_sample(0.0, innovation, rng),
        None => normal_sample(0.0, var, rng),
    };
    out.push(mu + dev);
    for _ in 1..len {
        dev = psi * dev + normal_sample(0.0, innovation, rng);
        out.push(mu + dev);
    }
}

/// Generates one realization; the last segment is clipped at `n_target`.
pub fn simulate_realization<R: Rng + ?Sized>(scenario: &SimScenario, rng: &mut R) -> Result<(TimeSeriesData, Segmentation)> {
    scenario.validate()?;
    let p = &scenario.params;
    let mut y = Vec::with_capacity(scenario.n_target);
    let mut states = Vec::new();
    let mut durations = Vec::new();
    let mut prev: Option<usize> = None;
    while y.len() < scenario.n_target {
        let j = match prev {
            None => categorical(&p.rho[0], rng),
            Some(k) => categorical(&p.p[k], rng),
        };
        let phi = duration_rate(&[1.0], &p.b[j])?.phi;
        let tau = (ztp_sample(phi, rng) as usize).min(scenario.n_target - y.len());
        let carry = match (scenario.carryover, prev) {
            (true, Some(k)) => Some((y[y.len() - 1] - p.mu[k]) / p.sigma2[k].sqrt()),
            _ => None,
        };
        emit_ar1(&mut y, tau, p.mu[j], p.sigma2[j], scenario.psi, carry, rng);
        states.push(j);
        durations.push(tau);
        prev = Some(j);
    }
    Ok((TimeSeriesData::from_observations(y)?, Segmentation::new(states, durations)?))
}

/// Two-session scenario whose duration rates depend on two persistent
/// covariates, the session indicator and their interactions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateScenario {
    pub psi: f64,
    /// Approximate total length; each session runs until it reaches half of it.
    pub n_target: usize,
    /// Window of the trailing mean applied to the first covariate.
    pub window: usize,
    /// AR(1) coefficients of the two latent covariate processes.
    pub covariate_persistence: [f64; 2],
    /// True parameters; rows of `b` follow `design_spec()` order.
    pub params: ModelParams,
}

impl CovariateScenario {
    /// Three well-separated states with covariate effects on every rate.
    pub fn standard(n_target: usize) -> Self {
        let (rho, p) = ModelParams::uniform_chain(3, 2);
        Self {
            psi: 0.0,
            n_target,
            window: 20,
            covariate_persistence: [0.95, 0.99],
            params: ModelParams {
                mu: vec![60.0, 70.0, 80.0],
                sigma2: vec![4.0, 5.0, 6.0],
                rho,
                p,
                // every nonzero slope has magnitude at least 0.2
                b: vec![
                    vec![3.3, 0.25, -0.20, 0.20, 0.0, 0.20],
                    vec![3.5, -0.20, 0.25, -0.20, 0.20, 0.0],
                    vec![3.4, 0.20, 0.0, 0.20, -0.25, 0.20],
                ],
            },
        }
    }

    pub fn design_spec(&self) -> DesignSpec {
        let column = |name: &str, transform| DesignColumn {
            name: name.into(),
            transform,
            standardization: Standardization::IDENTITY,
        };
        DesignSpec {
            columns: vec![
                column("activity", ColumnTransform::TrailingMean { window: self.window }),
                column("position", ColumnTransform::Instantaneous),
            ],
            session_indicator: true,
            session_interactions: true,
        }
    }
}

/// Generates a two-session covariate-duration data set. Sessions are not
/// clipped, so each runs slightly past half of `n_target`.
pub fn simulate_covariate_realization<R: Rng + ?Sized>(
    scenario: &CovariateScenario,
    rng: &mut R,
) -> Result<(TimeSeriesData, Segmentation, DesignSpec)> {
    let spec = scenario.design_spec();
    let p = &scenario.params;
    let capacity = scenario.n_target + 2000;
    let covariates: Vec<Vec<f64>> = scenario
        .covariate_persistence
        .iter()
        .map(|&a| {
            let mut x = Vec::with_capacity(capacity);
            emit_ar1(&mut x, capacity, 0.0, 1.0, a, None, rng);
            x
        })
        .collect();
    let names = vec!["activity".to_string(), "position".to_string()];
    let mut scratch = TimeSeriesData::new(vec![0.0; capacity], covariates, names, vec![0; capacity], None)?;

    let mut y = Vec::with_capacity(capacity);
    let mut states = Vec::new();
    let mut durations = Vec::new();
    let mut session_end = Vec::new();
    for (session, stop) in [(0usize, scenario.n_target / 2), (1, scenario.n_target)] {
        scratch.session[y.len()..].iter_mut().for_each(|s| *s = session);
        let mut prev: Option<usize> = None;
        while y.len() < stop {
            let j = match prev {
                None => categorical(&p.rho[session], rng),
                Some(k) => categorical(&p.p[k], rng),
            };
            let row = build_design(&scratch, y.len(), &spec)?;
            let phi = duration_rate(&row, &p.b[j])?.phi;
            let tau = (ztp_sample(phi, rng) as usize).min(capacity - y.len());
            emit_ar1(&mut y, tau, p.mu[j], p.sigma2[j], scenario.psi, None, rng);
            states.push(j);
            durations.push(tau);
            prev = Some(j);
        }
        session_end.push(y.len());
    }
    let n = y.len();
    let session: Vec<usize> = (0..n).map(|t| usize::from(t >= session_end[0])).collect();
    let covariates = scratch.covariates.iter().map(|c| c[..n].to_vec()).collect();
    let data = TimeSeriesData::new(y, covariates, scratch.covariate_names.clone(), session, Some(scratch.x0.clone()))?;
    Ok((data, Segmentation::new(states, durations)?, spec))
}

/// Settings shared by the cells of a coverage study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSettings {
    pub rates: Vec<f64>,
    pub n_iter: usize,
    pub burn_in: usize,
    pub level: f64,
    pub seed: u64,
    pub priors: Priors,
}

impl Default for CoverageSettings {
    fn default() -> Self {
        Self { rates: vec![1.0, 0.5, 0.1], n_iter: 2000, burn_in: 200, level: 0.9, seed: 1, priors: Priors::default() }
    }
}

/// Empirical coverage at one subsampling rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    pub rate: f64,
    pub psi: f64,
    #[serde(rename = "M")]
    pub m: usize,
    pub n_target: usize,
    pub coverage_mu: f64,
    pub coverage_sigma2: f64,
    /// Monte Carlo standard error of `coverage_mu` across realizations.
    pub mc_stderr: f64,
}

/// Runs the fixed-state coverage study for one scenario.
///
/// Realization `r` is generated from `derive_seed(seed, r)` and every rate
/// reuses it; the cells are spread over the rayon pool and merged in order,
/// so results do not depend on the thread count.
pub fn run_coverage_experiment(scenario: &SimScenario, settings: &CoverageSettings) -> Result<Vec<CoverageRow>> {
    scenario.validate()?;
    if settings.rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
        return Err(HsmmError::Config("coverage rates must lie in (0, 1]".into()));
    }
    let m = scenario.n_states;
    // per realization, per rate: (covered means, covered variances)
    let cells: Vec<Vec<(usize, usize)>> = (0..scenario.n_realizations)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(settings.seed, r as u64);
            let mut rng = ChainRng::seed_from_u64(seed);
            let (data, seg) = simulate_realization(scenario, &mut rng)?;
            let model = Model::new(data, DesignSpec::intercept_only())?;
            settings
                .rates
                .iter()
                .enumerate()
                .map(|(k, &rate)| {
                    let config = McmcConfig {
                        n_iter: settings.n_iter,
                        n_adapt: settings.burn_in,
                        subsample_rate: rate,
                        seed: derive_seed(seed, k as u64 + 1),
                        ..McmcConfig::default()
                    };
                    let out = run_fixed_state_chain(&model, &seg, m, &settings.priors, &config)?;
                    let mut hits = (0, 0);
                    for j in 0..m {
                        let (lo, hi) = credible_interval(&out.trace(|d| d.mu[j]), settings.level)?;
                        hits.0 += usize::from(lo <= scenario.params.mu[j] && scenario.params.mu[j] <= hi);
                        let (lo, hi) = credible_interval(&out.trace(|d| d.sigma2[j]), settings.level)?;
                        hits.1 += usize::from(lo <= scenario.params.sigma2[j] && scenario.params.sigma2[j] <= hi);
                    }
                    Ok(hits)
                })
                .collect()
        })
        .collect::<Result<_>>()?;

    let reps = scenario.n_realizations as f64;
    Ok(settings
        .rates
        .iter()
        .enumerate()
        .map(|(k, &rate)| {
            let per_rep: Vec<f64> = cells.iter().map(|c| c[k].0 as f64 / m as f64).collect();
            let coverage_mu = per_rep.iter().sum::<f64>() / reps;
            let coverage_sigma2 = cells.iter().map(|c| c[k].1 as f64 / m as f64).sum::<f64>() / reps;
            let var = per_rep.iter().map(|c| (c - coverage_mu).powi(2)).sum::<f64>() / (reps - 1.0).max(1.0);
            CoverageRow {
                rate,
                psi: scenario.psi,
                m,
                n_target: scenario.n_target,
                coverage_mu,
                coverage_sigma2,
                mc_stderr: (var / reps).sqrt(),
            }
        })
        .collect())
}

/// Coverage (in percent) of the emission means by subsampling rate and
/// autocorrelation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageTable {
    pub m: usize,
    /// Decreasing rates, one per row.
    pub rates: Vec<f64>,
    /// Increasing autocorrelations, one per column.
    pub psis: Vec<f64>,
    /// `coverage[row][column]`.
    pub coverage: Vec<Vec<f64>>,
}

const BUNDLED_RATES: [f64; 10] = [1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];
const BUNDLED_PSIS: [f64; 4] = [0.30, 0.60, 0.86, 0.95];
const TABLE_M2: [[f64; 4]; 10] = [
    [76.0, 66.0, 36.0, 25.0],
    [80.0, 70.0, 40.0, 27.0],
    [85.0, 75.0, 46.0, 32.0],
    [88.0, 78.0, 51.0, 36.0],
    [92.0, 83.0, 56.0, 39.0],
    [94.0, 88.0, 62.0, 46.0],
    [99.0, 93.0, 70.0, 54.0],
    [100.0, 99.0, 75.0, 62.0],
    [100.0, 100.0, 86.0, 76.0],
    [100.0, 100.0, 96.0, 91.0],
];
const TABLE_M3: [[f64; 4]; 10] = [
    [78.0, 57.0, 35.0, 24.0],
    [83.0, 62.0, 39.0, 24.0],
    [86.0, 67.0, 42.0, 28.0],
    [91.0, 71.0, 46.0, 33.0],
    [94.0, 78.0, 51.0, 35.0],
    [96.0, 82.0, 57.0, 42.0],
    [98.0, 90.0, 64.0, 46.0],
    [100.0, 95.0, 69.0, 53.0],
    [100.0, 98.0, 82.0, 63.0],
    [100.0, 100.0, 94.0, 84.0],
];
const TABLE_M4: [[f64; 4]; 10] = [
    [78.0, 62.0, 38.0, 28.0],
    [83.0, 66.0, 40.0, 31.0],
    [87.0, 72.0, 43.0, 35.0],
    [91.0, 78.0, 46.0, 38.0],
    [93.0, 83.0, 53.0, 42.0],
    [96.0, 87.0, 60.0, 46.0],
    [97.0, 90.0, 65.0, 53.0],
    [99.0, 96.0, 74.0, 62.0],
    [100.0, 98.0, 85.0, 74.0],
    [100.0, 100.0, 96.0, 88.0],
];

/// Nominal coverage assumed for independent data.
const NOMINAL: f64 = 90.0;

impl CoverageTable {
    /// Published coverage for `n` about 4000, using the table with the nearest state count.
    pub fn bundled(m: usize) -> Self {
        let table = match m {
            0..=2 => &TABLE_M2,
            3 => &TABLE_M3,
            _ => &TABLE_M4,
        };
        Self {
            m: m.clamp(2, 4),
            rates: BUNDLED_RATES.to_vec(),
            psis: BUNDLED_PSIS.to_vec(),
            coverage: table.iter().map(|r| r.to_vec()).collect(),
        }
    }

    /// Builds a table from simulated rows for one state count (coverage in percent).
    pub fn from_rows(rows: &[CoverageRow], m: usize) -> Result<Self> {
        let rows: Vec<&CoverageRow> = rows.iter().filter(|r| r.m == m).collect();
        let mut rates: Vec<f64> = rows.iter().map(|r| r.rate).collect();
        rates.sort_by(|a, b| b.total_cmp(a));
        rates.dedup();
        let mut psis: Vec<f64> = rows.iter().map(|r| r.psi).collect();
        psis.sort_by(f64::total_cmp);
        psis.dedup();
        let coverage = rates
            .iter()
            .map(|&rate| {
                psis.iter()
                    .map(|&psi| {
                        rows.iter()
                            .find(|r| r.rate == rate && r.psi == psi)
                            .map(|r| 100.0 * r.coverage_mu)
                            .ok_or_else(|| HsmmError::Config(format!("no coverage cell for rate {rate}, psi {psi}")))
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<_>>()?;
        if rates.is_empty() {
            return Err(HsmmError::Config(format!("no coverage rows for M = {m}")));
        }
        Ok(Self { m, rates, psis, coverage })
    }

    /// Coverage column at `psi`, linear in `psi` between columns. Independent
    /// data (`psi = 0`) is taken to have nominal coverage at every rate.
    fn column(&self, psi: f64) -> Vec<f64> {
        let mut knots: Vec<(f64, Option<usize>)> = vec![(0.0, None)];
        knots.extend(self.psis.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, p)| (*p, Some(i))));
        let value = |row: usize, knot: usize| knots[knot].1.map_or(NOMINAL, |i| self.coverage[row][i]);
        let c = knots.iter().rposition(|(p, _)| *p <= psi).unwrap_or(0);
        (0..self.rates.len())
            .map(|row| {
                if c + 1 >= knots.len() {
                    return value(row, c);
                }
                let w = (psi - knots[c].0) / (knots[c + 1].0 - knots[c].0);
                (1.0 - w) * value(row, c) + w * value(row, c + 1)
            })
            .collect()
    }
}

/// Subsampling rate suggested for an observed autocorrelation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub rate: f64,
    pub warning: Option<String>,
}

/// Largest rate whose (interpolated) coverage reaches 90%.
///
/// Coverage is interpolated linearly between autocorrelation columns and
/// between adjacent rates at the crossing.
pub fn recommend_rate(psi_hat: f64, table: &CoverageTable) -> Result<Recommendation> {
    if !(0.0..1.0).contains(&psi_hat) {
        return Err(HsmmError::Config(format!("autocorrelation must lie in [0, 1), got {psi_hat}")));
    }
    let smallest = *table.rates.last().expect("non-empty table");
    let largest_psi = table.psis.iter().copied().fold(0.0, f64::max);
    if psi_hat > largest_psi {
        return Ok(Recommendation {
            rate: smallest,
            warning: Some(format!("autocorrelation {psi_hat:.3} exceeds the largest tabulated value {largest_psi}")),
        });
    }
    let col = table.column(psi_hat);
    if col[0] >= NOMINAL {
        return Ok(Recommendation { rate: table.rates[0], warning: None });
    }
    for i in 1..col.len() {
        if col[i] >= NOMINAL {
            let (r0, r1) = (table.rates[i - 1], table.rates[i]);
            let w = (NOMINAL - col[i - 1]) / (col[i] - col[i - 1]);
            return Ok(Recommendation { rate: r0 + w * (r1 - r0), warning: None });
        }
    }
    Ok(Recommendation {
        rate: smallest,
        warning: Some(format!("no tabulated rate reaches {NOMINAL}% coverage at autocorrelation {psi_hat:.3}")),
    })
}
