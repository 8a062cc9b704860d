use std::path::{Path, PathBuf};

use hsmm_core::ingest::{CovariatePlan, CsvSchema};
use hsmm_core::sampler::{McmcConfig, Priors};
use hsmm_core::simulation::{CoverageSettings, CovariateScenario, SimScenario};
use hsmm_core::ModelParams;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Run configuration; every subcommand reads the sections it needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub chains: usize,
    /// Worker threads; 0 lets the pool pick.
    pub threads: usize,
    pub out: PathBuf,
    pub data: Option<DataSection>,
    pub model: ModelSection,
    pub priors: Priors,
    pub mcmc: McmcConfig,
    pub simulate: SimulateSection,
    pub coverage: CoverageSection,
    pub decode: Option<DecodeSection>,
    pub diagnose: DiagnoseSection,
    pub summarize: Option<SummarizeSection>,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 1,
            chains: 3,
            threads: 0,
            out: PathBuf::from("out"),
            data: None,
            model: ModelSection::default(),
            priors: Priors::default(),
            mcmc: McmcConfig::default(),
            simulate: SimulateSection::default(),
            coverage: CoverageSection::default(),
            decode: None,
            diagnose: DiagnoseSection::default(),
            summarize: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    pub path: PathBuf,
    pub schema: CsvSchema,
    #[serde(default)]
    pub covariates: CovariatePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    /// State counts to fit.
    pub states: Vec<usize>,
    pub censor_last: bool,
    pub level: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self { states: vec![2, 3, 4, 5], censor_last: false, level: 0.95 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    Segments,
    Covariate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateSection {
    pub scenario: ScenarioKind,
    pub n_states: usize,
    pub psi: f64,
    pub n_target: usize,
    pub carryover: bool,
    /// Overrides the default true parameters of the chosen scenario.
    pub params: Option<ModelParams>,
    pub window: usize,
}

impl Default for SimulateSection {
    fn default() -> Self {
        Self { scenario: ScenarioKind::Segments, n_states: 3, psi: 0.86, n_target: 4000, carryover: false, params: None, window: 20 }
    }
}

impl SimulateSection {
    pub fn segments(&self) -> SimScenario {
        let mut s = SimScenario::standard(self.n_states, self.psi, self.n_target);
        s.carryover = self.carryover;
        if let Some(p) = &self.params {
            s.params = p.clone();
        }
        s
    }

    pub fn covariate(&self) -> CovariateScenario {
        let mut s = CovariateScenario::standard(self.n_target);
        s.psi = self.psi;
        s.window = self.window;
        if let Some(p) = &self.params {
            s.params = p.clone();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoverageSection {
    pub n_states: Vec<usize>,
    pub psis: Vec<f64>,
    pub n_target: usize,
    pub n_realizations: usize,
    pub carryover: bool,
    pub settings: CoverageSettings,
}

impl Default for CoverageSection {
    fn default() -> Self {
        Self {
            n_states: vec![2],
            psis: vec![0.86],
            n_target: 1000,
            n_realizations: 30,
            carryover: false,
            settings: CoverageSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecodeSection {
    /// JSON file with the parameters to decode under.
    pub params: PathBuf,
    #[serde(default)]
    pub d_max: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AutocorrelationMethod {
    /// Consecutive fixed-size groups over a range of sizes.
    Grouped,
    /// Segments of a decoded state sequence.
    Segments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnoseSection {
    pub method: AutocorrelationMethod,
    /// Inclusive group-size range for the grouped method.
    pub group_sizes: [usize; 2],
    /// Decoded states CSV (as written by `decode`) for the segments method.
    pub states: Option<PathBuf>,
    /// State count selecting the coverage table.
    pub n_states: usize,
    /// Coverage CSV (as written by `coverage`) replacing the bundled table.
    pub table: Option<PathBuf>,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self { method: AutocorrelationMethod::Grouped, group_sizes: [29, 39], states: None, n_states: 3, table: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummarizeSection {
    /// Output directory of a previous `fit`.
    pub fit: PathBuf,
    #[serde(default = "default_level")]
    pub level: f64,
}

fn default_level() -> f64 {
    0.95
}

/// Overrides given on the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Config {
    pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<Self, CliError> {
        let mut config = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                let mut c: Config = toml::from_str(&text).map_err(|e| CliError::Config(e.to_string()))?;
                c.resolve_paths(p.parent().unwrap_or(Path::new("")));
                c
            }
            None => Config::default(),
        };
        if let Some(seed) = overrides.seed {
            config.seed = seed;
        }
        if let Some(chains) = overrides.chains {
            config.chains = chains;
        }
        if let Some(threads) = overrides.threads {
            config.threads = threads;
        }
        if let Some(out) = &overrides.out {
            config.out = out.clone();
        }
        config.mcmc.seed = config.seed;
        config.coverage.settings.seed = config.seed;
        Ok(config)
    }

    /// Anchors relative file references at the config file's directory.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            let joined = base.join(&*p);
            *p = std::path::absolute(&joined).unwrap_or(joined);
        };
        if let Some(d) = &mut self.data {
            fix(&mut d.path);
        }
        if let Some(d) = &mut self.decode {
            fix(&mut d.params);
        }
        if let Some(s) = &mut self.diagnose.states {
            fix(s);
        }
        if let Some(t) = &mut self.diagnose.table {
            fix(t);
        }
        if let Some(s) = &mut self.summarize {
            fix(&mut s.fit);
        }
    }

    pub fn data(&self) -> Result<&DataSection, CliError> {
        self.data.as_ref().ok_or_else(|| CliError::Config("missing field `data`".into()))
    }
}
