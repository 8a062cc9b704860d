//! Design rows for the log-linear duration rate.
//!
//! The duration rate of a segment that starts after `T` observed points is
//! `phi = exp(<row(T), beta_state>)`. A row holds an intercept, one entry per
//! covariate (instantaneous value or trailing mean at time `T`), and, when
//! enabled, the session indicator of time `T + 1` and its interactions with
//! the covariates. `T = 0` reads the initial covariate values `x0`.

use serde::{Deserialize, Serialize};

use super::TimeSeriesData;
use crate::dist::ZtpParam;
use crate::error::{domain, HsmmError, Result};

/// How a covariate column enters the design row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ColumnTransform {
    /// Value at time `T`.
    Instantaneous,
    /// Mean over the `window` points ending at time `T`, or over all points
    /// `1..=T` when fewer are available.
    TrailingMean { window: usize },
}

/// Affine standardization applied to a raw covariate at ingest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

impl Standardization {
    pub const IDENTITY: Self = Self { center: 0.0, scale: 1.0 };

    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.center) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.center
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub transform: ColumnTransform,
    /// Standardization already applied to the stored covariate column.
    pub standardization: Standardization,
}

/// Frozen description of the design row layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSpec {
    pub columns: Vec<DesignColumn>,
    pub session_indicator: bool,
    pub session_interactions: bool,
}

impl DesignSpec {
    /// Intercept-only design: one constant duration rate per state.
    pub fn intercept_only() -> Self {
        Self { columns: Vec::new(), session_indicator: false, session_interactions: false }
    }

    /// Instantaneous, unstandardized use of every covariate in `data`.
    pub fn instantaneous(data: &TimeSeriesData) -> Self {
        Self {
            columns: data
                .covariate_names
                .iter()
                .map(|name| DesignColumn {
                    name: name.clone(),
                    transform: ColumnTransform::Instantaneous,
                    standardization: Standardization::IDENTITY,
                })
                .collect(),
            session_indicator: false,
            session_interactions: false,
        }
    }

    /// Length of a design row (the `p + 1` coefficients per state).
    pub fn n_coefficients(&self) -> usize {
        let r = self.columns.len();
        1 + r + usize::from(self.session_indicator) * (1 + if self.session_interactions { r } else { 0 })
    }

    /// Coefficient labels in row order.
    pub fn coefficient_names(&self) -> Vec<String> {
        let mut names = vec!["intercept".to_string()];
        names.extend(self.columns.iter().map(|c| c.name.clone()));
        if self.session_indicator {
            names.push("session".into());
            if self.session_interactions {
                names.extend(self.columns.iter().map(|c| format!("{}:session", c.name)));
            }
        }
        names
    }

    pub fn validate(&self, data: &TimeSeriesData) -> Result<()> {
        if self.columns.len() != data.n_covariates() {
            return Err(HsmmError::Config(format!(
                "design has {} covariate columns but the data has {}",
                self.columns.len(),
                data.n_covariates()
            )));
        }
        if self.session_interactions && !self.session_indicator {
            return Err(HsmmError::Config("session interactions require the session indicator".into()));
        }
        if self.columns.iter().any(|c| matches!(c.transform, ColumnTransform::TrailingMean { window: 0 })) {
            return Err(HsmmError::Config("trailing-mean window must be at least 1".into()));
        }
        Ok(())
    }
}

/// Design row for a segment starting after `t_prev` observed points.
pub fn build_design(data: &TimeSeriesData, t_prev: usize, spec: &DesignSpec) -> Result<Vec<f64>> {
    let n = data.len();
    if t_prev >= n {
        return Err(HsmmError::Index { index: t_prev, len: n });
    }
    let mut row = Vec::with_capacity(spec.n_coefficients());
    row.push(1.0);
    for (c, col) in spec.columns.iter().enumerate() {
        let value = if t_prev == 0 {
            data.x0[c]
        } else {
            let series = &data.covariates[c];
            match col.transform {
                ColumnTransform::Instantaneous => series[t_prev - 1],
                ColumnTransform::TrailingMean { window } => {
                    let from = t_prev.saturating_sub(window);
                    series[from..t_prev].iter().sum::<f64>() / (t_prev - from) as f64
                }
            }
        };
        row.push(value);
    }
    if spec.session_indicator {
        let h = data.session[t_prev] as f64;
        row.push(h);
        if spec.session_interactions {
            for c in 0..spec.columns.len() {
                row.push(row[1 + c] * h);
            }
        }
    }
    Ok(row)
}

/// Design rows for every possible segment start `T = 0..n`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    width: usize,
    rows: Vec<f64>,
}

impl DesignMatrix {
    pub fn build(data: &TimeSeriesData, spec: &DesignSpec) -> Result<Self> {
        spec.validate(data)?;
        let width = spec.n_coefficients();
        let mut rows = Vec::with_capacity(width * data.len());
        for t in 0..data.len() {
            rows.extend(build_design(data, t, spec)?);
        }
        Ok(Self { width, rows })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len() / self.width
    }

    pub fn row(&self, t_prev: usize) -> &[f64] {
        &self.rows[t_prev * self.width..(t_prev + 1) * self.width]
    }
}

/// Largest magnitude allowed for the linear predictor before exponentiation.
pub const MAX_LOG_RATE: f64 = 30.0;

/// A duration rate together with whether its exponent was clamped.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DurationRate {
    pub phi: ZtpParam,
    pub log_phi: f64,
    pub clamped: bool,
}

/// `exp(<row, beta>)` with the exponent clamped to `[-30, 30]`.
pub fn duration_rate(row: &[f64], beta: &[f64]) -> Result<DurationRate> {
    if row.len() != beta.len() {
        return Err(domain(format!("design row has {} entries, coefficients {}", row.len(), beta.len())));
    }
    let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
    if !eta.is_finite() {
        return Err(domain("non-finite linear predictor for the duration rate"));
    }
    let log_phi = eta.clamp(-MAX_LOG_RATE, MAX_LOG_RATE);
    Ok(DurationRate { phi: ZtpParam::new(log_phi.exp())?, log_phi, clamped: log_phi != eta })
}
