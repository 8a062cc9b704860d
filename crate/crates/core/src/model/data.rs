use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{structure, Result};

/// Observations, covariates and session labels on a regular time grid.
///
/// Covariates are stored column-wise: `covariates[c][t]` is covariate `c` at
/// time index `t` (zero-based). `x0` holds the covariate values used for the
/// first segment, before anything has been observed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesData {
    pub y: Vec<f64>,
    pub covariates: Vec<Vec<f64>>,
    pub covariate_names: Vec<String>,
    /// Zero-based session ordinal of each time point; non-decreasing.
    pub session: Vec<usize>,
    pub x0: Vec<f64>,
    /// Time stamps as read from the source, one per observation.
    pub time: Vec<f64>,
}

impl TimeSeriesData {
    /// Builds and validates a data set. `x0` defaults to the first covariate row.
    pub fn new(
        y: Vec<f64>,
        covariates: Vec<Vec<f64>>,
        covariate_names: Vec<String>,
        session: Vec<usize>,
        x0: Option<Vec<f64>>,
    ) -> Result<Self> {
        let x0 = x0.unwrap_or_else(|| covariates.iter().map(|c| c.first().copied().unwrap_or(0.0)).collect());
        let time = (1..=y.len()).map(|t| t as f64).collect();
        let data = Self { y, covariates, covariate_names, session, x0, time };
        data.validate()?;
        Ok(data)
    }

    /// Single-session data without covariates.
    pub fn from_observations(y: Vec<f64>) -> Result<Self> {
        let n = y.len();
        Self::new(y, Vec::new(), Vec::new(), vec![0; n], None)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.y.len();
        if n == 0 {
            return Err(structure("time series must contain at least one observation"));
        }
        if self.session.len() != n || self.time.len() != n {
            return Err(structure("session labels and time stamps must match the observation count"));
        }
        if self.covariate_names.len() != self.covariates.len() || self.x0.len() != self.covariates.len() {
            return Err(structure("covariate names, columns and x0 must agree in count"));
        }
        if let Some(c) = self.covariates.iter().position(|c| c.len() != n) {
            return Err(structure(format!("covariate column {c} has the wrong length")));
        }
        if self.session[0] != 0 {
            return Err(structure("session ordinals must start at 0"));
        }
        if let Some(t) = self.session.windows(2).position(|w| w[1] != w[0] && w[1] != w[0] + 1) {
            return Err(structure(format!("session labels must be contiguous blocks (time index {})", t + 1)));
        }
        let finite = self.y.iter().chain(self.covariates.iter().flatten()).chain(&self.x0).all(|v| v.is_finite());
        if !finite {
            return Err(structure("observations and covariates must be finite"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn n_covariates(&self) -> usize {
        self.covariates.len()
    }

    pub fn n_sessions(&self) -> usize {
        self.session.last().map_or(0, |s| s + 1)
    }

    /// Index ranges of the sessions, in order.
    pub fn session_ranges(&self) -> Vec<Range<usize>> {
        let mut out = Vec::with_capacity(self.n_sessions());
        let mut start = 0;
        for t in 1..=self.len() {
            if t == self.len() || self.session[t] != self.session[start] {
                out.push(start..t);
                start = t;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn session_ranges_split_blocks() {
        let d = TimeSeriesData::new(vec![0.0; 5], vec![], vec![], vec![0, 0, 1, 1, 1], None).unwrap();
        assert_eq!(d.session_ranges(), vec![0..2, 2..5]);
        assert_eq!(d.n_sessions(), 2);
    }

    #[test]
    fn rejects_interleaved_sessions_and_empty_data() {
        assert!(TimeSeriesData::new(vec![0.0; 3], vec![], vec![], vec![0, 1, 0], None).is_err());
        assert!(TimeSeriesData::from_observations(vec![]).is_err());
    }

    #[test]
    fn x0_defaults_to_first_row() {
        let d = TimeSeriesData::new(vec![0.0; 2], vec![vec![3.0, 4.0]], vec!["a".into()], vec![0, 0], None).unwrap();
        assert_eq!(d.x0, vec![3.0]);
    }
}
