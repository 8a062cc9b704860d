//! Model types, duration design rows and exact log-likelihoods.

mod data;
mod design;
mod likelihood;
mod params;
mod segmentation;

pub use data::TimeSeriesData;
pub use design::{
    build_design, duration_rate, ColumnTransform, DesignColumn, DesignMatrix, DesignSpec, DurationRate,
    Standardization, MAX_LOG_RATE,
};
pub use likelihood::{chain_loglik, complete_loglik, emission_loglik};
pub(crate) use likelihood::segment_duration_loglik;
pub use params::ModelParams;
pub use segmentation::{Segment, Segmentation};

use crate::error::Result;

/// Data together with its frozen duration design.
#[derive(Debug, Clone)]
pub struct Model {
    data: TimeSeriesData,
    spec: DesignSpec,
    design: DesignMatrix,
    censor_last: bool,
}

impl Model {
    pub fn new(data: TimeSeriesData, spec: DesignSpec) -> Result<Self> {
        data.validate()?;
        let design = DesignMatrix::build(&data, &spec)?;
        Ok(Self { data, spec, design, censor_last: false })
    }

    /// Treat the last segment of every session as right-censored.
    pub fn with_censoring(mut self, censor_last: bool) -> Self {
        self.censor_last = censor_last;
        self
    }

    pub fn data(&self) -> &TimeSeriesData {
        &self.data
    }

    pub fn spec(&self) -> &DesignSpec {
        &self.spec
    }

    pub fn design(&self) -> &DesignMatrix {
        &self.design
    }

    pub fn censor_last(&self) -> bool {
        self.censor_last
    }

    pub fn n_coefficients(&self) -> usize {
        self.design.width()
    }
}
