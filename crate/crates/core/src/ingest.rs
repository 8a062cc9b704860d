//! CSV ingestion and covariate engineering.
//!
//! Row numbers in errors count data rows from 1, excluding the header.

use std::collections::HashSet;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{HsmmError, Result};
use crate::model::{ColumnTransform, DesignColumn, DesignSpec, Standardization, TimeSeriesData};

fn default_delimiter() -> char {
    ','
}

fn default_frequency() -> f64 {
    1.0
}

/// Column mapping and validation rules for an input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CsvSchema {
    pub time: String,
    pub observation: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Session label column; a single session when absent.
    #[serde(default)]
    pub session: Option<String>,
    #[serde(default = "default_delimiter")]
    pub delimiter: char,
    /// Nominal sampling frequency in Hz; consecutive rows of a session must
    /// be `1 / frequency` apart.
    #[serde(default = "default_frequency")]
    pub frequency: f64,
    #[serde(default)]
    pub allow_gaps: bool,
    /// Covariate values before the first observation; defaults to the first row.
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
}

impl CsvSchema {
    pub fn new(time: impl Into<String>, observation: impl Into<String>) -> Self {
        Self {
            time: time.into(),
            observation: observation.into(),
            covariates: Vec::new(),
            session: None,
            delimiter: default_delimiter(),
            frequency: default_frequency(),
            allow_gaps: false,
            x0: None,
        }
    }

    fn delimiter_byte(&self) -> Result<u8> {
        u8::try_from(self.delimiter)
            .ok()
            .filter(u8::is_ascii)
            .ok_or_else(|| HsmmError::Config(format!("delimiter must be a single ASCII character, got {:?}", self.delimiter)))
    }
}

pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesData> {
    read_csv(std::fs::File::open(path)?, schema)
}

fn parse_cell(record: &csv::StringRecord, idx: usize, row: usize, column: &str) -> Result<f64> {
    let cell = record.get(idx).unwrap_or("").trim();
    if cell.is_empty() {
        return Err(HsmmError::Data { row, message: format!("missing value in column `{column}`") });
    }
    cell.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| HsmmError::Parse { row, column: column.to_string(), message: format!("`{cell}` is not a finite number") })
}

pub fn read_csv<R: Read>(reader: R, schema: &CsvSchema) -> Result<TimeSeriesData> {
    if !(schema.frequency > 0.0 && schema.frequency.is_finite()) {
        return Err(HsmmError::Config(format!("frequency must be positive, got {}", schema.frequency)));
    }
    let mut csv = csv::ReaderBuilder::new().delimiter(schema.delimiter_byte()?).has_headers(true).from_reader(reader);
    let headers = csv.headers()?.clone();
    let records = csv.records().collect::<std::result::Result<Vec<_>, _>>()?;
    if records.is_empty() {
        return Err(HsmmError::Data { row: 0, message: "file contains no data rows".into() });
    }
    let column = |name: &str| {
        headers.iter().position(|h| h.trim() == name).ok_or_else(|| HsmmError::Schema(name.to_string()))
    };
    let time_idx = column(&schema.time)?;
    let y_idx = column(&schema.observation)?;
    let cov_idx = schema.covariates.iter().map(|c| column(c)).collect::<Result<Vec<_>>>()?;
    let session_idx = schema.session.as_deref().map(column).transpose()?;

    let step = 1.0 / schema.frequency;
    let n = records.len();
    let mut time = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut covariates = vec![Vec::with_capacity(n); cov_idx.len()];
    let mut session = Vec::with_capacity(n);
    let mut seen_labels = HashSet::new();
    let mut current_label: Option<String> = None;
    for (i, record) in records.iter().enumerate() {
        let row = i + 1;
        let t = parse_cell(record, time_idx, row, &schema.time)?;
        y.push(parse_cell(record, y_idx, row, &schema.observation)?);
        for ((col, &idx), name) in covariates.iter_mut().zip(&cov_idx).zip(&schema.covariates) {
            col.push(parse_cell(record, idx, row, name)?);
        }

        let mut new_session = false;
        if let Some(idx) = session_idx {
            let label = record.get(idx).unwrap_or("").trim();
            if label.is_empty() {
                let name = schema.session.as_deref().unwrap_or_default();
                return Err(HsmmError::Data { row, message: format!("missing value in column `{name}`") });
            }
            if current_label.as_deref() != Some(label) {
                if !seen_labels.insert(label.to_string()) {
                    return Err(HsmmError::Data { row, message: format!("session `{label}` is not contiguous") });
                }
                new_session = current_label.is_some();
                current_label = Some(label.to_string());
            }
        }
        let ordinal = seen_labels.len().saturating_sub(1);

        if let Some(&prev) = time.last() {
            if t <= prev {
                return Err(HsmmError::Data { row, message: format!("time {t} does not increase (previous {prev})") });
            }
            let gap = ((t - prev) - step).abs() > 1e-9 * step.max(1.0);
            if gap && !new_session && !schema.allow_gaps {
                return Err(HsmmError::Data { row, message: format!("time step {} differs from the nominal {step}", t - prev) });
            }
        }
        time.push(t);
        session.push(ordinal);
    }

    let mut data = TimeSeriesData::new(y, covariates, schema.covariates.clone(), session, schema.x0.clone())?;
    data.time = time;
    Ok(data)
}

/// Writes `data` as CSV with columns `time, y, <covariates>, session` and
/// returns the schema that reads it back. Values use the shortest
/// round-trip representation, so reloading is exact.
pub fn write_csv<W: Write>(writer: W, data: &TimeSeriesData) -> Result<CsvSchema> {
    let mut csv = csv::Writer::from_writer(writer);
    let mut header = vec!["time".to_string(), "y".to_string()];
    header.extend(data.covariate_names.iter().cloned());
    header.push("session".into());
    csv.write_record(&header)?;
    for t in 0..data.len() {
        let mut record = vec![data.time[t].to_string(), data.y[t].to_string()];
        record.extend(data.covariates.iter().map(|c| c[t].to_string()));
        record.push((data.session[t] + 1).to_string());
        csv.write_record(&record)?;
    }
    csv.flush()?;
    let mut schema = CsvSchema::new("time", "y");
    schema.covariates = data.covariate_names.clone();
    schema.session = Some("session".into());
    schema.allow_gaps = true;
    schema.x0 = Some(data.x0.clone());
    Ok(schema)
}

/// Transform applied to a raw covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum CovariateTransform {
    Instantaneous,
    TrailingMean { window: usize },
    /// Running sum of the raw column from the start of the series.
    Cumulative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateEntry {
    pub name: String,
    pub transform: CovariateTransform,
    #[serde(default = "default_true")]
    pub standardize: bool,
}

fn default_true() -> bool {
    true
}

/// Covariate engineering plan; also fixes the session terms of the design row.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CovariatePlan {
    pub columns: Vec<CovariateEntry>,
    pub session_indicator: bool,
    pub session_interactions: bool,
}

fn z_score(x: &[f64]) -> Standardization {
    let n = x.len() as f64;
    let center = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - center).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    let scale = if var > 0.0 { var.sqrt() } else { 1.0 };
    Standardization { center, scale }
}

/// Selects, transforms and standardizes covariates and freezes the design layout.
///
/// Columns not named in the plan are dropped. Standardization uses the
/// full-series mean and sample standard deviation (scale 1 for a constant
/// column); trailing means are taken later, over the standardized values.
pub fn engineer_covariates(raw: &TimeSeriesData, plan: &CovariatePlan) -> Result<(TimeSeriesData, DesignSpec)> {
    let longest = raw.session_ranges().iter().map(|r| r.len()).max().unwrap_or(0);
    let mut covariates = Vec::with_capacity(plan.columns.len());
    let mut names = Vec::with_capacity(plan.columns.len());
    let mut x0 = Vec::with_capacity(plan.columns.len());
    let mut columns = Vec::with_capacity(plan.columns.len());
    for entry in &plan.columns {
        let c = raw
            .covariate_names
            .iter()
            .position(|n| *n == entry.name)
            .ok_or_else(|| HsmmError::Config(format!("covariate `{}` is not in the data", entry.name)))?;
        let (mut series, mut start, transform) = match entry.transform {
            CovariateTransform::Instantaneous => (raw.covariates[c].clone(), raw.x0[c], ColumnTransform::Instantaneous),
            CovariateTransform::TrailingMean { window } => {
                if window == 0 || window > longest {
                    return Err(HsmmError::Config(format!(
                        "window {window} for `{}` must lie in 1..={longest} (longest session)",
                        entry.name
                    )));
                }
                (raw.covariates[c].clone(), raw.x0[c], ColumnTransform::TrailingMean { window })
            }
            CovariateTransform::Cumulative => {
                let series = raw.covariates[c]
                    .iter()
                    .scan(0.0, |acc, v| {
                        *acc += v;
                        Some(*acc)
                    })
                    .collect();
                (series, 0.0, ColumnTransform::Instantaneous)
            }
        };
        let standardization = if entry.standardize { z_score(&series) } else { Standardization::IDENTITY };
        series.iter_mut().for_each(|v| *v = standardization.apply(*v));
        start = standardization.apply(start);
        covariates.push(series);
        names.push(entry.name.clone());
        x0.push(start);
        columns.push(DesignColumn { name: entry.name.clone(), transform, standardization });
    }
    let mut data = TimeSeriesData::new(raw.y.clone(), covariates, names, raw.session.clone(), Some(x0))?;
    data.time = raw.time.clone();
    let spec = DesignSpec {
        columns,
        session_indicator: plan.session_indicator,
        session_interactions: plan.session_interactions,
    };
    spec.validate(&data)?;
    Ok((data, spec))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_design;
    use approx::assert_abs_diff_eq;

    fn schema() -> CsvSchema {
        let mut s = CsvSchema::new("t", "hr");
        s.covariates = vec!["accel".into(), "odometer".into()];
        s.session = Some("half".into());
        s
    }

    const TOY: &str = "t,hr,accel,odometer,half\n1,80,0.5,0,A\n2,82,0.7,1.5,A\n3,85,0.2,2.5,B\n4,90,0.1,4,B\n";

    #[test]
    fn reads_columns_and_sessions() {
        let d = read_csv(TOY.as_bytes(), &schema()).unwrap();
        assert_eq!(d.y, vec![80.0, 82.0, 85.0, 90.0]);
        assert_eq!(d.covariates[1], vec![0.0, 1.5, 2.5, 4.0]);
        assert_eq!(d.session, vec![0, 0, 1, 1]);
        assert_eq!(d.time, vec![1.0, 2.0, 3.0, 4.0]);
        assert_eq!(d.x0, vec![0.5, 0.0]);
    }

    #[test]
    fn error_cases() {
        let mut missing = schema();
        missing.covariates.push("dist_center".into());
        assert!(matches!(read_csv(TOY.as_bytes(), &missing), Err(HsmmError::Schema(c)) if c == "dist_center"));
        assert!(matches!(read_csv("".as_bytes(), &schema()), Err(HsmmError::Data { row: 0, .. })));
        assert!(matches!(read_csv("t,hr,accel,odometer,half\n".as_bytes(), &schema()), Err(HsmmError::Data { .. })));
        let shuffled = "t,hr,accel,odometer,half\n1,80,0.5,0,A\n3,82,0.7,1.5,A\n2,85,0.2,2.5,A\n";
        let mut gaps = schema();
        gaps.allow_gaps = true;
        assert!(matches!(read_csv(shuffled.as_bytes(), &gaps), Err(HsmmError::Data { row: 3, .. })));
        assert!(matches!(read_csv(shuffled.as_bytes(), &schema()), Err(HsmmError::Data { row: 2, .. })));
        let bad = "t,hr,accel,odometer,half\n1,80,0.5,0,A\n2,x,0.7,1.5,A\n";
        match read_csv(bad.as_bytes(), &schema()) {
            Err(HsmmError::Parse { row, column, .. }) => assert_eq!((row, column.as_str()), (2, "hr")),
            other => panic!("{other:?}"),
        }
        let blank = "t,hr,accel,odometer,half\n1,80,,0,A\n";
        assert!(matches!(read_csv(blank.as_bytes(), &schema()), Err(HsmmError::Data { row: 1, .. })));
        let split = "t,hr,accel,odometer,half\n1,80,0.5,0,A\n2,80,0.5,0,B\n3,80,0.5,0,A\n";
        assert!(matches!(read_csv(split.as_bytes(), &schema()), Err(HsmmError::Data { row: 3, .. })));
    }

    #[test]
    fn delimiter_and_session_gap() {
        let text = "t;hr;accel;odometer;half\n1;80;0.5;0;1\n2;82;0.7;1.5;1\n10;85;0.2;2.5;2\n";
        let mut s = schema();
        s.delimiter = ';';
        let d = read_csv(text.as_bytes(), &s).unwrap();
        assert_eq!(d.n_sessions(), 2);
    }

    #[test]
    fn round_trip_is_exact() {
        let d = TimeSeriesData::new(
            vec![0.1, 1.0 / 3.0, -2.5e-300, 7.0],
            vec![vec![std::f64::consts::PI, 1e300, -0.0, 5.551115123125783e-17]],
            vec!["x".into()],
            vec![0, 0, 1, 1],
            Some(vec![0.2]),
        )
        .unwrap();
        let mut buf = Vec::new();
        let schema = write_csv(&mut buf, &d).unwrap();
        let back = read_csv(buf.as_slice(), &schema).unwrap();
        assert_eq!(back.covariates.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>(),
            d.covariates.iter().flatten().map(|v| v.to_bits()).collect::<Vec<_>>());
        assert_eq!(back, d);
    }

    fn raw10() -> TimeSeriesData {
        let accel = vec![1.0, 3.0, 2.0, 6.0, 4.0, 0.0, 5.0, 7.0, 2.0, 4.0];
        let odo = (0..10).map(|t| (t * t) as f64 * 0.5).collect();
        TimeSeriesData::new(vec![0.0; 10], vec![accel, odo], vec!["accel".into(), "odometer".into()], vec![0; 10], None)
            .unwrap()
    }

    fn plan(window: usize, standardize: bool) -> CovariatePlan {
        CovariatePlan {
            columns: vec![
                CovariateEntry { name: "accel".into(), transform: CovariateTransform::TrailingMean { window }, standardize },
                CovariateEntry { name: "odometer".into(), transform: CovariateTransform::Instantaneous, standardize },
            ],
            session_indicator: false,
            session_interactions: false,
        }
    }

    #[test]
    fn trailing_means_match_hand_table() {
        let (data, spec) = engineer_covariates(&raw10(), &plan(3, false)).unwrap();
        // T = 0 reads x0 (first raw value); then means of the last <= 3 points
        let expected = [1.0, 1.0, 2.0, 2.0, 11.0 / 3.0, 4.0, 10.0 / 3.0, 3.0, 4.0, 14.0 / 3.0];
        for (t, e) in expected.iter().enumerate() {
            assert_abs_diff_eq!(build_design(&data, t, &spec).unwrap()[1], *e, epsilon = 1e-12);
        }
    }

    #[test]
    fn standardized_columns_are_z_scores() {
        let (data, spec) = engineer_covariates(&raw10(), &plan(3, true)).unwrap();
        for c in &data.covariates {
            let n = c.len() as f64;
            let mean = c.iter().sum::<f64>() / n;
            let sd = (c.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
            assert_abs_diff_eq!(mean, 0.0, epsilon = 1e-10);
            assert_abs_diff_eq!(sd, 1.0, epsilon = 1e-10);
        }
        let s = spec.columns[0].standardization;
        assert_abs_diff_eq!(s.invert(data.covariates[0][3]), 6.0, epsilon = 1e-12);
        assert!(data.covariates[1].windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn constant_and_cumulative_columns() {
        let raw = TimeSeriesData::new(vec![0.0; 6], vec![vec![2.0; 6], vec![0.5; 6]], vec!["a".into(), "step".into()], vec![0; 6], None)
            .unwrap();
        let plan = CovariatePlan {
            columns: vec![
                CovariateEntry { name: "a".into(), transform: CovariateTransform::TrailingMean { window: 3 }, standardize: true },
                CovariateEntry { name: "step".into(), transform: CovariateTransform::Cumulative, standardize: false },
            ],
            ..CovariatePlan::default()
        };
        let (data, spec) = engineer_covariates(&raw, &plan).unwrap();
        assert!((0..6).all(|t| build_design(&data, t, &spec).unwrap()[1] == 0.0));
        assert_eq!(data.covariates[1], vec![0.5, 1.0, 1.5, 2.0, 2.5, 3.0]);
        assert_eq!(data.x0[1], 0.0);
    }

    #[test]
    fn oversized_window_is_rejected() {
        assert!(matches!(engineer_covariates(&raw10(), &plan(11, true)), Err(HsmmError::Config(_))));
        assert!(matches!(engineer_covariates(&raw10(), &plan(0, true)), Err(HsmmError::Config(_))));
    }
}
