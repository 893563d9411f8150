//! Right-censored survival data: CSV ingestion, validation, time
//! normalization, and per-node binned sufficient statistics.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("csv error in {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: non-numeric time value `{value}`")]
    NonNumericTime { row: usize, value: String },
    #[error("row {row}: invalid status `{value}` (must be 0 or 1)")]
    InvalidStatus { row: usize, value: String },
    #[error("row {row}: negative or non-finite time {value}")]
    InvalidTime { row: usize, value: f64 },
    #[error("row {row}, column `{column}`: missing value")]
    MissingValue { row: usize, column: String },
    #[error("row {row}, column `{column}`: non-numeric value `{value}` in continuous column")]
    NonNumericValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("column `{column}`: unknown categorical label `{label}`")]
    UnknownLabel { column: String, label: String },
    #[error("column `{column}` has {count} distinct labels (limit {limit})")]
    TooManyLabels {
        column: String,
        count: usize,
        limit: usize,
    },
    #[error("dataset is empty")]
    Empty,
    #[error("all times are zero; cannot normalize a degenerate dataset")]
    DegenerateTimes,
    #[error("node has no observations")]
    EmptyNode,
    #[error("normalized time {0} outside [0,1]")]
    TimeOutOfRange(f64),
    #[error("bin count must be positive")]
    ZeroBins,
    #[error("schema error: {0}")]
    Schema(String),
}

/// Declared type of a covariate column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

/// Storage for one covariate column. Categorical values are encoded as
/// indices into the column's sorted label set.
#[derive(Debug, Clone)]
pub enum CovariateValues {
    Continuous(Vec<f64>),
    Categorical { labels: Vec<String>, codes: Vec<u32> },
}

#[derive(Debug, Clone)]
pub struct Covariate {
    pub name: String,
    pub values: CovariateValues,
}

impl Covariate {
    pub fn kind(&self) -> ColumnKind {
        match self.values {
            CovariateValues::Continuous(_) => ColumnKind::Continuous,
            CovariateValues::Categorical { .. } => ColumnKind::Categorical,
        }
    }
}

/// A single covariate value, as seen by routing code.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CovValue {
    Real(f64),
    Code(u32),
}

/// Right-censored survival data with mixed covariates. `status[j]` is true
/// when the event was observed and false when the time is right censored.
#[derive(Debug, Clone)]
pub struct SurvivalDataset {
    times: Vec<f64>,
    status: Vec<bool>,
    columns: Vec<Covariate>,
}

const LABEL_LIMIT: usize = 16;

impl SurvivalDataset {
    pub fn new(
        times: Vec<f64>,
        status: Vec<bool>,
        columns: Vec<Covariate>,
    ) -> Result<Self, DataError> {
        if times.is_empty() {
            return Err(DataError::Empty);
        }
        assert_eq!(times.len(), status.len(), "times/status length mismatch");
        for (row, &t) in times.iter().enumerate() {
            if !t.is_finite() || t < 0.0 {
                return Err(DataError::InvalidTime { row, value: t });
            }
        }
        for col in &columns {
            let len = match &col.values {
                CovariateValues::Continuous(v) => {
                    for (row, &x) in v.iter().enumerate() {
                        if !x.is_finite() {
                            return Err(DataError::NonNumericValue {
                                row,
                                column: col.name.clone(),
                                value: x.to_string(),
                            });
                        }
                    }
                    v.len()
                }
                CovariateValues::Categorical { codes, labels } => {
                    if labels.len() > LABEL_LIMIT {
                        return Err(DataError::TooManyLabels {
                            column: col.name.clone(),
                            count: labels.len(),
                            limit: LABEL_LIMIT,
                        });
                    }
                    for &c in codes {
                        assert!((c as usize) < labels.len(), "label code out of range");
                    }
                    codes.len()
                }
            };
            assert_eq!(len, times.len(), "column `{}` length mismatch", col.name);
        }
        Ok(Self {
            times,
            status,
            columns,
        })
    }

    pub fn n(&self) -> usize {
        self.times.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.columns.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn status(&self) -> &[bool] {
        &self.status
    }

    pub fn columns(&self) -> &[Covariate] {
        &self.columns
    }

    pub fn column(&self, idx: usize) -> &Covariate {
        &self.columns[idx]
    }

    pub fn value(&self, row: usize, col: usize) -> CovValue {
        match &self.columns[col].values {
            CovariateValues::Continuous(v) => CovValue::Real(v[row]),
            CovariateValues::Categorical { codes, .. } => CovValue::Code(codes[row]),
        }
    }

    pub fn censoring_proportion(&self) -> f64 {
        let censored = self.status.iter().filter(|&&s| !s).count();
        censored as f64 / self.n() as f64
    }

    /// Replaces the time vector, keeping covariates and status. Used by
    /// normalization; lengths must match.
    fn with_times(&self, times: Vec<f64>) -> Self {
        assert_eq!(times.len(), self.times.len());
        Self {
            times,
            status: self.status.clone(),
            columns: self.columns.clone(),
        }
    }
}

/// Dataset with times mapped into [0,1] by dividing by the maximum raw time.
#[derive(Debug, Clone)]
pub struct NormalizedDataset {
    pub dataset: SurvivalDataset,
    pub time_scale: f64,
}

impl NormalizedDataset {
    pub fn denormalize(&self, t: f64) -> f64 {
        t * self.time_scale
    }
}

/// Maps each raw time to `time / max(times)`. Fails when every time is zero.
pub fn normalize_times(d: &SurvivalDataset) -> Result<NormalizedDataset, DataError> {
    let scale = d.times.iter().cloned().fold(0.0_f64, f64::max);
    if scale <= 0.0 {
        return Err(DataError::DegenerateTimes);
    }
    let times = d.times.iter().map(|&t| t / scale).collect();
    Ok(NormalizedDataset {
        dataset: d.with_times(times),
        time_scale: scale,
    })
}

/// Regular grid of `K` equal-width bins over [0,1].
#[derive(Debug, Clone)]
pub struct BinGrid {
    k: usize,
    width: f64,
}

impl BinGrid {
    pub fn new(k: usize) -> Result<Self, DataError> {
        if k == 0 {
            return Err(DataError::ZeroBins);
        }
        Ok(Self {
            k,
            width: 1.0 / k as f64,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    /// Right endpoint s_k of bin k (1-based). s_0 = 0, s_K = 1.
    pub fn endpoint(&self, k: usize) -> f64 {
        if k == self.k {
            1.0
        } else {
            k as f64 * self.width
        }
    }

    /// Midpoint z_k of bin k (1-based).
    pub fn midpoint(&self, k: usize) -> f64 {
        (self.endpoint(k - 1) + self.endpoint(k)) / 2.0
    }

    /// 1-based index of the bin (s_{k-1}, s_k] containing `t`. Times at an
    /// endpoint belong to the left-open right-closed bin ending there; t = 0
    /// is assigned to bin 1.
    pub fn bin_of(&self, t: f64) -> usize {
        if t <= 0.0 {
            return 1;
        }
        // ceil(t / width), clamped against float roundoff at endpoints.
        let k = (t / self.width).ceil() as usize;
        let k = k.clamp(1, self.k);
        if k > 1 && t <= self.endpoint(k - 1) {
            k - 1
        } else {
            k
        }
    }
}

/// Binned sufficient statistics for one node: per-bin uncensored event
/// counts and exposures over the active prefix [1, k_max], where k_max is
/// the bin holding the node's largest observed time. Bins past k_max carry
/// no information for this node and are excluded from its GP.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeStats {
    pub counts: Vec<u32>,
    pub exposures: Vec<f64>,
    pub k_max: usize,
    pub n_obs: usize,
    pub n_events: usize,
    pub bin_width: f64,
}

impl NodeStats {
    pub fn dim(&self) -> usize {
        self.k_max
    }
}

/// Computes `NodeStats` from normalized times and censoring indicators.
///
/// For bin k: n_k counts uncensored observations in (s_{k-1}, s_k]; the
/// exposure is e_k = sum_{j in bin k} (y_j - s_{k-1}) + m_k (s_k - s_{k-1})
/// with m_k the number of observations strictly greater than s_k.
pub fn node_stats(times: &[f64], status: &[bool], grid: &BinGrid) -> Result<NodeStats, DataError> {
    if times.is_empty() {
        return Err(DataError::EmptyNode);
    }
    for &t in times {
        if !(0.0..=1.0).contains(&t) {
            return Err(DataError::TimeOutOfRange(t));
        }
    }
    let k_max = times
        .iter()
        .map(|&t| grid.bin_of(t))
        .max()
        .expect("nonempty");
    let mut counts = vec![0u32; k_max];
    let mut exposures = vec![0.0f64; k_max];
    let mut occupancy = vec![0u32; k_max];
    let mut n_events = 0usize;
    for (j, &t) in times.iter().enumerate() {
        let k = grid.bin_of(t);
        if status[j] {
            counts[k - 1] += 1;
            n_events += 1;
        }
        occupancy[k - 1] += 1;
        exposures[k - 1] += t - grid.endpoint(k - 1);
    }
    // m_k = number of observations beyond s_k = occupancy of bins k+1..k_max;
    // each contributes a full bin width of exposure in bin k.
    let mut beyond = 0u32;
    for k in (0..k_max).rev() {
        exposures[k] += beyond as f64 * grid.width();
        beyond += occupancy[k];
    }
    Ok(NodeStats {
        counts,
        exposures,
        k_max,
        n_obs: times.len(),
        n_events,
        bin_width: grid.width(),
    })
}

/// Gathers the stats for a row subset of a normalized dataset.
pub fn stats_for_rows(
    data: &NormalizedDataset,
    rows: &[u32],
    grid: &BinGrid,
) -> Result<NodeStats, DataError> {
    let times: Vec<f64> = rows.iter().map(|&r| data.dataset.times()[r as usize]).collect();
    let status: Vec<bool> = rows.iter().map(|&r| data.dataset.status()[r as usize]).collect();
    node_stats(&times, &status, grid)
}

/// Column-kind declarations for CSV loading. Kinds omitted from `kinds` are
/// inferred: a column whose every value parses as a number is continuous,
/// anything else is categorical.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub time_column: String,
    pub status_column: String,
    pub kinds: BTreeMap<String, ColumnKind>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            time_column: "time".to_string(),
            status_column: "status".to_string(),
            kinds: BTreeMap::new(),
        }
    }
}

impl CsvSchema {
    /// Reads a sidecar schema: flat `name = "continuous" | "categorical"`
    /// keys, with optional `time` / `status` keys naming those columns.
    pub fn from_toml_file(path: &Path) -> Result<Self, DataError> {
        let text = std::fs::read_to_string(path).map_err(|source| DataError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, DataError> {
        let table: toml::Table = text
            .parse()
            .map_err(|e| DataError::Schema(format!("invalid schema file: {e}")))?;
        let mut schema = CsvSchema::default();
        for (key, value) in table {
            let s = value
                .as_str()
                .ok_or_else(|| DataError::Schema(format!("key `{key}` must be a string")))?;
            match key.as_str() {
                "time" => schema.time_column = s.to_string(),
                "status" => schema.status_column = s.to_string(),
                _ => {
                    let kind = match s {
                        "continuous" => ColumnKind::Continuous,
                        "categorical" => ColumnKind::Categorical,
                        other => {
                            return Err(DataError::Schema(format!(
                                "column `{key}`: unknown kind `{other}`"
                            )))
                        }
                    };
                    schema.kinds.insert(key, kind);
                }
            }
        }
        Ok(schema)
    }
}

/// Loads a comma-delimited, UTF-8, headered CSV. One time column, one 0/1
/// status column, every other column a covariate. Missing values are
/// rejected: the model fits complete cases only.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<SurvivalDataset, DataError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?;
    let headers = reader
        .headers()
        .map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?
        .clone();
    let names: Vec<String> = headers.iter().map(|h| h.trim().to_string()).collect();
    let time_idx = names
        .iter()
        .position(|n| *n == schema.time_column)
        .ok_or_else(|| DataError::MissingColumn(schema.time_column.clone()))?;
    let status_idx = names
        .iter()
        .position(|n| *n == schema.status_column)
        .ok_or_else(|| DataError::MissingColumn(schema.status_column.clone()))?;

    let mut raw: Vec<Vec<String>> = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|source| DataError::Csv {
            path: path.display().to_string(),
            source,
        })?;
        let fields: Vec<String> = record.iter().map(|f| f.trim().to_string()).collect();
        if fields.len() != names.len() {
            return Err(DataError::MissingValue {
                row,
                column: format!("(expected {} fields, got {})", names.len(), fields.len()),
            });
        }
        raw.push(fields);
    }
    if raw.is_empty() {
        return Err(DataError::Empty);
    }

    let mut times = Vec::with_capacity(raw.len());
    let mut status = Vec::with_capacity(raw.len());
    for (row, fields) in raw.iter().enumerate() {
        let tv = &fields[time_idx];
        if tv.is_empty() {
            return Err(DataError::MissingValue {
                row,
                column: schema.time_column.clone(),
            });
        }
        let t: f64 = tv.parse().map_err(|_| DataError::NonNumericTime {
            row,
            value: tv.clone(),
        })?;
        if !t.is_finite() || t < 0.0 {
            return Err(DataError::InvalidTime { row, value: t });
        }
        times.push(t);
        let sv = &fields[status_idx];
        match sv.as_str() {
            "0" => status.push(false),
            "1" => status.push(true),
            other => {
                return Err(DataError::InvalidStatus {
                    row,
                    value: other.to_string(),
                })
            }
        }
    }

    let mut columns = Vec::new();
    for (idx, name) in names.iter().enumerate() {
        if idx == time_idx || idx == status_idx {
            continue;
        }
        let cells: Vec<&String> = raw.iter().map(|fields| &fields[idx]).collect();
        for (row, cell) in cells.iter().enumerate() {
            if cell.is_empty() {
                return Err(DataError::MissingValue {
                    row,
                    column: name.clone(),
                });
            }
        }
        let declared = schema.kinds.get(name).copied();
        let all_numeric = cells.iter().all(|c| c.parse::<f64>().is_ok());
        let kind = declared.unwrap_or(if all_numeric {
            ColumnKind::Continuous
        } else {
            ColumnKind::Categorical
        });
        let values = match kind {
            ColumnKind::Continuous => {
                let mut v = Vec::with_capacity(cells.len());
                for (row, cell) in cells.iter().enumerate() {
                    let x: f64 = cell.parse().map_err(|_| DataError::NonNumericValue {
                        row,
                        column: name.clone(),
                        value: (*cell).clone(),
                    })?;
                    v.push(x);
                }
                CovariateValues::Continuous(v)
            }
            ColumnKind::Categorical => {
                let mut labels: Vec<String> =
                    cells.iter().map(|c| (*c).clone()).collect::<Vec<_>>();
                labels.sort();
                labels.dedup();
                if labels.len() > LABEL_LIMIT {
                    return Err(DataError::TooManyLabels {
                        column: name.clone(),
                        count: labels.len(),
                        limit: LABEL_LIMIT,
                    });
                }
                let codes = cells
                    .iter()
                    .map(|c| labels.binary_search(c).expect("label present") as u32)
                    .collect();
                CovariateValues::Categorical { labels, codes }
            }
        };
        columns.push(Covariate {
            name: name.clone(),
            values,
        });
    }

    SurvivalDataset::new(times, status, columns)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write_temp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    #[test]
    fn load_small_csv() {
        let f = write_temp("time,status,x1\n1,1,0.5\n2,0,1.5\n3,1,2.5\n");
        let d = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(d.n(), 3);
        assert_eq!(d.n_covariates(), 1);
        assert_eq!(d.times(), &[1.0, 2.0, 3.0]);
        assert_eq!(d.status(), &[true, false, true]);
    }

    #[test]
    fn load_rejects_bad_status() {
        let f = write_temp("time,status,x1\n1,2,0.5\n");
        let err = load_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, DataError::InvalidStatus { .. }));
    }

    #[test]
    fn load_rejects_missing_value() {
        let f = write_temp("time,status,x1\n1,1,\n");
        let err = load_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, DataError::MissingValue { .. }));
    }

    #[test]
    fn load_rejects_non_numeric_time() {
        let f = write_temp("time,status,x1\nabc,1,0.5\n");
        let err = load_csv(f.path(), &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, DataError::NonNumericTime { .. }));
    }

    #[test]
    fn load_infers_kinds_and_respects_schema() {
        let f = write_temp("time,status,grp,score\n1,1,A,3\n2,0,B,4\n");
        let d = load_csv(f.path(), &CsvSchema::default()).unwrap();
        assert_eq!(d.column(0).kind(), ColumnKind::Categorical);
        assert_eq!(d.column(1).kind(), ColumnKind::Continuous);

        let schema = CsvSchema::from_toml_str("score = \"categorical\"").unwrap();
        let d = load_csv(f.path(), &schema).unwrap();
        assert_eq!(d.column(1).kind(), ColumnKind::Categorical);
    }

    #[test]
    fn schema_renames_time_status() {
        let f = write_temp("t,died,x\n5,1,1\n6,0,2\n");
        let schema = CsvSchema::from_toml_str("time = \"t\"\nstatus = \"died\"").unwrap();
        let d = load_csv(f.path(), &schema).unwrap();
        assert_eq!(d.times(), &[5.0, 6.0]);
    }

    #[test]
    fn normalize_basic() {
        let d = SurvivalDataset::new(vec![2.0, 4.0, 8.0], vec![true; 3], vec![]).unwrap();
        let nd = normalize_times(&d).unwrap();
        assert_eq!(nd.dataset.times(), &[0.25, 0.5, 1.0]);
        assert_eq!(nd.time_scale, 8.0);
    }

    #[test]
    fn normalize_singleton_and_zero() {
        let d = SurvivalDataset::new(vec![1.0], vec![true], vec![]).unwrap();
        let nd = normalize_times(&d).unwrap();
        assert_eq!(nd.dataset.times(), &[1.0]);
        assert_eq!(nd.time_scale, 1.0);

        let d = SurvivalDataset::new(vec![0.0, 5.0], vec![true, true], vec![]).unwrap();
        let nd = normalize_times(&d).unwrap();
        assert_eq!(nd.dataset.times(), &[0.0, 1.0]);
        assert_eq!(nd.time_scale, 5.0);
    }

    #[test]
    fn normalize_all_zero_errors() {
        let d = SurvivalDataset::new(vec![0.0, 0.0], vec![true, true], vec![]).unwrap();
        assert!(matches!(
            normalize_times(&d),
            Err(DataError::DegenerateTimes)
        ));
    }

    #[test]
    fn normalize_round_trip() {
        let times = vec![0.3, 1.7, 2.2, 9.4, 0.01];
        let d = SurvivalDataset::new(times.clone(), vec![true; 5], vec![]).unwrap();
        let nd = normalize_times(&d).unwrap();
        for (raw, norm) in times.iter().zip(nd.dataset.times()) {
            let back = nd.denormalize(*norm);
            assert!((back - raw).abs() <= 1e-12 * raw.abs().max(1.0));
        }
        let max = nd.dataset.times().iter().cloned().fold(0.0f64, f64::max);
        assert_eq!(max, 1.0);
    }

    #[test]
    fn grid_structure() {
        let g = BinGrid::new(4).unwrap();
        assert_eq!(g.width(), 0.25);
        assert_eq!(g.endpoint(0), 0.0);
        assert_eq!(g.endpoint(4), 1.0);
        assert_eq!(g.midpoint(1), 0.125);
        for k in 1..=4 {
            assert!((g.endpoint(k) - g.endpoint(k - 1) - g.width()).abs() < 1e-15);
            assert!((g.midpoint(k) - (g.endpoint(k - 1) + g.endpoint(k)) / 2.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bin_endpoint_ties_go_left() {
        let g = BinGrid::new(4).unwrap();
        assert_eq!(g.bin_of(0.25), 1);
        assert_eq!(g.bin_of(0.2500001), 2);
        assert_eq!(g.bin_of(0.0), 1);
        assert_eq!(g.bin_of(1.0), 4);
    }

    #[test]
    fn node_stats_single_uncensored() {
        let g = BinGrid::new(2).unwrap();
        let s = node_stats(&[0.75], &[true], &g).unwrap();
        assert_eq!(s.counts, vec![0, 1]);
        assert!((s.exposures[0] - 0.5).abs() < 1e-15);
        assert!((s.exposures[1] - 0.25).abs() < 1e-15);
        assert_eq!(s.k_max, 2);
    }

    #[test]
    fn node_stats_single_censored_same_exposures() {
        let g = BinGrid::new(2).unwrap();
        let s = node_stats(&[0.75], &[false], &g).unwrap();
        assert_eq!(s.counts, vec![0, 0]);
        assert!((s.exposures[0] - 0.5).abs() < 1e-15);
        assert!((s.exposures[1] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn node_stats_early_death_truncates_range() {
        let g = BinGrid::new(4).unwrap();
        let s = node_stats(&[0.20], &[true], &g).unwrap();
        assert_eq!(s.k_max, 1);
        assert_eq!(s.counts, vec![1]);
        assert!((s.exposures[0] - 0.20).abs() < 1e-15);
    }

    #[test]
    fn node_stats_empty_errors() {
        let g = BinGrid::new(4).unwrap();
        assert!(matches!(
            node_stats(&[], &[], &g),
            Err(DataError::EmptyNode)
        ));
    }

    #[test]
    fn exposure_conserves_time_at_risk() {
        // Total exposure equals sum of times for a normalized sample.
        let g = BinGrid::new(7).unwrap();
        let times = [0.03, 0.2, 0.41, 0.55, 0.55, 0.9, 1.0, 0.0001];
        let status = [true, false, true, true, false, true, true, false];
        let s = node_stats(&times, &status, &g).unwrap();
        let total: f64 = s.exposures.iter().sum();
        let expect: f64 = times.iter().sum();
        assert!((total - expect).abs() < 1e-12);
        assert_eq!(s.n_events as usize, status.iter().filter(|&&b| b).count());
        // Every bin at or below the last occupied one has positive exposure.
        for k in 0..s.k_max {
            assert!(s.exposures[k] > 0.0, "bin {k} has zero exposure");
        }
    }

    #[test]
    fn stats_are_additive() {
        let g = BinGrid::new(5).unwrap();
        let t1 = [0.1, 0.5, 0.99];
        let s1 = [true, false, true];
        let t2 = [0.3, 0.77];
        let s2 = [true, true];
        let a = node_stats(&t1, &s1, &g).unwrap();
        let b = node_stats(&t2, &s2, &g).unwrap();
        let mut tt = t1.to_vec();
        tt.extend_from_slice(&t2);
        let mut ss = s1.to_vec();
        ss.extend_from_slice(&s2);
        let both = node_stats(&tt, &ss, &g).unwrap();
        assert_eq!(both.k_max, a.k_max.max(b.k_max));
        for k in 0..both.k_max {
            let ca = a.counts.get(k).copied().unwrap_or(0);
            let cb = b.counts.get(k).copied().unwrap_or(0);
            assert_eq!(both.counts[k], ca + cb);
            let ea = a.exposures.get(k).copied().unwrap_or(0.0);
            let eb = b.exposures.get(k).copied().unwrap_or(0.0);
            assert!((both.exposures[k] - (ea + eb)).abs() < 1e-12);
        }
    }
}
