//! Feature matrices: per-stay aggregation of time-series variables into
//! named numeric columns with an explicit missingness mask.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::dataio::timeseries::TimeSeriesTable;
use crate::error::{Error, Result};

pub const SECONDS_PER_DAY: i64 = 86_400;

/// Kind of a feature column.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureKind {
    Continuous,
    Binary,
}

/// How observations inside the window collapse to one cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    Min,
    Max,
    Mean,
    Median,
    FirstAvailable,
}

/// Observation window relative to the stay's anchors.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "window")]
pub enum Window {
    /// `[onset, onset + secs)`; empty when the stay has no onset.
    AfterOnset { secs: i64 },
    /// `[admission, admission + 24h)`.
    First24h,
    /// Every observation of the stay.
    WholeStay,
}

/// One output column: source variable, aggregation rule and window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec {
    pub name: String,
    /// Time-series variable the column reads; defaults to `name`.
    #[serde(default)]
    pub variable: Option<String>,
    pub kind: FeatureKind,
    pub aggregation: Aggregation,
    #[serde(flatten)]
    pub window: Window,
    /// Optional winsorization bounds applied to raw observations before
    /// aggregation.
    #[serde(default)]
    pub clamp: Option<(f64, f64)>,
}

impl FeatureSpec {
    pub fn continuous(name: &str, aggregation: Aggregation, window: Window) -> Self {
        FeatureSpec {
            name: name.to_string(),
            variable: None,
            kind: FeatureKind::Continuous,
            aggregation,
            window,
            clamp: None,
        }
    }

    /// Binary features always aggregate with `max`: any occurrence flags true.
    pub fn binary(name: &str, window: Window) -> Self {
        FeatureSpec {
            name: name.to_string(),
            variable: None,
            kind: FeatureKind::Binary,
            aggregation: Aggregation::Max,
            window,
            clamp: None,
        }
    }

    pub fn variable(&self) -> &str {
        self.variable.as_deref().unwrap_or(&self.name)
    }
}

/// Time anchors for one stay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StayAnchors {
    pub admission: i64,
    pub onset: Option<i64>,
}

/// Rows of named numeric features with an explicit missingness mask.
///
/// Masked cells hold a NaN sentinel; consumers must consult the mask (or
/// use [`FeatureMatrix::get`]) instead of reading values directly.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    specs: Vec<FeatureSpec>,
    values: Array2<f64>,
    missing: Array2<bool>,
    row_ids: Vec<String>,
    labels: Option<Vec<bool>>,
}

impl FeatureMatrix {
    pub fn new(
        specs: Vec<FeatureSpec>,
        values: Array2<f64>,
        missing: Array2<bool>,
        row_ids: Vec<String>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let (n, d) = values.dim();
        if n == 0 || d == 0 {
            return Err(Error::Data("feature matrix must be at least 1x1".into()));
        }
        if specs.len() != d || missing.dim() != (n, d) || row_ids.len() != n {
            return Err(Error::Data("feature matrix shape mismatch".into()));
        }
        if let Some(l) = &labels {
            if l.len() != n {
                return Err(Error::Data("label length mismatch".into()));
            }
        }
        let mut seen = HashSet::new();
        for s in &specs {
            if !seen.insert(s.name.as_str()) {
                return Err(Error::Data(format!("duplicate column name `{}`", s.name)));
            }
        }
        let mut values = values;
        for ((i, j), m) in missing.indexed_iter() {
            if *m {
                values[(i, j)] = f64::NAN;
            } else if !values[(i, j)].is_finite() {
                return Err(Error::Data(format!(
                    "non-finite observed value at row {i}, column `{}`",
                    specs[j].name
                )));
            }
        }
        Ok(FeatureMatrix {
            specs,
            values,
            missing,
            row_ids,
            labels,
        })
    }

    /// Construct a fully-observed matrix from raw values.
    pub fn from_dense(
        specs: Vec<FeatureSpec>,
        values: Array2<f64>,
        row_ids: Vec<String>,
        labels: Option<Vec<bool>>,
    ) -> Result<Self> {
        let mask = Array2::from_elem(values.dim(), false);
        FeatureMatrix::new(specs, values, mask, row_ids, labels)
    }

    pub fn n_rows(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_cols(&self) -> usize {
        self.values.ncols()
    }

    pub fn specs(&self) -> &[FeatureSpec] {
        &self.specs
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.specs.iter().map(|s| s.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.specs.iter().position(|s| s.name == name)
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn labels(&self) -> Option<&[bool]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Option<Vec<bool>>) -> Result<()> {
        if let Some(l) = &labels {
            if l.len() != self.n_rows() {
                return Err(Error::Data("label length mismatch".into()));
            }
        }
        self.labels = labels;
        Ok(())
    }

    /// Raw value grid; masked cells are NaN.
    pub fn values(&self) -> ArrayView2<'_, f64> {
        self.values.view()
    }

    pub fn missing(&self) -> &Array2<bool> {
        &self.missing
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.missing[(row, col)]
    }

    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        if self.missing[(row, col)] {
            None
        } else {
            Some(self.values[(row, col)])
        }
    }

    pub fn n_missing(&self) -> usize {
        self.missing.iter().filter(|m| **m).count()
    }

    pub fn is_complete(&self) -> bool {
        self.n_missing() == 0
    }

    /// Observed (non-missing) values of one column.
    pub fn observed_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).filter_map(|i| self.get(i, col)).collect()
    }

    /// New matrix with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.iter().any(|&r| r >= self.n_rows()) {
            return Err(Error::Data("row index out of range".into()));
        }
        let d = self.n_cols();
        let mut values = Array2::zeros((rows.len(), d));
        let mut missing = Array2::from_elem((rows.len(), d), false);
        for (out, &r) in rows.iter().enumerate() {
            for j in 0..d {
                values[(out, j)] = self.values[(r, j)];
                missing[(out, j)] = self.missing[(r, j)];
            }
        }
        FeatureMatrix::new(
            self.specs.clone(),
            values,
            missing,
            rows.iter().map(|&r| self.row_ids[r].clone()).collect(),
            self.labels
                .as_ref()
                .map(|l| rows.iter().map(|&r| l[r]).collect()),
        )
    }

    /// Apply a fitted per-column map to observed cells, leaving the mask
    /// untouched.
    pub fn map_columns(&self, f: impl Fn(usize, f64) -> f64) -> Result<Self> {
        let mut values = self.values.clone();
        for ((i, j), m) in self.missing.indexed_iter() {
            if !*m {
                values[(i, j)] = f(j, values[(i, j)]);
            }
        }
        FeatureMatrix::new(
            self.specs.clone(),
            values,
            self.missing.clone(),
            self.row_ids.clone(),
            self.labels.clone(),
        )
    }
}

/// Resolve a window to a half-open `[start, end)` interval, if defined for
/// this stay.
fn resolve_window(window: Window, anchors: &StayAnchors) -> Result<Option<(i64, i64)>> {
    let span = match window {
        Window::First24h => Some((anchors.admission, anchors.admission + SECONDS_PER_DAY)),
        Window::WholeStay => Some((i64::MIN, i64::MAX)),
        Window::AfterOnset { secs } => {
            if secs <= 0 {
                return Err(Error::Data(format!(
                    "window end before start: after-onset span {secs}s"
                )));
            }
            anchors.onset.map(|t| (t, t.saturating_add(secs)))
        }
    };
    Ok(span)
}

fn aggregate(values: &[f64], rule: Aggregation) -> f64 {
    debug_assert!(!values.is_empty());
    match rule {
        Aggregation::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
        Aggregation::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Aggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        Aggregation::Median => median(values),
        Aggregation::FirstAvailable => values[0],
    }
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Build one row per stay in `anchors`, aggregating each spec's variable
/// over its window. Empty windows set the missing flag.
pub fn build_matrix(
    table: &TimeSeriesTable,
    specs: &[FeatureSpec],
    anchors: &BTreeMap<String, StayAnchors>,
) -> Result<FeatureMatrix> {
    if specs.is_empty() {
        return Err(Error::Data("no feature specs given".into()));
    }
    if anchors.is_empty() {
        return Err(Error::Data("no stays to aggregate".into()));
    }
    let n = anchors.len();
    let d = specs.len();
    let mut values = Array2::from_elem((n, d), f64::NAN);
    let mut missing = Array2::from_elem((n, d), true);
    let mut row_ids = Vec::with_capacity(n);

    for (i, (stay, anchor)) in anchors.iter().enumerate() {
        row_ids.push(stay.clone());
        for (j, spec) in specs.iter().enumerate() {
            let Some((start, end)) = resolve_window(spec.window, anchor)? else {
                continue;
            };
            // Records are time-ordered, so first-available is the first hit.
            let mut in_window: Vec<f64> = table
                .series(stay, spec.variable())
                .into_iter()
                .filter(|(t, _)| *t >= start && *t < end)
                .map(|(_, v)| v)
                .collect();
            if let Some((lo, hi)) = spec.clamp {
                for v in &mut in_window {
                    *v = v.clamp(lo, hi);
                }
            }
            if !in_window.is_empty() {
                values[(i, j)] = aggregate(&in_window, spec.aggregation);
                missing[(i, j)] = false;
            }
        }
    }
    FeatureMatrix::new(specs.to_vec(), values, missing, row_ids, None)
}

/// Imputation statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImputeStrategy {
    Mean,
    Median,
}

/// Per-column fill values fitted on one matrix, applicable to another.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImputeStats {
    pub strategy: ImputeStrategy,
    pub fill: Vec<f64>,
}

/// Fit per-column fill statistics over observed cells only.
pub fn impute_fit(m: &FeatureMatrix, strategy: ImputeStrategy) -> Result<ImputeStats> {
    let mut fill = Vec::with_capacity(m.n_cols());
    for j in 0..m.n_cols() {
        let observed = m.observed_column(j);
        if observed.is_empty() {
            return Err(Error::FullyMissingColumn(m.specs()[j].name.clone()));
        }
        fill.push(match strategy {
            ImputeStrategy::Mean => observed.iter().sum::<f64>() / observed.len() as f64,
            ImputeStrategy::Median => median(&observed),
        });
    }
    Ok(ImputeStats { strategy, fill })
}

/// Fill masked cells with the fitted statistics; observed cells unchanged.
pub fn impute_apply(m: &FeatureMatrix, stats: &ImputeStats) -> Result<FeatureMatrix> {
    if stats.fill.len() != m.n_cols() {
        return Err(Error::DimensionMismatch {
            expected: m.n_cols(),
            got: stats.fill.len(),
        });
    }
    let mut values = m.values.clone();
    for ((i, j), flag) in m.missing.indexed_iter() {
        if *flag {
            values[(i, j)] = stats.fill[j];
        }
    }
    let missing = Array2::from_elem(m.values.dim(), false);
    FeatureMatrix::new(
        m.specs.clone(),
        values,
        missing,
        m.row_ids.clone(),
        m.labels.clone(),
    )
}

/// Fit-and-apply on the same matrix.
pub fn impute(m: &FeatureMatrix, strategy: ImputeStrategy) -> Result<FeatureMatrix> {
    impute_apply(m, &impute_fit(m, strategy)?)
}

/// Missing-cell token in wide-format CSV.
pub const NA_TOKEN: &str = "NA";

/// Write the matrix in wide format: `stay_id`, one column per feature,
/// optional trailing `label` column, `NA` for masked cells.
pub fn write_matrix(m: &FeatureMatrix, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut header = vec!["stay_id".to_string()];
    header.extend(m.specs.iter().map(|s| s.name.clone()));
    if m.labels.is_some() {
        header.push("label".into());
    }
    writeln!(file, "{}", header.join(",")).map_err(|e| Error::io(path, e))?;
    for i in 0..m.n_rows() {
        let mut row = vec![m.row_ids[i].clone()];
        for j in 0..m.n_cols() {
            row.push(match m.get(i, j) {
                Some(v) => format!("{v}"),
                None => NA_TOKEN.to_string(),
            });
        }
        if let Some(labels) = &m.labels {
            row.push(if labels[i] { "1".into() } else { "0".into() });
        }
        writeln!(file, "{}", row.join(",")).map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Read a wide-format matrix written by [`write_matrix`].
///
/// `specs` declares the expected columns; the file's header must contain
/// each spec name (order taken from the specs).
pub fn read_matrix(path: &Path, specs: &[FeatureSpec]) -> Result<FeatureMatrix> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::Reader::from_path(path).map_err(|e| Error::csv(path, e))?;
    let headers = reader.headers().map_err(|e| Error::csv(path, e))?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let idx_stay = col("stay_id")?;
    let idx_label = headers.iter().position(|h| h == "label");
    let idx: Vec<usize> = specs
        .iter()
        .map(|s| col(&s.name))
        .collect::<Result<_>>()?;

    let mut row_ids = Vec::new();
    let mut labels = Vec::new();
    let mut cells: Vec<(f64, bool)> = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        row_ids.push(
            row.get(idx_stay)
                .ok_or_else(|| Error::Data(format!("short row in {}", path.display())))?
                .to_string(),
        );
        for &j in &idx {
            let raw = row
                .get(j)
                .ok_or_else(|| Error::Data(format!("short row in {}", path.display())))?;
            if raw == NA_TOKEN {
                cells.push((f64::NAN, true));
            } else {
                let v: f64 = raw
                    .parse()
                    .map_err(|_| Error::Data(format!("bad numeric cell `{raw}`")))?;
                cells.push((v, false));
            }
        }
        if let Some(jl) = idx_label {
            let raw = row
                .get(jl)
                .ok_or_else(|| Error::Data(format!("short row in {}", path.display())))?;
            labels.push(raw.trim() == "1");
        }
    }
    let n = row_ids.len();
    if n == 0 {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    let d = specs.len();
    let values = Array2::from_shape_vec((n, d), cells.iter().map(|c| c.0).collect())
        .map_err(|e| Error::Data(e.to_string()))?;
    let missing = Array2::from_shape_vec((n, d), cells.iter().map(|c| c.1).collect())
        .map_err(|e| Error::Data(e.to_string()))?;
    FeatureMatrix::new(
        specs.to_vec(),
        values,
        missing,
        row_ids,
        idx_label.map(|_| labels),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn anchors_one(stay: &str, admission: i64, onset: Option<i64>) -> BTreeMap<String, StayAnchors> {
        let mut m = BTreeMap::new();
        m.insert(stay.to_string(), StayAnchors { admission, onset });
        m
    }

    #[test]
    fn max_over_first_day() {
        let mut t = TimeSeriesTable::new();
        t.push("s", 100, "heart_rate", 110.0).unwrap();
        t.push("s", 200, "heart_rate", 123.0).unwrap();
        let specs = vec![FeatureSpec::continuous(
            "heart_rate",
            Aggregation::Max,
            Window::First24h,
        )];
        let m = build_matrix(&t, &specs, &anchors_one("s", 0, None)).unwrap();
        assert_eq!(m.get(0, 0), Some(123.0));
    }

    #[test]
    fn empty_window_sets_missing() {
        let mut t = TimeSeriesTable::new();
        t.push("s", SECONDS_PER_DAY + 1, "heart_rate", 99.0).unwrap();
        let specs = vec![FeatureSpec::continuous(
            "heart_rate",
            Aggregation::Max,
            Window::First24h,
        )];
        let m = build_matrix(&t, &specs, &anchors_one("s", 0, None)).unwrap();
        assert!(m.is_missing(0, 0));
        assert_eq!(m.get(0, 0), None);
    }

    #[test]
    fn first_available_takes_earliest() {
        let mut t = TimeSeriesTable::new();
        t.push("s", 10, "peep", 8.0).unwrap();
        t.push("s", 20, "peep", 5.0).unwrap();
        let specs = vec![FeatureSpec::continuous(
            "peep",
            Aggregation::FirstAvailable,
            Window::WholeStay,
        )];
        let m = build_matrix(&t, &specs, &anchors_one("s", 10, None)).unwrap();
        assert_eq!(m.get(0, 0), Some(8.0));
    }

    #[test]
    fn onset_window_needs_onset() {
        let mut t = TimeSeriesTable::new();
        t.push("s", 50, "bmi", 27.8).unwrap();
        let specs = vec![FeatureSpec::continuous(
            "bmi",
            Aggregation::Median,
            Window::AfterOnset {
                secs: SECONDS_PER_DAY,
            },
        )];
        let m = build_matrix(&t, &specs, &anchors_one("s", 0, None)).unwrap();
        assert!(m.is_missing(0, 0));
        let m = build_matrix(&t, &specs, &anchors_one("s", 0, Some(40))).unwrap();
        assert_eq!(m.get(0, 0), Some(27.8));
    }

    #[test]
    fn negative_window_span_rejected() {
        let mut t = TimeSeriesTable::new();
        t.push("s", 0, "x", 1.0).unwrap();
        let specs = vec![FeatureSpec::continuous(
            "x",
            Aggregation::Mean,
            Window::AfterOnset { secs: -5 },
        )];
        let err = build_matrix(&t, &specs, &anchors_one("s", 0, Some(0))).unwrap_err();
        assert!(matches!(err, Error::Data(_)));
    }

    #[test]
    fn clamp_applies_before_aggregation() {
        let mut t = TimeSeriesTable::new();
        t.push("s", 0, "bmi", 7508.67).unwrap();
        t.push("s", 10, "bmi", 20.0).unwrap();
        let mut spec = FeatureSpec::continuous("bmi", Aggregation::Mean, Window::WholeStay);
        spec.clamp = Some((10.0, 80.0));
        let m = build_matrix(&t, &[spec], &anchors_one("s", 0, None)).unwrap();
        assert_eq!(m.get(0, 0), Some(50.0));
    }

    #[test]
    fn mean_impute_forced_arithmetic() {
        let specs = vec![FeatureSpec::continuous("a", Aggregation::Mean, Window::WholeStay)];
        let values = ndarray::arr2(&[[1.0], [0.0], [3.0]]);
        let missing = ndarray::arr2(&[[false], [true], [false]]);
        let ids = vec!["r1".into(), "r2".into(), "r3".into()];
        let m = FeatureMatrix::new(specs, values, missing, ids, None).unwrap();
        let filled = impute(&m, ImputeStrategy::Mean).unwrap();
        assert_eq!(filled.get(1, 0), Some(2.0));
        assert_eq!(filled.get(0, 0), Some(1.0));
        assert!(filled.is_complete());
    }

    #[test]
    fn median_impute_forced_arithmetic() {
        let specs = vec![FeatureSpec::continuous("a", Aggregation::Mean, Window::WholeStay)];
        let values = ndarray::arr2(&[[1.0], [0.0], [3.0], [10.0]]);
        let missing = ndarray::arr2(&[[false], [true], [false], [false]]);
        let ids = (0..4).map(|i| format!("r{i}")).collect();
        let m = FeatureMatrix::new(specs, values, missing, ids, None).unwrap();
        let filled = impute(&m, ImputeStrategy::Median).unwrap();
        assert_eq!(filled.get(1, 0), Some(3.0));
    }

    #[test]
    fn fully_missing_column_reported_by_name() {
        let specs = vec![
            FeatureSpec::continuous("ok", Aggregation::Mean, Window::WholeStay),
            FeatureSpec::continuous("gone", Aggregation::Mean, Window::WholeStay),
        ];
        let values = ndarray::arr2(&[[1.0, 0.0], [2.0, 0.0]]);
        let missing = ndarray::arr2(&[[false, true], [false, true]]);
        let m = FeatureMatrix::new(specs, values, missing, vec!["a".into(), "b".into()], None)
            .unwrap();
        match impute(&m, ImputeStrategy::Mean).unwrap_err() {
            Error::FullyMissingColumn(name) => assert_eq!(name, "gone"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn impute_matches_recomputation_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let n = 100;
        let d = 5;
        let mut values = Array2::zeros((n, d));
        let mut missing = Array2::from_elem((n, d), false);
        for i in 0..n {
            for j in 0..d {
                values[(i, j)] = rng.random_range(-50.0..50.0);
                missing[(i, j)] = rng.random_bool(0.2);
            }
        }
        // Keep at least one observed cell per column.
        for j in 0..d {
            missing[(j, j)] = false;
        }
        let specs = (0..d)
            .map(|j| FeatureSpec::continuous(&format!("c{j}"), Aggregation::Mean, Window::WholeStay))
            .collect();
        let ids = (0..n).map(|i| format!("r{i}")).collect();
        let m = FeatureMatrix::new(specs, values.clone(), missing.clone(), ids, None).unwrap();

        for strategy in [ImputeStrategy::Mean, ImputeStrategy::Median] {
            let filled = impute(&m, strategy).unwrap();
            for j in 0..d {
                // Independent recomputation over observed cells.
                let mut obs: Vec<f64> = (0..n)
                    .filter(|&i| !missing[(i, j)])
                    .map(|i| values[(i, j)])
                    .collect();
                let expected = match strategy {
                    ImputeStrategy::Mean => obs.iter().sum::<f64>() / obs.len() as f64,
                    ImputeStrategy::Median => {
                        obs.sort_by(f64::total_cmp);
                        if obs.len() % 2 == 1 {
                            obs[obs.len() / 2]
                        } else {
                            0.5 * (obs[obs.len() / 2 - 1] + obs[obs.len() / 2])
                        }
                    }
                };
                for i in 0..n {
                    let got = filled.get(i, j).unwrap();
                    if missing[(i, j)] {
                        assert_eq!(got, expected, "filled cell ({i},{j})");
                    } else {
                        assert_eq!(got, values[(i, j)], "observed cell ({i},{j})");
                    }
                }
            }
        }
    }

    #[test]
    fn duplicate_column_names_rejected() {
        let specs = vec![
            FeatureSpec::continuous("x", Aggregation::Mean, Window::WholeStay),
            FeatureSpec::continuous("x", Aggregation::Max, Window::WholeStay),
        ];
        let values = ndarray::arr2(&[[1.0, 2.0]]);
        let missing = ndarray::arr2(&[[false, false]]);
        assert!(FeatureMatrix::new(specs, values, missing, vec!["r".into()], None).is_err());
    }

    proptest! {
        /// Order of input records must not change min/max/mean/median cells.
        #[test]
        fn aggregation_is_permutation_invariant(
            mut vals in proptest::collection::vec(-100.0f64..100.0, 2..30),
            perm_seed in 0u64..1000
        ) {
            let build = |vals: &[f64]| {
                let mut t = TimeSeriesTable::new();
                for (i, v) in vals.iter().enumerate() {
                    t.push("s", i as i64, "v", *v).unwrap();
                }
                let specs = vec![
                    FeatureSpec::continuous("min", Aggregation::Min, Window::WholeStay),
                    FeatureSpec::continuous("max", Aggregation::Max, Window::WholeStay),
                    FeatureSpec::continuous("mean", Aggregation::Mean, Window::WholeStay),
                    FeatureSpec::continuous("med", Aggregation::Median, Window::WholeStay),
                ];
                let specs = specs.into_iter().map(|mut s| { s.variable = Some("v".into()); s }).collect::<Vec<_>>();
                build_matrix(&t, &specs, &anchors_one("s", 0, None)).unwrap()
            };
            let base = build(&vals);
            let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
            for i in (1..vals.len()).rev() {
                let j = rng.random_range(0..=i);
                vals.swap(i, j);
            }
            let shuffled = build(&vals);
            for j in 0..4 {
                let a = base.get(0, j).unwrap();
                let b = shuffled.get(0, j).unwrap();
                // Mean re-sums in a different order; allow round-off there.
                prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "col {j}: {a} vs {b}");
            }
        }

        /// Wide CSV round-trip preserves values, mask and labels.
        #[test]
        fn matrix_roundtrip(
            n in 1usize..12,
            d in 1usize..5,
            seed in 0u64..500
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut values = Array2::zeros((n, d));
            let mut missing = Array2::from_elem((n, d), false);
            for i in 0..n {
                for j in 0..d {
                    values[(i, j)] = rng.random_range(-1e6..1e6);
                    missing[(i, j)] = rng.random_bool(0.3);
                }
            }
            let specs: Vec<FeatureSpec> = (0..d)
                .map(|j| FeatureSpec::continuous(&format!("c{j}"), Aggregation::Mean, Window::WholeStay))
                .collect();
            let ids = (0..n).map(|i| format!("r{i}")).collect();
            let labels: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            let m = FeatureMatrix::new(specs.clone(), values, missing, ids, Some(labels)).unwrap();

            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("m.csv");
            write_matrix(&m, &path).unwrap();
            let back = read_matrix(&path, &specs).unwrap();
            prop_assert_eq!(back.row_ids(), m.row_ids());
            prop_assert_eq!(back.labels(), m.labels());
            prop_assert_eq!(back.missing(), m.missing());
            for i in 0..n {
                for j in 0..d {
                    prop_assert_eq!(back.get(i, j), m.get(i, j));
                }
            }
        }
    }
}
