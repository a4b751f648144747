//! Long-format time-series storage, CSV ingestion and onset detection.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One measurement: a named value for a stay at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub timestamp: i64,
    pub variable: String,
    pub value: f64,
}

/// All measurements grouped by stay, each stay's records kept in
/// nondecreasing timestamp order (ties keep insertion order).
#[derive(Debug, Clone, Default)]
pub struct TimeSeriesTable {
    stays: BTreeMap<String, Vec<Record>>,
    n_records: usize,
}

/// Column-name mapping for long-format CSV input.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub stay_id: String,
    pub timestamp: String,
    pub variable: String,
    pub value: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            stay_id: "stay_id".into(),
            timestamp: "timestamp".into(),
            variable: "variable".into(),
            value: "value".into(),
        }
    }
}

/// Load statistics reported alongside the table.
#[derive(Debug, Clone, Copy, Default)]
pub struct LoadStats {
    pub loaded: usize,
    pub skipped: usize,
}

impl TimeSeriesTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert one record. Finite value and nonempty variable name required.
    pub fn push(&mut self, stay_id: &str, timestamp: i64, variable: &str, value: f64) -> Result<()> {
        if !value.is_finite() {
            return Err(Error::Data(format!(
                "non-finite value for `{variable}` in stay {stay_id}"
            )));
        }
        if variable.is_empty() {
            return Err(Error::Data(format!("empty variable name in stay {stay_id}")));
        }
        let records = self.stays.entry(stay_id.to_string()).or_default();
        let rec = Record {
            timestamp,
            variable: variable.to_string(),
            value,
        };
        // Most input arrives already sorted; fall back to a stable insert.
        match records.last() {
            Some(last) if last.timestamp > timestamp => {
                let pos = records.partition_point(|r| r.timestamp <= timestamp);
                records.insert(pos, rec);
            }
            _ => records.push(rec),
        }
        self.n_records += 1;
        Ok(())
    }

    pub fn n_records(&self) -> usize {
        self.n_records
    }

    pub fn n_stays(&self) -> usize {
        self.stays.len()
    }

    /// Stay identifiers in sorted order.
    pub fn stay_ids(&self) -> impl Iterator<Item = &str> {
        self.stays.keys().map(String::as_str)
    }

    /// Records for one stay in nondecreasing timestamp order.
    pub fn records(&self, stay_id: &str) -> &[Record] {
        self.stays.get(stay_id).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Earliest timestamp for a stay, used as the admission anchor.
    pub fn admission_time(&self, stay_id: &str) -> Option<i64> {
        self.records(stay_id).first().map(|r| r.timestamp)
    }

    /// (timestamp, value) pairs of one variable for one stay, in time order.
    pub fn series(&self, stay_id: &str, variable: &str) -> Vec<(i64, f64)> {
        self.records(stay_id)
            .iter()
            .filter(|r| r.variable == variable)
            .map(|r| (r.timestamp, r.value))
            .collect()
    }
}

/// Read a long-format delimiter-separated file.
///
/// Malformed rows (bad timestamp or value, missing fields) are skipped and
/// counted; a file with zero parseable rows is an error.
pub fn load_timeseries(path: &Path, schema: &CsvSchema) -> Result<(TimeSeriesTable, LoadStats)> {
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let mut reader = csv::ReaderBuilder::new()
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::csv(path, e))?;

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
    let idx_stay = col(&schema.stay_id)?;
    let idx_ts = col(&schema.timestamp)?;
    let idx_var = col(&schema.variable)?;
    let idx_val = col(&schema.value)?;

    let mut table = TimeSeriesTable::new();
    let mut stats = LoadStats::default();
    for row in reader.records() {
        let row = row.map_err(|e| Error::csv(path, e))?;
        let parsed = (|| {
            let stay = row.get(idx_stay)?;
            let ts: i64 = row.get(idx_ts)?.trim().parse().ok()?;
            let var = row.get(idx_var)?;
            let val: f64 = row.get(idx_val)?.trim().parse().ok()?;
            if stay.is_empty() || var.is_empty() || !val.is_finite() {
                return None;
            }
            Some((stay.to_string(), ts, var.to_string(), val))
        })();
        match parsed {
            Some((stay, ts, var, val)) => {
                table.push(&stay, ts, &var, val)?;
                stats.loaded += 1;
            }
            None => stats.skipped += 1,
        }
    }
    if stats.skipped > 0 {
        log::warn!(
            "{}: skipped {} unparseable rows ({} loaded)",
            path.display(),
            stats.skipped,
            stats.loaded
        );
    }
    if stats.loaded == 0 {
        return Err(Error::EmptyInput(path.to_path_buf()));
    }
    Ok((table, stats))
}

/// Write the table in the same long format `load_timeseries` reads.
pub fn write_timeseries(table: &TimeSeriesTable, path: &Path) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    writeln!(file, "stay_id,timestamp,variable,value").map_err(|e| Error::io(path, e))?;
    for stay in table.stay_ids() {
        for rec in table.records(stay) {
            writeln!(file, "{stay},{},{},{}", rec.timestamp, rec.variable, rec.value)
                .map_err(|e| Error::io(path, e))?;
        }
    }
    Ok(())
}

/// Variable names the onset rule consumes.
pub const VAR_PAO2: &str = "pao2";
pub const VAR_FIO2: &str = "fio2";
pub const VAR_PEEP: &str = "peep";

/// Hypoxemia onset: the earliest time at which the PaO2/FiO2 ratio drops to
/// 300 or below while the concurrent PEEP is at least 5 cmH2O.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnsetEvent {
    pub stay_id: String,
    pub onset_time: i64,
    pub qualifying_pf: f64,
    pub qualifying_peep: f64,
}

/// Scan one stay for the onset condition.
///
/// PaO2 is the sparse laboratory value, so FiO2 and PEEP are carried
/// forward (most recent observation at or before each PaO2 timestamp).
/// PaO2 timestamps with no prior FiO2 or PEEP observation cannot be
/// evaluated and are skipped. Returns `None` when no timepoint qualifies.
pub fn detect_onset(table: &TimeSeriesTable, stay_id: &str) -> Option<OnsetEvent> {
    let pao2 = table.series(stay_id, VAR_PAO2);
    let fio2 = table.series(stay_id, VAR_FIO2);
    let peep = table.series(stay_id, VAR_PEEP);
    if pao2.is_empty() || fio2.is_empty() || peep.is_empty() {
        return None;
    }

    let carry_forward = |series: &[(i64, f64)], t: i64| -> Option<f64> {
        series
            .iter()
            .take_while(|(ts, _)| *ts <= t)
            .last()
            .map(|(_, v)| *v)
    };

    for (t, pao2_val) in &pao2 {
        let Some(fio2_val) = carry_forward(&fio2, *t) else {
            continue;
        };
        let Some(peep_val) = carry_forward(&peep, *t) else {
            continue;
        };
        if fio2_val <= 0.0 {
            continue;
        }
        let pf = pao2_val / fio2_val;
        if pf <= 300.0 && peep_val >= 5.0 {
            return Some(OnsetEvent {
                stay_id: stay_id.to_string(),
                onset_time: *t,
                qualifying_pf: pf,
                qualifying_peep: peep_val,
            });
        }
    }
    None
}
