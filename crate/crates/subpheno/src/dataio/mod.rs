//! Data ingestion and feature construction.
//!
//! Long-format time series come in, wide feature matrices come out:
//! onset detection anchors the windows, per-spec aggregation fills the
//! cells, and imputation plus the Yeo-Johnson transform prepare the
//! matrices for modeling.

pub mod matrix;
pub mod presets;
pub mod timeseries;
pub mod transform;

pub use matrix::{
    build_matrix, impute, impute_apply, impute_fit, read_matrix, write_matrix, Aggregation,
    FeatureKind, FeatureMatrix, FeatureSpec, ImputeStats, ImputeStrategy, StayAnchors, Window,
    NA_TOKEN, SECONDS_PER_DAY,
};
pub use presets::{lca_specs, load_preset, parse_preset, predictive_specs, PresetChoice};
pub use timeseries::{
    detect_onset, load_timeseries, write_timeseries, CsvSchema, LoadStats, OnsetEvent, Record,
    TimeSeriesTable, VAR_FIO2, VAR_PAO2, VAR_PEEP,
};
pub use transform::{yj_apply, yj_fit, yj_fit_named, yj_inverse, yj_loglik, YeoJohnsonParams};
