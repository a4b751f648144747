//! Bundled feature-specification presets and the declarative preset file
//! format.
//!
//! Two presets ship with the crate: the class-defining variable set used
//! for latent-class modeling (post-onset windows) and the wider variable
//! set used for predictive modeling (first-24h / whole-stay windows).
//! Custom presets load from TOML files with the same schema.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::matrix::FeatureSpec;
use crate::error::{Error, Result};

/// Raw preset document: a list of `[[feature]]` tables.
#[derive(Debug, Serialize, Deserialize)]
struct PresetFile {
    feature: Vec<FeatureSpec>,
}

pub const LCA_PRESET: &str = include_str!("../../presets/lca.toml");
pub const PREDICTIVE_PRESET: &str = include_str!("../../presets/predictive.toml");

/// Parse a preset document.
pub fn parse_preset(text: &str) -> Result<Vec<FeatureSpec>> {
    let parsed: PresetFile =
        toml::from_str(text).map_err(|e| Error::Config(format!("bad preset: {e}")))?;
    if parsed.feature.is_empty() {
        return Err(Error::Config("preset declares no features".into()));
    }
    Ok(parsed.feature)
}

/// Load a preset from a file on disk.
pub fn load_preset(path: &Path) -> Result<Vec<FeatureSpec>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_preset(&text)
}

/// Class-defining variables, aggregated over the 24 hours after onset.
pub fn lca_specs() -> Vec<FeatureSpec> {
    parse_preset(LCA_PRESET).expect("bundled preset parses")
}

/// Predictive-model variables, aggregated over admission-anchored windows.
pub fn predictive_specs() -> Vec<FeatureSpec> {
    parse_preset(PREDICTIVE_PRESET).expect("bundled preset parses")
}

/// Named preset selection, as it appears in pipeline configs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PresetChoice {
    #[default]
    Lca,
    Predictive,
    Custom,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::matrix::{Aggregation, FeatureKind, Window};

    #[test]
    fn lca_preset_parses_with_expected_columns() {
        let specs = lca_specs();
        let names: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(
            names,
            vec![
                "albumin",
                "bicarbonate",
                "total_bilirubin",
                "bmi",
                "creatinine",
                "glucose",
                "hematocrit",
                "heart_rate",
                "mean_airway_pressure",
                "paco2",
                "pf_ratio",
                "peep",
                "plateau_pressure",
                "platelet_count",
                "sbp",
                "sodium",
                "temperature",
                "tidal_volume",
                "wbc",
                "sepsis",
                "shock",
                "aspiration",
                "pneumonia",
            ]
        );
        // Spot-check the aggregation rules encoded by the preset.
        let by_name = |n: &str| specs.iter().find(|s| s.name == n).unwrap();
        assert_eq!(by_name("bicarbonate").aggregation, Aggregation::Mean);
        assert_eq!(by_name("creatinine").aggregation, Aggregation::Max);
        assert_eq!(by_name("glucose").aggregation, Aggregation::Min);
        assert_eq!(by_name("pf_ratio").aggregation, Aggregation::FirstAvailable);
        assert_eq!(by_name("peep").aggregation, Aggregation::FirstAvailable);
        assert_eq!(by_name("bmi").aggregation, Aggregation::Median);
        assert_eq!(by_name("sepsis").kind, FeatureKind::Binary);
        assert_eq!(by_name("sepsis").aggregation, Aggregation::Max);
        for s in &specs {
            match s.kind {
                FeatureKind::Continuous => {
                    assert!(matches!(s.window, Window::AfterOnset { secs: 86_400 }))
                }
                FeatureKind::Binary => assert!(matches!(s.window, Window::WholeStay)),
            }
        }
    }

    #[test]
    fn predictive_preset_parses() {
        let specs = predictive_specs();
        assert!(specs.len() > 80, "got {}", specs.len());
        let binary = specs
            .iter()
            .filter(|s| s.kind == FeatureKind::Binary)
            .count();
        assert!(binary >= 15, "got {binary} binary flags");
        // Expanded min/mean/max triplets read the same source variable.
        let lac_min = specs.iter().find(|s| s.name == "lactate_min").unwrap();
        let lac_max = specs.iter().find(|s| s.name == "lactate_max").unwrap();
        assert_eq!(lac_min.variable(), "lactate");
        assert_eq!(lac_max.variable(), "lactate");
        assert_eq!(lac_min.aggregation, Aggregation::Min);
        assert!(matches!(lac_min.window, Window::First24h));
        // Whole-stay extremes from the source table.
        let ph_min = specs.iter().find(|s| s.name == "ph_stay_min").unwrap();
        assert!(matches!(ph_min.window, Window::WholeStay));
    }

    #[test]
    fn custom_preset_file_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("custom.toml");
        std::fs::write(
            &path,
            r#"
[[feature]]
name = "hr_max"
variable = "heart_rate"
kind = "continuous"
aggregation = "max"
window = "first24h"

[[feature]]
name = "trauma"
kind = "binary"
aggregation = "max"
window = "whole_stay"

[[feature]]
name = "late_bmi"
variable = "bmi"
kind = "continuous"
aggregation = "median"
window = "after_onset"
secs = 43200
clamp = [5.0, 100.0]
"#,
        )
        .unwrap();
        let specs = load_preset(&path).unwrap();
        assert_eq!(specs.len(), 3);
        assert_eq!(specs[0].variable(), "heart_rate");
        assert_eq!(specs[1].variable(), "trauma");
        assert_eq!(specs[2].window, Window::AfterOnset { secs: 43_200 });
        assert_eq!(specs[2].clamp, Some((5.0, 100.0)));
    }
}
