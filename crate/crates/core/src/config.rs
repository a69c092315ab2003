//! TOML config loading.
//!
//! Four optional sections: `[workload]`, `[infrastructure]` (with
//! `[infrastructure.osmotic]` and `[infrastructure.public]`), `[suite]` and
//! `[osmosis]`. Omitted keys take their defaults; unknown keys are errors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{OsmosisError, Result};
use crate::harness::{ExperimentConfig, ExperimentSuite, SuiteKind};
use crate::osmosis::OsmosisConfig;
use crate::workload::{InfrastructureConfig, WorkloadConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SuiteSection {
    pub name: SuiteKind,
    pub runs: u32,
    /// Defaults depend on the suite when omitted.
    pub epsilon_multipliers: Option<Vec<f64>>,
    pub bucket_width: usize,
}

impl Default for SuiteSection {
    fn default() -> Self {
        Self {
            name: SuiteKind::Distribution,
            runs: 30,
            epsilon_multipliers: None,
            bucket_width: 10,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub workload: WorkloadConfig,
    pub infrastructure: InfrastructureConfig,
    pub suite: SuiteSection,
    pub osmosis: OsmosisConfig,
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub suite: Option<SuiteKind>,
    pub seed: Option<u64>,
    pub runs: Option<u32>,
    pub sweep_services: bool,
}

impl ConfigFile {
    pub fn resolve(self, overrides: &Overrides) -> Result<ExperimentConfig> {
        let kind = overrides.suite.unwrap_or(self.suite.name);
        let mut workload = self.workload;
        if let Some(seed) = overrides.seed {
            workload.seed = seed;
        }
        if overrides.sweep_services {
            workload.sweep = true;
        }
        let cfg = ExperimentConfig {
            workload,
            infrastructure: self.infrastructure,
            suite: ExperimentSuite {
                kind,
                runs: overrides.runs.unwrap_or(self.suite.runs),
                epsilon_multipliers: self
                    .suite
                    .epsilon_multipliers
                    .unwrap_or_else(|| kind.default_multipliers()),
                bucket_width: self.suite.bucket_width,
            },
            osmosis: self.osmosis,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses config text without validating value constraints.
pub fn parse_config_file(text: &str) -> Result<ConfigFile> {
    let de = toml::Deserializer::new(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let key = if path == "." { "<root>".to_string() } else { path };
        OsmosisError::config(key, e.inner().message().trim().to_string())
    })
}

/// Parses and validates config text.
pub fn parse_config_str(text: &str) -> Result<ExperimentConfig> {
    parse_config_file(text)?.resolve(&Overrides::default())
}

pub fn parse_config(path: &Path) -> Result<ExperimentConfig> {
    load(Some(path), &Overrides::default())
}

/// Loads `path` (or the defaults when `None`) and applies `overrides`.
pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let file = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p)
                .map_err(|e| OsmosisError::config(p.display().to_string(), format!("cannot read config: {e}")))?;
            parse_config_file(&text)?
        }
        None => ConfigFile::default(),
    };
    file.resolve(overrides)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::WeightMode;

    fn key_of(r: Result<ExperimentConfig>) -> String {
        match r {
            Err(OsmosisError::Config { key, .. }) => key,
            other => panic!("expected config error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_gives_defaults() {
        let cfg = parse_config_str("").unwrap();
        assert_eq!(cfg.infrastructure.num_osmotic, 5);
        assert_eq!(cfg.infrastructure.num_public, 10);
        assert_eq!(cfg.osmosis.epsilon_initial, 100.0);
        assert_eq!(cfg.infrastructure.osmotic.energy_total, 2000.0);
        assert_eq!(cfg.infrastructure.energy_per_iteration, 1.5);
        assert_eq!(cfg.infrastructure.min_processing_time, 5.0);
        assert_eq!(cfg.infrastructure.osmotic.time_total, 100.0);
        assert_eq!(cfg.workload.num_users, 10);
        assert_eq!((cfg.workload.services_min, cfg.workload.services_max), (12, 110));
        assert_eq!(cfg.workload.time_min, 5.0);
        assert_eq!(cfg.suite.runs, 30);
        assert_eq!(cfg.suite.kind, SuiteKind::Distribution);
        assert_eq!(cfg.suite.epsilon_multipliers, vec![1.0]);
    }

    #[test]
    fn multipliers_sweep() {
        let cfg = parse_config_str("[suite]\nname = \"probability_vs_epsilon\"\nepsilon_multipliers = [1, 2, 3]\n")
            .unwrap();
        assert_eq!(cfg.suite.epsilon_multipliers, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn suite_default_multipliers_follow_name() {
        let cfg = parse_config_str("[suite]\nname = \"allocation_time_vs_epsilon\"\n").unwrap();
        assert_eq!(cfg.suite.epsilon_multipliers, vec![1.0, 2.0, 3.0]);
    }

    #[test]
    fn zero_osmotic_names_key() {
        assert_eq!(
            key_of(parse_config_str("[infrastructure]\nnum_osmotic = 0\n")),
            "infrastructure.num_osmotic"
        );
    }

    #[test]
    fn unknown_key_is_rejected_with_path() {
        let err = parse_config_str("[workload]\nnum_userz = 3\n").unwrap_err();
        let text = err.to_string();
        assert!(text.contains("workload"), "{text}");
        assert!(text.contains("num_userz"), "{text}");
    }

    #[test]
    fn unknown_section_is_rejected() {
        assert!(parse_config_str("[extra]\na = 1\n").is_err());
    }

    #[test]
    fn malformed_toml_is_an_error() {
        assert!(matches!(parse_config_str("[workload\n"), Err(OsmosisError::Config { .. })));
    }

    #[test]
    fn osmosis_section() {
        let cfg = parse_config_str(
            "[osmosis]\nepsilon = 50.0\nweights = \"independent\"\ndominant_property = \"energy\"\nlag_fraction = 0.25\n",
        )
        .unwrap();
        assert_eq!(cfg.osmosis.epsilon_initial, 50.0);
        assert_eq!(cfg.osmosis.weight_mode, WeightMode::Independent);
        assert_eq!(cfg.osmosis.lag_fraction, 0.25);
    }

    #[test]
    fn overrides_win() {
        let file = parse_config_file("[workload]\nseed = 1\n[suite]\nruns = 5\n").unwrap();
        let cfg = file
            .resolve(&Overrides {
                suite: Some(SuiteKind::ProbabilityVsEpsilon),
                seed: Some(9),
                runs: Some(2),
                sweep_services: true,
            })
            .unwrap();
        assert_eq!(cfg.workload.seed, 9);
        assert_eq!(cfg.suite.runs, 2);
        assert!(cfg.workload.sweep);
        assert_eq!(cfg.suite.kind, SuiteKind::ProbabilityVsEpsilon);
        assert_eq!(cfg.suite.epsilon_multipliers.len(), 3);
    }

    #[test]
    fn missing_file_is_config_error() {
        assert!(matches!(
            parse_config(Path::new("/nonexistent/osmosis.toml")),
            Err(OsmosisError::Config { .. })
        ));
    }
}
