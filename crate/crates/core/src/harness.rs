//! Experiment suites: many seeded runs per epsilon multiplier, one record each.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{OsmosisError, Result};
use crate::osmosis::{run_osmosis, OsmosisConfig, OsmosisState};
use crate::workload::{build_infrastructure, generate_services, InfrastructureConfig, WorkloadConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// Osmotic/public split per run.
    Distribution,
    /// Share served by the osmotic layer as epsilon grows.
    ProbabilityVsEpsilon,
    /// Allocation effort (`track`) as epsilon grows.
    AllocationTimeVsEpsilon,
}

impl SuiteKind {
    pub const ALL: [SuiteKind; 3] = [
        SuiteKind::Distribution,
        SuiteKind::ProbabilityVsEpsilon,
        SuiteKind::AllocationTimeVsEpsilon,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Distribution => "distribution",
            SuiteKind::ProbabilityVsEpsilon => "probability_vs_epsilon",
            SuiteKind::AllocationTimeVsEpsilon => "allocation_time_vs_epsilon",
        }
    }

    pub fn default_multipliers(self) -> Vec<f64> {
        match self {
            SuiteKind::Distribution => vec![1.0],
            _ => vec![1.0, 2.0, 3.0],
        }
    }
}

impl fmt::Display for SuiteKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SuiteKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let norm = s.replace('-', "_");
        SuiteKind::ALL
            .into_iter()
            .find(|k| k.name() == norm)
            .ok_or_else(|| {
                let valid: Vec<_> = SuiteKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown suite `{s}`; valid suites: {}", valid.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSuite {
    pub kind: SuiteKind,
    pub runs: u32,
    pub epsilon_multipliers: Vec<f64>,
    /// Width of the total-services buckets in [`summarize`].
    pub bucket_width: usize,
}

impl ExperimentSuite {
    pub fn new(kind: SuiteKind) -> Self {
        Self {
            kind,
            runs: 30,
            epsilon_multipliers: kind.default_multipliers(),
            bucket_width: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(OsmosisError::config("suite.runs", "must be at least 1"));
        }
        if self.epsilon_multipliers.is_empty() {
            return Err(OsmosisError::config("suite.epsilon_multipliers", "must not be empty"));
        }
        if self.epsilon_multipliers.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(OsmosisError::config("suite.epsilon_multipliers", "must be positive"));
        }
        if self.bucket_width == 0 {
            return Err(OsmosisError::config("suite.bucket_width", "must be at least 1"));
        }
        Ok(())
    }
}

/// One simulated run. Field names double as CSV headers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub run_id: u32,
    pub seed: u64,
    pub epsilon_initial: f64,
    pub epsilon_final: f64,
    pub total_services: usize,
    pub osmotic_count: usize,
    pub public_count: usize,
    pub unhandled_count: usize,
    pub track: u64,
    pub epsilon_adjustments: u32,
    pub p_osmotic: f64,
    pub wallclock_us: u64,
    /// Set when the run failed; not part of the serialized schema.
    #[serde(skip)]
    pub error: Option<String>,
}

pub const CSV_HEADERS: [&str; 12] = [
    "run_id",
    "seed",
    "epsilon_initial",
    "epsilon_final",
    "total_services",
    "osmotic_count",
    "public_count",
    "unhandled_count",
    "track",
    "epsilon_adjustments",
    "p_osmotic",
    "wallclock_us",
];

impl ExperimentRecord {
    fn failed(run_id: u32, seed: u64, epsilon_initial: f64, err: OsmosisError) -> Self {
        Self {
            run_id,
            seed,
            epsilon_initial,
            epsilon_final: epsilon_initial,
            total_services: 0,
            osmotic_count: 0,
            public_count: 0,
            unhandled_count: 0,
            track: 0,
            epsilon_adjustments: 0,
            p_osmotic: 0.0,
            wallclock_us: 0,
            error: Some(err.to_string()),
        }
    }

    fn from_state(run_id: u32, seed: u64, state: &OsmosisState, wallclock_us: u64) -> Self {
        let total = state.leaf_count;
        let osm = state.osmotic_count();
        Self {
            run_id,
            seed,
            epsilon_initial: state.epsilon_initial,
            epsilon_final: state.epsilon,
            total_services: total,
            osmotic_count: osm,
            public_count: state.public_count(),
            unhandled_count: state.unhandled.len(),
            track: state.track,
            epsilon_adjustments: state.epsilon_adjust_count,
            p_osmotic: if total == 0 { 0.0 } else { osm as f64 / total as f64 },
            wallclock_us,
            error: None,
        }
    }
}

/// Everything needed to reproduce a suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub workload: WorkloadConfig,
    pub infrastructure: InfrastructureConfig,
    pub suite: ExperimentSuite,
    pub osmosis: OsmosisConfig,
}

impl ExperimentConfig {
    pub fn new(kind: SuiteKind) -> Self {
        Self {
            workload: WorkloadConfig::default(),
            infrastructure: InfrastructureConfig::default(),
            suite: ExperimentSuite::new(kind),
            osmosis: OsmosisConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.workload.validate()?;
        self.infrastructure.validate()?;
        self.suite.validate()?;
        self.run_config(1.0).validate()
    }

    /// Osmosis settings for one multiplier, with accounting floors taken
    /// from the infrastructure.
    pub fn run_config(&self, multiplier: f64) -> OsmosisConfig {
        OsmosisConfig {
            epsilon_initial: self.osmosis.epsilon_initial * multiplier,
            energy_per_service: self.infrastructure.energy_per_iteration,
            min_processing_time: self.infrastructure.min_processing_time,
            ..self.osmosis.clone()
        }
    }
}

/// Runs one simulation and returns the final engine state.
pub fn run_single(cfg: &ExperimentConfig, multiplier: f64, run_id: u32) -> Result<OsmosisState> {
    let services = generate_services(&cfg.workload, run_id as u64, cfg.suite.runs as u64)?;
    let (osmotic, public) = build_infrastructure(&cfg.infrastructure)?;
    run_osmosis(services, osmotic, public, &cfg.run_config(multiplier))
}

/// All `runs x multipliers` simulations, ordered by (multiplier, run_id).
/// A failing run yields a record with `error` set; the rest still run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Vec<ExperimentRecord> {
    let jobs: Vec<(f64, u32)> = cfg
        .suite
        .epsilon_multipliers
        .iter()
        .flat_map(|&m| (0..cfg.suite.runs).map(move |r| (m, r)))
        .collect();
    jobs.par_iter()
        .map(|&(m, run_id)| {
            let seed = cfg.workload.seed;
            let start = Instant::now();
            match run_single(cfg, m, run_id) {
                Ok(state) => {
                    let us = start.elapsed().as_micros() as u64;
                    ExperimentRecord::from_state(run_id, seed, &state, us)
                }
                Err(e) => ExperimentRecord::failed(run_id, seed, cfg.osmosis.epsilon_initial * m, e),
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    /// Population mean and standard deviation.
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub epsilon_initial: f64,
    /// Lower edge of the total-services bucket.
    pub bucket_start: usize,
    pub runs: usize,
    pub p_osmotic: Stat,
    pub track: Stat,
    pub wallclock_us: Stat,
}

/// Mean and std per (epsilon, total-services bucket). Failed records are skipped.
pub fn summarize(records: &[ExperimentRecord], bucket_width: usize) -> Result<Vec<SummaryRow>> {
    if bucket_width == 0 {
        return Err(OsmosisError::config("suite.bucket_width", "must be at least 1"));
    }
    let ok: Vec<_> = records.iter().filter(|r| r.error.is_none()).collect();
    if ok.is_empty() {
        return Err(OsmosisError::config("records", "nothing to summarize"));
    }
    let mut groups: BTreeMap<(u64, usize), Vec<&ExperimentRecord>> = BTreeMap::new();
    for r in ok {
        let bucket = r.total_services / bucket_width * bucket_width;
        groups.entry((r.epsilon_initial.to_bits(), bucket)).or_default().push(r);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_iter()
        .map(|((eps, bucket), rs)| {
            let col = |f: fn(&ExperimentRecord) -> f64| Stat::of(&rs.iter().map(|r| f(r)).collect::<Vec<_>>());
            SummaryRow {
                epsilon_initial: f64::from_bits(eps),
                bucket_start: bucket,
                runs: rs.len(),
                p_osmotic: col(|r| r.p_osmotic),
                track: col(|r| r.track as f64),
                wallclock_us: col(|r| r.wallclock_us as f64),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        a.epsilon_initial
            .total_cmp(&b.epsilon_initial)
            .then(a.bucket_start.cmp(&b.bucket_start))
    });
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: SuiteKind, runs: u32) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind);
        cfg.suite.runs = runs;
        cfg.workload.seed = 11;
        cfg
    }

    #[test]
    fn suite_names_round_trip() {
        for k in SuiteKind::ALL {
            assert_eq!(k.name().parse::<SuiteKind>().unwrap(), k);
        }
        assert_eq!("probability-vs-epsilon".parse::<SuiteKind>().unwrap(), SuiteKind::ProbabilityVsEpsilon);
        let err = "nope".parse::<SuiteKind>().unwrap_err();
        assert!(err.contains("distribution"));
    }

    #[test]
    fn records_are_ordered_and_conserve() {
        let cfg = small(SuiteKind::ProbabilityVsEpsilon, 4);
        let recs = run_experiment(&cfg);
        assert_eq!(recs.len(), 12);
        let keys: Vec<_> = recs.iter().map(|r| (r.epsilon_initial as u64, r.run_id)).collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        for r in &recs {
            assert!(r.error.is_none());
            assert_eq!(r.osmotic_count + r.public_count + r.unhandled_count, r.total_services);
            assert_eq!(r.epsilon_final, r.epsilon_initial * 2f64.powi(r.epsilon_adjustments as i32));
            assert!((0.0..=1.0).contains(&r.p_osmotic));
        }
    }

    #[test]
    fn failing_run_is_attached_not_fatal() {
        let mut cfg = small(SuiteKind::Distribution, 2);
        cfg.infrastructure.num_public = 0;
        let recs = run_experiment(&cfg);
        assert_eq!(recs.len(), 2);
        assert!(recs.iter().all(|r| r.error.is_some()));
    }

    fn rec(total: usize, p: f64, track: u64) -> ExperimentRecord {
        ExperimentRecord {
            run_id: 0,
            seed: 0,
            epsilon_initial: 100.0,
            epsilon_final: 100.0,
            total_services: total,
            osmotic_count: 0,
            public_count: total,
            unhandled_count: 0,
            track,
            epsilon_adjustments: 0,
            p_osmotic: p,
            wallclock_us: 5,
            error: None,
        }
    }

    #[test]
    fn summary_of_one_is_the_record() {
        let rows = summarize(&[rec(23, 0.25, 23)], 10).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].bucket_start, 20);
        assert_eq!(rows[0].p_osmotic, Stat { mean: 0.25, std: 0.0 });
        assert_eq!(rows[0].track.mean, 23.0);
    }

    #[test]
    fn identical_records_have_zero_std() {
        let rows = summarize(&[rec(40, 0.5, 40), rec(40, 0.5, 40)], 10).unwrap();
        assert_eq!(rows[0].runs, 2);
        assert_eq!(rows[0].track.std, 0.0);
    }

    #[test]
    fn empty_summary_is_an_error() {
        assert!(summarize(&[], 10).is_err());
    }
}
