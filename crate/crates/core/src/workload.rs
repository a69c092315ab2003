//! Seeded service batches and server pools.

use rand::distributions::{Distribution, Uniform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Layer, LayerKind, ResourceDemand, ServiceId, ServiceRequest};
use crate::error::{OsmosisError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    pub num_users: u32,
    pub services_min: usize,
    pub services_max: usize,
    pub load_min: f64,
    pub load_max: f64,
    pub energy_min: f64,
    pub energy_max: f64,
    pub time_min: f64,
    pub time_max: f64,
    pub divisible_fraction: f64,
    pub seed: u64,
    /// Spread the service count evenly over the runs instead of drawing it.
    pub sweep: bool,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            num_users: 10,
            services_min: 12,
            services_max: 110,
            load_min: 1.0,
            load_max: 5.0,
            energy_min: 1.5,
            energy_max: 1.5,
            time_min: 5.0,
            time_max: 20.0,
            divisible_fraction: 0.0,
            seed: 0,
            sweep: false,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(OsmosisError::config("workload.num_users", "must be at least 1"));
        }
        if self.services_min > self.services_max {
            return Err(OsmosisError::config(
                "workload.services_min",
                format!("{} exceeds services_max {}", self.services_min, self.services_max),
            ));
        }
        for (name, lo, hi) in [
            ("load", self.load_min, self.load_max),
            ("energy", self.energy_min, self.energy_max),
            ("time", self.time_min, self.time_max),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0) {
                return Err(OsmosisError::config(
                    format!("workload.{name}_min"),
                    "bounds must be finite and non-negative",
                ));
            }
            if lo > hi {
                return Err(OsmosisError::config(
                    format!("workload.{name}_min"),
                    format!("{lo} exceeds {name}_max {hi}"),
                ));
            }
        }
        if self.time_max <= 0.0 {
            return Err(OsmosisError::config("workload.time_max", "must be positive"));
        }
        if !(0.0..=1.0).contains(&self.divisible_fraction) {
            return Err(OsmosisError::config(
                "workload.divisible_fraction",
                "must lie in [0, 1]",
            ));
        }
        Ok(())
    }
}

/// Per-server capacities of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerSpec {
    pub load_total: f64,
    pub energy_total: f64,
    pub time_total: f64,
    pub concurrent_capacity: usize,
}

impl ServerSpec {
    pub fn totals(&self) -> ResourceDemand {
        ResourceDemand::new(self.load_total, self.energy_total, self.time_total)
    }
}

impl Default for ServerSpec {
    fn default() -> Self {
        Self {
            load_total: 10.0,
            energy_total: 2000.0,
            time_total: 100.0,
            concurrent_capacity: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InfrastructureConfig {
    pub num_osmotic: usize,
    pub num_public: usize,
    pub osmotic: ServerSpec,
    pub public: ServerSpec,
    /// Energy charged per hosted service iteration.
    pub energy_per_iteration: f64,
    pub min_processing_time: f64,
}

impl Default for InfrastructureConfig {
    fn default() -> Self {
        Self {
            num_osmotic: 5,
            num_public: 10,
            osmotic: ServerSpec::default(),
            public: ServerSpec {
                load_total: 40.0,
                energy_total: 8000.0,
                time_total: 400.0,
                concurrent_capacity: 10,
            },
            energy_per_iteration: 1.5,
            min_processing_time: 5.0,
        }
    }
}

impl InfrastructureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_osmotic == 0 {
            return Err(OsmosisError::config("infrastructure.num_osmotic", "must be at least 1"));
        }
        if self.num_public == 0 {
            return Err(OsmosisError::config("infrastructure.num_public", "must be at least 1"));
        }
        for (layer, spec) in [("osmotic", &self.osmotic), ("public", &self.public)] {
            for (field, v) in [
                ("load_total", spec.load_total),
                ("energy_total", spec.energy_total),
                ("time_total", spec.time_total),
            ] {
                if !(v.is_finite() && v > 0.0) {
                    return Err(OsmosisError::config(
                        format!("infrastructure.{layer}.{field}"),
                        format!("must be positive, got {v}"),
                    ));
                }
            }
            if spec.concurrent_capacity == 0 {
                return Err(OsmosisError::config(
                    format!("infrastructure.{layer}.concurrent_capacity"),
                    "must be at least 1",
                ));
            }
        }
        for (field, o, p) in [
            ("load_total", self.osmotic.load_total, self.public.load_total),
            ("energy_total", self.osmotic.energy_total, self.public.energy_total),
            ("time_total", self.osmotic.time_total, self.public.time_total),
            (
                "concurrent_capacity",
                self.osmotic.concurrent_capacity as f64,
                self.public.concurrent_capacity as f64,
            ),
        ] {
            if p < o {
                return Err(OsmosisError::config(
                    format!("infrastructure.public.{field}"),
                    format!("public capacity {p} is below osmotic capacity {o}"),
                ));
            }
        }
        for (field, v) in [
            ("energy_per_iteration", self.energy_per_iteration),
            ("min_processing_time", self.min_processing_time),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OsmosisError::config(
                    format!("infrastructure.{field}"),
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        Ok(())
    }
}

/// How many services a run gets. Drawn uniformly by default; with `sweep`
/// the counts step evenly from `services_min` to `services_max` across
/// `runs`.
pub fn service_count(cfg: &WorkloadConfig, run_index: u64, runs: u64, rng: &mut ChaCha8Rng) -> usize {
    if cfg.sweep {
        let span = (cfg.services_max - cfg.services_min) as u64;
        if runs <= 1 {
            return cfg.services_min;
        }
        let i = run_index % runs;
        cfg.services_min + ((span * i + (runs - 1) / 2) / (runs - 1)) as usize
    } else {
        rng.gen_range(cfg.services_min..=cfg.services_max)
    }
}

fn uniform(lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> f64 {
    if lo == hi {
        lo
    } else {
        Uniform::new_inclusive(lo, hi).sample(rng)
    }
}

/// The RNG stream for one run: seeded from the workload seed, with the run
/// index selecting an independent stream.
pub fn run_rng(seed: u64, run_index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(run_index);
    rng
}

/// The service batch for one run, fully determined by `(cfg, run_index, runs)`.
pub fn generate_services(cfg: &WorkloadConfig, run_index: u64, runs: u64) -> Result<Vec<ServiceRequest>> {
    cfg.validate()?;
    let mut rng = run_rng(cfg.seed, run_index);
    let count = service_count(cfg, run_index, runs, &mut rng);
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let demand = ResourceDemand::new(
            uniform(cfg.load_min, cfg.load_max, &mut rng),
            uniform(cfg.energy_min, cfg.energy_max, &mut rng),
            uniform(cfg.time_min, cfg.time_max, &mut rng),
        );
        let divisible = cfg.divisible_fraction > 0.0 && rng.gen_bool(cfg.divisible_fraction);
        let mut s = ServiceRequest::new(ServiceId::sequential(i), i as u32 % cfg.num_users, demand);
        s.divisible = divisible;
        out.push(s);
    }
    Ok(out)
}

/// Fresh osmotic and public layers.
pub fn build_infrastructure(cfg: &InfrastructureConfig) -> Result<(Layer, Layer)> {
    cfg.validate()?;
    Ok((
        Layer::uniform(
            LayerKind::Osmotic,
            cfg.num_osmotic,
            cfg.osmotic.totals(),
            cfg.osmotic.concurrent_capacity,
        ),
        Layer::uniform(
            LayerKind::Public,
            cfg.num_public,
            cfg.public.totals(),
            cfg.public.concurrent_capacity,
        ),
    ))
}

/// Services a server can host before its energy runs out, each charged at
/// least `cost_per_iteration`.
pub fn service_iterations_until_exhausted(energy_total: f64, cost_per_iteration: f64) -> u64 {
    if cost_per_iteration <= 0.0 {
        return u64::MAX;
    }
    (energy_total / cost_per_iteration).floor() as u64
}
