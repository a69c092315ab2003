//! Fitness-based osmotic service placement across an osmotic (fog) layer
//! and a public-cloud layer, with a seeded simulation harness.

pub mod cli;
pub mod config;
pub mod domain;
pub mod error;
pub mod fitness;
pub mod harness;
pub mod osmosis;
pub mod output;
pub mod selection;
pub mod workload;

pub use domain::{
    FitnessWeights, Layer, LayerKind, ResourceDemand, ServerId, ServerNode, ServiceId,
    ServiceRequest, WeightMode,
};
pub use error::{OsmosisError, Result};
pub use fitness::{FitnessSpace, FitnessValue};
pub use harness::{run_experiment, ExperimentConfig, ExperimentRecord, SuiteKind};
pub use osmosis::{run_osmosis, OsmosisConfig, OsmosisState};
