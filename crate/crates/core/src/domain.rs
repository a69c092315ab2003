//! Core value types: demands, services, servers, layers and weights.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{OsmosisError, Result};

/// Absolute tolerance for demand conservation checks.
pub const DEMAND_TOLERANCE: f64 = 1e-9;

/// A (load, energy, time) triple. Used both for what a service asks for
/// and for what a server has left.
///
/// Load is in abstract work units, energy in joules, time in seconds of
/// reserved processing.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ResourceDemand {
    pub load: f64,
    pub energy: f64,
    pub time: f64,
}

impl ResourceDemand {
    pub const ZERO: ResourceDemand = ResourceDemand {
        load: 0.0,
        energy: 0.0,
        time: 0.0,
    };

    pub fn new(load: f64, energy: f64, time: f64) -> Self {
        Self { load, energy, time }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.load, self.energy, self.time]
    }

    pub fn from_array(v: [f64; 3]) -> Self {
        Self::new(v[0], v[1], v[2])
    }

    /// Non-negative in every component and positive in at least one.
    pub fn is_valid_service_demand(&self) -> bool {
        let v = self.to_array();
        v.iter().all(|x| x.is_finite() && *x >= 0.0) && v.iter().any(|x| *x > 0.0)
    }

    pub fn scaled(self, factor: f64) -> Self {
        Self::new(self.load * factor, self.energy * factor, self.time * factor)
    }

    /// Component-wise `self <= other`, with a small absolute slack so that
    /// exact-fit placements survive float round-off.
    pub fn fits_within(&self, other: &ResourceDemand) -> bool {
        const SLACK: f64 = 1e-9;
        self.load <= other.load + SLACK
            && self.energy <= other.energy + SLACK
            && self.time <= other.time + SLACK
    }

    pub fn approx_eq(&self, other: &ResourceDemand, tol: f64) -> bool {
        (self.load - other.load).abs() <= tol
            && (self.energy - other.energy).abs() <= tol
            && (self.time - other.time).abs() <= tol
    }
}

impl std::ops::Add for ResourceDemand {
    type Output = ResourceDemand;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.load + rhs.load, self.energy + rhs.energy, self.time + rhs.time)
    }
}

impl std::ops::AddAssign for ResourceDemand {
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl std::ops::Sub for ResourceDemand {
    type Output = ResourceDemand;
    fn sub(self, rhs: Self) -> Self {
        Self::new(self.load - rhs.load, self.energy - rhs.energy, self.time - rhs.time)
    }
}

impl std::iter::Sum for ResourceDemand {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(ResourceDemand::ZERO, |acc, d| acc + d)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ServiceId(pub String);

impl ServiceId {
    /// Id of the `index`-th generated service (`s0007`); zero padding keeps
    /// lexical and generation order identical for runs up to 10^4 services.
    pub fn sequential(index: usize) -> Self {
        ServiceId(format!("s{index:04}"))
    }

    /// Id of the `part`-th child produced by splitting this service.
    pub fn child(&self, part: usize) -> Self {
        ServiceId(format!("{}.{part}", self.0))
    }
}

impl fmt::Display for ServiceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceRequest {
    pub id: ServiceId,
    pub user_id: u32,
    pub demand: ResourceDemand,
    pub divisible: bool,
    pub parent_id: Option<ServiceId>,
}

impl ServiceRequest {
    pub fn new(id: ServiceId, user_id: u32, demand: ResourceDemand) -> Self {
        Self {
            id,
            user_id,
            demand,
            divisible: false,
            parent_id: None,
        }
    }

    /// Split depth, counted from the number of `.` suffixes on the id.
    pub fn split_depth(&self) -> usize {
        self.id.0.matches('.').count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ServerId(pub u32);

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A compute resource with its capacity and what has been consumed so far.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerNode {
    pub id: ServerId,
    /// L_a
    pub load_current: f64,
    /// L_t
    pub load_total: f64,
    /// E_c
    pub energy_consumed: f64,
    /// E_t
    pub energy_total: f64,
    /// tau_p
    pub time_used: f64,
    /// tau_t
    pub time_total: f64,
    pub concurrent_capacity: usize,
    pub hosted: Vec<ServiceId>,
}

impl ServerNode {
    /// A server with nothing consumed and nothing hosted.
    pub fn fresh(id: ServerId, totals: ResourceDemand, concurrent_capacity: usize) -> Self {
        Self {
            id,
            load_current: 0.0,
            load_total: totals.load,
            energy_consumed: 0.0,
            energy_total: totals.energy,
            time_used: 0.0,
            time_total: totals.time,
            concurrent_capacity,
            hosted: Vec::new(),
        }
    }

    pub fn totals(&self) -> ResourceDemand {
        ResourceDemand::new(self.load_total, self.energy_total, self.time_total)
    }

    pub fn consumed(&self) -> ResourceDemand {
        ResourceDemand::new(self.load_current, self.energy_consumed, self.time_used)
    }

    pub fn has_free_slot(&self) -> bool {
        self.hosted.len() < self.concurrent_capacity
    }

    /// True when the server has a free slot and enough headroom in every
    /// component for `charge`.
    pub fn admits(&self, charge: &ResourceDemand) -> bool {
        self.has_free_slot() && charge.fits_within(&remaining_capacity(self))
    }

    /// Records `service` on this server and consumes `charge`. Callers check
    /// [`ServerNode::admits`] first.
    pub fn host(&mut self, service: ServiceId, charge: ResourceDemand) {
        debug_assert!(self.admits(&charge));
        self.load_current = (self.load_current + charge.load).min(self.load_total);
        self.energy_consumed = (self.energy_consumed + charge.energy).min(self.energy_total);
        self.time_used = (self.time_used + charge.time).min(self.time_total);
        self.hosted.push(service);
    }

    pub fn invariants_hold(&self) -> bool {
        let within = |used: f64, total: f64| (0.0..=total).contains(&used);
        within(self.load_current, self.load_total)
            && within(self.energy_consumed, self.energy_total)
            && within(self.time_used, self.time_total)
            && self.hosted.len() <= self.concurrent_capacity
    }
}

/// Headroom left on a server: (L_t - L_a, E_t - E_c, tau_t - tau_p).
pub fn remaining_capacity(server: &ServerNode) -> ResourceDemand {
    server.totals() - server.consumed()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerKind {
    Osmotic,
    Public,
}

impl fmt::Display for LayerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LayerKind::Osmotic => f.write_str("osmotic"),
            LayerKind::Public => f.write_str("public"),
        }
    }
}

/// A pool of servers. `placed` is S_a for the osmotic layer and S_b for the
/// public layer, in placement order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    pub servers: Vec<ServerNode>,
    pub placed: Vec<ServiceId>,
}

impl Layer {
    pub fn new(kind: LayerKind, servers: Vec<ServerNode>) -> Self {
        Self {
            kind,
            servers,
            placed: Vec::new(),
        }
    }

    /// `count` fresh servers with ids `0..count`.
    pub fn uniform(kind: LayerKind, count: usize, totals: ResourceDemand, slots: usize) -> Self {
        let servers = (0..count)
            .map(|i| ServerNode::fresh(ServerId(i as u32), totals, slots))
            .collect();
        Self::new(kind, servers)
    }

    pub fn totals(&self) -> ResourceDemand {
        self.servers.iter().map(ServerNode::totals).sum()
    }

    pub fn consumed(&self) -> ResourceDemand {
        self.servers.iter().map(ServerNode::consumed).sum()
    }

    pub fn is_idle(&self) -> bool {
        self.placed.is_empty()
    }

    /// Every placed id is hosted by exactly one server, and nothing else is
    /// hosted.
    pub fn invariants_hold(&self) -> bool {
        let hosted: usize = self.servers.iter().map(|s| s.hosted.len()).sum();
        hosted == self.placed.len()
            && self.placed.iter().all(|id| {
                self.servers
                    .iter()
                    .filter(|s| s.hosted.contains(id))
                    .count()
                    == 1
            })
            && self.servers.iter().all(ServerNode::invariants_hold)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightMode {
    /// Weights sum to one.
    Dependent,
    /// Each weight in [0, 1] on its own, typically a consumption ratio.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitnessWeights {
    pub mode: WeightMode,
    pub alphas: Vec<f64>,
    pub dominant_index: Option<usize>,
}

impl FitnessWeights {
    pub fn independent(alphas: Vec<f64>) -> Self {
        Self {
            mode: WeightMode::Independent,
            alphas,
            dominant_index: None,
        }
    }

    pub fn sum(&self) -> f64 {
        self.alphas.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self
            .alphas
            .iter()
            .any(|a| !a.is_finite() || !(0.0..=1.0).contains(a))
        {
            return Err(OsmosisError::InvalidWeights(format!(
                "every alpha must lie in [0, 1], got {:?}",
                self.alphas
            )));
        }
        match self.mode {
            WeightMode::Dependent => {
                if (self.sum() - 1.0).abs() > 1e-9 {
                    return Err(OsmosisError::InvalidWeights(format!(
                        "dependent weights must sum to 1, got {}",
                        self.sum()
                    )));
                }
            }
            WeightMode::Independent => {
                if self.dominant_index.is_some() {
                    return Err(OsmosisError::InvalidWeights(
                        "dominant index only applies to dependent weights".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Ratio of services to resource properties.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Concentration(pub f64);
