//! The fitness-based osmosis loop.
//!
//! Services are taken one per pass from a FIFO queue. Each pass evaluates
//! the service's fitness, computes the membrane gates from the current
//! layer state and the tolerance band `epsilon`, classifies the service and
//! places it on the best-fitting server of the chosen layer. A service that
//! no gate admits triggers an epsilon adjustment (or a split, when enabled)
//! and is re-queued.
//!
//! Layer fitness is the weighted share of the layer's capacity that has
//! been absorbed. The gates keep the osmotic layer inside
//! `[f_pub - epsilon, f_pub]`-ish territory:
//!
//! * micro gate: the osmotic layer may absorb a service as long as it stays
//!   at least `lag_fraction * epsilon` behind the public layer;
//! * public gate: the public layer may absorb a service as long as it stays
//!   no more than `epsilon` ahead;
//! * spill gate: when the public layer would leave the band, the osmotic
//!   layer may absorb the service as long as it stays no more than
//!   `epsilon` ahead.
//!
//! Every gate is also capped by the best single-server headroom of its
//! layer. Because a placement of fitness `f` moves the layer fitness by
//! exactly `f / C` (`C` being the layer size in reference units), each gate
//! is expressed directly in service-fitness units.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::domain::{
    remaining_capacity, FitnessWeights, Layer, LayerKind, ResourceDemand, ServerId,
    ServiceRequest, WeightMode,
};
use crate::error::{OsmosisError, Result};
use crate::fitness::{
    is_shift_blocked, weights_dependent, weights_from_consumption, FitnessSpace, FitnessValue,
    FITNESS_TOLERANCE,
};

/// Fitness of a whole layer (`f_osmotic` or `f_public`).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LayerFitness(pub f64);

/// An admission threshold in service-fitness units.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(pub f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    ToOsmotic,
    ToPublic,
    Unhandleable,
}

/// Which resource property gets the dominant weight in dependent mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Property {
    Load,
    Energy,
    Time,
}

impl Property {
    pub fn index(self) -> usize {
        match self {
            Property::Load => 0,
            Property::Energy => 1,
            Property::Time => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OsmosisConfig {
    #[serde(rename = "epsilon")]
    pub epsilon_initial: f64,
    pub epsilon_multiplier: f64,
    pub max_adjustments: u32,
    #[serde(rename = "weights")]
    pub weight_mode: WeightMode,
    pub dominant_property: Property,
    /// Divide each property by the reference server before averaging.
    pub normalize: bool,
    pub fitness_scale: f64,
    /// Reference server for normalization; the first osmotic server when unset.
    pub reference: Option<ResourceDemand>,
    /// How far behind the public layer the osmotic layer is held, as a
    /// fraction of epsilon.
    pub lag_fraction: f64,
    pub splitting: bool,
    pub split_parts: usize,
    pub max_split_depth: usize,
    /// Minimum energy charged per hosted service.
    #[serde(skip)]
    pub energy_per_service: f64,
    /// Minimum processing time charged per hosted service.
    #[serde(skip)]
    pub min_processing_time: f64,
}

impl Default for OsmosisConfig {
    fn default() -> Self {
        Self {
            epsilon_initial: 100.0,
            epsilon_multiplier: 2.0,
            max_adjustments: 10,
            weight_mode: WeightMode::Dependent,
            dominant_property: Property::Load,
            normalize: true,
            fitness_scale: FitnessSpace::DEFAULT_SCALE,
            reference: None,
            lag_fraction: 0.5,
            splitting: false,
            split_parts: 2,
            max_split_depth: 4,
            energy_per_service: 0.0,
            min_processing_time: 0.0,
        }
    }
}

impl OsmosisConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |key: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(OsmosisError::config(key, format!("must be positive, got {v}")))
            }
        };
        positive("osmosis.epsilon", self.epsilon_initial)?;
        if !(self.epsilon_multiplier.is_finite() && self.epsilon_multiplier >= 1.0) {
            return Err(OsmosisError::config(
                "osmosis.epsilon_multiplier",
                format!("must be >= 1 (epsilon never shrinks), got {}", self.epsilon_multiplier),
            ));
        }
        positive("osmosis.fitness_scale", self.fitness_scale)?;
        if !(0.0..=1.0).contains(&self.lag_fraction) {
            return Err(OsmosisError::config(
                "osmosis.lag_fraction",
                format!("must lie in [0, 1], got {}", self.lag_fraction),
            ));
        }
        if self.split_parts < 2 {
            return Err(OsmosisError::config("osmosis.split_parts", "must be at least 2"));
        }
        for (key, v) in [
            ("infrastructure.energy_per_iteration", self.energy_per_service),
            ("infrastructure.min_processing_time", self.min_processing_time),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(OsmosisError::config(key, format!("must be non-negative, got {v}")));
            }
        }
        if let Some(r) = self.reference {
            FitnessSpace::normalized(r, self.fitness_scale).validate()?;
        }
        Ok(())
    }

    /// The fitness space used for a run over `osmotic`.
    pub fn space(&self, osmotic: &Layer) -> Result<FitnessSpace> {
        if !self.normalize {
            return Ok(FitnessSpace::raw());
        }
        let reference = match self.reference {
            Some(r) => r,
            None => osmotic
                .servers
                .first()
                .map(|s| s.totals())
                .ok_or_else(|| OsmosisError::config("infrastructure.num_osmotic", "must be > 0"))?,
        };
        let space = FitnessSpace::normalized(reference, self.fitness_scale);
        space.validate()?;
        Ok(space)
    }

    /// What a server is charged for hosting `demand`.
    pub fn charge(&self, demand: ResourceDemand) -> ResourceDemand {
        ResourceDemand::new(
            demand.load,
            demand.energy.max(self.energy_per_service),
            demand.time.max(self.min_processing_time),
        )
    }
}

/// Admission gates at one examination, in service-fitness units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gates {
    /// Micro-service threshold (f_th osmotic).
    pub osmotic: Threshold,
    /// Macro-service threshold (f_th public).
    pub public: Threshold,
    /// Osmotic admission when the public layer would leave the band.
    pub spill: Threshold,
    pub headroom_osmotic: Threshold,
    pub headroom_public: Threshold,
}

/// Weighted share of the layer's capacity absorbed so far.
pub fn layer_fitness(
    layer: &Layer,
    weights: &FitnessWeights,
    space: &FitnessSpace,
) -> Result<LayerFitness> {
    if layer.servers.is_empty() {
        return Err(OsmosisError::config(
            format!("infrastructure.num_{}", layer.kind),
            "layer has no servers",
        ));
    }
    let f = space.utilization(layer.consumed(), layer.totals(), weights)?;
    Ok(LayerFitness(f.0))
}

/// Fitness of the largest demand one server of the layer can still take:
/// the best remaining-capacity vector among servers with a free slot.
pub fn layer_headroom(
    layer: &Layer,
    weights: &FitnessWeights,
    space: &FitnessSpace,
) -> Result<Threshold> {
    let mut best = 0.0_f64;
    for server in layer.servers.iter().filter(|s| s.has_free_slot()) {
        best = best.max(space.evaluate(remaining_capacity(server), weights)?.0);
    }
    Ok(Threshold(best))
}

/// Headroom-only thresholds for both layers, checking that the public layer
/// can take at least what the osmotic layer can.
pub fn capacity_thresholds(
    osmotic: &Layer,
    public: &Layer,
    weights: &FitnessWeights,
    space: &FitnessSpace,
) -> Result<(Threshold, Threshold)> {
    for layer in [osmotic, public] {
        if layer.servers.is_empty() {
            return Err(OsmosisError::config(
                format!("infrastructure.num_{}", layer.kind),
                "layer has no servers",
            ));
        }
    }
    let th_osm = layer_headroom(osmotic, weights, space)?;
    let th_pub = layer_headroom(public, weights, space)?;
    if th_pub.0 + FITNESS_TOLERANCE < th_osm.0 {
        return Err(OsmosisError::config(
            "infrastructure.public",
            format!(
                "public threshold {} is below osmotic threshold {}; provision public servers with at least osmotic capacity",
                th_pub.0, th_osm.0
            ),
        ));
    }
    Ok((th_osm, th_pub))
}

/// Gates for the current layer state and band.
pub fn membrane_gates(
    osmotic: &Layer,
    public: &Layer,
    weights: &FitnessWeights,
    space: &FitnessSpace,
    epsilon: f64,
    lag_fraction: f64,
) -> Result<Gates> {
    let f_osm = layer_fitness(osmotic, weights, space)?.0;
    let f_pub = layer_fitness(public, weights, space)?.0;
    let c_osm = space.capacity_units(osmotic.totals(), weights)?;
    let c_pub = space.capacity_units(public.totals(), weights)?;
    let head_osm = layer_headroom(osmotic, weights, space)?;
    let head_pub = layer_headroom(public, weights, space)?;
    let lead = f_pub - f_osm;

    let gate = |band: f64, units: f64, head: Threshold| Threshold((band * units).max(0.0).min(head.0));
    Ok(Gates {
        osmotic: gate(lead - lag_fraction * epsilon, c_osm, head_osm),
        public: gate(epsilon - lead, c_pub, head_pub),
        spill: gate(lead + epsilon, c_osm, head_osm),
        headroom_osmotic: head_osm,
        headroom_public: head_pub,
    })
}

fn le(f: FitnessValue, th: Threshold) -> bool {
    f.0 <= th.0 + FITNESS_TOLERANCE
}

/// Osmotic first (ties at the micro threshold go osmotic), then public,
/// then the osmotic spill gate.
pub fn classify(service_fitness: FitnessValue, gates: &Gates) -> Classification {
    if le(service_fitness, gates.osmotic) || (!le(service_fitness, gates.public) && le(service_fitness, gates.spill)) {
        Classification::ToOsmotic
    } else if le(service_fitness, gates.public) {
        Classification::ToPublic
    } else {
        Classification::Unhandleable
    }
}

/// Best-fit placement: among servers with a free slot and enough headroom,
/// the one whose remaining vector has the smallest fitness; ties go to the
/// lowest server id.
pub fn place(
    service: &ServiceRequest,
    charge: ResourceDemand,
    layer: &mut Layer,
    weights: &FitnessWeights,
    space: &FitnessSpace,
) -> Result<ServerId> {
    let mut best: Option<(f64, ServerId, usize)> = None;
    for (idx, server) in layer.servers.iter().enumerate() {
        if !server.admits(&charge) {
            continue;
        }
        let f = space.evaluate(remaining_capacity(server), weights)?.0;
        let better = match best {
            None => true,
            Some((bf, bid, _)) => f < bf - FITNESS_TOLERANCE || ((f - bf).abs() <= FITNESS_TOLERANCE && server.id < bid),
        };
        if better {
            best = Some((f, server.id, idx));
        }
    }
    let (_, id, idx) = best.ok_or(OsmosisError::Overflow(layer.kind))?;
    layer.servers[idx].host(service.id.clone(), charge);
    layer.placed.push(service.id.clone());
    Ok(id)
}

/// Splits a divisible service into `parts` equal children.
pub fn split_service(service: &ServiceRequest, parts: usize) -> Result<Vec<ServiceRequest>> {
    if !service.divisible {
        return Err(OsmosisError::Indivisible(service.id.to_string()));
    }
    if parts < 2 {
        return Err(OsmosisError::config("osmosis.split_parts", "must be at least 2"));
    }
    let share = service.demand.scaled(1.0 / parts as f64);
    Ok((0..parts)
        .map(|i| ServiceRequest {
            id: service.id.child(i),
            user_id: service.user_id,
            demand: share,
            divisible: true,
            parent_id: Some(service.id.clone()),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Admitted by the micro gate.
    Micro,
    /// Admitted by the public gate.
    Macro,
    /// Admitted by the osmotic spill gate.
    Spill,
    /// First choice overflowed; placed on the other layer.
    Rerouted,
    /// Pinned by a weight at 1; classification skipped.
    Pinned,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PassOutcome {
    Placed {
        layer: LayerKind,
        server: ServerId,
        route: Route,
    },
    Split {
        parts: usize,
    },
    /// Re-queued after an epsilon adjustment.
    Unhandleable,
    /// Adjustment cap reached; the service and everything pending is dropped
    /// into the unhandled list.
    Abandoned,
}

/// One examination of one service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassRecord {
    pub pass: u64,
    pub service: crate::domain::ServiceId,
    pub fitness: FitnessValue,
    pub epsilon: f64,
    pub osmotic_fitness: LayerFitness,
    pub public_fitness: LayerFitness,
    pub gates: Gates,
    pub classification: Classification,
    /// Set when the first-choice layer had no server able to host the service.
    pub overflowed: Option<LayerKind>,
    pub outcome: PassOutcome,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustOutcome {
    Adjusted,
    /// Nothing was unhandleable; epsilon is left alone.
    NotNeeded,
    /// `max_adjustments` reached; pending services moved to unhandled.
    CapReached,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OsmosisState {
    pub epsilon: f64,
    pub epsilon_initial: f64,
    pub epsilon_multiplier: f64,
    pub max_adjustments: u32,
    /// x: number of epsilon adjustments so far.
    pub epsilon_adjust_count: u32,
    /// Number of loop passes.
    pub track: u64,
    pub pending: VecDeque<ServiceRequest>,
    pub osmotic: Layer,
    pub public: Layer,
    pub unhandled: Vec<ServiceRequest>,
    /// Services that were never split further (generated or split children).
    pub leaf_count: usize,
    pub split_count: usize,
    pub weights: FitnessWeights,
    pub space: FitnessSpace,
    pub log: Vec<PassRecord>,
}

impl OsmosisState {
    pub fn new(
        services: Vec<ServiceRequest>,
        osmotic: Layer,
        public: Layer,
        config: &OsmosisConfig,
    ) -> Result<Self> {
        config.validate()?;
        let space = config.space(&osmotic)?;
        let weights = weights_dependent(3, config.dominant_property.index())?;
        Ok(Self {
            epsilon: config.epsilon_initial,
            epsilon_initial: config.epsilon_initial,
            epsilon_multiplier: config.epsilon_multiplier,
            max_adjustments: config.max_adjustments,
            epsilon_adjust_count: 0,
            track: 0,
            leaf_count: services.len(),
            split_count: 0,
            pending: services.into(),
            osmotic,
            public,
            unhandled: Vec::new(),
            weights,
            space,
            log: Vec::new(),
        })
    }

    pub fn layer_fitness(&self) -> Result<(LayerFitness, LayerFitness)> {
        Ok((
            layer_fitness(&self.osmotic, &self.weights, &self.space)?,
            layer_fitness(&self.public, &self.weights, &self.space)?,
        ))
    }

    /// `|f_osm - f_pub| <= epsilon`.
    pub fn in_band(&self) -> Result<bool> {
        let (o, p) = self.layer_fitness()?;
        Ok((o.0 - p.0).abs() <= self.epsilon + FITNESS_TOLERANCE)
    }

    pub fn osmotic_count(&self) -> usize {
        self.osmotic.placed.len()
    }

    pub fn public_count(&self) -> usize {
        self.public.placed.len()
    }
}

/// Enlarges epsilon after an unhandleable pass and re-queues the unhandled
/// services, or gives up once `max_adjustments` is reached.
pub fn adjust_epsilon(state: &mut OsmosisState) -> AdjustOutcome {
    if state.unhandled.is_empty() {
        return AdjustOutcome::NotNeeded;
    }
    if state.epsilon_adjust_count >= state.max_adjustments {
        state.unhandled.extend(state.pending.drain(..));
        return AdjustOutcome::CapReached;
    }
    state.epsilon *= state.epsilon_multiplier;
    state.epsilon_adjust_count += 1;
    state.pending.extend(state.unhandled.drain(..));
    AdjustOutcome::Adjusted
}

fn pass_weights(state: &OsmosisState, config: &OsmosisConfig) -> Result<FitnessWeights> {
    match config.weight_mode {
        WeightMode::Dependent => Ok(state.weights.clone()),
        WeightMode::Independent => {
            let consumed = state.osmotic.consumed() + state.public.consumed();
            let totals = state.osmotic.totals() + state.public.totals();
            let w = weights_from_consumption(consumed, totals)?;
            if w.sum() > 0.0 {
                Ok(w)
            } else {
                Ok(FitnessWeights::independent(vec![1.0; 3]))
            }
        }
    }
}

/// Layer a service is pinned to by a weight at 1, if any. Only independent
/// weights (read off layer consumption) can pin.
fn pinned_layer(state: &OsmosisState, config: &OsmosisConfig) -> Result<Option<LayerKind>> {
    if config.weight_mode != WeightMode::Independent {
        return Ok(None);
    }
    let blocked = |layer: &Layer| -> Result<bool> {
        Ok(is_shift_blocked(&weights_from_consumption(layer.consumed(), layer.totals())?))
    };
    if blocked(&state.public)? {
        Ok(Some(LayerKind::Public))
    } else if blocked(&state.osmotic)? {
        Ok(Some(LayerKind::Osmotic))
    } else {
        Ok(None)
    }
}

fn layer_mut(state: &mut OsmosisState, kind: LayerKind) -> &mut Layer {
    match kind {
        LayerKind::Osmotic => &mut state.osmotic,
        LayerKind::Public => &mut state.public,
    }
}

fn try_place(
    state: &mut OsmosisState,
    kind: LayerKind,
    service: &ServiceRequest,
    charge: ResourceDemand,
    weights: &FitnessWeights,
) -> Result<Option<ServerId>> {
    let space = state.space;
    match place(service, charge, layer_mut(state, kind), weights, &space) {
        Ok(id) => Ok(Some(id)),
        Err(OsmosisError::Overflow(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

/// Runs the osmosis loop to completion.
///
/// The loop ends when nothing is pending: either every service is placed,
/// or the adjustment cap was hit and the remainder sits in `unhandled`.
pub fn run_osmosis(
    services: Vec<ServiceRequest>,
    osmotic: Layer,
    public: Layer,
    config: &OsmosisConfig,
) -> Result<OsmosisState> {
    let mut state = OsmosisState::new(services, osmotic, public, config)?;
    capacity_thresholds(&state.osmotic, &state.public, &state.weights, &state.space)?;

    while let Some(service) = state.pending.pop_front() {
        state.track += 1;
        let weights = pass_weights(&state, config)?;
        let charge = config.charge(service.demand);
        let f = state.space.evaluate(charge, &weights)?;
        let gates = membrane_gates(
            &state.osmotic,
            &state.public,
            &weights,
            &state.space,
            state.epsilon,
            config.lag_fraction,
        )?;
        let osmotic_fitness = layer_fitness(&state.osmotic, &weights, &state.space)?;
        let public_fitness = layer_fitness(&state.public, &weights, &state.space)?;

        let mut overflowed = None;
        let mut placed: Option<(LayerKind, ServerId, Route)> = None;
        let classification;

        if let Some(pin) = pinned_layer(&state, config)? {
            let gate = match pin {
                LayerKind::Osmotic => gates.spill,
                LayerKind::Public => gates.public,
            };
            classification = if le(f, gate) {
                match pin {
                    LayerKind::Osmotic => Classification::ToOsmotic,
                    LayerKind::Public => Classification::ToPublic,
                }
            } else {
                Classification::Unhandleable
            };
            if classification != Classification::Unhandleable {
                match try_place(&mut state, pin, &service, charge, &weights)? {
                    Some(id) => placed = Some((pin, id, Route::Pinned)),
                    None => overflowed = Some(pin),
                }
            }
        } else {
            classification = classify(f, &gates);
            let (first, route, fallback) = match classification {
                Classification::ToOsmotic if le(f, gates.osmotic) => {
                    (Some(LayerKind::Osmotic), Route::Micro, le(f, gates.public).then_some(LayerKind::Public))
                }
                Classification::ToOsmotic => (Some(LayerKind::Osmotic), Route::Spill, None),
                Classification::ToPublic => {
                    (Some(LayerKind::Public), Route::Macro, le(f, gates.spill).then_some(LayerKind::Osmotic))
                }
                Classification::Unhandleable => (None, Route::Micro, None),
            };
            if let Some(first) = first {
                match try_place(&mut state, first, &service, charge, &weights)? {
                    Some(id) => placed = Some((first, id, route)),
                    None => {
                        overflowed = Some(first);
                        if let Some(other) = fallback {
                            if let Some(id) = try_place(&mut state, other, &service, charge, &weights)? {
                                placed = Some((other, id, Route::Rerouted));
                            }
                        }
                    }
                }
            }
        }

        let mut record = PassRecord {
            pass: state.track,
            service: service.id.clone(),
            fitness: f,
            epsilon: state.epsilon,
            osmotic_fitness,
            public_fitness,
            gates,
            classification,
            overflowed,
            outcome: PassOutcome::Unhandleable,
        };

        if let Some((layer, server, route)) = placed {
            record.outcome = PassOutcome::Placed { layer, server, route };
            state.log.push(record);
            continue;
        }

        // Nowhere to go this pass.
        if config.splitting && service.divisible && service.split_depth() < config.max_split_depth {
            let children = split_service(&service, config.split_parts)?;
            record.outcome = PassOutcome::Split { parts: children.len() };
            state.leaf_count += children.len() - 1;
            state.split_count += 1;
            for child in children.into_iter().rev() {
                state.pending.push_front(child);
            }
            state.log.push(record);
            continue;
        }

        state.unhandled.push(service);
        match adjust_epsilon(&mut state) {
            AdjustOutcome::CapReached => {
                record.outcome = PassOutcome::Abandoned;
                state.log.push(record);
                break;
            }
            _ => state.log.push(record),
        }
    }

    if config.weight_mode == WeightMode::Independent {
        state.weights = pass_weights(&state, config)?;
    }
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{ServerNode, ServiceId};

    const OSM: ResourceDemand = ResourceDemand {
        load: 10.0,
        energy: 2000.0,
        time: 100.0,
    };

    fn svc(i: usize, load: f64, energy: f64, time: f64) -> ServiceRequest {
        ServiceRequest::new(ServiceId::sequential(i), 0, ResourceDemand::new(load, energy, time))
    }

    fn dep() -> FitnessWeights {
        weights_dependent(3, 0).unwrap()
    }

    fn space() -> FitnessSpace {
        FitnessSpace::normalized(OSM, 1000.0)
    }

    #[test]
    fn idle_layer_has_zero_fitness() {
        let l = Layer::uniform(LayerKind::Osmotic, 5, OSM, 10);
        assert_eq!(layer_fitness(&l, &dep(), &space()).unwrap().0, 0.0);
    }

    #[test]
    fn layer_fitness_is_size_independent() {
        let mut one = Layer::uniform(LayerKind::Osmotic, 1, OSM, 10);
        let mut two = Layer::uniform(LayerKind::Osmotic, 2, OSM, 10);
        let half = ResourceDemand::new(5.0, 1000.0, 50.0);
        one.servers[0].host(ServiceId::sequential(0), half);
        two.servers[0].host(ServiceId::sequential(1), half);
        two.servers[1].host(ServiceId::sequential(2), half);
        let a = layer_fitness(&one, &dep(), &space()).unwrap().0;
        let b = layer_fitness(&two, &dep(), &space()).unwrap().0;
        assert!((a - b).abs() < 1e-9);
        assert!((a - 500.0).abs() < 1e-9);
    }

    #[test]
    fn empty_layer_is_a_config_error() {
        let l = Layer::new(LayerKind::Public, vec![]);
        assert!(matches!(layer_fitness(&l, &dep(), &space()), Err(OsmosisError::Config { .. })));
    }

    #[test]
    fn fresh_identical_layers_have_equal_capacity_thresholds() {
        let o = Layer::uniform(LayerKind::Osmotic, 2, OSM, 10);
        let p = Layer::uniform(LayerKind::Public, 2, OSM, 10);
        let (a, b) = capacity_thresholds(&o, &p, &dep(), &space()).unwrap();
        let full = space().evaluate(OSM, &dep()).unwrap().0;
        assert_eq!(a.0, full);
        assert_eq!(b.0, full);
    }

    #[test]
    fn saturated_load_zeroes_load_component_of_threshold() {
        let mut o = Layer::uniform(LayerKind::Osmotic, 1, OSM, 10);
        o.servers[0].load_current = 10.0;
        let th = layer_headroom(&o, &dep(), &space()).unwrap().0;
        // energy and time components only: 1000 * (0.25 + 0.25)
        assert!((th - 500.0).abs() < 1e-9);
        let zero_load = space().evaluate(ResourceDemand::new(0.0, 10.0, 10.0), &dep()).unwrap();
        assert!(zero_load.0 <= th);
        assert!(!o.servers[0].admits(&ResourceDemand::new(0.1, 1.0, 1.0)));
    }

    #[test]
    fn inverted_capacity_is_rejected() {
        let o = Layer::uniform(LayerKind::Osmotic, 1, OSM, 10);
        let p = Layer::uniform(LayerKind::Public, 1, OSM.scaled(0.5), 10);
        assert!(matches!(
            capacity_thresholds(&o, &p, &dep(), &space()),
            Err(OsmosisError::Config { .. })
        ));
    }

    fn gates(o: f64, p: f64, s: f64) -> Gates {
        Gates {
            osmotic: Threshold(o),
            public: Threshold(p),
            spill: Threshold(s),
            headroom_osmotic: Threshold(1e9),
            headroom_public: Threshold(1e9),
        }
    }

    #[test]
    fn classification_rules() {
        let g = gates(10.0, 20.0, 30.0);
        assert_eq!(classify(FitnessValue(0.0), &g), Classification::ToOsmotic);
        assert_eq!(classify(FitnessValue(10.0), &g), Classification::ToOsmotic);
        assert_eq!(classify(FitnessValue(15.0), &g), Classification::ToPublic);
        assert_eq!(classify(FitnessValue(25.0), &g), Classification::ToOsmotic);
        assert_eq!(classify(FitnessValue(31.0), &g), Classification::Unhandleable);
    }

    #[test]
    fn place_accounts_for_demand() {
        let mut l = Layer::uniform(LayerKind::Osmotic, 1, OSM, 10);
        let s = svc(0, 1.0, 1.5, 5.0);
        let id = place(&s, s.demand, &mut l, &dep(), &space()).unwrap();
        assert_eq!(id, ServerId(0));
        assert_eq!(l.servers[0].consumed(), ResourceDemand::new(1.0, 1.5, 5.0));
        assert_eq!(l.servers[0].hosted.len(), 1);
        assert!(l.invariants_hold());
    }

    #[test]
    fn eleventh_concurrent_service_overflows() {
        let mut l = Layer::uniform(LayerKind::Osmotic, 1, OSM, 10);
        for i in 0..10 {
            let s = svc(i, 0.1, 1.5, 1.0);
            place(&s, s.demand, &mut l, &dep(), &space()).unwrap();
        }
        let s = svc(10, 0.1, 1.5, 1.0);
        assert_eq!(
            place(&s, s.demand, &mut l, &dep(), &space()),
            Err(OsmosisError::Overflow(LayerKind::Osmotic))
        );
    }

    #[test]
    fn best_fit_prefers_the_fuller_server() {
        // Oracle: try both servers, keep the one whose remaining vector
        // scores lowest after checking admission.
        let mut l = Layer::new(
            LayerKind::Osmotic,
            vec![ServerNode::fresh(ServerId(0), OSM, 10), ServerNode::fresh(ServerId(1), OSM, 10)],
        );
        l.servers[1].host(ServiceId::sequential(99), ResourceDemand::new(5.0, 1000.0, 50.0));
        l.placed.push(ServiceId::sequential(99));
        let s = svc(0, 2.0, 1.5, 10.0);
        let scores: Vec<f64> = l
            .servers
            .iter()
            .map(|srv| {
                let r = remaining_capacity(srv);
                0.5 * r.load / 10.0 + 0.25 * r.energy / 2000.0 + 0.25 * r.time / 100.0
            })
            .collect();
        let expected = if scores[1] < scores[0] { ServerId(1) } else { ServerId(0) };
        assert_eq!(expected, ServerId(1));
        assert_eq!(place(&s, s.demand, &mut l, &dep(), &space()).unwrap(), expected);
    }

    #[test]
    fn best_fit_ties_go_to_lowest_id() {
        let mut l = Layer::uniform(LayerKind::Public, 3, OSM, 10);
        let s = svc(0, 1.0, 1.0, 1.0);
        assert_eq!(place(&s, s.demand, &mut l, &dep(), &space()).unwrap(), ServerId(0));
    }

    #[test]
    fn split_halves_demand() {
        let mut s = svc(0, 10.0, 20.0, 40.0);
        s.divisible = true;
        let kids = split_service(&s, 2).unwrap();
        assert_eq!(kids.len(), 2);
        for k in &kids {
            assert_eq!(k.demand, ResourceDemand::new(5.0, 10.0, 20.0));
            assert_eq!(k.parent_id.as_ref(), Some(&s.id));
        }
        let total: ResourceDemand = kids.iter().map(|k| k.demand).sum();
        assert!(total.approx_eq(&s.demand, 1e-9));
        let w = dep();
        let fp = space().evaluate(s.demand, &w).unwrap().0;
        let fc = space().evaluate(kids[0].demand, &w).unwrap().0;
        assert!((fc - fp / 2.0).abs() < 1e-9);
    }

    #[test]
    fn split_rejects_indivisible() {
        assert!(matches!(
            split_service(&svc(0, 1.0, 1.0, 1.0), 2),
            Err(OsmosisError::Indivisible(_))
        ));
    }

    #[test]
    fn halvings_until_micro() {
        // Oracle: halve repeatedly and count; compare with ceil(log2(f/th)).
        let th: f64 = 37.0;
        for &f0 in &[37.0, 38.0, 100.0, 296.0, 297.0, 5000.0] {
            let mut f = f0;
            let mut n = 0u32;
            while f > th {
                f /= 2.0;
                n += 1;
            }
            let expected = (f0 / th).log2().ceil().max(0.0) as u32;
            assert_eq!(n, expected, "f0 = {f0}");
        }
    }

    fn state_with(unhandled: usize, x: u32) -> OsmosisState {
        let cfg = OsmosisConfig::default();
        let mut st = OsmosisState::new(
            vec![],
            Layer::uniform(LayerKind::Osmotic, 1, OSM, 10),
            Layer::uniform(LayerKind::Public, 1, OSM, 10),
            &cfg,
        )
        .unwrap();
        st.unhandled = (0..unhandled).map(|i| svc(i, 1.0, 1.0, 1.0)).collect();
        st.epsilon_adjust_count = x;
        st
    }

    #[test]
    fn adjust_doubles_and_requeues() {
        let mut st = state_with(1, 0);
        assert_eq!(adjust_epsilon(&mut st), AdjustOutcome::Adjusted);
        assert_eq!(st.epsilon, 200.0);
        assert_eq!(st.epsilon_adjust_count, 1);
        assert_eq!(st.pending.len(), 1);
        assert!(st.unhandled.is_empty());
    }

    #[test]
    fn adjust_without_unhandleable_is_noop() {
        let mut st = state_with(0, 0);
        assert_eq!(adjust_epsilon(&mut st), AdjustOutcome::NotNeeded);
        assert_eq!(st.epsilon, 100.0);
        assert_eq!(st.epsilon_adjust_count, 0);
    }

    #[test]
    fn adjust_at_cap_terminates() {
        let mut st = state_with(1, 10);
        st.pending.push_back(svc(5, 1.0, 1.0, 1.0));
        assert_eq!(adjust_epsilon(&mut st), AdjustOutcome::CapReached);
        assert_eq!(st.unhandled.len(), 2);
        assert!(st.pending.is_empty());
        assert_eq!(st.epsilon_adjust_count, 10);
    }

    #[test]
    fn empty_run_is_vacuous() {
        let st = run_osmosis(
            vec![],
            Layer::uniform(LayerKind::Osmotic, 5, OSM, 10),
            Layer::uniform(LayerKind::Public, 10, OSM.scaled(4.0), 10),
            &OsmosisConfig::default(),
        )
        .unwrap();
        assert_eq!(st.track, 0);
        assert!(st.osmotic.is_idle() && st.public.is_idle());
    }

    #[test]
    fn huge_epsilon_single_pass() {
        let cfg = OsmosisConfig {
            epsilon_initial: 1e12,
            ..OsmosisConfig::default()
        };
        let services: Vec<_> = (0..20).map(|i| svc(i, 1.0 + (i % 4) as f64, 1.5, 5.0 + i as f64)).collect();
        let st = run_osmosis(
            services,
            Layer::uniform(LayerKind::Osmotic, 5, OSM, 10),
            Layer::uniform(LayerKind::Public, 10, OSM.scaled(4.0), 10),
            &cfg,
        )
        .unwrap();
        assert_eq!(st.track, 20);
        assert_eq!(st.epsilon_adjust_count, 0);
        assert_eq!(st.osmotic_count() + st.public_count(), 20);
    }

    #[test]
    fn oversized_service_exhausts_adjustments() {
        let cfg = OsmosisConfig::default();
        let st = run_osmosis(
            vec![svc(0, 500.0, 1.5, 5.0)],
            Layer::uniform(LayerKind::Osmotic, 1, OSM, 10),
            Layer::uniform(LayerKind::Public, 1, OSM.scaled(4.0), 10),
            &cfg,
        )
        .unwrap();
        assert_eq!(st.epsilon_adjust_count, 10);
        assert_eq!(st.unhandled.len(), 1);
        assert_eq!(st.epsilon, 100.0 * 2f64.powi(10));
        assert_eq!(st.track, 11);
        assert!(matches!(st.log.last().unwrap().outcome, PassOutcome::Abandoned));
    }

    #[test]
    fn splitting_resolves_divisible_oversized_service() {
        let cfg = OsmosisConfig {
            splitting: true,
            ..OsmosisConfig::default()
        };
        let mut big = svc(0, 30.0, 1.5, 20.0);
        big.divisible = true;
        let st = run_osmosis(
            vec![big],
            Layer::uniform(LayerKind::Osmotic, 2, OSM, 10),
            Layer::uniform(LayerKind::Public, 2, OSM.scaled(1.0), 10),
            &cfg,
        )
        .unwrap();
        assert!(st.split_count >= 1);
        assert_eq!(st.osmotic_count() + st.public_count() + st.unhandled.len(), st.leaf_count);
    }
}
