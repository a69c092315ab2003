//! Concentration, the weighted-mean fitness function and its weights.
//!
//! Fitness is a weighted mean `sum(a_i * R_i) / sum(a_i)` over k resource
//! properties. For the three-property case the properties are load, energy
//! and time. Weights are either *dependent* (one dominant property at 0.5,
//! the rest share the other half) or *independent* (consumption ratios read
//! off server state).

use serde::{Deserialize, Serialize};

use crate::domain::{Concentration, FitnessWeights, ResourceDemand, ServerNode, WeightMode};
use crate::error::{OsmosisError, Result};

/// Absolute tolerance for equality comparisons on fitness values.
pub const FITNESS_TOLERANCE: f64 = 1e-9;

/// A weight counts as "pinned" at 1 within this tolerance.
pub const SHIFT_BLOCK_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FitnessValue(pub f64);

impl FitnessValue {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// `|S| / |R|`.
pub fn concentration(num_services: usize, num_properties: usize) -> Result<Concentration> {
    if num_properties == 0 {
        return Err(OsmosisError::NoProperties);
    }
    Ok(Concentration(num_services as f64 / num_properties as f64))
}

/// Consumption ratios `(L_a/L_t, E_c/E_t, tau_p/tau_t)` of one server.
pub fn weights_independent(server: &ServerNode) -> Result<FitnessWeights> {
    weights_from_consumption(server.consumed(), server.totals())
}

/// Consumption ratios for any consumed/total pair, e.g. layer aggregates.
pub fn weights_from_consumption(
    consumed: ResourceDemand,
    totals: ResourceDemand,
) -> Result<FitnessWeights> {
    let names = ["load_total", "energy_total", "time_total"];
    let used = consumed.to_array();
    let total = totals.to_array();
    let mut alphas = Vec::with_capacity(3);
    for i in 0..3 {
        if !(total[i] > 0.0) {
            return Err(OsmosisError::config(
                names[i],
                format!("must be positive to derive a weight, got {}", total[i]),
            ));
        }
        alphas.push((used[i] / total[i]).clamp(0.0, 1.0));
    }
    Ok(FitnessWeights::independent(alphas))
}

/// Dominant property gets 0.5, each of the other `k - 1` gets `0.5 / (k - 1)`.
pub fn weights_dependent(k: usize, dominant_index: usize) -> Result<FitnessWeights> {
    if k < 2 {
        return Err(OsmosisError::InvalidWeights(format!(
            "dependent weights need at least two properties, got {k}"
        )));
    }
    if dominant_index >= k {
        return Err(OsmosisError::InvalidWeights(format!(
            "dominant index {dominant_index} out of range for {k} properties"
        )));
    }
    let other = 0.5 / (k - 1) as f64;
    let alphas = (0..k)
        .map(|i| if i == dominant_index { 0.5 } else { other })
        .collect();
    Ok(FitnessWeights {
        mode: WeightMode::Dependent,
        alphas,
        dominant_index: Some(dominant_index),
    })
}

/// Weighted mean of `properties` under `weights`.
pub fn fitness(properties: &[f64], weights: &FitnessWeights) -> Result<FitnessValue> {
    if properties.len() != weights.alphas.len() {
        return Err(OsmosisError::LengthMismatch {
            properties: properties.len(),
            weights: weights.alphas.len(),
        });
    }
    let denom = weights.sum();
    if !(denom > 0.0) {
        return Err(OsmosisError::DegenerateWeights);
    }
    let num: f64 = properties
        .iter()
        .zip(&weights.alphas)
        .map(|(r, a)| a * r)
        .sum();
    Ok(FitnessValue(num / denom))
}

/// True iff some weight sits at 1, meaning the service may not be shifted
/// to another resource.
pub fn is_shift_blocked(weights: &FitnessWeights) -> bool {
    weights
        .alphas
        .iter()
        .any(|a| (a - 1.0).abs() <= SHIFT_BLOCK_TOLERANCE)
}

/// How raw (load, energy, time) values are brought onto a common scale
/// before the weighted mean is taken.
///
/// With normalization on, each property is divided by the matching
/// component of `reference` and multiplied by `scale`, so a demand equal to
/// the reference server scores `scale`. With it off, values are averaged
/// as-is.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitnessSpace {
    pub reference: ResourceDemand,
    pub scale: f64,
}

impl FitnessSpace {
    /// Per-mille of one reference server.
    pub const DEFAULT_SCALE: f64 = 1000.0;

    pub fn normalized(reference: ResourceDemand, scale: f64) -> Self {
        Self { reference, scale }
    }

    /// Unnormalized mode: mixed units averaged directly.
    pub fn raw() -> Self {
        Self {
            reference: ResourceDemand::new(1.0, 1.0, 1.0),
            scale: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.reference.to_array();
        if r.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(OsmosisError::config(
                "osmosis.reference",
                "reference scales must be positive",
            ));
        }
        if !(self.scale.is_finite() && self.scale > 0.0) {
            return Err(OsmosisError::config("osmosis.fitness_scale", "must be positive"));
        }
        Ok(())
    }

    fn unscaled(&self, v: ResourceDemand, weights: &FitnessWeights) -> Result<f64> {
        let r = self.reference.to_array();
        let props: Vec<f64> = v.to_array().iter().zip(r).map(|(x, s)| x / s).collect();
        Ok(fitness(&props, weights)?.0)
    }

    /// Fitness of a demand or headroom vector in this space.
    pub fn evaluate(&self, v: ResourceDemand, weights: &FitnessWeights) -> Result<FitnessValue> {
        Ok(FitnessValue(self.scale * self.unscaled(v, weights)?))
    }

    /// `scale * fit(consumed) / fit(totals)`: the weighted share of a pool's
    /// capacity that has been absorbed.
    pub fn utilization(
        &self,
        consumed: ResourceDemand,
        totals: ResourceDemand,
        weights: &FitnessWeights,
    ) -> Result<FitnessValue> {
        let cap = self.capacity_units(totals, weights)?;
        Ok(FitnessValue(self.scale * self.unscaled(consumed, weights)? / cap))
    }

    /// Size of a pool in reference units: `fit(totals)` without the scale.
    /// Placing a demand of fitness `f` raises the pool's utilization by
    /// exactly `f / capacity_units`.
    pub fn capacity_units(&self, totals: ResourceDemand, weights: &FitnessWeights) -> Result<f64> {
        let cap = self.unscaled(totals, weights)?;
        if !(cap > 0.0) {
            return Err(OsmosisError::DegenerateWeights);
        }
        Ok(cap)
    }
}
