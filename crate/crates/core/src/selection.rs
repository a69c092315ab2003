//! Roulette-wheel selection and the layer selection bounds.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::ServiceId;
use crate::error::{OsmosisError, Result};
use crate::fitness::FitnessValue;
use crate::osmosis::Threshold;

const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionDistribution {
    pub entries: Vec<(ServiceId, f64)>,
}

impl SelectionDistribution {
    pub fn probabilities(&self) -> Vec<f64> {
        self.entries.iter().map(|(_, p)| *p).collect()
    }

    pub fn is_valid(&self) -> bool {
        !self.entries.is_empty()
            && self.entries.iter().all(|(_, p)| (0.0..=1.0).contains(p))
            && (self.entries.iter().map(|(_, p)| p).sum::<f64>() - 1.0).abs() <= SUM_TOLERANCE
    }
}

/// `P(s_i) = f_i / sum(f)`. Ids are assigned sequentially in input order.
pub fn roulette_distribution(fitnesses: &[FitnessValue]) -> Result<SelectionDistribution> {
    let ids = (0..fitnesses.len()).map(ServiceId::sequential).collect::<Vec<_>>();
    roulette_distribution_for(&ids, fitnesses)
}

pub fn roulette_distribution_for(
    ids: &[ServiceId],
    fitnesses: &[FitnessValue],
) -> Result<SelectionDistribution> {
    if ids.len() != fitnesses.len() {
        return Err(OsmosisError::LengthMismatch {
            properties: fitnesses.len(),
            weights: ids.len(),
        });
    }
    if fitnesses.iter().any(|f| !(f.0 >= 0.0 && f.0.is_finite())) {
        return Err(OsmosisError::InvalidWeights(
            "fitness values must be finite and non-negative".into(),
        ));
    }
    let total: f64 = fitnesses.iter().map(|f| f.0).sum();
    if !(total > 0.0) {
        return Err(OsmosisError::DegenerateDistribution);
    }
    Ok(SelectionDistribution {
        entries: ids
            .iter()
            .cloned()
            .zip(fitnesses.iter().map(|f| f.0 / total))
            .collect(),
    })
}

/// Per-layer selection scores of one service. The raw ratios can exceed 1;
/// the capped pair is what to use where a probability is required.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LayerProbabilities {
    pub p_osmotic_raw: f64,
    pub p_public_raw: f64,
    pub p_osmotic: f64,
    pub p_public: f64,
}

/// `(f / th_osm_sum, f / th_pub_sum)`, where the thresholds are summed over
/// the servers of each layer.
pub fn layer_selection_probabilities(
    fitness: FitnessValue,
    th_osm_sum: Threshold,
    th_pub_sum: Threshold,
) -> Result<LayerProbabilities> {
    if th_osm_sum.0 <= 0.0 || th_pub_sum.0 <= 0.0 {
        return Err(OsmosisError::ZeroThresholdSum);
    }
    let o = fitness.0 / th_osm_sum.0;
    let p = fitness.0 / th_pub_sum.0;
    Ok(LayerProbabilities {
        p_osmotic_raw: o,
        p_public_raw: p,
        p_osmotic: o.min(1.0),
        p_public: p.min(1.0),
    })
}

/// Sums per-server thresholds of a layer.
pub fn threshold_sum(per_server: &[Threshold]) -> Threshold {
    Threshold(per_server.iter().map(|t| t.0).sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundCheck {
    Holds,
    Violated,
    /// Total fitness lies outside `[th_osm_sum, th_pub_sum]`.
    NotApplicable,
}

/// Checks `f/th_pub_sum <= f/sum(f) <= f/th_osm_sum` for every service.
pub fn check_selection_bounds(
    fitnesses: &[FitnessValue],
    th_osm_sum: Threshold,
    th_pub_sum: Threshold,
) -> BoundCheck {
    let total: f64 = fitnesses.iter().map(|f| f.0).sum();
    if !(th_osm_sum.0 > 0.0 && total > 0.0 && th_osm_sum.0 <= total && total <= th_pub_sum.0) {
        return BoundCheck::NotApplicable;
    }
    let tol = |x: f64| SUM_TOLERANCE * x.abs().max(1.0);
    let ok = fitnesses.iter().all(|f| {
        let p = f.0 / total;
        let lo = f.0 / th_pub_sum.0;
        let hi = f.0 / th_osm_sum.0;
        lo <= p + tol(p) && p <= hi + tol(hi)
    });
    if ok {
        BoundCheck::Holds
    } else {
        BoundCheck::Violated
    }
}

/// Draws one id with probability proportional to its entry.
pub fn sample<'a, R: Rng + ?Sized>(dist: &'a SelectionDistribution, rng: &mut R) -> &'a ServiceId {
    let total: f64 = dist.entries.iter().map(|(_, p)| p).sum();
    let mut u = rng.gen::<f64>() * total;
    for (id, p) in &dist.entries {
        if u < *p {
            return id;
        }
        u -= p;
    }
    // Rounding left u just past the last bucket: return the last non-zero entry.
    &dist
        .entries
        .iter()
        .rev()
        .find(|(_, p)| *p > 0.0)
        .unwrap_or(&dist.entries[dist.entries.len() - 1])
        .0
}
