use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BusData, Line, RadialNetwork};
use crate::Error;

/// Child-count distribution and parameter ranges for random feeders.
///
/// `probabilities[k]` is the probability that a node has `child_counts[k]`
/// children. Reactances are drawn uniformly from `(reactance_min,
/// reactance_max]` and cost coefficients from `(cost_min, cost_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeDistribution {
    pub child_counts: Vec<usize>,
    pub probabilities: Vec<f64>,
    pub max_depth: usize,
    #[serde(default)]
    pub reactance_min: f64,
    #[serde(default = "default_reactance_max")]
    pub reactance_max: f64,
    #[serde(default)]
    pub cost_min: f64,
    #[serde(default = "default_cost_max")]
    pub cost_max: f64,
}

fn default_reactance_max() -> f64 {
    200.0
}

fn default_cost_max() -> f64 {
    100.0
}

impl DegreeDistribution {
    /// Distribution over `1, 2, ..., k` children with the given weights,
    /// default parameter ranges `(0, 200]` and `(0, 100]`.
    pub fn from_weights(probabilities: &[f64], max_depth: usize) -> Self {
        Self {
            child_counts: (1..=probabilities.len()).collect(),
            probabilities: probabilities.to_vec(),
            max_depth,
            reactance_min: 0.0,
            reactance_max: default_reactance_max(),
            cost_min: 0.0,
            cost_max: default_cost_max(),
        }
    }

    pub fn with_reactance(mut self, min: f64, max: f64) -> Self {
        self.reactance_min = min;
        self.reactance_max = max;
        self
    }

    pub fn with_cost(mut self, min: f64, max: f64) -> Self {
        self.cost_min = min;
        self.cost_max = max;
        self
    }

    /// Expected number of children per interior node.
    pub fn mean_children(&self) -> f64 {
        self.child_counts
            .iter()
            .zip(&self.probabilities)
            .map(|(&c, &p)| c as f64 * p)
            .sum()
    }

    pub fn validate(&self) -> Result<(), Error> {
        let bad = |msg: &str| Err(Error::InvalidDistribution(msg.to_string()));
        if self.child_counts.is_empty() || self.child_counts.len() != self.probabilities.len() {
            return bad("child counts and probabilities must be non-empty and of equal length");
        }
        if self.probabilities.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return bad("probabilities must be finite and non-negative");
        }
        let total: f64 = self.probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return bad(&format!("probabilities sum to {total}, expected 1"));
        }
        if self.max_depth == 0 {
            return bad("max depth must be at least 1");
        }
        if !(self.reactance_min >= 0.0 && self.reactance_max > self.reactance_min) {
            return bad("reactance range must satisfy 0 <= min < max");
        }
        if !(self.cost_min >= 0.0 && self.cost_max > self.cost_min) {
            return bad("cost range must satisfy 0 <= min < max");
        }
        Ok(())
    }
}

/// A random feeder with one quadratic cost coefficient per node.
#[derive(Debug, Clone)]
pub struct RandomInstance {
    pub network: RadialNetwork,
    pub costs: Vec<f64>,
}

/// Uniform draw from the half-open interval `(lo, hi]`.
pub(crate) fn uniform_open_closed<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    hi - (hi - lo) * rng.gen::<f64>()
}

/// Generates a random feeder level by level. The root gets exactly one
/// child; nodes at `max_depth` get none. Node ids follow breadth-first order.
pub fn random_tree(dist: &DegreeDistribution, seed: u64) -> Result<RandomInstance, Error> {
    dist.validate()?;
    let picker =
        WeightedIndex::new(&dist.probabilities).map_err(|e| Error::InvalidDistribution(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut lines = Vec::new();
    let mut depth = vec![0usize, 1];
    let mut next = 2usize;
    lines.push(Line::new(
        0,
        1,
        0.0,
        uniform_open_closed(&mut rng, dist.reactance_min, dist.reactance_max),
    ));
    let mut cursor = 1usize;
    while cursor < next {
        if depth[cursor] < dist.max_depth {
            let k = dist.child_counts[picker.sample(&mut rng)];
            for _ in 0..k {
                let x = uniform_open_closed(&mut rng, dist.reactance_min, dist.reactance_max);
                lines.push(Line::new(cursor, next, 0.0, x));
                depth.push(depth[cursor] + 1);
                next += 1;
            }
        }
        cursor += 1;
    }
    let n = next - 1;
    let costs = (0..n)
        .map(|_| uniform_open_closed(&mut rng, dist.cost_min, dist.cost_max))
        .collect();
    let network = RadialNetwork::new(1.0, vec![BusData::default(); n], lines)?;
    Ok(RandomInstance { network, costs })
}
