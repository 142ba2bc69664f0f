use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Injections only increase: loads drop, generation rises.
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Extremum {
    Min,
    Max,
}

/// One lower-level problem: activation case, worst-case direction and the
/// single-phase node whose magnitude is optimised.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Scenario {
    pub node: usize,
    pub activation: Activation,
    pub extremum: Extremum,
}

impl Scenario {
    pub fn new(node: usize, activation: Activation, extremum: Extremum) -> Scenario {
        Scenario { node, activation, extremum }
    }

    /// Scenario number 1..=4: positive/min, positive/max, negative/min, negative/max.
    pub fn id(&self) -> u8 {
        match (self.activation, self.extremum) {
            (Activation::Positive, Extremum::Min) => 1,
            (Activation::Positive, Extremum::Max) => 2,
            (Activation::Negative, Extremum::Min) => 3,
            (Activation::Negative, Extremum::Max) => 4,
        }
    }

    pub fn from_id(node: usize, id: u8) -> Option<Scenario> {
        let (a, e) = match id {
            1 => (Activation::Positive, Extremum::Min),
            2 => (Activation::Positive, Extremum::Max),
            3 => (Activation::Negative, Extremum::Min),
            4 => (Activation::Negative, Extremum::Max),
            _ => return None,
        };
        Some(Scenario::new(node, a, e))
    }

    /// `(-1)^s`: +1 when the magnitude is maximised.
    pub fn sign(&self) -> f64 {
        match self.extremum {
            Extremum::Max => 1.0,
            Extremum::Min => -1.0,
        }
    }

    /// All `4n` scenarios, node-major.
    pub fn all(n: usize) -> Vec<Scenario> {
        (0..n).flat_map(|k| (1..=4).map(move |s| Scenario::from_id(k, s).expect("valid id"))).collect()
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "s{}@{}", self.id(), self.node)
    }
}
