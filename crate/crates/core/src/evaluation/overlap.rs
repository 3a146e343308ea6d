use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

/// Set-overlap scores; a component is `None` when its denominator is empty.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
}

pub fn class_overlap_prf<T: Ord>(system: &BTreeSet<T>, human: &BTreeSet<T>) -> Prf {
    let common = system.intersection(human).count() as f64;
    let precision = (!system.is_empty()).then(|| common / system.len() as f64);
    let recall = (!human.is_empty()).then(|| common / human.len() as f64);
    let f1 = match (precision, recall) {
        (Some(p), Some(r)) if p + r > 0.0 => Some(2.0 * p * r / (p + r)),
        (Some(_), Some(_)) => Some(0.0),
        _ => None,
    };
    Prf {
        precision,
        recall,
        f1,
    }
}

/// Indices whose mass is strictly above `threshold`.
pub fn above_threshold(dist: &[f64], threshold: f64) -> BTreeSet<usize> {
    dist.iter()
        .enumerate()
        .filter(|(_, p)| **p > threshold)
        .map(|(i, _)| i)
        .collect()
}
