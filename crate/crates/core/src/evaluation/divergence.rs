//! Divergences between discrete distributions over a shared support.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-6;

/// Additive smoothing applied before KL so that zero cells stay finite.
pub const KL_SMOOTHING: f64 = 1e-10;

fn check_pair(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch {
            left: p.len(),
            right: q.len(),
        });
    }
    check_distribution(p)?;
    check_distribution(q)
}

pub fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidArgument("empty distribution".into()));
    }
    if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidArgument("distribution has negative or non-finite mass".into()));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SUM_TOLERANCE {
        return Err(Error::InvalidArgument(format!("distribution sums to {sum}, not 1")));
    }
    Ok(())
}

/// `Σ p log2(p/q)` with the convention `0·log(0/q) = 0`.
fn kl_bits(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, qi)| pi * (pi / qi).log2())
        .sum()
}

/// Jensen–Shannon divergence in bits, in `[0, 1]`.
pub fn js_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    let m: Vec<f64> = p.iter().zip(q).map(|(a, b)| 0.5 * (a + b)).collect();
    let js = 0.5 * kl_bits(p, &m) + 0.5 * kl_bits(q, &m);
    Ok(js.clamp(0.0, 1.0))
}

fn smooth(p: &[f64]) -> Vec<f64> {
    let z = 1.0 + KL_SMOOTHING * p.len() as f64;
    p.iter().map(|x| (x + KL_SMOOTHING) / z).collect()
}

/// `KL(p‖q)` in bits after additive smoothing of both sides.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    Ok(kl_bits(&smooth(p), &smooth(q)).max(0.0))
}

pub fn cosine_distance(p: &[f64], q: &[f64]) -> Result<f64> {
    check_pair(p, q)?;
    let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
    let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nq = q.iter().map(|a| a * a).sum::<f64>().sqrt();
    Ok((1.0 - dot / (np * nq)).max(0.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DivergenceMetric {
    JsDivergence,
    JsDistance,
    Kl,
    KlAvg,
    KlMax,
    Cosine,
}

impl DivergenceMetric {
    pub const ALL: [DivergenceMetric; 6] = [
        DivergenceMetric::JsDivergence,
        DivergenceMetric::JsDistance,
        DivergenceMetric::Kl,
        DivergenceMetric::KlAvg,
        DivergenceMetric::KlMax,
        DivergenceMetric::Cosine,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DivergenceMetric::JsDivergence => "js-divergence",
            DivergenceMetric::JsDistance => "js-distance",
            DivergenceMetric::Kl => "kl",
            DivergenceMetric::KlAvg => "kl-avg",
            DivergenceMetric::KlMax => "kl-max",
            DivergenceMetric::Cosine => "cosine",
        }
    }

    /// Divergence of `q` from reference `p`.
    pub fn compute(self, p: &[f64], q: &[f64]) -> Result<f64> {
        match self {
            DivergenceMetric::JsDivergence => js_divergence(p, q),
            DivergenceMetric::JsDistance => js_divergence(p, q).map(f64::sqrt),
            DivergenceMetric::Kl => kl_divergence(p, q),
            DivergenceMetric::KlAvg => Ok(0.5 * (kl_divergence(p, q)? + kl_divergence(q, p)?)),
            DivergenceMetric::KlMax => Ok(kl_divergence(p, q)?.max(kl_divergence(q, p)?)),
            DivergenceMetric::Cosine => cosine_distance(p, q),
        }
    }
}

impl fmt::Display for DivergenceMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DivergenceMetric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown divergence metric '{s}'")))
    }
}
