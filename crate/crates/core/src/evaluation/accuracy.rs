//! Top-k accuracy and accuracy by amount of evidence.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::spearman;
use crate::error::{Error, Result};
use crate::profile::{rank_values, GroupQuery, Profiler};
use crate::store::{Exemplar, ExemplarTable, Split};

/// Buckets with fewer rows than this are flagged as low-confidence.
pub const LOW_CONFIDENCE_ROWS: usize = 20;

/// |ρ| above this marks a shift curve as positively or negatively correlated.
pub const REGIME_THRESHOLD: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetAccuracy {
    pub facet: String,
    pub evaluated: usize,
    /// Hits per requested k, aligned with [`AccuracyReport::ks`].
    pub hits: Vec<usize>,
}

impl FacetAccuracy {
    /// Accuracy at the `i`-th requested k; `None` when nothing was evaluated.
    pub fn accuracy(&self, i: usize) -> Option<f64> {
        (self.evaluated > 0).then(|| self.hits[i] as f64 / self.evaluated as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub model: String,
    pub ks: Vec<usize>,
    pub facets: Vec<FacetAccuracy>,
}

impl AccuracyReport {
    pub fn facet(&self, name: &str) -> Option<&FacetAccuracy> {
        self.facets.iter().find(|f| f.facet == name)
    }

    /// Accuracy of `facet` at `k`, if `k` was requested and the facet evaluated.
    pub fn accuracy(&self, facet: &str, k: usize) -> Option<f64> {
        let i = self.ks.iter().position(|&x| x == k)?;
        self.facet(facet)?.accuracy(i)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("model,facet,evaluated");
        for k in &self.ks {
            let _ = write!(out, ",top{k}");
        }
        out.push('\n');
        for f in &self.facets {
            let _ = write!(out, "{},{},{}", self.model, csv_field(&f.facet), f.evaluated);
            for i in 0..self.ks.len() {
                match f.accuracy(i) {
                    Some(a) => {
                        let _ = write!(out, ",{a:.6}");
                    }
                    None => out.push_str(",N/A"),
                }
            }
            out.push('\n');
        }
        out
    }
}

pub(crate) fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Zero-based rank of `target` in the model's distribution for `facet` given
/// `query`. A facet the model cannot predict is ranked under a uniform guess.
fn rank_of_target(model: &dyn Profiler, query: &GroupQuery, facet: usize, target: u32) -> Result<usize> {
    let labels = model.schema().facet(facet).vocabulary();
    let probs = match model.predict_facet(query, facet) {
        Ok(p) => p,
        Err(Error::NoTrainingValues(_)) => vec![1.0 / labels.len() as f64; labels.len()],
        Err(e) => return Err(e),
    };
    if probs.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite("predicted distribution"));
    }
    Ok(rank_values(&probs, labels)
        .iter()
        .position(|&v| v == target)
        .expect("target is in the vocabulary"))
}

fn hidden_query(row: &Exemplar, facet: usize) -> GroupQuery {
    GroupQuery::from_cells(&row.cells, Some(facet)).with_embedding(row.embedding.clone())
}

fn check_ks(ks: &[usize]) -> Result<()> {
    if ks.is_empty() || ks.contains(&0) {
        return Err(Error::InvalidArgument("k values must be at least 1".into()));
    }
    Ok(())
}

/// For every row and every known facet: hide that value, query with the rest,
/// and count a hit at `k` when the true value ranks in the top `k`.
pub fn topk_accuracy(model: &dyn Profiler, rows: &[&Exemplar], ks: &[usize]) -> Result<AccuracyReport> {
    check_ks(ks)?;
    let schema = model.schema();
    let n = schema.len();
    let per_row: Vec<Vec<Option<usize>>> = rows
        .par_iter()
        .map(|row| {
            (0..n)
                .map(|f| match row.cells[f] {
                    Some(t) => rank_of_target(model, &hidden_query(row, f), f, t).map(Some),
                    None => Ok(None),
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let facets = (0..n)
        .map(|f| {
            let ranks: Vec<usize> = per_row.iter().filter_map(|r| r[f]).collect();
            FacetAccuracy {
                facet: schema.facet(f).name().to_string(),
                evaluated: ranks.len(),
                hits: ks.iter().map(|&k| ranks.iter().filter(|&&r| r < k).count()).collect(),
            }
        })
        .collect();
    Ok(AccuracyReport {
        model: model.kind().to_string(),
        ks: ks.to_vec(),
        facets,
    })
}

/// [`topk_accuracy`] over the table's TEST split.
pub fn topk_accuracy_test(model: &dyn Profiler, table: &ExemplarTable, ks: &[usize]) -> Result<AccuracyReport> {
    if model.schema().fingerprint() != table.schema().fingerprint() {
        return Err(Error::FingerprintMismatch {
            found: model.schema().fingerprint(),
            expected: table.schema().fingerprint(),
        });
    }
    let rows: Vec<&Exemplar> = table.split_rows(Split::Test).collect();
    topk_accuracy(model, &rows, ks)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftBucket {
    /// Number of known facets besides the target.
    pub known_facets: usize,
    pub n: usize,
    pub top1: f64,
    pub top3: f64,
    pub low_confidence: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Positive,
    None,
    Negative,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftCurve {
    pub facet: String,
    pub buckets: Vec<ShiftBucket>,
    /// Spearman ρ between bucket evidence count and top-1 accuracy.
    pub spearman: Option<f64>,
    pub regime: Option<Regime>,
}

impl ShiftCurve {
    pub fn evaluated(&self) -> usize {
        self.buckets.iter().map(|b| b.n).sum()
    }

    pub fn bucket(&self, known_facets: usize) -> Option<&ShiftBucket> {
        self.buckets.iter().find(|b| b.known_facets == known_facets)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("facet,known_facets,n,top1,top3,low_confidence\n");
        for b in &self.buckets {
            let _ = writeln!(
                out,
                "{},{},{},{:.6},{:.6},{}",
                csv_field(&self.facet),
                b.known_facets,
                b.n,
                b.top1,
                b.top3,
                b.low_confidence
            );
        }
        out
    }
}

pub fn classify_regime(rho: f64) -> Regime {
    if rho > REGIME_THRESHOLD {
        Regime::Positive
    } else if rho < -REGIME_THRESHOLD {
        Regime::Negative
    } else {
        Regime::None
    }
}

/// Accuracy on `facet` bucketed by how many other facets each row knows.
/// Rows where `facet` is MISSING are not evaluated.
pub fn shift_curve(model: &dyn Profiler, rows: &[&Exemplar], facet: usize) -> Result<ShiftCurve> {
    let schema = model.schema();
    if facet >= schema.len() {
        return Err(Error::InvalidArgument(format!("facet index {facet} out of range")));
    }
    let scored: Vec<(usize, usize)> = rows
        .par_iter()
        .filter_map(|row| row.cells[facet].map(|t| (row, t)))
        .map(|(row, t)| {
            let q = hidden_query(row, facet);
            Ok((q.len(), rank_of_target(model, &q, facet, t)?))
        })
        .collect::<Result<_>>()?;
    let max_known = scored.iter().map(|s| s.0).max();
    let mut buckets = Vec::new();
    if let Some(max_known) = max_known {
        for known in 0..=max_known {
            let ranks: Vec<usize> = scored.iter().filter(|s| s.0 == known).map(|s| s.1).collect();
            if ranks.is_empty() {
                continue;
            }
            let n = ranks.len();
            buckets.push(ShiftBucket {
                known_facets: known,
                n,
                top1: ranks.iter().filter(|&&r| r < 1).count() as f64 / n as f64,
                top3: ranks.iter().filter(|&&r| r < 3).count() as f64 / n as f64,
                low_confidence: n < LOW_CONFIDENCE_ROWS,
            });
        }
    }
    let xs: Vec<f64> = buckets.iter().map(|b| b.known_facets as f64).collect();
    let ys: Vec<f64> = buckets.iter().map(|b| b.top1).collect();
    let rho = spearman(&xs, &ys);
    Ok(ShiftCurve {
        facet: schema.facet(facet).name().to_string(),
        buckets,
        spearman: rho,
        regime: rho.map(classify_regime),
    })
}

/// Accuracy on `facet` with and without test-time masking of the other
/// known cells, over the rows where it was evaluated.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaskedAccuracy {
    pub evaluated: usize,
    pub clean: Option<f64>,
    pub masked: Option<f64>,
}

/// Hide each known input cell with probability `rate` and compare top-`k`
/// accuracy on `facet` before and after. With `keep`, rows where that facet
/// was masked (or is MISSING) are left out of both measurements.
pub fn masked_topk(
    model: &dyn Profiler,
    rows: &[&Exemplar],
    facet: usize,
    k: usize,
    rate: f64,
    seed: u64,
    keep: Option<usize>,
) -> Result<MaskedAccuracy> {
    check_ks(&[k])?;
    if !(0.0..=1.0).contains(&rate) {
        return Err(Error::InvalidArgument("mask rate must be in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut evaluated, mut clean, mut masked) = (0usize, 0usize, 0usize);
    for row in rows {
        let Some(t) = row.cells[facet] else { continue };
        let mut cells = row.cells.clone();
        cells[facet] = None;
        let full = cells.clone();
        for c in cells.iter_mut() {
            if c.is_some() && rng.gen::<f64>() < rate {
                *c = None;
            }
        }
        if let Some(kf) = keep {
            if cells[kf].is_none() {
                continue;
            }
        }
        let q_full = GroupQuery::from_cells(&full, None).with_embedding(row.embedding.clone());
        let q_masked = GroupQuery::from_cells(&cells, None).with_embedding(row.embedding.clone());
        evaluated += 1;
        clean += (rank_of_target(model, &q_full, facet, t)? < k) as usize;
        masked += (rank_of_target(model, &q_masked, facet, t)? < k) as usize;
    }
    let frac = |h: usize| (evaluated > 0).then(|| h as f64 / evaluated as f64);
    Ok(MaskedAccuracy {
        evaluated,
        clean: frac(clean),
        masked: frac(masked),
    })
}
