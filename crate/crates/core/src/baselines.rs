//! Reference profilers: most-frequent-value and categorical naive Bayes.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::checkpoint::ParamBlob;
use crate::error::{Error, Result};
use crate::profile::{GroupQuery, ModelKind, Profiler};
use crate::store::{ExemplarTable, FacetSchema, Split};

fn train_counts(table: &ExemplarTable) -> Vec<Vec<u64>> {
    let mut counts: Vec<Vec<u64>> = table.schema().sizes().into_iter().map(|v| vec![0; v]).collect();
    for row in table.split_rows(Split::Train) {
        for (f, c) in row.cells.iter().enumerate() {
            if let Some(v) = c {
                counts[f][*v as usize] += 1;
            }
        }
    }
    counts
}

fn uniform(v: usize) -> Vec<f64> {
    vec![1.0 / v as f64; v]
}

/// Predicts every facet's training distribution regardless of the query.
#[derive(Clone, Debug, PartialEq)]
pub struct MfvModel {
    schema: FacetSchema,
    counts: Vec<Vec<u64>>,
}

impl MfvModel {
    pub fn fit(table: &ExemplarTable) -> Self {
        MfvModel {
            schema: table.schema().clone(),
            counts: train_counts(table),
        }
    }

    /// Training frequency distribution, or `None` if the facet has no training values.
    pub fn distribution(&self, facet: usize) -> Option<Vec<f64>> {
        let total: u64 = self.counts[facet].iter().sum();
        (total > 0).then(|| {
            self.counts[facet]
                .iter()
                .map(|&c| c as f64 / total as f64)
                .collect()
        })
    }

    /// Modal value; ties go to the lexicographically smaller label.
    pub fn argmax(&self, facet: usize) -> Option<u32> {
        let labels = self.schema.facet(facet).vocabulary();
        let counts = &self.counts[facet];
        if counts.iter().all(|&c| c == 0) {
            return None;
        }
        (0..counts.len() as u32).min_by(|&a, &b| {
            counts[b as usize]
                .cmp(&counts[a as usize])
                .then_with(|| labels[a as usize].cmp(&labels[b as usize]))
        })
    }

    pub(crate) fn to_blobs(&self) -> Vec<ParamBlob> {
        self.counts
            .iter()
            .enumerate()
            .map(|(f, c)| ParamBlob::new(format!("counts.{f}"), vec![c.len()], c.iter().map(|&x| x as f64).collect()))
            .collect()
    }

    pub(crate) fn from_blobs(schema: FacetSchema, blobs: &[ParamBlob]) -> Result<Self> {
        let counts = schema
            .sizes()
            .into_iter()
            .enumerate()
            .map(|(f, v)| ParamBlob::find(blobs, &format!("counts.{f}"), &[v]).map(|b| b.as_counts()))
            .collect::<Result<Vec<_>>>()?;
        Ok(MfvModel { schema, counts })
    }
}

impl Profiler for MfvModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Mfv
    }

    fn schema(&self) -> &FacetSchema {
        &self.schema
    }

    /// Facets without training values get a uniform distribution here;
    /// `predict_facet` refuses them.
    fn predict_all(&self, _query: &GroupQuery) -> Result<Vec<Vec<f64>>> {
        Ok((0..self.schema.len())
            .map(|f| {
                self.distribution(f)
                    .unwrap_or_else(|| uniform(self.schema.facet(f).size()))
            })
            .collect())
    }

    fn predict_facet(&self, _query: &GroupQuery, facet: usize) -> Result<Vec<f64>> {
        self.distribution(facet)
            .ok_or_else(|| Error::NoTrainingValues(self.schema.facet(facet).name().to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NbConfig {
    /// Additive (Laplace) smoothing constant.
    pub alpha: f64,
}

impl Default for NbConfig {
    fn default() -> Self {
        NbConfig { alpha: 1.0 }
    }
}

/// Categorical naive Bayes with one model per target facet, evidence from
/// every other known facet.
#[derive(Clone, Debug, PartialEq)]
pub struct NbModel {
    schema: FacetSchema,
    config: NbConfig,
    /// Per facet, per value: TRAIN rows holding it.
    class_counts: Vec<Vec<u64>>,
    /// `known_with[t][i][c]`: TRAIN rows with `x_t = c` and `x_i` known.
    known_with: Vec<Vec<Vec<u64>>>,
    /// For facets `a < b`: `(value_a, value_b) -> count`.
    cooccur: Vec<Vec<HashMap<(u32, u32), u64>>>,
}

impl NbModel {
    pub fn fit(table: &ExemplarTable, config: NbConfig) -> Result<Self> {
        if !(config.alpha >= 0.0 && config.alpha.is_finite()) {
            return Err(Error::InvalidArgument("smoothing alpha must be finite and >= 0".into()));
        }
        let schema = table.schema().clone();
        let sizes = schema.sizes();
        let n = sizes.len();
        let class_counts = train_counts(table);
        let mut known_with: Vec<Vec<Vec<u64>>> = sizes
            .iter()
            .map(|&v| (0..n).map(|_| vec![0; v]).collect())
            .collect();
        let mut cooccur: Vec<Vec<HashMap<(u32, u32), u64>>> =
            (0..n).map(|_| (0..n).map(|_| HashMap::new()).collect()).collect();
        for row in table.split_rows(Split::Train) {
            let known: Vec<(usize, u32)> = row
                .cells
                .iter()
                .enumerate()
                .filter_map(|(f, c)| c.map(|v| (f, v)))
                .collect();
            for &(t, c) in &known {
                for &(i, y) in &known {
                    if i == t {
                        continue;
                    }
                    known_with[t][i][c as usize] += 1;
                    if t < i {
                        *cooccur[t][i].entry((c, y)).or_insert(0) += 1;
                    }
                }
            }
        }
        Ok(NbModel {
            schema,
            config,
            class_counts,
            known_with,
            cooccur,
        })
    }

    pub fn config(&self) -> NbConfig {
        self.config
    }

    fn pair_count(&self, t: usize, c: u32, i: usize, y: u32) -> u64 {
        let (a, b, key) = if t < i { (t, i, (c, y)) } else { (i, t, (y, c)) };
        self.cooccur[a][b].get(&key).copied().unwrap_or(0)
    }

    /// Smoothed `P(x_t = c)`.
    pub fn prior(&self, target: usize) -> Vec<f64> {
        let counts = &self.class_counts[target];
        let v = counts.len() as f64;
        let total: u64 = counts.iter().sum();
        let denom = total as f64 + self.config.alpha * v;
        if denom == 0.0 {
            return uniform(counts.len());
        }
        counts
            .iter()
            .map(|&c| (c as f64 + self.config.alpha) / denom)
            .collect()
    }

    /// Smoothed `P(x_i = · | x_t = c)` over the evidence vocabulary.
    pub fn conditional(&self, target: usize, class: u32, evidence: usize) -> Vec<f64> {
        let v_i = self.schema.facet(evidence).size();
        let denom = self.known_with[target][evidence][class as usize] as f64 + self.config.alpha * v_i as f64;
        (0..v_i as u32)
            .map(|y| {
                if denom == 0.0 {
                    1.0 / v_i as f64
                } else {
                    (self.pair_count(target, class, evidence, y) as f64 + self.config.alpha) / denom
                }
            })
            .collect()
    }

    /// `P(x_t | evidence)` computed in log space; evidence on the target itself is ignored.
    pub fn posterior(&self, query: &GroupQuery, target: usize) -> Vec<f64> {
        let v_t = self.schema.facet(target).size();
        if v_t == 0 {
            return Vec::new();
        }
        let alpha = self.config.alpha;
        let mut logp: Vec<f64> = self.prior(target).iter().map(|p| p.ln()).collect();
        for &(i, y) in query.known() {
            if i == target {
                continue;
            }
            let v_i = self.schema.facet(i).size() as f64;
            for (c, lp) in logp.iter_mut().enumerate() {
                let denom = self.known_with[target][i][c] as f64 + alpha * v_i;
                let term = if denom == 0.0 {
                    -(v_i.ln())
                } else {
                    ((self.pair_count(target, c as u32, i, y) as f64 + alpha) / denom).ln()
                };
                *lp += term;
            }
        }
        normalize_log(&logp).unwrap_or_else(|| self.prior(target))
    }

    pub(crate) fn to_blobs(&self) -> Vec<ParamBlob> {
        let n = self.schema.len();
        let mut blobs = Vec::new();
        for (f, c) in self.class_counts.iter().enumerate() {
            blobs.push(ParamBlob::new(format!("class.{f}"), vec![c.len()], c.iter().map(|&x| x as f64).collect()));
        }
        for t in 0..n {
            for i in 0..n {
                if t == i {
                    continue;
                }
                let k = &self.known_with[t][i];
                blobs.push(ParamBlob::new(format!("known.{t}.{i}"), vec![k.len()], k.iter().map(|&x| x as f64).collect()));
            }
        }
        for a in 0..n {
            for b in (a + 1)..n {
                let mut entries: Vec<(&(u32, u32), &u64)> = self.cooccur[a][b].iter().collect();
                entries.sort();
                let data = entries
                    .iter()
                    .flat_map(|((x, y), c)| [*x as f64, *y as f64, **c as f64])
                    .collect();
                blobs.push(ParamBlob::new(format!("pair.{a}.{b}"), vec![entries.len(), 3], data));
            }
        }
        blobs
    }

    pub(crate) fn from_blobs(schema: FacetSchema, config: NbConfig, blobs: &[ParamBlob]) -> Result<Self> {
        let sizes = schema.sizes();
        let n = sizes.len();
        let class_counts = (0..n)
            .map(|f| ParamBlob::find(blobs, &format!("class.{f}"), &[sizes[f]]).map(|b| b.as_counts()))
            .collect::<Result<Vec<_>>>()?;
        let mut known_with = Vec::with_capacity(n);
        for t in 0..n {
            let mut row = Vec::with_capacity(n);
            for i in 0..n {
                if t == i {
                    row.push(vec![0; sizes[t]]);
                } else {
                    row.push(ParamBlob::find(blobs, &format!("known.{t}.{i}"), &[sizes[t]])?.as_counts());
                }
            }
            known_with.push(row);
        }
        let mut cooccur: Vec<Vec<HashMap<(u32, u32), u64>>> =
            (0..n).map(|_| (0..n).map(|_| HashMap::new()).collect()).collect();
        for a in 0..n {
            for b in (a + 1)..n {
                let name = format!("pair.{a}.{b}");
                let blob = blobs.iter().find(|x| x.name == name).ok_or_else(|| Error::Format {
                    kind: "checkpoint",
                    message: format!("missing parameter blob '{name}'"),
                })?;
                if blob.shape.len() != 2 || blob.shape[1] != 3 {
                    return Err(Error::Format {
                        kind: "checkpoint",
                        message: format!("blob '{name}' has shape {:?}", blob.shape),
                    });
                }
                for t in blob.data.chunks_exact(3) {
                    cooccur[a][b].insert((t[0] as u32, t[1] as u32), t[2] as u64);
                }
            }
        }
        Ok(NbModel {
            schema,
            config,
            class_counts,
            known_with,
            cooccur,
        })
    }
}

/// Exponentiate and normalize log-weights; `None` if every weight is zero.
pub(crate) fn normalize_log(logp: &[f64]) -> Option<Vec<f64>> {
    let max = logp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return None;
    }
    let exps: Vec<f64> = logp.iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    Some(exps.into_iter().map(|e| e / sum).collect())
}

impl Profiler for NbModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Nb
    }

    fn schema(&self) -> &FacetSchema {
        &self.schema
    }

    fn predict_all(&self, query: &GroupQuery) -> Result<Vec<Vec<f64>>> {
        Ok((0..self.schema.len()).map(|t| self.posterior(query, t)).collect())
    }

    fn predict_facet(&self, query: &GroupQuery, facet: usize) -> Result<Vec<f64>> {
        if self.class_counts[facet].iter().all(|&c| c == 0) {
            return Err(Error::NoTrainingValues(self.schema.facet(facet).name().to_string()));
        }
        Ok(self.posterior(query, facet))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Exemplar, Facet};
    use approx::assert_abs_diff_eq;

    fn table(cells: &[[Option<u32>; 2]], sizes: [usize; 2]) -> ExemplarTable {
        let facets = ["a", "b"]
            .iter()
            .zip(sizes)
            .map(|(n, v)| {
                Facet::new(*n, (0..v).map(|i| format!("{n}{i}")).collect(), vec![0; v]).unwrap()
            })
            .collect();
        let rows = cells
            .iter()
            .enumerate()
            .map(|(i, c)| Exemplar {
                entity_id: i.to_string(),
                cells: c.to_vec(),
                split: Split::Train,
                embedding: None,
            })
            .collect();
        ExemplarTable::new(FacetSchema::new(facets).unwrap(), rows).unwrap()
    }

    #[test]
    fn mfv_ignores_evidence() {
        let t = table(&[[Some(0), Some(1)], [Some(0), None], [Some(1), Some(1)]], [2, 2]);
        let m = MfvModel::fit(&t);
        let q = GroupQuery::new(t.schema(), [(1, 0)]).unwrap();
        let d = m.predict_facet(&q, 0).unwrap();
        assert_abs_diff_eq!(d[0], 2.0 / 3.0, epsilon = 1e-12);
        assert_eq!(d, m.predict_facet(&GroupQuery::empty(), 0).unwrap());
        assert_eq!(m.argmax(0), Some(0));
    }

    #[test]
    fn mfv_tie_goes_to_smaller_label() {
        // labels a0, a1; a1 listed... both counted once
        let t = table(&[[Some(1), None], [Some(0), None]], [2, 1]);
        assert_eq!(MfvModel::fit(&t).argmax(0), Some(0));
    }

    #[test]
    fn mfv_untrained_facet_errors() {
        let t = table(&[[Some(0), None]], [1, 2]);
        let m = MfvModel::fit(&t);
        match m.predict_facet(&GroupQuery::empty(), 1) {
            Err(Error::NoTrainingValues(f)) => assert_eq!(f, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn nb_empty_query_is_smoothed_prior() {
        let t = table(&[[Some(0), Some(1)], [Some(0), None], [Some(1), Some(1)]], [2, 2]);
        let nb = NbModel::fit(&t, NbConfig::default()).unwrap();
        let d = nb.posterior(&GroupQuery::empty(), 0);
        // (2+1)/(3+2), (1+1)/(3+2)
        assert_abs_diff_eq!(d[0], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(d[1], 0.4, epsilon = 1e-12);
    }

    #[test]
    fn nb_conditionals_normalized() {
        let t = table(
            &[[Some(0), Some(1)], [Some(0), Some(2)], [Some(1), Some(1)], [None, Some(0)]],
            [2, 3],
        );
        let nb = NbModel::fit(&t, NbConfig { alpha: 0.5 }).unwrap();
        for tgt in 0..2 {
            let ev = 1 - tgt;
            for c in 0..t.schema().facet(tgt).size() as u32 {
                let s: f64 = nb.conditional(tgt, c, ev).iter().sum();
                assert_abs_diff_eq!(s, 1.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn unseen_combination_keeps_mass() {
        let t = table(&[[Some(0), Some(0)], [Some(1), Some(1)]], [2, 2]);
        let nb = NbModel::fit(&t, NbConfig::default()).unwrap();
        let q = GroupQuery::new(t.schema(), [(1, 0)]).unwrap();
        let d = nb.posterior(&q, 0);
        assert!(d[1] > 0.0);
        assert!(d[0] > d[1]);
    }

    #[test]
    fn nb_blob_round_trip() {
        let t = table(&[[Some(0), Some(1)], [Some(1), Some(2)], [Some(0), None]], [2, 3]);
        let nb = NbModel::fit(&t, NbConfig::default()).unwrap();
        let back = NbModel::from_blobs(t.schema().clone(), nb.config(), &nb.to_blobs()).unwrap();
        assert_eq!(nb, back);
        let mfv = MfvModel::fit(&t);
        assert_eq!(mfv, MfvModel::from_blobs(t.schema().clone(), &mfv.to_blobs()).unwrap());
    }
}
