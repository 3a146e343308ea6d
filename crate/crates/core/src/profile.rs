//! Groups, profiles, and the interface every profiling model implements.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::divergence::js_divergence;
use crate::store::{Cell, FacetSchema};

/// A group: a set of known `(facet, value)` pairs, optionally with the
/// entity vector the embedding predictor consumes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GroupQuery {
    known: Vec<(usize, u32)>,
    embedding: Option<Vec<f64>>,
}

impl GroupQuery {
    pub fn empty() -> Self {
        Self::default()
    }

    /// Validate index pairs against `schema`. Repeating a facet with the same
    /// value is allowed; with a different value it is an error.
    pub fn new(schema: &FacetSchema, pairs: impl IntoIterator<Item = (usize, u32)>) -> Result<Self> {
        let mut known: Vec<(usize, u32)> = Vec::new();
        for (f, v) in pairs {
            if f >= schema.len() {
                return Err(Error::UnknownFacet {
                    facet: format!("#{f}"),
                    valid: schema.names(),
                });
            }
            let facet = schema.facet(f);
            if v as usize >= facet.size() {
                return Err(Error::UnknownValue {
                    facet: facet.name().to_string(),
                    value: format!("#{v}"),
                    suggestions: facet.vocabulary().iter().take(5).cloned().collect(),
                });
            }
            match known.iter().find(|(kf, _)| *kf == f) {
                Some((_, kv)) if *kv != v => {
                    return Err(Error::ConflictingFacet(facet.name().to_string()))
                }
                Some(_) => {}
                None => known.push((f, v)),
            }
        }
        known.sort_unstable();
        Ok(GroupQuery {
            known,
            embedding: None,
        })
    }

    pub fn from_labels<'a>(
        schema: &FacetSchema,
        pairs: impl IntoIterator<Item = (&'a str, &'a str)>,
    ) -> Result<Self> {
        let resolved = pairs
            .into_iter()
            .map(|(f, v)| schema.resolve(f, v))
            .collect::<Result<Vec<_>>>()?;
        Self::new(schema, resolved)
    }

    /// Query from a row's cells, leaving out `hide` when given.
    pub fn from_cells(cells: &[Cell], hide: Option<usize>) -> Self {
        let known = cells
            .iter()
            .enumerate()
            .filter(|(i, _)| Some(*i) != hide)
            .filter_map(|(i, c)| c.map(|v| (i, v)))
            .collect();
        GroupQuery {
            known,
            embedding: None,
        }
    }

    pub fn with_embedding(mut self, embedding: Option<Vec<f64>>) -> Self {
        self.embedding = embedding;
        self
    }

    pub fn known(&self) -> &[(usize, u32)] {
        &self.known
    }

    pub fn embedding(&self) -> Option<&[f64]> {
        self.embedding.as_deref()
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    pub fn value_of(&self, facet: usize) -> Option<u32> {
        self.known.iter().find(|(f, _)| *f == facet).map(|(_, v)| *v)
    }

    pub fn cells(&self, n_facets: usize) -> Vec<Cell> {
        let mut cells = vec![None; n_facets];
        for &(f, v) in &self.known {
            cells[f] = Some(v);
        }
        cells
    }

    /// Union with `added`; a facet given different values on both sides is an error.
    pub fn extended(&self, schema: &FacetSchema, added: &GroupQuery) -> Result<Self> {
        let q = Self::new(schema, self.known.iter().chain(added.known.iter()).copied())?;
        Ok(q.with_embedding(self.embedding.clone().or_else(|| added.embedding.clone())))
    }

    fn check_schema(&self, schema: &FacetSchema) -> Result<()> {
        Self::new(schema, self.known.iter().copied()).map(|_| ())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ModelKind {
    Ae,
    Emb,
    Nb,
    Mfv,
}

impl ModelKind {
    pub fn tag(self) -> &'static str {
        match self {
            ModelKind::Ae => "AE",
            ModelKind::Emb => "EMB",
            ModelKind::Nb => "NB",
            ModelKind::Mfv => "MFV",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ae" => Ok(ModelKind::Ae),
            "emb" => Ok(ModelKind::Emb),
            "nb" => Ok(ModelKind::Nb),
            "mfv" => Ok(ModelKind::Mfv),
            other => Err(Error::InvalidArgument(format!("unknown model kind '{other}'"))),
        }
    }
}

/// A profiling model: maps a group to a distribution over every facet's vocabulary.
pub trait Profiler: Send + Sync {
    fn kind(&self) -> ModelKind;

    fn schema(&self) -> &FacetSchema;

    /// Distribution for every facet (including ones fixed in the query).
    /// The query is assumed to be valid for the schema.
    fn predict_all(&self, query: &GroupQuery) -> Result<Vec<Vec<f64>>>;

    /// Distribution for one facet. Override when one head is cheaper than all.
    fn predict_facet(&self, query: &GroupQuery, facet: usize) -> Result<Vec<f64>> {
        let mut all = self.predict_all(query)?;
        Ok(std::mem::take(&mut all[facet]))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetDistribution {
    pub facet: usize,
    pub probabilities: Vec<f64>,
}

/// A profile: the fixed facts of the group plus one distribution per unknown facet.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileDistribution {
    pub fixed: Vec<(usize, u32)>,
    pub expectations: Vec<FacetDistribution>,
}

impl ProfileDistribution {
    pub fn expectation(&self, facet: usize) -> Option<&[f64]> {
        self.expectations
            .iter()
            .find(|e| e.facet == facet)
            .map(|e| e.probabilities.as_slice())
    }
}

/// Profile a group. Facets with an empty vocabulary have nothing to predict and
/// are left out.
pub fn profile(model: &dyn Profiler, query: &GroupQuery) -> Result<ProfileDistribution> {
    let schema = model.schema();
    query.check_schema(schema)?;
    let all = model.predict_all(query)?;
    let expectations = all
        .into_iter()
        .enumerate()
        .filter(|(f, d)| query.value_of(*f).is_none() && !d.is_empty())
        .map(|(facet, probabilities)| {
            if probabilities.iter().any(|p| !p.is_finite()) {
                return Err(Error::NonFinite("profile distribution"));
            }
            Ok(FacetDistribution {
                facet,
                probabilities,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ProfileDistribution {
        fixed: query.known().to_vec(),
        expectations,
    })
}

/// Value indices ordered by descending probability, ties by ascending label.
pub fn rank_values(probabilities: &[f64], labels: &[String]) -> Vec<u32> {
    let mut idx: Vec<u32> = (0..probabilities.len() as u32).collect();
    idx.sort_by(|&a, &b| {
        probabilities[b as usize]
            .partial_cmp(&probabilities[a as usize])
            .unwrap_or(Ordering::Equal)
            .then_with(|| labels[a as usize].cmp(&labels[b as usize]))
    });
    idx
}

pub fn top_value(probabilities: &[f64], labels: &[String]) -> Option<u32> {
    rank_values(probabilities, labels).first().copied()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetShift {
    pub facet: usize,
    /// Jensen–Shannon divergence in bits, in `[0, 1]`.
    pub divergence: f64,
    pub top_before: Option<u32>,
    pub top_after: Option<u32>,
}

impl FacetShift {
    pub fn top_changed(&self) -> bool {
        self.top_before != self.top_after
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShiftReport {
    pub facets: Vec<FacetShift>,
}

/// How every still-unknown facet's expectation moves when `added` is revealed.
pub fn shift(model: &dyn Profiler, base: &GroupQuery, added: &GroupQuery) -> Result<ShiftReport> {
    let schema = model.schema();
    added.check_schema(schema)?;
    let extended = base.extended(schema, added)?;
    let before = profile(model, base)?;
    let after = profile(model, &extended)?;
    let mut facets = Vec::new();
    for e in &after.expectations {
        let prior = before
            .expectation(e.facet)
            .expect("facet unknown after extension is unknown before");
        let labels = schema.facet(e.facet).vocabulary();
        facets.push(FacetShift {
            facet: e.facet,
            divergence: js_divergence(prior, &e.probabilities)?,
            top_before: top_value(prior, labels),
            top_after: top_value(&e.probabilities, labels),
        });
    }
    Ok(ShiftReport { facets })
}
