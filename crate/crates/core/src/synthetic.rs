//! Seeded synthetic corpora with known structure, for tests and demos.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{EntityVectors, RawRecord};

pub const SOURCE_FACET: &str = "A";
pub const DEPENDENT_FACET: &str = "B";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeterministicConfig {
    pub rows: usize,
    /// Vocabulary size of both A and B.
    pub values: usize,
    pub noise_facets: usize,
    pub noise_values: usize,
    /// Probability that A is MISSING in a row.
    pub missing_source: f64,
    /// Probability that each noise cell is MISSING.
    pub missing_noise: f64,
    pub seed: u64,
}

impl Default for DeterministicConfig {
    fn default() -> Self {
        DeterministicConfig {
            rows: 1000,
            values: 8,
            noise_facets: 3,
            noise_values: 5,
            missing_source: 0.0,
            missing_noise: 0.3,
            seed: 7,
        }
    }
}

/// Corpus where `B = f(A)` for a seeded bijection `f`, A uniform, and the
/// noise facets independent of everything.
#[derive(Clone, Debug, PartialEq)]
pub struct DeterministicCorpus {
    pub records: Vec<RawRecord>,
    mapping: Vec<usize>,
}

pub fn source_label(i: usize) -> String {
    format!("a{i}")
}

pub fn dependent_label(i: usize) -> String {
    format!("b{i}")
}

impl DeterministicCorpus {
    pub fn generate(config: &DeterministicConfig) -> Result<Self> {
        if config.values < 2 || config.rows == 0 {
            return Err(Error::InvalidArgument("need at least 2 values and 1 row".into()));
        }
        for p in [config.missing_source, config.missing_noise] {
            if !(0.0..1.0).contains(&p) {
                return Err(Error::InvalidArgument("missing rates must be in [0, 1)".into()));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut mapping: Vec<usize> = (0..config.values).collect();
        mapping.shuffle(&mut rng);
        let records = (0..config.rows)
            .map(|r| {
                let a = rng.gen_range(0..config.values);
                let mut rec = RawRecord::new(format!("E{r:05}"));
                if rng.gen::<f64>() >= config.missing_source {
                    rec = rec.with(SOURCE_FACET, &source_label(a));
                }
                rec = rec.with(DEPENDENT_FACET, &dependent_label(mapping[a]));
                for n in 0..config.noise_facets {
                    let v = rng.gen_range(0..config.noise_values.max(1));
                    if rng.gen::<f64>() >= config.missing_noise {
                        rec = rec.with(&format!("N{n}"), &format!("n{n}_{v}"));
                    }
                }
                rec
            })
            .collect();
        Ok(DeterministicCorpus { records, mapping })
    }

    /// The B label that `f` assigns to the A label, if it is one.
    pub fn dependent_of(&self, source: &str) -> Option<String> {
        let i: usize = source.strip_prefix('a')?.parse().ok()?;
        self.mapping.get(i).map(|&j| dependent_label(j))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeparableConfig {
    pub rows: usize,
    pub dim: usize,
    /// Minimum |coordinate 0|, keeping the classes apart.
    pub margin: f64,
    pub seed: u64,
}

impl Default for SeparableConfig {
    fn default() -> Self {
        SeparableConfig {
            rows: 1000,
            dim: 16,
            margin: 0.5,
            seed: 11,
        }
    }
}

/// Corpus whose facet B is `pos`/`neg` by the sign of coordinate 0 of the
/// entity vector, with an unrelated facet C alongside.
pub fn separable_corpus(config: &SeparableConfig) -> Result<(Vec<RawRecord>, EntityVectors)> {
    if config.dim == 0 || config.rows == 0 {
        return Err(Error::InvalidArgument("need at least one row and one dimension".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut vectors = EntityVectors::new(config.dim);
    let mut records = Vec::with_capacity(config.rows);
    for r in 0..config.rows {
        let id = format!("V{r:05}");
        let positive = rng.gen_bool(0.5);
        let mut v: Vec<f64> = (0..config.dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mag = config.margin + v[0].abs();
        v[0] = if positive { mag } else { -mag };
        vectors.insert(id.clone(), v)?;
        let c = rng.gen_range(0..3);
        records.push(
            RawRecord::new(id)
                .with(DEPENDENT_FACET, if positive { "pos" } else { "neg" })
                .with("C", &format!("c{c}")),
        );
    }
    Ok((records, vectors))
}

/// Standard-normal vectors for each id, seeded.
pub fn random_entity_vectors<'a>(ids: impl IntoIterator<Item = &'a str>, dim: usize, seed: u64) -> Result<EntityVectors> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = EntityVectors::new(dim);
    for id in ids {
        let v = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        out.insert(id, v)?;
    }
    Ok(out)
}

/// Render records as `entity<TAB>facet<TAB>value` lines.
pub fn to_triples(records: &[RawRecord]) -> String {
    let mut out = String::new();
    for r in records {
        if r.assertions.is_empty() && r.birth_date.is_none() && r.death_date.is_none() {
            out.push_str(&r.entity_id);
            out.push('\n');
        }
        for (f, v) in &r.assertions {
            out.push_str(&format!("{}\t{f}\t{v}\n", r.entity_id));
        }
        if let Some(b) = &r.birth_date {
            out.push_str(&format!("{}\t{}\t{b}\n", r.entity_id, crate::store::ingest::BIRTH_DATE_FACET));
        }
        if let Some(d) = &r.death_date {
            out.push_str(&format!("{}\t{}\t{d}\n", r.entity_id, crate::store::ingest::DEATH_DATE_FACET));
        }
    }
    out
}
