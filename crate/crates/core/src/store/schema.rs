use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub const SCHEMA_FORMAT_VERSION: u16 = 1;

/// One facet: its name, its value vocabulary, and per-value training counts.
#[derive(Clone, Debug)]
pub struct Facet {
    name: String,
    vocabulary: Vec<String>,
    value_counts: Vec<u64>,
    lookup: HashMap<String, u32>,
}

impl PartialEq for Facet {
    fn eq(&self, other: &Self) -> bool {
        self.name == other.name
            && self.vocabulary == other.vocabulary
            && self.value_counts == other.value_counts
    }
}

impl Facet {
    pub fn new(
        name: impl Into<String>,
        vocabulary: Vec<String>,
        value_counts: Vec<u64>,
    ) -> Result<Self> {
        let name = name.into();
        if vocabulary.len() != value_counts.len() {
            return Err(Error::InvalidArgument(format!(
                "facet '{name}': {} labels but {} counts",
                vocabulary.len(),
                value_counts.len()
            )));
        }
        if vocabulary.len() >= u32::MAX as usize {
            return Err(Error::InvalidArgument(format!("facet '{name}': vocabulary too large")));
        }
        let mut lookup = HashMap::with_capacity(vocabulary.len());
        for (i, label) in vocabulary.iter().enumerate() {
            if lookup.insert(label.clone(), i as u32).is_some() {
                return Err(Error::InvalidArgument(format!(
                    "facet '{name}': duplicate label '{label}'"
                )));
            }
        }
        Ok(Facet {
            name,
            vocabulary,
            value_counts,
            lookup,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    pub fn value_counts(&self) -> &[u64] {
        &self.value_counts
    }

    /// Vocabulary size `v_i`.
    pub fn size(&self) -> usize {
        self.vocabulary.len()
    }

    /// Number of training cells holding a value, `n_ex(i)`.
    pub fn n_ex(&self) -> u64 {
        self.value_counts.iter().sum()
    }

    pub fn index_of(&self, label: &str) -> Option<u32> {
        self.lookup.get(label).copied()
    }

    pub fn label(&self, index: u32) -> Option<&str> {
        self.vocabulary.get(index as usize).map(String::as_str)
    }

    /// Labels closest to `label` by edit distance, for error messages.
    pub fn nearest_labels(&self, label: &str, limit: usize) -> Vec<String> {
        let mut scored: Vec<(usize, &String)> = self
            .vocabulary
            .iter()
            .map(|v| (strsim::levenshtein(label, v), v))
            .collect();
        scored.sort();
        scored.into_iter().take(limit).map(|(_, v)| v.clone()).collect()
    }
}

/// The ordered facet set with vocabularies. Facet and value indices are stable
/// across serialization.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FacetSchema {
    facets: Vec<Facet>,
}

#[derive(Serialize, Deserialize)]
struct FacetDoc {
    name: String,
    vocabulary: Vec<String>,
    value_counts: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct SchemaDoc {
    format: String,
    version: u16,
    facets: Vec<FacetDoc>,
}

const SCHEMA_FORMAT_TAG: &str = "facet-schema";

impl FacetSchema {
    pub fn new(facets: Vec<Facet>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (i, f) in facets.iter().enumerate() {
            if seen.insert(f.name.clone(), i).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate facet '{}'", f.name)));
            }
        }
        Ok(FacetSchema { facets })
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn facet(&self, index: usize) -> &Facet {
        &self.facets[index]
    }

    pub fn facet_index(&self, name: &str) -> Option<usize> {
        self.facets.iter().position(|f| f.name == name)
    }

    pub fn names(&self) -> Vec<String> {
        self.facets.iter().map(|f| f.name.clone()).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.facets.iter().map(Facet::size).collect()
    }

    /// Resolve a `(facet, label)` pair to indices, with suggestions on failure.
    pub fn resolve(&self, facet: &str, label: &str) -> Result<(usize, u32)> {
        let fi = self.facet_index(facet).ok_or_else(|| Error::UnknownFacet {
            facet: facet.to_string(),
            valid: self.names(),
        })?;
        let f = &self.facets[fi];
        let vi = f.index_of(label).ok_or_else(|| Error::UnknownValue {
            facet: facet.to_string(),
            value: label.to_string(),
            suggestions: f.nearest_labels(label, 5),
        })?;
        Ok((fi, vi))
    }

    /// SHA-256 over facet names and vocabularies (counts excluded), hex encoded.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        for f in &self.facets {
            hasher.update((f.name.len() as u64).to_le_bytes());
            hasher.update(f.name.as_bytes());
            hasher.update((f.vocabulary.len() as u64).to_le_bytes());
            for label in &f.vocabulary {
                hasher.update((label.len() as u64).to_le_bytes());
                hasher.update(label.as_bytes());
            }
        }
        hex::encode(hasher.finalize())
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = SchemaDoc {
            format: SCHEMA_FORMAT_TAG.to_string(),
            version: SCHEMA_FORMAT_VERSION,
            facets: self
                .facets
                .iter()
                .map(|f| FacetDoc {
                    name: f.name.clone(),
                    vocabulary: f.vocabulary.clone(),
                    value_counts: f.value_counts.clone(),
                })
                .collect(),
        };
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SchemaDoc = serde_json::from_str(text)?;
        if doc.format != SCHEMA_FORMAT_TAG {
            return Err(Error::Format {
                kind: "schema",
                message: format!("unexpected format tag '{}'", doc.format),
            });
        }
        if doc.version != SCHEMA_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: "schema",
                found: doc.version,
                expected: SCHEMA_FORMAT_VERSION,
            });
        }
        let facets = doc
            .facets
            .into_iter()
            .map(|f| Facet::new(f.name, f.vocabulary, f.value_counts))
            .collect::<Result<Vec<_>>>()?;
        FacetSchema::new(facets)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn facet(name: &str, labels: &[&str]) -> Facet {
        Facet::new(
            name,
            labels.iter().map(|s| s.to_string()).collect(),
            vec![1; labels.len()],
        )
        .unwrap()
    }

    #[test]
    fn duplicate_labels_rejected() {
        let err = Facet::new("c", vec!["a".into(), "a".into()], vec![1, 1]).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn json_round_trip_keeps_indices() {
        let schema =
            FacetSchema::new(vec![facet("color", &["red", "blue"]), facet("size", &["s", "m", "l"])])
                .unwrap();
        let back = FacetSchema::from_json(&schema.to_json().unwrap()).unwrap();
        assert_eq!(schema, back);
        assert_eq!(back.resolve("size", "l").unwrap(), (1, 2));
        assert_eq!(schema.fingerprint(), back.fingerprint());
    }

    #[test]
    fn resolve_reports_suggestions() {
        let schema = FacetSchema::new(vec![facet("color", &["red", "blue", "green"])]).unwrap();
        match schema.resolve("color", "rad") {
            Err(Error::UnknownValue { suggestions, .. }) => assert_eq!(suggestions[0], "red"),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            schema.resolve("colour", "red"),
            Err(Error::UnknownFacet { .. })
        ));
    }

    #[test]
    fn fingerprint_ignores_counts_but_not_order() {
        let a = FacetSchema::new(vec![facet("x", &["p", "q"])]).unwrap();
        let b = FacetSchema::new(vec![
            Facet::new("x", vec!["p".into(), "q".into()], vec![7, 9]).unwrap()
        ])
        .unwrap();
        let c = FacetSchema::new(vec![facet("x", &["q", "p"])]).unwrap();
        assert_eq!(a.fingerprint(), b.fingerprint());
        assert_ne!(a.fingerprint(), c.fingerprint());
    }
}
