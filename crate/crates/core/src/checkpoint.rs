//! Binary model checkpoints.
//!
//! Layout: `b"PRFM"`, `u16` format version, `u32` header length, a JSON
//! header (kind, schema, fingerprint, config, training summary, blob
//! manifest), then every blob's data as little-endian `f64` in manifest order.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{MfvModel, NbConfig, NbModel};
use crate::error::{Error, Result};
use crate::profile::{GroupQuery, ModelKind, Profiler};
use crate::profilers::{AeConfig, AeModel, EmbConfig, EmbModel, TrainingSummary};
use crate::store::table::ByteCursor;
use crate::store::FacetSchema;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"PRFM";
pub const CHECKPOINT_FORMAT_VERSION: u16 = 1;

/// A named parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamBlob {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl ParamBlob {
    pub fn new(name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) -> Self {
        ParamBlob {
            name: name.into(),
            shape,
            data,
        }
    }

    /// Look up `name` and require it to have exactly `shape`.
    pub fn find<'a>(blobs: &'a [ParamBlob], name: &str, shape: &[usize]) -> Result<&'a ParamBlob> {
        let blob = blobs.iter().find(|b| b.name == name).ok_or_else(|| Error::Format {
            kind: "checkpoint",
            message: format!("missing parameter blob '{name}'"),
        })?;
        if blob.shape != shape {
            return Err(Error::Format {
                kind: "checkpoint",
                message: format!("blob '{name}' has shape {:?}, expected {shape:?}", blob.shape),
            });
        }
        Ok(blob)
    }

    pub fn as_counts(&self) -> Vec<u64> {
        self.data.iter().map(|&x| x as u64).collect()
    }
}

/// Any of the four profilers, as stored in a checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub enum AnyModel {
    Ae(AeModel),
    Emb(EmbModel),
    Nb(NbModel),
    Mfv(MfvModel),
}

impl AnyModel {
    pub fn as_profiler(&self) -> &dyn Profiler {
        match self {
            AnyModel::Ae(m) => m,
            AnyModel::Emb(m) => m,
            AnyModel::Nb(m) => m,
            AnyModel::Mfv(m) => m,
        }
    }

    pub fn summary(&self) -> Option<TrainingSummary> {
        match self {
            AnyModel::Ae(m) => m.summary(),
            AnyModel::Emb(m) => m.summary(),
            _ => None,
        }
    }

    fn config_json(&self) -> Result<serde_json::Value> {
        Ok(match self {
            AnyModel::Ae(m) => serde_json::to_value(m.config())?,
            AnyModel::Emb(m) => serde_json::to_value(m.config())?,
            AnyModel::Nb(m) => serde_json::to_value(m.config())?,
            AnyModel::Mfv(_) => serde_json::Value::Null,
        })
    }

    fn blobs(&self) -> Vec<ParamBlob> {
        match self {
            AnyModel::Ae(m) => m.to_blobs(),
            AnyModel::Emb(m) => m.to_blobs(),
            AnyModel::Nb(m) => m.to_blobs(),
            AnyModel::Mfv(m) => m.to_blobs(),
        }
    }

    /// Serialize into checkpoint bytes.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let schema = self.schema();
        let blobs = self.blobs();
        let header = Header {
            kind: self.kind(),
            fingerprint: schema.fingerprint(),
            schema: serde_json::from_str(&schema.to_json()?)?,
            config: self.config_json()?,
            summary: self.summary(),
            manifest: blobs
                .iter()
                .map(|b| ManifestEntry {
                    name: b.name.clone(),
                    shape: b.shape.clone(),
                })
                .collect(),
        };
        for b in &blobs {
            if b.shape.iter().product::<usize>() != b.data.len() {
                return Err(Error::Shape {
                    context: "checkpoint blob",
                    expected: format!("{:?}", b.shape),
                    actual: format!("{} values", b.data.len()),
                });
            }
        }
        let header = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(10 + header.len() + 8 * blobs.iter().map(|b| b.data.len()).sum::<usize>());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        for b in &blobs {
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    /// Parse checkpoint bytes. With `expected_fingerprint`, a checkpoint built
    /// for a different schema is refused.
    pub fn from_bytes(bytes: &[u8], expected_fingerprint: Option<&str>) -> Result<Self> {
        let mut cur = ByteCursor::new(bytes, "checkpoint");
        if cur.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::BadMagic { expected: "checkpoint" });
        }
        let version = cur.u16()?;
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: "checkpoint",
                found: version,
                expected: CHECKPOINT_FORMAT_VERSION,
            });
        }
        let len = cur.u32()? as usize;
        let header: Header = serde_json::from_slice(cur.take(len)?).map_err(|e| Error::Format {
            kind: "checkpoint header",
            message: e.to_string(),
        })?;
        let schema = FacetSchema::from_json(&header.schema.to_string())?;
        let actual = schema.fingerprint();
        if actual != header.fingerprint {
            return Err(Error::Format {
                kind: "checkpoint",
                message: "embedded schema does not match its recorded fingerprint".into(),
            });
        }
        if let Some(expected) = expected_fingerprint {
            if expected != actual {
                return Err(Error::FingerprintMismatch {
                    found: actual,
                    expected: expected.to_string(),
                });
            }
        }
        let mut blobs = Vec::with_capacity(header.manifest.len());
        for entry in header.manifest {
            let n = entry
                .shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or(Error::Truncated("checkpoint"))?;
            let raw = cur.take(n.checked_mul(8).ok_or(Error::Truncated("checkpoint"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            blobs.push(ParamBlob::new(entry.name, entry.shape, data));
        }
        if !cur.is_empty() {
            return Err(Error::Format {
                kind: "checkpoint",
                message: "trailing bytes after parameter data".into(),
            });
        }
        let config = |what: &'static str| move |e: serde_json::Error| Error::Format {
            kind: what,
            message: e.to_string(),
        };
        Ok(match header.kind {
            ModelKind::Ae => {
                let c: AeConfig = serde_json::from_value(header.config).map_err(config("AE config"))?;
                AnyModel::Ae(AeModel::from_blobs(schema, c, header.summary, &blobs)?)
            }
            ModelKind::Emb => {
                let c: EmbConfig = serde_json::from_value(header.config).map_err(config("EMB config"))?;
                AnyModel::Emb(EmbModel::from_blobs(schema, c, header.summary, &blobs)?)
            }
            ModelKind::Nb => {
                let c: NbConfig = serde_json::from_value(header.config).map_err(config("NB config"))?;
                AnyModel::Nb(NbModel::from_blobs(schema, c, &blobs)?)
            }
            ModelKind::Mfv => AnyModel::Mfv(MfvModel::from_blobs(schema, &blobs)?),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path, expected_fingerprint: Option<&str>) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, expected_fingerprint)
    }
}

/// Hex SHA-256 of a checkpoint file's bytes.
pub fn checkpoint_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl Profiler for AnyModel {
    fn kind(&self) -> ModelKind {
        self.as_profiler().kind()
    }

    fn schema(&self) -> &FacetSchema {
        self.as_profiler().schema()
    }

    fn predict_all(&self, query: &GroupQuery) -> Result<Vec<Vec<f64>>> {
        self.as_profiler().predict_all(query)
    }

    fn predict_facet(&self, query: &GroupQuery, facet: usize) -> Result<Vec<f64>> {
        self.as_profiler().predict_facet(query, facet)
    }
}

impl From<AeModel> for AnyModel {
    fn from(m: AeModel) -> Self {
        AnyModel::Ae(m)
    }
}

impl From<EmbModel> for AnyModel {
    fn from(m: EmbModel) -> Self {
        AnyModel::Emb(m)
    }
}

impl From<NbModel> for AnyModel {
    fn from(m: NbModel) -> Self {
        AnyModel::Nb(m)
    }
}

impl From<MfvModel> for AnyModel {
    fn from(m: MfvModel) -> Self {
        AnyModel::Mfv(m)
    }
}

#[derive(Serialize, Deserialize)]
struct Header {
    kind: ModelKind,
    fingerprint: String,
    schema: serde_json::Value,
    config: serde_json::Value,
    summary: Option<TrainingSummary>,
    manifest: Vec<ManifestEntry>,
}

#[derive(Serialize, Deserialize)]
struct ManifestEntry {
    name: String,
    shape: Vec<usize>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::store::{Exemplar, ExemplarTable, Facet, Split};

    fn table() -> ExemplarTable {
        let schema = FacetSchema::new(vec![
            Facet::new("a", vec!["x".into(), "y".into()], vec![2, 1]).unwrap(),
            Facet::new("b", vec!["p".into(), "q".into()], vec![1, 2]).unwrap(),
        ])
        .unwrap();
        let rows = [(Some(0), Some(1)), (Some(0), Some(1)), (Some(1), Some(0)), (None, Some(0))]
            .iter()
            .enumerate()
            .map(|(i, &(a, b))| Exemplar {
                entity_id: format!("e{i}"),
                cells: vec![a, b],
                split: if i < 3 { Split::Train } else { Split::Dev },
                embedding: None,
            })
            .collect();
        ExemplarTable::new(schema, rows).unwrap()
    }

    #[test]
    fn nb_round_trip() {
        let m = AnyModel::from(NbModel::fit(&table(), NbConfig::default()).unwrap());
        let bytes = m.to_bytes().unwrap();
        let back = AnyModel::from_bytes(&bytes, None).unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn distinct_errors() {
        let m = AnyModel::from(MfvModel::fit(&table()));
        let bytes = m.to_bytes().unwrap();

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(AnyModel::from_bytes(&bad, None), Err(Error::BadMagic { .. })));

        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(matches!(
            AnyModel::from_bytes(&bad, None),
            Err(Error::UnsupportedVersion { found: 9, .. })
        ));

        assert!(matches!(
            AnyModel::from_bytes(&bytes[..bytes.len() - 3], None),
            Err(Error::Truncated(_))
        ));

        assert!(matches!(
            AnyModel::from_bytes(&bytes, Some("00")),
            Err(Error::FingerprintMismatch { .. })
        ));
        let fp = m.schema().fingerprint();
        assert!(AnyModel::from_bytes(&bytes, Some(&fp)).is_ok());
    }
}
