use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::schema::FacetSchema;
use crate::error::{Error, Result};

/// Cell value: a vocabulary index, or `None` for MISSING.
pub type Cell = Option<u32>;

pub const MISSING_SENTINEL: u32 = u32::MAX;
pub const TABLE_MAGIC: &[u8; 4] = b"PRFT";
pub const TABLE_FORMAT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    fn tag(self) -> u8 {
        match self {
            Split::Train => 0,
            Split::Dev => 1,
            Split::Test => 2,
        }
    }

    fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Split::Train),
            1 => Some(Split::Dev),
            2 => Some(Split::Test),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Exemplar {
    pub entity_id: String,
    pub cells: Vec<Cell>,
    pub split: Split,
    /// Fixed entity vector consumed by the embedding predictor.
    pub embedding: Option<Vec<f64>>,
}

impl Exemplar {
    pub fn known_count(&self) -> usize {
        self.cells.iter().filter(|c| c.is_some()).count()
    }
}

/// The background knowledge: entity rows over a shared schema.
#[derive(Clone, Debug, PartialEq)]
pub struct ExemplarTable {
    schema: FacetSchema,
    rows: Vec<Exemplar>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FacetStats {
    pub facet: String,
    pub n_ex: u64,
    pub v: usize,
    /// Set when the facet has no training values at all.
    pub empty: bool,
}

impl ExemplarTable {
    pub fn new(schema: FacetSchema, rows: Vec<Exemplar>) -> Result<Self> {
        let widths = schema.sizes();
        for (r, row) in rows.iter().enumerate() {
            if row.cells.len() != widths.len() {
                return Err(Error::Shape {
                    context: "exemplar row",
                    expected: format!("{} cells", widths.len()),
                    actual: format!("{} cells in row {r}", row.cells.len()),
                });
            }
            for (i, cell) in row.cells.iter().enumerate() {
                if let Some(v) = cell {
                    if *v as usize >= widths[i] {
                        return Err(Error::TargetOutOfRange {
                            index: *v,
                            size: widths[i],
                        });
                    }
                }
            }
        }
        Ok(ExemplarTable { schema, rows })
    }

    pub fn schema(&self) -> &FacetSchema {
        &self.schema
    }

    pub fn rows(&self) -> &[Exemplar] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn split_indices(&self, split: Split) -> Vec<usize> {
        self.rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.split == split)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn split_rows(&self, split: Split) -> impl Iterator<Item = &Exemplar> {
        self.rows.iter().filter(move |r| r.split == split)
    }

    /// Per-facet `n_ex(i)` (non-missing TRAIN cells) and `v_i`.
    pub fn stats(&self) -> Vec<FacetStats> {
        let mut counts = vec![0u64; self.schema.len()];
        for row in self.split_rows(Split::Train) {
            for (i, c) in row.cells.iter().enumerate() {
                if c.is_some() {
                    counts[i] += 1;
                }
            }
        }
        self.schema
            .facets()
            .iter()
            .zip(counts)
            .map(|(f, n_ex)| FacetStats {
                facet: f.name().to_string(),
                n_ex,
                v: f.size(),
                empty: n_ex == 0,
            })
            .collect()
    }

    /// Attach entity vectors by entity id. Returns how many rows received one.
    pub fn attach_embeddings(&mut self, vectors: &EntityVectors) -> usize {
        let mut attached = 0;
        for row in &mut self.rows {
            row.embedding = vectors.get(&row.entity_id).map(<[f64]>::to_vec);
            attached += row.embedding.is_some() as usize;
        }
        attached
    }

    /// Columnar binary encoding: magic, version, row/facet counts, entity ids,
    /// split tags, then one column of u32 indices per facet (MISSING = 0xFFFFFFFF).
    pub fn write_binary<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        out.write_all(TABLE_MAGIC)?;
        out.write_all(&TABLE_FORMAT_VERSION.to_le_bytes())?;
        out.write_all(&(self.rows.len() as u64).to_le_bytes())?;
        out.write_all(&(self.schema.len() as u32).to_le_bytes())?;
        for row in &self.rows {
            out.write_all(&(row.entity_id.len() as u32).to_le_bytes())?;
            out.write_all(row.entity_id.as_bytes())?;
        }
        let tags: Vec<u8> = self.rows.iter().map(|r| r.split.tag()).collect();
        out.write_all(&tags)?;
        for facet in 0..self.schema.len() {
            for row in &self.rows {
                let v = row.cells[facet].unwrap_or(MISSING_SENTINEL);
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(schema: FacetSchema, mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input
            .read_to_end(&mut bytes)
            .map_err(|e| Error::io("<table>", e))?;
        let mut cur = ByteCursor::new(&bytes, "table");
        if cur.take(4)? != TABLE_MAGIC {
            return Err(Error::BadMagic { expected: "table" });
        }
        let version = cur.u16()?;
        if version != TABLE_FORMAT_VERSION {
            return Err(Error::UnsupportedVersion {
                kind: "table",
                found: version,
                expected: TABLE_FORMAT_VERSION,
            });
        }
        let n_rows = cur.u64()? as usize;
        let n_facets = cur.u32()? as usize;
        if n_facets != schema.len() {
            return Err(Error::Shape {
                context: "table file",
                expected: format!("{} facets", schema.len()),
                actual: format!("{n_facets} facets"),
            });
        }
        let mut ids = Vec::with_capacity(n_rows.min(1 << 20));
        for _ in 0..n_rows {
            let len = cur.u32()? as usize;
            let raw = cur.take(len)?;
            let id = String::from_utf8(raw.to_vec()).map_err(|_| Error::Format {
                kind: "table",
                message: "entity id is not UTF-8".into(),
            })?;
            ids.push(id);
        }
        let tags = cur.take(n_rows)?;
        let mut rows: Vec<Exemplar> = ids
            .into_iter()
            .zip(tags)
            .map(|(entity_id, &tag)| {
                let split = Split::from_tag(tag).ok_or(Error::Format {
                    kind: "table",
                    message: format!("bad split tag {tag}"),
                })?;
                Ok(Exemplar {
                    entity_id,
                    cells: Vec::with_capacity(n_facets),
                    split,
                    embedding: None,
                })
            })
            .collect::<Result<_>>()?;
        for _ in 0..n_facets {
            for row in rows.iter_mut() {
                let v = cur.u32()?;
                row.cells.push((v != MISSING_SENTINEL).then_some(v));
            }
        }
        if !cur.is_empty() {
            return Err(Error::Format {
                kind: "table",
                message: "trailing bytes".into(),
            });
        }
        ExemplarTable::new(schema, rows)
    }

    /// Write `schema.json` and `table.bin` into `dir`.
    pub fn save_store(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.schema.save(&dir.join(SCHEMA_FILE))?;
        let path = dir.join(TABLE_FILE);
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_binary(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))
    }

    pub fn load_store(dir: &Path) -> Result<Self> {
        let schema = FacetSchema::load(&dir.join(SCHEMA_FILE))?;
        let path = dir.join(TABLE_FILE);
        let file = std::fs::File::open(&path).map_err(|e| Error::io(&path, e))?;
        Self::read_binary(schema, std::io::BufReader::new(file))
    }
}

pub const SCHEMA_FILE: &str = "schema.json";
pub const TABLE_FILE: &str = "table.bin";

/// Fixed entity vectors keyed by entity id (sidecar file `id<TAB>v1 v2 ...`).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EntityVectors {
    dim: usize,
    vectors: HashMap<String, Vec<f64>>,
}

impl EntityVectors {
    pub fn new(dim: usize) -> Self {
        EntityVectors {
            dim,
            vectors: HashMap::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, v: Vec<f64>) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::Shape {
                context: "entity vector",
                expected: self.dim.to_string(),
                actual: v.len().to_string(),
            });
        }
        self.vectors.insert(id.into(), v);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut out: Option<EntityVectors> = None;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (id, rest) = line.split_once('\t').ok_or(Error::Parse {
                line: n + 1,
                message: "expected entity_id<TAB>vector".into(),
            })?;
            let v = rest
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        line: n + 1,
                        message: format!("bad number '{t}'"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            let store = out.get_or_insert_with(|| EntityVectors::new(v.len()));
            store.insert(id, v).map_err(|_| Error::Parse {
                line: n + 1,
                message: format!("vector width differs from first line ({})", store.dim),
            })?;
        }
        Ok(out.unwrap_or_default())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    pub fn to_text(&self) -> String {
        let mut ids: Vec<&String> = self.vectors.keys().collect();
        ids.sort();
        let mut out = String::new();
        for id in ids {
            let v = &self.vectors[id];
            let nums: Vec<String> = v.iter().map(|x| format!("{x}")).collect();
            out.push_str(id);
            out.push('\t');
            out.push_str(&nums.join(" "));
            out.push('\n');
        }
        out
    }
}

pub(crate) struct ByteCursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    what: &'static str,
}

impl<'a> ByteCursor<'a> {
    pub(crate) fn new(bytes: &'a [u8], what: &'static str) -> Self {
        ByteCursor { bytes, pos: 0, what }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).ok_or(Error::Truncated(self.what))?;
        if end > self.bytes.len() {
            return Err(Error::Truncated(self.what));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    pub(crate) fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.pos == self.bytes.len()
    }
}
