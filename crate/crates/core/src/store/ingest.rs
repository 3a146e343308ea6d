use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::dates::{derive_date_facets, CENTURY_FACET, LIFESPAN_FACET};
use super::schema::{Facet, FacetSchema};
use super::table::{Exemplar, ExemplarTable, Split};
use crate::error::{Error, Result};

pub const BIRTH_DATE_FACET: &str = "birth_date";
pub const DEATH_DATE_FACET: &str = "death_date";
pub const DEFAULT_VOCABULARY_CAP: usize = 3000;

/// One entity as read from the input, before vocabulary construction.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RawRecord {
    pub entity_id: String,
    /// `(facet, value)` pairs; a facet may repeat.
    pub assertions: Vec<(String, String)>,
    pub birth_date: Option<String>,
    pub death_date: Option<String>,
}

impl RawRecord {
    pub fn new(entity_id: impl Into<String>) -> Self {
        RawRecord {
            entity_id: entity_id.into(),
            ..Default::default()
        }
    }

    pub fn with(mut self, facet: &str, value: &str) -> Self {
        self.assertions.push((facet.to_string(), value.to_string()));
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub rows: usize,
    pub train: usize,
    pub dev: usize,
    pub test: usize,
    /// Cells that became MISSING because their value fell outside the cap.
    pub capped_cells: usize,
    /// Cells where several values were asserted and one was picked.
    pub multivalued_cells: usize,
    pub date_warnings: Vec<String>,
}

/// Read `entity<TAB>facet<TAB>value` triples, grouping by entity in order of
/// first appearance. A line holding only an entity id declares an entity with
/// no assertions. Gzip input is detected by its magic bytes.
pub fn read_triples<R: Read>(input: R) -> Result<Vec<RawRecord>> {
    let mut reader = BufReader::new(input);
    let gz = reader
        .fill_buf()
        .map(|b| b.starts_with(&[0x1f, 0x8b]))
        .map_err(|e| Error::io("<input>", e))?;
    let reader: Box<dyn BufRead> = if gz {
        Box::new(BufReader::new(flate2::read::MultiGzDecoder::new(reader)))
    } else {
        Box::new(reader)
    };

    let mut order: Vec<RawRecord> = Vec::new();
    let mut by_id: HashMap<String, usize> = HashMap::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<input>", e))?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let lineno = n + 1;
        let entity = fields[0];
        if entity.is_empty() {
            return Err(Error::Parse {
                line: lineno,
                message: "empty entity id".into(),
            });
        }
        let slot = *by_id.entry(entity.to_string()).or_insert_with(|| {
            order.push(RawRecord::new(entity));
            order.len() - 1
        });
        match fields.len() {
            1 => {}
            3 => {
                let (facet, value) = (fields[1], fields[2]);
                if facet.is_empty() || value.is_empty() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: "empty facet or value".into(),
                    });
                }
                let rec = &mut order[slot];
                match facet {
                    BIRTH_DATE_FACET => keep_min(&mut rec.birth_date, value),
                    DEATH_DATE_FACET => keep_min(&mut rec.death_date, value),
                    _ => rec.assertions.push((facet.to_string(), value.to_string())),
                }
            }
            k => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 3 tab-separated fields, found {k}"),
                })
            }
        }
    }
    Ok(order)
}

fn keep_min(slot: &mut Option<String>, value: &str) {
    match slot {
        Some(v) if v.as_str() <= value => {}
        _ => *slot = Some(value.to_string()),
    }
}

pub fn read_triples_file(path: &Path) -> Result<Vec<RawRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_triples(f).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

/// Pick one value out of several asserted for the same facet: highest global
/// training frequency, ties broken by the lexicographically smaller label.
pub fn resolve_multivalue<'a>(candidates: &[&'a str], counts: &HashMap<String, u64>) -> &'a str {
    assert!(!candidates.is_empty(), "resolve_multivalue needs at least one value");
    let count = |s: &str| counts.get(s).copied().unwrap_or(0);
    candidates
        .iter()
        .copied()
        .min_by(|a, b| count(b).cmp(&count(a)).then_with(|| a.cmp(b)))
        .unwrap()
}

/// Split sizes `(train, dev, test)` for `n` rows at 80/10/10.
pub fn split_sizes(n: usize) -> (usize, usize, usize) {
    let dev = (n as f64 * 0.1).round() as usize;
    let test = (n as f64 * 0.1).round() as usize;
    (n - dev - test, dev, test)
}

/// Seeded uniform shuffle of row positions, assigned TRAIN/DEV/TEST in order.
pub fn assign_splits(n: usize, seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, dev, _) = split_sizes(n);
    let mut splits = vec![Split::Test; n];
    for (rank, &row) in order.iter().enumerate() {
        splits[row] = if rank < train {
            Split::Train
        } else if rank < train + dev {
            Split::Dev
        } else {
            Split::Test
        };
    }
    splits
}

struct Staged {
    entity_id: String,
    /// facet index -> asserted labels
    values: BTreeMap<usize, Vec<String>>,
}

/// Build a schema and table from raw records: derive date facets, split rows,
/// resolve multi-valued cells, cap vocabularies to the `cap` most frequent labels.
pub fn ingest(records: Vec<RawRecord>, cap: usize, seed: u64) -> Result<(ExemplarTable, IngestReport)> {
    if records.is_empty() {
        return Err(Error::EmptyInput);
    }
    if cap == 0 {
        return Err(Error::InvalidArgument("vocabulary cap must be at least 1".into()));
    }
    let mut report = IngestReport::default();

    let mut facet_names: Vec<String> = Vec::new();
    let mut facet_pos: HashMap<String, usize> = HashMap::new();
    let mut intern = |name: &str, names: &mut Vec<String>| -> usize {
        *facet_pos.entry(name.to_string()).or_insert_with(|| {
            names.push(name.to_string());
            names.len() - 1
        })
    };

    let has_dates = records
        .iter()
        .any(|r| r.birth_date.is_some() || r.death_date.is_some());
    let mut staged = Vec::with_capacity(records.len());
    let mut derived: Vec<(Option<String>, Option<String>)> = Vec::with_capacity(records.len());
    for (n, rec) in records.into_iter().enumerate() {
        if rec.entity_id.is_empty() {
            return Err(Error::Parse {
                line: n + 1,
                message: "record without entity id".into(),
            });
        }
        let mut values: BTreeMap<usize, Vec<String>> = BTreeMap::new();
        for (facet, value) in rec.assertions {
            let fi = intern(&facet, &mut facet_names);
            values.entry(fi).or_default().push(value);
        }
        let dates = match derive_date_facets(rec.birth_date.as_deref(), rec.death_date.as_deref()) {
            Ok(d) => (d.lifespan, d.century),
            Err(e) => {
                tracing::warn!(entity = %rec.entity_id, "date facets left missing: {e}");
                report.date_warnings.push(format!("{}: {e}", rec.entity_id));
                (None, None)
            }
        };
        derived.push(dates);
        staged.push(Staged {
            entity_id: rec.entity_id,
            values,
        });
    }
    if has_dates {
        let lifespan = intern(LIFESPAN_FACET, &mut facet_names);
        let century = intern(CENTURY_FACET, &mut facet_names);
        for (row, (l, c)) in staged.iter_mut().zip(derived) {
            if let Some(l) = l {
                row.values.entry(lifespan).or_default().push(l);
            }
            if let Some(c) = c {
                row.values.entry(century).or_default().push(c);
            }
        }
    }
    let n_facets = facet_names.len();

    let splits = assign_splits(staged.len(), seed);

    // Raw assertion frequencies over TRAIN rows drive multi-value resolution.
    let mut train_freq: Vec<HashMap<String, u64>> = vec![HashMap::new(); n_facets];
    for (row, split) in staged.iter().zip(&splits) {
        if *split != Split::Train {
            continue;
        }
        for (fi, vals) in &row.values {
            for v in vals {
                *train_freq[*fi].entry(v.clone()).or_insert(0) += 1;
            }
        }
    }

    let resolved: Vec<Vec<Option<String>>> = staged
        .iter()
        .map(|row| {
            let mut cells = vec![None; n_facets];
            for (fi, vals) in &row.values {
                let mut distinct: Vec<&str> = vals.iter().map(String::as_str).collect();
                distinct.sort_unstable();
                distinct.dedup();
                if distinct.len() > 1 {
                    report.multivalued_cells += 1;
                }
                cells[*fi] = Some(resolve_multivalue(&distinct, &train_freq[*fi]).to_string());
            }
            cells
        })
        .collect();

    // Vocabulary: the `cap` most frequent resolved labels over all rows.
    let mut facets = Vec::with_capacity(n_facets);
    let mut lookups: Vec<HashMap<String, u32>> = Vec::with_capacity(n_facets);
    for (fi, name) in facet_names.iter().enumerate() {
        let mut freq: HashMap<&str, u64> = HashMap::new();
        for cells in &resolved {
            if let Some(v) = &cells[fi] {
                *freq.entry(v.as_str()).or_insert(0) += 1;
            }
        }
        let mut ranked: Vec<(&str, u64)> = freq.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        ranked.truncate(cap);
        let vocabulary: Vec<String> = ranked.iter().map(|(s, _)| s.to_string()).collect();
        lookups.push(
            vocabulary
                .iter()
                .enumerate()
                .map(|(i, s)| (s.clone(), i as u32))
                .collect(),
        );
        facets.push((name.clone(), vocabulary));
    }

    let mut value_counts: Vec<Vec<u64>> = facets.iter().map(|(_, v)| vec![0; v.len()]).collect();
    let mut rows = Vec::with_capacity(staged.len());
    for ((row, cells), split) in staged.into_iter().zip(resolved).zip(splits) {
        let cells: Vec<Option<u32>> = cells
            .into_iter()
            .enumerate()
            .map(|(fi, label)| {
                let label = label?;
                let idx = lookups[fi].get(&label).copied();
                if idx.is_none() {
                    report.capped_cells += 1;
                }
                idx
            })
            .collect();
        if split == Split::Train {
            for (fi, c) in cells.iter().enumerate() {
                if let Some(v) = c {
                    value_counts[fi][*v as usize] += 1;
                }
            }
        }
        match split {
            Split::Train => report.train += 1,
            Split::Dev => report.dev += 1,
            Split::Test => report.test += 1,
        }
        rows.push(Exemplar {
            entity_id: row.entity_id,
            cells,
            split,
            embedding: None,
        });
    }
    report.rows = rows.len();

    let facets = facets
        .into_iter()
        .zip(value_counts)
        .map(|((name, vocab), counts)| Facet::new(name, vocab, counts))
        .collect::<Result<Vec<_>>>()?;
    let table = ExemplarTable::new(FacetSchema::new(facets)?, rows)?;
    Ok((table, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn colors() -> Vec<RawRecord> {
        vec![
            RawRecord::new("Q1").with("color", "red"),
            RawRecord::new("Q2").with("color", "blue"),
            RawRecord::new("Q3").with("color", "red"),
        ]
    }

    #[test]
    fn vocabulary_by_frequency() {
        let (table, _) = ingest(colors(), 3000, 1).unwrap();
        let f = table.schema().facet(0);
        assert_eq!(f.vocabulary(), &["red".to_string(), "blue".to_string()]);
        assert_eq!(f.size(), 2);
    }

    #[test]
    fn cap_turns_rare_values_missing() {
        // counts: a×5 b×4 c×3 d×2 e×1
        let mut recs = Vec::new();
        let mut id = 0;
        for (label, n) in [("a", 5), ("b", 4), ("c", 3), ("d", 2), ("e", 1)] {
            for _ in 0..n {
                recs.push(RawRecord::new(format!("Q{id}")).with("f", label));
                id += 1;
            }
        }
        let (table, report) = ingest(recs, 3, 7).unwrap();
        let f = table.schema().facet(0);
        assert_eq!(f.vocabulary(), &["a", "b", "c"].map(String::from));
        assert_eq!(report.capped_cells, 3);
        let missing = table.rows().iter().filter(|r| r.cells[0].is_none()).count();
        assert_eq!(missing, 3);
    }

    #[test]
    fn cap_ties_are_lexicographic() {
        let recs = vec![
            RawRecord::new("1").with("f", "zeta"),
            RawRecord::new("2").with("f", "alpha"),
            RawRecord::new("3").with("f", "mid"),
        ];
        let (table, _) = ingest(recs, 2, 0).unwrap();
        assert_eq!(table.schema().facet(0).vocabulary(), &["alpha", "mid"].map(String::from));
    }

    #[test]
    fn hundred_rows_split_80_10_10_deterministically() {
        let recs: Vec<RawRecord> = (0..100)
            .map(|i| RawRecord::new(format!("Q{i}")).with("f", if i % 3 == 0 { "x" } else { "y" }))
            .collect();
        let (t1, r1) = ingest(recs.clone(), 3000, 42).unwrap();
        let (t2, _) = ingest(recs.clone(), 3000, 42).unwrap();
        assert_eq!((r1.train, r1.dev, r1.test), (80, 10, 10));
        assert_eq!(t1, t2);
        let (t3, _) = ingest(recs, 3000, 43).unwrap();
        assert_ne!(
            t1.rows().iter().map(|r| r.split).collect::<Vec<_>>(),
            t3.rows().iter().map(|r| r.split).collect::<Vec<_>>()
        );
    }

    #[test]
    fn value_counts_cover_train_only() {
        let recs: Vec<RawRecord> = (0..50)
            .map(|i| RawRecord::new(format!("Q{i}")).with("f", if i % 2 == 0 { "x" } else { "y" }))
            .collect();
        let (table, _) = ingest(recs, 3000, 3).unwrap();
        let f = table.schema().facet(0);
        let stats = table.stats();
        assert_eq!(f.n_ex(), stats[0].n_ex);
        assert_eq!(f.n_ex() as usize, table.split_indices(Split::Train).len());
    }

    #[test]
    fn multivalue_rule() {
        let counts: HashMap<String, u64> =
            [("Dutch".to_string(), 900), ("Swiss".to_string(), 40)].into();
        assert_eq!(resolve_multivalue(&["Swiss", "Dutch"], &counts), "Dutch");
        assert_eq!(resolve_multivalue(&["A"], &HashMap::new()), "A");
        let tied: HashMap<String, u64> = [("A".to_string(), 3), ("B".to_string(), 3)].into();
        assert_eq!(resolve_multivalue(&["B", "A"], &tied), "A");
    }

    #[test]
    fn multivalue_tie_within_corpus() {
        // every row asserts {A, B}; A and B have equal training counts
        let recs: Vec<RawRecord> = (0..20)
            .map(|i| RawRecord::new(format!("Q{i}")).with("f", "B").with("f", "A"))
            .collect();
        let (table, report) = ingest(recs, 3000, 9).unwrap();
        assert_eq!(report.multivalued_cells, 20);
        assert_eq!(table.schema().facet(0).vocabulary(), &["A".to_string()]);
        assert!(table.rows().iter().all(|r| r.cells[0] == Some(0)));
    }

    #[test]
    fn empty_input_and_bad_records() {
        assert!(matches!(ingest(vec![], 10, 0), Err(Error::EmptyInput)));
        assert!(matches!(
            ingest(vec![RawRecord::new("")], 10, 0),
            Err(Error::Parse { .. })
        ));
        let (t, _) = ingest(vec![RawRecord::new("Q1"), RawRecord::new("Q2").with("f", "a")], 10, 0).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t.rows()[0].cells, vec![None]);
    }

    #[test]
    fn tsv_with_dates() {
        let tsv = "Q1\tcolor\tred\nQ1\tbirth_date\t1954-01-02\nQ1\tdeath_date\t2016\n\
                   Q2\tcolor\tblue\nQ2\tbirth_date\t2000\nQ2\tdeath_date\t1990\nQ3\n";
        let recs = read_triples(tsv.as_bytes()).unwrap();
        assert_eq!(recs.len(), 3);
        assert!(recs[2].assertions.is_empty());
        let (table, report) = ingest(recs, 3000, 0).unwrap();
        let schema = table.schema();
        assert_eq!(schema.names(), vec!["color", LIFESPAN_FACET, CENTURY_FACET]);
        let q1 = &table.rows()[0];
        assert_eq!(schema.facet(1).label(q1.cells[1].unwrap()), Some("[60,65)"));
        assert_eq!(schema.facet(2).label(q1.cells[2].unwrap()), Some("20th"));
        let q2 = &table.rows()[1];
        assert_eq!((q2.cells[1], q2.cells[2]), (None, None));
        assert_eq!(report.date_warnings.len(), 1);
    }

    #[test]
    fn tsv_errors() {
        assert!(matches!(read_triples("Q1\tcolor\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_triples("\tcolor\tred\n".as_bytes()), Err(Error::Parse { .. })));
    }

    #[test]
    fn gzip_input() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(b"Q1\tcolor\tred\nQ2\tcolor\tblue\n").unwrap();
        let bytes = enc.finish().unwrap();
        let recs = read_triples(bytes.as_slice()).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[1].assertions, vec![("color".into(), "blue".into())]);
    }
}
