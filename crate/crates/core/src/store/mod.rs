//! Entity–facet knowledge store: ingestion, vocabularies, splits, and file formats.

pub mod dates;
pub mod ingest;
pub mod schema;
pub mod table;

pub use dates::{derive_date_facets, DateError, DerivedDates};
pub use ingest::{
    assign_splits, ingest, read_triples, read_triples_file, resolve_multivalue, IngestReport,
    RawRecord, DEFAULT_VOCABULARY_CAP,
};
pub use schema::{Facet, FacetSchema};
pub use table::{Cell, EntityVectors, Exemplar, ExemplarTable, FacetStats, Split};
