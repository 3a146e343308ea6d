//! Facet profiling over sparse entity tables.
//!
//! A table of entities with categorical facets is ingested into a
//! [`store::ExemplarTable`]. Profilers (an autoencoder, an embedding-based
//! predictor, naive Bayes, and a most-frequent-value baseline) map a partial
//! description of a group to a distribution over every other facet.

pub mod baselines;
pub mod checkpoint;
pub mod dataspace;
pub mod error;
pub mod evaluation;
pub mod nn;
pub mod profile;
pub mod profilers;
pub mod store;
pub mod synthetic;

pub use baselines::{MfvModel, NbConfig, NbModel};
pub use checkpoint::AnyModel;
pub use error::{Error, Result};
pub use profile::{profile, shift, GroupQuery, ModelKind, ProfileDistribution, Profiler, ShiftReport};
pub use profilers::{ae_train, emb_train, AeConfig, AeModel, EmbConfig, EmbModel, TrainingLog};
