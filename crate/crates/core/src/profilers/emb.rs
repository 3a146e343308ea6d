//! Predictor over fixed, externally trained entity vectors.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::training::{fit, LoopOptions, Trainable, TrainingLog, TrainingSummary};
use crate::checkpoint::ParamBlob;
use crate::error::{Error, Result};
use crate::nn::gradcheck::Differentiable;
use crate::nn::{Activation, AdamConfig, FacetNetwork};
use crate::profile::{GroupQuery, ModelKind, Profiler};
use crate::store::{Cell, Exemplar, ExemplarTable, FacetSchema, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbConfig {
    pub input_dim: usize,
    pub hidden_units: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for EmbConfig {
    fn default() -> Self {
        EmbConfig {
            input_dim: 1000,
            hidden_units: 128,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            learning_rate: 1e-3,
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

impl EmbConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch size, patience and max epochs must be at least 1");
        }
        if self.input_dim == 0 || self.hidden_units == 0 {
            return bad("input dimension and hidden units must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbModel {
    schema: FacetSchema,
    config: EmbConfig,
    net: FacetNetwork,
    summary: Option<TrainingSummary>,
}

impl EmbModel {
    pub fn new(schema: FacetSchema, config: EmbConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let net = FacetNetwork::new(config.input_dim, config.hidden_units, &schema.sizes(), config.activation, rng);
        Ok(EmbModel {
            schema,
            config,
            net,
            summary: None,
        })
    }

    pub fn config(&self) -> &EmbConfig {
        &self.config
    }

    pub fn network(&self) -> &FacetNetwork {
        &self.net
    }

    pub fn summary(&self) -> Option<TrainingSummary> {
        self.summary
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.config.input_dim {
            return Err(Error::Shape {
                context: "entity vector",
                expected: self.config.input_dim.to_string(),
                actual: x.len().to_string(),
            });
        }
        Ok(())
    }

    /// Summed cross-entropy over the known cells of one row.
    pub fn row_loss(&self, x: &[f64], cells: &[Cell]) -> Result<f64> {
        self.check_input(x)?;
        let wanted: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let pass = self.net.forward(x, Some(&wanted))?;
        let mut loss = 0.0;
        for (p, c) in pass.probs.iter().zip(cells) {
            if let (Some(p), Some(t)) = (p, c) {
                let p = p.get(*t as usize).ok_or(Error::TargetOutOfRange {
                    index: *t,
                    size: p.len(),
                })?;
                loss -= p.ln();
            }
        }
        Ok(loss)
    }

    fn accumulate_row(&self, x: &[f64], cells: &[Cell], grads: &mut [Vec<f64>], scale: f64) -> Result<f64> {
        self.check_input(x)?;
        let wanted: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let pass = self.net.forward(x, Some(&wanted))?;
        let mut loss = 0.0;
        for (p, c) in pass.probs.iter().zip(cells) {
            if let (Some(p), Some(t)) = (p, c) {
                loss -= p.get(*t as usize).copied().unwrap_or(f64::NAN).ln();
            }
        }
        // the input gradient is discarded: entity vectors stay fixed
        self.net.backward(&pass, cells, grads, scale)?;
        Ok(loss)
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut names = vec!["hidden.weight".to_string(), "hidden.bias".to_string()];
        for i in 0..self.schema.len() {
            names.push(format!("head.{i}.weight"));
            names.push(format!("head.{i}.bias"));
        }
        names
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut s = vec![
            vec![self.net.hidden.weight.rows(), self.net.hidden.weight.cols()],
            vec![self.net.hidden.bias.len()],
        ];
        for h in &self.net.heads {
            s.push(vec![h.weight.rows(), h.weight.cols()]);
            s.push(vec![h.bias.len()]);
        }
        s
    }

    pub(crate) fn to_blobs(&self) -> Vec<ParamBlob> {
        self.tensor_names()
            .into_iter()
            .zip(self.shapes())
            .zip(self.net.params())
            .map(|((name, shape), data)| ParamBlob::new(name, shape, data.to_vec()))
            .collect()
    }

    pub(crate) fn from_blobs(
        schema: FacetSchema,
        config: EmbConfig,
        summary: Option<TrainingSummary>,
        blobs: &[ParamBlob],
    ) -> Result<Self> {
        let mut model = EmbModel::new(schema, config, &mut ChaCha8Rng::seed_from_u64(0))?;
        let names = model.tensor_names();
        let shapes = model.shapes();
        for ((name, shape), tensor) in names.iter().zip(&shapes).zip(model.net.params_mut()) {
            tensor.copy_from_slice(&ParamBlob::find(blobs, name, shape)?.data);
        }
        model.summary = summary;
        Ok(model)
    }
}

impl Trainable for EmbModel {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.net.params_mut()
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.net.zero_grads()
    }

    fn accumulate(&self, row: &Exemplar, _rng: &mut ChaCha8Rng, grads: &mut [Vec<f64>], scale: f64) -> Result<f64> {
        let x = row.embedding.as_deref().ok_or_else(|| {
            Error::InvalidArgument(format!("row '{}' has no entity vector", row.entity_id))
        })?;
        self.accumulate_row(x, &row.cells, grads, scale)
    }

    fn dev_loss(&self, rows: &[&Exemplar]) -> Result<Option<f64>> {
        let mut total = 0.0;
        let mut scored = 0usize;
        for row in rows {
            let Some(x) = row.embedding.as_deref() else { continue };
            total += self.row_loss(x, &row.cells)?;
            scored += row.known_count();
        }
        Ok((scored > 0).then(|| total / scored as f64))
    }

    fn is_finite(&mut self) -> bool {
        self.net.is_finite()
    }
}

/// Train on TRAIN rows that carry an entity vector; rows without one are
/// skipped and counted in the log.
pub fn emb_train(table: &ExemplarTable, config: &EmbConfig) -> Result<(EmbModel, TrainingLog)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = EmbModel::new(table.schema().clone(), config.clone(), &mut rng)?;
    let mut log = TrainingLog::default();
    let mut train = Vec::new();
    for row in table.split_rows(Split::Train) {
        match &row.embedding {
            Some(v) if v.len() == config.input_dim => train.push(row),
            Some(v) => {
                return Err(Error::Shape {
                    context: "entity vector",
                    expected: config.input_dim.to_string(),
                    actual: v.len().to_string(),
                })
            }
            None => log.skipped_rows += 1,
        }
    }
    if log.skipped_rows > 0 {
        tracing::warn!(skipped = log.skipped_rows, "TRAIN rows without an entity vector were skipped");
    }
    let dev: Vec<&Exemplar> = table
        .split_rows(Split::Dev)
        .filter(|r| r.embedding.is_some())
        .collect();
    let opts = LoopOptions {
        batch_size: config.batch_size,
        max_epochs: config.max_epochs,
        patience: config.patience,
        adam: AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    };
    let (mut model, log) = fit(model, &train, &dev, &table.schema().names(), opts, &mut rng, log)?;
    model.summary = Some(log.summary());
    Ok((model, log))
}

impl Profiler for EmbModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Emb
    }

    fn schema(&self) -> &FacetSchema {
        &self.schema
    }

    /// Without an entity vector the query is answered from the zero input.
    fn predict_all(&self, query: &GroupQuery) -> Result<Vec<Vec<f64>>> {
        let zero;
        let x = match query.embedding() {
            Some(x) => x,
            None => {
                zero = vec![0.0; self.config.input_dim];
                &zero
            }
        };
        self.check_input(x)?;
        let pass = self.net.forward(x, None)?;
        Ok(pass.probs.into_iter().map(Option::unwrap_or_default).collect())
    }
}

/// A fixed batch of `(vector, cells)` rows, exposed for gradient checking.
pub struct EmbBatchProbe {
    pub model: EmbModel,
    pub batch: Vec<(Vec<f64>, Vec<Cell>)>,
}

impl Differentiable for EmbBatchProbe {
    fn tensor_names(&self) -> Vec<String> {
        self.model.tensor_names()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.model.net.params_mut()
    }

    fn loss(&self) -> Result<f64> {
        self.batch.iter().map(|(x, c)| self.model.row_loss(x, c)).sum()
    }

    fn gradient(&self) -> Result<Vec<Vec<f64>>> {
        let mut grads = self.model.zero_grads();
        for (x, c) in &self.batch {
            self.model.accumulate_row(x, c, &mut grads, 1.0)?;
        }
        Ok(grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{check_model, GradCheckConfig};
    use crate::store::Facet;

    fn schema() -> FacetSchema {
        FacetSchema::new(vec![
            Facet::new("a", vec!["x".into(), "y".into(), "z".into()], vec![1; 3]).unwrap(),
            Facet::new("b", vec!["p".into(), "q".into()], vec![1; 2]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn default_hidden_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = EmbModel::new(schema(), EmbConfig::default(), &mut rng).unwrap();
        // stored out × in
        assert_eq!(m.network().hidden.weight.shape(), (128, 1000));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let config = EmbConfig {
            input_dim: 6,
            hidden_units: 5,
            ..EmbConfig::default()
        };
        let model = EmbModel::new(schema(), config, &mut rng).unwrap();
        let batch = vec![
            (vec![0.3, -0.2, 0.9, 0.0, 0.5, -0.7], vec![Some(2), Some(0)]),
            (vec![-0.4, 0.1, 0.2, 0.8, -0.3, 0.6], vec![None, Some(1)]),
        ];
        let report = check_model(&mut EmbBatchProbe { model, batch }, GradCheckConfig::default());
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn wrong_vector_width_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let config = EmbConfig {
            input_dim: 4,
            hidden_units: 3,
            ..EmbConfig::default()
        };
        let m = EmbModel::new(schema(), config, &mut rng).unwrap();
        let q = GroupQuery::empty().with_embedding(Some(vec![0.0; 3]));
        assert!(matches!(m.predict_all(&q), Err(Error::Shape { .. })));
        assert!(m.predict_all(&GroupQuery::empty()).is_ok());
    }
}
