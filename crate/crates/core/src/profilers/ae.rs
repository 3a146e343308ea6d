//! Masked denoising autoencoder over concatenated facet embeddings.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::training::{fit, LoopOptions, Trainable, TrainingLog, TrainingSummary};
use crate::checkpoint::ParamBlob;
use crate::error::{Error, Result};
use crate::nn::gradcheck::Differentiable;
use crate::nn::{masked_cross_entropy, Activation, AdamConfig, FacetNetwork, Matrix};
use crate::profile::{GroupQuery, ModelKind, Profiler};
use crate::store::{Cell, Exemplar, ExemplarTable, FacetSchema, Split};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AeConfig {
    pub embedding_size: usize,
    pub hidden_units: usize,
    /// Probability that a known input facet is dropped during training.
    pub dropout: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub activation: Activation,
    pub seed: u64,
}

impl Default for AeConfig {
    fn default() -> Self {
        AeConfig {
            embedding_size: 30,
            hidden_units: 128,
            dropout: 0.5,
            batch_size: 64,
            max_epochs: 100,
            patience: 10,
            learning_rate: 1e-3,
            activation: Activation::Tanh,
            seed: 0,
        }
    }
}

impl AeConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.to_string()));
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.batch_size == 0 || self.patience == 0 || self.max_epochs == 0 {
            return bad("batch size, patience and max epochs must be at least 1");
        }
        if self.embedding_size == 0 || self.hidden_units == 0 {
            return bad("embedding size and hidden units must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        Ok(())
    }
}

/// Per-facet embedding tables (last row of each is the zero MISSING row)
/// feeding one hidden layer and a softmax head per facet.
#[derive(Clone, Debug, PartialEq)]
pub struct AeModel {
    schema: FacetSchema,
    config: AeConfig,
    embeddings: Vec<Matrix>,
    net: FacetNetwork,
    summary: Option<TrainingSummary>,
}

/// Draw a dropout mask over the known cells of a row: `true` means dropped.
pub fn draw_dropout_mask<R: Rng + ?Sized>(cells: &[Cell], p: f64, rng: &mut R) -> Vec<bool> {
    cells
        .iter()
        .map(|c| c.is_some() && p > 0.0 && rng.gen::<f64>() < p)
        .collect()
}

impl AeModel {
    pub fn new(schema: FacetSchema, config: AeConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        config.validate()?;
        let sizes = schema.sizes();
        let n_e = config.embedding_size;
        let embeddings = sizes
            .iter()
            .map(|&v| {
                let mut m = Matrix::glorot(v + 1, n_e, rng);
                m.row_mut(v).fill(0.0);
                m
            })
            .collect();
        let net = FacetNetwork::new(sizes.len() * n_e, config.hidden_units, &sizes, config.activation, rng);
        Ok(AeModel {
            schema,
            config,
            embeddings,
            net,
            summary: None,
        })
    }

    pub fn config(&self) -> &AeConfig {
        &self.config
    }

    pub fn network(&self) -> &FacetNetwork {
        &self.net
    }

    pub fn embedding_table(&self, facet: usize) -> &Matrix {
        &self.embeddings[facet]
    }

    pub fn summary(&self) -> Option<TrainingSummary> {
        self.summary
    }

    /// Width of the concatenated input, `n · N_e`.
    pub fn input_width(&self) -> usize {
        self.schema.len() * self.config.embedding_size
    }

    /// Concatenate facet embeddings; MISSING and dropped facets give zero blocks.
    pub fn encode_input(&self, cells: &[Cell], dropped: &[bool]) -> Vec<f64> {
        let n_e = self.config.embedding_size;
        let mut x = vec![0.0; self.input_width()];
        for (i, cell) in cells.iter().enumerate() {
            if let Some(v) = cell {
                if !dropped[i] {
                    x[i * n_e..(i + 1) * n_e].copy_from_slice(self.embeddings[i].row(*v as usize));
                }
            }
        }
        x
    }

    fn check_cells(&self, cells: &[Cell]) -> Result<()> {
        if cells.len() != self.schema.len() {
            return Err(Error::Shape {
                context: "autoencoder row",
                expected: format!("{} cells", self.schema.len()),
                actual: format!("{} cells", cells.len()),
            });
        }
        Ok(())
    }

    /// Loss over every known target of `cells`, with `dropped` facets hidden
    /// from the input.
    pub fn loss_with_mask(&self, cells: &[Cell], dropped: &[bool]) -> Result<f64> {
        self.check_cells(cells)?;
        let x = self.encode_input(cells, dropped);
        let wanted: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let pass = self.net.forward(&x, Some(&wanted))?;
        let z: Vec<Vec<f64>> = pass.probs.into_iter().map(Option::unwrap_or_default).collect();
        masked_cross_entropy(&z, cells, &wanted)
    }

    /// Accumulate the gradient of [`Self::loss_with_mask`] (times `scale`)
    /// into `grads`, laid out as embedding tables then network tensors.
    pub fn accumulate_with_mask(
        &self,
        cells: &[Cell],
        dropped: &[bool],
        grads: &mut [Vec<f64>],
        scale: f64,
    ) -> Result<f64> {
        self.check_cells(cells)?;
        let n = self.schema.len();
        let n_e = self.config.embedding_size;
        let x = self.encode_input(cells, dropped);
        let wanted: Vec<bool> = cells.iter().map(Option::is_some).collect();
        let pass = self.net.forward(&x, Some(&wanted))?;
        let mut loss = 0.0;
        for (p, c) in pass.probs.iter().zip(cells) {
            if let (Some(p), Some(t)) = (p, c) {
                loss -= p[*t as usize].ln();
            }
        }
        let (emb_grads, net_grads) = grads.split_at_mut(n);
        let d_input = self.net.backward(&pass, cells, net_grads, scale)?;
        for (i, cell) in cells.iter().enumerate() {
            if let Some(v) = cell {
                if dropped[i] {
                    continue;
                }
                let row = &mut emb_grads[i][*v as usize * n_e..(*v as usize + 1) * n_e];
                for (g, d) in row.iter_mut().zip(&d_input[i * n_e..(i + 1) * n_e]) {
                    *g += d;
                }
            }
        }
        Ok(loss)
    }

    fn tensor_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.schema.len()).map(|i| format!("embedding.{i}")).collect();
        names.push("hidden.weight".into());
        names.push("hidden.bias".into());
        for i in 0..self.schema.len() {
            names.push(format!("head.{i}.weight"));
            names.push(format!("head.{i}.bias"));
        }
        names
    }

    fn tensors(&self) -> Vec<&[f64]> {
        let mut t: Vec<&[f64]> = self.embeddings.iter().map(Matrix::as_slice).collect();
        t.extend(self.net.params());
        t
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        let mut s: Vec<Vec<usize>> = self.embeddings.iter().map(|m| vec![m.rows(), m.cols()]).collect();
        s.push(vec![self.net.hidden.weight.rows(), self.net.hidden.weight.cols()]);
        s.push(vec![self.net.hidden.bias.len()]);
        for h in &self.net.heads {
            s.push(vec![h.weight.rows(), h.weight.cols()]);
            s.push(vec![h.bias.len()]);
        }
        s
    }

    fn all_tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut t: Vec<&mut [f64]> = self.embeddings.iter_mut().map(Matrix::as_mut_slice).collect();
        t.extend(self.net.params_mut());
        t
    }

    pub(crate) fn to_blobs(&self) -> Vec<ParamBlob> {
        self.tensor_names()
            .into_iter()
            .zip(self.shapes())
            .zip(self.tensors())
            .map(|((name, shape), data)| ParamBlob::new(name, shape, data.to_vec()))
            .collect()
    }

    pub(crate) fn from_blobs(
        schema: FacetSchema,
        config: AeConfig,
        summary: Option<TrainingSummary>,
        blobs: &[ParamBlob],
    ) -> Result<Self> {
        // the seed does not matter: every tensor is overwritten below
        let mut model = AeModel::new(schema, config, &mut ChaCha8Rng::seed_from_u64(0))?;
        let names = model.tensor_names();
        let shapes = model.shapes();
        for ((name, shape), tensor) in names.iter().zip(&shapes).zip(model.all_tensors_mut()) {
            let blob = ParamBlob::find(blobs, name, shape)?;
            tensor.copy_from_slice(&blob.data);
        }
        model.summary = summary;
        Ok(model)
    }

    /// Leave-one-out validation loss: each known cell is predicted from the
    /// row's other known cells.
    fn leave_one_out_loss(&self, rows: &[&Exemplar]) -> Result<Option<f64>> {
        let mut total = 0.0;
        let mut scored = 0usize;
        let n = self.schema.len();
        for row in rows {
            for f in 0..n {
                let Some(t) = row.cells[f] else { continue };
                let mut dropped = vec![false; n];
                dropped[f] = true;
                let x = self.encode_input(&row.cells, &dropped);
                let mut wanted = vec![false; n];
                wanted[f] = true;
                let pass = self.net.forward(&x, Some(&wanted))?;
                total -= pass.probs[f].as_ref().expect("head evaluated")[t as usize].ln();
                scored += 1;
            }
        }
        Ok((scored > 0).then(|| total / scored as f64))
    }
}

impl Trainable for AeModel {
    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.all_tensors_mut()
    }

    fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.tensors().iter().map(|t| vec![0.0; t.len()]).collect()
    }

    fn accumulate(&self, row: &Exemplar, rng: &mut ChaCha8Rng, grads: &mut [Vec<f64>], scale: f64) -> Result<f64> {
        let dropped = draw_dropout_mask(&row.cells, self.config.dropout, rng);
        self.accumulate_with_mask(&row.cells, &dropped, grads, scale)
    }

    fn dev_loss(&self, rows: &[&Exemplar]) -> Result<Option<f64>> {
        self.leave_one_out_loss(rows)
    }
}

/// Train an autoencoder on the TRAIN split with early stopping on DEV.
pub fn ae_train(table: &ExemplarTable, config: &AeConfig) -> Result<(AeModel, TrainingLog)> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let model = AeModel::new(table.schema().clone(), config.clone(), &mut rng)?;
    let train: Vec<&Exemplar> = table.split_rows(Split::Train).collect();
    let dev: Vec<&Exemplar> = table.split_rows(Split::Dev).collect();
    let opts = LoopOptions {
        batch_size: config.batch_size,
        max_epochs: config.max_epochs,
        patience: config.patience,
        adam: AdamConfig {
            learning_rate: config.learning_rate,
            ..AdamConfig::default()
        },
    };
    let (mut model, log) = fit(model, &train, &dev, &table.schema().names(), opts, &mut rng, TrainingLog::default())?;
    model.summary = Some(log.summary());
    Ok((model, log))
}

impl Profiler for AeModel {
    fn kind(&self) -> ModelKind {
        ModelKind::Ae
    }

    fn schema(&self) -> &FacetSchema {
        &self.schema
    }

    fn predict_all(&self, query: &GroupQuery) -> Result<Vec<Vec<f64>>> {
        let cells = query.cells(self.schema.len());
        let x = self.encode_input(&cells, &vec![false; cells.len()]);
        let pass = self.net.forward(&x, None)?;
        Ok(pass.probs.into_iter().map(Option::unwrap_or_default).collect())
    }

    fn predict_facet(&self, query: &GroupQuery, facet: usize) -> Result<Vec<f64>> {
        let n = self.schema.len();
        let cells = query.cells(n);
        let x = self.encode_input(&cells, &vec![false; n]);
        let mut wanted = vec![false; n];
        wanted[facet] = true;
        let mut pass = self.net.forward(&x, Some(&wanted))?;
        Ok(pass.probs[facet].take().unwrap_or_default())
    }
}

/// A fixed minibatch with fixed dropout masks, exposed for gradient checking.
pub struct AeBatchProbe {
    pub model: AeModel,
    pub batch: Vec<(Vec<Cell>, Vec<bool>)>,
}

impl Differentiable for AeBatchProbe {
    fn tensor_names(&self) -> Vec<String> {
        self.model.tensor_names()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.model.all_tensors_mut()
    }

    fn loss(&self) -> Result<f64> {
        self.batch
            .iter()
            .map(|(c, d)| self.model.loss_with_mask(c, d))
            .sum()
    }

    fn gradient(&self) -> Result<Vec<Vec<f64>>> {
        let mut grads = self.model.zero_grads();
        for (c, d) in &self.batch {
            self.model.accumulate_with_mask(c, d, &mut grads, 1.0)?;
        }
        Ok(grads)
    }
}
