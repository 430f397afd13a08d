//! The Siamese table-similarity model: twin encoders sharing one parameter
//! set, Euclidean distance between table representations, contrastive loss
//! and training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tablesim_tensor::{Mode, ParamStore, RmsProp, RmsPropConfig, Tape, Tensor, Var};

use crate::corpus::Label;
use crate::embeddings::random_embeddings;
use crate::error::{Error, Result};
use crate::layers::{CaptionEncoderParams, EmbeddingParams, TabularEncoderParams, TabularStats, TabularVariant};
use crate::table::{encode_table, EncodedTable, RawTable, ShapeConfig};
use crate::vocab::Vocabulary;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub embed_dim: usize,
    pub hidden: usize,
    pub mlp_out: usize,
    pub margin: f64,
    pub use_caption: bool,
    pub variant: TabularVariant,
    pub shape: ShapeConfig,
    /// Seeds weight initialization (and random embeddings).
    pub seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            embed_dim: 200,
            hidden: 100,
            mlp_out: 100,
            margin: 1.0,
            use_caption: true,
            variant: TabularVariant::Attention,
            shape: ShapeConfig::default(),
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.shape.validate()?;
        if self.embed_dim == 0 || self.hidden == 0 || self.mlp_out == 0 {
            return Err(Error::Config("model dimensions must be positive".into()));
        }
        if !(self.margin > 0.0 && self.margin.is_finite()) {
            return Err(Error::Config(format!("margin must be positive, got {}", self.margin)));
        }
        Ok(())
    }

    pub fn representation_dim(&self) -> usize {
        if self.use_caption {
            2 * self.hidden + self.mlp_out
        } else {
            self.mlp_out
        }
    }
}

#[derive(Debug, Clone)]
pub struct TabSimModel {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub store: ParamStore,
    pub embedding: EmbeddingParams,
    pub caption: Option<CaptionEncoderParams>,
    pub tabular: TabularEncoderParams,
}

impl TabSimModel {
    /// `embeddings` (`|V| x embed_dim`) replaces the seeded random
    /// initialization when given.
    pub fn new(config: ModelConfig, vocab: Vocabulary, embeddings: Option<Tensor>) -> Result<Self> {
        config.validate()?;
        let matrix = match embeddings {
            Some(m) => {
                if m.shape() != [vocab.len(), config.embed_dim] {
                    return Err(Error::Embedding(format!(
                        "initial embeddings have shape {:?}, expected [{}, {}]",
                        m.shape(),
                        vocab.len(),
                        config.embed_dim
                    )));
                }
                m
            }
            None => random_embeddings(vocab.len(), config.embed_dim, config.seed),
        };
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(0x9e37_79b9));
        let embedding = EmbeddingParams::new(&mut store, "embedding", matrix)?;
        let caption = config
            .use_caption
            .then(|| CaptionEncoderParams::new(&mut store, &mut rng, config.embed_dim, config.hidden));
        let tabular = TabularEncoderParams::new(
            &mut store,
            &mut rng,
            config.variant,
            config.embed_dim,
            config.hidden,
            config.mlp_out,
            config.shape.n_rows,
            config.shape.n_cols,
        );
        Ok(Self {
            config,
            vocab,
            store,
            embedding,
            caption,
            tabular,
        })
    }

    pub fn encode(&self, table: &RawTable) -> EncodedTable {
        encode_table(table, &self.vocab, &self.config.shape)
    }

    /// Representations `[tables, representation_dim]` on `tape`.
    pub fn represent_on(
        &self,
        tape: &mut Tape<'_>,
        tables: &[&EncodedTable],
        mode: Mode,
    ) -> Result<(Var, TabularStats)> {
        let (tab, stats) = self.tabular.encode(tape, &self.embedding, tables, mode)?;
        let repr = match &self.caption {
            Some(c) => {
                let cap = c.encode(tape, &self.embedding, tables)?;
                tape.concat_cols(&[cap, tab])?
            }
            None => tab,
        };
        Ok((repr, stats))
    }

    /// Inference-mode representations, one row per table.
    pub fn represent_batch(&self, tables: &[&EncodedTable]) -> Result<Tensor> {
        let mut tape = Tape::new(&self.store);
        let (r, _) = self.represent_on(&mut tape, tables, Mode::Infer)?;
        Ok(tape.value(r).clone())
    }

    pub fn represent(&self, table: &EncodedTable) -> Result<Vec<f64>> {
        Ok(self.represent_batch(&[table])?.into_data())
    }

    pub fn distance(&self, q: &EncodedTable, r: &EncodedTable) -> Result<f64> {
        let reps = self.represent_batch(&[q, r])?;
        Ok(euclidean(reps.row(0), reps.row(1)))
    }

    /// Distances for many pairs, encoding each distinct table once.
    pub fn distances(&self, pairs: &[(&EncodedTable, &EncodedTable)]) -> Result<Vec<f64>> {
        let mut tables: Vec<&EncodedTable> = Vec::new();
        let mut slot = std::collections::HashMap::new();
        let mut idx = Vec::with_capacity(pairs.len());
        for &(q, r) in pairs {
            let qi = *slot.entry(q).or_insert_with(|| {
                tables.push(q);
                tables.len() - 1
            });
            let ri = *slot.entry(r).or_insert_with(|| {
                tables.push(r);
                tables.len() - 1
            });
            idx.push((qi, ri));
        }
        let mut reps = Vec::with_capacity(tables.len());
        for chunk in tables.chunks(256) {
            let t = self.represent_batch(chunk)?;
            for i in 0..chunk.len() {
                reps.push(t.row(i).to_vec());
            }
        }
        Ok(idx.into_iter().map(|(a, b)| euclidean(&reps[a], &reps[b])).collect())
    }

    pub fn classify(&self, d: f64) -> Label {
        classify(d, self.config.margin)
    }

    /// Ascending by distance; equal distances ordered by candidate id.
    pub fn rank_candidates(
        &self,
        query: &EncodedTable,
        candidates: &[(String, EncodedTable)],
    ) -> Result<Vec<(String, f64)>> {
        let pairs: Vec<(&EncodedTable, &EncodedTable)> = candidates.iter().map(|(_, c)| (query, c)).collect();
        let d = self.distances(&pairs)?;
        let mut ranked: Vec<(String, f64)> = candidates.iter().map(|(id, _)| id.clone()).zip(d).collect();
        ranked.sort_by(|a, b| a.1.total_cmp(&b.1).then_with(|| a.0.cmp(&b.0)));
        Ok(ranked)
    }

    /// Mean contrastive loss of a batch of pairs, as a tape node.
    pub fn batch_loss(
        &self,
        tape: &mut Tape<'_>,
        pairs: &[(&EncodedTable, &EncodedTable, Label)],
        mode: Mode,
    ) -> Result<(Var, TabularStats)> {
        let b = pairs.len();
        if b == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let tables: Vec<&EncodedTable> = pairs.iter().map(|p| p.0).chain(pairs.iter().map(|p| p.1)).collect();
        let (reps, stats) = self.represent_on(tape, &tables, mode)?;
        let q = tape.slice_rows(reps, 0, b)?;
        let r = tape.slice_rows(reps, b, b)?;
        let diff = tape.sub(q, r)?;
        let d = tape.row_norm(diff)?;
        let y: Vec<f64> = pairs.iter().map(|p| p.2.target()).collect();
        let similar = tape.constant(Tensor::from_vec(y.iter().map(|y| 0.5 * (1.0 - y)).collect()));
        let dissimilar = tape.constant(Tensor::from_vec(y.iter().map(|y| 0.5 * y).collect()));
        let d2 = tape.mul(d, d)?;
        let pull = tape.mul(similar, d2)?;
        let neg = tape.scale(d, -1.0)?;
        let gap = tape.add_scalar(neg, self.config.margin)?;
        let hinge = tape.relu(gap)?;
        let h2 = tape.mul(hinge, hinge)?;
        let push = tape.mul(dissimilar, h2)?;
        let per_pair = tape.add(pull, push)?;
        Ok((tape.mean(per_pair)?, stats))
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// `0.5(1-y)D^2 + 0.5 y max(0, m-D)^2` with `y = 0` for similar pairs.
pub fn contrastive_loss(y: f64, d: f64, margin: f64) -> f64 {
    let hinge = (margin - d).max(0.0);
    0.5 * (1.0 - y) * d * d + 0.5 * y * hinge * hinge
}

/// Similar iff the distance is strictly below half the margin.
pub fn classify(d: f64, margin: f64) -> Label {
    if d < margin / 2.0 {
        Label::Similar
    } else {
        Label::Dissimilar
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Seeds the per-epoch shuffles.
    pub seed: u64,
    pub learning_rate: f64,
    pub rho: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let opt = RmsPropConfig::default();
        Self {
            epochs: 30,
            batch_size: 32,
            seed: 0,
            learning_rate: opt.learning_rate,
            rho: opt.rho,
            epsilon: opt.epsilon,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.rho > 0.0 && self.rho < 1.0 && self.epsilon > 0.0) {
            return Err(Error::Config("invalid optimizer settings".into()));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> RmsPropConfig {
        RmsPropConfig {
            learning_rate: self.learning_rate,
            rho: self.rho,
            epsilon: self.epsilon,
        }
    }
}

/// Mini-batch RMSprop on the mean contrastive loss. Returns the mean
/// training loss of every epoch.
pub fn train(
    model: &mut TabSimModel,
    pairs: &[(&EncodedTable, &EncodedTable, Label)],
    config: &TrainConfig,
) -> Result<Vec<f64>> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    let mut opt = RmsProp::new(&model.store, config.optimizer());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(&EncodedTable, &EncodedTable, Label)> = chunk.iter().map(|&i| pairs[i]).collect();
            let (grads, loss, stats) = {
                let mut tape = Tape::new(&model.store);
                let (loss, stats) = model.batch_loss(&mut tape, &batch, Mode::Train)?;
                let value = tape.value(loss).data()[0];
                (tape.backward(loss)?, value, stats)
            };
            total += loss * batch.len() as f64;
            opt.step(&mut model.store, &grads.into_params(), &[]);
            model.embedding.zero_pad_row(&mut model.store);
            model.tabular.update_stats(&stats);
        }
        history.push(total / pairs.len() as f64);
    }
    if config.epochs > 0 {
        settle_batch_norm(model, pairs, &order, config.batch_size)?;
    }
    Ok(history)
}

/// Replaces the batch-normalization running averages by the exact mean of
/// the per-batch statistics over one pass of the training pairs, which is
/// the value the moving averages converge to once the parameters stop
/// changing.
pub fn settle_batch_norm(
    model: &mut TabSimModel,
    pairs: &[(&EncodedTable, &EncodedTable, Label)],
    order: &[usize],
    batch_size: usize,
) -> Result<()> {
    let mut sums: [Option<(Vec<f64>, Vec<f64>)>; 2] = [None, None];
    let mut batches = 0.0;
    for chunk in order.chunks(batch_size) {
        let tables: Vec<&EncodedTable> = chunk
            .iter()
            .map(|&i| pairs[i].0)
            .chain(chunk.iter().map(|&i| pairs[i].1))
            .collect();
        let mut tape = Tape::new(&model.store);
        let (_, stats) = model.represent_on(&mut tape, &tables, Mode::Train)?;
        for (sum, s) in sums.iter_mut().zip([stats.column, stats.table]) {
            let s = s.expect("train mode yields batch statistics");
            match sum {
                Some((m, v)) => {
                    m.iter_mut().zip(&s.mean).for_each(|(a, b)| *a += b);
                    v.iter_mut().zip(&s.var).for_each(|(a, b)| *a += b);
                }
                None => *sum = Some((s.mean, s.var)),
            }
        }
        batches += 1.0;
    }
    let [column, table] = sums;
    for (bn, sum) in [
        (&mut model.tabular.column_mlp.bn, column),
        (&mut model.tabular.table_mlp.bn, table),
    ] {
        if let Some((m, v)) = sum {
            bn.running_mean = m.into_iter().map(|x| x / batches).collect();
            bn.running_var = v.into_iter().map(|x| x / batches).collect();
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loss_unit_values() {
        assert_eq!(contrastive_loss(0.0, 0.0, 1.0), 0.0);
        assert_eq!(contrastive_loss(1.0, 0.0, 1.0), 0.5);
        assert_eq!(contrastive_loss(1.0, 1.5, 1.0), 0.0);
        assert_eq!(contrastive_loss(1.0, 1.0, 1.0), 0.0);
        assert_eq!(contrastive_loss(0.0, 2.0, 1.0), 2.0);
    }

    #[test]
    fn threshold_boundary() {
        assert_eq!(classify(0.0, 1.0), Label::Similar);
        assert_eq!(classify(0.49, 1.0), Label::Similar);
        assert_eq!(classify(0.5, 1.0), Label::Dissimilar);
    }

    #[test]
    fn three_four_five() {
        assert_eq!(euclidean(&[0.0, 0.0, 0.0], &[3.0, 0.0, 4.0]), 5.0);
    }

    #[test]
    fn representation_sizes() {
        let c = ModelConfig::default();
        assert_eq!(c.representation_dim(), 300);
        let c = ModelConfig {
            use_caption: false,
            ..c
        };
        assert_eq!(c.representation_dim(), 100);
    }
}
