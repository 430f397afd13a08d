//! Model building blocks on top of the tensor tape.
//!
//! Everything is batched: a forward pass encodes several tables at once.
//! Cells are laid out in (table, column, row) order so that reshaping the
//! cell vectors to `[tables * columns, rows, 2h]` gives one attention group
//! per column.

use std::collections::HashMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use tablesim_tensor::{BatchNormState, BatchStats, Mode, ParamId, ParamStore, Tape, Tensor, TensorError, Var};

use crate::error::{Error, Result};
use crate::table::EncodedTable;
use crate::vocab::PAD_ID;

/// Glorot-style uniform initialization over a `fan_in x fan_out` matrix.
pub fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..=limit)).collect();
    Tensor::new(vec![fan_in, fan_out], data).expect("consistent shape")
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingParams {
    pub weights: ParamId,
    pub vocab_len: usize,
    pub dim: usize,
}

impl EmbeddingParams {
    /// Registers `matrix` (`|V| x d`) with its pad row forced to zero.
    pub fn new(store: &mut ParamStore, name: &str, mut matrix: Tensor) -> Result<Self> {
        if matrix.shape().len() != 2 {
            return Err(Error::Embedding(format!(
                "embedding matrix must be 2-D, got {:?}",
                matrix.shape()
            )));
        }
        let (vocab_len, dim) = (matrix.shape()[0], matrix.shape()[1]);
        matrix.data_mut()[PAD_ID * dim..(PAD_ID + 1) * dim].fill(0.0);
        Ok(Self {
            weights: store.add(name, matrix),
            vocab_len,
            dim,
        })
    }

    /// Row lookup; `[ids.len(), d]`.
    pub fn embed(&self, tape: &mut Tape<'_>, ids: &[usize]) -> Result<Var> {
        let w = tape.param(self.weights);
        Ok(tape.gather_rows(w, ids)?)
    }

    pub fn zero_pad_row(&self, store: &mut ParamStore) {
        let d = self.dim;
        store.get_mut(self.weights).data_mut()[PAD_ID * d..(PAD_ID + 1) * d].fill(0.0);
    }
}

/// One LSTM direction. Gate blocks are laid out as input, forget,
/// candidate, output along the last axis of the weight matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub w_x: ParamId,
    pub w_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl LstmParams {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize) -> Self {
        let w_x = store.add(format!("{name}.w_x"), glorot(rng, input, 4 * hidden));
        let w_h = store.add(format!("{name}.w_h"), glorot(rng, hidden, 4 * hidden));
        let mut b = vec![0.0; 4 * hidden];
        b[hidden..2 * hidden].fill(1.0);
        let bias = store.add(format!("{name}.bias"), Tensor::from_vec(b));
        Self {
            w_x,
            w_h,
            bias,
            input,
            hidden,
        }
    }

    /// Runs over `steps` (each `[n, input]`) in the given order and returns
    /// the final hidden state `[n, hidden]`.
    pub fn run(&self, tape: &mut Tape<'_>, steps: &[Var]) -> Result<Var> {
        let first = *steps.first().ok_or(Error::Tensor(TensorError::Empty { op: "lstm" }))?;
        let n = tape.value(first).rows();
        let hd = self.hidden;
        let (w_x, w_h, bias) = (tape.param(self.w_x), tape.param(self.w_h), tape.param(self.bias));
        let mut h = tape.constant(Tensor::zeros(&[n, hd]));
        let mut c = tape.constant(Tensor::zeros(&[n, hd]));
        for &x in steps {
            let zx = tape.matmul(x, w_x)?;
            let zh = tape.matmul(h, w_h)?;
            let z = tape.add(zx, zh)?;
            let z = tape.add_broadcast(z, bias)?;
            let i = tape.slice_cols(z, 0, hd)?;
            let f = tape.slice_cols(z, hd, hd)?;
            let g = tape.slice_cols(z, 2 * hd, hd)?;
            let o = tape.slice_cols(z, 3 * hd, hd)?;
            let (i, f, o) = (tape.sigmoid(i)?, tape.sigmoid(f)?, tape.sigmoid(o)?);
            let g = tape.tanh(g)?;
            let keep = tape.mul(f, c)?;
            let write = tape.mul(i, g)?;
            c = tape.add(keep, write)?;
            let tc = tape.tanh(c)?;
            h = tape.mul(o, tc)?;
        }
        Ok(h)
    }
}

/// Forward and backward LSTMs with independent parameters; the output is
/// the concatenation of their final hidden states.
#[derive(Debug, Clone, PartialEq)]
pub struct BiLstmParams {
    pub forward: LstmParams,
    pub backward: LstmParams,
}

impl BiLstmParams {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, hidden: usize) -> Self {
        Self {
            forward: LstmParams::new(store, rng, &format!("{name}.fwd"), input, hidden),
            backward: LstmParams::new(store, rng, &format!("{name}.bwd"), input, hidden),
        }
    }

    pub fn output_dim(&self) -> usize {
        2 * self.forward.hidden
    }

    /// `steps[t]` is `[n, input]`; returns `[n, 2h]`.
    pub fn encode(&self, tape: &mut Tape<'_>, steps: &[Var]) -> Result<Var> {
        let hf = self.forward.run(tape, steps)?;
        let reversed: Vec<Var> = steps.iter().rev().copied().collect();
        let hb = self.backward.run(tape, &reversed)?;
        Ok(tape.concat_cols(&[hf, hb])?)
    }

    /// Single sequence `[len, input]` to `[1, 2h]`.
    pub fn encode_sequence(&self, tape: &mut Tape<'_>, seq: Var) -> Result<Var> {
        let len = tape.value(seq).rows();
        let steps = (0..len)
            .map(|t| tape.slice_rows(seq, t, 1))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        self.encode(tape, &steps)
    }

    /// Embeds `n` token sequences of equal length `len` (`ids` row-major,
    /// one sequence per row) and encodes them; `[n, 2h]`.
    pub fn encode_ids(
        &self,
        tape: &mut Tape<'_>,
        embedding: &EmbeddingParams,
        ids: &[usize],
        len: usize,
    ) -> Result<Var> {
        if len == 0 || ids.is_empty() || !ids.len().is_multiple_of(len) {
            return Err(Error::Tensor(TensorError::Empty { op: "bilstm" }));
        }
        let n = ids.len() / len;
        // step-major order so every step is a contiguous row block
        let step_major: Vec<usize> = (0..len).flat_map(|t| (0..n).map(move |s| ids[s * len + t])).collect();
        let all = embedding.embed(tape, &step_major)?;
        let steps = (0..len)
            .map(|t| tape.slice_rows(all, t * n, n))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        self.encode(tape, &steps)
    }
}

/// Multiplicative self-attention with a sigmoid inside the logit:
/// `a_ij = sigmoid(x_i^T W x_j + b)`, `alpha_i = softmax_j(a_i)`,
/// `psi_i = sum_j alpha_ij x_j`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionParams {
    pub weights: ParamId,
    pub bias: ParamId,
    pub dim: usize,
}

impl AttentionParams {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, dim: usize) -> Self {
        Self {
            weights: store.add(format!("{name}.w"), glorot(rng, dim, dim)),
            bias: store.add(format!("{name}.b"), Tensor::from_vec(vec![0.0])),
            dim,
        }
    }

    /// `x` is `[groups, n, dim]`; attention runs within each group.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var) -> Result<Var> {
        let shape = tape.value(x).shape().to_vec();
        if shape.len() != 3 || shape[2] != self.dim {
            return Err(Error::Tensor(TensorError::ShapeMismatch {
                op: "self_attention",
                lhs: shape,
                rhs: vec![self.dim, self.dim],
            }));
        }
        let (g, n, e) = (shape[0], shape[1], shape[2]);
        let w = tape.param(self.weights);
        let b = tape.param(self.bias);
        let flat = tape.reshape(x, &[g * n, e])?;
        let xw = tape.matmul(flat, w)?;
        let xw = tape.reshape(xw, &[g, n, e])?;
        let logits = tape.batch_matmul(xw, x, true)?;
        let logits = tape.add_broadcast(logits, b)?;
        let a = tape.sigmoid(logits)?;
        let alpha = tape.softmax(a)?;
        Ok(tape.batch_matmul(alpha, x, false)?)
    }
}

/// Affine map, batch normalization, ReLU. The weight matrix is stored as
/// `in x out`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    pub weights: ParamId,
    pub bias: ParamId,
    pub bn: BatchNormState,
    pub input: usize,
    pub output: usize,
}

impl MlpParams {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, input: usize, output: usize) -> Self {
        let weights = store.add(format!("{name}.w"), glorot(rng, input, output));
        let bias = store.add(format!("{name}.b"), Tensor::zeros(&[output]));
        let gamma = store.add(format!("{name}.bn.gamma"), Tensor::filled(&[output], 1.0));
        let beta = store.add(format!("{name}.bn.beta"), Tensor::zeros(&[output]));
        Self {
            weights,
            bias,
            bn: BatchNormState::new(gamma, beta, output),
            input,
            output,
        }
    }

    /// `x` is `[batch, input]`.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, mode: Mode) -> Result<(Var, Option<BatchStats>)> {
        let (w, b) = (tape.param(self.weights), tape.param(self.bias));
        let z = tape.matmul(x, w)?;
        let z = tape.add_broadcast(z, b)?;
        let (z, stats) = self.bn.forward(tape, z, mode)?;
        Ok((tape.relu(z)?, stats))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TabularVariant {
    /// Self-attention over the cells of each column and over columns.
    Attention,
    /// Bi-LSTMs over cells and over columns in place of the attention layers.
    SequenceL,
}

impl TabularVariant {
    pub fn name(self) -> &'static str {
        match self {
            TabularVariant::Attention => "attention",
            TabularVariant::SequenceL => "sequence_l",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ColumnStage {
    Attention(AttentionParams),
    Sequence(BiLstmParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularEncoderParams {
    pub cell: BiLstmParams,
    pub column: ColumnStage,
    pub column_mlp: MlpParams,
    pub table: ColumnStage,
    pub table_mlp: MlpParams,
    pub n_rows: usize,
    pub n_cols: usize,
}

/// Batch statistics of the column-level and table-level normalizations.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TabularStats {
    pub column: Option<BatchStats>,
    pub table: Option<BatchStats>,
}

impl TabularEncoderParams {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        variant: TabularVariant,
        embed_dim: usize,
        hidden: usize,
        mlp_out: usize,
        n_rows: usize,
        n_cols: usize,
    ) -> Self {
        let cell = BiLstmParams::new(store, rng, "cell_lstm", embed_dim, hidden);
        let (column, column_in, table, table_in) = match variant {
            TabularVariant::Attention => (
                ColumnStage::Attention(AttentionParams::new(store, rng, "column_attention", 2 * hidden)),
                n_rows * 2 * hidden,
                ColumnStage::Attention(AttentionParams::new(store, rng, "table_attention", mlp_out)),
                n_cols * mlp_out,
            ),
            TabularVariant::SequenceL => (
                ColumnStage::Sequence(BiLstmParams::new(store, rng, "column_lstm", 2 * hidden, hidden)),
                2 * hidden,
                ColumnStage::Sequence(BiLstmParams::new(store, rng, "table_lstm", mlp_out, hidden)),
                2 * hidden,
            ),
        };
        let column_mlp = MlpParams::new(store, rng, "column_mlp", column_in, mlp_out);
        let table_mlp = MlpParams::new(store, rng, "table_mlp", table_in, mlp_out);
        Self {
            cell,
            column,
            column_mlp,
            table,
            table_mlp,
            n_rows,
            n_cols,
        }
    }

    pub fn variant(&self) -> TabularVariant {
        match self.column {
            ColumnStage::Attention(_) => TabularVariant::Attention,
            ColumnStage::Sequence(_) => TabularVariant::SequenceL,
        }
    }

    /// Cell vectors for a batch of tables: `[tables * n_cols * n_rows, 2h]`
    /// in (table, column, row) order. Identical cells are encoded once.
    pub fn encode_cells(
        &self,
        tape: &mut Tape<'_>,
        embedding: &EmbeddingParams,
        tables: &[&EncodedTable],
    ) -> Result<Var> {
        let mut unique: Vec<&[usize]> = Vec::new();
        let mut slot: HashMap<&[usize], usize> = HashMap::new();
        let mut index = Vec::with_capacity(tables.len() * self.n_rows * self.n_cols);
        let mut len = None;
        for t in tables {
            self.check_shape(t)?;
            for k in 0..self.n_cols {
                for i in 0..self.n_rows {
                    let cell = t.cell(i, k);
                    len.get_or_insert(cell.len());
                    let at = *slot.entry(cell).or_insert_with(|| {
                        unique.push(cell);
                        unique.len() - 1
                    });
                    index.push(at);
                }
            }
        }
        let len = len.ok_or(Error::Tensor(TensorError::Empty { op: "encode_cells" }))?;
        let ids: Vec<usize> = unique.iter().flat_map(|c| c.iter().copied()).collect();
        let encoded = self.cell.encode_ids(tape, embedding, &ids, len)?;
        Ok(tape.gather_rows(encoded, &index)?)
    }

    fn check_shape(&self, t: &EncodedTable) -> Result<()> {
        if t.shape.n_rows != self.n_rows || t.shape.n_cols != self.n_cols {
            return Err(Error::Tensor(TensorError::ShapeMismatch {
                op: "encode_tabular",
                lhs: vec![t.shape.n_rows, t.shape.n_cols],
                rhs: vec![self.n_rows, self.n_cols],
            }));
        }
        Ok(())
    }

    /// Tabular representation `[tables, mlp_out]` from cell vectors laid
    /// out by [`TabularEncoderParams::encode_cells`].
    pub fn encode_from_cells(
        &self,
        tape: &mut Tape<'_>,
        cells: Var,
        n_tables: usize,
        mode: Mode,
    ) -> Result<(Var, TabularStats)> {
        let (n, m) = (self.n_rows, self.n_cols);
        let e = tape.value(cells).last_dim();
        let columns_in = match &self.column {
            ColumnStage::Attention(att) => {
                let grouped = tape.reshape(cells, &[n_tables * m, n, e])?;
                let psi = att.forward(tape, grouped)?;
                tape.reshape(psi, &[n_tables * m, n * e])?
            }
            ColumnStage::Sequence(lstm) => {
                let steps = (0..n)
                    .map(|i| {
                        let idx: Vec<usize> = (0..n_tables * m).map(|g| g * n + i).collect();
                        tape.gather_rows(cells, &idx)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                lstm.encode(tape, &steps)?
            }
        };
        let (columns, column_stats) = self.column_mlp.forward(tape, columns_in, mode)?;
        let out = self.column_mlp.output;
        let table_in = match &self.table {
            ColumnStage::Attention(att) => {
                let grouped = tape.reshape(columns, &[n_tables, m, out])?;
                let psi = att.forward(tape, grouped)?;
                tape.reshape(psi, &[n_tables, m * out])?
            }
            ColumnStage::Sequence(lstm) => {
                let steps = (0..m)
                    .map(|k| {
                        let idx: Vec<usize> = (0..n_tables).map(|b| b * m + k).collect();
                        tape.gather_rows(columns, &idx)
                    })
                    .collect::<std::result::Result<Vec<_>, _>>()?;
                lstm.encode(tape, &steps)?
            }
        };
        let (table, table_stats) = self.table_mlp.forward(tape, table_in, mode)?;
        Ok((
            table,
            TabularStats {
                column: column_stats,
                table: table_stats,
            },
        ))
    }

    pub fn encode(
        &self,
        tape: &mut Tape<'_>,
        embedding: &EmbeddingParams,
        tables: &[&EncodedTable],
        mode: Mode,
    ) -> Result<(Var, TabularStats)> {
        let cells = self.encode_cells(tape, embedding, tables)?;
        self.encode_from_cells(tape, cells, tables.len(), mode)
    }

    pub fn update_stats(&mut self, stats: &TabularStats) {
        if let Some(s) = &stats.column {
            self.column_mlp.bn.update(s);
        }
        if let Some(s) = &stats.table {
            self.table_mlp.bn.update(s);
        }
    }
}

/// Caption Bi-LSTM, separate from the cell Bi-LSTM.
#[derive(Debug, Clone, PartialEq)]
pub struct CaptionEncoderParams {
    pub lstm: BiLstmParams,
}

impl CaptionEncoderParams {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, embed_dim: usize, hidden: usize) -> Self {
        Self {
            lstm: BiLstmParams::new(store, rng, "caption_lstm", embed_dim, hidden),
        }
    }

    /// `[tables, 2h]`
    pub fn encode(&self, tape: &mut Tape<'_>, embedding: &EmbeddingParams, tables: &[&EncodedTable]) -> Result<Var> {
        let len = tables
            .first()
            .map(|t| t.caption_ids.len())
            .ok_or(Error::Tensor(TensorError::Empty { op: "encode_caption" }))?;
        let mut ids = Vec::with_capacity(len * tables.len());
        for t in tables {
            if t.caption_ids.len() != len {
                return Err(Error::Tensor(TensorError::ShapeMismatch {
                    op: "encode_caption",
                    lhs: vec![t.caption_ids.len()],
                    rhs: vec![len],
                }));
            }
            ids.extend_from_slice(&t.caption_ids);
        }
        self.lstm.encode_ids(tape, embedding, &ids, len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn sigmoid(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    #[test]
    fn pad_lookup_is_zero() {
        let mut store = ParamStore::new();
        let emb = EmbeddingParams::new(&mut store, "emb", Tensor::filled(&[4, 3], 0.7)).unwrap();
        let mut tape = Tape::new(&store);
        let x = emb.embed(&mut tape, &[0, 0, 0]).unwrap();
        assert!(tape.value(x).data().iter().all(|&v| v == 0.0));
        let y = emb.embed(&mut tape, &[2]).unwrap();
        assert_eq!(tape.value(y).data(), &[0.7; 3]);
        assert!(emb.embed(&mut tape, &[4]).is_err());
    }

    #[test]
    fn zero_lstm_outputs_zero() {
        let mut store = ParamStore::new();
        let lstm = BiLstmParams::new(&mut store, &mut rng(0), "l", 3, 2);
        let ids: Vec<ParamId> = store.ids().collect();
        for id in ids {
            store.get_mut(id).data_mut().fill(0.0);
        }
        let mut tape = Tape::new(&store);
        let seq = tape.constant(Tensor::new(vec![4, 3], (0..12).map(|i| i as f64 - 5.0).collect()).unwrap());
        let out = lstm.encode_sequence(&mut tape, seq).unwrap();
        assert_eq!(tape.value(out).data(), &[0.0; 4]);
    }

    /// One LSTM step with scalar input and hidden size 1, evaluated by hand.
    #[test]
    fn single_step_matches_scalar_evaluation() {
        let mut store = ParamStore::new();
        let lstm = BiLstmParams::new(&mut store, &mut rng(0), "l", 1, 1);
        let (wx, bias) = ([0.5, -0.3, 0.8, 0.2], [0.1, 1.0, -0.2, 0.05]);
        for dir in [&lstm.forward, &lstm.backward] {
            store.get_mut(dir.w_x).data_mut().copy_from_slice(&wx);
            store.get_mut(dir.bias).data_mut().copy_from_slice(&bias);
        }
        store.get_mut(lstm.backward.w_x).data_mut()[0] = -0.5;
        let x = 1.5;
        let step = |wx: &[f64]| {
            let z: Vec<f64> = (0..4).map(|k| wx[k] * x + bias[k]).collect();
            let (i, g, o) = (sigmoid(z[0]), z[2].tanh(), sigmoid(z[3]));
            o * (i * g).tanh()
        };
        let mut tape = Tape::new(&store);
        let seq = tape.constant(Tensor::new(vec![1, 1], vec![x]).unwrap());
        let out = lstm.encode_sequence(&mut tape, seq).unwrap();
        let got = tape.value(out).data();
        assert!((got[0] - step(&wx)).abs() < 1e-12);
        assert!((got[1] - step(&[-0.5, -0.3, 0.8, 0.2])).abs() < 1e-12);
    }

    #[test]
    fn empty_sequence_rejected() {
        let mut store = ParamStore::new();
        let lstm = BiLstmParams::new(&mut store, &mut rng(0), "l", 2, 2);
        let mut tape = Tape::new(&store);
        assert!(lstm.encode(&mut tape, &[]).is_err());
    }

    fn attention_oracle(x: &[Vec<f64>], w: &[f64], b: f64) -> Vec<Vec<f64>> {
        let (n, d) = (x.len(), x[0].len());
        (0..n)
            .map(|i| {
                let a: Vec<f64> = (0..n)
                    .map(|j| {
                        let mut s = 0.0;
                        for p in 0..d {
                            for q in 0..d {
                                s += x[i][p] * w[p * d + q] * x[j][q];
                            }
                        }
                        sigmoid(s + b)
                    })
                    .collect();
                let z: f64 = a.iter().map(|v| v.exp()).sum();
                (0..d).map(|q| (0..n).map(|j| a[j].exp() / z * x[j][q]).sum()).collect()
            })
            .collect()
    }

    #[test]
    fn attention_matches_scalar_oracle() {
        let mut store = ParamStore::new();
        let mut r = rng(5);
        let att = AttentionParams::new(&mut store, &mut r, "a", 2);
        store.get_mut(att.bias).data_mut()[0] = 0.3;
        let x: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..2).map(|_| r.gen_range(-2.0..2.0)).collect())
            .collect();
        let mut tape = Tape::new(&store);
        let xv = tape.constant(Tensor::new(vec![1, 3, 2], x.concat()).unwrap());
        let y = att.forward(&mut tape, xv).unwrap();
        let want = attention_oracle(&x, store.get(att.weights).data(), 0.3);
        for (g, w) in tape.value(y).data().iter().zip(want.concat()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn attention_single_and_identical_items() {
        let mut store = ParamStore::new();
        let att = AttentionParams::new(&mut store, &mut rng(1), "a", 3);
        let mut tape = Tape::new(&store);
        let one = tape.constant(Tensor::new(vec![1, 1, 3], vec![0.2, -0.4, 0.9]).unwrap());
        let y = att.forward(&mut tape, one).unwrap();
        assert_eq!(tape.value(y).data(), &[0.2, -0.4, 0.9]);
        let same = tape.constant(Tensor::new(vec![1, 4, 3], [0.2, -0.4, 0.9].repeat(4)).unwrap());
        let y = att.forward(&mut tape, same).unwrap();
        for (a, b) in tape.value(y).data().iter().zip([0.2, -0.4, 0.9].repeat(4)) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_mlp_outputs_zero() {
        let mut store = ParamStore::new();
        let mlp = MlpParams::new(&mut store, &mut rng(0), "m", 6, 3);
        store.get_mut(mlp.weights).data_mut().fill(0.0);
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::filled(&[2, 6], 1.3));
        for mode in [Mode::Train, Mode::Infer] {
            let (y, _) = mlp.forward(&mut tape, x, mode).unwrap();
            assert!(tape.value(y).data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn forget_bias_is_one() {
        let mut store = ParamStore::new();
        let l = LstmParams::new(&mut store, &mut rng(0), "l", 2, 3);
        assert_eq!(
            store.get(l.bias).data(),
            &[0.0, 0.0, 0.0, 1.0, 1.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
        );
    }
}
