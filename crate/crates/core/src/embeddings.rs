//! Word-vector files, embedding initialization and a small skip-gram trainer
//! over table-shaped contexts.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tablesim_tensor::Tensor;

use crate::error::{Error, Result};
use crate::table::EncodedTable;
use crate::vocab::{Vocabulary, PAD_ID};

pub const INIT_RANGE: f64 = 0.05;

/// Plain-text word vectors: a `"<count> <dim>"` header line followed by one
/// `token v1 .. vd` line per word.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingFile {
    pub dim: usize,
    pub rows: Vec<(String, Vec<f64>)>,
}

impl EmbeddingFile {
    pub fn new(dim: usize) -> Self {
        Self { dim, rows: Vec::new() }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines
            .next()
            .ok_or_else(|| Error::Embedding("missing \"<count> <dim>\" header".into()))?;
        let fields: Vec<&str> = header.split_whitespace().collect();
        let parsed: Option<(usize, usize)> = match fields.as_slice() {
            [c, d] => c.parse().ok().zip(d.parse().ok()),
            _ => None,
        };
        let (count, dim) = parsed.ok_or_else(|| Error::Embedding(format!("malformed header \"{header}\"")))?;
        if dim == 0 {
            return Err(Error::Embedding("dimension must be positive".into()));
        }
        let mut rows = Vec::with_capacity(count);
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let token = parts.next().unwrap_or_default().to_string();
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Embedding(format!("line {}: {e}", i + 1)))?;
            if values.len() != dim {
                return Err(Error::Embedding(format!(
                    "line {}: expected {dim} values, found {}",
                    i + 1,
                    values.len()
                )));
            }
            rows.push((token, values));
        }
        if rows.len() != count {
            return Err(Error::Embedding(format!(
                "header announces {count} rows, file has {}",
                rows.len()
            )));
        }
        Ok(Self { dim, rows })
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Values are written with 17 significant digits so they parse back to
    /// the same bits.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.rows.len(), self.dim);
        for (token, values) in &self.rows {
            s.push_str(token);
            for v in values {
                write!(s, " {v:.16e}").expect("writing to a String");
            }
            s.push('\n');
        }
        s
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    /// Exports rows of an embedding matrix under the vocabulary's tokens,
    /// skipping the pad row.
    pub fn from_matrix(vocab: &Vocabulary, matrix: &Tensor) -> Self {
        let dim = matrix.last_dim();
        let rows = vocab
            .tokens()
            .iter()
            .enumerate()
            .skip(PAD_ID + 1)
            .map(|(id, t)| (t.clone(), matrix.row(id).to_vec()))
            .collect();
        Self { dim, rows }
    }
}

/// Seeded uniform `[-0.05, 0.05]` matrix with a zero pad row.
pub fn random_embeddings(vocab_len: usize, dim: usize, seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<f64> = (0..vocab_len * dim)
        .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
        .collect();
    data[PAD_ID * dim..(PAD_ID + 1) * dim].fill(0.0);
    Tensor::new(vec![vocab_len, dim], data).expect("consistent embedding shape")
}

/// Random initialization overwritten by the rows the file provides.
pub fn load_pretrained(file: &EmbeddingFile, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Tensor> {
    if file.dim != dim {
        return Err(Error::Embedding(format!(
            "embedding file has dimension {}, model expects {dim}",
            file.dim
        )));
    }
    let mut m = random_embeddings(vocab.len(), dim, seed);
    for (token, values) in &file.rows {
        match vocab.get(token) {
            Some(id) if id != PAD_ID => {
                m.data_mut()[id * dim..(id + 1) * dim].copy_from_slice(values);
            }
            _ => {}
        }
    }
    Ok(m)
}

pub fn load_pretrained_path(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize, seed: u64) -> Result<Tensor> {
    load_pretrained(&EmbeddingFile::read(path)?, vocab, dim, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkipgramConfig {
    pub dim: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub permutations_per_column: usize,
    pub learning_rate: f64,
    pub seed: u64,
}

impl Default for SkipgramConfig {
    fn default() -> Self {
        Self {
            dim: 200,
            window: 5,
            negatives: 5,
            epochs: 5,
            permutations_per_column: 10,
            learning_rate: 0.025,
            seed: 0,
        }
    }
}

impl SkipgramConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("window", self.window),
            ("negatives", self.negatives),
            ("permutations_per_column", self.permutations_per_column),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("skipgram {name} must be positive")));
            }
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("skipgram learning_rate must be positive".into()));
        }
        Ok(())
    }
}

fn window_pairs(tokens: &[usize], window: usize, out: &mut Vec<(usize, usize)>) {
    for (i, &center) in tokens.iter().enumerate() {
        let lo = i.saturating_sub(window);
        let hi = (i + window).min(tokens.len() - 1);
        for (j, &ctx) in tokens.iter().enumerate().take(hi + 1).skip(lo) {
            if j != i {
                out.push((center, ctx));
            }
        }
    }
}

/// For each column, `permutations_per_column` shuffles of its cells are
/// linearized (pads dropped) and every token is paired with the tokens
/// within `window` positions.
pub fn column_cooccurrence_pairs(
    table: &EncodedTable,
    config: &SkipgramConfig,
    rng: &mut ChaCha8Rng,
) -> Vec<(usize, usize)> {
    let shape = &table.shape;
    let mut out = Vec::new();
    for col in 0..shape.n_cols {
        let mut cells: Vec<&[usize]> = (0..shape.n_rows).map(|r| table.cell(r, col)).collect();
        for _ in 0..config.permutations_per_column {
            cells.shuffle(rng);
            let seq: Vec<usize> = cells
                .iter()
                .flat_map(|c| c.iter().copied())
                .filter(|&t| t != PAD_ID)
                .collect();
            window_pairs(&seq, config.window, &mut out);
        }
    }
    out
}

/// Whole table as one context: caption, then cells in row-major order.
pub fn table_cooccurrence_pairs(table: &EncodedTable, config: &SkipgramConfig) -> Vec<(usize, usize)> {
    let seq: Vec<usize> = table
        .caption_ids
        .iter()
        .chain(&table.content_ids)
        .copied()
        .filter(|&t| t != PAD_ID)
        .collect();
    let mut out = Vec::new();
    window_pairs(&seq, config.window, &mut out);
    out
}

/// Skip-gram with negative sampling. Noise words are drawn from the
/// context-count distribution raised to 0.75; the learning rate decays
/// linearly to 1e-4 of its start. Returns the input-vector matrix, whose
/// rows for tokens absent from `pairs` keep their initialization.
pub fn train_skipgram(pairs: &[(usize, usize)], vocab_len: usize, config: &SkipgramConfig) -> Result<Tensor> {
    config.validate()?;
    if pairs.is_empty() {
        return Err(Error::Embedding(
            "skip-gram needs at least one (center, context) pair".into(),
        ));
    }
    let d = config.dim;
    let mut input = random_embeddings(vocab_len, d, config.seed);
    let mut output = vec![0.0; vocab_len * d];
    let mut counts = vec![0.0f64; vocab_len];
    for &(c, o) in pairs {
        if c >= vocab_len || o >= vocab_len {
            return Err(Error::Embedding(format!("token id {} outside vocabulary", c.max(o))));
        }
        counts[o] += 1.0;
    }
    let noise = WeightedIndex::new(counts.iter().map(|c| c.powf(0.75))).expect("some context count is positive");
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(1));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let total = (config.epochs * pairs.len()) as f64;
    let mut step = 0usize;
    let mut grad_in = vec![0.0; d];
    let w = input.data_mut();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        for &p in &order {
            let lr = config.learning_rate * (1.0 - step as f64 / total).max(1e-4);
            step += 1;
            let (center, context) = pairs[p];
            grad_in.fill(0.0);
            let v = center * d..(center + 1) * d;
            for k in 0..=config.negatives {
                let (target, label) = if k == 0 {
                    (context, 1.0)
                } else {
                    let t = noise.sample(&mut rng);
                    if t == context {
                        continue;
                    }
                    (t, 0.0)
                };
                let u = target * d..(target + 1) * d;
                let dot: f64 = w[v.clone()].iter().zip(&output[u.clone()]).map(|(a, b)| a * b).sum();
                let g = lr * (label - sigmoid(dot));
                for (gi, &o) in grad_in.iter_mut().zip(&output[u.clone()]) {
                    *gi += g * o;
                }
                for (o, &x) in output[u].iter_mut().zip(&w[v.clone()]) {
                    *o += g * x;
                }
            }
            for (x, g) in w[v].iter_mut().zip(&grad_in) {
                *x += g;
            }
        }
    }
    w[PAD_ID * d..(PAD_ID + 1) * d].fill(0.0);
    Ok(input)
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Pairs for a whole set of encoded tables under one strategy.
pub fn corpus_pairs<'a>(
    tables: impl IntoIterator<Item = &'a EncodedTable>,
    config: &SkipgramConfig,
    column_level: bool,
) -> Vec<(usize, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut out = Vec::new();
    for t in tables {
        if column_level {
            out.extend(column_cooccurrence_pairs(t, config, &mut rng));
        } else {
            out.extend(table_cooccurrence_pairs(t, config));
        }
    }
    out
}

/// Lookup view of an embedding matrix for the embedding-based baselines.
#[derive(Debug, Clone)]
pub struct WordVectors {
    pub dim: usize,
    index: HashMap<String, usize>,
    matrix: Vec<Vec<f64>>,
}

impl WordVectors {
    pub fn from_file(file: &EmbeddingFile) -> Self {
        let mut index = HashMap::new();
        let mut matrix = Vec::with_capacity(file.rows.len());
        for (token, values) in &file.rows {
            if !index.contains_key(token) {
                index.insert(token.clone(), matrix.len());
                matrix.push(values.clone());
            }
        }
        Self {
            dim: file.dim,
            index,
            matrix,
        }
    }

    pub fn from_matrix(vocab: &Vocabulary, matrix: &Tensor) -> Self {
        Self::from_file(&EmbeddingFile::from_matrix(vocab, matrix))
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| self.matrix[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.matrix.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matrix.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::ShapeConfig;

    fn vocab(words: &[&str]) -> Vocabulary {
        Vocabulary::from_tokens(words.iter().copied())
    }

    #[test]
    fn file_round_trips_bitwise() {
        let mut f = EmbeddingFile::new(3);
        f.rows.push(("alpha".into(), vec![0.1, -1.0 / 3.0, 1e-300]));
        f.rows.push(("beta".into(), vec![f64::MAX, -0.0, 2.5]));
        let text = f.to_text();
        assert!(text.starts_with("2 3\n"));
        let g = EmbeddingFile::parse(&text).unwrap();
        for (a, b) in f.rows.iter().zip(&g.rows) {
            assert_eq!(a.0, b.0);
            for (x, y) in a.1.iter().zip(&b.1) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(EmbeddingFile::parse("").is_err());
        assert!(EmbeddingFile::parse("two 3\n").is_err());
        assert!(EmbeddingFile::parse("1 2\nx 0.1\n").is_err());
        assert!(EmbeddingFile::parse("2 2\nx 0.1 0.2\n").is_err());
    }

    #[test]
    fn pretrained_rows_copied() {
        let v = vocab(&["a", "b"]);
        let mut f = EmbeddingFile::new(2);
        f.rows.push(("a".into(), vec![1.0, 2.0]));
        f.rows.push(("b".into(), vec![3.0, 4.0]));
        f.rows.push(("<unk>".into(), vec![5.0, 6.0]));
        f.rows.push(("<pad>".into(), vec![7.0, 8.0]));
        let m = load_pretrained(&f, &v, 2, 0).unwrap();
        assert_eq!(m.row(0), &[0.0, 0.0]);
        assert_eq!(m.row(1), &[5.0, 6.0]);
        assert_eq!(m.row(2), &[1.0, 2.0]);
        assert_eq!(m.row(3), &[3.0, 4.0]);
    }

    #[test]
    fn empty_file_gives_random_rows() {
        let v = vocab(&["a", "b"]);
        let f = EmbeddingFile::parse("0 4\n").unwrap();
        let m = load_pretrained(&f, &v, 4, 9).unwrap();
        assert_eq!(m, random_embeddings(v.len(), 4, 9));
        assert!(m.row(0).iter().all(|&x| x == 0.0));
        assert!(m.data()[4..].iter().all(|x| x.abs() <= INIT_RANGE && *x != 0.0));
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let v = vocab(&["a"]);
        let f = EmbeddingFile::parse("0 100\n").unwrap();
        assert!(matches!(load_pretrained(&f, &v, 200, 0), Err(Error::Embedding(_))));
    }

    fn column_table(cells: &[usize]) -> EncodedTable {
        let shape = ShapeConfig::new(cells.len(), 1, 1, 1).unwrap();
        EncodedTable {
            shape,
            caption_ids: vec![0],
            content_ids: cells.to_vec(),
        }
    }

    #[test]
    fn two_cell_column_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let one = SkipgramConfig {
            permutations_per_column: 1,
            ..Default::default()
        };
        let mut p = column_cooccurrence_pairs(&column_table(&[2, 3]), &one, &mut rng);
        p.sort();
        assert_eq!(p, vec![(2, 3), (3, 2)]);

        let ten = SkipgramConfig::default();
        assert!(column_cooccurrence_pairs(&column_table(&[2]), &ten, &mut rng).is_empty());
        assert_eq!(
            column_cooccurrence_pairs(&column_table(&[2, 3]), &ten, &mut rng).len(),
            20
        );
        assert_eq!(
            column_cooccurrence_pairs(&column_table(&[2, 0, 3, 0]), &ten, &mut rng).len(),
            20
        );
    }

    #[test]
    fn window_pairs_symmetric() {
        let mut out = Vec::new();
        window_pairs(&[5, 6, 7, 8, 9, 10, 11], 2, &mut out);
        for &(a, b) in &out {
            assert!(out.contains(&(b, a)));
        }
        assert_eq!(out.len(), 2 * (2 * 7 - 3));
    }

    fn cosine(a: &[f64], b: &[f64]) -> f64 {
        let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
        let n = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        dot / (n(a) * n(b))
    }

    #[test]
    fn cooccurring_tokens_move_together() {
        let cfg = SkipgramConfig {
            dim: 8,
            epochs: 20,
            seed: 4,
            ..Default::default()
        };
        // columns {2,3,4} and {5,6,7}; token 8 never appears
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut pairs = Vec::new();
        for _ in 0..10 {
            pairs.extend(column_cooccurrence_pairs(&column_table(&[2, 3, 4]), &cfg, &mut rng));
            pairs.extend(column_cooccurrence_pairs(&column_table(&[5, 6, 7]), &cfg, &mut rng));
        }
        let init = random_embeddings(9, 8, 4);
        let trained = train_skipgram(&pairs, 9, &cfg).unwrap();
        assert!(cosine(trained.row(2), trained.row(3)) > cosine(init.row(2), init.row(3)));
        assert_eq!(trained.row(8), init.row(8));
        assert_eq!(trained.row(0), &[0.0; 8]);
        assert_eq!(trained, train_skipgram(&pairs, 9, &cfg).unwrap());
    }

    #[test]
    fn empty_stream_rejected() {
        assert!(train_skipgram(&[], 3, &SkipgramConfig::default()).is_err());
    }
}
