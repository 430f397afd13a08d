//! Bag-of-words and embedding baselines, plus logistic regression over
//! pair difference vectors.

use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::embeddings::WordVectors;
use crate::error::{Error, Result};
use crate::table::RawTable;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreOrientation {
    SimilarityHighIsSimilar,
    DistanceLowIsSimilar,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MethodScore {
    pub value: f64,
    pub orientation: ScoreOrientation,
}

impl MethodScore {
    pub fn similarity(value: f64) -> Self {
        Self {
            value,
            orientation: ScoreOrientation::SimilarityHighIsSimilar,
        }
    }

    pub fn distance(value: f64) -> Self {
        Self {
            value,
            orientation: ScoreOrientation::DistanceLowIsSimilar,
        }
    }

    /// Higher always means more similar.
    pub fn oriented(&self) -> f64 {
        match self.orientation {
            ScoreOrientation::SimilarityHighIsSimilar => self.value,
            ScoreOrientation::DistanceLowIsSimilar => -self.value,
        }
    }
}

pub type BagOfWords = BTreeSet<String>;

pub fn bag(tokens: &[String]) -> BagOfWords {
    tokens.iter().cloned().collect()
}

/// `|a ∩ b| / |a ∪ b|`; two empty bags count as identical.
pub fn jaccard(a: &BagOfWords, b: &BagOfWords) -> f64 {
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    let inter = a.intersection(b).count();
    inter as f64 / (a.len() + b.len() - inter) as f64
}

/// Mean of caption and content Jaccard similarities.
pub fn table_jaccard(q: &RawTable, r: &RawTable) -> MethodScore {
    let cap = jaccard(&bag(&q.caption_tokens()), &bag(&r.caption_tokens()));
    let content = jaccard(&bag(&q.content_tokens()), &bag(&r.content_tokens()));
    MethodScore::similarity(0.5 * (cap + content))
}

/// Mean over tokens that have a vector; zero vector if none does.
pub fn avg_embedding(tokens: &[String], vectors: &WordVectors) -> Vec<f64> {
    let mut sum = vec![0.0; vectors.dim];
    let mut n = 0usize;
    for t in tokens {
        if let Some(v) = vectors.get(t) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            n += 1;
        }
    }
    if n > 0 {
        sum.iter_mut().for_each(|s| *s /= n as f64);
    }
    sum
}

pub fn sum_embedding<'a>(tokens: impl IntoIterator<Item = &'a String>, vectors: &WordVectors) -> Vec<f64> {
    let mut sum = vec![0.0; vectors.dim];
    for t in tokens {
        if let Some(v) = vectors.get(t) {
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
        }
    }
    sum
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv)).clamp(-1.0, 1.0)
}

/// Mean of the caption and content cosines of averaged embeddings.
pub fn table_cosine(q: &RawTable, r: &RawTable, vectors: &WordVectors) -> MethodScore {
    let cap = cosine(
        &avg_embedding(&q.caption_tokens(), vectors),
        &avg_embedding(&r.caption_tokens(), vectors),
    );
    let content = cosine(
        &avg_embedding(&q.content_tokens(), vectors),
        &avg_embedding(&r.content_tokens(), vectors),
    );
    MethodScore::similarity(0.5 * (cap + content))
}

/// Maximum-weight one-to-one matching between the rows and columns of an
/// `n x m` weight matrix (size `min(n, m)`), by the Hungarian method with
/// potentials. Returns the matched `(row, col)` pairs sorted by row and
/// their total weight.
pub fn hungarian_max_matching(weights: &[Vec<f64>]) -> (Vec<(usize, usize)>, f64) {
    let n = weights.len();
    let m = weights.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return (Vec::new(), 0.0);
    }
    // The solver needs rows <= cols; transpose otherwise.
    let transposed = n > m;
    let (rows, cols) = if transposed { (m, n) } else { (n, m) };
    let cost = |i: usize, j: usize| -> f64 {
        if transposed {
            -weights[j][i]
        } else {
            -weights[i][j]
        }
    };
    // 1-based arrays; column 0 is a virtual start node
    let mut u = vec![0.0; rows + 1];
    let mut v = vec![0.0; cols + 1];
    let mut owner = vec![0usize; cols + 1];
    let mut way = vec![0usize; cols + 1];
    for i in 1..=rows {
        owner[0] = i;
        let mut j0 = 0;
        let mut minv = vec![f64::INFINITY; cols + 1];
        let mut used = vec![false; cols + 1];
        loop {
            used[j0] = true;
            let i0 = owner[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0;
            for j in 1..=cols {
                if used[j] {
                    continue;
                }
                let cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if cur < minv[j] {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if minv[j] < delta {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for j in 0..=cols {
                if used[j] {
                    u[owner[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if owner[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            owner[j0] = owner[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut matching: Vec<(usize, usize)> = (1..=cols)
        .filter(|&j| owner[j] != 0)
        .map(|j| {
            let (i, j) = (owner[j] - 1, j - 1);
            if transposed {
                (j, i)
            } else {
                (i, j)
            }
        })
        .collect();
    matching.sort_unstable();
    let total = matching.iter().map(|&(i, j)| weights[i][j]).sum();
    (matching, total)
}

/// Column vectors are sums of their tokens' embeddings; the tabular score
/// is the maximum-weight column matching under cosine, divided by the
/// smaller column count. The caption score is the cosine of summed caption
/// embeddings. The result is the mean of both.
pub fn google_fusion_score(q: &RawTable, r: &RawTable, vectors: &WordVectors) -> MethodScore {
    let columns = |t: &RawTable| -> Vec<Vec<f64>> {
        (0..t.n_cols())
            .map(|k| {
                let tokens: Vec<String> = t.column(k).iter().flat_map(|c| crate::table::tokenize(c)).collect();
                sum_embedding(&tokens, vectors)
            })
            .collect()
    };
    let (cq, cr) = (columns(q), columns(r));
    let tabular = if cq.is_empty() || cr.is_empty() {
        0.0
    } else {
        let w: Vec<Vec<f64>> = cq.iter().map(|a| cr.iter().map(|b| cosine(a, b)).collect()).collect();
        hungarian_max_matching(&w).1 / cq.len().min(cr.len()) as f64
    };
    let caption = cosine(
        &sum_embedding(&q.caption_tokens(), vectors),
        &sum_embedding(&r.caption_tokens(), vectors),
    );
    MethodScore::similarity(0.5 * (tabular + caption))
}

/// Document frequencies over a document collection.
#[derive(Debug, Clone, PartialEq)]
pub struct TfIdfModel {
    pub n_docs: usize,
    /// term -> (feature index, document frequency); indices follow sorted
    /// term order.
    terms: HashMap<String, (usize, usize)>,
}

impl TfIdfModel {
    pub fn dim(&self) -> usize {
        self.terms.len()
    }

    pub fn idf(&self, term: &str) -> Option<f64> {
        self.terms
            .get(term)
            .map(|&(_, df)| (self.n_docs as f64 / df as f64).ln())
    }
}

pub fn tfidf_fit<'a>(documents: impl IntoIterator<Item = &'a [String]>) -> TfIdfModel {
    let mut df: HashMap<&str, usize> = HashMap::new();
    let mut n_docs = 0;
    for doc in documents {
        n_docs += 1;
        let distinct: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
        for t in distinct {
            *df.entry(t).or_insert(0) += 1;
        }
    }
    let mut sorted: Vec<(&str, usize)> = df.into_iter().collect();
    sorted.sort_unstable();
    let terms = sorted
        .into_iter()
        .enumerate()
        .map(|(i, (t, d))| (t.to_string(), (i, d)))
        .collect();
    TfIdfModel { n_docs, terms }
}

/// Sparse `(feature index, tf * idf)` entries sorted by index; raw term
/// counts as tf, terms unknown to the model dropped.
pub fn tfidf_vector(model: &TfIdfModel, tokens: &[String]) -> Vec<(usize, f64)> {
    let mut counts: HashMap<usize, (f64, usize)> = HashMap::new();
    for t in tokens {
        if let Some(&(i, df)) = model.terms.get(t) {
            counts.entry(i).or_insert((0.0, df)).0 += 1.0;
        }
    }
    let mut out: Vec<(usize, f64)> = counts
        .into_iter()
        .map(|(i, (tf, df))| (i, tf * (model.n_docs as f64 / df as f64).ln()))
        .collect();
    out.sort_unstable_by_key(|e| e.0);
    out
}

fn dense(model: &TfIdfModel, tokens: &[String], vectors: &WordVectors) -> Vec<f64> {
    let mut v = vec![0.0; model.dim()];
    for (i, w) in tfidf_vector(model, tokens) {
        v[i] = w;
    }
    v.extend(avg_embedding(tokens, vectors));
    v
}

/// `|cap_Q - cap_R| ⊕ |content_Q - content_R|`, each side being the tf·idf
/// vector followed by the averaged embedding.
pub fn pair_features(q: &RawTable, r: &RawTable, tfidf: &TfIdfModel, vectors: &WordVectors) -> Vec<f64> {
    let diff = |a: Vec<f64>, b: Vec<f64>| a.into_iter().zip(b).map(|(x, y)| (x - y).abs()).collect::<Vec<_>>();
    let mut out = diff(
        dense(tfidf, &q.caption_tokens(), vectors),
        dense(tfidf, &r.caption_tokens(), vectors),
    );
    out.extend(diff(
        dense(tfidf, &q.content_tokens(), vectors),
        dense(tfidf, &r.content_tokens(), vectors),
    ));
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrConfig {
    /// L2 strength; `None` uses `1 / n_examples`.
    pub l2: Option<f64>,
    pub tolerance: f64,
    pub max_iter: usize,
}

impl Default for LrConfig {
    fn default() -> Self {
        Self {
            l2: None,
            tolerance: 1e-6,
            max_iter: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub l2: f64,
    pub iterations: usize,
    pub trained: bool,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean logistic loss plus `l2/2 * |w|^2` (bias unregularized) and its
/// gradient `(dw, db)`. `labels` are 1 for the positive class.
pub fn lr_objective(
    features: &[Vec<f64>],
    labels: &[f64],
    weights: &[f64],
    bias: f64,
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = features.len() as f64;
    let mut loss = 0.0;
    let mut gw = vec![0.0; weights.len()];
    let mut gb = 0.0;
    for (x, &y) in features.iter().zip(labels) {
        let z = x.iter().zip(weights).map(|(a, b)| a * b).sum::<f64>() + bias;
        // log(1 + e^z) - y z, computed stably
        loss += z.max(0.0) + (-z.abs()).exp().ln_1p() - y * z;
        let r = sigmoid(z) - y;
        gw.iter_mut().zip(x).for_each(|(g, xi)| *g += r * xi);
        gb += r;
    }
    let reg: f64 = weights.iter().map(|w| w * w).sum::<f64>();
    gw.iter_mut().zip(weights).for_each(|(g, w)| *g = *g / n + l2 * w);
    (loss / n + 0.5 * l2 * reg, gw, gb / n)
}

/// Full-batch gradient descent with step `1/L`, `L = |X|_F^2 / (4n) + l2`
/// (an upper bound on the gradient's Lipschitz constant, bias column
/// included), until the gradient norm drops below the tolerance.
pub fn lr_train(features: &[Vec<f64>], positive: &[bool], config: &LrConfig) -> Result<LrModel> {
    if features.len() != positive.len() || features.is_empty() {
        return Err(Error::Validation(
            "logistic regression needs matching, nonempty inputs".into(),
        ));
    }
    if positive.iter().all(|&p| p) || positive.iter().all(|&p| !p) {
        return Err(Error::Validation("logistic regression needs both classes".into()));
    }
    let n = features.len();
    let p = features[0].len();
    if features.iter().any(|x| x.len() != p) {
        return Err(Error::Validation("feature vectors differ in length".into()));
    }
    let l2 = config.l2.unwrap_or(1.0 / n as f64);
    let labels: Vec<f64> = positive.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
    let frob: f64 = features.iter().flatten().map(|x| x * x).sum::<f64>() + n as f64;
    let step = 1.0 / (frob / (4.0 * n as f64) + l2);
    let mut w = vec![0.0; p];
    let mut b = 0.0;
    let mut iterations = 0;
    for _ in 0..config.max_iter {
        let (_, gw, gb) = lr_objective(features, &labels, &w, b, l2);
        let norm = (gw.iter().map(|g| g * g).sum::<f64>() + gb * gb).sqrt();
        if norm < config.tolerance {
            break;
        }
        w.iter_mut().zip(&gw).for_each(|(wi, g)| *wi -= step * g);
        b -= step * gb;
        iterations += 1;
    }
    if !(w.iter().all(|x| x.is_finite()) && b.is_finite()) {
        return Err(Error::Validation("logistic regression diverged".into()));
    }
    Ok(LrModel {
        weights: w,
        bias: b,
        l2,
        iterations,
        trained: true,
    })
}

/// Probability of the positive (similar) class.
pub fn lr_score(model: &LrModel, features: &[f64]) -> MethodScore {
    let z = features.iter().zip(&model.weights).map(|(a, b)| a * b).sum::<f64>() + model.bias;
    MethodScore::similarity(sigmoid(z))
}
