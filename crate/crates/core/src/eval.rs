//! k-fold cross-validation of TabSim and the baselines: classification
//! metrics at each method's fixed threshold and NDCG over query groups.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use tablesim_tensor::Tensor;

use crate::baselines::{
    google_fusion_score, lr_score, lr_train, pair_features, table_cosine, table_jaccard, tfidf_fit, LrConfig,
    MethodScore, ScoreOrientation,
};
use crate::corpus::{kfold_split, Corpus, Label};
use crate::embeddings::{
    corpus_pairs, load_pretrained, random_embeddings, train_skipgram, EmbeddingFile, SkipgramConfig, WordVectors,
};
use crate::error::{Error, Result};
use crate::layers::TabularVariant;
use crate::metrics::{error_overlap, ndcg_at_k, prf_macro, roc_auc, roc_points, ErrorOverlap, GainKind};
use crate::siamese::{train, ModelConfig, TabSimModel, TrainConfig};
use crate::table::{encode_table, EncodedTable, RawTable};
use crate::vocab::{build_vocab, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Tabsim,
    TabsimL,
    Jaccard,
    Cosine,
    Fusion,
    Lr,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Tabsim,
        Method::TabsimL,
        Method::Jaccard,
        Method::Cosine,
        Method::Fusion,
        Method::Lr,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Tabsim => "tabsim",
            Method::TabsimL => "tabsim_l",
            Method::Jaccard => "jaccard",
            Method::Cosine => "cosine",
            Method::Fusion => "fusion",
            Method::Lr => "lr",
        }
    }

    fn needs_vectors(self) -> bool {
        !matches!(self, Method::Jaccard)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL.into_iter().find(|m| m.name() == s).ok_or_else(|| {
            let valid: Vec<&str> = Method::ALL.iter().map(|m| m.name()).collect();
            Error::Config(format!("unknown method {s:?}; valid methods: {}", valid.join(", ")))
        })
    }
}

/// How the embedding matrix is initialized (and which word vectors the
/// embedding baselines see).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingStrategy {
    Random,
    File,
    TableSkipgram,
    ColumnSkipgram,
}

impl EmbeddingStrategy {
    pub const ALL: [EmbeddingStrategy; 4] = [
        EmbeddingStrategy::Random,
        EmbeddingStrategy::File,
        EmbeddingStrategy::TableSkipgram,
        EmbeddingStrategy::ColumnSkipgram,
    ];

    pub fn name(self) -> &'static str {
        match self {
            EmbeddingStrategy::Random => "random",
            EmbeddingStrategy::File => "file",
            EmbeddingStrategy::TableSkipgram => "table_skipgram",
            EmbeddingStrategy::ColumnSkipgram => "column_skipgram",
        }
    }
}

impl FromStr for EmbeddingStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        EmbeddingStrategy::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| {
                let valid: Vec<&str> = EmbeddingStrategy::ALL.iter().map(|m| m.name()).collect();
                Error::Config(format!(
                    "unknown embedding strategy {s:?}; valid strategies: {}",
                    valid.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSource {
    pub strategy: EmbeddingStrategy,
    /// Required by the `file` strategy.
    pub file: Option<EmbeddingFile>,
    /// Used by the skip-gram strategies; `dim` is overridden by the
    /// model's embedding size.
    pub skipgram: SkipgramConfig,
}

impl EmbeddingSource {
    pub fn random() -> Self {
        Self {
            strategy: EmbeddingStrategy::Random,
            file: None,
            skipgram: SkipgramConfig::default(),
        }
    }

    pub fn from_file(file: EmbeddingFile) -> Self {
        Self {
            strategy: EmbeddingStrategy::File,
            file: Some(file),
            skipgram: SkipgramConfig::default(),
        }
    }

    /// Initial embedding matrix for `vocab` plus the lookup used by the
    /// embedding baselines. Skip-gram strategies train on `tables` only.
    pub fn build(
        &self,
        vocab: &Vocabulary,
        tables: &[EncodedTable],
        dim: usize,
        seed: u64,
    ) -> Result<(Tensor, WordVectors)> {
        match self.strategy {
            EmbeddingStrategy::Random => {
                let m = random_embeddings(vocab.len(), dim, seed);
                let v = WordVectors::from_matrix(vocab, &m);
                Ok((m, v))
            }
            EmbeddingStrategy::File => {
                let file = self
                    .file
                    .as_ref()
                    .ok_or_else(|| Error::Config("embedding strategy file needs an embedding file".into()))?;
                Ok((load_pretrained(file, vocab, dim, seed)?, WordVectors::from_file(file)))
            }
            EmbeddingStrategy::TableSkipgram | EmbeddingStrategy::ColumnSkipgram => {
                let cfg = SkipgramConfig {
                    dim,
                    ..self.skipgram.clone()
                };
                let column = self.strategy == EmbeddingStrategy::ColumnSkipgram;
                let pairs = corpus_pairs(tables, &cfg, column);
                let m = train_skipgram(&pairs, vocab.len(), &cfg)?;
                let v = WordVectors::from_matrix(vocab, &m);
                Ok((m, v))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub methods: Vec<Method>,
    pub k_folds: usize,
    /// Seeds the fold assignment.
    pub seed: u64,
    /// Shared by both TabSim methods; the variant is set per method.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub lr: LrConfig,
    pub gain: GainKind,
    /// Evaluate folds on separate threads.
    pub parallel: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            methods: vec![Method::Tabsim, Method::Jaccard],
            k_folds: 5,
            seed: 0,
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            lr: LrConfig::default(),
            gain: GainKind::Exponential,
            parallel: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldMetrics {
    pub fold: usize,
    pub test_pairs: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    /// Absent when the test fold holds a single class.
    pub auc: Option<f64>,
    /// Absent when no group has two or more candidates in the test fold.
    pub ndcg5: Option<f64>,
    pub ndcg10: Option<f64>,
    pub ranked_groups: usize,
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub auc: Option<f64>,
    pub ndcg5: Option<f64>,
    pub ndcg10: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: Method,
    pub orientation: ScoreOrientation,
    pub threshold: f64,
    pub folds: Vec<FoldMetrics>,
    pub mean: MeanMetrics,
    /// Keys of similar pairs predicted dissimilar, over all folds.
    pub false_negatives: BTreeSet<String>,
    pub false_positives: BTreeSet<String>,
    /// ROC points over the pooled test scores of all folds.
    pub roc: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub k_folds: usize,
    pub seed: u64,
    pub pairs: usize,
    pub gain: GainKind,
    pub methods: Vec<MethodReport>,
    pub error_overlap: ErrorOverlap,
}

impl EvalReport {
    pub fn method(&self, m: Method) -> Option<&MethodReport> {
        self.methods.iter().find(|r| r.method == m)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One tab-separated row per method with the fold means; absent values
    /// print as `-`.
    pub fn summary_tsv(&self) -> String {
        let mut out = String::from("method\tprecision\trecall\tf1\taccuracy\tauc\tndcg5\tndcg10\n");
        let opt = |v: Option<f64>| v.map_or("-".to_string(), |x| format!("{x:.6}"));
        for r in &self.methods {
            let m = &r.mean;
            out.push_str(&format!(
                "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}\n",
                r.method,
                m.precision,
                m.recall,
                m.f1,
                m.accuracy,
                opt(m.auc),
                opt(m.ndcg5),
                opt(m.ndcg10)
            ));
        }
        out
    }
}

/// Test-fold scores of one method in one fold, aligned with the fold's
/// test pairs.
struct FoldScores {
    scores: Vec<MethodScore>,
    loss_history: Vec<f64>,
}

struct Fold<'c> {
    corpus: &'c Corpus,
    train: Vec<usize>,
    test: Vec<usize>,
}

impl Fold<'_> {
    fn raw(&self, i: usize) -> Result<(&RawTable, &RawTable)> {
        let p = &self.corpus.pairs[i];
        Ok((self.corpus.require(&p.query_id)?, self.corpus.require(&p.cand_id)?))
    }

    fn training_tables(&self) -> Result<Vec<&RawTable>> {
        pair_tables(self.corpus, &self.train)
    }
}

/// Distinct tables of the pairs at `indices`, in first-use order.
pub fn pair_tables<'c>(corpus: &'c Corpus, indices: &[usize]) -> Result<Vec<&'c RawTable>> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for &i in indices {
        let p = &corpus.pairs[i];
        for id in [&p.query_id, &p.cand_id] {
            let t = corpus.require(id)?;
            if seen.insert(t.id.as_str()) {
                out.push(t);
            }
        }
    }
    Ok(out)
}

/// Fold-local resources shared by the methods.
struct FoldContext {
    vocab: Vocabulary,
    init: Option<Tensor>,
    vectors: Option<WordVectors>,
}

fn fold_context(fold: &Fold<'_>, config: &EvalConfig, source: &EmbeddingSource) -> Result<FoldContext> {
    let tables = fold.training_tables()?;
    let vocab = build_vocab(tables.iter().copied());
    if !config.methods.iter().any(|m| m.needs_vectors()) {
        return Ok(FoldContext {
            vocab,
            init: None,
            vectors: None,
        });
    }
    let encoded: Vec<EncodedTable> = tables
        .iter()
        .map(|t| encode_table(t, &vocab, &config.model.shape))
        .collect();
    let (init, vectors) = source.build(&vocab, &encoded, config.model.embed_dim, config.model.seed)?;
    Ok(FoldContext {
        vocab,
        init: Some(init),
        vectors: Some(vectors),
    })
}

fn score_tabsim(
    fold: &Fold<'_>,
    ctx: &FoldContext,
    config: &EvalConfig,
    variant: TabularVariant,
) -> Result<FoldScores> {
    let model_cfg = ModelConfig {
        variant,
        ..config.model
    };
    let mut model = TabSimModel::new(model_cfg, ctx.vocab.clone(), ctx.init.clone())?;
    let encode = |idx: &[usize]| -> Result<Vec<(EncodedTable, EncodedTable, Label)>> {
        idx.iter()
            .map(|&i| {
                let (q, c) = fold.raw(i)?;
                Ok((model.encode(q), model.encode(c), fold.corpus.pairs[i].label))
            })
            .collect()
    };
    let train_enc = encode(&fold.train)?;
    let test_enc = encode(&fold.test)?;
    let refs: Vec<(&EncodedTable, &EncodedTable, Label)> = train_enc.iter().map(|(a, b, l)| (a, b, *l)).collect();
    let loss_history = train(&mut model, &refs, &config.train)?;
    let pairs: Vec<(&EncodedTable, &EncodedTable)> = test_enc.iter().map(|(a, b, _)| (a, b)).collect();
    let scores = model
        .distances(&pairs)?
        .into_iter()
        .map(MethodScore::distance)
        .collect();
    Ok(FoldScores { scores, loss_history })
}

fn score_lr(fold: &Fold<'_>, vectors: &WordVectors, config: &EvalConfig) -> Result<FoldScores> {
    let tables = fold.training_tables()?;
    let docs: Vec<Vec<String>> = tables
        .iter()
        .flat_map(|t| [t.caption_tokens(), t.content_tokens()])
        .collect();
    let tfidf = tfidf_fit(docs.iter().map(Vec::as_slice));
    let features = |idx: &[usize]| -> Result<Vec<Vec<f64>>> {
        idx.iter()
            .map(|&i| {
                let (q, c) = fold.raw(i)?;
                Ok(pair_features(q, c, &tfidf, vectors))
            })
            .collect()
    };
    let positive: Vec<bool> = fold
        .train
        .iter()
        .map(|&i| fold.corpus.pairs[i].label == Label::Similar)
        .collect();
    let model = lr_train(&features(&fold.train)?, &positive, &config.lr)?;
    let scores = features(&fold.test)?.iter().map(|x| lr_score(&model, x)).collect();
    Ok(FoldScores {
        scores,
        loss_history: Vec::new(),
    })
}

fn score_method(method: Method, fold: &Fold<'_>, ctx: &FoldContext, config: &EvalConfig) -> Result<FoldScores> {
    let vectors = || ctx.vectors.as_ref().expect("vectors built for embedding methods");
    let pointwise = |f: &dyn Fn(&RawTable, &RawTable) -> MethodScore| -> Result<FoldScores> {
        let scores = fold
            .test
            .iter()
            .map(|&i| fold.raw(i).map(|(q, c)| f(q, c)))
            .collect::<Result<Vec<_>>>()?;
        Ok(FoldScores {
            scores,
            loss_history: Vec::new(),
        })
    };
    match method {
        Method::Tabsim => score_tabsim(fold, ctx, config, TabularVariant::Attention),
        Method::TabsimL => score_tabsim(fold, ctx, config, TabularVariant::SequenceL),
        Method::Jaccard => pointwise(&table_jaccard),
        Method::Cosine => pointwise(&|q, c| table_cosine(q, c, vectors())),
        Method::Fusion => pointwise(&|q, c| google_fusion_score(q, c, vectors())),
        Method::Lr => score_lr(fold, vectors(), config),
    }
}

fn threshold(method: Method, config: &EvalConfig) -> f64 {
    match method {
        Method::Tabsim | Method::TabsimL => config.model.margin / 2.0,
        _ => 0.5,
    }
}

/// Distances below the threshold and similarities at or above it are
/// classified similar.
fn predict(score: &MethodScore, threshold: f64) -> Label {
    let similar = match score.orientation {
        ScoreOrientation::DistanceLowIsSimilar => score.value < threshold,
        ScoreOrientation::SimilarityHighIsSimilar => score.value >= threshold,
    };
    if similar {
        Label::Similar
    } else {
        Label::Dissimilar
    }
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// Mean NDCG@5 and NDCG@10 over the groups with at least two candidates
/// among the fold's test pairs, ranking by score (ties by candidate id).
fn fold_ndcg(
    corpus: &Corpus,
    test: &[usize],
    scores: &[MethodScore],
    gain: GainKind,
) -> (Option<f64>, Option<f64>, usize) {
    let at: HashMap<(String, String), usize> = test
        .iter()
        .enumerate()
        .map(|(pos, &i)| (unordered(&corpus.pairs[i].query_id, &corpus.pairs[i].cand_id), pos))
        .collect();
    let (mut n5, mut n10, mut groups) = (0.0, 0.0, 0);
    for g in &corpus.groups {
        let mut ranked: Vec<(f64, &str, u32)> = g
            .candidate_ids
            .iter()
            .zip(&g.gains)
            .filter_map(|(c, &gain)| {
                at.get(&unordered(&g.query_id, c))
                    .map(|&pos| (scores[pos].oriented(), c.as_str(), gain))
            })
            .collect();
        if ranked.len() < 2 {
            continue;
        }
        ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
        let gains: Vec<u32> = ranked.iter().map(|r| r.2).collect();
        n5 += ndcg_at_k(&gains, 5, gain);
        n10 += ndcg_at_k(&gains, 10, gain);
        groups += 1;
    }
    if groups == 0 {
        (None, None, 0)
    } else {
        (Some(n5 / groups as f64), Some(n10 / groups as f64), groups)
    }
}

/// Metrics, test scores and predictions of every method on one fold.
type FoldOutcome = Vec<(FoldMetrics, Vec<MethodScore>, Vec<Label>)>;

fn run_fold(fold_idx: usize, fold: &Fold<'_>, config: &EvalConfig, source: &EmbeddingSource) -> Result<FoldOutcome> {
    let ctx = fold_context(fold, config, source)?;
    let gold: Vec<Label> = fold.test.iter().map(|&i| fold.corpus.pairs[i].label).collect();
    let mut out = Vec::with_capacity(config.methods.len());
    for &method in &config.methods {
        let FoldScores { scores, loss_history } = score_method(method, fold, &ctx, config)?;
        let t = threshold(method, config);
        let predictions: Vec<Label> = scores.iter().map(|s| predict(s, t)).collect();
        let prf = prf_macro(&predictions, &gold)?;
        let (ndcg5, ndcg10, ranked_groups) = fold_ndcg(fold.corpus, &fold.test, &scores, config.gain);
        let metrics = FoldMetrics {
            fold: fold_idx,
            test_pairs: gold.len(),
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            accuracy: prf.accuracy,
            auc: roc_auc(&scores, &gold).ok(),
            ndcg5,
            ndcg10,
            ranked_groups,
            loss_history,
        };
        out.push((metrics, scores, predictions));
    }
    Ok(out)
}

fn mean_of(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.flatten().collect();
    (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64)
}

/// Cross-validates every configured method over the corpus pairs.
pub fn evaluate_cv(corpus: &Corpus, config: &EvalConfig, source: &EmbeddingSource) -> Result<EvalReport> {
    if config.methods.is_empty() {
        return Err(Error::Config("no methods to evaluate".into()));
    }
    if corpus.pairs.is_empty() {
        return Err(Error::Validation("corpus has no labeled pairs".into()));
    }
    config.model.validate()?;
    config.train.validate()?;
    let split = kfold_split(corpus.pairs.len(), config.k_folds, config.seed)?;
    let folds: Vec<Fold<'_>> = (0..config.k_folds)
        .map(|f| Fold {
            corpus,
            train: split.train_indices(f),
            test: split.test_indices(f),
        })
        .collect();

    let outcomes: Vec<FoldOutcome> = if config.parallel {
        std::thread::scope(|s| {
            let handles: Vec<_> = folds
                .iter()
                .enumerate()
                .map(|(i, fold)| s.spawn(move || run_fold(i, fold, config, source)))
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("fold worker panicked"))
                .collect::<Result<Vec<_>>>()
        })?
    } else {
        folds
            .iter()
            .enumerate()
            .map(|(i, fold)| run_fold(i, fold, config, source))
            .collect::<Result<Vec<_>>>()?
    };

    let mut reports = Vec::with_capacity(config.methods.len());
    for (m_idx, &method) in config.methods.iter().enumerate() {
        let mut fold_metrics = Vec::with_capacity(folds.len());
        let mut fns = BTreeSet::new();
        let mut fps = BTreeSet::new();
        let mut pooled_scores = Vec::new();
        let mut pooled_gold = Vec::new();
        for (fold, outcome) in folds.iter().zip(&outcomes) {
            let (metrics, scores, predictions) = &outcome[m_idx];
            for ((&i, s), &p) in fold.test.iter().zip(scores).zip(predictions) {
                let pair = &corpus.pairs[i];
                match (pair.label, p) {
                    (Label::Similar, Label::Dissimilar) => {
                        fns.insert(pair.key());
                    }
                    (Label::Dissimilar, Label::Similar) => {
                        fps.insert(pair.key());
                    }
                    _ => {}
                }
                pooled_scores.push(*s);
                pooled_gold.push(pair.label);
            }
            fold_metrics.push(metrics.clone());
        }
        let n = fold_metrics.len() as f64;
        let avg = |f: fn(&FoldMetrics) -> f64| fold_metrics.iter().map(f).sum::<f64>() / n;
        let mean = MeanMetrics {
            precision: avg(|m| m.precision),
            recall: avg(|m| m.recall),
            f1: avg(|m| m.f1),
            accuracy: avg(|m| m.accuracy),
            auc: mean_of(fold_metrics.iter().map(|m| m.auc)),
            ndcg5: mean_of(fold_metrics.iter().map(|m| m.ndcg5)),
            ndcg10: mean_of(fold_metrics.iter().map(|m| m.ndcg10)),
        };
        let orientation = pooled_scores
            .first()
            .map_or(ScoreOrientation::SimilarityHighIsSimilar, |s| s.orientation);
        reports.push(MethodReport {
            method,
            orientation,
            threshold: threshold(method, config),
            folds: fold_metrics,
            mean,
            false_negatives: fns,
            false_positives: fps,
            roc: roc_points(&pooled_scores, &pooled_gold),
        });
    }
    let errors: Vec<(String, BTreeSet<String>, BTreeSet<String>)> = reports
        .iter()
        .map(|r| {
            (
                r.method.name().to_string(),
                r.false_negatives.clone(),
                r.false_positives.clone(),
            )
        })
        .collect();
    Ok(EvalReport {
        k_folds: config.k_folds,
        seed: config.seed,
        pairs: corpus.pairs.len(),
        gain: config.gain,
        error_overlap: error_overlap(&errors),
        methods: reports,
    })
}
