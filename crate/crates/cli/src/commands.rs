use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use tablesim_core::checkpoint::{self, TrainingMetadata};
use tablesim_core::corpus::{kfold_split, load_corpus, Corpus, Label};
use tablesim_core::embeddings::EmbeddingFile;
use tablesim_core::eval::{evaluate_cv, pair_tables};
use tablesim_core::siamese::{train as train_model, TabSimModel};
use tablesim_core::synthetic::{generate_synthetic_document, synonym_embedding_file};
use tablesim_core::table::{encode_table, EncodedTable, RawTable};
use tablesim_core::vocab::build_vocab;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn out_dir(cfg: &RunConfig) -> CliResult<&Path> {
    let dir = cfg.run.out.as_path();
    std::fs::create_dir_all(dir).map_err(|e| CliError::Data(format!("cannot create {}: {e}", dir.display())))?;
    Ok(dir)
}

fn corpus(cfg: &RunConfig) -> CliResult<Corpus> {
    Ok(load_corpus(cfg.corpus_path()?)?)
}

fn checkpoint_path(cfg: &RunConfig, flag: Option<PathBuf>) -> CliResult<PathBuf> {
    let path = flag.unwrap_or_else(|| cfg.run.out.join("model.ckpt"));
    if !path.exists() {
        return Err(CliError::Config(format!(
            "checkpoint {} does not exist",
            path.display()
        )));
    }
    Ok(path)
}

/// Trains on all pairs, or on one fold's training split when `train.fold`
/// is set, and writes `model.ckpt` and `loss.tsv`.
pub fn train(cfg: &RunConfig) -> CliResult<()> {
    let corpus = corpus(cfg)?;
    let model_cfg = cfg.model()?;
    let train_cfg = cfg.train()?;
    let source = cfg.embedding_source()?;
    let indices: Vec<usize> = match cfg.train.fold {
        Some(f) => {
            if f >= cfg.eval.k_folds {
                return Err(CliError::Config(format!(
                    "train.fold {f} is not below eval.k_folds {}",
                    cfg.eval.k_folds
                )));
            }
            kfold_split(corpus.pairs.len(), cfg.eval.k_folds, model_cfg.seed)?.train_indices(f)
        }
        None => (0..corpus.pairs.len()).collect(),
    };
    let tables = pair_tables(&corpus, &indices)?;
    let vocab = build_vocab(tables.iter().copied());
    let encoded: Vec<EncodedTable> = tables
        .iter()
        .map(|t| encode_table(t, &vocab, &model_cfg.shape))
        .collect();
    let (init, _) = source.build(&vocab, &encoded, model_cfg.embed_dim, model_cfg.seed)?;
    let mut model = TabSimModel::new(model_cfg, vocab, Some(init))?;

    let pairs = indices
        .iter()
        .map(|&i| {
            let p = &corpus.pairs[i];
            let q = model.encode(corpus.require(&p.query_id)?);
            let c = model.encode(corpus.require(&p.cand_id)?);
            Ok((q, c, p.label))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let refs: Vec<(&EncodedTable, &EncodedTable, Label)> = pairs.iter().map(|(q, c, l)| (q, c, *l)).collect();
    let history = train_model(&mut model, &refs, &train_cfg)?;

    let dir = out_dir(cfg)?;
    let meta = TrainingMetadata {
        train: Some(train_cfg),
        pairs: refs.len(),
        loss_history: history.clone(),
    };
    let ckpt = dir.join("model.ckpt");
    checkpoint::save(&ckpt, &model, &meta)?;
    let mut losses = String::from("epoch\tloss\n");
    for (e, l) in history.iter().enumerate() {
        let _ = writeln!(losses, "{}\t{l:?}", e + 1);
    }
    write_file(&dir.join("loss.tsv"), losses)?;
    match history.last() {
        Some(l) => println!(
            "trained on {} pairs for {} epochs, final loss {l:.6}",
            refs.len(),
            history.len()
        ),
        None => println!("no training epochs run"),
    }
    println!("wrote {}", ckpt.display());
    Ok(())
}

fn load_model(cfg: &RunConfig, flag: Option<PathBuf>) -> CliResult<TabSimModel> {
    Ok(checkpoint::load(checkpoint_path(cfg, flag)?)?.0)
}

/// Prints the distance with 17 significant digits and the label at m/2.
pub fn score(cfg: &RunConfig, checkpoint: Option<PathBuf>, a: &str, b: &str) -> CliResult<()> {
    let model = load_model(cfg, checkpoint)?;
    let corpus = corpus(cfg)?;
    let (ta, tb) = (corpus.require(a)?, corpus.require(b)?);
    let d = model.distance(&model.encode(ta), &model.encode(tb))?;
    println!("{d:.16e}\t{}", model.classify(d).as_str());
    Ok(())
}

/// Ranks every other corpus table by distance to `query`.
pub fn rank(cfg: &RunConfig, checkpoint: Option<PathBuf>, query: &str, top: Option<usize>) -> CliResult<()> {
    let model = load_model(cfg, checkpoint)?;
    let corpus = corpus(cfg)?;
    let q = model.encode(corpus.require(query)?);
    let candidates: Vec<(String, EncodedTable)> = corpus
        .tables()
        .iter()
        .filter(|t| t.id != query)
        .map(|t| (t.id.clone(), model.encode(t)))
        .collect();
    let ranked = model.rank_candidates(&q, &candidates)?;
    let mut out = String::from("rank\ttable\tdistance\tlabel\n");
    for (i, (id, d)) in ranked.iter().take(top.unwrap_or(usize::MAX)).enumerate() {
        let _ = writeln!(out, "{}\t{id}\t{d:.16e}\t{}", i + 1, model.classify(*d).as_str());
    }
    print!("{out}");
    Ok(())
}

/// Cross-validates the configured methods; writes the full report, one
/// report per method, the error-overlap summary and a TSV summary.
pub fn eval(cfg: &RunConfig, parallel: bool) -> CliResult<()> {
    let eval_cfg = cfg.eval(parallel)?;
    let source = cfg.embedding_source()?;
    let corpus = corpus(cfg)?;
    let report = evaluate_cv(&corpus, &eval_cfg, &source)?;
    let dir = out_dir(cfg)?;
    write_file(&dir.join("eval.json"), report.to_json())?;
    for m in &report.methods {
        write_file(&dir.join(format!("report-{}.json", m.method)), pretty_json(m))?;
    }
    write_file(&dir.join("error_overlap.json"), pretty_json(&report.error_overlap))?;
    let summary = report.summary_tsv();
    write_file(&dir.join("summary.tsv"), &summary)?;
    print!("{summary}");
    Ok(())
}

/// Pretty JSON with a trailing newline.
fn pretty_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

/// Writes `corpus.json` and, with `vectors`, the matching synonym-aware
/// word vectors as `vectors.txt` (dimension `model.embed_dim`).
pub fn gen_synthetic(cfg: &RunConfig, vectors: bool) -> CliResult<()> {
    let seed = cfg.seed()?;
    let s = &cfg.synthetic;
    if s.queries == 0 || s.candidates == 0 {
        return Err(CliError::Config(
            "synthetic.queries and synthetic.candidates must be positive".into(),
        ));
    }
    let doc = generate_synthetic_document(s.queries, s.candidates, s.topics, seed);
    let dir = out_dir(cfg)?;
    let path = dir.join("corpus.json");
    write_file(&path, doc.to_json())?;
    println!(
        "wrote {} ({} tables, {} pairs)",
        path.display(),
        doc.tables.len(),
        doc.pairs.len()
    );
    if vectors {
        if cfg.model.embed_dim == 0 {
            return Err(CliError::Config("model.embed_dim must be positive".into()));
        }
        let path = dir.join("vectors.txt");
        synonym_embedding_file(&doc.synonyms, cfg.model.embed_dim, seed).write(&path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

/// Builds the embedding matrix of the corpus vocabulary under the
/// configured strategy and writes it as `embeddings.txt`.
pub fn train_embeddings(cfg: &RunConfig) -> CliResult<()> {
    let source = cfg.embedding_source()?;
    let seed = cfg.seed()?;
    let corpus = corpus(cfg)?;
    let tables: Vec<&RawTable> = corpus.tables().iter().collect();
    let vocab = build_vocab(tables.iter().copied());
    let encoded: Vec<EncodedTable> = tables.iter().map(|t| encode_table(t, &vocab, &cfg.shape)).collect();
    let (matrix, _) = source.build(&vocab, &encoded, cfg.model.embed_dim, seed)?;
    let dir = out_dir(cfg)?;
    let path = dir.join("embeddings.txt");
    EmbeddingFile::from_matrix(&vocab, &matrix).write(&path)?;
    println!(
        "wrote {} ({} tokens, strategy {})",
        path.display(),
        vocab.len(),
        source.strategy.name()
    );
    Ok(())
}
