use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tablesim_core::baselines::{hungarian_max_matching, MethodScore};
use tablesim_core::corpus::Label;
use tablesim_core::layers::{AttentionParams, BiLstmParams, EmbeddingParams, LstmParams, MlpParams, TabularVariant};
use tablesim_core::metrics::{fleiss_kappa, ndcg_at_k, prf_macro, roc_auc, GainKind};
use tablesim_core::siamese::{ModelConfig, TabSimModel};
use tablesim_core::synthetic::generate_synthetic_corpus;
use tablesim_core::table::{EncodedTable, ShapeConfig};
use tablesim_core::vocab::build_vocab;
use tablesim_tensor::gradcheck::{GradCheck, GradCheckReport};
use tablesim_tensor::{Mode, ParamId, ParamStore, Tape, Tensor, Var};

use super::oracles;

pub fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap()
}

// ---- symmetry ----

pub struct SymmetryReport {
    pub pairs: usize,
    pub asymmetric: usize,
    pub nonzero_self: usize,
}

/// Random pairs of synthetic tables under a randomly initialized model:
/// counts pairs with `D(Q,R) != D(R,Q)` (bitwise) and tables with
/// `D(Q,Q) != 0`.
pub fn symmetry(pairs: usize, variant: TabularVariant, seed: u64) -> SymmetryReport {
    let corpus = generate_synthetic_corpus(60, 4, 8, seed).unwrap();
    let config = ModelConfig {
        embed_dim: 16,
        hidden: 8,
        mlp_out: 16,
        variant,
        seed,
        ..Default::default()
    };
    let vocab = build_vocab(corpus.tables());
    let model = TabSimModel::new(config, vocab, None).unwrap();
    let encoded: Vec<EncodedTable> = corpus.tables().iter().map(|t| model.encode(t)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = SymmetryReport {
        pairs,
        asymmetric: 0,
        nonzero_self: 0,
    };
    for _ in 0..pairs {
        let a = rng.gen_range(0..encoded.len());
        let b = (a + rng.gen_range(1..encoded.len())) % encoded.len();
        let (q, r) = (&encoded[a], &encoded[b]);
        let qr = model.distance(q, r).unwrap();
        let rq = model.distance(r, q).unwrap();
        if qr.to_bits() != rq.to_bits() {
            report.asymmetric += 1;
        }
        if model.distance(q, q).unwrap() != 0.0 {
            report.nonzero_self += 1;
        }
    }
    report
}

// ---- gradients ----

/// Scalar `sum(y * w)` with fixed random `w`, so every output entry gets a
/// distinct upstream gradient.
fn weighted_sum(tape: &mut Tape<'_>, y: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let shape = tape.value(y).shape().to_vec();
    let w = tape.constant(random_tensor(&mut rng, &shape));
    let p = tape.mul(y, w).unwrap();
    tape.sum(p).unwrap()
}

/// Tape gradients against central differences of `build` reduced by
/// `weighted_sum`, over every parameter in the store.
fn check<F>(store: &ParamStore, seed: u64, build: F) -> GradCheckReport
where
    F: Fn(&mut Tape<'_>) -> Var,
{
    let ids: Vec<ParamId> = store.ids().collect();
    let loss = |s: &ParamStore| {
        let mut tape = Tape::new(s);
        let y = build(&mut tape);
        let l = weighted_sum(&mut tape, y, seed);
        (tape.value(l).data()[0], tape.relu_pattern())
    };
    let mut tape = Tape::new(store);
    let y = build(&mut tape);
    let l = weighted_sum(&mut tape, y, seed);
    let grads = tape.backward(l).unwrap();
    GradCheck::default().run_piecewise(store, &ids, &grads, loss)
}

fn inputs(store: &mut ParamStore, rng: &mut ChaCha8Rng, steps: usize, rows: usize, dim: usize) -> Vec<ParamId> {
    (0..steps)
        .map(|t| store.add(format!("x{t}"), random_tensor(rng, &[rows, dim])))
        .collect()
}

fn randomize_all(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    let ids: Vec<ParamId> = store.ids().collect();
    for id in ids {
        let shape = store.get(id).shape().to_vec();
        *store.get_mut(id) = random_tensor(rng, &shape);
    }
}

pub fn embedding_gradient(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let emb = EmbeddingParams::new(&mut store, "emb", random_tensor(&mut rng, &[7, 3])).unwrap();
    let ids: Vec<usize> = (0..9).map(|_| rng.gen_range(0..7)).collect();
    check(&store, seed, |t| emb.embed(t, &ids).unwrap())
}

pub fn lstm_gradient(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let lstm = LstmParams::new(&mut store, &mut rng, "lstm", 3, 4);
    let xs = inputs(&mut store, &mut rng, 3, 2, 3);
    randomize_all(&mut store, &mut rng);
    check(&store, seed, |t| {
        let steps: Vec<Var> = xs.iter().map(|&x| t.param(x)).collect();
        lstm.run(t, &steps).unwrap()
    })
}

pub fn bilstm_gradient(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let lstm = BiLstmParams::new(&mut store, &mut rng, "bilstm", 3, 2);
    let xs = inputs(&mut store, &mut rng, 4, 2, 3);
    randomize_all(&mut store, &mut rng);
    check(&store, seed, |t| {
        let steps: Vec<Var> = xs.iter().map(|&x| t.param(x)).collect();
        lstm.encode(t, &steps).unwrap()
    })
}

pub fn attention_gradient(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let att = AttentionParams::new(&mut store, &mut rng, "att", 4);
    let x = store.add("x", random_tensor(&mut rng, &[2, 3, 4]));
    randomize_all(&mut store, &mut rng);
    check(&store, seed, |t| {
        let xv = t.param(x);
        att.forward(t, xv).unwrap()
    })
}

pub fn mlp_batchnorm_gradient(seed: u64) -> GradCheckReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let mlp = MlpParams::new(&mut store, &mut rng, "mlp", 4, 3);
    let x = store.add("x", random_tensor(&mut rng, &[5, 4]));
    randomize_all(&mut store, &mut rng);
    check(&store, seed, |t| {
        let xv = t.param(x);
        mlp.forward(t, xv, Mode::Train).unwrap().0
    })
}

/// Mean contrastive loss of a 2-pair batch through a tiny model (2x2
/// tables) in training mode.
pub fn siamese_loss_gradient(seed: u64, variant: TabularVariant) -> GradCheckReport {
    siamese_loss_check(seed, variant, GradCheck::default())
}

pub fn siamese_loss_check(seed: u64, variant: TabularVariant, check: GradCheck) -> GradCheckReport {
    let corpus = generate_synthetic_corpus(2, 4, 2, seed).unwrap();
    let config = ModelConfig {
        embed_dim: 4,
        hidden: 3,
        mlp_out: 4,
        variant,
        shape: ShapeConfig::new(2, 2, 2, 3).unwrap(),
        seed,
        ..Default::default()
    };
    let mut model = TabSimModel::new(config, build_vocab(corpus.tables()), None).unwrap();
    // unit-scale weights like the layer checks; at the small initial scale
    // batch norm sees near-zero variances and the loss curves too sharply
    // for an h = 1e-4 difference
    randomize_all(&mut model.store, &mut ChaCha8Rng::seed_from_u64(seed));
    let enc: Vec<(EncodedTable, EncodedTable, Label)> = corpus
        .pairs
        .iter()
        .take(2)
        .map(|p| {
            (
                model.encode(corpus.require(&p.query_id).unwrap()),
                model.encode(corpus.require(&p.cand_id).unwrap()),
                p.label,
            )
        })
        .collect();
    let pairs: Vec<(&EncodedTable, &EncodedTable, Label)> = enc.iter().map(|(a, b, l)| (a, b, *l)).collect();
    let ids: Vec<ParamId> = model.store.ids().collect();
    let loss = |s: &ParamStore| {
        let mut tape = Tape::new(s);
        let (l, _) = model.batch_loss(&mut tape, &pairs, Mode::Train).unwrap();
        (tape.value(l).data()[0], tape.relu_pattern())
    };
    let mut tape = Tape::new(&model.store);
    let (l, _) = model.batch_loss(&mut tape, &pairs, Mode::Train).unwrap();
    let grads = tape.backward(l).unwrap();
    check.run_piecewise(&model.store, &ids, &grads, loss)
}

pub struct LayerCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub checked: usize,
    pub skipped: usize,
}

/// Worst relative error of every layer over `seeds`, with the number of
/// entries checked and skipped at kinks.
pub fn gradient_suite(seeds: &[u64]) -> Vec<LayerCheck> {
    let run = |name, f: &dyn Fn(u64) -> GradCheckReport| {
        seeds.iter().map(|&s| f(s)).fold(
            LayerCheck {
                name,
                max_rel_error: 0.0,
                checked: 0,
                skipped: 0,
            },
            |acc, r| LayerCheck {
                max_rel_error: acc.max_rel_error.max(r.max_rel_error),
                checked: acc.checked + r.checked,
                skipped: acc.skipped + r.skipped,
                ..acc
            },
        )
    };
    vec![
        run("embedding", &embedding_gradient),
        run("lstm", &lstm_gradient),
        run("bilstm", &bilstm_gradient),
        run("self_attention", &attention_gradient),
        run("mlp_batchnorm", &mlp_batchnorm_gradient),
        run("siamese_loss", &|s| siamese_loss_gradient(s, TabularVariant::Attention)),
        run("siamese_loss_sequence", &|s| {
            siamese_loss_gradient(s, TabularVariant::SequenceL)
        }),
    ]
}

// ---- equivariance ----

/// One random instance: attention output of a per-group permuted input
/// against the permuted output; returns the largest elementwise deviation.
pub fn equivariance_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, n, e) = (rng.gen_range(1..4), rng.gen_range(1..8), rng.gen_range(1..6));
    let mut store = ParamStore::new();
    let att = AttentionParams::new(&mut store, &mut rng, "att", e);
    randomize_all(&mut store, &mut rng);
    let x = random_tensor(&mut rng, &[g, n, e]);
    let perms: Vec<Vec<usize>> = (0..g)
        .map(|_| {
            let mut p: Vec<usize> = (0..n).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let permute = |t: &Tensor| -> Tensor {
        let mut data = Vec::with_capacity(t.len());
        for (gi, p) in perms.iter().enumerate() {
            for &src in p {
                let start = (gi * n + src) * e;
                data.extend_from_slice(&t.data()[start..start + e]);
            }
        }
        Tensor::new(vec![g, n, e], data).unwrap()
    };
    let run = |input: Tensor| -> Tensor {
        let mut tape = Tape::new(&store);
        let xv = tape.constant(input);
        let y = att.forward(&mut tape, xv).unwrap();
        tape.value(y).clone()
    };
    let lhs = run(permute(&x));
    let rhs = permute(&run(x));
    lhs.data()
        .iter()
        .zip(rhs.data())
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max)
}

// ---- Hungarian ----

pub struct MatchingReport {
    pub integer_mismatches: usize,
    pub real_max_error: f64,
    pub invalid_matchings: usize,
}

/// `count` integer-weighted matrices (exact comparison) and `count`
/// real-weighted ones (error reported), sizes up to 6 x 6.
pub fn hungarian_suite(count: usize, seed: u64) -> MatchingReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MatchingReport {
        integer_mismatches: 0,
        real_max_error: 0.0,
        invalid_matchings: 0,
    };
    for k in 0..2 * count {
        let (n, m) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let integer = k < count;
        let w: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                (0..m)
                    .map(|_| {
                        if integer {
                            rng.gen_range(-10..=10) as f64
                        } else {
                            rng.gen_range(-1.0..1.0)
                        }
                    })
                    .collect()
            })
            .collect();
        let (matching, total) = hungarian_max_matching(&w);
        let reference = oracles::brute_force_matching(&w);
        let mut rows = std::collections::HashSet::new();
        let mut cols = std::collections::HashSet::new();
        let valid = matching.len() == n.min(m)
            && matching
                .iter()
                .all(|&(i, j)| i < n && j < m && rows.insert(i) && cols.insert(j))
            && (matching.iter().map(|&(i, j)| w[i][j]).sum::<f64>() - total).abs() < 1e-9;
        if !valid {
            report.invalid_matchings += 1;
        }
        if integer {
            if total != reference {
                report.integer_mismatches += 1;
            }
        } else {
            report.real_max_error = report.real_max_error.max((total - reference).abs());
        }
    }
    report
}

// ---- metric oracles ----

fn random_labels(rng: &mut ChaCha8Rng, n: usize) -> Vec<Label> {
    (0..n)
        .map(|_| {
            if rng.gen_bool(0.5) {
                Label::Similar
            } else {
                Label::Dissimilar
            }
        })
        .collect()
}

/// Largest absolute deviation from the direct-definition oracle over
/// `count` random small instances, per metric.
pub fn metric_oracle_suite(count: usize, seed: u64) -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut auc, mut ndcg, mut prf, mut kappa) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    for _ in 0..count {
        // AUC: coarse scores so ties occur; either orientation
        let n = rng.gen_range(2..14);
        let mut gold = random_labels(&mut rng, n);
        gold[0] = Label::Similar;
        gold[1] = Label::Dissimilar;
        gold.shuffle(&mut rng);
        let distance = rng.gen_bool(0.5);
        let scores: Vec<MethodScore> = (0..n)
            .map(|_| {
                let v = rng.gen_range(0..6) as f64 / 5.0;
                if distance {
                    MethodScore::distance(v)
                } else {
                    MethodScore::similarity(v)
                }
            })
            .collect();
        let oriented: Vec<f64> = scores
            .iter()
            .map(|s| if distance { -s.value } else { s.value })
            .collect();
        auc = auc.max((roc_auc(&scores, &gold).unwrap() - oracles::auc_pairwise(&oriented, &gold)).abs());

        let len = rng.gen_range(1..7);
        let gains: Vec<u32> = (0..len).map(|_| rng.gen_range(0..4)).collect();
        let k = rng.gen_range(1..8);
        ndcg = ndcg.max((ndcg_at_k(&gains, k, GainKind::Exponential) - oracles::ndcg_brute(&gains, k)).abs());

        let n = rng.gen_range(1..21);
        let (pred, gold) = (random_labels(&mut rng, n), random_labels(&mut rng, n));
        let got = prf_macro(&pred, &gold).unwrap();
        let want = oracles::prf_direct(&pred, &gold);
        for (a, b) in [
            (got.precision, want.0),
            (got.recall, want.1),
            (got.f1, want.2),
            (got.accuracy, want.3),
        ] {
            prf = prf.max((a - b).abs());
        }

        let (items, raters, cats) = (rng.gen_range(1..7), rng.gen_range(2..6), rng.gen_range(2..5));
        let assign: Vec<Vec<usize>> = (0..items)
            .map(|_| (0..raters).map(|_| rng.gen_range(0..cats)).collect())
            .collect();
        let counts: Vec<Vec<usize>> = assign
            .iter()
            .map(|a| (0..cats).map(|c| a.iter().filter(|&&x| x == c).count()).collect())
            .collect();
        kappa = kappa.max((fleiss_kappa(&counts).unwrap() - oracles::kappa_from_assignments(&assign, cats)).abs());
    }
    vec![
        ("roc_auc", auc),
        ("ndcg_at_k", ndcg),
        ("prf_macro", prf),
        ("fleiss_kappa", kappa),
    ]
}
