//! Seeded synthetic corpora with controlled lexical overlap.
//!
//! Every topic owns a disjoint vocabulary of pseudo-words split into synonym
//! groups. A table is first drawn as a grid of concepts (synonym groups and
//! number slots) and then realized with one member index for the whole
//! table. Queries use member 0; their similar candidates re-express the same
//! concepts with member 1 or 2, shuffled rows and fresh numbers, so they
//! share meaning but almost no tokens. Dissimilar candidates come from a
//! different topic.

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::{CellDoc, Corpus, CorpusDocument, CorpusStyle, PairDoc, SynonymGroup, TableDoc};
use crate::embeddings::EmbeddingFile;
use crate::error::Result;

const MEMBERS: usize = 3;
const HEADER_GROUPS: usize = 6;
const VALUE_GROUPS: usize = 8;
const CAPTION_GROUPS: usize = 4;
const GROUPS_PER_TOPIC: usize = HEADER_GROUPS + VALUE_GROUPS + CAPTION_GROUPS;

const GENERIC_WORDS: &[&str] = &[
    "table", "summary", "results", "of", "the", "by", "and", "in", "for", "data", "overview", "values",
];
const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "st", "kr",
];
const VOWELS: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou"];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Concept {
    Word(usize),
    Number,
}

#[derive(Debug, Clone)]
struct AbstractTable {
    topic: usize,
    headers: Vec<usize>,
    /// data rows x columns; categorical cells hold one or two concepts
    rows: Vec<Vec<Vec<Concept>>>,
    caption: Vec<usize>,
}

struct Generator {
    rng: ChaCha8Rng,
    /// topic -> group -> members
    words: Vec<Vec<Vec<String>>>,
    numbers: Vec<String>,
}

impl Generator {
    fn new(topics: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut seen: HashSet<String> = GENERIC_WORDS.iter().map(|w| w.to_string()).collect();
        let mut words = Vec::with_capacity(topics);
        for _ in 0..topics {
            let mut groups = Vec::with_capacity(GROUPS_PER_TOPIC);
            for _ in 0..GROUPS_PER_TOPIC {
                let members = (0..MEMBERS).map(|_| pseudo_word(&mut rng, &mut seen)).collect();
                groups.push(members);
            }
            words.push(groups);
        }
        let mut numbers: Vec<String> = (0..24).map(|i| (i * 5 + 3).to_string()).collect();
        numbers.extend((0..16).map(|i| format!("{}.{}", i % 9, (i * 7) % 10)));
        Self { rng, words, numbers }
    }

    fn draw_table(&mut self, topic: usize) -> AbstractTable {
        let n_cols = self.rng.gen_range(3..=4);
        let n_rows = self.rng.gen_range(3..=5);
        let mut headers: Vec<usize> = (0..HEADER_GROUPS).collect();
        headers.shuffle(&mut self.rng);
        headers.truncate(n_cols);
        let numeric: Vec<bool> = (0..n_cols).map(|k| k > 0 && self.rng.gen_bool(0.5)).collect();
        let rows = (0..n_rows)
            .map(|_| {
                (0..n_cols)
                    .map(|k| {
                        if numeric[k] {
                            vec![Concept::Number]
                        } else {
                            let len = self.rng.gen_range(1..=2);
                            (0..len)
                                .map(|_| Concept::Word(HEADER_GROUPS + self.rng.gen_range(0..VALUE_GROUPS)))
                                .collect()
                        }
                    })
                    .collect()
            })
            .collect();
        let mut caption: Vec<usize> = (0..CAPTION_GROUPS).map(|g| HEADER_GROUPS + VALUE_GROUPS + g).collect();
        caption.shuffle(&mut self.rng);
        caption.truncate(2);
        caption.push(headers[0]);
        AbstractTable {
            topic,
            headers,
            rows,
            caption,
        }
    }

    /// Same concepts, rows shuffled. With `foreign` one column is replaced
    /// by a column drawn from another topic.
    fn reexpress(&mut self, query: &AbstractTable, foreign: Option<&AbstractTable>) -> AbstractTable {
        let mut t = query.clone();
        t.rows.shuffle(&mut self.rng);
        if let Some(other) = foreign {
            let k = t.headers.len() - 1;
            t.headers[k] = usize::MAX - other.headers[other.headers.len() - 1];
            for (i, row) in t.rows.iter_mut().enumerate() {
                let src = &other.rows[i % other.rows.len()];
                row[k] = src[src.len() - 1]
                    .iter()
                    .map(|c| match c {
                        Concept::Word(g) => Concept::Word(usize::MAX - g),
                        Concept::Number => Concept::Number,
                    })
                    .collect();
            }
            t.caption.push(usize::MAX - HEADER_GROUPS - VALUE_GROUPS);
        }
        t
    }

    /// Concepts from a foreign topic are encoded as `usize::MAX - group`
    /// and resolved against `foreign_topic` when realized.
    fn realize(
        &mut self,
        t: &AbstractTable,
        member: usize,
        foreign_topic: Option<usize>,
    ) -> (String, Vec<Vec<String>>) {
        let resolve = |g: usize| -> (usize, usize) {
            if g > usize::MAX / 2 {
                (
                    foreign_topic.expect("foreign concept without foreign topic"),
                    usize::MAX - g,
                )
            } else {
                (t.topic, g)
            }
        };
        let word = |g: usize| {
            let (topic, group) = resolve(g);
            self.words[topic][group][member].clone()
        };
        let mut caption: Vec<String> = t.caption.iter().map(|&g| word(g)).collect();
        let mut grid = vec![t.headers.iter().map(|&g| word(g)).collect::<Vec<_>>()];
        for row in &t.rows {
            let mut out = Vec::with_capacity(row.len());
            for cell in row {
                let mut parts = Vec::with_capacity(cell.len());
                for c in cell {
                    match *c {
                        Concept::Word(g) => parts.push(word(g)),
                        Concept::Number => parts.push(String::new()),
                    }
                }
                out.push(parts);
            }
            grid.push(Vec::new());
            let last = grid.len() - 1;
            for parts in out {
                let text = parts
                    .into_iter()
                    .map(|p| {
                        if p.is_empty() {
                            self.numbers[self.rng.gen_range(0..self.numbers.len())].clone()
                        } else {
                            p
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                grid[last].push(text);
            }
        }
        let generic = GENERIC_WORDS[self.rng.gen_range(0..GENERIC_WORDS.len())];
        let at = self.rng.gen_range(0..=caption.len());
        caption.insert(at, generic.to_string());
        let mut text = caption.join(" ");
        text[..1].make_ascii_uppercase();
        (text, grid)
    }

    /// Lays a realized grid out as a document table: some tables are stored
    /// transposed, some merge two equal first-column cells.
    fn layout(&mut self, id: String, caption: String, mut grid: Vec<Vec<String>>) -> TableDoc {
        let roll: f64 = self.rng.gen();
        if roll < 0.15 {
            let (rows, cols) = (grid.len(), grid[0].len());
            let transposed = (0..cols)
                .map(|j| (0..rows).map(|i| CellDoc::text(grid[i][j].clone())).collect())
                .collect();
            return TableDoc {
                id,
                caption,
                orientation: "v".into(),
                header: true,
                grid: transposed,
            };
        }
        let merge = roll < 0.3 && grid.len() >= 3;
        if merge {
            grid[2][0] = grid[1][0].clone();
        }
        let doc_grid = grid
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                row.into_iter()
                    .enumerate()
                    .filter(|&(j, _)| !(merge && i == 2 && j == 0))
                    .map(|(j, text)| {
                        let mut c = CellDoc::text(text);
                        if merge && i == 1 && j == 0 {
                            c.row_span = Some(2);
                        }
                        c
                    })
                    .collect()
            })
            .collect();
        TableDoc {
            id,
            caption,
            orientation: "h".into(),
            header: true,
            grid: doc_grid,
        }
    }
}

fn pseudo_word(rng: &mut ChaCha8Rng, seen: &mut HashSet<String>) -> String {
    loop {
        let syllables = rng.gen_range(2..=3);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS[rng.gen_range(0..ONSETS.len())]);
            w.push_str(VOWELS[rng.gen_range(0..VOWELS.len())]);
        }
        if rng.gen_bool(0.5) {
            w.push_str(ONSETS[rng.gen_range(0..12)]);
        }
        if seen.insert(w.clone()) {
            return w;
        }
    }
}

/// Builds the synthetic corpus document. `vocab_topics` below 2 is raised to
/// 2 so dissimilar candidates always have a foreign topic to come from.
/// Per query, the first `ceil(c/2)` candidates are similar: the first one a
/// full re-expression (caption 2, content 2), later ones with one column
/// swapped for a foreign-topic column (caption 2, content 1). The remaining
/// candidates are dissimilar (0, 0).
pub fn generate_synthetic_document(
    n_queries: usize,
    cands_per_query: usize,
    vocab_topics: usize,
    seed: u64,
) -> CorpusDocument {
    let topics = vocab_topics.max(2);
    let mut g = Generator::new(topics, seed);
    let mut tables = Vec::new();
    let mut pairs = Vec::new();
    let n_similar = cands_per_query.div_ceil(2);
    for q in 0..n_queries {
        let topic = q % topics;
        let query = g.draw_table(topic);
        let qid = format!("syn-q{q:04}");
        let (caption, grid) = g.realize(&query, 0, None);
        tables.push(g.layout(qid.clone(), caption, grid));
        for c in 0..cands_per_query {
            let cid = format!("{qid}-c{c}");
            let other_topic = (topic + g.rng.gen_range(1..topics)) % topics;
            let member = g.rng.gen_range(1..MEMBERS);
            let (table, caption_label, content_label) = if c < n_similar {
                if c == 0 {
                    let t = g.reexpress(&query, None);
                    (g.realize(&t, member, None), 2, 2)
                } else {
                    let other = g.draw_table(other_topic);
                    let t = g.reexpress(&query, Some(&other));
                    (g.realize(&t, member, Some(other_topic)), 2, 1)
                }
            } else {
                let t = g.draw_table(other_topic);
                let m = g.rng.gen_range(0..MEMBERS);
                (g.realize(&t, m, None), 0, 0)
            };
            tables.push(g.layout(cid.clone(), table.0, table.1));
            pairs.push(PairDoc {
                query: qid.clone(),
                cand: cid,
                caption_label: Some(caption_label),
                content_label: Some(content_label),
                grade: None,
                alignment: None,
            });
        }
    }
    let synonyms = g
        .words
        .iter()
        .enumerate()
        .flat_map(|(topic, groups)| {
            groups.iter().map(move |members| SynonymGroup {
                topic,
                words: members.clone(),
            })
        })
        .collect();
    CorpusDocument {
        style: CorpusStyle::Pmc,
        tables,
        pairs,
        groups: Vec::new(),
        synonyms,
    }
}

pub fn generate_synthetic_corpus(
    n_queries: usize,
    cands_per_query: usize,
    vocab_topics: usize,
    seed: u64,
) -> Result<Corpus> {
    Corpus::from_document(generate_synthetic_document(
        n_queries,
        cands_per_query,
        vocab_topics,
        seed,
    ))
}

/// Word vectors standing in for pretrained domain embeddings: each word is
/// its topic vector plus its synonym-group vector plus small noise, so
/// synonyms are close and topics are separated. Words outside the synonym
/// table are not listed.
pub fn synonym_embedding_file(synonyms: &[SynonymGroup], dim: usize, seed: u64) -> EmbeddingFile {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut uniform = |n: usize, scale: f64| -> Vec<f64> { (0..n).map(|_| rng.gen_range(-scale..=scale)).collect() };
    let n_topics = synonyms.iter().map(|g| g.topic + 1).max().unwrap_or(0);
    let topics: Vec<Vec<f64>> = (0..n_topics).map(|_| uniform(dim, 0.5)).collect();
    let mut file = EmbeddingFile::new(dim);
    for g in synonyms {
        let group = uniform(dim, 0.5);
        for w in &g.words {
            let noise = uniform(dim, 0.1);
            let v = (0..dim).map(|i| topics[g.topic][i] + group[i] + noise[i]).collect();
            file.rows.push((w.clone(), v));
        }
    }
    file
}
