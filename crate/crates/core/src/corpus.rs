//! Corpus document format, gold-label aggregation and fold splitting.
//!
//! A corpus is one JSON document:
//!
//! ```text
//! {
//!   "style": "pmc" | "keyword" | "alignment",
//!   "tables": [{"id", "caption", "orientation": "h"|"v", "header", "grid": [[{"text", "row_span"?, "col_span"?}]]}],
//!   "pairs":  [{"query", "cand", "caption_label", "content_label"}]   // pmc
//!           | [{"query", "cand", "grade"}]                            // keyword
//!           | [{"query", "cand", "alignment"}],                       // alignment
//!   "groups": [{"query", "candidates", "gains"?}],                    // optional
//!   "synonyms": [{"topic", "words"}]                                  // optional
//! }
//! ```
//!
//! For the keyword style `query` names a keyword query rather than a table,
//! and table pairs are derived from the per-query grades.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::{expand_merged_cells, normalize_orientation, Cell, Orientation, RawTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Similar,
    Dissimilar,
}

impl Label {
    /// Contrastive-loss target: 0 for similar, 1 for dissimilar.
    pub fn target(self) -> f64 {
        match self {
            Label::Similar => 0.0,
            Label::Dissimilar => 1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Label::Similar => "similar",
            Label::Dissimilar => "dissimilar",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusStyle {
    Pmc,
    Keyword,
    Alignment,
}

/// The raw judgment a pair label was aggregated from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Judgment {
    /// Separate caption and content grades in {0,1,2}.
    Pmc { caption: u8, content: u8 },
    /// Grades in {0..3} of both tables against the same keyword query.
    Keyword { query_grade: u8, cand_grade: u8 },
    /// Alignment grade in {0,1,2}.
    Alignment { label: u8 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledPair {
    pub query_id: String,
    pub cand_id: String,
    pub judgment: Judgment,
    pub label: Label,
    pub rank_gain: u32,
}

impl LabeledPair {
    /// Stable key used in error sets.
    pub fn key(&self) -> String {
        format!("{}|{}", self.query_id, self.cand_id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryGroup {
    pub query_id: String,
    pub candidate_ids: Vec<String>,
    /// Gold gain of each candidate, aligned with `candidate_ids`.
    pub gains: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynonymGroup {
    pub topic: usize,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub style: CorpusStyle,
    tables: Vec<RawTable>,
    index: HashMap<String, usize>,
    pub pairs: Vec<LabeledPair>,
    pub groups: Vec<QueryGroup>,
    pub synonyms: Vec<SynonymGroup>,
}

impl Corpus {
    pub fn table(&self, id: &str) -> Option<&RawTable> {
        self.index.get(id).map(|&i| &self.tables[i])
    }

    pub fn require(&self, id: &str) -> Result<&RawTable> {
        self.table(id).ok_or_else(|| Error::UnknownTable(id.to_string()))
    }

    /// Tables in document order.
    pub fn tables(&self) -> &[RawTable] {
        &self.tables
    }

    pub fn from_document(doc: CorpusDocument) -> Result<Self> {
        let mut tables = Vec::with_capacity(doc.tables.len());
        let mut index = HashMap::new();
        for t in doc.tables {
            if t.id.is_empty() {
                return Err(Error::Validation("table with empty id".into()));
            }
            if index.contains_key(&t.id) {
                return Err(Error::Validation(format!("duplicate table id \"{}\"", t.id)));
            }
            let raw = t.into_raw()?;
            let grid =
                expand_merged_cells(&raw.grid).map_err(|e| Error::Validation(format!("table \"{}\": {e}", raw.id)))?;
            let table = normalize_orientation(&RawTable { grid, ..raw });
            index.insert(table.id.clone(), tables.len());
            tables.push(table);
        }
        let exists = |id: &str| -> Result<()> {
            if index.contains_key(id) {
                Ok(())
            } else {
                Err(Error::DanglingId(id.to_string()))
            }
        };

        let pairs = match doc.style {
            CorpusStyle::Pmc | CorpusStyle::Alignment => {
                let mut pairs = Vec::with_capacity(doc.pairs.len());
                let mut seen = HashSet::new();
                for p in &doc.pairs {
                    exists(&p.query)?;
                    exists(&p.cand)?;
                    let Some(pair) = p.to_pair(doc.style)? else { continue };
                    let key = unordered(&pair.query_id, &pair.cand_id);
                    if !seen.insert(key) {
                        return Err(Error::DuplicatePair(pair.query_id, pair.cand_id));
                    }
                    pairs.push(pair);
                }
                pairs
            }
            CorpusStyle::Keyword => {
                let judgments = keyword_judgments(&doc.pairs)?;
                for (_, list) in &judgments {
                    for (id, _) in list {
                        exists(id)?;
                    }
                }
                derive_pairs_from_query_relevance(&judgments)
            }
        };

        let groups = if !doc.groups.is_empty() {
            let known: HashSet<(String, String)> = pairs.iter().map(|p| unordered(&p.query_id, &p.cand_id)).collect();
            let gain_of: HashMap<(String, String), u32> = pairs
                .iter()
                .map(|p| ((p.query_id.clone(), p.cand_id.clone()), p.rank_gain))
                .collect();
            doc.groups
                .into_iter()
                .map(|g| {
                    let mut distinct = HashSet::new();
                    for c in &g.candidates {
                        if !distinct.insert(c) {
                            return Err(Error::Validation(format!("group {}: repeated candidate {c}", g.query)));
                        }
                        if !known.contains(&unordered(&g.query, c)) {
                            return Err(Error::Validation(format!(
                                "group {}: no pair with candidate {c}",
                                g.query
                            )));
                        }
                    }
                    let gains = match g.gains {
                        Some(gains) if gains.len() == g.candidates.len() => gains,
                        Some(_) => {
                            return Err(Error::Validation(format!("group {}: gains length mismatch", g.query)));
                        }
                        None => g
                            .candidates
                            .iter()
                            .map(|c| gain_of.get(&(g.query.clone(), c.clone())).copied().unwrap_or(0))
                            .collect(),
                    };
                    Ok(QueryGroup {
                        query_id: g.query,
                        candidate_ids: g.candidates,
                        gains,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        } else if doc.style == CorpusStyle::Keyword {
            derive_groups_from_query_relevance(&keyword_judgments(&doc.pairs)?)
        } else {
            groups_from_pairs(&pairs)
        };

        Ok(Self {
            style: doc.style,
            tables,
            index,
            pairs,
            groups,
            synonyms: doc.synonyms,
        })
    }
}

fn unordered(a: &str, b: &str) -> (String, String) {
    if a <= b {
        (a.to_string(), b.to_string())
    } else {
        (b.to_string(), a.to_string())
    }
}

/// One group per query table, candidates in pair order.
fn groups_from_pairs(pairs: &[LabeledPair]) -> Vec<QueryGroup> {
    let mut groups: Vec<QueryGroup> = Vec::new();
    let mut at: HashMap<&str, usize> = HashMap::new();
    for p in pairs {
        let i = *at.entry(&p.query_id).or_insert_with(|| {
            groups.push(QueryGroup {
                query_id: p.query_id.clone(),
                candidate_ids: Vec::new(),
                gains: Vec::new(),
            });
            groups.len() - 1
        });
        groups[i].candidate_ids.push(p.cand_id.clone());
        groups[i].gains.push(p.rank_gain);
    }
    groups
}

type Judgments = Vec<(String, Vec<(String, u8)>)>;

fn keyword_judgments(pairs: &[PairDoc]) -> Result<Judgments> {
    let mut out: Judgments = Vec::new();
    let mut at: HashMap<String, usize> = HashMap::new();
    for p in pairs {
        let grade = p
            .grade
            .ok_or_else(|| Error::Validation(format!("pair ({}, {}): missing grade", p.query, p.cand)))?;
        if !(0..=3).contains(&grade) {
            return Err(Error::Validation(format!("grade {grade} out of range 0..=3")));
        }
        let i = *at.entry(p.query.clone()).or_insert_with(|| {
            out.push((p.query.clone(), Vec::new()));
            out.len() - 1
        });
        out[i].1.push((p.cand.clone(), grade as u8));
    }
    Ok(out)
}

fn check_grade(label: i64, max: i64, what: &str) -> Result<u8> {
    if (0..=max).contains(&label) {
        Ok(label as u8)
    } else {
        Err(Error::Validation(format!(
            "{what} label {label} out of range 0..={max}"
        )))
    }
}

/// A pair is dissimilar only when both caption and content are graded 0.
pub fn aggregate_pmc_label(caption_label: i64, content_label: i64) -> Result<Label> {
    let c = check_grade(caption_label, 2, "caption")?;
    let t = check_grade(content_label, 2, "content")?;
    Ok(if c == 0 && t == 0 {
        Label::Dissimilar
    } else {
        Label::Similar
    })
}

pub fn pmc_rank_gain(caption_label: u8, content_label: u8) -> u32 {
    u32::from(caption_label) + u32::from(content_label)
}

/// equivalent (2) and subPartOf (1) are similar, noalignment (0) is not; the
/// grade doubles as rank gain.
pub fn map_alignment_label(label: i64) -> Result<(Label, u32)> {
    let l = check_grade(label, 2, "alignment")?;
    let binary = if l == 0 { Label::Dissimilar } else { Label::Similar };
    Ok((binary, u32::from(l)))
}

/// Turns per-query graded tables (0..=3) into table pairs: tables graded 2 or
/// 3 are similar to each other and dissimilar to the query's remaining
/// tables. Pairs among tables graded 1 or lower are not labeled. An
/// unordered pair produced by several queries keeps its first labeling.
pub fn derive_pairs_from_query_relevance(judgments: &[(String, Vec<(String, u8)>)]) -> Vec<LabeledPair> {
    let mut pairs = Vec::new();
    let mut seen = HashSet::new();
    for (_, tables) in judgments {
        for (i, (a, ga)) in tables.iter().enumerate() {
            for (b, gb) in tables.iter().skip(i + 1) {
                let (a_sim, b_sim) = (*ga >= 2, *gb >= 2);
                if (!a_sim && !b_sim) || a == b {
                    continue;
                }
                // the similar-class table acts as query
                let ((q, gq), (c, gc)) = if a_sim {
                    ((a, *ga), (b, *gb))
                } else {
                    ((b, *gb), (a, *ga))
                };
                if !seen.insert(unordered(q, c)) {
                    continue;
                }
                pairs.push(LabeledPair {
                    query_id: q.clone(),
                    cand_id: c.clone(),
                    judgment: Judgment::Keyword {
                        query_grade: gq,
                        cand_grade: gc,
                    },
                    label: if a_sim && b_sim {
                        Label::Similar
                    } else {
                        Label::Dissimilar
                    },
                    rank_gain: u32::from(gc),
                });
            }
        }
    }
    pairs
}

/// Every similar-class table of a keyword query ranks the query's other
/// tables, with their grades as gains.
pub fn derive_groups_from_query_relevance(judgments: &[(String, Vec<(String, u8)>)]) -> Vec<QueryGroup> {
    let mut groups = Vec::new();
    for (_, tables) in judgments {
        for (a, ga) in tables {
            if *ga < 2 {
                continue;
            }
            let others: Vec<&(String, u8)> = tables.iter().filter(|(b, _)| b != a).collect();
            if others.is_empty() {
                continue;
            }
            groups.push(QueryGroup {
                query_id: a.clone(),
                candidate_ids: others.iter().map(|(b, _)| b.clone()).collect(),
                gains: others.iter().map(|(_, g)| u32::from(*g)).collect(),
            });
        }
    }
    groups
}

/// Assignment of pair indices to `k` folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    pub k: usize,
    pub fold_of_pair: Vec<usize>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_pair.len())
            .filter(|&i| self.fold_of_pair[i] == fold)
            .collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of_pair.len())
            .filter(|&i| self.fold_of_pair[i] != fold)
            .collect()
    }
}

/// Seeded shuffle followed by round-robin assignment.
pub fn kfold_split(pair_count: usize, k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    if pair_count < k {
        return Err(Error::Config(format!("{pair_count} pairs cannot fill {k} folds")));
    }
    let mut order: Vec<usize> = (0..pair_count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold_of_pair = vec![0; pair_count];
    for (pos, &idx) in order.iter().enumerate() {
        fold_of_pair[idx] = pos % k;
    }
    Ok(FoldAssignment { k, fold_of_pair })
}

// ---- document (wire) types ----

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusDocument {
    pub style: CorpusStyle,
    pub tables: Vec<TableDoc>,
    pub pairs: Vec<PairDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<GroupDoc>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub synonyms: Vec<SynonymGroup>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableDoc {
    pub id: String,
    #[serde(default)]
    pub caption: String,
    pub orientation: String,
    #[serde(default = "yes")]
    pub header: bool,
    pub grid: Vec<Vec<CellDoc>>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellDoc {
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub row_span: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub col_span: Option<usize>,
}

impl CellDoc {
    pub fn text(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            row_span: None,
            col_span: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairDoc {
    pub query: String,
    pub cand: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_label: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub content_label: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alignment: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupDoc {
    pub query: String,
    pub candidates: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gains: Option<Vec<u32>>,
}

impl TableDoc {
    fn into_raw(self) -> Result<RawTable> {
        let orientation = match self.orientation.as_str() {
            "h" => Orientation::Horizontal,
            "v" => Orientation::Vertical,
            other => {
                return Err(Error::Validation(format!(
                    "table \"{}\": orientation must be \"h\" or \"v\", got \"{other}\"",
                    self.id
                )))
            }
        };
        let grid = self
            .grid
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| Cell::spanning(c.text, c.row_span.unwrap_or(1), c.col_span.unwrap_or(1)))
                    .collect()
            })
            .collect();
        Ok(RawTable {
            id: self.id,
            caption: self.caption,
            orientation,
            grid,
            has_header_row: self.header,
        })
    }
}

impl PairDoc {
    /// `None` for PMC pairs carrying an "I do not know" (-1) grade.
    fn to_pair(&self, style: CorpusStyle) -> Result<Option<LabeledPair>> {
        let ctx = |field: &str| Error::Validation(format!("pair ({}, {}): missing {field}", self.query, self.cand));
        let (judgment, label, rank_gain) = match style {
            CorpusStyle::Pmc => {
                let c = self.caption_label.ok_or_else(|| ctx("caption_label"))?;
                let t = self.content_label.ok_or_else(|| ctx("content_label"))?;
                if c == -1 || t == -1 {
                    return Ok(None);
                }
                let label = aggregate_pmc_label(c, t)?;
                let (c, t) = (c as u8, t as u8);
                (Judgment::Pmc { caption: c, content: t }, label, pmc_rank_gain(c, t))
            }
            CorpusStyle::Alignment => {
                let a = self.alignment.ok_or_else(|| ctx("alignment"))?;
                let (label, gain) = map_alignment_label(a)?;
                (Judgment::Alignment { label: a as u8 }, label, gain)
            }
            CorpusStyle::Keyword => unreachable!("keyword pairs are derived"),
        };
        Ok(Some(LabeledPair {
            query_id: self.query.clone(),
            cand_id: self.cand.clone(),
            judgment,
            label,
            rank_gain,
        }))
    }
}

impl CorpusDocument {
    pub fn parse(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("corpus document serializes");
        s.push('\n');
        s
    }
}

pub fn parse_corpus(text: &str) -> Result<Corpus> {
    Corpus::from_document(CorpusDocument::parse(text)?)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let text = std::fs::read_to_string(path.as_ref()).map_err(|e| Error::io(path.as_ref(), e))?;
    parse_corpus(&text)
}
