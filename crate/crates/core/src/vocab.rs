use std::collections::HashMap;

use crate::table::RawTable;

pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const PAD_TOKEN: &str = "<pad>";
pub const UNK_TOKEN: &str = "<unk>";

/// Insertion-ordered token dictionary with reserved pad (0) and unknown (1)
/// entries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    pub fn new() -> Self {
        let tokens = vec![PAD_TOKEN.to_string(), UNK_TOKEN.to_string()];
        let index = tokens.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        Self { tokens, index }
    }

    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut v = Self::new();
        for t in tokens {
            v.insert(t.as_ref());
        }
        v
    }

    /// Rebuilds a vocabulary from its full token list, reserved entries
    /// included.
    pub fn from_stored(tokens: Vec<String>) -> Result<Self, String> {
        if tokens.len() < 2 || tokens[PAD_ID] != PAD_TOKEN || tokens[UNK_ID] != UNK_TOKEN {
            return Err("reserved entries missing".into());
        }
        let mut index = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if index.insert(t.clone(), i).is_some() {
                return Err(format!("token \"{t}\" repeated"));
            }
        }
        Ok(Self { tokens, index })
    }

    /// Adds a token if absent and returns its id.
    pub fn insert(&mut self, token: &str) -> usize {
        if let Some(&id) = self.index.get(token) {
            return id;
        }
        self.tokens.push(token.to_string());
        self.index.insert(token.to_string(), self.tokens.len() - 1);
        self.tokens.len() - 1
    }

    /// Id of `token`, or the unknown id.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Vocabulary over the caption and cell tokens of `tables`, in the order
/// they are first seen.
pub fn build_vocab<'a>(tables: impl IntoIterator<Item = &'a RawTable>) -> Vocabulary {
    let mut vocab = Vocabulary::new();
    for t in tables {
        for tok in t.caption_tokens().iter().chain(&t.content_tokens()) {
            vocab.insert(tok);
        }
    }
    vocab
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_corpus_has_reserved_only() {
        let v = build_vocab(std::iter::empty());
        assert_eq!(v.tokens(), &[PAD_TOKEN, UNK_TOKEN]);
    }

    #[test]
    fn repeated_token_single_entry() {
        let t = RawTable::from_text("t", "dose dose", &[&["dose"]]);
        let v = build_vocab([&t]);
        assert_eq!(v.len(), 3);
        assert_eq!(v.id("dose"), 2);
    }

    #[test]
    fn ids_are_stable() {
        let a = RawTable::from_text("a", "x y", &[&["z w", "x"]]);
        let b = RawTable::from_text("b", "q", &[&["y"]]);
        assert_eq!(build_vocab([&a, &b]), build_vocab([&a, &b]));
        assert_eq!(build_vocab([&a, &b]).tokens()[2..], ["x", "y", "z", "w", "q"]);
    }
}
