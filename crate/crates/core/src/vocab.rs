use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{is_keyword, subtoken_split};

pub const PAD: usize = 0;
pub const UNK: usize = 1;
pub const BOS: usize = 2;
pub const EOS: usize = 3;

const SPECIALS: [&str; 4] = ["<pad>", "<unk>", "<s>", "</s>"];

/// Token to index map with the four special symbols at fixed positions.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl PartialEq for Vocab {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
    }
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Keeps the most frequent tokens (ties in lexical order) so that the
    /// total size, specials included, stays within `cap`.
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a str>, cap: usize) -> Result<Self> {
        if cap < SPECIALS.len() {
            return Err(Error::Config(format!("vocabulary cap {cap} is below {}", SPECIALS.len())));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for tok in corpus {
            if !SPECIALS.contains(&tok) {
                *counts.entry(tok).or_default() += 1;
            }
        }
        let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
        let tokens = SPECIALS
            .iter()
            .map(|s| s.to_string())
            .chain(ranked.into_iter().take(cap - SPECIALS.len()).map(|(t, _)| t.to_string()))
            .collect::<Vec<_>>();
        Ok(Vocab::from(tokens))
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        self.tokens.get(id).map_or(SPECIALS[UNK], String::as_str)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_ref())).collect()
    }

    /// Token strings for `ids`, stopping at the first EOS and skipping PAD
    /// and BOS.
    pub fn decode(&self, ids: &[usize]) -> Vec<String> {
        ids.iter()
            .take_while(|&&i| i != EOS)
            .filter(|&&i| i != PAD && i != BOS)
            .map(|&i| self.token(i).to_string())
            .collect()
    }
}

/// Vocabulary units of code tokens: identifiers split into lowercase
/// subtokens, everything else verbatim.
pub fn code_subtokens<S: AsRef<str>>(tokens: &[S]) -> Vec<String> {
    let mut out = Vec::new();
    for t in tokens {
        let t = t.as_ref();
        let ident = t.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') && !is_keyword(t);
        if ident {
            out.extend(subtoken_split(t));
        } else {
            out.push(t.to_string());
        }
    }
    out
}

/// Lowercased whitespace tokens of a summary with surrounding
/// punctuation removed.
pub fn summary_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| c.is_ascii_punctuation()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}
