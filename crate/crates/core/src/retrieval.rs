//! Nearest-neighbour retrieval of a similar `(code, summary)` pair.
//!
//! Two similarity backends: bag-of-words cosine and token-level edit
//! distance. The index is a plain linear scan.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::{subtoken_split, tokenize, TokenKind};

pub type Bow = BTreeMap<String, u32>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Cosine,
    Edit,
}

impl std::str::FromStr for Backend {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Backend::Cosine),
            "edit" => Ok(Backend::Edit),
            other => Err(Error::Config(format!("unknown retrieval backend `{other}`"))),
        }
    }
}

/// Term frequencies over lexer tokens: identifiers are subtoken-split,
/// keywords and numbers are kept verbatim, everything else is dropped.
pub fn bow_vector(code: &str) -> Result<Bow> {
    let mut bow = Bow::new();
    for tok in tokenize(code)? {
        match tok.kind {
            TokenKind::Identifier => {
                for piece in subtoken_split(&tok.text) {
                    *bow.entry(piece).or_default() += 1;
                }
            }
            TokenKind::Keyword | TokenKind::Number => *bow.entry(tok.text).or_default() += 1,
            _ => {}
        }
    }
    Ok(bow)
}

fn norm(u: &Bow) -> f64 {
    u.values().map(|&c| f64::from(c) * f64::from(c)).sum::<f64>().sqrt()
}

fn dot(u: &Bow, v: &Bow) -> f64 {
    let (small, large) = if u.len() <= v.len() { (u, v) } else { (v, u) };
    small.iter().filter_map(|(k, &a)| large.get(k).map(|&b| f64::from(a) * f64::from(b))).sum()
}

/// Cosine of two sparse count vectors; zero if either is empty.
pub fn cosine_similarity(u: &Bow, v: &Bow) -> f64 {
    let denom = norm(u) * norm(v);
    if denom == 0.0 {
        return 0.0;
    }
    (dot(u, v) / denom).clamp(0.0, 1.0)
}

pub fn levenshtein<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    levenshtein_by(a.len(), b.len(), |i, j| a[i] == b[j])
}

/// Levenshtein over tokens carrying precomputed hashes; strings are only
/// compared when the hashes agree.
fn hashed_levenshtein(a: &[String], ha: &[u64], b: &[String], hb: &[u64]) -> usize {
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, (x, hx)) in a.iter().zip(ha).enumerate() {
        let mut diag = row[0];
        let mut left = i + 1;
        row[0] = left;
        for ((cell, y), hy) in row[1..].iter_mut().zip(b).zip(hb) {
            let up = *cell;
            let differ = hx != hy || x != y;
            left = (diag + usize::from(differ)).min(up + 1).min(left + 1);
            diag = up;
            *cell = left;
        }
    }
    row[b.len()]
}

fn levenshtein_by(n: usize, m: usize, eq: impl Fn(usize, usize) -> bool) -> usize {
    let mut row: Vec<usize> = (0..=m).collect();
    for i in 0..n {
        let mut diag = row[0];
        let mut left = i + 1;
        row[0] = left;
        for (j, cell) in row[1..].iter_mut().enumerate() {
            let up = *cell;
            left = (diag + usize::from(!eq(i, j))).min(up + 1).min(left + 1);
            diag = up;
            *cell = left;
        }
    }
    row[m]
}

/// `1 - dis / max(|c|, |c'|)`, with 1 for two empty sequences.
pub fn edit_distance_similarity<T: PartialEq>(c: &[T], c2: &[T]) -> f64 {
    let longest = c.len().max(c2.len());
    if longest == 0 {
        return 1.0;
    }
    edit_similarity_from(levenshtein(c, c2), longest)
}

fn edit_similarity_from(distance: usize, longest: usize) -> f64 {
    if longest == 0 {
        return 1.0;
    }
    (1.0 - distance as f64 / longest as f64).clamp(0.0, 1.0)
}

/// Lexer token texts of `code`, the unit the edit backend compares.
pub fn code_tokens(code: &str) -> Result<Vec<String>> {
    Ok(tokenize(code)?.into_iter().map(|t| t.text).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusEntry {
    pub id: u64,
    pub code: String,
    pub summary: Vec<String>,
    pub bow: Bow,
    #[serde(skip)]
    pub tokens: Vec<String>,
    /// Hashes of `tokens`, checked before the strings themselves.
    #[serde(skip)]
    token_hashes: Vec<u64>,
    #[serde(skip)]
    sorted_hashes: Vec<u64>,
}

fn sorted(v: &[u64]) -> Vec<u64> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v
}

/// Size of the multiset intersection of two sorted hash lists. Hash
/// collisions can only overcount.
fn shared(a: &[u64], b: &[u64]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn token_hashes(tokens: &[String]) -> Vec<u64> {
    tokens
        .iter()
        .map(|t| {
            let mut h = DefaultHasher::new();
            t.hash(&mut h);
            h.finish()
        })
        .collect()
}

impl CorpusEntry {
    pub fn new(id: u64, code: &str, summary: Vec<String>) -> Result<Self> {
        let tokens = code_tokens(code)?;
        Ok(CorpusEntry {
            id,
            code: code.to_string(),
            summary,
            bow: bow_vector(code)?,
            token_hashes: token_hashes(&tokens),
            sorted_hashes: sorted(&token_hashes(&tokens)),
            tokens,
        })
    }

    pub fn similarity(&self, other: &CorpusEntry, backend: Backend) -> f64 {
        match backend {
            Backend::Cosine => cosine_similarity(&self.bow, &other.bow),
            Backend::Edit => {
                let (a, b) = (&self.tokens, &other.tokens);
                let (ha, hb) = (&self.token_hashes, &other.token_hashes);
                let distance = hashed_levenshtein(a, ha, b, hb);
                edit_similarity_from(distance, a.len().max(b.len()))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalHit {
    /// Position of the hit in the database.
    pub index: usize,
    pub id: u64,
    pub z: f64,
}

/// Best match for `query` among entries whose id differs from `exclude`.
/// Ties go to the lowest id.
pub fn retrieve_top1(
    db: &[CorpusEntry],
    query: &CorpusEntry,
    exclude: Option<u64>,
    backend: Backend,
) -> Result<RetrievalHit> {
    let mut best: Option<RetrievalHit> = None;
    for (index, entry) in db.iter().enumerate() {
        if Some(entry.id) == exclude {
            continue;
        }
        // An alignment matches at most the tokens the two bags share.
        if let (Backend::Edit, Some(b)) = (backend, best) {
            let longest = query.tokens.len().max(entry.tokens.len());
            let floor = longest - shared(&query.sorted_hashes, &entry.sorted_hashes);
            if edit_similarity_from(floor, longest) < b.z {
                continue;
            }
        }
        let z = query.similarity(entry, backend);
        let better = match best {
            None => true,
            Some(b) => z > b.z || (z == b.z && entry.id < b.id),
        };
        if better {
            best = Some(RetrievalHit { index, id: entry.id, z });
        }
    }
    best.ok_or_else(|| Error::Retrieval("database has no candidate besides the query".into()))
}

const INDEX_MAGIC: &[u8; 8] = b"CPGIDX01";

/// The retrieval database, persisted as a magic tag followed by JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalIndex {
    pub backend: Backend,
    pub entries: Vec<CorpusEntry>,
}

impl RetrievalIndex {
    pub fn build(entries: Vec<CorpusEntry>, backend: Backend) -> Self {
        RetrievalIndex { backend, entries }
    }

    pub fn query(&self, query: &CorpusEntry, exclude: Option<u64>) -> Result<RetrievalHit> {
        retrieve_top1(&self.entries, query, exclude, self.backend)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = INDEX_MAGIC.to_vec();
        out.extend(serde_json::to_vec(self)?);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = bytes
            .strip_prefix(INDEX_MAGIC.as_slice())
            .ok_or_else(|| Error::Retrieval("not a retrieval index file".into()))?;
        let mut index: RetrievalIndex = serde_json::from_slice(body)?;
        for e in &mut index.entries {
            e.tokens = code_tokens(&e.code)?;
            e.token_hashes = token_hashes(&e.tokens);
            e.sorted_hashes = sorted(&e.token_hashes);
        }
        Ok(index)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}
