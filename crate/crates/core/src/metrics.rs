//! Corpus BLEU-4, ROUGE-L and exact-match METEOR.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const BLEU_SMOOTHING: &str = "add-1 on n-gram counts for n >= 2";
pub const ROUGE_BETA: f64 = 1.2;

type Tokens = [String];

fn check(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<()> {
    if hyps.is_empty() {
        return Err(Error::Contract("cannot score an empty corpus".into()));
    }
    if hyps.len() != refs.len() {
        return Err(Error::Contract(format!("{} hypotheses for {} references", hyps.len(), refs.len())));
    }
    Ok(())
}

fn ngram_counts(tokens: &Tokens, n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// `(clipped matches, hypothesis n-grams)` for one pair.
fn ngram_stats(hyp: &Tokens, reference: &Tokens, n: usize) -> (usize, usize) {
    let h = ngram_counts(hyp, n);
    let r = ngram_counts(reference, n);
    let matched = h.iter().map(|(g, &c)| c.min(r.get(g).copied().unwrap_or(0))).sum();
    (matched, hyp.len().saturating_sub(n - 1))
}

fn bleu_from_stats(matched: [usize; 4], total: [usize; 4], hyp_len: usize, ref_len: usize) -> f64 {
    if hyp_len == 0 || matched[0] == 0 {
        return 0.0;
    }
    let mut log_p = (matched[0] as f64 / total[0] as f64).ln();
    for n in 1..4 {
        log_p += ((matched[n] + 1) as f64 / (total[n] + 1) as f64).ln();
    }
    let bp = if hyp_len > ref_len { 1.0 } else { (1.0 - ref_len as f64 / hyp_len as f64).exp() };
    (bp * (log_p / 4.0).exp()).clamp(0.0, 1.0)
}

/// Corpus BLEU-4 from n-gram counts pooled over all pairs.
pub fn bleu4(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64> {
    check(hyps, refs)?;
    let mut matched = [0; 4];
    let mut total = [0; 4];
    let (mut c, mut r) = (0, 0);
    for (h, rf) in hyps.iter().zip(refs) {
        for n in 1..=4 {
            let (m, t) = ngram_stats(h, rf, n);
            matched[n - 1] += m;
            total[n - 1] += t;
        }
        c += h.len();
        r += rf.len();
    }
    Ok(bleu_from_stats(matched, total, c, r))
}

pub fn sentence_bleu4(hyp: &Tokens, reference: &Tokens) -> f64 {
    let mut matched = [0; 4];
    let mut total = [0; 4];
    for n in 1..=4 {
        (matched[n - 1], total[n - 1]) = ngram_stats(hyp, reference, n);
    }
    bleu_from_stats(matched, total, hyp.len(), reference.len())
}

pub fn lcs_len(a: &Tokens, b: &Tokens) -> usize {
    let mut prev = vec![0; b.len() + 1];
    let mut cur = vec![0; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn sentence_rouge_l(hyp: &Tokens, reference: &Tokens) -> f64 {
    let lcs = lcs_len(hyp, reference);
    if lcs == 0 {
        return 0.0;
    }
    let r = lcs as f64 / reference.len() as f64;
    let p = lcs as f64 / hyp.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    ((1.0 + b2) * r * p / (r + b2 * p)).clamp(0.0, 1.0)
}

pub fn rouge_l(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64> {
    check(hyps, refs)?;
    Ok(hyps.iter().zip(refs).map(|(h, r)| sentence_rouge_l(h, r)).sum::<f64>() / hyps.len() as f64)
}

/// Exact unigram alignment: hypothesis tokens left to right, each taking
/// the reference position right after its predecessor's when that
/// continues a chunk, otherwise the first free matching position.
pub fn align_exact(hyp: &Tokens, reference: &Tokens) -> Vec<(usize, usize)> {
    let mut used = vec![false; reference.len()];
    let mut pairs = Vec::new();
    let mut last: Option<(usize, usize)> = None;
    for (i, tok) in hyp.iter().enumerate() {
        let cont = last
            .filter(|&(pi, pj)| pi + 1 == i && pj + 1 < reference.len())
            .map(|(_, pj)| pj + 1)
            .filter(|&j| !used[j] && reference[j] == *tok);
        let pick = cont.or_else(|| (0..reference.len()).find(|&j| !used[j] && reference[j] == *tok));
        if let Some(j) = pick {
            used[j] = true;
            pairs.push((i, j));
            last = Some((i, j));
        }
    }
    pairs
}

pub fn sentence_meteor(hyp: &Tokens, reference: &Tokens) -> f64 {
    let pairs = align_exact(hyp, reference);
    let m = pairs.len();
    if m == 0 {
        return 0.0;
    }
    let p = m as f64 / hyp.len() as f64;
    let r = m as f64 / reference.len() as f64;
    let f_mean = 10.0 * p * r / (r + 9.0 * p);
    let chunks = 1 + pairs.windows(2).filter(|w| !(w[1].0 == w[0].0 + 1 && w[1].1 == w[0].1 + 1)).count();
    let penalty = 0.5 * (chunks as f64 / m as f64).powi(3);
    (f_mean * (1.0 - penalty)).clamp(0.0, 1.0)
}

pub fn meteor_exact(hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<f64> {
    check(hyps, refs)?;
    Ok(hyps.iter().zip(refs).map(|(h, r)| sentence_meteor(h, r)).sum::<f64>() / hyps.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleScore {
    pub id: u64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub meteor: f64,
}

/// Corpus scores as percentages plus per-sample rows in [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub bleu4: f64,
    pub rouge_l: f64,
    #[serde(rename = "meteor-exact")]
    pub meteor: f64,
    pub bleu_smoothing: String,
    pub samples: Vec<SampleScore>,
}

impl EvalReport {
    pub fn compute(ids: &[u64], hyps: &[Vec<String>], refs: &[Vec<String>]) -> Result<Self> {
        if ids.len() != hyps.len() {
            return Err(Error::Contract("one id per hypothesis required".into()));
        }
        let samples = ids
            .iter()
            .zip(hyps.iter().zip(refs))
            .map(|(&id, (h, r))| SampleScore {
                id,
                bleu4: sentence_bleu4(h, r),
                rouge_l: sentence_rouge_l(h, r),
                meteor: sentence_meteor(h, r),
            })
            .collect();
        Ok(EvalReport {
            bleu4: 100.0 * bleu4(hyps, refs)?,
            rouge_l: 100.0 * rouge_l(hyps, refs)?,
            meteor: 100.0 * meteor_exact(hyps, refs)?,
            bleu_smoothing: BLEU_SMOOTHING.into(),
            samples,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    #[test]
    fn bleu_examples() {
        let refs = vec![t("the cat sat down"), t("a b c d e")];
        assert!((bleu4(&refs, &refs).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(bleu4(&[t("x y")], &[t("a b")]).unwrap(), 0.0);
        let got = bleu4(&[t("the cat sat")], &[t("the cat sat down")]).unwrap();
        assert!((got - (1.0f64 - 4.0 / 3.0).exp()).abs() < 1e-12);
        assert!(bleu4(&[], &[]).is_err());
    }

    #[test]
    fn rouge_examples() {
        assert_eq!(rouge_l(&[t("a b")], &[t("a b")]).unwrap(), 1.0);
        assert_eq!(rouge_l(&[t("x")], &[t("a b")]).unwrap(), 0.0);
        let (r, p, b2) = (0.75, 1.0, 1.44);
        let want = (1.0 + b2) * r * p / (r + b2 * p);
        assert!((rouge_l(&[t("a c d")], &[t("a b c d")]).unwrap() - want).abs() < 1e-12);
        assert_eq!(sentence_rouge_l(&[], &t("a")), 0.0);
    }

    #[test]
    fn meteor_examples() {
        let s = t("a b c");
        let want = 1.0 - 0.5 / 27.0;
        assert!((meteor_exact(std::slice::from_ref(&s), std::slice::from_ref(&s)).unwrap() - want).abs() < 1e-12);
        assert_eq!(meteor_exact(&[t("x")], &[t("y")]).unwrap(), 0.0);
        assert!((sentence_meteor(&t("a"), &t("a")) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn alignment_prefers_chunk_continuation() {
        assert_eq!(align_exact(&t("b c"), &t("c a b c")), [(0, 2), (1, 3)]);
    }
}
