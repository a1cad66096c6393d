//! Beam search against greedy decoding on a fixed next-token table where
//! the greedy first step leads into a flat distribution.
//!
//! ```text
//! cargo run --example beam
//! ```

use std::collections::BTreeMap;

use cpgsum::decoder::{beam_search, greedy_decode, StepModel};
use cpgsum::vocab::{BOS, EOS};

const WORDS: [(usize, &str); 3] = [(EOS, "</s>"), (4, "open"), (5, "close")];

/// Next-token probabilities over {EOS, open, close}, keyed by the prefix.
struct Table(BTreeMap<Vec<usize>, [f64; 3]>);

impl StepModel for Table {
    type State = Vec<usize>;

    fn step(&self, prev: usize, prefix: &Vec<usize>) -> cpgsum::Result<(Vec<f64>, Vec<usize>)> {
        let mut prefix = prefix.clone();
        prefix.push(prev);
        let p = self.0.get(&prefix).copied().unwrap_or([1.0 / 3.0; 3]);
        let mut logp = vec![f64::NEG_INFINITY; 6];
        for ((t, _), q) in WORDS.iter().zip(p) {
            logp[*t] = q.ln();
        }
        Ok((logp, prefix))
    }
}

fn words(tokens: &[usize]) -> String {
    tokens.iter().filter_map(|t| WORDS.iter().find(|w| w.0 == *t).map(|w| w.1)).collect::<Vec<_>>().join(" ")
}

fn main() -> cpgsum::Result<()> {
    let model = Table(BTreeMap::from([
        (vec![BOS], [0.1, 0.5, 0.4]),
        (vec![BOS, 4], [0.33, 0.34, 0.33]),
        (vec![BOS, 5], [0.9, 0.05, 0.05]),
    ]));
    let alpha = 0.7;
    let g = greedy_decode(&model, Vec::new(), 6)?;
    println!("greedy   {:<24} logp {:.3} score {:.3}", words(&g.tokens), g.logprob, g.score(alpha));
    for width in [2, 3, 5] {
        let b = beam_search(&model, Vec::new(), width, 6, alpha)?;
        println!("beam {width}   {:<24} logp {:.3} score {:.3}", words(&b.tokens), b.logprob, b.score(alpha));
    }
    Ok(())
}
