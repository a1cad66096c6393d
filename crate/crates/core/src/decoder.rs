//! Attention LSTM decoder, scheduled-sampling loss and beam search.

use rand::Rng;

use crate::config::RunConfig;
use crate::encoder::EncodedFunction;
use crate::error::{Error, Result};
use crate::nn::{Dropout, Fuse, Linear, LstmCell};
use crate::tensor::{no_grad, ModelParams, Tensor};
use crate::vocab::{BOS, EOS};

#[derive(Debug, Clone)]
pub struct DecoderState {
    pub h: Tensor,
    pub c: Tensor,
}

#[derive(Debug, Clone)]
pub struct Decoder {
    pub vocab_size: usize,
    pub e_summary: Tensor,
    pub lstm: LstmCell,
    pub w_a: Tensor,
    pub out: Linear,
    pub fuse_init: Fuse,
}

/// Output of one decoding step.
pub struct Step {
    pub logits: Tensor,
    pub state: DecoderState,
    pub attention: Tensor,
}

impl Decoder {
    pub fn new(params: &mut ModelParams, cfg: &RunConfig, vocab_size: usize, rng: &mut impl Rng) -> Result<Self> {
        let d = cfg.d;
        Ok(Decoder {
            vocab_size,
            e_summary: params.matrix("decoder.E_summary", vocab_size, cfg.d_w, rng)?,
            lstm: LstmCell::new(params, "decoder.lstm", cfg.d_w + d, d, rng)?,
            w_a: params.matrix("decoder.W_a", d, d, rng)?,
            out: Linear::new(params, "decoder.out", 2 * d, vocab_size, true, rng)?,
            fuse_init: Fuse::new(params, "decoder.fuse_init", d, rng)?,
        })
    }

    /// Node representations followed by the z-weighted summary states.
    pub fn memory(enc: &EncodedFunction) -> Result<Tensor> {
        match &enc.summary_states {
            Some(s) => Tensor::concat_rows(&[enc.node_reps.clone(), s.clone()]),
            None => Ok(enc.node_reps.clone()),
        }
    }

    /// Hidden state `Fuse(h^g, z * summary_final)`, zero cell.
    pub fn initial_state(&self, enc: &EncodedFunction) -> Result<DecoderState> {
        let d = enc.graph_rep.cols();
        let summary = enc.summary_final.clone().unwrap_or_else(|| Tensor::zeros(1, d));
        Ok(DecoderState { h: self.fuse_init.forward(&enc.graph_rep, &summary)?, c: Tensor::zeros(1, d) })
    }

    /// Multiplicative attention `softmax(s W_a M^T)` and the weighted sum
    /// of memory rows.
    pub fn attention_context(&self, state: &Tensor, memory: &Tensor) -> Result<(Tensor, Tensor)> {
        if memory.rows() == 0 {
            return Err(Error::Contract("empty attention memory".into()));
        }
        let weights = state.matmul(&self.w_a)?.matmul(&memory.t())?.softmax_rows()?;
        Ok((weights.matmul(memory)?, weights))
    }

    pub fn decode_step(&self, prev: usize, state: &DecoderState, memory: &Tensor, drop: &mut Dropout) -> Result<Step> {
        if prev >= self.vocab_size {
            return Err(Error::Contract(format!("token {prev} outside vocabulary of {}", self.vocab_size)));
        }
        let emb = drop.apply(&self.e_summary.gather_rows(&[prev])?)?;
        let (ctx, attention) = self.attention_context(&state.h, memory)?;
        let x = Tensor::concat_cols(&[emb, ctx.clone()])?;
        let (h, c) = self.lstm.step(&x, &state.h, &state.c)?;
        let logits = self.out.forward(&Tensor::concat_cols(&[h.clone(), ctx])?)?;
        Ok(Step { logits, state: DecoderState { h, c }, attention })
    }

    /// Mean cross-entropy over `target` followed by EOS. Each input after
    /// the first is the gold token with probability `p_teacher`, otherwise
    /// the argmax of the previous step.
    pub fn teacher_forced_loss(
        &self,
        enc: &EncodedFunction,
        target: &[usize],
        p_teacher: f64,
        drop: &mut Dropout,
    ) -> Result<Tensor> {
        let memory = Self::memory(enc)?;
        let mut state = self.initial_state(enc)?;
        let gold: Vec<usize> = target.iter().copied().chain([EOS]).collect();
        let mut prev = BOS;
        let mut rows = Vec::with_capacity(gold.len());
        for t in 0..gold.len() {
            if t > 0 {
                prev = if drop.coin(p_teacher) {
                    gold[t - 1]
                } else {
                    argmax(&rows.last().map(Tensor::to_vec).unwrap_or_default())
                };
            }
            let step = self.decode_step(prev, &state, &memory, drop)?;
            state = step.state;
            rows.push(step.logits);
        }
        let logp = Tensor::concat_rows(&rows)?.log_softmax_rows()?;
        Ok(logp.pick(&gold)?.sum().scale(-1.0 / gold.len() as f64))
    }
}

/// Teacher-forcing probability `max(p_min, 1 - epoch / total)`.
pub fn teacher_probability(epoch: usize, total: usize, p_min: f64) -> f64 {
    (1.0 - epoch as f64 / total.max(1) as f64).max(p_min)
}

/// Index of the largest value; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
    logits.iter().map(|&x| x - lse).collect()
}

/// Anything that yields next-token log-probabilities from a state.
pub trait StepModel {
    type State: Clone;
    fn step(&self, prev: usize, state: &Self::State) -> Result<(Vec<f64>, Self::State)>;
}

/// The neural decoder bound to one encoded function, run without a tape.
pub struct NeuralStep<'a> {
    pub decoder: &'a Decoder,
    pub memory: Tensor,
}

impl StepModel for NeuralStep<'_> {
    type State = DecoderState;

    fn step(&self, prev: usize, state: &DecoderState) -> Result<(Vec<f64>, DecoderState)> {
        no_grad(|| {
            let step = self.decoder.decode_step(prev, state, &self.memory, &mut Dropout::off())?;
            Ok((log_softmax(&step.logits.to_vec()), step.state))
        })
    }
}

#[derive(Debug, Clone)]
pub struct Hypothesis<S> {
    /// Starts with BOS; ends with EOS once finished.
    pub tokens: Vec<usize>,
    pub logprob: f64,
    pub state: S,
}

impl<S> Hypothesis<S> {
    pub fn finished(&self) -> bool {
        self.tokens.len() > 1 && self.tokens.last() == Some(&EOS)
    }

    /// Generated tokens, BOS and EOS stripped.
    pub fn output(&self) -> Vec<usize> {
        self.tokens[1..].iter().copied().filter(|&t| t != EOS).collect()
    }

    /// `logprob / len^alpha` over generated tokens, EOS included.
    pub fn score(&self, alpha: f64) -> f64 {
        normalized_score(self.logprob, self.tokens.len() - 1, alpha)
    }
}

pub fn normalized_score(logprob: f64, len: usize, alpha: f64) -> f64 {
    logprob / (len.max(1) as f64).powf(alpha)
}

/// Argmax decoding until EOS or `max_len` tokens.
pub fn greedy_decode<M: StepModel>(model: &M, init: M::State, max_len: usize) -> Result<Hypothesis<M::State>> {
    let mut hyp = Hypothesis { tokens: vec![BOS], logprob: 0.0, state: init };
    while hyp.tokens.len() <= max_len && !hyp.finished() {
        let (logp, state) = model.step(*hyp.tokens.last().expect("nonempty"), &hyp.state)?;
        let tok = argmax(&logp);
        hyp.tokens.push(tok);
        hyp.logprob += logp[tok];
        hyp.state = state;
    }
    Ok(hyp)
}

/// Beam search: at each step every live hypothesis proposes its `width`
/// best tokens, the `width` best candidates by cumulative log-probability
/// survive, and those ending in EOS are set aside. Stops after `width`
/// finished hypotheses or `max_len` steps and returns the best by
/// length-normalized score. The greedy path also competes, since pruning
/// by raw log-probability can otherwise drop it and end below greedy.
pub fn beam_search<M: StepModel>(
    model: &M,
    init: M::State,
    width: usize,
    max_len: usize,
    alpha: f64,
) -> Result<Hypothesis<M::State>> {
    if width == 0 {
        return Err(Error::Contract("beam width must be at least 1".into()));
    }
    let greedy = if width > 1 { Some(greedy_decode(model, init.clone(), max_len)?) } else { None };
    let mut live = vec![Hypothesis { tokens: vec![BOS], logprob: 0.0, state: init }];
    let mut finished = Vec::new();
    for _ in 0..max_len {
        let mut cands: Vec<(f64, usize, usize)> = Vec::new();
        let mut states = Vec::with_capacity(live.len());
        for (b, hyp) in live.iter().enumerate() {
            let (logp, state) = model.step(*hyp.tokens.last().expect("nonempty"), &hyp.state)?;
            for tok in top_k(&logp, width) {
                cands.push((hyp.logprob + logp[tok], b, tok));
            }
            states.push(state);
        }
        cands.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        cands.truncate(width);
        let mut next = Vec::with_capacity(width);
        for (logprob, b, tok) in cands {
            let mut tokens = live[b].tokens.clone();
            tokens.push(tok);
            let hyp = Hypothesis { tokens, logprob, state: states[b].clone() };
            if tok == EOS {
                finished.push(hyp);
            } else {
                next.push(hyp);
            }
        }
        live = next;
        if finished.len() >= width || live.is_empty() {
            break;
        }
    }
    let pool = if finished.is_empty() { live } else { finished };
    let mut best: Option<Hypothesis<M::State>> = None;
    for hyp in pool.into_iter().chain(greedy) {
        if best.as_ref().is_none_or(|b| hyp.score(alpha) > b.score(alpha)) {
            best = Some(hyp);
        }
    }
    best.ok_or_else(|| Error::Contract("beam search produced no hypothesis".into()))
}

/// Indices of the `k` largest values, best first, lowest index on ties.
fn top_k(values: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
    idx.truncate(k);
    idx
}
