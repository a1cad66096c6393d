//! The full summarizer: encoder, decoder, vocabularies and parameters.

use std::rc::Rc;

use crate::config::RunConfig;
use crate::cpg::CodeGraph;
use crate::decoder::{beam_search, greedy_decode, Decoder, DecoderState, Hypothesis, NeuralStep};
use crate::encoder::{EncodedFunction, Encoder, GraphInput, RetrievedInput};
use crate::error::Result;
use crate::nn::Dropout;
use crate::rng::seeded;
use crate::tensor::{no_grad, ModelParams, Tensor};
use crate::vocab::{Vocab, BOS};

/// A retrieved neighbour lowered for the encoder.
#[derive(Debug, Clone)]
pub struct PreparedRetrieval {
    pub id: u64,
    /// Position in the retrieval index.
    pub index: usize,
    pub graph: Rc<GraphInput>,
    pub summary: Vec<usize>,
    pub z: f64,
}

/// One function ready for the model.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub id: u64,
    pub graph: GraphInput,
    pub retrieved: Option<PreparedRetrieval>,
    /// Summary-vocabulary ids of the reference, without BOS/EOS.
    pub target: Vec<usize>,
}

pub struct Model {
    pub config: RunConfig,
    pub code_vocab: Vocab,
    pub summary_vocab: Vocab,
    pub params: ModelParams,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

impl Model {
    /// Fresh parameters drawn from the configured seed.
    pub fn new(config: RunConfig, code_vocab: Vocab, summary_vocab: Vocab) -> Result<Self> {
        config.validate()?;
        let mut rng = seeded(config.seed);
        let mut params = ModelParams::new();
        let encoder = Encoder::new(&mut params, &config, code_vocab.len(), &mut rng)?;
        let decoder = Decoder::new(&mut params, &config, summary_vocab.len(), &mut rng)?;
        Ok(Model { config, code_vocab, summary_vocab, params, encoder, decoder })
    }

    pub fn graph_input(&self, graph: &CodeGraph) -> Result<GraphInput> {
        GraphInput::new(graph, &self.code_vocab, self.config.static_agg)
    }

    pub fn encode(&self, sample: &Prepared, drop: &mut Dropout) -> Result<EncodedFunction> {
        let retrieved =
            sample.retrieved.as_ref().map(|r| RetrievedInput { graph: &r.graph, summary: &r.summary, z: r.z });
        self.encoder.encode(&sample.graph, retrieved, &self.decoder.e_summary, drop)
    }

    pub fn loss(&self, sample: &Prepared, p_teacher: f64, drop: &mut Dropout) -> Result<Tensor> {
        let enc = self.encode(sample, drop)?;
        self.decoder.teacher_forced_loss(&enc, &sample.target, p_teacher, drop)
    }

    fn step_model(&self, sample: &Prepared) -> Result<(NeuralStep<'_>, DecoderState)> {
        let enc = self.encode(sample, &mut Dropout::off())?;
        let memory = Decoder::memory(&enc)?;
        let init = self.decoder.initial_state(&enc)?;
        Ok((NeuralStep { decoder: &self.decoder, memory }, init))
    }

    /// Beam search with the configured length limit and normalization.
    pub fn summarize(&self, sample: &Prepared, width: usize) -> Result<Hypothesis<DecoderState>> {
        no_grad(|| {
            let (step, init) = self.step_model(sample)?;
            beam_search(&step, init, width, self.config.max_decode_len, self.config.length_alpha)
        })
    }

    pub fn greedy(&self, sample: &Prepared) -> Result<Hypothesis<DecoderState>> {
        no_grad(|| {
            let (step, init) = self.step_model(sample)?;
            greedy_decode(&step, init, self.config.max_decode_len)
        })
    }

    /// Decoder attention weights while emitting `tokens` (BOS first).
    pub fn attention_trace(&self, sample: &Prepared, tokens: &[usize]) -> Result<Vec<Vec<f64>>> {
        no_grad(|| {
            let enc = self.encode(sample, &mut Dropout::off())?;
            let memory = Decoder::memory(&enc)?;
            let mut state = self.decoder.initial_state(&enc)?;
            let mut out = Vec::new();
            let mut prev = BOS;
            for &tok in tokens.iter().skip(1) {
                let step = self.decoder.decode_step(prev, &state, &memory, &mut Dropout::off())?;
                out.push(step.attention.to_vec());
                state = step.state;
                prev = tok;
            }
            Ok(out)
        })
    }
}
