//! End-to-end workflows: corpus preparation, training with early stopping,
//! evaluation and single-function summarization.

use std::rc::Rc;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::config::RunConfig;
use crate::corpus::CorpusRecord;
use crate::cpg::{build_cpg, CodeGraph};
use crate::decoder::teacher_probability;
use crate::encoder::GraphInput;
use crate::error::{Error, Result};
use crate::frontend::parse_function;
use crate::metrics::{bleu4, EvalReport};
use crate::model::{Model, Prepared, PreparedRetrieval};
use crate::nn::Dropout;
use crate::retrieval::{CorpusEntry, RetrievalIndex};
use crate::rng::seeded;
use crate::tensor::Tensor;
use crate::vocab::{code_subtokens, summary_tokens, Vocab};

pub fn graph_of(code: &str) -> Result<CodeGraph> {
    build_cpg(&parse_function(code)?)
}

/// A record whose code parsed into a graph.
#[derive(Debug, Clone)]
pub struct Parsed {
    pub record: CorpusRecord,
    pub graph: CodeGraph,
    pub summary: Vec<String>,
}

/// Parses every record, returning the successes and `(id, error)` for the
/// rest.
pub fn parse_records(records: &[CorpusRecord]) -> (Vec<Parsed>, Vec<(u64, String)>) {
    let mut ok = Vec::new();
    let mut skipped = Vec::new();
    for r in records {
        match graph_of(&r.code) {
            Ok(graph) => ok.push(Parsed { record: r.clone(), graph, summary: summary_tokens(&r.summary) }),
            Err(e) => skipped.push((r.id, e.to_string())),
        }
    }
    (ok, skipped)
}

/// Code and summary vocabularies from the training split.
pub fn build_vocabs(parsed: &[Parsed], cap: usize) -> Result<(Vocab, Vocab)> {
    let code: Vec<String> = parsed.iter().flat_map(|p| code_subtokens(&p.graph.nodes[0].subseq)).collect();
    let summary: Vec<&str> = parsed.iter().flat_map(|p| p.summary.iter().map(String::as_str)).collect();
    Ok((Vocab::build(code.iter().map(String::as_str), cap)?, Vocab::build(summary, cap)?))
}

/// Retrieval database with each entry's graph lowered for the model.
pub struct Retriever {
    pub index: RetrievalIndex,
    graphs: Vec<Rc<GraphInput>>,
}

impl Retriever {
    pub fn new(index: RetrievalIndex, model: &Model) -> Result<Self> {
        let graphs = index
            .entries
            .iter()
            .map(|e| {
                let g = graph_of(&e.code)
                    .map_err(|err| Error::Retrieval(format!("index entry {} does not parse: {err}", e.id)))?;
                Ok(Rc::new(model.graph_input(&g)?))
            })
            .collect::<Result<_>>()?;
        Ok(Retriever { index, graphs })
    }

    /// Index over parsed training records.
    pub fn build_index(parsed: &[Parsed], cfg: &RunConfig) -> Result<RetrievalIndex> {
        let entries = parsed
            .iter()
            .map(|p| CorpusEntry::new(p.record.id, &p.record.code, p.summary.clone()))
            .collect::<Result<_>>()?;
        Ok(RetrievalIndex::build(entries, cfg.backend))
    }

    pub fn lookup(&self, model: &Model, code: &str, exclude: Option<u64>) -> Result<(PreparedRetrieval, &CorpusEntry)> {
        let query = CorpusEntry::new(exclude.unwrap_or(u64::MAX), code, Vec::new())?;
        let hit = self.index.query(&query, exclude)?;
        let entry = &self.index.entries[hit.index];
        Ok((
            PreparedRetrieval {
                id: hit.id,
                index: hit.index,
                graph: Rc::clone(&self.graphs[hit.index]),
                summary: model.summary_vocab.encode(&entry.summary),
                z: hit.z,
            },
            entry,
        ))
    }
}

/// Lowers one parsed function; `exclude` removes the function itself from
/// the retrieval candidates.
pub fn prepare(
    model: &Model,
    retriever: Option<&Retriever>,
    parsed: &Parsed,
    exclude: Option<u64>,
) -> Result<Prepared> {
    let retrieved = match retriever {
        Some(r) if model.config.uses_retrieval() => Some(r.lookup(model, &parsed.record.code, exclude)?.0),
        _ => None,
    };
    Ok(Prepared {
        id: parsed.record.id,
        graph: model.graph_input(&parsed.graph)?,
        retrieved,
        target: model.summary_vocab.encode(&parsed.summary),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub trained: usize,
    pub skipped: usize,
    pub epochs_run: usize,
    pub best_epoch: usize,
    pub best_val_bleu: Option<f64>,
    pub losses: Vec<f64>,
}

pub struct Trained {
    pub model: Model,
    pub index: Option<RetrievalIndex>,
    pub report: TrainReport,
}

fn snapshot(model: &Model) -> Vec<Vec<f64>> {
    model.params.iter().map(|(_, t)| t.to_vec()).collect()
}

fn restore(model: &Model, snap: &[Vec<f64>]) {
    for ((_, t), v) in model.params.iter().zip(snap) {
        t.data_mut().copy_from_slice(v);
    }
}

/// Trains on `train`, selecting the epoch with the best validation BLEU-4
/// when `valid` is nonempty and the last epoch otherwise. `log` receives
/// one JSON event per epoch.
pub fn train(
    cfg: &RunConfig,
    train: &[CorpusRecord],
    valid: &[CorpusRecord],
    log: &mut dyn FnMut(serde_json::Value),
) -> Result<Trained> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Corpus("training corpus is empty".into()));
    }
    let (parsed, skipped) = parse_records(train);
    for (id, err) in &skipped {
        log(json!({"event": "skip", "id": id, "error": err}));
    }
    if skipped.len() as f64 > cfg.max_skip_ratio * train.len() as f64 {
        return Err(Error::Corpus(format!("{} of {} training functions failed to parse", skipped.len(), train.len())));
    }
    let (code_vocab, summary_vocab) = build_vocabs(&parsed, cfg.vocab_cap)?;
    let model = Model::new(cfg.clone(), code_vocab, summary_vocab)?;
    let (index, retriever) = if cfg.uses_retrieval() {
        let index = Retriever::build_index(&parsed, cfg)?;
        let retriever = Retriever::new(index.clone(), &model)?;
        (Some(index), Some(retriever))
    } else {
        (None, None)
    };
    let samples =
        parsed.iter().map(|p| prepare(&model, retriever.as_ref(), p, Some(p.record.id))).collect::<Result<Vec<_>>>()?;
    let (valid_parsed, _) = parse_records(valid);
    let valid_samples =
        valid_parsed.iter().map(|p| prepare(&model, retriever.as_ref(), p, None)).collect::<Result<Vec<_>>>()?;

    let mut adam =
        crate::tensor::Adam::new(&model.params, crate::tensor::AdamConfig { lr: cfg.lr, ..Default::default() });
    let mut rng = seeded(cfg.seed ^ 0x5eed_da7a);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
    let mut losses = Vec::new();
    let mut stale = 0;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let p_teacher = teacher_probability(epoch, cfg.epochs, cfg.teacher_min);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch) {
            model.params.zero_grads();
            let mut drop = Dropout::train(cfg.dropout, &mut rng);
            let parts =
                batch.iter().map(|&i| model.loss(&samples[i], p_teacher, &mut drop)).collect::<Result<Vec<_>>>()?;
            let loss = Tensor::concat_rows(&parts)?.sum().scale(1.0 / batch.len() as f64);
            if !loss.item().is_finite() {
                return Err(Error::Numeric(format!("non-finite loss at epoch {epoch}")));
            }
            total += loss.item() * batch.len() as f64;
            loss.backward()?;
            adam.step(&model.params)?;
        }
        let mean_loss = total / samples.len() as f64;
        losses.push(mean_loss);

        let val_bleu = if valid_samples.is_empty() { None } else { Some(corpus_bleu(&model, &valid_samples)?) };
        log(json!({"event": "epoch", "epoch": epoch, "loss": mean_loss, "val_bleu": val_bleu, "teacher_p": p_teacher}));

        match val_bleu {
            Some(b) if best.as_ref().is_none_or(|(_, bb, _)| b > *bb) => {
                best = Some((epoch, b, snapshot(&model)));
                stale = 0;
            }
            Some(_) => stale += 1,
            None => {}
        }
        let reached = cfg.target_loss.is_some_and(|t| mean_loss < t);
        if stale >= cfg.patience || reached {
            break;
        }
    }
    let epochs_run = losses.len();
    let (best_epoch, best_val_bleu) = match best {
        Some((e, b, snap)) => {
            restore(&model, &snap);
            (e, Some(b))
        }
        None => (epochs_run - 1, None),
    };
    // Checkpoints store f32; round now so the returned model is the saved one.
    model.params.round_to_f32();
    let report =
        TrainReport { trained: samples.len(), skipped: skipped.len(), epochs_run, best_epoch, best_val_bleu, losses };
    log(json!({"event": "done", "best_epoch": best_epoch, "best_val_bleu": best_val_bleu, "skipped": skipped.len()}));
    Ok(Trained { model, index, report })
}

fn corpus_bleu(model: &Model, samples: &[Prepared]) -> Result<f64> {
    let mut hyps = Vec::with_capacity(samples.len());
    let mut refs = Vec::with_capacity(samples.len());
    for s in samples {
        let hyp = model.summarize(s, model.config.beam)?;
        hyps.push(model.summary_vocab.decode(&hyp.output()));
        refs.push(model.summary_vocab.decode(&s.target));
    }
    bleu4(&hyps, &refs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisRecord {
    pub id: u64,
    pub hypothesis: String,
    pub reference: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    #[serde(flatten)]
    pub report: EvalReport,
    pub beam: usize,
    /// Ids of functions that failed to parse and were scored as empty.
    pub unparsed: Vec<u64>,
    #[serde(skip)]
    pub hypotheses: Vec<HypothesisRecord>,
}

/// Beam-decodes every record and scores against the references.
/// Unparseable functions get an empty hypothesis. With `self_exclude` each
/// record's own id is barred from retrieval, as during training.
pub fn evaluate(
    model: &Model,
    retriever: Option<&Retriever>,
    records: &[CorpusRecord],
    beam: usize,
    self_exclude: bool,
) -> Result<Evaluation> {
    if records.is_empty() {
        return Err(Error::Contract("evaluation corpus is empty".into()));
    }
    let mut ids = Vec::new();
    let mut hyps = Vec::new();
    let mut refs = Vec::new();
    let mut unparsed = Vec::new();
    let mut hypotheses = Vec::new();
    for r in records {
        let reference = summary_tokens(&r.summary);
        let hyp = match graph_of(&r.code) {
            Ok(graph) => {
                let parsed = Parsed { record: r.clone(), graph, summary: reference.clone() };
                let sample = prepare(model, retriever, &parsed, self_exclude.then_some(r.id))?;
                model.summary_vocab.decode(&model.summarize(&sample, beam)?.output())
            }
            Err(_) => {
                unparsed.push(r.id);
                Vec::new()
            }
        };
        hypotheses.push(HypothesisRecord { id: r.id, hypothesis: hyp.join(" "), reference: reference.join(" ") });
        ids.push(r.id);
        hyps.push(hyp);
        refs.push(reference);
    }
    Ok(Evaluation { report: EvalReport::compute(&ids, &hyps, &refs)?, beam, unparsed, hypotheses })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalEcho {
    pub id: u64,
    pub code: String,
    pub summary: String,
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryOutput {
    pub summary: String,
    pub tokens: Vec<String>,
    pub retrieval: Option<RetrievalEcho>,
    /// Per output step, weights over node rows then summary rows.
    pub attention: Vec<Vec<f64>>,
}

pub fn summarize(
    model: &Model,
    retriever: Option<&Retriever>,
    code: &str,
    beam: usize,
    with_attention: bool,
) -> Result<SummaryOutput> {
    let graph = graph_of(code)?;
    let parsed = Parsed {
        record: CorpusRecord { id: 0, code: code.to_string(), summary: String::new() },
        graph,
        summary: Vec::new(),
    };
    let sample = prepare(model, retriever, &parsed, None)?;
    let hyp = model.summarize(&sample, beam)?;
    let tokens = model.summary_vocab.decode(&hyp.output());
    let retrieval = match (retriever, &sample.retrieved) {
        (Some(r), Some(p)) => {
            let e = &r.index.entries[p.index];
            Some(RetrievalEcho { id: e.id, code: e.code.clone(), summary: e.summary.join(" "), z: p.z })
        }
        _ => None,
    };
    let attention = if with_attention { model.attention_trace(&sample, &hyp.tokens)? } else { Vec::new() };
    Ok(SummaryOutput { summary: tokens.join(" "), tokens, retrieval, attention })
}
