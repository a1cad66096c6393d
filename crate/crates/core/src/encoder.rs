//! Graph encoder: node initialization, retrieval-augmented node features,
//! the attention-built dynamic graph and hybrid static/dynamic message
//! passing with gated fusion and a GRU update.

use std::collections::BTreeMap;
use std::rc::Rc;

use rand::Rng;

use crate::config::{RunConfig, StaticAgg};
use crate::cpg::{CodeGraph, EdgeType};
use crate::error::{Error, Result};
use crate::frontend::NodeType;
use crate::nn::{BiLstm, Dropout, Fuse, GruCell, Linear};
use crate::tensor::{ModelParams, PairTypes, Tensor};
use crate::vocab::{code_subtokens, Vocab, PAD};

/// A code graph lowered to the index and matrix form the encoder consumes.
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub m: usize,
    pub node_types: Vec<usize>,
    /// Code-vocabulary ids per node; a lone PAD for empty subsequences.
    pub subseqs: Vec<Vec<usize>>,
    /// `c_in[v][u]`: number of edges `u -> v` (row-normalized under mean
    /// aggregation); `c_out` likewise for `v -> u`.
    pub c_in: Tensor,
    pub c_out: Tensor,
    /// `n_in[v][t]`: number of incoming edges of type `t`.
    pub n_in: Tensor,
    pub n_out: Tensor,
    /// Edge types linking each unordered pair, as bitmasks.
    pub pair_types: Rc<PairTypes>,
    /// Distinct nonzero type masks as rows of a `C x k` indicator matrix.
    pub combos: Option<Tensor>,
    /// Index into `combos` for every ordered pair.
    pub combo_index: Rc<Vec<Option<usize>>>,
}

impl GraphInput {
    pub fn new(graph: &CodeGraph, vocab: &Vocab, agg: StaticAgg) -> Result<Self> {
        let m = graph.m();
        let k = EdgeType::COUNT;
        let node_types = graph.nodes.iter().map(|n| n.node_type.index()).collect();
        let subseqs = graph
            .nodes
            .iter()
            .map(|n| {
                let ids = vocab.encode(&code_subtokens(&n.subseq));
                if ids.is_empty() {
                    vec![PAD]
                } else {
                    ids
                }
            })
            .collect();

        let mut c_in = vec![0.0; m * m];
        let mut c_out = vec![0.0; m * m];
        let mut n_in = vec![0.0; m * k];
        let mut n_out = vec![0.0; m * k];
        let mut masks = vec![0u8; m * m];
        for e in &graph.edges {
            let t = e.edge_type.index();
            c_in[e.dst * m + e.src] += 1.0;
            c_out[e.src * m + e.dst] += 1.0;
            n_in[e.dst * k + t] += 1.0;
            n_out[e.src * k + t] += 1.0;
            masks[e.src * m + e.dst] |= 1 << t;
            masks[e.dst * m + e.src] |= 1 << t;
        }
        if agg == StaticAgg::Mean {
            for v in 0..m {
                for (c, n) in [(&mut c_in, &mut n_in), (&mut c_out, &mut n_out)] {
                    let deg: f64 = c[v * m..(v + 1) * m].iter().sum();
                    if deg > 0.0 {
                        c[v * m..(v + 1) * m].iter_mut().for_each(|x| *x /= deg);
                        n[v * k..(v + 1) * k].iter_mut().for_each(|x| *x /= deg);
                    }
                }
            }
        }

        let distinct: BTreeMap<u8, usize> = masks
            .iter()
            .filter(|&&b| b != 0)
            .copied()
            .collect::<std::collections::BTreeSet<u8>>()
            .into_iter()
            .enumerate()
            .map(|(i, b)| (b, i))
            .collect();
        let combo_index = masks.iter().map(|b| distinct.get(b).copied()).collect();
        let combos = if distinct.is_empty() {
            None
        } else {
            let mut rows = vec![0.0; distinct.len() * k];
            for (&bits, &i) in &distinct {
                for t in 0..k {
                    if bits & (1 << t) != 0 {
                        rows[i * k + t] = 1.0;
                    }
                }
            }
            Some(Tensor::from_vec(distinct.len(), k, rows)?)
        };

        Ok(GraphInput {
            m,
            node_types,
            subseqs,
            c_in: Tensor::from_vec(m, m, c_in)?,
            c_out: Tensor::from_vec(m, m, c_out)?,
            n_in: Tensor::from_vec(m, k, n_in)?,
            n_out: Tensor::from_vec(m, k, n_out)?,
            pair_types: Rc::new(PairTypes { m, masks }),
            combos,
            combo_index: Rc::new(combo_index),
        })
    }
}

/// Retrieved neighbour as the encoder sees it.
#[derive(Debug, Clone, Copy)]
pub struct RetrievedInput<'a> {
    pub graph: &'a GraphInput,
    /// Summary-vocabulary ids of the retrieved summary.
    pub summary: &'a [usize],
    pub z: f64,
}

#[derive(Debug, Clone)]
pub struct EncodedFunction {
    /// Initial node matrix `H_c`.
    pub h: Tensor,
    pub a_aug: Option<Tensor>,
    pub comp: Tensor,
    pub node_reps: Tensor,
    /// `1 x d` max-pooled graph representation.
    pub graph_rep: Tensor,
    /// z-weighted states of the retrieved summary.
    pub summary_states: Option<Tensor>,
    /// z-weighted final state of the retrieved summary.
    pub summary_final: Option<Tensor>,
    pub z: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Ablation {
    pub no_static: bool,
    pub no_dynamic: bool,
    pub no_augment: bool,
}

#[derive(Debug, Clone)]
pub struct Encoder {
    pub d: usize,
    pub hops: usize,
    pub ablation: Ablation,
    pub e_seqtoken: Tensor,
    pub e_nodetype: Tensor,
    pub e_edgetype: Tensor,
    pub seq_bilstm: BiLstm,
    pub node_init: Linear,
    pub w_aug: Tensor,
    pub w_c: Tensor,
    pub w_c2: Tensor,
    pub summary_bilstm: BiLstm,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_r: Tensor,
    pub w_v: Tensor,
    pub w_f: Tensor,
    pub w_proj: Tensor,
    pub fuse_static: Fuse,
    pub fuse_dynamic: Fuse,
    pub fuse_hybrid: Fuse,
    pub gru: GruCell,
}

impl Encoder {
    pub fn new(params: &mut ModelParams, cfg: &RunConfig, code_vocab: usize, rng: &mut impl Rng) -> Result<Self> {
        let (d, d_e, d_w, d_t) = (cfg.d, cfg.d_e, cfg.d_w, cfg.d_t);
        let mut m = |name: &str, r: usize, c: usize, rng: &mut _| params.matrix(format!("encoder.{name}"), r, c, rng);
        let e_seqtoken = m("E_seqtoken", code_vocab, d_w, rng)?;
        let e_nodetype = m("E_nodetype", NodeType::ALL.len(), d_t, rng)?;
        let e_edgetype = m("E_edgetype", EdgeType::COUNT, d_e, rng)?;
        let w_aug = m("W", d, d, rng)?;
        let w_c = m("W_c", d, d, rng)?;
        let w_c2 = m("W_c2", d, d, rng)?;
        let w_q = m("W_Q", d, d, rng)?;
        let w_k = m("W_K", d, d, rng)?;
        let w_r = m("W_R", d_e, d, rng)?;
        let w_v = m("W_V", d, d, rng)?;
        let w_f = m("W_F", d_e, d, rng)?;
        let w_proj = m("W_proj", d_e, d, rng)?;
        Ok(Encoder {
            d,
            hops: cfg.hops,
            ablation: Ablation { no_static: cfg.no_static, no_dynamic: cfg.no_dynamic, no_augment: cfg.no_augment },
            e_seqtoken,
            e_nodetype,
            e_edgetype,
            w_aug,
            w_c,
            w_c2,
            w_q,
            w_k,
            w_r,
            w_v,
            w_f,
            w_proj,
            seq_bilstm: BiLstm::new(params, "encoder.seq_bilstm", d_w, d, rng)?,
            node_init: Linear::new(params, "encoder.node_init", d_t + d, d, true, rng)?,
            summary_bilstm: BiLstm::new(params, "encoder.summary_bilstm", d_w, d, rng)?,
            fuse_static: Fuse::new(params, "encoder.fuse_static", d, rng)?,
            fuse_dynamic: Fuse::new(params, "encoder.fuse_dynamic", d, rng)?,
            fuse_hybrid: Fuse::new(params, "encoder.fuse_hybrid", d, rng)?,
            gru: GruCell::new(params, "encoder.gru", d, rng)?,
        })
    }

    /// `h_v = linear([E_nodetype[type]; bilstm_final(subseq)])` per node.
    pub fn init_nodes(&self, g: &GraphInput, drop: &mut Dropout) -> Result<Tensor> {
        if let Some(&bad) = g.node_types.iter().find(|&&t| t >= NodeType::ALL.len()) {
            return Err(Error::Contract(format!("unknown node type index {bad}")));
        }
        let types = drop.apply(&self.e_nodetype.gather_rows(&g.node_types)?)?;
        let table = &self.e_seqtoken;
        let out = self.seq_bilstm.run(&g.subseqs, &mut |ids| drop.apply(&table.gather_rows(ids)?))?;
        let finals = drop.apply(&out.finals)?;
        self.node_init.forward(&Tensor::concat_cols(&[types, finals])?)
    }

    /// Row-normalized `exp(ReLU(H_c W) ReLU(H_c' W)^T)`.
    pub fn complementary_attention(&self, hc: &Tensor, hc2: &Tensor) -> Result<Tensor> {
        let a = hc.matmul(&self.w_aug)?.relu();
        let b = hc2.matmul(&self.w_aug)?.relu();
        a.matmul(&b.t())?.softmax_rows()
    }

    /// `z * A_aug * H_c'`.
    pub fn inject_retrieved(a_aug: &Tensor, hc2: &Tensor, z: f64) -> Result<Tensor> {
        Ok(a_aug.matmul(hc2)?.scale(z))
    }

    /// `H_c W_c + H'_c W_c'`, or `H_c W_c` alone without retrieval.
    pub fn merge_comp(&self, hc: &Tensor, injected: Option<&Tensor>) -> Result<Tensor> {
        let base = hc.matmul(&self.w_c)?;
        match injected {
            Some(h2) => base.add(&h2.matmul(&self.w_c2)?),
            None => Ok(base),
        }
    }

    /// BiLSTM states of the retrieved summary and its final state, both
    /// scaled by `z`. `None` for an empty summary.
    pub fn encode_retrieved_summary(
        &self,
        summary: &[usize],
        z: f64,
        embed: &Tensor,
        drop: &mut Dropout,
    ) -> Result<Option<(Tensor, Tensor)>> {
        if summary.is_empty() {
            return Ok(None);
        }
        let out = self.summary_bilstm.run(&[summary.to_vec()], &mut |ids| drop.apply(&embed.gather_rows(ids)?))?;
        let states = drop.apply(&out.states(0)?)?.scale(z);
        let last = states.slice_rows(states.rows() - 1, states.rows())?;
        let first = states.slice_rows(0, 1)?;
        let half = self.d / 2;
        let fin = Tensor::concat_cols(&[last.slice_cols(0, half)?, first.slice_cols(half, self.d)?])?;
        Ok(Some((states, fin)))
    }

    /// `A[i][j] = ReLU(h_i W^Q) . (ReLU(h_j W^K) + ReLU(e_ij W^R)) / sqrt(d)`.
    pub fn dynamic_attention(&self, h: &Tensor, g: &GraphInput) -> Result<Tensor> {
        let q = h.matmul(&self.w_q)?.relu();
        let k = h.matmul(&self.w_k)?.relu();
        let mut scores = q.matmul(&k.t())?;
        if let Some(combos) = &g.combos {
            let r = combos.matmul(&self.e_edgetype)?.matmul(&self.w_r)?.relu();
            let qr = q.matmul(&r.t())?;
            scores = scores.add(&qr.pair_gather(Rc::clone(&g.combo_index))?)?;
        }
        Ok(scores.scale(1.0 / (self.d as f64).sqrt()))
    }

    /// `(softmax(A), softmax(A^T))`.
    pub fn split_normalize(a: &Tensor) -> Result<(Tensor, Tensor)> {
        Ok((a.softmax_rows()?, a.t().softmax_rows()?))
    }

    /// Fuses the incoming and outgoing neighbour sums of every node.
    pub fn static_message_pass(&self, h: &Tensor, g: &GraphInput) -> Result<Tensor> {
        let edge = self.e_edgetype.matmul(&self.w_proj)?;
        let h_in = g.c_in.matmul(h)?.add(&g.n_in.matmul(&edge)?)?;
        let h_out = g.c_out.matmul(h)?.add(&g.n_out.matmul(&edge)?)?;
        self.fuse_static.forward(&h_in, &h_out)
    }

    /// Attention-weighted neighbour sums over the dynamic graph.
    pub fn dynamic_message_pass(&self, a_in: &Tensor, a_out: &Tensor, h: &Tensor, g: &GraphInput) -> Result<Tensor> {
        let hv = h.matmul(&self.w_v)?;
        let ef = self.e_edgetype.matmul(&self.w_f)?;
        let k = EdgeType::COUNT;
        let side = |a: &Tensor| -> Result<Tensor> {
            let mass = a.pair_type_mass(Rc::clone(&g.pair_types), k)?;
            a.matmul(&hv)?.add(&mass.matmul(&ef)?)
        };
        self.fuse_dynamic.forward(&side(a_in)?, &side(a_out)?)
    }

    /// `GRU(h_prev, Fuse(h_sta, h_dyn))`.
    pub fn hybrid_step(&self, h: &Tensor, h_sta: &Tensor, h_dyn: &Tensor) -> Result<Tensor> {
        let x = self.fuse_hybrid.forward(h_sta, h_dyn)?;
        self.gru.step(&x, h)
    }

    /// One message-passing hop with the ablation switches applied.
    pub fn hop(&self, h: &Tensor, g: &GraphInput) -> Result<Tensor> {
        let h_sta =
            if self.ablation.no_static { Tensor::zeros(h.rows(), h.cols()) } else { self.static_message_pass(h, g)? };
        let h_dyn = if self.ablation.no_dynamic {
            Tensor::zeros(h.rows(), h.cols())
        } else {
            let (a_in, a_out) = Self::split_normalize(&self.dynamic_attention(h, g)?)?;
            self.dynamic_message_pass(&a_in, &a_out, h, g)?
        };
        self.hybrid_step(h, &h_sta, &h_dyn)
    }

    pub fn encode(
        &self,
        g: &GraphInput,
        retrieved: Option<RetrievedInput>,
        summary_embed: &Tensor,
        drop: &mut Dropout,
    ) -> Result<EncodedFunction> {
        let h = self.init_nodes(g, drop)?;
        let retrieved = retrieved.filter(|_| !self.ablation.no_augment);
        let (a_aug, comp, summary, z) = match retrieved {
            Some(r) => {
                if !(0.0..=1.0).contains(&r.z) {
                    return Err(Error::Contract(format!("similarity {} outside [0, 1]", r.z)));
                }
                let h2 = self.init_nodes(r.graph, drop)?;
                let a_aug = self.complementary_attention(&h, &h2)?;
                let injected = Self::inject_retrieved(&a_aug, &h2, r.z)?;
                let comp = self.merge_comp(&h, Some(&injected))?;
                let summary = self.encode_retrieved_summary(r.summary, r.z, summary_embed, drop)?;
                (Some(a_aug), comp, summary, r.z)
            }
            None => (None, self.merge_comp(&h, None)?, None, 0.0),
        };
        let mut node_reps = comp.clone();
        for _ in 0..self.hops {
            node_reps = self.hop(&node_reps, g)?;
        }
        let graph_rep = node_reps.max_rows()?;
        if node_reps.data().iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite node representation".into()));
        }
        let (summary_states, summary_final) = match summary {
            Some((s, f)) => (Some(s), Some(f)),
            None => (None, None),
        };
        Ok(EncodedFunction { h, a_aug, comp, node_reps, graph_rep, summary_states, summary_final, z })
    }
}
