mod common;

use rand::Rng;

use common::{
    bits, code_vocab, five_node_graph, grad_error, kit, lower, permuted, rand_const, rand_values, random_graph,
    shuffled, small_config, toy_vocab,
};
use cpgsum::config::RunConfig;
use cpgsum::cpg::{CodeGraph, Edge, EdgeType, GraphNode};
use cpgsum::decoder::Decoder;
use cpgsum::encoder::{Encoder, GraphInput, RetrievedInput};
use cpgsum::frontend::NodeType;
use cpgsum::nn::{BiLstm, Dropout, Fuse};
use cpgsum::pipeline::graph_of;
use cpgsum::rng::seeded;
use cpgsum::tensor::{ModelParams, Tensor};

const EXAMPLE: &str = "void f(int a){ if (a % 2 == 0) { int b = a++; call(b); } }";

fn hand_config() -> RunConfig {
    RunConfig { d: 2, d_e: 2, d_w: 2, d_t: 2, dropout: 0.0, ..RunConfig::default() }
}

fn encoder(cfg: &RunConfig, vocab: usize, seed: u64) -> (ModelParams, Encoder, Tensor) {
    let mut params = ModelParams::new();
    let mut rng = seeded(seed);
    let enc = Encoder::new(&mut params, cfg, vocab, &mut rng).unwrap();
    let embed = params.matrix("summary", 12, cfg.d_w, &mut rng).unwrap();
    (params, enc, embed)
}

fn set(t: &Tensor, values: &[f64]) {
    t.data_mut().copy_from_slice(values);
}

fn zero(t: &Tensor) {
    t.data_mut().fill(0.0);
}

fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
}

fn tiny_graph(m: usize, edges: &[(usize, usize, EdgeType)]) -> CodeGraph {
    CodeGraph {
        nodes: (0..m).map(|id| GraphNode { id, node_type: NodeType::Identifier, subseq: vec!["x".into()] }).collect(),
        edges: edges.iter().map(|&(src, dst, edge_type)| Edge { src, dst, edge_type }).collect(),
        entry_id: 0,
        exit_id: m - 1,
    }
}

fn row_sums(t: &Tensor) -> Vec<f64> {
    t.to_rows().iter().map(|r| r.iter().sum()).collect()
}

/// Row vector times matrix in plain f64.
fn vecmat(x: &[f64], w: &Tensor) -> Vec<f64> {
    let (r, c) = w.shape();
    assert_eq!(x.len(), r);
    let w = w.to_vec();
    (0..c).map(|j| (0..r).map(|i| x[i] * w[i * c + j]).sum()).collect()
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn fuse_oracle(f: &Fuse, a: &[f64], b: &[f64]) -> Vec<f64> {
    let feats: Vec<f64> = a
        .iter()
        .chain(b)
        .copied()
        .chain(a.iter().zip(b).map(|(x, y)| x * y))
        .chain(a.iter().zip(b).map(|(x, y)| x - y))
        .collect();
    let pre = vecmat(&feats, &f.w_z);
    let bias = f.b_z.to_vec();
    (0..a.len())
        .map(|j| {
            let z = sigmoid(pre[j] + bias[j]);
            z * a[j] + (1.0 - z) * b[j]
        })
        .collect()
}

#[test]
fn bilstm_examples() {
    let mut params = ModelParams::new();
    let mut rng = seeded(1);
    let lstm = BiLstm::new(&mut params, "t", 3, 4, &mut rng).unwrap();
    let table = rand_const(&mut rng, 6, 3);
    let mut embed = |ids: &[usize]| table.gather_rows(ids);

    let out = lstm.run(&[vec![2]], &mut embed).unwrap();
    assert_eq!(out.states(0).unwrap().to_vec(), out.finals.to_vec());

    // Backward cell with the forward weights: reversing the input reverses
    // the states with the two halves swapped.
    set(&lstm.bwd.w_x, &lstm.fwd.w_x.to_vec());
    set(&lstm.bwd.w_h, &lstm.fwd.w_h.to_vec());
    set(&lstm.bwd.b, &lstm.fwd.b.to_vec());
    let seq = vec![1, 4, 0, 5];
    let rev: Vec<usize> = seq.iter().rev().copied().collect();
    let out = lstm.run(&[seq, rev], &mut embed).unwrap();
    let (s, r) = (out.states(0).unwrap().to_rows(), out.states(1).unwrap().to_rows());
    for t in 0..4 {
        let swapped: Vec<f64> = s[3 - t][2..].iter().chain(&s[3 - t][..2]).copied().collect();
        assert!(close(&r[t], &swapped, 1e-12));
    }

    // Zero weights: i = f = o = 1/2, g = 0, so c and h stay at zero.
    for (_, t) in params.iter() {
        zero(t);
    }
    let out = lstm.run(&[vec![1, 2, 3]], &mut embed).unwrap();
    assert!(out.finals.to_vec().iter().all(|&x| x == 0.0));
}

#[test]
fn complementary_attention_examples() {
    let cfg = small_config();
    let (_, enc, _) = encoder(&cfg, 10, 2);
    let mut rng = seeded(3);
    let hc = rand_const(&mut rng, 4, 6);
    let a = enc.complementary_attention(&hc, &rand_const(&mut rng, 1, 6)).unwrap();
    assert_eq!(a.to_vec(), vec![1.0; 4]);

    zero(&enc.w_aug);
    let a = enc.complementary_attention(&hc, &rand_const(&mut rng, 3, 6)).unwrap();
    assert!(a.to_vec().iter().all(|&x| (x - 1.0 / 3.0).abs() < 1e-15));

    // W = I: scores are the Gram matrix [[1, 1], [0, 1]].
    let (_, enc, _) = encoder(&hand_config(), 10, 2);
    set(&enc.w_aug, &[1.0, 0.0, 0.0, 1.0]);
    let hc = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let hc2 = Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 1.0]]).unwrap();
    let a = enc.complementary_attention(&hc, &hc2).unwrap();
    let e = 1f64.exp();
    assert!(close(&a.to_vec(), &[0.5, 0.5, 1.0 / (1.0 + e), e / (1.0 + e)], 1e-15));
}

#[test]
fn inject_examples() {
    let mut rng = seeded(4);
    let hc2 = rand_const(&mut rng, 3, 5);
    let a = rand_const(&mut rng, 4, 3).softmax_rows().unwrap();
    assert!(Encoder::inject_retrieved(&a, &hc2, 0.0).unwrap().to_vec().iter().all(|&x| x == 0.0));

    let one_hot = Tensor::from_rows(&[vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]]).unwrap();
    let got = Encoder::inject_retrieved(&one_hot, &hc2, 1.0).unwrap();
    assert_eq!(got.to_vec(), hc2.gather_rows(&[2, 0]).unwrap().to_vec());

    let full = Encoder::inject_retrieved(&a, &hc2, 1.0).unwrap();
    let cols = hc2.t().to_rows();
    for _ in 0..50 {
        let z: f64 = rng.gen_range(0.0..=1.0);
        let out = Encoder::inject_retrieved(&a, &hc2, z).unwrap();
        assert_eq!(bits(&out), bits(&full.scale(z)));
        for row in out.to_rows() {
            for (j, &x) in row.iter().enumerate() {
                let lo = cols[j].iter().copied().fold(f64::INFINITY, f64::min);
                let hi = cols[j].iter().copied().fold(f64::NEG_INFINITY, f64::max);
                assert!(x >= z * lo - 1e-12 && x <= z * hi + 1e-12);
            }
        }
    }
}

#[test]
fn merge_comp_examples() {
    let cfg = small_config();
    let (_, enc, _) = encoder(&cfg, 10, 5);
    let mut rng = seeded(5);
    let (x, y) = (rand_const(&mut rng, 4, 6), rand_const(&mut rng, 4, 6));
    let base = enc.merge_comp(&x, None).unwrap();
    assert_eq!(base.to_vec(), x.matmul(&enc.w_c).unwrap().to_vec());
    let with_zero = enc.merge_comp(&x, Some(&Tensor::zeros(4, 6))).unwrap();
    assert_eq!(with_zero.to_vec(), base.to_vec());

    let a = 0.37;
    let scaled = enc.merge_comp(&x.scale(a), Some(&y.scale(a))).unwrap();
    let merged = enc.merge_comp(&x, Some(&y)).unwrap().scale(a);
    assert!(close(&scaled.to_vec(), &merged.to_vec(), 1e-12));

    set(&enc.w_c, &Tensor::eye(6).to_vec());
    set(&enc.w_c2, &Tensor::eye(6).to_vec());
    let sum = enc.merge_comp(&x, Some(&y)).unwrap();
    assert_eq!(sum.to_vec(), x.add(&y).unwrap().to_vec());
}

#[test]
fn retrieved_summary_examples() {
    let cfg = small_config();
    let (_, enc, embed) = encoder(&cfg, 10, 6);
    let off = &mut Dropout::off();
    let (zeroed, fin) = enc.encode_retrieved_summary(&[4, 5, 6], 0.0, &embed, off).unwrap().unwrap();
    assert!(zeroed.to_vec().iter().chain(fin.to_vec().iter()).all(|&x| x == 0.0));
    let (single, _) = enc.encode_retrieved_summary(&[7], 1.0, &embed, off).unwrap().unwrap();
    assert_eq!(single.shape(), (1, 6));
    let (one, _) = enc.encode_retrieved_summary(&[4, 5, 6], 1.0, &embed, off).unwrap().unwrap();
    let (half, _) = enc.encode_retrieved_summary(&[4, 5, 6], 0.5, &embed, off).unwrap().unwrap();
    assert_eq!(bits(&half), bits(&one.scale(0.5)));
    assert!(enc.encode_retrieved_summary(&[], 1.0, &embed, off).unwrap().is_none());
}

#[test]
fn dynamic_attention_examples() {
    let cfg = small_config();
    let vocab = toy_vocab();
    let (_, enc, _) = encoder(&cfg, vocab.len(), 7);
    let g = lower(&five_node_graph(), &vocab);
    let a = enc.dynamic_attention(&Tensor::zeros(5, 6), &g).unwrap();
    assert!(a.to_vec().iter().all(|&x| x == 0.0));

    let mut rng = seeded(7);
    let h = rand_const(&mut rng, 5, 6);
    let bare = lower(&tiny_graph(5, &[]), &vocab);
    let q = h.matmul(&enc.w_q).unwrap().relu().to_rows();
    let k = h.matmul(&enc.w_k).unwrap().relu().to_rows();
    let want: Vec<f64> =
        (0..25).map(|p| q[p / 5].iter().zip(&k[p % 5]).map(|(x, y)| x * y).sum::<f64>() / 6f64.sqrt()).collect();
    assert!(close(&enc.dynamic_attention(&h, &bare).unwrap().to_vec(), &want, 1e-12));

    // Two nodes joined by an AST edge with embedding [0.5, 1]; identity
    // projections. Off-diagonal entries add the edge term.
    let (_, enc, _) = encoder(&hand_config(), vocab.len(), 7);
    for w in [&enc.w_q, &enc.w_k, &enc.w_r] {
        set(w, &[1.0, 0.0, 0.0, 1.0]);
    }
    zero(&enc.e_edgetype);
    enc.e_edgetype.data_mut()[EdgeType::Ast.index() * 2..][..2].copy_from_slice(&[0.5, 1.0]);
    let g = lower(&tiny_graph(2, &[(0, 1, EdgeType::Ast)]), &vocab);
    let h = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, -1.0]]).unwrap();
    let s = 2f64.sqrt();
    let got = enc.dynamic_attention(&h, &g).unwrap();
    assert!(close(&got.to_vec(), &[5.0 / s, 5.5 / s, 4.5 / s, 9.0 / s], 1e-12));
}

#[test]
fn split_normalize_examples() {
    let mut rng = seeded(8);
    let m = rand_const(&mut rng, 4, 4);
    let sym = m.add(&m.t()).unwrap();
    let (a_in, a_out) = Encoder::split_normalize(&sym).unwrap();
    assert_eq!(a_in.to_vec(), a_out.to_vec());

    let a = rand_const(&mut rng, 3, 3);
    let (a_in, a_out) = Encoder::split_normalize(&a).unwrap();
    let oracle = |rows: Vec<Vec<f64>>| -> Vec<f64> {
        rows.iter()
            .flat_map(|r| {
                let z: f64 = r.iter().map(|x| x.exp()).sum();
                r.iter().map(move |x| x.exp() / z).collect::<Vec<_>>()
            })
            .collect()
    };
    assert!(close(&a_in.to_vec(), &oracle(a.to_rows()), 1e-12));
    assert!(close(&a_out.to_vec(), &oracle(a.t().to_rows()), 1e-12));
}

#[test]
fn static_pass_examples() {
    let vocab = toy_vocab();
    let (_, enc, _) = encoder(&hand_config(), vocab.len(), 9);
    let h = Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0], vec![3.0, 1.0]]).unwrap();
    let isolated = lower(&tiny_graph(3, &[]), &vocab);
    assert!(enc.static_message_pass(&h, &isolated).unwrap().to_vec().iter().all(|&x| x == 0.0));

    // Zero gate weights give gate 1/2, so the output is (h_in + h_out) / 2.
    zero(&enc.fuse_static.w_z);
    zero(&enc.fuse_static.b_z);
    zero(&enc.e_edgetype);
    let single = lower(&tiny_graph(3, &[(0, 1, EdgeType::Use)]), &vocab);
    let out = enc.static_message_pass(&h, &single).unwrap().to_rows();
    assert_eq!(out[1], [0.5, 0.0]);
    assert_eq!(out[0], [0.0, 1.0]);

    // Path 0 -> 1 -> 2 of AST edges with edge vector [1, -1].
    set(&enc.w_proj, &[1.0, 0.0, 0.0, 1.0]);
    enc.e_edgetype.data_mut()[EdgeType::Ast.index() * 2..][..2].copy_from_slice(&[1.0, -1.0]);
    let path = lower(&tiny_graph(3, &[(0, 1, EdgeType::Ast), (1, 2, EdgeType::Ast)]), &vocab);
    let out = enc.static_message_pass(&h, &path).unwrap();
    assert!(close(&out.to_vec(), &[0.5, 0.5, 3.0, -0.5, 0.5, 0.5], 1e-15));
}

#[test]
fn fuse_examples() {
    let mut params = ModelParams::new();
    let mut rng = seeded(10);
    let fuse = Fuse::new(&mut params, "f", 5, &mut rng).unwrap();
    let a = rand_const(&mut rng, 3, 5);
    assert_eq!(fuse.forward(&a, &a).unwrap().to_vec(), a.to_vec());
    let b = rand_const(&mut rng, 3, 5);
    let got = fuse.forward(&a, &b).unwrap().to_vec();
    let oracle: Vec<f64> = a.to_rows().iter().zip(b.to_rows()).flat_map(|(x, y)| fuse_oracle(&fuse, x, &y)).collect();
    assert!(close(&got, &oracle, 1e-12));

    for _ in 0..2000 {
        set(&fuse.w_z, &rand_values(&mut rng, 20 * 5).iter().map(|x| 4.0 * x).collect::<Vec<_>>());
        let scale: f64 = 10f64.powi(rng.gen_range(-3..4));
        let a = Tensor::row(&rand_values(&mut rng, 5).iter().map(|x| x * scale).collect::<Vec<_>>());
        let b = Tensor::row(&rand_values(&mut rng, 5).iter().map(|x| x * scale).collect::<Vec<_>>());
        let out = fuse.forward(&a, &b).unwrap().to_vec();
        for ((o, x), y) in out.iter().zip(a.to_vec()).zip(b.to_vec()) {
            assert!(*o >= x.min(y) && *o <= x.max(y));
        }
    }

    zero(&fuse.w_z);
    zero(&fuse.b_z);
    let got = fuse.forward(&a, &b).unwrap().to_vec();
    let mean: Vec<f64> = a.to_vec().iter().zip(b.to_vec()).map(|(x, y)| (x + y) / 2.0).collect();
    assert!(close(&got, &mean, 1e-15));
}

#[test]
fn dynamic_pass_examples() {
    let vocab = toy_vocab();
    let cfg = small_config();
    let (_, enc, _) = encoder(&cfg, vocab.len(), 11);
    let mut rng = seeded(11);

    let one = lower(&tiny_graph(1, &[]), &vocab);
    let h = rand_const(&mut rng, 1, 6);
    let a = Tensor::from_rows(&[vec![1.0]]).unwrap();
    let got = enc.dynamic_message_pass(&a, &a, &h, &one).unwrap();
    assert_eq!(got.to_vec(), h.matmul(&enc.w_v).unwrap().to_vec());

    let bare = lower(&tiny_graph(4, &[]), &vocab);
    let row = rand_values(&mut rng, 6);
    let same = Tensor::from_rows(&vec![row.clone(); 4]).unwrap();
    let uniform = Tensor::full(4, 4, 0.25);
    let got = enc.dynamic_message_pass(&uniform, &uniform, &same, &bare).unwrap();
    let want = vecmat(&row, &enc.w_v);
    for r in got.to_rows() {
        assert!(close(&r, &want, 1e-12));
    }

    // Two nodes with one AST edge [1, 1]; identity W^V, W^F; gate 1/2.
    let (_, enc, _) = encoder(&hand_config(), vocab.len(), 11);
    set(&enc.w_v, &[1.0, 0.0, 0.0, 1.0]);
    set(&enc.w_f, &[1.0, 0.0, 0.0, 1.0]);
    zero(&enc.e_edgetype);
    enc.e_edgetype.data_mut()[EdgeType::Ast.index() * 2..][..2].copy_from_slice(&[1.0, 1.0]);
    zero(&enc.fuse_dynamic.w_z);
    zero(&enc.fuse_dynamic.b_z);
    let g = lower(&tiny_graph(2, &[(0, 1, EdgeType::Ast)]), &vocab);
    let h = Tensor::from_rows(&[vec![2.0, 0.0], vec![0.0, 4.0]]).unwrap();
    let a_in = Tensor::from_rows(&[vec![0.25, 0.75], vec![0.5, 0.5]]).unwrap();
    let a_out = Tensor::eye(2);
    let got = enc.dynamic_message_pass(&a_in, &a_out, &h, &g).unwrap();
    assert!(close(&got.to_vec(), &[1.625, 1.875, 0.75, 3.25], 1e-15));
}

#[test]
fn hybrid_step_examples() {
    let vocab = toy_vocab();
    let cfg = small_config();
    let (_, enc, _) = encoder(&cfg, vocab.len(), 12);
    let mut rng = seeded(12);
    let one = lower(&tiny_graph(1, &[]), &vocab);
    let h = rand_const(&mut rng, 1, 6);

    // Single hop on one node: static side is Fuse(0, 0) = 0, dynamic side
    // is Fuse(x, x) = x with x = h W^V, then the GRU by hand.
    let x = vecmat(&h.to_vec(), &enc.w_v);
    let input = fuse_oracle(&enc.fuse_hybrid, &[0.0; 6], &x);
    let gru = &enc.gru;
    let (bx, bh) = (gru.b_x.to_vec(), gru.b_h.to_vec());
    let gx: Vec<f64> = vecmat(&input, &gru.w_x).iter().zip(&bx).map(|(a, b)| a + b).collect();
    let gh: Vec<f64> = vecmat(&h.to_vec(), &gru.w_h).iter().zip(&bh).map(|(a, b)| a + b).collect();
    let want: Vec<f64> = (0..6)
        .map(|j| {
            let r = sigmoid(gx[j] + gh[j]);
            let u = sigmoid(gx[6 + j] + gh[6 + j]);
            let n = (gx[12 + j] + r * gh[12 + j]).tanh();
            u * h.get(0, j) + (1.0 - u) * n
        })
        .collect();
    assert!(close(&enc.hop(&h, &one).unwrap().to_vec(), &want, 1e-12));

    // Update gate saturated at 1 carries the previous state.
    enc.gru.b_x.data_mut()[6..12].fill(100.0);
    let h = rand_const(&mut rng, 3, 6);
    let out = enc.hybrid_step(&h, &rand_const(&mut rng, 3, 6), &rand_const(&mut rng, 3, 6)).unwrap();
    assert_eq!(out.to_vec(), h.to_vec());
}

#[test]
fn encode_examples() {
    let cfg = small_config();
    let vocab = code_vocab(&[EXAMPLE]);
    let (_, enc, embed) = encoder(&cfg, vocab.len(), 13);
    let graph = graph_of(EXAMPLE).unwrap();
    let g = lower(&graph, &vocab);
    let out = enc.encode(&g, None, &embed, &mut Dropout::off()).unwrap();
    assert_eq!(graph.m(), 24);
    assert_eq!(out.h.shape(), (24, 6));
    assert!(out.a_aug.is_none() && out.summary_states.is_none());
    let reps = out.node_reps.to_rows();
    for j in 0..6 {
        assert!(reps.iter().all(|r| r[j] <= out.graph_rep.get(0, j)));
        assert!(reps.iter().any(|r| r[j] == out.graph_rep.get(0, j)));
    }
    // The two `b` identifiers share type and text.
    let bs: Vec<usize> = graph.nodes.iter().filter(|n| n.subseq == ["b"]).map(|n| n.id).collect();
    let h = out.h.to_rows();
    assert_eq!(h[bs[0]], h[bs[1]]);

    let flat = RunConfig { hops: 0, ..small_config() };
    let (_, enc0, embed0) = encoder(&flat, vocab.len(), 13);
    let out = enc0.encode(&g, None, &embed0, &mut Dropout::off()).unwrap();
    assert_eq!(out.node_reps.to_vec(), out.comp.to_vec());
    assert_eq!(out.graph_rep.to_vec(), out.comp.max_rows().unwrap().to_vec());

    let bad = RetrievedInput { graph: &g, summary: &[4], z: 1.5 };
    assert!(enc.encode(&g, Some(bad), &embed, &mut Dropout::off()).is_err());
}

#[test]
fn attention_rows_are_stochastic() {
    let cfg = small_config();
    let (params, enc, _) = encoder(&cfg, 10, 14);
    let mut prng = seeded(140);
    let dec = Decoder::new(&mut ModelParams::new(), &cfg, 9, &mut prng).unwrap();
    let mut rng = seeded(14);
    for _ in 0..200 {
        for (_, t) in params.iter() {
            let n = t.len();
            set(t, &rand_values(&mut rng, n));
        }
        let (m, m2) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let scale = 10f64.powi(rng.gen_range(-2..3));
        let hc = rand_const(&mut rng, m, 6).scale(scale);
        let a_aug = enc.complementary_attention(&hc, &rand_const(&mut rng, m2, 6).scale(scale)).unwrap();
        let (a_in, a_out) = Encoder::split_normalize(&rand_const(&mut rng, m, m).scale(scale)).unwrap();
        let (_, w) = dec.attention_context(&rand_const(&mut rng, 1, 6), &hc).unwrap();
        for t in [&a_aug, &a_in, &a_out, &w] {
            assert!(row_sums(t).iter().all(|s| (s - 1.0).abs() <= 1e-9));
        }
    }
}

#[test]
fn permuting_node_ids_is_equivariant() {
    let cfg = small_config();
    let mut rng = seeded(15);
    let graphs: Vec<CodeGraph> = (0..10).map(|_| random_graph(&mut rng, 8)).collect();
    let texts: Vec<String> = graphs.iter().map(|g| g.nodes[0].subseq.join(" ")).collect();
    let vocab = code_vocab(&texts.iter().map(String::as_str).collect::<Vec<_>>());
    let (_, enc, embed) = encoder(&cfg, vocab.len(), 15);
    let neighbour = lower(&graphs[0], &vocab);
    for g in &graphs {
        let perm = shuffled(&mut rng, g.m());
        let (a, b) = (lower(g, &vocab), lower(&permuted(g, &perm), &vocab));
        for retrieved in [None, Some(RetrievedInput { graph: &neighbour, summary: &[4, 5], z: 0.6 })] {
            let x = enc.encode(&a, retrieved, &embed, &mut Dropout::off()).unwrap();
            let y = enc.encode(&b, retrieved, &embed, &mut Dropout::off()).unwrap();
            assert!(close(&x.graph_rep.to_vec(), &y.graph_rep.to_vec(), 1e-10));
            let (xr, yr) = (x.node_reps.to_rows(), y.node_reps.to_rows());
            for v in 0..g.m() {
                assert!(close(&xr[v], &yr[perm[v]], 1e-10));
            }
        }
    }
}

/// Encoder states and teacher-forced loss, for bitwise comparison.
fn forward_bits(k: &common::Kit, sample: &cpgsum::model::Prepared) -> (Vec<u64>, Vec<u64>, u64) {
    let enc = k.model.encode(sample, &mut Dropout::off()).unwrap();
    let loss = k.model.loss(sample, 1.0, &mut Dropout::off()).unwrap();
    (bits(&enc.node_reps), bits(&enc.graph_rep), loss.item().to_bits())
}

#[test]
fn ablations_match_zeroed_branches() {
    let mut k = kit(RunConfig { d: 8, d_e: 4, d_w: 8, d_t: 4, dropout: 0.0, ..RunConfig::default() }, 6);
    for sample in &k.samples.clone() {
        assert!(sample.retrieved.as_ref().is_some_and(|r| r.z > 0.0));

        k.model.encoder.ablation.no_static = true;
        let ablated = forward_bits(&k, sample);
        k.model.encoder.ablation.no_static = false;
        let mut silent = sample.clone();
        let (m, t) = (silent.graph.m, EdgeType::COUNT);
        silent.graph = GraphInput {
            c_in: Tensor::zeros(m, m),
            c_out: Tensor::zeros(m, m),
            n_in: Tensor::zeros(m, t),
            n_out: Tensor::zeros(m, t),
            ..silent.graph
        };
        assert_eq!(ablated, forward_bits(&k, &silent));
        assert_ne!(ablated, forward_bits(&k, sample));

        k.model.encoder.ablation.no_dynamic = true;
        let ablated = forward_bits(&k, sample);
        k.model.encoder.ablation.no_dynamic = false;
        let saved = (k.model.encoder.w_v.to_vec(), k.model.encoder.w_f.to_vec());
        zero(&k.model.encoder.w_v);
        zero(&k.model.encoder.w_f);
        assert_eq!(ablated, forward_bits(&k, sample));
        set(&k.model.encoder.w_v, &saved.0);
        set(&k.model.encoder.w_f, &saved.1);
        assert_ne!(ablated, forward_bits(&k, sample));

        k.model.encoder.ablation.no_augment = true;
        let ablated = forward_bits(&k, sample);
        k.model.encoder.ablation.no_augment = false;
        let mut silent = sample.clone();
        let r = silent.retrieved.as_mut().unwrap();
        r.z = 0.0;
        r.summary.clear();
        assert_eq!(ablated, forward_bits(&k, &silent));
        assert_ne!(ablated, forward_bits(&k, sample));
    }
}

#[test]
fn encoder_gradients_match_finite_differences() {
    let cfg = small_config();
    let vocab = toy_vocab();
    let (params, enc, embed) = encoder(&cfg, vocab.len(), 16);
    let g = lower(&five_node_graph(), &vocab);
    let leaves: Vec<Tensor> = params.iter().map(|(_, t)| t.clone()).collect();
    let retrieved = RetrievedInput { graph: &g, summary: &[4, 5], z: 0.7 };
    let err = grad_error(&leaves, 1e-6, || {
        let out = enc.encode(&g, Some(retrieved), &embed, &mut Dropout::off()).unwrap();
        let summary = out.summary_states.unwrap().sum();
        out.graph_rep.sum().add(&summary).unwrap()
    });
    assert!(err < 1e-3, "relative error {err}");
    let err = grad_error(&leaves, 1e-6, || enc.encode(&g, None, &embed, &mut Dropout::off()).unwrap().graph_rep.sum());
    assert!(err < 1e-3, "relative error {err}");
}
