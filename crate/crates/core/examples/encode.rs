//! Encodes one function with an untrained model, with and without its
//! retrieved neighbour, and prints the augmentation attention.
//!
//! ```text
//! cargo run --example encode
//! ```

use cpgsum::config::RunConfig;
use cpgsum::corpus::synthetic;
use cpgsum::model::Model;
use cpgsum::nn::Dropout;
use cpgsum::pipeline::{build_vocabs, parse_records, prepare, Retriever};

fn main() -> cpgsum::Result<()> {
    let cfg = RunConfig { d: 8, d_e: 4, d_w: 8, d_t: 4, ..RunConfig::default() };
    let (parsed, _) = parse_records(&synthetic(16, 2));
    let (code_vocab, summary_vocab) = build_vocabs(&parsed, cfg.vocab_cap)?;
    let index = Retriever::build_index(&parsed, &cfg)?;
    let model = Model::new(cfg, code_vocab, summary_vocab)?;
    let retriever = Retriever::new(index, &model)?;

    let query = &parsed[3];
    let sample = prepare(&model, Some(&retriever), query, Some(query.record.id))?;
    let r = sample.retrieved.as_ref().expect("retrieval is on");
    println!("query     {}", query.record.code);
    println!("neighbour {} (z = {:.3})", retriever.index.entries[r.index].code, r.z);

    let enc = model.encode(&sample, &mut Dropout::off())?;
    let (m, d) = enc.node_reps.shape();
    println!("{m} nodes x {d} dims; graph representation {:?}", round(&enc.graph_rep.to_vec()));
    if let Some(a) = &enc.a_aug {
        for (v, row) in a.to_rows().iter().enumerate().take(4) {
            let (best, w) = row.iter().enumerate().fold((0, 0.0), |b, (j, &w)| if w > b.1 { (j, w) } else { b });
            println!("  node {v:>2} attends most to neighbour node {best:>2} ({w:.3})");
        }
    }

    let mut alone = sample.clone();
    alone.retrieved = None;
    let plain = model.encode(&alone, &mut Dropout::off())?;
    println!("without retrieval      {:?}", round(&plain.graph_rep.to_vec()));
    Ok(())
}

fn round(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
