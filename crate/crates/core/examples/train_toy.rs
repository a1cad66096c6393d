//! Overfits a small synthetic corpus and prints the epoch log and a few
//! generated summaries.
//!
//! ```text
//! cargo run --release --example train_toy -- [pairs] [epochs] [target-loss]
//! ```

use cpgsum::config::RunConfig;
use cpgsum::corpus::synthetic;
use cpgsum::pipeline::{evaluate, train, Retriever};

fn main() -> cpgsum::Result<()> {
    let mut args = std::env::args().skip(1);
    let pairs = args.next().and_then(|a| a.parse().ok()).unwrap_or(32);
    let epochs = args.next().and_then(|a| a.parse().ok()).unwrap_or(500);
    let target = args.next().and_then(|a| a.parse().ok()).unwrap_or(0.01);
    let corpus = synthetic(pairs, 7);
    let cfg = RunConfig {
        d: 32,
        d_e: 8,
        d_w: 32,
        d_t: 8,
        dropout: 0.0,
        lr: 5e-3,
        epochs,
        target_loss: Some(target),
        ..RunConfig::default()
    };
    let start = std::time::Instant::now();
    let trained = train(&cfg, &corpus, &[], &mut |event| println!("{event}"))?;
    println!("trained in {:.1}s", start.elapsed().as_secs_f64());

    let retriever = match trained.index {
        Some(index) => Some(Retriever::new(index, &trained.model)?),
        None => None,
    };
    let eval = evaluate(&trained.model, retriever.as_ref(), &corpus, 5, true)?;
    let exact = eval.hypotheses.iter().filter(|h| h.hypothesis == h.reference).count();
    for h in eval.hypotheses.iter().take(5) {
        println!("{:>3}  {:<40} | {}", h.id, h.hypothesis, h.reference);
    }
    println!(
        "exact {exact}/{}  BLEU-4 {:.2}  ROUGE-L {:.2}  METEOR-exact {:.2}",
        corpus.len(),
        eval.report.bleu4,
        eval.report.rouge_l,
        eval.report.meteor
    );
    Ok(())
}
