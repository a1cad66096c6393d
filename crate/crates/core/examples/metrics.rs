//! Scores hypothesis/reference pairs with BLEU-4, ROUGE-L and METEOR.
//!
//! ```text
//! cargo run --example metrics -- "returns the size" "return the buffer size"
//! ```

use cpgsum::metrics::EvalReport;
use cpgsum::vocab::summary_tokens;

fn main() -> cpgsum::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let pairs: Vec<(String, String)> = if args.len() >= 2 {
        args.chunks(2).filter(|c| c.len() == 2).map(|c| (c[0].clone(), c[1].clone())).collect()
    } else {
        vec![
            ("the cat sat".into(), "the cat sat down".into()),
            ("get the value".into(), "return the value".into()),
            ("returns the number of bytes".into(), "return number of bytes read".into()),
        ]
    };
    let hyps: Vec<Vec<String>> = pairs.iter().map(|p| summary_tokens(&p.0)).collect();
    let refs: Vec<Vec<String>> = pairs.iter().map(|p| summary_tokens(&p.1)).collect();
    let ids: Vec<u64> = (0..pairs.len() as u64).collect();
    let report = EvalReport::compute(&ids, &hyps, &refs)?;
    for (s, (h, r)) in report.samples.iter().zip(&pairs) {
        println!("{h:<32} | {r:<32} BLEU {:.3} ROUGE {:.3} METEOR {:.3}", s.bleu4, s.rouge_l, s.meteor);
    }
    println!("corpus: BLEU-4 {:.2}  ROUGE-L {:.2}  METEOR {:.2}", report.bleu4, report.rouge_l, report.meteor);
    Ok(())
}
