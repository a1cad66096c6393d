//! Trains briefly, writes a checkpoint with its retrieval index, reloads
//! both and summarizes a new function.
//!
//! ```text
//! cargo run --release --example checkpoint
//! ```

use cpgsum::checkpoint;
use cpgsum::config::RunConfig;
use cpgsum::corpus::synthetic;
use cpgsum::pipeline::{summarize, train, Retriever};
use cpgsum::retrieval::RetrievalIndex;

fn main() -> cpgsum::Result<()> {
    let cfg = RunConfig { d: 16, d_e: 4, d_w: 16, d_t: 4, dropout: 0.0, lr: 5e-3, epochs: 60, ..RunConfig::default() };
    let trained = train(&cfg, &synthetic(16, 4), &[], &mut |_| {})?;
    println!("final loss {:.4}", trained.report.losses.last().unwrap());

    let dir = std::env::temp_dir().join(format!("cpgsum-example-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    checkpoint::save(&trained.model, trained.report.best_epoch, &path)?;
    if let Some(index) = &trained.index {
        index.save(&checkpoint::index_path(&path))?;
    }
    println!("wrote {} ({} bytes)", path.display(), std::fs::metadata(&path)?.len());

    let (model, epoch) = checkpoint::load(&path)?;
    let retriever = Retriever::new(RetrievalIndex::load(&checkpoint::index_path(&path))?, &model)?;
    println!("reloaded epoch {epoch}, {} parameters", model.params.num_scalars());
    let code = "void reset_device(struct ctx *p){ p->device = 0; p->flags = 0; }";
    let out = summarize(&model, Some(&retriever), code, 5, false)?;
    println!("{code}\n  -> {}", out.summary);
    if let Some(r) = out.retrieval {
        println!("  neighbour \"{}\" (z = {:.3})", r.summary, r.z);
    }
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
