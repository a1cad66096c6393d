//! Indexes a synthetic corpus and shows the nearest neighbour of a few
//! queries under both similarity backends.
//!
//! ```text
//! cargo run --example retrieval
//! ```

use cpgsum::corpus::synthetic;
use cpgsum::retrieval::{Backend, CorpusEntry, RetrievalIndex};
use cpgsum::vocab::summary_tokens;

fn main() -> cpgsum::Result<()> {
    let entries = synthetic(64, 1)
        .iter()
        .map(|r| CorpusEntry::new(r.id, &r.code, summary_tokens(&r.summary)))
        .collect::<cpgsum::Result<Vec<_>>>()?;
    let queries = [
        "int get_timer_value(struct ctx *p){ return p->timer; }",
        "int total(int *v, int n){ int t = 0; int k; for (k = 0; k < n; k++) t += v[k]; return t; }",
    ];
    for backend in [Backend::Cosine, Backend::Edit] {
        let index = RetrievalIndex::build(entries.clone(), backend);
        println!("{backend:?}");
        for q in queries {
            let hit = index.query(&CorpusEntry::new(u64::MAX, q, Vec::new())?, None)?;
            let e = &index.entries[hit.index];
            println!("  z={:.3}  \"{}\"  <- {}", hit.z, e.summary.join(" "), e.code);
        }
    }
    Ok(())
}
