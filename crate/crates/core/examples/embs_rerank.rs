//! Reranking substitutes by similarity to the target in a static
//! embedding space.

use subsense::inject::{embs_rerank, EmbeddingTable};
use subsense::substgen::{SubstituteCandidate, SubstituteSet};

const VECTORS: &str = "4 3
bank 1.0 0.1 0.0
shore 0.9 0.2 0.0
lender 0.7 -0.6 0.1
river 0.8 0.3 0.2
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let table = EmbeddingTable::parse("en", VECTORS, "inline")?;
    let cands = SubstituteSet::from_candidates(
        "bank.1",
        [("lender", -0.3), ("shore", -0.9), ("river", -1.2), ("zzyzx", -0.5)]
            .map(|(w, lp)| SubstituteCandidate { word: w.into(), logprob: lp, n_subwords: 1 }),
        None,
    );
    for t in [0.05, 0.1, 1.0] {
        let out = embs_rerank(&cands, "bank", &table, t, 3)?;
        let words: Vec<_> = out.words().collect();
        println!("temperature {t:>4}: {words:?}");
    }
    Ok(())
}
