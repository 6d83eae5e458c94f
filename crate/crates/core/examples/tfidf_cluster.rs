//! Lemmatized substitutes to TF-IDF vectors to an average-linkage tree,
//! with the cluster count chosen by Calinski-Harabasz.

use std::collections::BTreeMap;

use subsense::cluster::select_clustering;
use subsense::vectorize::{build_tfidf, LemmaBag};

fn bag(id: &str, words: &[&str]) -> LemmaBag {
    LemmaBag {
        instance_id: id.into(),
        terms: words.iter().map(|w| (w.to_string(), 1.0)).collect::<BTreeMap<_, _>>(),
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let bags = [
        bag("a", &["lender", "branch", "institution"]),
        bag("b", &["lender", "institution", "firm"]),
        bag("c", &["branch", "firm", "lender"]),
        bag("d", &["shore", "riverside", "edge"]),
        bag("e", &["shore", "edge", "slope"]),
        bag("f", &["riverside", "slope", "shore"]),
    ];
    let m = build_tfidf("bank", &bags)?;
    println!("vocabulary: {:?}", m.vocab);
    let sel = select_clustering("bank", &m, 2, 4)?;
    for (c, s) in &sel.ch_scores {
        println!("c={c} CH={s:.4}");
    }
    println!("selected c={} -> {:?}", sel.selected_c, sel.clustering.assignments);
    for mg in &sel.tree.merges {
        println!("merge {} + {} at {:.4} (size {})", mg.left, mg.right, mg.distance, mg.size);
    }
    Ok(())
}
