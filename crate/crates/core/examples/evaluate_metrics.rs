//! Clustering metrics against gold senses, per word and aggregated.

use std::collections::BTreeMap;

use subsense::metrics::{aggregate, ari, paired_fscore, v_measure, v_measure_parts, WordScores};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let gold = ["a", "a", "a", "b", "b", "c"];
    let pred = [0, 0, 1, 1, 1, 2];
    println!("ARI           {:.6}", ari(&gold, &pred)?);
    let parts = v_measure_parts(&gold, &pred)?;
    println!("homogeneity   {:.6}", parts.homogeneity);
    println!("completeness  {:.6}", parts.completeness);
    println!("V-measure     {:.6}", v_measure(&gold, &pred)?);
    println!("paired F      {:.6}", paired_fscore(&gold, &pred)?);

    let words = [("bank", 30, 0.4), ("bass", 10, 0.8)].map(|(w, n, a)| WordScores {
        word: w.into(),
        instances: n,
        scores: BTreeMap::from([("ari".to_string(), a)]),
    });
    print!("{}", aggregate(&words)?.to_table());
    Ok(())
}
