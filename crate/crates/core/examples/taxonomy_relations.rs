//! Classifying substitutes by their taxonomic relation to the target.

use subsense::analysis::{relation_distribution, TaxonomyGraph};

const TAXONOMY: &str = r#"{"synset":"food.n.01","lemmas":["food"],"hypernyms":[]}
{"synset":"produce.n.01","lemmas":["produce"],"hypernyms":["food.n.01"]}
{"synset":"vegetable.n.01","lemmas":["vegetable","veggie"],"hypernyms":["produce.n.01"]}
{"synset":"fruit.n.01","lemmas":["fruit"],"hypernyms":["produce.n.01"]}
{"synset":"onion.n.01","lemmas":["onion"],"hypernyms":["vegetable.n.01"]}
{"synset":"garlic.n.01","lemmas":["garlic"],"hypernyms":["vegetable.n.01"]}
{"synset":"apple.n.01","lemmas":["apple"],"hypernyms":["fruit.n.01"]}
{"synset":"middle.n.01","lemmas":["middle","center"],"hypernyms":[]}
"#;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tax = TaxonomyGraph::from_jsonl(TAXONOMY)?;
    for (t, s) in [
        ("onion", "vegetable"),
        ("onion", "garlic"),
        ("onion", "food"),
        ("onion", "apple"),
        ("vegetable", "onion"),
        ("middle", "center"),
        ("onion", "tuesday"),
    ] {
        println!("{t:>9} -> {s:<9} {}", tax.classify_relation(t, s, 3).name());
    }
    let pairs: Vec<_> = ["vegetable", "garlic", "apple", "tuesday"]
        .iter()
        .map(|s| ("onion".to_string(), s.to_string(), true))
        .collect();
    println!("{}", serde_json::to_string_pretty(&relation_distribution(&pairs, &tax, 3))?);
    Ok(())
}
