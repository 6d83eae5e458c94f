//! Deterministic toy datasets with a matching mock backend.
//!
//! Every instance of sense `s` gets substitutes drawn from a sense-specific
//! vocabulary plus a few words shared by all senses, so a correct pipeline
//! recovers the gold partition exactly. Used by the examples and tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dataset::{Dataset, Instance};
use crate::gateway::{MockConfig, PredictedToken, MASK};
use crate::inject::{instantiate_pattern, PatternCatalog, PatternSide};
use crate::substgen::Template;

pub struct SenseFixture {
    pub dataset: Dataset,
    pub mock: MockConfig,
}

const WORDS: [&str; 8] = ["bank", "bass", "crane", "mouse", "pitch", "spring", "seal", "match"];

/// `words` words with `senses` senses each and `per_sense` instances per
/// sense. Mock entries cover the plain context and both sides of every
/// English pattern for one mask; other queries return nothing.
pub fn sense_fixture(words: usize, senses: usize, per_sense: usize, seed: u64) -> SenseFixture {
    assert!(words <= WORDS.len(), "at most {} words", WORDS.len());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let catalog = PatternCatalog::english();
    let mut instances = Vec::new();
    let mut mock = MockConfig::default();
    for &word in &WORDS[..words] {
        for s in 0..senses {
            let vocab: Vec<String> = (0..8).map(|j| format!("{word}{s}x{j}")).collect();
            for i in 0..per_sense {
                let before = format!("Sentence {i} about topic {s} has the ");
                let after = format!(" in it for reason {}.", rng.gen_range(0..1000));
                let start = before.chars().count();
                let inst = Instance {
                    instance_id: format!("{word}.{s}.{i}"),
                    target_lemma: word.to_string(),
                    language: "en".into(),
                    context: format!("{before}{word}{after}"),
                    target_span: (start, start + word.chars().count()),
                    gold_sense: Some(format!("{word}%{s}")),
                };
                let mut picked: Vec<&String> = vocab.choose_multiple(&mut rng, 5).collect();
                picked.shuffle(&mut rng);
                let mut tokens: Vec<PredictedToken> = picked
                    .into_iter()
                    .enumerate()
                    .map(|(r, w)| PredictedToken::new(w.clone(), true, -0.5 - r as f64 * 0.25))
                    .collect();
                for (r, w) in ["thing", "one"].iter().enumerate() {
                    tokens.push(PredictedToken::new(*w, true, -3.0 - r as f64 * 0.5));
                }
                let mut templates = vec![Template::from_instance(&inst).expect("valid fixture")];
                for name in catalog.names() {
                    let p = catalog.get(name, "en").expect("catalog pattern");
                    for side in [PatternSide::TargetFirst, PatternSide::MaskFirst] {
                        templates.push(instantiate_pattern(p, &inst, side).expect("valid pattern"));
                    }
                }
                for t in templates {
                    mock.insert_masked(t.fill(MASK), tokens.clone());
                }
                instances.push(inst);
            }
        }
    }
    SenseFixture {
        dataset: Dataset::new("synthetic", instances).expect("valid fixture"),
        mock,
    }
}
