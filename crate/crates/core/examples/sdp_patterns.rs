//! Symmetric dynamic patterns: substitutes from both sides of "or even",
//! combined by probability product.

use subsense::gateway::{MockBackend, MockConfig, MASK};
use subsense::inject::{instantiate_pattern, sdp_combine, PatternCatalog, PatternSide};
use subsense::substgen::{concat_generate, ConcatParams};
use subsense::{Instance, PredictedToken};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let inst = Instance {
        instance_id: "cat.1".into(),
        target_lemma: "cat".into(),
        language: "en".into(),
        context: "This cat is cute".into(),
        target_span: (5, 8),
        gold_sense: None,
    };
    let catalog = PatternCatalog::english();
    let pattern = catalog.get("or even", "en")?;
    let a = instantiate_pattern(pattern, &inst, PatternSide::TargetFirst)?;
    let b = instantiate_pattern(pattern, &inst, PatternSide::MaskFirst)?;
    println!("target first: {}", a.fill(MASK));
    println!("mask first:   {}", b.fill(MASK));

    let tok = |s: &str, lp: f64| PredictedToken::new(s, true, lp);
    let mut cfg = MockConfig::default();
    cfg.insert_masked(a.fill(MASK), vec![tok("dog", -0.5), tok("kitten", -1.0), tok("lion", -2.0)]);
    cfg.insert_masked(b.fill(MASK), vec![tok("kitten", -0.4), tok("dog", -1.5), tok("mouse", -1.8)]);
    let gw = MockBackend::new(cfg)?;

    let params = ConcatParams::new(5, [1]);
    let sa = concat_generate("cat.1", &a, &params, &gw)?;
    let sb = concat_generate("cat.1", &b, &params, &gw)?;
    let combined = sdp_combine(&sa, &sb, 1e-5, 5);
    for c in &combined.candidates {
        println!("{:8} {:.3}", c.word, c.logprob);
    }
    Ok(())
}
