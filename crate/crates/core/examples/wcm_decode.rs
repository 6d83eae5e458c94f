//! Word-continuation decoding: one mask, extended until the model starts
//! a new word or the subword budget runs out.

use subsense::gateway::{MockBackend, MockConfig};
use subsense::substgen::{wcm_generate, Template, WcmParams};
use subsense::PredictedToken;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tok = |s: &str, b: bool, lp: f64| PredictedToken::new(s, b, lp);
    let mut cfg = MockConfig::default();
    cfg.insert_masked("This <mask> is cute", vec![tok("capy", true, -0.1), tok("cat", true, -0.9)]);
    cfg.insert_masked("This capy<mask> is cute", vec![tok("bara", false, -0.3), tok("is", true, -2.0)]);
    cfg.insert_masked("This capybara<mask> is cute", vec![tok("is", true, -0.2), tok("s", false, -1.5)]);
    cfg.insert_masked("This cat<mask> is cute", vec![tok("is", true, -0.1)]);
    let gw = MockBackend::new(cfg)?;

    let template = Template::new("This {T} is cute")?;
    for max_subwords in [1, 3] {
        let set = wcm_generate("demo", &template, &WcmParams { k: 10, max_subwords }, &gw)?;
        println!("max_subwords = {max_subwords}");
        for c in &set.candidates {
            println!("  {:10} logprob={:.2} subwords={}", c.word, c.logprob, c.n_subwords);
        }
    }
    Ok(())
}
