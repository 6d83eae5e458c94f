//! Multi-subword substitutes from consecutive masks.
//!
//! With two masks the first mask's top-k seeds the paths; the second is
//! filled greedily after re-querying with the first subword in place.

use subsense::gateway::{MockBackend, MockConfig};
use subsense::substgen::{concat_generate, ConcatParams, Template};
use subsense::PredictedToken;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tok = |s: &str, b: bool, lp: f64| PredictedToken::new(s, b, lp);
    let mut cfg = MockConfig::default();
    cfg.insert_masked("This <mask> is cute", vec![tok("cat", true, -0.7), tok("dog", true, -1.2)]);
    cfg.insert_per_mask(
        "This <mask><mask> is cute",
        vec![
            vec![tok("capy", true, -0.1), tok("kit", true, -1.0)],
            vec![tok("bara", false, -0.3)],
        ],
    );
    cfg.insert_masked("This capy<mask> is cute", vec![tok("bara", false, -0.3)]);
    cfg.insert_masked("This kit<mask> is cute", vec![tok("ten", false, -0.2)]);
    let gw = MockBackend::new(cfg)?;

    let template = Template::new("This {T} is cute")?;
    let set = concat_generate("demo", &template, &ConcatParams::new(10, [1, 2]), &gw)?;
    for c in &set.candidates {
        println!("{:10} logprob={:.2} subwords={}", c.word, c.logprob, c.n_subwords);
    }
    Ok(())
}
