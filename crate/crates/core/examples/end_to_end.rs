//! Full pipeline on a synthetic dataset: three words, two senses each,
//! ten instances per sense, scored by a scripted mock model.
//!
//! ```text
//! cargo run --example end_to_end [-- <run dir>]
//! ```

use std::path::PathBuf;

use subsense::pipeline::{run_pipeline, BackendSpec, GeneratorKind, Injection, RunConfig};
use subsense::synthetic::sense_fixture;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("subsense-end-to-end"));
    std::fs::create_dir_all(&out)?;

    let fixture = sense_fixture(3, 2, 10, 7);
    let data = out.join("dataset.jsonl");
    let mock = out.join("mock.json");
    fixture.dataset.write_jsonl(&data)?;
    std::fs::write(&mock, serde_json::to_string(&fixture.mock)?)?;

    let mut cfg = RunConfig::new(&data, GeneratorKind::Concat, Injection::Sdp, BackendSpec::Mock { config: mock });
    cfg.workers = 4;
    std::fs::write(out.join("config.json"), serde_json::to_string_pretty(&cfg)?)?;

    let report = run_pipeline(&cfg, &out.join("run"))?;
    print!("{}", report.to_table());
    for (word, sel) in &report.selection {
        println!("{word}: selected {} clusters for {} gold senses", sel.selected_c, sel.gold_senses);
    }
    println!("artifacts in {}", out.join("run").display());
    Ok(())
}
